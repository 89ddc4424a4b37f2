//! Brute-force reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's numeric kernels; each oracle
//! re-derives its result from the defining formula with plain loops.

#![allow(dead_code)]

use pave_forge_core::attention::{AsppParams, Bottleneck, SpatialAttentionParams, ASPP_RATES};
use pave_forge_core::boxes::BBox;
use pave_forge_core::metrics::{Detection, GroundTruth};
use pave_forge_core::ops::Padding;
use pave_forge_core::{Image, Kernel2D, Shape, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: Shape) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap()
}

pub fn random_kernel(rng: &mut impl Rng, o: usize, i: usize, kh: usize, kw: usize, bias: bool) -> Kernel2D {
    let w: Vec<f64> = (0..o * i * kh * kw).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = bias.then(|| (0..o).map(|_| rng.gen_range(-1.0..1.0)).collect());
    Kernel2D::new(o, i, kh, kw, w, b).unwrap()
}

pub fn random_gray(rng: &mut impl Rng, h: usize, w: usize) -> Image {
    Image::gray_from_fn(h, w, |_, _| rng.gen_range(0.0..1.0)).unwrap()
}

pub fn random_image(rng: &mut impl Rng, h: usize, w: usize, c: usize) -> Image {
    let data: Vec<f64> = (0..h * w * c).map(|_| rng.gen_range(0.0..1.0)).collect();
    Image::new(h, w, c, data).unwrap()
}

/// Mirror without repeating the edge sample, by folding over a period of `2(n-1)`.
pub fn mirror(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m >= n as i64 { period - m } else { m }) as usize
}

/// Pads one plane explicitly, then slides the dilated kernel over it.
pub fn conv2d_oracle(x: &Tensor, k: &Kernel2D, dilation: usize, stride: usize, padding: Padding) -> Tensor {
    let s = x.shape();
    let (kh, kw) = k.kernel_size();
    let eh = (kh - 1) * dilation + 1;
    let ew = (kw - 1) * dilation + 1;
    let (top, left, bottom, right) = match padding {
        Padding::Valid => (0, 0, 0, 0),
        _ => ((eh - 1) / 2, (ew - 1) / 2, eh - 1 - (eh - 1) / 2, ew - 1 - (ew - 1) / 2),
    };
    let ph = s.h + top + bottom;
    let pw = s.w + left + right;
    let oh = (ph - eh) / stride + 1;
    let ow = (pw - ew) / stride + 1;
    let mut out = vec![0.0; s.n * k.out_channels() * oh * ow];
    for n in 0..s.n {
        let padded: Vec<Vec<f64>> = (0..s.c)
            .map(|c| {
                let mut p = vec![0.0; ph * pw];
                for y in 0..ph {
                    for xx in 0..pw {
                        let sy = y as i64 - top as i64;
                        let sx = xx as i64 - left as i64;
                        let inside = sy >= 0 && sy < s.h as i64 && sx >= 0 && sx < s.w as i64;
                        p[y * pw + xx] = match padding {
                            Padding::Reflect => x.get(n, c, mirror(sy, s.h), mirror(sx, s.w)),
                            _ if inside => x.get(n, c, sy as usize, sx as usize),
                            _ => 0.0,
                        };
                    }
                }
                p
            })
            .collect();
        for o in 0..k.out_channels() {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = k.bias().map_or(0.0, |b| b[o]);
                    for (c, p) in padded.iter().enumerate() {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let py = y * stride + ky * dilation;
                                let px = xx * stride + kx * dilation;
                                acc += p[py * pw + px] * k.weight(o, c, ky, kx);
                            }
                        }
                    }
                    out[((n * k.out_channels() + o) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    Tensor::new(Shape::new(s.n, k.out_channels(), oh, ow), out).unwrap()
}

/// Kernel with `rate - 1` zeros between neighbouring taps.
pub fn zero_stuff(k: &Kernel2D, rate: usize) -> Kernel2D {
    let (kh, kw) = k.kernel_size();
    let (sh, sw) = ((kh - 1) * rate + 1, (kw - 1) * rate + 1);
    let mut w = vec![0.0; k.out_channels() * k.in_channels() * sh * sw];
    for o in 0..k.out_channels() {
        for i in 0..k.in_channels() {
            for y in 0..kh {
                for x in 0..kw {
                    w[((o * k.in_channels() + i) * sh + y * rate) * sw + x * rate] = k.weight(o, i, y, x);
                }
            }
        }
    }
    Kernel2D::new(k.out_channels(), k.in_channels(), sh, sw, w, k.bias().map(<[f64]>::to_vec)).unwrap()
}

/// Half-pixel bilinear sample of every output pixel, written as tent weights.
pub fn bilinear_oracle(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let s = x.shape();
    let tent = |t: f64| (1.0 - t.abs()).max(0.0);
    Tensor::from_fn(Shape::new(s.n, s.c, oh, ow), |n, c, y, xx| {
        let sy = ((y as f64 + 0.5) * s.h as f64 / oh as f64 - 0.5).clamp(0.0, (s.h - 1) as f64);
        let sx = ((xx as f64 + 0.5) * s.w as f64 / ow as f64 - 0.5).clamp(0.0, (s.w - 1) as f64);
        let mut acc = 0.0;
        for iy in 0..s.h {
            for ix in 0..s.w {
                acc += tent(sy - iy as f64) * tent(sx - ix as f64) * x.get(n, c, iy, ix);
            }
        }
        acc
    })
    .unwrap()
}

pub const BINOMIAL: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];

/// Full 5x5 binomial blur (reflect) of one plane, with `gain` applied.
fn blur5x5(p: &[f64], h: usize, w: usize, gain: f64) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (a, ka) in BINOMIAL.iter().enumerate() {
                for (b, kb) in BINOMIAL.iter().enumerate() {
                    let sy = mirror(y as i64 + a as i64 - 2, h);
                    let sx = mirror(x as i64 + b as i64 - 2, w);
                    acc += ka * kb / 256.0 * p[sy * w + sx];
                }
            }
            out[y * w + x] = acc * gain;
        }
    }
    out
}

pub fn pyr_down_oracle(img: &Image) -> Image {
    let (h, w) = (img.height(), img.width());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut data = Vec::new();
    for c in 0..img.channels() {
        let b = blur5x5(img.plane(c), h, w, 1.0);
        for y in 0..oh {
            for x in 0..ow {
                data.push(b[2 * y * w + 2 * x]);
            }
        }
    }
    Image::new(oh, ow, img.channels(), data).unwrap()
}

/// Unclamped per-channel planes of the 4x-gain upsampling.
pub fn pyr_up_planes(img: &Image, th: usize, tw: usize) -> Vec<Vec<f64>> {
    (0..img.channels())
        .map(|c| {
            let mut z = vec![0.0; th * tw];
            for y in 0..img.height() {
                for x in 0..img.width() {
                    z[2 * y * tw + 2 * x] = img.get(c, y, x);
                }
            }
            blur5x5(&z, th, tw, 4.0)
        })
        .collect()
}

/// Gaussian levels of a plane, then Laplacian details, as raw vectors.
pub struct PlanePyramid {
    pub dims: Vec<(usize, usize)>,
    pub gauss: Vec<Vec<f64>>,
    pub details: Vec<Vec<f64>>,
}

fn plane_image(p: &[f64], h: usize, w: usize) -> Image {
    Image::new(h, w, 1, p.to_vec()).unwrap()
}

pub fn plane_pyramid(p: &[f64], h: usize, w: usize, levels: usize) -> PlanePyramid {
    let mut dims = vec![(h, w)];
    let mut gauss = vec![p.to_vec()];
    for _ in 1..levels {
        let (ch, cw) = *dims.last().unwrap();
        let next = pyr_down_oracle(&plane_image(gauss.last().unwrap(), ch, cw));
        dims.push((next.height(), next.width()));
        gauss.push(next.plane(0).to_vec());
    }
    let details = (0..levels - 1)
        .map(|i| {
            let (ch, cw) = dims[i];
            let (nh, nw) = dims[i + 1];
            let up = &pyr_up_planes(&plane_image(&gauss[i + 1], nh, nw), ch, cw)[0];
            gauss[i].iter().zip(up).map(|(g, u)| g - u).collect()
        })
        .collect();
    PlanePyramid { dims, gauss, details }
}

/// Multiband blend of two single-channel images, collapsed but not clamped.
pub fn blend_oracle(a: &[f64], b: &[f64], wa: &[f64], h: usize, w: usize, levels: usize) -> Vec<f64> {
    let pa = plane_pyramid(a, h, w, levels);
    let pb = plane_pyramid(b, h, w, levels);
    let pw = plane_pyramid(wa, h, w, levels);
    let mix = |x: &[f64], y: &[f64], k: &[f64]| -> Vec<f64> {
        x.iter().zip(y).zip(k).map(|((x, y), k)| k * x + (1.0 - k) * y).collect()
    };
    let top = levels - 1;
    let mut acc = mix(&pa.gauss[top], &pb.gauss[top], &pw.gauss[top]);
    for i in (0..top).rev() {
        let (nh, nw) = pa.dims[i + 1];
        let (ch, cw) = pa.dims[i];
        let up = &pyr_up_planes(&plane_image(&acc, nh, nw), ch, cw)[0];
        let d = mix(&pa.details[i], &pb.details[i], &pw.gauss[i]);
        acc = up.iter().zip(&d).map(|(u, d)| u + d).collect();
    }
    acc
}

/// Reference box-loss terms; `alpha` can be pinned so finite differences
/// see it as a constant.
pub fn iou_ref(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    inter / (area(a) + area(b) - inter)
}

fn center_term(p: [f64; 4], g: [f64; 4]) -> f64 {
    let dx = (p[0] + p[2]) / 2.0 - (g[0] + g[2]) / 2.0;
    let dy = (p[1] + p[3]) / 2.0 - (g[1] + g[3]) / 2.0;
    let cw = p[2].max(g[2]) - p[0].min(g[0]);
    let ch = p[3].max(g[3]) - p[1].min(g[1]);
    (dx * dx + dy * dy) / (cw * cw + ch * ch)
}

pub fn v_ref(p: [f64; 4], g: [f64; 4]) -> f64 {
    let d = ((g[2] - g[0]) / (g[3] - g[1])).atan() - ((p[2] - p[0]) / (p[3] - p[1])).atan();
    4.0 / (std::f64::consts::PI * std::f64::consts::PI) * d * d
}

pub fn alpha_ref(p: [f64; 4], g: [f64; 4]) -> f64 {
    let v = v_ref(p, g);
    let denom = 1.0 - iou_ref(p, g) + v;
    if denom > 0.0 {
        v / denom
    } else {
        0.0
    }
}

pub fn ciou_ref(p: [f64; 4], g: [f64; 4], alpha: f64) -> f64 {
    1.0 - iou_ref(p, g) + center_term(p, g) + alpha * v_ref(p, g)
}

pub fn eiou_ref(p: [f64; 4], g: [f64; 4]) -> f64 {
    let cw = p[2].max(g[2]) - p[0].min(g[0]);
    let ch = p[3].max(g[3]) - p[1].min(g[1]);
    let dw = (p[2] - p[0]) - (g[2] - g[0]);
    let dh = (p[3] - p[1]) - (g[3] - g[1]);
    1.0 - iou_ref(p, g) + center_term(p, g) + dw * dw / (cw * cw) + dh * dh / (ch * ch)
}

pub fn central_difference(f: impl Fn([f64; 4]) -> f64, at: [f64; 4], step: f64) -> [f64; 4] {
    let mut g = [0.0; 4];
    for i in 0..4 {
        let mut hi = at;
        let mut lo = at;
        hi[i] += step;
        lo[i] -= step;
        g[i] = (f(hi) - f(lo)) / (2.0 * step);
    }
    g
}

/// `max|a - f| / max(max|a|, max|f|)`, or 0 when both vanish.
pub fn relative_error(analytic: [f64; 4], numeric: [f64; 4]) -> f64 {
    let inf = |v: [f64; 4]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = inf(analytic).max(inf(numeric));
    let diff = (0..4).fold(0.0f64, |m, i| m.max((analytic[i] - numeric[i]).abs()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Random prediction/target pair away from every kink of the losses: all
/// same-axis coordinate pairs differ by more than `margin`.
pub fn random_box_pair(rng: &mut impl Rng, margin: f64) -> (BBox, BBox) {
    loop {
        let mut draw = || -> [f64; 4] {
            let x = rng.gen_range(0.0..10.0);
            let y = rng.gen_range(0.0..10.0);
            [x, y, x + rng.gen_range(0.5..6.0), y + rng.gen_range(0.5..6.0)]
        };
        let p = draw();
        let g = draw();
        let clear = [(0, 0), (0, 2), (2, 0), (2, 2), (1, 1), (1, 3), (3, 1), (3, 3)]
            .iter()
            .all(|&(i, j)| (p[i] - g[j]).abs() > margin);
        if clear {
            return (BBox::new(p[0], p[1], p[2], p[3]).unwrap(), BBox::new(g[0], g[1], g[2], g[3]).unwrap());
        }
    }
}

/// AP by re-running greedy matching on every confidence prefix.
///
/// For each cutoff k the top-k detections (stable by confidence) are matched
/// from scratch; AP is `sum_k (R_k - R_{k-1}) * max_{j >= k} P_j`.
pub fn ap_exhaustive(dets: &[Detection], gts: &[GroundTruth], class_id: u32, thr: f64) -> Option<f64> {
    let gts: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == class_id).collect();
    if gts.is_empty() {
        return None;
    }
    let mut ranked: Vec<&Detection> = dets.iter().filter(|d| d.class_id == class_id).collect();
    // insertion sort: stable, descending confidence
    for i in 1..ranked.len() {
        let mut j = i;
        while j > 0 && ranked[j - 1].confidence < ranked[j].confidence {
            ranked.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut pr = Vec::new();
    for k in 1..=ranked.len() {
        let mut used = vec![false; gts.len()];
        let mut tp = 0;
        for d in &ranked[..k] {
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if used[gi] || g.image_id != d.image_id {
                    continue;
                }
                let o = iou_ref(d.bbox.corners(), g.bbox.corners());
                if o >= thr && best.is_none_or(|(_, b)| o > b) {
                    best = Some((gi, o));
                }
            }
            if let Some((gi, _)) = best {
                used[gi] = true;
                tp += 1;
            }
        }
        pr.push((tp as f64 / k as f64, tp as f64 / gts.len() as f64));
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for k in 0..pr.len() {
        let envelope = pr[k..].iter().map(|&(p, _)| p).fold(0.0, f64::max);
        ap += (pr[k].1 - prev_r) * envelope;
        prev_r = pr[k].1;
    }
    Some(ap)
}

/// Small random detection problem over `images` images and 3 classes.
pub fn random_detection_instance(rng: &mut impl Rng, images: usize) -> (Vec<Detection>, Vec<GroundTruth>) {
    let n_gt = rng.gen_range(1..=5);
    let n_det = rng.gen_range(1..=10);
    let mut gts = Vec::new();
    for _ in 0..n_gt {
        let img = format!("img{}", rng.gen_range(0..images));
        let x = rng.gen_range(0.0..20.0);
        let y = rng.gen_range(0.0..20.0);
        let b = BBox::new(x, y, x + rng.gen_range(2.0..8.0), y + rng.gen_range(2.0..8.0)).unwrap();
        gts.push(GroundTruth::new(img, rng.gen_range(0..3), b));
    }
    let mut dets = Vec::new();
    for _ in 0..n_det {
        // most detections jitter a ground truth so matches actually happen
        let (img, class, b) = if rng.gen_bool(0.7) {
            let g: &GroundTruth = &gts[rng.gen_range(0..gts.len())];
            let [x1, y1, x2, y2] = g.bbox.corners();
            let nx1 = x1 + rng.gen_range(-1.5..1.5);
            let ny1 = y1 + rng.gen_range(-1.5..1.5);
            let nx2 = (x2 + rng.gen_range(-1.5..1.5)).max(nx1 + 0.5);
            let ny2 = (y2 + rng.gen_range(-1.5..1.5)).max(ny1 + 0.5);
            let class = if rng.gen_bool(0.85) { g.class_id } else { rng.gen_range(0..3) };
            (g.image_id.clone(), class, BBox::new(nx1, ny1, nx2, ny2).unwrap())
        } else {
            let x = rng.gen_range(0.0..20.0);
            let y = rng.gen_range(0.0..20.0);
            let b = BBox::new(x, y, x + rng.gen_range(2.0..8.0), y + rng.gen_range(2.0..8.0)).unwrap();
            (format!("img{}", rng.gen_range(0..images)), rng.gen_range(0..3), b)
        };
        // coarse confidences so ties occur
        let conf = rng.gen_range(0..8) as f64 / 8.0 + 0.0625;
        dets.push(Detection::new(img, class, b, conf).unwrap());
    }
    (dets, gts)
}

// attention oracles

pub fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn random_bottleneck(r: &mut impl Rng, c: usize, red: usize) -> Bottleneck {
    Bottleneck::generate(c, red, || r.gen_range(-1.0..1.0)).unwrap()
}

/// `fc2(relu(fc1 x))` spelled out with index loops.
pub fn mlp(p: &Bottleneck, x: &[f64]) -> Vec<f64> {
    let (f1, f2) = (p.fc1(), p.fc2());
    let hidden: Vec<f64> = (0..f1.out_features())
        .map(|j| {
            let mut acc = f1.bias()[j];
            for (i, &xi) in x.iter().enumerate() {
                acc += f1.weight(j, i) * xi;
            }
            acc.max(0.0)
        })
        .collect();
    (0..f2.out_features())
        .map(|k| {
            let mut acc = f2.bias()[k];
            for (j, &hj) in hidden.iter().enumerate() {
                acc += f2.weight(k, j) * hj;
            }
            acc
        })
        .collect()
}

pub fn plane_stats(f: &Tensor, n: usize, c: usize) -> (f64, f64) {
    let s = f.shape();
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for h in 0..s.h {
        for w in 0..s.w {
            sum += f.get(n, c, h, w);
            max = max.max(f.get(n, c, h, w));
        }
    }
    (sum / (s.h * s.w) as f64, max)
}

pub fn channel_attention_oracle(f: &Tensor, p: &Bottleneck) -> Vec<f64> {
    let s = f.shape();
    let mut out = Vec::new();
    for n in 0..s.n {
        let (avg, max): (Vec<f64>, Vec<f64>) = (0..s.c).map(|c| plane_stats(f, n, c)).unzip();
        let (a, m) = (mlp(p, &avg), mlp(p, &max));
        out.extend((0..s.c).map(|c| sig(a[c] + m[c])));
    }
    out
}

pub fn spatial_attention_oracle(f: &Tensor, p: &SpatialAttentionParams) -> Tensor {
    let s = f.shape();
    let pooled = Tensor::from_fn(Shape::new(s.n, 2, s.h, s.w), |n, ch, h, w| {
        let vals: Vec<f64> = (0..s.c).map(|c| f.get(n, c, h, w)).collect();
        if ch == 0 {
            vals.iter().sum::<f64>() / s.c as f64
        } else {
            vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        }
    })
    .unwrap();
    conv2d_oracle(&pooled, p.kernel(), 1, 1, Padding::Zero).map(sig)
}

pub fn aspp_oracle(a: &Tensor, p: &AsppParams) -> Tensor {
    let s = a.shape();
    let b = p.branch_channels();
    let mut parts = Vec::new();
    // image pool: mean, 1x1, broadcast
    let ip = p.image_pool();
    parts.push(
        Tensor::from_fn(Shape::new(s.n, b, s.h, s.w), |n, o, _, _| {
            let mut acc = ip.bias().map_or(0.0, |bb| bb[o]);
            for c in 0..s.c {
                acc += ip.weight(o, c, 0, 0) * plane_stats(a, n, c).0;
            }
            acc
        })
        .unwrap(),
    );
    for (k, &rate) in p.branches().iter().zip(&ASPP_RATES) {
        parts.push(conv2d_oracle(a, k, rate, 1, Padding::Zero));
    }
    let cat = Tensor::from_fn(Shape::new(s.n, 5 * b, s.h, s.w), |n, c, h, w| parts[c / b].get(n, c % b, h, w)).unwrap();
    conv2d_oracle(&cat, p.projection(), 1, 1, Padding::Zero)
}

pub fn random_aspp(r: &mut impl Rng, cin: usize, b: usize, out: usize, bias: bool) -> AsppParams {
    AsppParams::generate(cin, b, out, bias, || r.gen_range(-0.5..0.5)).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
