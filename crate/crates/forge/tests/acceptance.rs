//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are printed even when every check passes.

#[path = "../../core/tests/common/mod.rs"]
mod oracles;
mod fixture;

use std::time::Instant;

use oracles::*;
use pave_forge::formats::{DamageClass, PipelineConfig, Ratios, Split, MANIFEST_FILE};
use pave_forge::pipeline::run_augment;
use pave_forge::split::assign_splits;
use pave_forge_core::attention::{
    as_se, aspp, cbam, channel_attention, se_block, se_excitation, spatial_attention, Bottleneck,
    SpatialAttentionParams,
};
use pave_forge_core::boxes::{ciou_loss, eiou_loss, BBox};
use pave_forge_core::gan::{adversarial_loss, ScoreBatch, LOG_EPS};
use pave_forge_core::metrics::{average_precision, ApMethod, Detection, GroundTruth};
use pave_forge_core::ops::{conv2d, Padding};
use pave_forge_core::pyramid::build_laplacian;
use pave_forge_core::scharr::compute_gradients;
use pave_forge_core::{Image, Shape, Tensor};
use rand::Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn require(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn laplacian_round_trip() -> Check {
    let mut r = rng(1001);
    let sizes = [(63, 97), (64, 64), (17, 33), (50, 31), (97, 63)];
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..20 {
        let (h, w) = sizes[i % sizes.len()];
        let img = random_image(&mut r, h, w, if i % 2 == 0 { 3 } else { 1 });
        let back = build_laplacian(&img, 4).map_err(|e| e.to_string())?.collapse();
        worst = worst.max(back.max_abs_diff(&img).ok_or("dims changed")?);
    }
    let secs = start.elapsed().as_secs_f64();
    require(worst < 1e-10 && secs < 2.0, format!("max error {worst:.2e}, {secs:.3} s for 20 images"))
}

fn conv_oracle() -> Check {
    let mut r = rng(1002);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let shape = Shape::new(1, r.gen_range(1..=3), r.gen_range(7..=12), r.gen_range(7..=12));
        let (kh, kw) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let out = r.gen_range(1..=3);
        let k = random_kernel(&mut r, out, shape.c, kh, kw, case % 3 != 0);
        let x = random_tensor(&mut r, shape);
        let dilation = 1 + case % 3;
        let stride = 1 + (case / 3) % 2;
        let padding = [Padding::Zero, Padding::Reflect][(case / 6) % 2];
        let got = conv2d(&x, &k, dilation, stride, padding).map_err(|e| e.to_string())?;
        let want = conv2d_oracle(&x, &k, dilation, stride, padding);
        worst = worst.max(got.max_abs_diff(&want).map_err(|e| e.to_string())?);
    }
    require(worst < 1e-12, format!("50 cases, max error {worst:.2e}"))
}

fn zero_inflation() -> Check {
    let mut r = rng(1003);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let rate = 2 + case % 3;
        let shape = Shape::new(1, 2, r.gen_range(9..=14), r.gen_range(9..=14));
        let x = random_tensor(&mut r, shape);
        let k = random_kernel(&mut r, 2, 2, 3, 3, true);
        let dilated = conv2d(&x, &k, rate, 1, Padding::Zero).map_err(|e| e.to_string())?;
        let stuffed = conv2d(&x, &zero_stuff(&k, rate), 1, 1, Padding::Zero).map_err(|e| e.to_string())?;
        worst = worst.max(dilated.max_abs_diff(&stuffed).map_err(|e| e.to_string())?);
    }
    require(worst < 1e-12, format!("20 cases, max error {worst:.2e}"))
}

fn box_gradients() -> Check {
    let mut r = rng(1004);
    let (mut wc, mut we) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (p, g) = random_box_pair(&mut r, 1e-3);
        let (pc, gc) = (p.corners(), g.corners());
        let alpha = alpha_ref(pc, gc);
        let fd_c = central_difference(|q| ciou_ref(q, gc, alpha), pc, 1e-6);
        let fd_e = central_difference(|q| eiou_ref(q, gc), pc, 1e-6);
        wc = wc.max(relative_error(ciou_loss(&p, &g).gradient, fd_c));
        we = we.max(relative_error(eiou_loss(&p, &g).gradient, fd_e));
    }
    let b = |x1, y1, x2, y2| BBox::new(x1, y1, x2, y2).unwrap();
    let (p, g) = (b(0.0, 0.0, 2.0, 2.0), b(2.0, 2.0, 4.0, 4.0));
    let hand = [
        (ciou_loss(&p, &g).value, 1.25),
        (eiou_loss(&p, &g).value, 1.25),
        (eiou_loss(&p, &b(0.0, 0.0, 4.0, 2.0)).value, 0.8),
    ];
    let hand_err = hand.iter().map(|(got, want)| (got - want).abs()).fold(0.0, f64::max);
    require(
        wc < 1e-4 && we < 1e-4 && hand_err < 1e-9,
        format!("rel err CIoU {wc:.2e}, EIoU {we:.2e}; hand values off by {hand_err:.1e}"),
    )
}

fn map_oracle() -> Check {
    let mut r = rng(1005);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for case in 0..100 {
        let (dets, gts) = random_detection_instance(&mut r, 2);
        for class in 0..3 {
            let got = average_precision(&dets, &gts, class, 0.5, ApMethod::AllPoint).map_err(|e| e.to_string())?;
            match (got, ap_exhaustive(&dets, &gts, class, 0.5)) {
                (Some(g), Some(w)) => {
                    worst = worst.max((g - w).abs());
                    compared += 1;
                }
                (None, None) => {}
                other => return Err(format!("case {case} class {class}: defined-ness differs {other:?}")),
            }
        }
    }
    let b = |x1, y1, x2, y2| BBox::new(x1, y1, x2, y2).unwrap();
    let gts = [GroundTruth::new("a", 0, b(0.0, 0.0, 10.0, 10.0)), GroundTruth::new("b", 0, b(0.0, 0.0, 10.0, 10.0))];
    let dets = [
        Detection::new("a", 0, b(0.0, 0.0, 10.0, 10.0), 0.9).unwrap(),
        Detection::new("a", 0, b(30.0, 30.0, 40.0, 40.0), 0.8).unwrap(),
    ];
    let worked = average_precision(&dets, &gts, 0, 0.5, ApMethod::AllPoint).map_err(|e| e.to_string())?;
    require(
        worst < 1e-12 && worked == Some(0.5),
        format!("{compared} class APs, max error {worst:.1e}; worked example {worked:?}"),
    )
}

fn attention_contracts() -> Check {
    let mut r = rng(1006);
    let mut worst = 0.0f64;
    let mut track = |a: &[f64], b: &[f64]| worst = worst.max(max_diff(a, b));
    let err = |e: pave_forge_core::Error| e.to_string();
    for _ in 0..5 {
        let f = random_tensor(&mut r, Shape::new(2, 8, 9, 7));
        let cp = random_bottleneck(&mut r, 8, 4);
        let sp = SpatialAttentionParams::generate(|| r.gen_range(-0.3..0.3)).map_err(err)?;
        let ap = random_aspp(&mut r, 8, 3, 5, true);

        let mc = channel_attention(&f, &cp).map_err(err)?;
        let ms = spatial_attention(&f, &sp).map_err(err)?;
        let se = se_excitation(&f, &cp).map_err(err)?;
        let maps_ok = [&mc, &ms, &se].iter().all(|m| m.data().iter().all(|&v| v > 0.0 && v < 1.0));
        if !maps_ok {
            return Err("attention map value outside (0, 1)".into());
        }
        let shapes = [
            (mc.shape(), Shape::new(2, 8, 1, 1)),
            (ms.shape(), Shape::new(2, 1, 9, 7)),
            (cbam(&f, &cp, &sp).map_err(err)?.shape(), f.shape()),
            (se_block(&f, &cp).map_err(err)?.shape(), f.shape()),
            (aspp(&f, &ap).map_err(err)?.shape(), Shape::new(2, 5, 9, 7)),
            (as_se(&f, &cp, &ap).map_err(err)?.shape(), Shape::new(2, 5, 9, 7)),
        ];
        if let Some((got, want)) = shapes.iter().find(|(g, w)| g != w) {
            return Err(format!("shape {got} where {want} was expected"));
        }

        track(mc.data(), &channel_attention_oracle(&f, &cp));
        track(ms.data(), spatial_attention_oracle(&f, &sp).data());
        // CBAM = M_s(F') * F' with F' = M_c(F) * F
        let fc = Tensor::from_fn(f.shape(), |n, c, h, w| mc.get(n, c, 0, 0) * f.get(n, c, h, w)).unwrap();
        let msp = spatial_attention_oracle(&fc, &sp);
        let want = Tensor::from_fn(f.shape(), |n, c, h, w| msp.get(n, 0, h, w) * fc.get(n, c, h, w)).unwrap();
        track(cbam(&f, &cp, &sp).map_err(err)?.data(), want.data());
        // SE = sigmoid(MLP(avgpool U)) * U
        let want_se: Vec<f64> = (0..2)
            .flat_map(|n| {
                let avg: Vec<f64> = (0..8).map(|c| plane_stats(&f, n, c).0).collect();
                mlp(&cp, &avg).into_iter().map(sig).collect::<Vec<_>>()
            })
            .collect();
        track(se.data(), &want_se);
        let scaled = Tensor::from_fn(f.shape(), |n, c, h, w| want_se[n * 8 + c] * f.get(n, c, h, w)).unwrap();
        track(se_block(&f, &cp).map_err(err)?.data(), scaled.data());
        track(aspp(&f, &ap).map_err(err)?.data(), aspp_oracle(&f, &ap).data());
        track(as_se(&f, &cp, &ap).map_err(err)?.data(), aspp_oracle(&scaled, &ap).data());
    }
    let f = random_tensor(&mut r, Shape::new(1, 4, 6, 6));
    let zero = cbam(&f, &Bottleneck::zeros(4, 2).map_err(err)?, &SpatialAttentionParams::zeros()).map_err(err)?;
    let quarter_exact = zero == f.scale(0.25);
    require(
        worst < 1e-12 && quarter_exact,
        format!("oracle max error {worst:.1e}; zero-parameter CBAM == 0.25 F: {quarter_exact}"),
    )
}

fn gan_losses() -> Check {
    let batch = |r: Vec<f64>, f: Vec<f64>| ScoreBatch::new(r, f).unwrap();
    let hand = [
        (adversarial_loss(&batch(vec![0.5], vec![0.5])), -1.386294),
        (adversarial_loss(&batch(vec![1.0 - LOG_EPS], vec![LOG_EPS])), 0.0),
        (adversarial_loss(&batch(vec![0.9, 0.9], vec![0.1])), 2.0 * 0.9f64.ln()),
    ];
    let hand_err = hand.iter().map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    let mut r = rng(1007);
    let mut monotone = 0;
    for _ in 0..50 {
        let (nr, nf) = (r.gen_range(1..6), r.gen_range(1..6));
        let real: Vec<f64> = (0..nr).map(|_| r.gen_range(0.05..0.95)).collect();
        let fake: Vec<f64> = (0..nf).map(|_| r.gen_range(0.05..0.95)).collect();
        let base = adversarial_loss(&batch(real.clone(), fake.clone()));
        let mut up_real = real.clone();
        up_real[r.gen_range(0..nr)] += 0.01;
        let mut up_fake = fake.clone();
        up_fake[r.gen_range(0..nf)] += 0.01;
        if adversarial_loss(&batch(up_real, fake)) > base && adversarial_loss(&batch(real, up_fake)) < base {
            monotone += 1;
        }
    }
    require(
        hand_err < 1e-6 && monotone == 50,
        format!("hand values off by {hand_err:.1e}; {monotone}/50 batches monotone"),
    )
}

fn pipeline_and_split() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = fixture::write_corpus(dir.path());
    let mut manifests = Vec::new();
    let mut outputs = 0;
    for name in ["run_a", "run_b"] {
        let cfg = PipelineConfig::from_file(&fixture::write_config(&corpus, name, "")).map_err(|e| format!("{e:#}"))?;
        let outcome = run_augment(&cfg).map_err(|e| format!("{e:#}"))?;
        let labelled = outcome
            .manifest
            .records
            .iter()
            .filter(|r| std::fs::read_to_string(cfg.output_dir.join(&r.label_file)).is_ok_and(|t| t.lines().count() == 1))
            .count();
        outputs = outcome.manifest.records.len().min(labelled);
        manifests.push(std::fs::read(cfg.output_dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?);
    }
    let identical = manifests[0] == manifests[1];

    let classes: Vec<DamageClass> = [(DamageClass::Kc, 2059), (DamageClass::Lf, 2059), (DamageClass::Xb, 2058)]
        .iter()
        .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
        .collect();
    let (splits, _) = assign_splits(&classes, &Ratios::default(), 42);
    let totals = Split::ALL.map(|s| splits.iter().filter(|&&x| x == s).count());
    require(
        outputs == 25 && identical && totals == [4940, 618, 618],
        format!("{outputs} labelled outputs, manifests identical: {identical}; split totals {totals:?}"),
    )
}

fn scharr_checks() -> Check {
    let ramp = Image::gray_from_fn(12, 15, |_, x| x as f64).unwrap();
    let f = compute_gradients(&ramp).map_err(|e| e.to_string())?;
    let mut ramp_err = 0.0f64;
    for y in 1..11 {
        for x in 1..14 {
            ramp_err = ramp_err.max((f.g0[y * 15 + x] - 32.0).abs());
        }
    }
    let mut r = rng(1009);
    let mut violations = 0;
    for _ in 0..20 {
        let f = compute_gradients(&random_gray(&mut r, 20, 24)).map_err(|e| e.to_string())?;
        violations += (0..f.magnitude.len())
            .filter(|&i| f.magnitude[i] < (f.g0[i].powi(2) + f.g90[i].powi(2)).sqrt())
            .count();
    }
    require(
        ramp_err < 1e-12 && violations == 0,
        format!("ramp 0-degree response off 32 by {ramp_err:.1e}; {violations} pixels where 4-direction < 2-direction"),
    )
}

fn main() {
    let start = Instant::now();
    let criteria: [Criterion; 9] = [
        ("Laplacian round trip", laplacian_round_trip),
        ("convolution oracle", conv_oracle),
        ("zero-inflation equivalence", zero_inflation),
        ("box-loss gradients", box_gradients),
        ("mAP oracle", map_oracle),
        ("attention-block contracts", attention_contracts),
        ("GAN losses", gan_losses),
        ("pipeline determinism and split arithmetic", pipeline_and_split),
        ("Scharr checks", scharr_checks),
    ];
    let mut failed = 0;
    let mut report = |n: usize, name: &str, result: Check| {
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {n:>2} {name}: {detail}");
    };
    for (i, (name, check)) in criteria.iter().enumerate() {
        report(i + 1, name, check());
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        10,
        "runtime",
        require(secs < 60.0, format!("acceptance checks took {secs:.2} s (limit 60 s)")),
    );
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
