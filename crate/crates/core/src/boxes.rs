//! IoU, CIoU and EIoU box losses with gradients w.r.t. the predicted box.
//!
//! Gradients are ordered `[d/dx1, d/dy1, d/dx2, d/dy2]`. Where a `min`/`max`
//! of a predicted and a ground-truth edge ties, the derivative is the mean of
//! the two one-sided derivatives, so identical boxes get a zero gradient. Boxes that only touch have IoU 0 and, like disjoint boxes, a
//! zero intersection gradient. CIoU's trade-off weight `alpha` is held
//! constant when differentiating.

use core::f64::consts::PI;

use crate::error::{Error, Result};

/// Axis-aligned box by corners, with strictly positive width and height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 >= x2 || y1 >= y2 {
            return Err(Error::DegenerateBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::new(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: [f64; 4],
}

type Grad = [f64; 4];

fn add(a: Grad, b: Grad) -> Grad {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn mul(a: Grad, k: f64) -> Grad {
    a.map(|v| v * k)
}

/// Quotient rule: d(n / d) = (dn * d - n * dd) / d^2.
fn quotient(n: f64, dn: Grad, d: f64, dd: Grad) -> (f64, Grad) {
    let mut g = [0.0; 4];
    for i in 0..4 {
        g[i] = (dn[i] * d - n * dd[i]) / (d * d);
    }
    (n / d, g)
}

/// Derivative of `max(a, b)` with respect to `a`; a tie splits it evenly.
fn share(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

fn iou_with_grad(p: &BBox, g: &BBox) -> (f64, Grad) {
    let iw = p.x2.min(g.x2) - p.x1.max(g.x1);
    let ih = p.y2.min(g.y2) - p.y1.max(g.y1);
    let (inter, d_inter) = if iw > 0.0 && ih > 0.0 {
        let dx1 = -share(p.x1, g.x1);
        let dx2 = share(g.x2, p.x2);
        let dy1 = -share(p.y1, g.y1);
        let dy2 = share(g.y2, p.y2);
        (iw * ih, [dx1 * ih, dy1 * iw, dx2 * ih, dy2 * iw])
    } else {
        (0.0, [0.0; 4])
    };
    let (w, h) = (p.width(), p.height());
    let d_area = [-h, -w, h, w];
    let union = p.area() + g.area() - inter;
    let d_union = [0, 1, 2, 3].map(|i| d_area[i] - d_inter[i]);
    quotient(inter, d_inter, union, d_union)
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    iou_with_grad(a, b).0
}

/// Squared centre distance over squared enclosing-box diagonal.
fn center_penalty(p: &BBox, g: &BBox) -> (f64, Grad) {
    let ((pcx, pcy), (gcx, gcy)) = (p.center(), g.center());
    let (dx, dy) = (pcx - gcx, pcy - gcy);
    let rho2 = dx * dx + dy * dy;
    let d_rho2 = [dx, dy, dx, dy];
    let (cw, d_cw) = enclosing_width(p, g);
    let (ch, d_ch) = enclosing_height(p, g);
    let c2 = cw * cw + ch * ch;
    let d_c2 = add(mul(d_cw, 2.0 * cw), mul(d_ch, 2.0 * ch));
    quotient(rho2, d_rho2, c2, d_c2)
}

fn enclosing_width(p: &BBox, g: &BBox) -> (f64, Grad) {
    let d1 = -share(g.x1, p.x1);
    let d2 = share(p.x2, g.x2);
    (p.x2.max(g.x2) - p.x1.min(g.x1), [d1, 0.0, d2, 0.0])
}

fn enclosing_height(p: &BBox, g: &BBox) -> (f64, Grad) {
    let d1 = -share(g.y1, p.y1);
    let d2 = share(p.y2, g.y2);
    (p.y2.max(g.y2) - p.y1.min(g.y1), [0.0, d1, 0.0, d2])
}

/// `1 - IoU`.
pub fn iou_loss(pred: &BBox, gt: &BBox) -> LossValue {
    let (v, d) = iou_with_grad(pred, gt);
    LossValue {
        value: 1.0 - v,
        gradient: mul(d, -1.0),
    }
}

/// Aspect-ratio consistency `v = 4/pi^2 (atan(w_gt/h_gt) - atan(w/h))^2`.
pub fn aspect_consistency(pred: &BBox, gt: &BBox) -> f64 {
    let diff = libm::atan(gt.width() / gt.height()) - libm::atan(pred.width() / pred.height());
    4.0 / (PI * PI) * diff * diff
}

/// Trade-off weight `alpha = v / ((1 - IoU) + v)`, 0 when both terms vanish.
pub fn ciou_alpha(iou: f64, v: f64) -> f64 {
    let denom = (1.0 - iou) + v;
    if denom > 0.0 {
        v / denom
    } else {
        0.0
    }
}

/// `1 - IoU + rho^2(b, b_gt) / c^2 + alpha * v`.
pub fn ciou_loss(pred: &BBox, gt: &BBox) -> LossValue {
    let (iou_v, d_iou) = iou_with_grad(pred, gt);
    let (center, d_center) = center_penalty(pred, gt);

    let (w, h) = (pred.width(), pred.height());
    let diff = libm::atan(gt.width() / gt.height()) - libm::atan(w / h);
    let v = 4.0 / (PI * PI) * diff * diff;
    // d atan(w/h) = (h dw - w dh) / (w^2 + h^2)
    let r2 = w * w + h * h;
    let d_atan = [-h / r2, w / r2, h / r2, -w / r2];
    let d_v = mul(d_atan, -8.0 / (PI * PI) * diff);
    let alpha = ciou_alpha(iou_v, v);

    LossValue {
        value: 1.0 - iou_v + center + alpha * v,
        gradient: add(add(mul(d_iou, -1.0), d_center), mul(d_v, alpha)),
    }
}

/// `1 - IoU + rho^2(b, b_gt)/c^2 + (w - w_gt)^2/C_w^2 + (h - h_gt)^2/C_h^2`,
/// with `C_w`, `C_h` the enclosing box's width and height.
pub fn eiou_loss(pred: &BBox, gt: &BBox) -> LossValue {
    let (iou_v, d_iou) = iou_with_grad(pred, gt);
    let (center, d_center) = center_penalty(pred, gt);

    let (cw, d_cw) = enclosing_width(pred, gt);
    let dw = pred.width() - gt.width();
    let (wt, d_wt) = quotient(dw * dw, mul([-1.0, 0.0, 1.0, 0.0], 2.0 * dw), cw * cw, mul(d_cw, 2.0 * cw));

    let (ch, d_ch) = enclosing_height(pred, gt);
    let dh = pred.height() - gt.height();
    let (ht, d_ht) = quotient(dh * dh, mul([0.0, -1.0, 0.0, 1.0], 2.0 * dh), ch * ch, mul(d_ch, 2.0 * ch));

    LossValue {
        value: 1.0 - iou_v + center + wt + ht,
        gradient: add(add(add(mul(d_iou, -1.0), d_center), d_wt), d_ht),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Iou,
    Ciou,
    Eiou,
}

impl core::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iou" => Ok(LossKind::Iou),
            "ciou" => Ok(LossKind::Ciou),
            "eiou" => Ok(LossKind::Eiou),
            _ => Err(Error::Params(alloc::format!("unknown box loss `{s}`"))),
        }
    }
}

pub fn box_loss(kind: LossKind, pred: &BBox, gt: &BBox) -> LossValue {
    match kind {
        LossKind::Iou => iou_loss(pred, gt),
        LossKind::Ciou => ciou_loss(pred, gt),
        LossKind::Eiou => eiou_loss(pred, gt),
    }
}
