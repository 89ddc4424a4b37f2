//! Detection evaluation: greedy matching, precision / recall / accuracy,
//! average precision and mAP.

mod cost;

pub use cost::{count_params_flops, peak_flops, BlockCost, BlockKind, BlockSpec};

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::boxes::{iou, BBox};
use crate::error::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, class_id: u32, bbox: BBox, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::OutOfRange {
                name: "confidence",
                value: confidence,
                range: "[0, 1]",
            });
        }
        Ok(Self {
            image_id: image_id.into(),
            class_id,
            bbox,
            confidence,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
}

impl GroundTruth {
    pub fn new(image_id: impl Into<String>, class_id: u32, bbox: BBox) -> Self {
        Self {
            image_id: image_id.into(),
            class_id,
            bbox,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchLabel {
    /// Matched the ground truth at this input index.
    TruePositive(usize),
    FalsePositive,
}

impl MatchLabel {
    pub fn is_tp(self) -> bool {
        matches!(self, MatchLabel::TruePositive(_))
    }
}

/// Outcome of [`match_detections`]; `labels` follows detection input order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    pub labels: Vec<MatchLabel>,
    pub gt_matched: Vec<bool>,
}

impl Matching {
    pub fn true_positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_tp()).count()
    }

    pub fn false_positives(&self) -> usize {
        self.labels.len() - self.true_positives()
    }

    pub fn false_negatives(&self) -> usize {
        self.gt_matched.iter().filter(|&&m| !m).count()
    }
}

/// Detection indices by descending confidence; ties keep input order.
pub fn rank_by_confidence(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

fn check_threshold(iou_threshold: f64) -> Result<()> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::OutOfRange {
            name: "IoU threshold",
            value: iou_threshold,
            range: "(0, 1)",
        });
    }
    Ok(())
}

/// Greedy one-to-one matching within each (image, class).
///
/// Detections are visited by descending confidence; each takes the
/// unmatched ground truth of highest IoU, provided the IoU reaches the
/// threshold. IoU ties go to the earlier ground truth.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> Result<Matching> {
    check_threshold(iou_threshold)?;
    let mut by_key: BTreeMap<(&str, u32), Vec<usize>> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_key.entry((g.image_id.as_str(), g.class_id)).or_default().push(i);
    }
    let mut labels = vec![MatchLabel::FalsePositive; dets.len()];
    let mut gt_matched = vec![false; gts.len()];
    for d in rank_by_confidence(dets) {
        let det = &dets[d];
        let Some(candidates) = by_key.get(&(det.image_id.as_str(), det.class_id)) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &g in candidates {
            if gt_matched[g] {
                continue;
            }
            let overlap = iou(&det.bbox, &gts[g].bbox);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, _)) = best {
            gt_matched[g] = true;
            labels[d] = MatchLabel::TruePositive(g);
        }
    }
    Ok(Matching { labels, gt_matched })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rate {
    Precision,
    Recall,
    Accuracy,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EvalWarning {
    /// A rate's denominator was zero; the rate is reported as 0.
    ZeroDenominator(Rate),
    /// Detections exist for a class with no ground truth; excluded from mAP.
    ClassWithoutGroundTruth(u32),
}

impl fmt::Display for EvalWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalWarning::ZeroDenominator(r) => write!(f, "{r:?} has a zero denominator; reported as 0"),
            EvalWarning::ClassWithoutGroundTruth(c) => {
                write!(f, "class {c} has detections but no ground truth; excluded from mAP")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rates {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub warnings: Vec<EvalWarning>,
}

/// `P = TP/(TP+FP)`, `R = TP/(TP+FN)`, `Acc = (TP+TN)/(TP+FP+FN+TN)`.
pub fn precision_recall_accuracy(tp: u64, fp: u64, fn_: u64, tn: u64) -> Rates {
    let mut warnings = Vec::new();
    let mut ratio = |num: u64, den: u64, which: Rate| {
        if den == 0 {
            warnings.push(EvalWarning::ZeroDenominator(which));
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp, Rate::Precision);
    let recall = ratio(tp, tp + fn_, Rate::Recall);
    let accuracy = ratio(tp + tn, tp + fp + fn_ + tn, Rate::Accuracy);
    Rates {
        precision,
        recall,
        accuracy,
        warnings,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ApMethod {
    /// Area under the monotone precision envelope.
    #[default]
    AllPoint,
    /// Mean of the envelope at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

/// AP of a ranked hit list against `n_gt` ground truths.
///
/// `hits[k]` says whether the k-th most confident detection was a true positive.
pub fn ap_from_ranked(hits: &[bool], n_gt: usize, method: ApMethod) -> f64 {
    if n_gt == 0 || hits.is_empty() {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &hit) in hits.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    // envelope: precision made non-increasing from the right
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    match method {
        ApMethod::AllPoint => {
            let mut area = 0.0;
            let mut prev_recall = 0.0;
            for (&p, &r) in precision.iter().zip(&recall) {
                area += (r - prev_recall) * p;
                prev_recall = r;
            }
            area
        }
        ApMethod::ElevenPoint => {
            let mut total = 0.0;
            for t in 0..=10 {
                let level = t as f64 / 10.0;
                let best = recall
                    .iter()
                    .zip(&precision)
                    .filter(|(&r, _)| r >= level - 1e-12)
                    .map(|(_, &p)| p)
                    .fold(0.0, f64::max);
                total += best;
            }
            total / 11.0
        }
    }
}

fn hits_for_class(dets: &[Detection], matching: &Matching, class_id: u32) -> Vec<bool> {
    rank_by_confidence(dets)
        .into_iter()
        .filter(|&i| dets[i].class_id == class_id)
        .map(|i| matching.labels[i].is_tp())
        .collect()
}

/// AP of one class; `None` when the class has no ground truth.
pub fn average_precision(
    dets: &[Detection],
    gts: &[GroundTruth],
    class_id: u32,
    iou_threshold: f64,
    method: ApMethod,
) -> Result<Option<f64>> {
    let n_gt = gts.iter().filter(|g| g.class_id == class_id).count();
    let matching = match_detections(dets, gts, iou_threshold)?;
    if n_gt == 0 {
        return Ok(None);
    }
    Ok(Some(ap_from_ranked(&hits_for_class(dets, &matching, class_id), n_gt, method)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassReport {
    pub class_id: u32,
    /// `None` for classes without ground truth.
    pub ap: Option<f64>,
    pub ground_truths: usize,
    pub detections: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<ClassReport>,
    pub map: f64,
    pub precision: f64,
    pub recall: f64,
    /// Only present when the caller supplies a true-negative count.
    pub accuracy: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: Option<u64>,
    pub iou_threshold: f64,
    pub method: ApMethod,
    pub warnings: Vec<EvalWarning>,
}

/// Full evaluation; mAP averages AP over classes that have ground truth.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
    method: ApMethod,
    tn: Option<u64>,
) -> Result<EvalReport> {
    let matching = match_detections(dets, gts, iou_threshold)?;
    let class_ids: BTreeSet<u32> = dets.iter().map(|d| d.class_id).chain(gts.iter().map(|g| g.class_id)).collect();
    let mut warnings = BTreeSet::new();
    let mut classes = Vec::with_capacity(class_ids.len());
    for class_id in class_ids {
        let ground_truths = gts.iter().filter(|g| g.class_id == class_id).count();
        let hits = hits_for_class(dets, &matching, class_id);
        let tp = hits.iter().filter(|&&h| h).count();
        let ap = if ground_truths == 0 {
            warnings.insert(EvalWarning::ClassWithoutGroundTruth(class_id));
            None
        } else {
            Some(ap_from_ranked(&hits, ground_truths, method))
        };
        classes.push(ClassReport {
            class_id,
            ap,
            ground_truths,
            detections: hits.len(),
            tp,
            fp: hits.len() - tp,
            fn_: ground_truths - tp,
        });
    }
    let aps: Vec<f64> = classes.iter().filter_map(|c| c.ap).collect();
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    let (tp, fp, fn_) = (matching.true_positives(), matching.false_positives(), matching.false_negatives());
    let rates = precision_recall_accuracy(tp as u64, fp as u64, fn_ as u64, tn.unwrap_or(0));
    for w in rates.warnings {
        if tn.is_some() || w != EvalWarning::ZeroDenominator(Rate::Accuracy) {
            warnings.insert(w);
        }
    }
    Ok(EvalReport {
        classes,
        map,
        precision: rates.precision,
        recall: rates.recall,
        accuracy: tn.map(|_| rates.accuracy),
        tp,
        fp,
        fn_,
        tn,
        iou_threshold,
        method,
        warnings: warnings.into_iter().collect(),
    })
}
