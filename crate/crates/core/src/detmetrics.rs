//! Single-class detection metrics: IoU, greedy matching, precision/recall,
//! interpolated AP, mAP and fitness.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde_json::json;

use crate::detio::{field, for_each_row, int, real, ParseMode};
use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::numfmt::{g17, json_pretty};

pub const GROUND_TRUTH_HEADER: [&str; 5] = ["frame_id", "u_min", "v_min", "u_max", "v_max"];
pub const PREDICTIONS_HEADER: [&str; 8] = [
    "camera_id",
    "frame_index",
    "frame_id",
    "u_min",
    "v_min",
    "u_max",
    "v_max",
    "confidence",
];

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub const COCO_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthBox {
    pub frame_id: String,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub camera_id: String,
    pub frame_index: u64,
    pub frame_id: String,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPair {
    /// Indices into the slices passed to [`match_greedy`].
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchOutcome {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub matches: Vec<MatchedPair>,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.u_max.min(b.u_max) - a.u_min.max(b.u_min)).max(0.0);
    let ih = (a.v_max.min(b.v_max) - a.v_min.max(b.v_min)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Prediction indices by descending confidence; equal confidences keep
/// input order.
fn ranking(preds: &[Prediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| preds[j].confidence.total_cmp(&preds[i].confidence));
    order
}

/// Greedy matching inside one frame. `preds` and `gts` hold global indices.
fn match_frame(
    all_preds: &[Prediction],
    all_gts: &[GroundTruthBox],
    preds: &[usize],
    gts: &[usize],
    threshold: f64,
) -> Vec<(usize, Option<(usize, f64)>)> {
    let mut taken = vec![false; gts.len()];
    let mut sorted = preds.to_vec();
    sorted.sort_by(|&i, &j| all_preds[j].confidence.total_cmp(&all_preds[i].confidence).then(i.cmp(&j)));
    sorted
        .into_iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (k, &g) in gts.iter().enumerate() {
                if taken[k] {
                    continue;
                }
                let v = iou(&all_preds[p].bbox, &all_gts[g].bbox);
                if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((k, v));
                }
            }
            if let Some((k, _)) = best {
                taken[k] = true;
            }
            (p, best.map(|(k, v)| (gts[k], v)))
        })
        .collect()
}

/// Per prediction: `Some((gt, iou))` when matched.
fn match_all(preds: &[Prediction], gts: &[GroundTruthBox], threshold: f64) -> Vec<Option<(usize, f64)>> {
    let mut frames: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        frames.entry(p.frame_id.as_str()).or_default().0.push(i);
    }
    for (i, g) in gts.iter().enumerate() {
        frames.entry(g.frame_id.as_str()).or_default().1.push(i);
    }
    let per_frame: Vec<_> = frames
        .into_par_iter()
        .map(|(_, (p, g))| match_frame(preds, gts, &p, &g, threshold))
        .collect();
    let mut out = vec![None; preds.len()];
    for (p, m) in per_frame.into_iter().flatten() {
        out[p] = m;
    }
    out
}

pub fn match_greedy(preds: &[Prediction], gts: &[GroundTruthBox], iou_threshold: f64) -> MatchOutcome {
    let per_pred = match_all(preds, gts, iou_threshold);
    let mut matches: Vec<MatchedPair> = ranking(preds)
        .into_iter()
        .filter_map(|p| per_pred[p].map(|(gt, iou)| MatchedPair { pred: p, gt, iou }))
        .collect();
    matches.sort_by_key(|m| m.pred);
    let tp = matches.len();
    MatchOutcome {
        tp,
        fp: preds.len() - tp,
        fn_: gts.len() - tp,
        matches,
    }
}

pub fn precision(m: &MatchOutcome) -> Result<f64> {
    if m.tp + m.fp == 0 {
        return Err(Error::UndefinedMetric("precision: tp + fp = 0"));
    }
    Ok(m.tp as f64 / (m.tp + m.fp) as f64)
}

pub fn recall(m: &MatchOutcome) -> Result<f64> {
    if m.tp + m.fn_ == 0 {
        return Err(Error::UndefinedMetric("recall: tp + fn = 0"));
    }
    Ok(m.tp as f64 / (m.tp + m.fn_) as f64)
}

pub fn precision_recall(m: &MatchOutcome) -> Result<(f64, f64)> {
    Ok((precision(m)?, recall(m)?))
}

/// 101-point interpolated average precision.
pub fn average_precision(preds: &[Prediction], gts: &[GroundTruthBox], iou_threshold: f64) -> Result<f64> {
    if gts.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let matched = match_all(preds, gts, iou_threshold);
    let n_gt = gts.len();
    // (tp, rank) after each prediction in confidence order
    let mut curve = Vec::with_capacity(preds.len());
    let mut tp = 0usize;
    for (k, p) in ranking(preds).into_iter().enumerate() {
        tp += matched[p].is_some() as usize;
        curve.push((tp, k + 1));
    }
    // interpolated precision: running max from the high-recall end
    let mut interp = vec![0.0f64; curve.len()];
    let mut best = 0.0f64;
    for (i, &(tp, n)) in curve.iter().enumerate().rev() {
        best = best.max(tp as f64 / n as f64);
        interp[i] = best;
    }
    let mut sum = 0.0;
    let mut j = 0;
    for r in 0..=100usize {
        // first curve point with recall >= r/100, compared in integers
        while j < curve.len() && curve[j].0 * 100 < r * n_gt {
            j += 1;
        }
        if j < curve.len() {
            sum += interp[j];
        }
    }
    Ok(sum / 101.0)
}

/// `(AP@0.5, mean AP over 0.50..0.95)`.
pub fn map_range(preds: &[Prediction], gts: &[GroundTruthBox]) -> Result<(f64, f64)> {
    let aps = COCO_THRESHOLDS
        .iter()
        .map(|&t| average_precision(preds, gts, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((aps[0], aps.iter().sum::<f64>() / aps.len() as f64))
}

/// Precision and recall carry zero weight.
pub fn fitness(_precision: f64, _recall: f64, map50: f64, map5095: f64) -> f64 {
    0.1 * map50 + 0.9 * map5095
}

/// Rows: predicted insect, predicted background. Columns: true insect,
/// true background.
pub fn confusion_matrix(m: &MatchOutcome) -> [[usize; 2]; 2] {
    [[m.tp, m.fp], [m.fn_, 0]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetMetricsReport {
    pub iou_threshold: f64,
    pub outcome: MatchOutcome,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub ap_per_threshold: Vec<(f64, f64)>,
    pub map50: f64,
    pub map5095: f64,
    pub fitness: f64,
}

pub fn evaluate_detections(
    preds: &[Prediction],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> Result<DetMetricsReport> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::config("iou_threshold", format!("{iou_threshold} not in (0, 1]")));
    }
    let outcome = match_greedy(preds, gts, iou_threshold);
    let ap_per_threshold = COCO_THRESHOLDS
        .iter()
        .map(|&t| Ok((t, average_precision(preds, gts, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let map50 = ap_per_threshold[0].1;
    let map5095 = ap_per_threshold.iter().map(|x| x.1).sum::<f64>() / ap_per_threshold.len() as f64;
    let (p, r) = (precision(&outcome).ok(), recall(&outcome).ok());
    Ok(DetMetricsReport {
        iou_threshold,
        fitness: fitness(p.unwrap_or(0.0), r.unwrap_or(0.0), map50, map5095),
        precision: p,
        recall: r,
        outcome,
        ap_per_threshold,
        map50,
        map5095,
    })
}

impl DetMetricsReport {
    pub fn to_json(&self) -> String {
        let cm = confusion_matrix(&self.outcome);
        let v = json!({
            "iou_threshold": self.iou_threshold,
            "tp": self.outcome.tp,
            "fp": self.outcome.fp,
            "fn": self.outcome.fn_,
            "precision": self.precision,
            "recall": self.recall,
            "map50": self.map50,
            "map50_95": self.map5095,
            "fitness": self.fitness,
            "ap_per_threshold": self.ap_per_threshold.iter().map(|(t, ap)| json!({"iou": t, "ap": ap})).collect::<Vec<_>>(),
            "confusion_matrix": {
                "labels": ["insect", "background"],
                "rows": "predicted",
                "columns": "true",
                "matrix": cm,
            },
        });
        json_pretty(&v)
    }

    pub fn to_table(&self) -> String {
        let opt = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        let cm = confusion_matrix(&self.outcome);
        let mut s = format!("matching at IoU >= {}\n", self.iou_threshold);
        s += &format!("tp {}  fp {}  fn {}\n", self.outcome.tp, self.outcome.fp, self.outcome.fn_);
        s += &format!("precision  {}\nrecall     {}\n", opt(self.precision), opt(self.recall));
        s += &format!("mAP@.5     {:.4}\nmAP@.5:.95 {:.4}\nfitness    {:.4}\n", self.map50, self.map5095, self.fitness);
        s += "\n            true:insect  true:background\n";
        s += &format!("insect      {:>11}  {:>15}\n", cm[0][0], cm[0][1]);
        s += &format!("background  {:>11}  {:>15}\n", cm[1][0], cm[1][1]);
        s
    }
}

fn bbox_at(rec: &csv::StringRecord, first: usize, row: usize, h: &[&str]) -> Result<BBox> {
    let [u0, v0, u1, v1] = [0, 1, 2, 3].map(|k| real(rec, first + k, row, h));
    let (u0, v0, u1, v1) = (u0?, v0?, u1?, v1?);
    let bad = |col: usize, what: &str| Error::Csv {
        row,
        column: h[col].into(),
        reason: what.into(),
    };
    if u0 >= u1 {
        return Err(bad(first + 2, "u_max must exceed u_min"));
    }
    if v0 >= v1 {
        return Err(bad(first + 3, "v_max must exceed v_min"));
    }
    BBox::new(u0, v0, u1, v1)
}

pub fn parse_ground_truth<R: Read>(input: R) -> Result<Vec<GroundTruthBox>> {
    let h = &GROUND_TRUTH_HEADER;
    let (rows, _) = for_each_row(input, h, ParseMode::Strict, |rec, row| {
        Ok(GroundTruthBox {
            frame_id: field(rec, 0, row, h)?.to_string(),
            bbox: bbox_at(rec, 1, row, h)?,
        })
    })?;
    Ok(rows)
}

pub fn parse_predictions<R: Read>(input: R) -> Result<Vec<Prediction>> {
    let h = &PREDICTIONS_HEADER;
    let (rows, _) = for_each_row(input, h, ParseMode::Strict, |rec, row| {
        let confidence = real(rec, 7, row, h)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Csv {
                row,
                column: h[7].into(),
                reason: format!("confidence {confidence} outside [0, 1]"),
            });
        }
        Ok(Prediction {
            camera_id: field(rec, 0, row, h)?.to_string(),
            frame_index: int(rec, 1, row, h)?,
            frame_id: field(rec, 2, row, h)?.to_string(),
            bbox: bbox_at(rec, 3, row, h)?,
            confidence,
        })
    })?;
    Ok(rows)
}

pub fn write_ground_truth<W: Write>(mut out: W, gts: &[GroundTruthBox]) -> Result<()> {
    writeln!(out, "{}", GROUND_TRUTH_HEADER.join(","))?;
    for g in gts {
        let b = g.bbox.as_array().map(g17);
        writeln!(out, "{},{}", g.frame_id, b.join(","))?;
    }
    Ok(())
}

pub fn write_predictions<W: Write>(mut out: W, preds: &[Prediction]) -> Result<()> {
    writeln!(out, "{}", PREDICTIONS_HEADER.join(","))?;
    for p in preds {
        let b = p.bbox.as_array().map(g17);
        writeln!(
            out,
            "{},{},{},{},{}",
            p.camera_id,
            p.frame_index,
            p.frame_id,
            b.join(","),
            g17(p.confidence)
        )?;
    }
    Ok(())
}
