//! Scoring rules: ROUGE-L, exact match, accuracy, F1, Matthews and Pearson
//! correlation, pass@1 through a subprocess sandbox, and the relative
//! latency overhead of an input method over the text baseline.

mod sandbox;

use serde::{Deserialize, Serialize};

pub use sandbox::{pass_at_1, visualization_pass, RunOutcome, RunStatus, Sandbox, SandboxConfig};

use crate::error::{Error, Result};

fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 (beta = 1) over lowercased whitespace tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let cand: Vec<String> = candidate.split_whitespace().map(str::to_lowercase).collect();
    let refr: Vec<String> = reference.split_whitespace().map(str::to_lowercase).collect();
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&cand, &refr) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / cand.len() as f64;
    let r = lcs / refr.len() as f64;
    2.0 * p * r / (p + r)
}

/// Canonical answer form used by [`exact_match`]:
///
/// 1. trim and lowercase;
/// 2. collapse runs of whitespace to one space;
/// 3. drop trailing `. , ; : ! ?` (repeatedly);
/// 4. remove commas that sit between two digits (`1,319` -> `1319`);
/// 5. drop an all-zero fractional part of a plain decimal (`18.00` -> `18`).
///
/// Number words are not mapped to digits.
pub fn normalize_answer(s: &str) -> String {
    let lower = s.trim().to_lowercase();
    let mut out = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    while let Some(c) = out.chars().last() {
        if matches!(c, '.' | ',' | ';' | ':' | '!' | '?') {
            out.pop();
            out.truncate(out.trim_end().len());
        } else {
            break;
        }
    }
    let chars: Vec<char> = out.chars().collect();
    let mut joined = String::with_capacity(out.len());
    for (i, &c) in chars.iter().enumerate() {
        let between_digits = c == ','
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if !between_digits {
            joined.push(c);
        }
    }
    if let Some((int, frac)) = joined.split_once('.') {
        let int_ok = !int.is_empty()
            && int.trim_start_matches('-').chars().all(|c| c.is_ascii_digit())
            && int != "-";
        if int_ok && !frac.is_empty() && frac.chars().all(|c| c == '0') {
            return int.to_string();
        }
    }
    joined
}

pub fn exact_match(pred: &str, gold: &str) -> u8 {
    u8::from(normalize_answer(pred) == normalize_answer(gold))
}

fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Mean exact match over aligned pairs.
pub fn accuracy<P: AsRef<str>, G: AsRef<str>>(preds: &[P], golds: &[G]) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    let hits: u32 = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| exact_match(p.as_ref(), g.as_ref()) as u32)
        .sum();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn from_labels(preds: &[bool], golds: &[bool]) -> Result<Self> {
        if preds.len() != golds.len() {
            return Err(Error::LengthMismatch {
                left: preds.len(),
                right: golds.len(),
            });
        }
        let mut c = Self::default();
        for (&p, &g) in preds.iter().zip(golds) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn matthews_corr(c: &ConfusionCounts) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    ((tp * tn - fp * fn_) / denom.sqrt()).clamp(-1.0, 1.0)
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateVariance);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn f1_from_counts(c: &ConfusionCounts) -> f64 {
    let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Binary F1 of the positive class.
pub fn f1_binary(preds: &[bool], golds: &[bool]) -> Result<f64> {
    Ok(f1_from_counts(&ConfusionCounts::from_labels(preds, golds)?))
}

/// Percentage increase of `t_method` over `t_text`.
pub fn overhead_pct(t_text: f64, t_method: f64) -> Result<f64> {
    if !(t_text > 0.0) {
        return Err(Error::NonpositiveBaseline(t_text));
    }
    Ok(100.0 * (t_method - t_text) / t_text)
}

/// Wall-clock totals of one subset under each input method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub subset: String,
    pub text: f64,
    pub peap: f64,
    pub peap_fast: f64,
}

impl TimingRecord {
    /// `(image overhead, pruned-image overhead)` in percent.
    pub fn overheads(&self) -> Result<(f64, f64)> {
        Ok((
            overhead_pct(self.text, self.peap)?,
            overhead_pct(self.text, self.peap_fast)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub per_example: Vec<f64>,
}

impl MetricReport {
    /// Mean of `per_example`.
    pub fn mean(metric: impl Into<String>, per_example: Vec<f64>) -> Self {
        let n = per_example.len();
        let value = if n == 0 {
            0.0
        } else {
            per_example.iter().sum::<f64>() / n as f64
        };
        Self {
            metric: metric.into(),
            value,
            n,
            per_example,
        }
    }
}
