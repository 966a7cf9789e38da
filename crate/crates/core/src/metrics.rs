//! Evaluation metrics and percentile-bootstrap confidence intervals.
//!
//! Cells that would divide by zero evaluate to `0` and carry a `degenerate`
//! flag, so macro averages stay defined.
//!
//! Bootstrap replicates use ChaCha8 seeded from a 64-bit seed, with the
//! replicate index selecting the ChaCha stream. Every replicate therefore has
//! its own generator and intervals do not depend on thread scheduling.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::label_file::{LabelRow, ScoreRow};
use crate::labels::LabelClass;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("predicted has {predicted} items but truth has {truth}")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("no samples")]
    EmptyInput,
    #[error("AUC needs both classes present in the truth")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("bootstrap needs at least 2 samples and 1 replicate")]
    TooFewSamples,
    #[error("study sets differ: {} missing from auto, {} extra in auto", missing.len(), extra.len())]
    KeyMismatch { missing: Vec<String>, extra: Vec<String> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub r#fn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.r#fn
    }

    pub fn accuracy(&self) -> Ratio {
        Ratio::of(self.tp + self.tn, self.total())
    }
}

pub fn confusion(predicted: &[bool], truth: &[bool]) -> Result<ConfusionCounts, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.r#fn += 1,
        }
    }
    Ok(c)
}

/// A metric value, or 0 with `degenerate` set when its denominator was zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Ratio {
    pub value: f64,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl Ratio {
    fn of(num: u64, den: u64) -> Ratio {
        if den == 0 {
            Ratio {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Ratio {
                value: num as f64 / den as f64,
                degenerate: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf1 {
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

pub fn prf1(c: &ConfusionCounts) -> Prf1 {
    let precision = Ratio::of(c.tp, c.tp + c.fp);
    let recall = Ratio::of(c.tp, c.tp + c.r#fn);
    let sum = precision.value + recall.value;
    let f1 = if precision.degenerate || recall.degenerate || sum == 0.0 {
        Ratio {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Ratio {
            value: 2.0 * precision.value * recall.value / sum,
            degenerate: false,
        }
    };
    Prf1 {
        precision,
        recall,
        f1,
    }
}

/// `(sensitivity, specificity)`.
pub fn sens_spec(c: &ConfusionCounts) -> (Ratio, Ratio) {
    (Ratio::of(c.tp, c.tp + c.r#fn), Ratio::of(c.tn, c.tn + c.fp))
}

/// Area under the ROC curve via the Mann–Whitney rank statistic, with
/// midranks for tied scores.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: scores.len(),
            truth: truth.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tie group i..=j shares their mean.
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j].iter().filter(|&&k| truth[k]).count();
        pos_rank_sum += midrank * positives as f64;
        i = j + 1;
    }
    let n_pos = n_pos as f64;
    Ok((pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

/// Unweighted mean over classes.
pub fn macro_average<K>(values: &BTreeMap<K, f64>) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(values.values().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Percentile of sorted data with linear interpolation between order
/// statistics (position `q·(m−1)`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Generator for bootstrap replicate `replicate` under `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// The statistic evaluated on each of `replicates` resamples (with
/// replacement, `n` draws each), in replicate order.
pub fn bootstrap_distribution<T, F>(
    samples: &[T],
    statistic: F,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>, MetricsError>
where
    T: Sync,
    F: Fn(&[&T]) -> f64 + Sync,
{
    let n = samples.len();
    if n < 2 || replicates == 0 {
        return Err(MetricsError::TooFewSamples);
    }
    Ok((0..replicates as u64)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |buf: &mut Vec<&T>, r| {
                let mut rng = replicate_rng(seed, r);
                buf.clear();
                buf.extend((0..n).map(|_| &samples[rng.random_range(0..n)]));
                statistic(buf)
            },
        )
        .collect())
}

/// 95% percentile-bootstrap interval: the 2.5th and 97.5th percentiles of
/// the replicate statistics.
pub fn bootstrap_ci<T, F>(
    samples: &[T],
    statistic: F,
    replicates: usize,
    seed: u64,
) -> Result<Interval, MetricsError>
where
    T: Sync,
    F: Fn(&[&T]) -> f64 + Sync,
{
    let mut dist = bootstrap_distribution(samples, statistic, replicates, seed)?;
    dist.sort_by(f64::total_cmp);
    Ok(Interval {
        lo: percentile(&dist, 0.025),
        hi: percentile(&dist, 0.975),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: LabelClass,
    pub counts: ConfusionCounts,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
    pub specificity: Ratio,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

impl ClassMetrics {
    pub fn from_counts(class: LabelClass, counts: ConfusionCounts) -> ClassMetrics {
        let p = prf1(&counts);
        let (_, specificity) = sens_spec(&counts);
        ClassMetrics {
            class,
            counts,
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
            specificity,
            auc: None,
        }
    }

    pub fn sensitivity(&self) -> Ratio {
        self.recall
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n: usize,
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    /// Metric name (e.g. `f1.pleura`, `f1.macro`) → 95% interval.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub ci: BTreeMap<String, Interval>,
}

impl MetricsReport {
    pub fn class(&self, class: LabelClass) -> &ClassMetrics {
        &self.per_class[class.index()]
    }

    /// A fixed-width text table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<11} {:>6} {:>6} {:>6} {:>6} {:>9} {:>9} {:>9} {:>9} {:>7}\n",
            "class", "TP", "FP", "TN", "FN", "precision", "recall", "f1", "spec", "auc"
        );
        for m in &self.per_class {
            let c = m.counts;
            out.push_str(&format!(
                "{:<11} {:>6} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>7}\n",
                m.class.as_str(),
                c.tp,
                c.fp,
                c.tn,
                c.r#fn,
                m.precision.value,
                m.recall.value,
                m.f1.value,
                m.specificity.value,
                m.auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into()),
            ));
        }
        let a = &self.macro_avg;
        out.push_str(&format!(
            "{:<11} {:>6} {:>6} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>7}\n",
            "macro",
            "",
            "",
            "",
            "",
            a.precision,
            a.recall,
            a.f1,
            a.specificity,
            a.auc.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()),
        ));
        for (name, iv) in &self.ci {
            out.push_str(&format!("95% CI {name}: [{:.4}, {:.4}]\n", iv.lo, iv.hi));
        }
        out
    }
}

/// Build a report from per-class confusion counts (in canonical class order).
pub fn report_from_counts(counts: [ConfusionCounts; 5]) -> MetricsReport {
    let per_class: Vec<ClassMetrics> = LabelClass::ALL
        .into_iter()
        .zip(counts)
        .map(|(class, c)| ClassMetrics::from_counts(class, c))
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().map(f).sum::<f64>() / per_class.len() as f64
    };
    let macro_avg = MacroMetrics {
        precision: mean(|m| m.precision.value),
        recall: mean(|m| m.recall.value),
        f1: mean(|m| m.f1.value),
        specificity: mean(|m| m.specificity.value),
        auc: None,
    };
    MetricsReport {
        n: counts.first().map(|c| c.total() as usize).unwrap_or(0),
        per_class,
        macro_avg,
        ci: BTreeMap::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapSettings {
    pub replicates: usize,
    pub seed: u64,
}

/// (predicted, truth) bits for one study.
type Pair = ([bool; 5], [bool; 5]);

fn counts_of(pairs: &[&Pair]) -> [ConfusionCounts; 5] {
    let mut counts = [ConfusionCounts::default(); 5];
    for (pred, truth) in pairs {
        for k in 0..5 {
            let c = &mut counts[k];
            match (pred[k], truth[k]) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.r#fn += 1,
            }
        }
    }
    counts
}

/// Compare automatic labels against ground truth, keyed by study uid.
///
/// With `scores`, per-class AUC is computed against the truth. With
/// `bootstrap`, 95% intervals are added for each class F1 and the macro F1,
/// resampling whole studies.
pub fn evaluate_labeler(
    auto: &[LabelRow],
    truth: &[LabelRow],
    scores: Option<&[ScoreRow]>,
    bootstrap: Option<BootstrapSettings>,
) -> Result<MetricsReport, MetricsError> {
    let auto_by: HashMap<&str, &LabelRow> = auto.iter().map(|r| (r.study_uid.as_str(), r)).collect();
    let truth_by: HashMap<&str, &LabelRow> = truth.iter().map(|r| (r.study_uid.as_str(), r)).collect();
    let mut missing: Vec<String> = truth_by
        .keys()
        .filter(|k| !auto_by.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    let mut extra: Vec<String> = auto_by
        .keys()
        .filter(|k| !truth_by.contains_key(*k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        missing.sort();
        extra.sort();
        return Err(MetricsError::KeyMismatch { missing, extra });
    }
    if truth_by.is_empty() {
        return Err(MetricsError::EmptyInput);
    }

    let mut uids: Vec<&str> = truth_by.keys().copied().collect();
    uids.sort_unstable();
    let pairs: Vec<Pair> = uids
        .iter()
        .map(|u| (auto_by[u].flags.0, truth_by[u].flags.0))
        .collect();
    let refs: Vec<&Pair> = pairs.iter().collect();
    let mut report = report_from_counts(counts_of(&refs));

    if let Some(scores) = scores {
        let score_by: HashMap<&str, &ScoreRow> =
            scores.iter().map(|r| (r.study_uid.as_str(), r)).collect();
        let missing: Vec<String> = uids
            .iter()
            .filter(|u| !score_by.contains_key(*u))
            .map(|u| u.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(MetricsError::KeyMismatch {
                missing,
                extra: Vec::new(),
            });
        }
        let mut aucs = Vec::new();
        for class in LabelClass::ALL {
            let s: Vec<f64> = uids.iter().map(|u| score_by[u].scores[class.index()]).collect();
            let t: Vec<bool> = pairs.iter().map(|(_, t)| t[class.index()]).collect();
            // A class absent from the truth has no AUC.
            let a = match auc(&s, &t) {
                Ok(a) => Some(a),
                Err(MetricsError::SingleClass) => None,
                Err(e) => return Err(e),
            };
            report.per_class[class.index()].auc = a;
            aucs.extend(a);
        }
        if !aucs.is_empty() {
            report.macro_avg.auc = Some(aucs.iter().sum::<f64>() / aucs.len() as f64);
        }
    }

    if let Some(b) = bootstrap {
        for class in LabelClass::ALL {
            let k = class.index();
            let iv = bootstrap_ci(
                &pairs,
                |s: &[&Pair]| prf1(&counts_of(s)[k]).f1.value,
                b.replicates,
                b.seed,
            )?;
            report.ci.insert(format!("f1.{class}"), iv);
        }
        let iv = bootstrap_ci(
            &pairs,
            |s: &[&Pair]| {
                let c = counts_of(s);
                c.iter().map(|c| prf1(c).f1.value).sum::<f64>() / 5.0
            },
            b.replicates,
            b.seed,
        )?;
        report.ci.insert("f1.macro".into(), iv);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{Flags, LabelSource};
    use proptest::prelude::*;

    fn cc(tp: u64, fp: u64, tn: u64, r#fn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, tn, r#fn }
    }

    #[test]
    fn confusion_basics() {
        assert_eq!(confusion(&[true, false], &[true, false]).unwrap(), cc(1, 0, 1, 0));
        assert_eq!(confusion(&[true], &[false]).unwrap(), cc(0, 1, 0, 0));
        assert!(matches!(confusion(&[true], &[]), Err(MetricsError::LengthMismatch { .. })));
        assert_eq!(confusion(&[], &[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn prf1_printed_rows() {
        let p = prf1(&cc(67, 1, 2933, 0));
        assert!((p.precision.value - 0.9853).abs() <= 5e-5);
        assert_eq!(p.recall.value, 1.0);
        assert!((p.f1.value - 0.9926).abs() <= 5e-5);

        let p = prf1(&cc(652, 1, 2347, 1));
        for v in [p.precision, p.recall, p.f1] {
            assert!((v.value - 0.9985).abs() <= 5e-5);
        }
    }

    #[test]
    fn prf1_degenerate() {
        let p = prf1(&cc(0, 0, 10, 0));
        assert!(p.precision.degenerate && p.recall.degenerate && p.f1.degenerate);
        assert_eq!((p.precision.value, p.recall.value, p.f1.value), (0.0, 0.0, 0.0));
        // tp = 0 with fp, fn > 0: defined precision/recall of 0, degenerate F1.
        let p = prf1(&cc(0, 2, 5, 3));
        assert!(!p.precision.degenerate && p.f1.degenerate);
    }

    #[test]
    fn sens_spec_cases() {
        let (sens, spec) = sens_spec(&cc(71, 0, 2930, 0));
        assert_eq!((sens.value, spec.value), (1.0, 1.0));
        let (_, spec) = sens_spec(&cc(3, 5, 0, 1));
        assert_eq!(spec.value, 0.0);
        assert!(!spec.degenerate);
        let (_, spec) = sens_spec(&cc(3, 0, 0, 1));
        assert!(spec.degenerate);
    }

    proptest! {
        #[test]
        fn recall_equals_sensitivity(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, r#fn in 0u64..500) {
            let c = cc(tp, fp, tn, r#fn);
            prop_assert_eq!(prf1(&c).recall, sens_spec(&c).0);
        }

        #[test]
        fn specificity_formula(tp in 0u64..500, fp in 0u64..500, tn in 1u64..500, r#fn in 0u64..500) {
            let (_, spec) = sens_spec(&cc(tp, fp, tn, r#fn));
            prop_assert_eq!(spec.value, tn as f64 / (tn + fp) as f64);
        }
    }

    #[test]
    fn auc_edge_cases() {
        let truth = [false, false, true, true];
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &truth).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &truth).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 4], &truth).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(MetricsError::SingleClass));
        assert_eq!(auc(&[0.1, f64::NAN], &[true, false]), Err(MetricsError::NonFiniteScore(1)));
    }

    #[test]
    fn macro_average_cases() {
        let m: BTreeMap<&str, f64> = [("a", 1.0), ("b", 0.0)].into();
        assert_eq!(macro_average(&m).unwrap(), 0.5);
        let one: BTreeMap<&str, f64> = [("a", 0.7)].into();
        assert_eq!(macro_average(&one).unwrap(), 0.7);
        assert_eq!(macro_average::<&str>(&BTreeMap::new()), Err(MetricsError::EmptyInput));
        let f1s: BTreeMap<usize, f64> = [1.0, 0.9926, 0.9985, 1.0, 1.0].into_iter().enumerate().collect();
        assert!((macro_average(&f1s).unwrap() - 0.99822).abs() <= 1e-4);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.1), 1.4);
        assert_eq!(percentile(&[7.0], 0.975), 7.0);
    }

    #[test]
    fn bootstrap_constant_and_determinism() {
        let data: Vec<f64> = (0..50).map(f64::from).collect();
        let iv = bootstrap_ci(&data, |_| 3.0, 200, 1).unwrap();
        assert_eq!((iv.lo, iv.hi), (3.0, 3.0));

        let mean = |s: &[&f64]| s.iter().copied().sum::<f64>() / s.len() as f64;
        let a = bootstrap_ci(&data, mean, 300, 42).unwrap();
        let b = bootstrap_ci(&data, mean, 300, 42).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_ci(&data, mean, 300, 43).unwrap();
        assert_ne!(a, c);
        assert!(a.lo <= a.hi);
        assert_eq!(bootstrap_ci(&data[..1], mean, 10, 1), Err(MetricsError::TooFewSamples));
        assert_eq!(bootstrap_ci(&data, mean, 0, 1), Err(MetricsError::TooFewSamples));
    }

    fn row(uid: &str, bits: [u8; 5]) -> LabelRow {
        LabelRow {
            study_uid: uid.into(),
            flags: Flags::from_bits(bits),
            source: LabelSource::Keyword,
        }
    }

    #[test]
    fn evaluate_identical_files_is_perfect() {
        let rows = vec![row("a", [1, 0, 0, 0, 1]), row("b", [0, 1, 1, 1, 1]), row("c", [0; 5])];
        let rep = evaluate_labeler(&rows, &rows, None, None).unwrap();
        for m in &rep.per_class {
            assert_eq!(m.f1.value, 1.0);
            assert_eq!(m.specificity.value, 1.0);
        }
        assert_eq!(rep.macro_avg.f1, 1.0);
    }

    #[test]
    fn evaluate_key_mismatch() {
        let a = vec![row("a", [0; 5]), row("x", [0; 5])];
        let t = vec![row("a", [0; 5]), row("b", [0; 5])];
        match evaluate_labeler(&a, &t, None, None) {
            Err(MetricsError::KeyMismatch { missing, extra }) => {
                assert_eq!(missing, vec!["b"]);
                assert_eq!(extra, vec!["x"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn evaluate_with_scores_and_bootstrap() {
        let truth: Vec<LabelRow> = (0..40)
            .map(|i| row(&format!("u{i:02}"), if i % 3 == 0 { [0, 0, 1, 0, 1] } else { [0; 5] }))
            .collect();
        let scores: Vec<ScoreRow> = truth
            .iter()
            .map(|r| ScoreRow {
                study_uid: r.study_uid.clone(),
                scores: r.flags.0.map(|b| if b { 0.9 } else { 0.1 }),
            })
            .collect();
        let rep = evaluate_labeler(
            &truth,
            &truth,
            Some(&scores),
            Some(BootstrapSettings { replicates: 100, seed: 5 }),
        )
        .unwrap();
        assert_eq!(rep.class(LabelClass::Parenchyma).auc, Some(1.0));
        assert_eq!(rep.class(LabelClass::Pleura).auc, None);
        assert_eq!(rep.ci["f1.parenchyma"], Interval { lo: 1.0, hi: 1.0 });
        assert!(rep.ci.contains_key("f1.macro"));
        assert!(rep.to_table().contains("parenchyma"));
    }
}
