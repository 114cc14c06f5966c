use serde::Serialize;

use crate::error::{Error, Result};

/// Confusion-matrix metrics with high as the positive class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfusionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    /// Metrics whose denominator was zero and that were set to 0.
    pub zero_division: Vec<String>,
}

/// The metric set reported for the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoreMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
}

impl ConfusionMetrics {
    pub fn core(&self) -> CoreMetrics {
        CoreMetrics {
            accuracy: self.accuracy,
            sensitivity: self.sensitivity,
            specificity: self.specificity,
            f1: self.f1,
        }
    }
}

pub fn confusion_metrics(predictions: &[bool], truths: &[bool]) -> Result<ConfusionMetrics> {
    if predictions.len() != truths.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Input("no predictions".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let mut flags = Vec::new();
    let mut ratio = |num: f64, den: f64, name: &str| {
        if den == 0.0 {
            flags.push(name.to_string());
            0.0
        } else {
            num / den
        }
    };
    let sensitivity = ratio(tp as f64, (tp + fn_) as f64, "sensitivity");
    let specificity = ratio(tn as f64, (tn + fp) as f64, "specificity");
    let precision = ratio(tp as f64, (tp + fp) as f64, "precision");
    let f1 = ratio(2.0 * precision * sensitivity, precision + sensitivity, "f1");
    let accuracy = (tp + tn) as f64 / predictions.len() as f64;
    Ok(ConfusionMetrics {
        tp,
        fp,
        tn,
        fn_,
        accuracy,
        sensitivity,
        specificity,
        precision,
        f1,
        zero_division: flags,
    })
}

/// Per-feature summary of fold importances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImportanceStat {
    /// 1-based feature (cluster) number.
    pub cluster: usize,
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub sd: f64,
    pub top4_freq: f64,
    pub top1_freq: f64,
    pub min: f64,
    pub max: f64,
}

/// Feature indices by decreasing importance, ties to the lower index.
pub fn ranking(importance: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    order
}

pub fn importance_stability(per_fold: &[Vec<f64>]) -> Result<Vec<ImportanceStat>> {
    if per_fold.len() < 2 {
        return Err(Error::Input(format!("{} folds; need at least 2", per_fold.len())));
    }
    let k = per_fold[0].len();
    if per_fold.iter().any(|f| f.len() != k) {
        return Err(Error::InvalidShape("fold importances differ in length".into()));
    }
    let folds = per_fold.len() as f64;
    let mut top4 = vec![0usize; k];
    let mut top1 = vec![0usize; k];
    for imp in per_fold {
        let order = ranking(imp);
        for &j in order.iter().take(4) {
            top4[j] += 1;
        }
        top1[order[0]] += 1;
    }
    Ok((0..k)
        .map(|j| {
            let vals: Vec<f64> = per_fold.iter().map(|f| f[j]).collect();
            let mean = vals.iter().sum::<f64>() / folds;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (folds - 1.0);
            ImportanceStat {
                cluster: j + 1,
                mean,
                sd: var.sqrt(),
                top4_freq: top4[j] as f64 / folds,
                top1_freq: top1[j] as f64 / folds,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

/// Most frequent set of the top `m` features across folds (sorted 0-based
/// indices) and the share of folds that rank exactly that set on top.
pub fn modal_top_set(per_fold: &[Vec<f64>], m: usize) -> Option<(Vec<usize>, f64)> {
    let mut sets: Vec<(Vec<usize>, usize)> = Vec::new();
    for imp in per_fold {
        let mut top: Vec<usize> = ranking(imp).into_iter().take(m).collect();
        top.sort_unstable();
        match sets.iter_mut().find(|(s, _)| *s == top) {
            Some((_, c)) => *c += 1,
            None => sets.push((top, 1)),
        }
    }
    let best = sets.iter().map(|(_, c)| *c).max()?;
    let (set, count) = sets.into_iter().find(|(_, c)| *c == best)?;
    Some((set, count as f64 / per_fold.len() as f64))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(tp: usize, fn_: usize, tn: usize, fp: usize) -> (Vec<bool>, Vec<bool>) {
        let mut p = Vec::new();
        let mut t = Vec::new();
        for (n, pv, tv) in [(tp, true, true), (fn_, false, true), (tn, false, false), (fp, true, false)] {
            p.extend(std::iter::repeat_n(pv, n));
            t.extend(std::iter::repeat_n(tv, n));
        }
        (p, t)
    }

    #[test]
    fn worked_confusion_example() {
        let (p, t) = labels(7, 2, 3, 2);
        let m = confusion_metrics(&p, &t).unwrap();
        assert!((m.sensitivity - 7.0 / 9.0).abs() < 1e-12);
        assert!((m.specificity - 0.6).abs() < 1e-12);
        assert!((m.accuracy - 10.0 / 14.0).abs() < 1e-12);
        assert!((m.f1 - 7.0 / 9.0).abs() < 1e-12);
        assert!(m.zero_division.is_empty());
    }

    #[test]
    fn all_correct_and_degenerate() {
        let (p, t) = labels(3, 0, 4, 0);
        let m = confusion_metrics(&p, &t).unwrap();
        assert_eq!(m.core(), CoreMetrics { accuracy: 1.0, sensitivity: 1.0, specificity: 1.0, f1: 1.0 });
        let (p, t) = labels(0, 0, 5, 0);
        let m = confusion_metrics(&p, &t).unwrap();
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.zero_division, ["sensitivity", "precision", "f1"]);
        assert!(confusion_metrics(&[true], &[true, false]).is_err());
    }

    #[test]
    fn stability_of_identical_and_dominant() {
        let folds = vec![vec![0.1, 0.5, 0.2, 0.05, 0.15]; 6];
        let s = importance_stability(&folds).unwrap();
        assert!(s.iter().all(|r| r.sd < 1e-15 && (r.top4_freq == 0.0 || r.top4_freq == 1.0)));
        assert_eq!(s[1].top1_freq, 1.0);
        assert_eq!(s[3].top4_freq, 0.0);
        assert_eq!(modal_top_set(&folds, 2), Some((vec![1, 2], 1.0)));
    }

    #[test]
    fn random_importances_spread_top4_evenly() {
        use rand::Rng;
        let mut rng = crate::seed::rng(5);
        let folds: Vec<Vec<f64>> = (0..20_000).map(|_| (0..10).map(|_| rng.random()).collect()).collect();
        for s in importance_stability(&folds).unwrap() {
            assert!((s.top4_freq - 0.4).abs() < 0.02, "{}", s.top4_freq);
        }
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        let r = spearman(&[0.0, 0.0, 1.0, 1.0], &[0.1, 0.3, 0.2, 0.9]).unwrap();
        // tied ranks 1.5,1.5,3.5,3.5 against 1,3,2,4
        assert!((r - 2.0 / 20f64.sqrt()).abs() < 1e-12);
    }
}
