//! Confusion-matrix metrics for the fixed evaluation protocol.
//!
//! The matrix has one row per gold class and one column per predicted class,
//! plus a final overflow column for responses no label could be extracted
//! from. Overflow counts as wrong everywhere: it contributes to a class's
//! support but never to its true positives.

use serde::{Deserialize, Serialize};

use crate::model::{LabelId, TaskKind};

/// K x (K+1) count matrix; rows are gold labels, the last column collects
/// unparseable predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    rows: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, rows: vec![vec![0; k + 1]; k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn record(&mut self, gold: LabelId, predicted: Option<LabelId>) -> Result<(), MetricsError> {
        let row = gold as usize;
        if row >= self.k {
            return Err(MetricsError::LabelOutOfRange { label: gold, k: self.k });
        }
        let col = match predicted {
            Some(p) if (p as usize) < self.k => p as usize,
            Some(p) => return Err(MetricsError::LabelOutOfRange { label: p, k: self.k }),
            None => self.k,
        };
        self.rows[row][col] += 1;
        Ok(())
    }

    pub fn n(&self) -> u64 {
        self.rows.iter().flatten().sum()
    }

    /// Total responses in the overflow column.
    pub fn unparseable(&self) -> u64 {
        self.rows.iter().map(|r| r[self.k]).sum()
    }

    pub fn get(&self, gold: usize, col: usize) -> u64 {
        self.rows[gold][col]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    fn support(&self, class: usize) -> u64 {
        self.rows[class].iter().sum()
    }

    fn predicted_total(&self, class: usize) -> u64 {
        self.rows.iter().map(|r| r[class]).sum()
    }

    /// Per-class F1 with the zero-denominator convention: any of P, R, or
    /// P+R being zero yields 0 for that factor or the F1 itself.
    fn per_class_f1(&self, class: usize) -> f64 {
        let tp = self.rows[class][class] as f64;
        let pred = self.predicted_total(class) as f64;
        let sup = self.support(class) as f64;
        let precision = if pred > 0.0 { tp / pred } else { 0.0 };
        let recall = if sup > 0.0 { tp / sup } else { 0.0 };
        if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot compute metrics over zero evaluated samples")]
    EmptyEval,
    #[error("label {label} does not fit a confusion matrix over {k} classes")]
    LabelOutOfRange { label: LabelId, k: usize },
}

pub fn accuracy(m: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let n = m.n();
    if n == 0 {
        return Err(MetricsError::EmptyEval);
    }
    let trace: u64 = (0..m.k()).map(|c| m.get(c, c)).sum();
    Ok(trace as f64 / n as f64)
}

/// Unweighted mean of per-class F1 over all K classes.
pub fn macro_f1(m: &ConfusionMatrix) -> Result<f64, MetricsError> {
    if m.n() == 0 {
        return Err(MetricsError::EmptyEval);
    }
    let sum: f64 = (0..m.k()).map(|c| m.per_class_f1(c)).sum();
    Ok(sum / m.k() as f64)
}

/// Support-weighted mean of per-class F1. Computed as a normalized weighted
/// mean (weighted sum over weight sum) so a perfect predictor scores exactly
/// 1.0 for any class count.
pub fn weighted_f1(m: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let n = m.n();
    if n == 0 {
        return Err(MetricsError::EmptyEval);
    }
    let mut weighted_sum = 0.0;
    let mut weight_total = 0.0;
    for c in 0..m.k() {
        let w = m.support(c) as f64 / n as f64;
        weighted_sum += m.per_class_f1(c) * w;
        weight_total += w;
    }
    Ok(weighted_sum / weight_total)
}

/// Metrics for one task on one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: TaskKind,
    pub n: u64,
    pub n_unparseable: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub confusion: ConfusionMatrix,
}

impl EvalResult {
    pub fn from_confusion(task: TaskKind, confusion: ConfusionMatrix) -> Result<Self, MetricsError> {
        Ok(Self {
            task,
            n: confusion.n(),
            n_unparseable: confusion.unparseable(),
            accuracy: accuracy(&confusion)?,
            macro_f1: macro_f1(&confusion)?,
            weighted_f1: weighted_f1(&confusion)?,
            confusion,
        })
    }
}

/// An eval result tagged with the endpoint it measured; the unit rendered
/// and persisted by the reporting layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEvalResult {
    pub endpoint: String,
    #[serde(flatten)]
    pub result: EvalResult,
}

/// Aligned text table, one row per (endpoint, task), sorted by endpoint
/// then task so repeated runs diff cleanly.
pub fn render_report(results: &[LabeledEvalResult]) -> String {
    let mut sorted: Vec<&LabeledEvalResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        (a.endpoint.as_str(), a.result.task.as_str())
            .cmp(&(b.endpoint.as_str(), b.result.task.as_str()))
    });

    let task_w = sorted
        .iter()
        .map(|r| r.result.task.as_str().len())
        .chain(["task".len()])
        .max()
        .unwrap_or(4);
    let ep_w = sorted
        .iter()
        .map(|r| r.endpoint.len())
        .chain(["endpoint".len()])
        .max()
        .unwrap_or(8);

    let mut out = String::new();
    out.push_str(&format!(
        "{:<task_w$}  {:<ep_w$}  {:>6}  {:>6}  {:>8}  {:>11}\n",
        "task", "endpoint", "n", "acc", "macro-f1", "weighted-f1"
    ));
    for r in sorted {
        out.push_str(&format!(
            "{:<task_w$}  {:<ep_w$}  {:>6}  {:>6.4}  {:>8.4}  {:>11.4}\n",
            r.result.task.as_str(),
            r.endpoint,
            r.result.n,
            r.result.accuracy,
            r.result.macro_f1,
            r.result.weighted_f1
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const TOL: f64 = 1e-12;

    fn matrix_from(golds: &[LabelId], preds: &[Option<LabelId>], k: usize) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::new(k);
        for (&g, &p) in golds.iter().zip(preds) {
            m.record(g, p).unwrap();
        }
        m
    }

    /// Independent reference: recompute every quantity from the raw label
    /// vectors without touching the matrix.
    fn oracle(golds: &[LabelId], preds: &[Option<LabelId>], k: usize) -> (f64, f64, f64) {
        let n = golds.len() as f64;
        let correct = golds.iter().zip(preds).filter(|&(g, p)| *p == Some(*g)).count() as f64;
        let mut f1s = Vec::new();
        let mut supports = Vec::new();
        for c in 0..k as LabelId {
            let tp = golds
                .iter()
                .zip(preds)
                .filter(|&(g, p)| *g == c && *p == Some(c))
                .count() as f64;
            let pred_c = preds.iter().filter(|&&p| p == Some(c)).count() as f64;
            let sup = golds.iter().filter(|&&g| g == c).count() as f64;
            let precision = if pred_c > 0.0 { tp / pred_c } else { 0.0 };
            let recall = if sup > 0.0 { tp / sup } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            f1s.push(f1);
            supports.push(sup);
        }
        let macro_v = f1s.iter().sum::<f64>() / k as f64;
        let weighted_v = f1s.iter().zip(&supports).map(|(f, s)| f * s / n).sum::<f64>();
        (correct / n, macro_v, weighted_v)
    }

    #[test]
    fn perfect_predictions_score_one() {
        let golds = [0, 1, 2, 3, 4, 5, 6];
        let preds: Vec<_> = golds.iter().map(|&g| Some(g)).collect();
        let m = matrix_from(&golds, &preds, 7);
        assert_eq!(accuracy(&m).unwrap(), 1.0);
        assert_eq!(macro_f1(&m).unwrap(), 1.0);
        assert_eq!(weighted_f1(&m).unwrap(), 1.0);
    }

    #[test]
    fn balanced_binary_degenerate_predictor() {
        let golds = [0, 0, 1, 1];
        let preds = [Some(0), Some(0), Some(0), Some(0)];
        let m = matrix_from(&golds, &preds, 2);
        assert_eq!(accuracy(&m).unwrap(), 0.5);
        assert!((macro_f1(&m).unwrap() - 1.0 / 3.0).abs() < TOL);
        assert!((weighted_f1(&m).unwrap() - 1.0 / 3.0).abs() < TOL);
    }

    #[test]
    fn skewed_binary_degenerate_predictor() {
        let golds = [0, 0, 0, 1];
        let preds = [Some(0), Some(0), Some(0), Some(0)];
        let m = matrix_from(&golds, &preds, 2);
        assert_eq!(accuracy(&m).unwrap(), 0.75);
        assert!((macro_f1(&m).unwrap() - 3.0 / 7.0).abs() < TOL);
        assert!((weighted_f1(&m).unwrap() - 9.0 / 14.0).abs() < TOL);
    }

    #[test]
    fn unparseable_counts_as_wrong() {
        let golds = [0, 1, 1];
        let preds = [None, None, None];
        let m = matrix_from(&golds, &preds, 2);
        assert_eq!(m.unparseable(), 3);
        assert_eq!(accuracy(&m).unwrap(), 0.0);
        assert_eq!(macro_f1(&m).unwrap(), 0.0);
        let result = EvalResult::from_confusion(TaskKind::Sentiment, m).unwrap();
        assert_eq!(result.n, 3);
        assert_eq!(result.n_unparseable, 3);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let m = ConfusionMatrix::new(2);
        assert_eq!(accuracy(&m), Err(MetricsError::EmptyEval));
        assert_eq!(macro_f1(&m), Err(MetricsError::EmptyEval));
        assert_eq!(weighted_f1(&m), Err(MetricsError::EmptyEval));
    }

    #[test]
    fn out_of_range_labels_are_rejected() {
        let mut m = ConfusionMatrix::new(2);
        assert_eq!(m.record(2, Some(0)), Err(MetricsError::LabelOutOfRange { label: 2, k: 2 }));
        assert_eq!(m.record(0, Some(5)), Err(MetricsError::LabelOutOfRange { label: 5, k: 2 }));
    }

    #[test]
    fn metrics_match_brute_force_oracle_on_random_vectors() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..200 {
            let k = rng.random_range(2..=7usize);
            let n = rng.random_range(1..60usize);
            let golds: Vec<LabelId> = (0..n).map(|_| rng.random_range(0..k) as LabelId).collect();
            let preds: Vec<Option<LabelId>> = (0..n)
                .map(|_| {
                    if rng.random_range(0..10) == 0 {
                        None
                    } else {
                        Some(rng.random_range(0..k) as LabelId)
                    }
                })
                .collect();
            let m = matrix_from(&golds, &preds, k);
            let (acc_o, macro_o, weighted_o) = oracle(&golds, &preds, k);
            assert!((accuracy(&m).unwrap() - acc_o).abs() < 1e-9);
            assert!((macro_f1(&m).unwrap() - macro_o).abs() < 1e-9);
            assert!((weighted_f1(&m).unwrap() - weighted_o).abs() < 1e-9);
        }
    }

    #[test]
    fn macro_f1_is_permutation_invariant() {
        let mut rng = StdRng::seed_from_u64(43);
        for _ in 0..50 {
            let k = rng.random_range(2..=6usize);
            let n = rng.random_range(4..50usize);
            let golds: Vec<LabelId> = (0..n).map(|_| rng.random_range(0..k) as LabelId).collect();
            let preds: Vec<Option<LabelId>> =
                (0..n).map(|_| Some(rng.random_range(0..k) as LabelId)).collect();

            let mut perm: Vec<LabelId> = (0..k as LabelId).collect();
            for i in (1..k).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let golds_p: Vec<LabelId> = golds.iter().map(|&g| perm[g as usize]).collect();
            let preds_p: Vec<Option<LabelId>> =
                preds.iter().map(|p| p.map(|v| perm[v as usize])).collect();

            let a = macro_f1(&matrix_from(&golds, &preds, k)).unwrap();
            let b = macro_f1(&matrix_from(&golds_p, &preds_p, k)).unwrap();
            assert!((a - b).abs() < TOL);
        }
    }

    #[test]
    fn balanced_binary_weighted_equals_macro_exactly() {
        let mut rng = StdRng::seed_from_u64(47);
        for _ in 0..50 {
            let s = rng.random_range(1..20usize);
            let mut golds = vec![0 as LabelId; s];
            golds.extend(std::iter::repeat_n(1 as LabelId, s));
            let preds: Vec<Option<LabelId>> =
                (0..2 * s).map(|_| Some(rng.random_range(0..2) as LabelId)).collect();
            let m = matrix_from(&golds, &preds, 2);
            assert_eq!(weighted_f1(&m).unwrap(), macro_f1(&m).unwrap());
        }
    }

    #[test]
    fn render_report_rows_and_ordering() {
        let result = |task, endpoint: &str| {
            let m = matrix_from(&[0, 1], &[Some(0), Some(1)], 2);
            LabeledEvalResult {
                endpoint: endpoint.to_string(),
                result: EvalResult::from_confusion(task, m).unwrap(),
            }
        };

        let empty = render_report(&[]);
        assert_eq!(empty.lines().count(), 1);
        assert!(empty.contains("weighted-f1"));

        let one = render_report(&[result(TaskKind::Humor, "http://a")]);
        assert_eq!(one.lines().count(), 2);
        assert!(one.contains("humor"));
        assert!(one.contains("1.0000"));

        let two = render_report(&[
            result(TaskKind::Humor, "http://b"),
            result(TaskKind::Humor, "http://a"),
        ]);
        let lines: Vec<&str> = two.lines().collect();
        assert!(lines[1].contains("http://a"));
        assert!(lines[2].contains("http://b"));
    }

    #[test]
    fn eval_result_serde_round_trip() {
        let m = matrix_from(&[0, 0, 1, 1], &[Some(0), None, Some(1), Some(0)], 2);
        let labeled = LabeledEvalResult {
            endpoint: "http://x".to_string(),
            result: EvalResult::from_confusion(TaskKind::Sarcasm, m).unwrap(),
        };
        let json = serde_json::to_string(&labeled).unwrap();
        let back: LabeledEvalResult = serde_json::from_str(&json).unwrap();
        assert_eq!(labeled, back);
        assert!(json.contains("\"endpoint\""));
        assert!(json.contains("\"task\":\"sarcasm\""));
    }
}
