//! Inter-grader agreement and accuracy ratios.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("confusion matrix must be square and non-empty")]
    NotSquare,
    #[error("confusion matrix has no counts")]
    EmptyMatrix,
    #[error("chance agreement is 1; kappa is undefined")]
    DegenerateChance,
    #[error("denominator is zero")]
    ZeroDenominator,
    #[error("fraction {0} is outside [0, 1]")]
    BadFraction(f64),
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

/// Rows are grader 1, columns grader 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let k = labels.len();
        if k == 0 || counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(MetricsError::NotSquare);
        }
        Ok(Self { labels, counts })
    }

    /// Unlabelled matrix; classes are named by index.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let labels = (0..counts.len()).map(|i| i.to_string()).collect();
        Self::new(labels, counts)
    }

    /// CSV with a header row of labels (first cell ignored) and one row per
    /// class: label followed by counts.
    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(MetricsError::EmptyMatrix)?;
        let labels: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
        let mut counts = Vec::new();
        for (i, line) in lines {
            let mut cells = line.split(',').map(str::trim);
            let label = cells.next().unwrap_or_default();
            if label != labels.get(counts.len()).map(String::as_str).unwrap_or_default() {
                return Err(MetricsError::Csv {
                    line: i + 1,
                    msg: format!("row label {label:?} does not match header"),
                });
            }
            let row = cells
                .map(|c| c.parse::<u64>().map_err(|e| MetricsError::Csv { line: i + 1, msg: format!("{c:?}: {e}") }))
                .collect::<Result<Vec<_>, _>>()?;
            counts.push(row);
        }
        Self::new(labels, counts)
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.size()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgreementStats {
    /// observed agreement
    pub p: f64,
    /// chance agreement
    pub q: f64,
    pub kappa: f64,
}

impl AgreementStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

/// Unweighted Cohen's kappa `(p - q) / (1 - q)`.
pub fn cohen_kappa(m: &ConfusionMatrix) -> Result<AgreementStats, MetricsError> {
    let total = m.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    // exact integer sums before dividing
    let chance: u128 = m.row_sums().iter().zip(m.col_sums()).map(|(&r, c)| r as u128 * c as u128).sum();
    let t2 = total as u128 * total as u128;
    if chance == t2 {
        return Err(MetricsError::DegenerateChance);
    }
    let p = m.trace() as f64 / total as f64;
    let q = chance as f64 / t2 as f64;
    Ok(AgreementStats { p, q, kappa: (p - q) / (1.0 - q) })
}

pub fn accuracy(m: &ConfusionMatrix) -> Result<f64, MetricsError> {
    match m.total() {
        0 => Err(MetricsError::EmptyMatrix),
        t => Ok(m.trace() as f64 / t as f64),
    }
}

/// Share of the full-model accuracy reached from the vasculature alone.
/// Values above 1 are returned as is.
pub fn attribution_ratio(acc_vascular: f64, acc_full: f64) -> Result<f64, MetricsError> {
    if acc_full == 0.0 {
        return Err(MetricsError::ZeroDenominator);
    }
    for a in [acc_vascular, acc_full] {
        if !(0.0..=1.0).contains(&a) {
            return Err(MetricsError::BadFraction(a));
        }
    }
    Ok(acc_vascular / acc_full)
}

/// Round to `digits` significant figures.
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - mag);
    (x * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TABLE1: &str = include_str!("../../cli/fixtures/table1_confusion.csv");

    /// Kappa from first principles: enumerate every (rating by grader 1,
    /// rating by grader 2) item pairing and count how often the two agree.
    fn brute_force_kappa(m: &ConfusionMatrix) -> (f64, f64, f64) {
        let k = m.size();
        let mut first = Vec::new();
        let mut second = Vec::new();
        for i in 0..k {
            for j in 0..k {
                for _ in 0..m.counts[i][j] {
                    first.push(i);
                    second.push(j);
                }
            }
        }
        let n = first.len();
        let agree = first.iter().zip(&second).filter(|(a, b)| a == b).count();
        let mut chance_pairs = 0usize;
        for a in &first {
            for b in &second {
                if a == b {
                    chance_pairs += 1;
                }
            }
        }
        let p = agree as f64 / n as f64;
        let q = chance_pairs as f64 / (n * n) as f64;
        (p, q, (p - q) / (1.0 - q))
    }

    #[test]
    fn kappa_examples() {
        let diag = ConfusionMatrix::from_counts(vec![vec![5, 0], vec![0, 7]]).unwrap();
        assert_eq!(cohen_kappa(&diag).unwrap().kappa, 1.0);
        let ones = ConfusionMatrix::from_counts(vec![vec![1, 1], vec![1, 1]]).unwrap();
        let s = cohen_kappa(&ones).unwrap();
        assert_eq!((s.p, s.q, s.kappa), (0.5, 0.5, 0.0));
        let single = ConfusionMatrix::from_counts(vec![vec![9]]).unwrap();
        assert_eq!(cohen_kappa(&single), Err(MetricsError::DegenerateChance));
        let empty = ConfusionMatrix::from_counts(vec![vec![0, 0], vec![0, 0]]).unwrap();
        assert_eq!(cohen_kappa(&empty), Err(MetricsError::EmptyMatrix));
    }

    #[test]
    fn table1_fixture() {
        let m = ConfusionMatrix::from_csv(TABLE1).unwrap();
        assert_eq!(m.total(), 6988);
        assert_eq!(m.trace(), 6081);
        let s = cohen_kappa(&m).unwrap();
        assert!((s.kappa - 0.838).abs() <= 0.005, "{}", s.kappa);
        assert!((accuracy(&m).unwrap() - 0.8702).abs() < 1e-4);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&ConfusionMatrix::from_counts(vec![vec![5]]).unwrap()), Ok(1.0));
        assert_eq!(accuracy(&ConfusionMatrix::from_counts(vec![vec![0]]).unwrap()), Err(MetricsError::EmptyMatrix));
    }

    #[test]
    fn attribution_examples() {
        assert_eq!(round_sig(attribution_ratio(0.938, 0.981).unwrap(), 3), 0.956);
        assert_eq!(round_sig(attribution_ratio(0.967, 0.988).unwrap(), 3), 0.979);
        assert_eq!(attribution_ratio(0.7, 0.7), Ok(1.0));
        assert_eq!(attribution_ratio(0.5, 0.0), Err(MetricsError::ZeroDenominator));
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(ConfusionMatrix::from_csv(",a,b\na,1,2\nb,3\n"), Err(MetricsError::NotSquare)));
        assert!(matches!(ConfusionMatrix::from_csv(",a,b\na,1,x\nb,3,4\n"), Err(MetricsError::Csv { .. })));
        assert!(matches!(ConfusionMatrix::from_csv(",a,b\nb,1,2\na,3,4\n"), Err(MetricsError::Csv { .. })));
    }

    fn small_matrix() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..=4).prop_flat_map(|k| prop::collection::vec(prop::collection::vec(0u64..=4, k), k))
    }

    proptest! {
        #[test]
        fn matches_brute_force(counts in small_matrix()) {
            let m = ConfusionMatrix::from_counts(counts).unwrap();
            prop_assume!(m.total() > 0 && m.total() <= 50);
            let (p, q, kappa) = brute_force_kappa(&m);
            match cohen_kappa(&m) {
                Ok(s) => {
                    prop_assert_eq!(s.p, p);
                    prop_assert_eq!(s.q, q);
                    prop_assert_eq!(s.kappa, kappa);
                }
                Err(e) => {
                    prop_assert_eq!(e, MetricsError::DegenerateChance);
                    prop_assert_eq!(q, 1.0);
                }
            }
        }

        #[test]
        fn permutation_and_scaling_invariant(counts in small_matrix(), factor in 1u64..5, seed in 0u64..1000) {
            let m = ConfusionMatrix::from_counts(counts.clone()).unwrap();
            prop_assume!(m.total() > 0);
            let Ok(base) = cohen_kappa(&m) else { return Ok(()); };
            let k = m.size();
            let mut perm: Vec<usize> = (0..k).collect();
            perm.rotate_left((seed as usize) % k);
            let permuted: Vec<Vec<u64>> = (0..k).map(|i| (0..k).map(|j| counts[perm[i]][perm[j]]).collect()).collect();
            let p = cohen_kappa(&ConfusionMatrix::from_counts(permuted).unwrap()).unwrap();
            prop_assert!((p.kappa - base.kappa).abs() < 1e-12);
            let scaled: Vec<Vec<u64>> = counts.iter().map(|r| r.iter().map(|c| c * factor).collect()).collect();
            let s = cohen_kappa(&ConfusionMatrix::from_counts(scaled).unwrap()).unwrap();
            prop_assert!((s.kappa - base.kappa).abs() < 1e-12);
            prop_assert!((s.p - base.p).abs() < 1e-15 && (s.q - base.q).abs() < 1e-15);
        }

        #[test]
        fn kappa_one_iff_diagonal(counts in small_matrix()) {
            let m = ConfusionMatrix::from_counts(counts).unwrap();
            prop_assume!(m.total() > 0);
            let diagonal = m.trace() == m.total();
            if let Ok(s) = cohen_kappa(&m) {
                prop_assert_eq!(s.kappa == 1.0, diagonal);
            }
        }
    }
}
