use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::question::is_positional;

/// Nearest integer (halves away from zero), clamped to `[lo, hi]`.
pub fn round_clamp(x: f64, lo: i64, hi: i64) -> i64 {
    debug_assert!(lo <= hi);
    if x.is_nan() {
        return lo;
    }
    let r = x.round();
    if r <= lo as f64 {
        lo
    } else if r >= hi as f64 {
        hi
    } else {
        r as i64
    }
}

fn check_pair<T>(preds: &[T], gts: &[T]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if preds.len() != gts.len() {
        return Err(Error::Shape { context: "predictions vs ground truth".into(), expected: gts.len(), actual: preds.len() });
    }
    Ok(())
}

/// Percentage of exact matches.
pub fn accuracy(preds: &[i64], gts: &[i64]) -> Result<f64> {
    check_pair(preds, gts)?;
    let hits = preds.iter().zip(gts).filter(|(p, g)| p == g).count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

pub fn rmse(preds: &[i64], gts: &[i64]) -> Result<f64> {
    check_pair(preds, gts)?;
    let sq: f64 = preds.iter().zip(gts).map(|(p, g)| ((p - g) as f64).powi(2)).sum();
    Ok((sq / preds.len() as f64).sqrt())
}

/// Count of each value in `lo..=hi`.
pub fn histogram(values: &[i64], lo: i64, hi: i64) -> Result<Vec<usize>> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!("histogram range [{lo}, {hi}] is empty")));
    }
    let mut counts = vec![0; (hi - lo + 1) as usize];
    for &v in values {
        if v < lo || v > hi {
            return Err(Error::OutOfRange { value: v, lo, hi });
        }
        counts[(v - lo) as usize] += 1;
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub size: usize,
    /// Absent when the subset is empty.
    pub accuracy: Option<f64>,
}

/// Accuracy restricted to questions containing a positional qualifier.
pub fn positional_subset_report(questions: &[&str], preds: &[i64], gts: &[i64]) -> Result<SubsetReport> {
    if questions.len() != preds.len() || preds.len() != gts.len() {
        return Err(Error::Shape { context: "positional subset inputs".into(), expected: questions.len(), actual: preds.len() });
    }
    let (p, g): (Vec<i64>, Vec<i64>) = questions
        .iter()
        .zip(preds.iter().zip(gts))
        .filter(|(q, _)| is_positional(q))
        .map(|(_, (p, g))| (*p, *g))
        .unzip();
    Ok(SubsetReport { size: p.len(), accuracy: if p.is_empty() { None } else { Some(accuracy(&p, &g)?) } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    #[test]
    fn round_clamp_truth_table() {
        assert_eq!(round_clamp(2.6, 0, 15), 3);
        assert_eq!(round_clamp(-1.0, 0, 15), 0);
        assert_eq!(round_clamp(99.2, 0, 15), 15);
        assert_eq!(round_clamp(2.5, 0, 15), 3);
        assert_eq!(round_clamp(-2.5, -5, 5), -3);
        assert_eq!(round_clamp(0.49999, 0, 15), 0);
        for k in 0..=15 {
            assert_eq!(round_clamp(k as f64, 0, 15), k);
        }
    }

    #[test]
    fn accuracy_and_rmse_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 100.0);
        assert_eq!(accuracy(&[1, 3], &[1, 2]).unwrap(), 50.0);
        assert_eq!(accuracy(&[0, 0], &[1, 2]).unwrap(), 0.0);
        assert_eq!(rmse(&[4, 5], &[4, 5]).unwrap(), 0.0);
        assert!((rmse(&[1, 3], &[1, 2]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(accuracy(&[], &[]), Err(Error::Empty(_))));
        assert!(rmse(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn constant_prediction_rmse_matches_closed_form() {
        let mut rng = Rng::new(4);
        let gts: Vec<i64> = (0..1000).map(|_| rng.int_inclusive(0, 15) as i64).collect();
        let n = gts.len() as f64;
        let mean = gts.iter().sum::<i64>() as f64 / n;
        let var = gts.iter().map(|&g| (g as f64 - mean).powi(2)).sum::<f64>() / n;
        for k in [0i64, 1, 2, 7] {
            let closed = (var + (k as f64 - mean).powi(2)).sqrt();
            assert!((rmse(&vec![k; gts.len()], &gts).unwrap() - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(histogram(&[0, 1, 1, 2], 0, 2).unwrap(), vec![1, 2, 1]);
        assert_eq!(histogram(&[], 0, 3).unwrap(), vec![0; 4]);
        assert!(matches!(histogram(&[16], 0, 15), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn positional_subset() {
        let qs = ["How many dogs?", "How many cats are on the grass?", "How many kites are in the sky?"];
        let none = positional_subset_report(&qs[..1], &[1], &[1]).unwrap();
        assert_eq!(none, SubsetReport { size: 0, accuracy: None });
        let r = positional_subset_report(&qs, &[1, 2, 3], &[0, 2, 4]).unwrap();
        assert_eq!(r, SubsetReport { size: 2, accuracy: Some(50.0) });
        let all = positional_subset_report(&qs[1..], &[2, 3], &[2, 4]).unwrap();
        assert_eq!(all.accuracy, Some(accuracy(&[2, 3], &[2, 4]).unwrap()));
    }
}
