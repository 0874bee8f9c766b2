use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NormnessError;

/// One annotator's answer for a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Vote {
    First,
    Second,
    HardToTell,
    MediaNeeded,
}

/// Gold label from an odd number of votes.
///
/// Returns `None` when no category holds a strict majority or when the
/// majority says the pair cannot be judged.
pub fn majority_label(votes: &[Vote]) -> Result<Option<Vote>, NormnessError> {
    if votes.is_empty() || votes.len().is_multiple_of(2) {
        return Err(NormnessError::InvalidParameter(format!(
            "need an odd number of votes, got {}",
            votes.len()
        )));
    }
    let mut tally: BTreeMap<Vote, usize> = BTreeMap::new();
    for &v in votes {
        *tally.entry(v).or_default() += 1;
    }
    Ok(tally
        .into_iter()
        .find(|&(_, n)| 2 * n > votes.len())
        .map(|(v, _)| v)
        .filter(|v| matches!(v, Vote::First | Vote::Second)))
}

/// Fleiss's kappa over an items × categories count table.
///
/// Every row must sum to the same rater count `n ≥ 2`. Fails with
/// [`NormnessError::Degenerate`] when expected agreement is 1.
pub fn fleiss_kappa(table: &[Vec<usize>]) -> Result<f64, NormnessError> {
    let Some(first) = table.first() else {
        return Err(NormnessError::InvalidParameter("empty table".into()));
    };
    let n: usize = first.iter().sum();
    let k = first.len();
    if n < 2 {
        return Err(NormnessError::InvalidParameter(
            "need at least 2 raters per item".into(),
        ));
    }
    if table
        .iter()
        .any(|row| row.len() != k || row.iter().sum::<usize>() != n)
    {
        return Err(NormnessError::InvalidParameter(
            "rows must share width and rater count".into(),
        ));
    }
    let items = table.len() as f64;
    let nf = n as f64;
    let p_bar = table
        .iter()
        .map(|row| (row.iter().map(|&c| (c * c) as f64).sum::<f64>() - nf) / (nf * (nf - 1.0)))
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..k)
        .map(|j| {
            let p = table.iter().map(|row| row[j] as f64).sum::<f64>() / (items * nf);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(NormnessError::Degenerate(
            "every rating falls in one category".into(),
        ));
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Vote::*;

    #[test]
    fn majorities() {
        assert_eq!(
            majority_label(&[First, First, Second]).unwrap(),
            Some(First)
        );
        assert_eq!(
            majority_label(&[First, Second, Second]).unwrap(),
            Some(Second)
        );
        assert_eq!(
            majority_label(&[HardToTell, HardToTell, First]).unwrap(),
            None
        );
        assert_eq!(
            majority_label(&[MediaNeeded, MediaNeeded, MediaNeeded]).unwrap(),
            None
        );
        assert_eq!(majority_label(&[First, Second, HardToTell]).unwrap(), None);
        assert!(majority_label(&[First, Second]).is_err());
        assert!(majority_label(&[]).is_err());
        assert_eq!(
            majority_label(&[First, First, Second, Second, First]).unwrap(),
            Some(First)
        );
    }

    /// Kappa from agreeing rater pairs, written independently of the
    /// closed-form sums above.
    fn kappa_by_rater_pairs(table: &[Vec<usize>]) -> f64 {
        let mut agree_pairs = 0.0;
        let mut total_pairs = 0.0;
        let mut marginal = vec![0.0; table[0].len()];
        let mut ratings = 0.0;
        for row in table {
            let labels: Vec<usize> = row
                .iter()
                .enumerate()
                .flat_map(|(j, &c)| std::iter::repeat_n(j, c))
                .collect();
            for a in 0..labels.len() {
                for b in 0..labels.len() {
                    if a != b {
                        total_pairs += 1.0;
                        if labels[a] == labels[b] {
                            agree_pairs += 1.0;
                        }
                    }
                }
                marginal[labels[a]] += 1.0;
                ratings += 1.0;
            }
        }
        let observed = agree_pairs / total_pairs;
        let chance: f64 = marginal.iter().map(|m| (m / ratings) * (m / ratings)).sum();
        (observed - chance) / (1.0 - chance)
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(fleiss_kappa(&[vec![3, 0], vec![0, 3]]).unwrap(), 1.0);
        let t = vec![vec![2, 1], vec![1, 2], vec![3, 0], vec![0, 3]];
        let k = fleiss_kappa(&t).unwrap();
        assert!((k - 1.0 / 3.0).abs() < 1e-12);
        assert!((k - kappa_by_rater_pairs(&t)).abs() < 1e-12);
    }

    #[test]
    fn kappa_against_rater_pair_oracle() {
        let tables = [
            vec![
                vec![0, 0, 0, 0, 14],
                vec![0, 2, 6, 4, 2],
                vec![0, 0, 3, 5, 6],
                vec![0, 3, 9, 2, 0],
                vec![2, 2, 8, 1, 1],
            ],
            vec![vec![1, 2, 0], vec![0, 2, 1], vec![3, 0, 0], vec![1, 1, 1]],
        ];
        for t in &tables {
            assert!((fleiss_kappa(t).unwrap() - kappa_by_rater_pairs(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_errors() {
        assert!(matches!(
            fleiss_kappa(&[vec![3, 0], vec![3, 0]]),
            Err(NormnessError::Degenerate(_))
        ));
        assert!(fleiss_kappa(&[vec![1, 0]]).is_err());
        assert!(fleiss_kappa(&[vec![2, 1], vec![1, 1]]).is_err());
        assert!(fleiss_kappa(&[]).is_err());
    }
}
