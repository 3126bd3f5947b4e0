//! Entropy and information gain over class counts.

use crate::error::{Error, Result};

/// Base-2 entropy of (possibly fractional) class counts; `0·log 0 = 0`.
pub(crate) fn entropy_f64(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// `E(S) = -Σ p_j log2 p_j` over the class proportions of `class_counts`.
pub fn entropy(class_counts: &[u64]) -> Result<f64> {
    if class_counts.iter().sum::<u64>() == 0 {
        return Err(Error::InvalidArgument("entropy of an empty set".into()));
    }
    let counts: Vec<f64> = class_counts.iter().map(|&c| c as f64).collect();
    Ok(entropy_f64(&counts))
}

/// `G(S, {S_i}) = E(S) - Σ |S_i|/|S| · E(S_i)`.
///
/// The children must partition the parent class by class.
pub fn information_gain(parent_counts: &[u64], child_counts: &[Vec<u64>]) -> Result<f64> {
    let classes = parent_counts.len();
    if child_counts.iter().any(|c| c.len() != classes) {
        return Err(Error::InvalidArgument(
            "children have a different number of classes".into(),
        ));
    }
    for j in 0..classes {
        let sum: u64 = child_counts.iter().map(|c| c[j]).sum();
        if sum != parent_counts[j] {
            return Err(Error::InvalidArgument(format!(
                "children sum to {sum} for class {j}, parent has {}",
                parent_counts[j]
            )));
        }
    }
    let parent_entropy = entropy(parent_counts)?;
    let total: u64 = parent_counts.iter().sum();
    let weighted: f64 = child_counts
        .iter()
        .filter(|c| c.iter().sum::<u64>() > 0)
        .map(|c| {
            let size: u64 = c.iter().sum();
            size as f64 / total as f64 * entropy(c).expect("non-empty child")
        })
        .sum();
    Ok(parent_entropy - weighted)
}
