//! Attribute similarity functions and token handling.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

const NUMBER_EPS: f64 = 1e-12;

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counted as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Number of common elements of two sorted, deduplicated slices.
pub fn sorted_intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Jaccard over sorted, deduplicated token ids.
pub fn jaccard_sorted(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = sorted_intersection_len(a, b);
    inter as f64 / (a.len() + b.len() - inter) as f64
}

pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut b_used = vec![false; b.len()];
    let mut a_matched = Vec::with_capacity(a.len());
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_used[j] && b[j] == *ca {
                b_used[j] = true;
                a_matched.push(*ca);
                break;
            }
        }
    }
    let m = a_matched.len();
    if m == 0 {
        return 0.0;
    }
    let b_matched = b.iter().zip(&b_used).filter(|(_, u)| **u).map(|(c, _)| *c);
    let half_transpositions = a_matched
        .iter()
        .zip(b_matched)
        .filter(|(x, y)| **x != *y)
        .count();
    let t = (half_transpositions / 2) as f64;
    let m = m as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro-Winkler similarity with prefix scale 0.1 and a prefix of at most 4.
/// The prefix bonus applies only above a Jaro score of 0.7.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let j = jaro(a, b);
    if j <= 0.7 {
        return j;
    }
    let prefix = a
        .chars()
        .zip(b.chars())
        .take(4)
        .take_while(|(x, y)| x == y)
        .count();
    (j + 0.1 * prefix as f64 * (1.0 - j)).min(1.0)
}

/// Relative-difference similarity `1 - |a-b| / max(|a|,|b|,eps)`; missing on
/// either side scores 0.
pub fn number_sim(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => {
            let scale = a.abs().max(b.abs()).max(NUMBER_EPS);
            (1.0 - (a - b).abs() / scale).clamp(0.0, 1.0)
        }
        _ => 0.0,
    }
}

pub fn parse_number(raw: &str) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Config(format!("non-numeric value {raw:?}")))
}

/// `number_sim` over raw text cells.
pub fn number_sim_str(a: &str, b: &str) -> Result<f64> {
    Ok(number_sim(parse_number(a)?, parse_number(b)?))
}

/// Weighted mean of attribute similarities; a missing similarity counts as 0
/// but keeps its weight.
pub fn aggregate_metric(attr_sims: &[Option<f64>], weights: &[f64]) -> Result<f64> {
    if attr_sims.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} similarities but {} weights",
            attr_sims.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::Config("attribute weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("all attribute weights are zero".into()));
    }
    let acc: f64 = attr_sims
        .iter()
        .zip(weights)
        .map(|(s, w)| w * s.unwrap_or(0.0))
        .sum();
    Ok((acc / total).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Data-Cleaning, the RIGHT way!"), vec!["data", "cleaning", "the", "right", "way"]);
        assert!(tokenize("  --  ").is_empty());
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])), 0.5);
        let s = set(&["x", "y"]);
        assert_eq!(jaccard(&s, &s), 1.0);
        assert_eq!(jaccard(&set(&[]), &set(&["x"])), 0.0);
        assert_eq!(jaccard::<String>(&set(&[]), &set(&[])), 1.0);
        assert_eq!(jaccard_sorted(&[1, 2, 3], &[2, 3, 4]), 0.5);
    }

    #[test]
    fn jaro_winkler_examples() {
        // Jaro 0.9444 plus a three-character prefix bonus.
        assert_abs_diff_eq!(jaro("MARTHA", "MARHTA"), 0.944_444, epsilon = 1e-6);
        assert_abs_diff_eq!(jaro_winkler("MARTHA", "MARHTA"), 0.961_111, epsilon = 1e-6);
        assert_eq!(jaro_winkler("x", "x"), 1.0);
        assert_eq!(jaro_winkler("abc", "xyz"), 0.0);
        assert_eq!(jaro_winkler("", "abc"), 0.0);
    }

    #[test]
    fn jaro_winkler_matches_reference_implementation() {
        let words = [
            "DIXON", "DICKSONX", "DWAYNE", "DUANE", "vldb", "very large data bases",
            "sigmod conference", "SIGMOD Record", "acm trans database syst", "", "a", "ab",
            "crate", "trace", "dunningham", "cunnigham",
        ];
        for a in words {
            for b in words {
                assert_abs_diff_eq!(jaro_winkler(a, b), strsim::jaro_winkler(a, b), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn number_sim_examples() {
        assert_eq!(number_sim(Some(100.0), Some(100.0)), 1.0);
        assert_eq!(number_sim(Some(0.0), Some(0.0)), 1.0);
        assert_eq!(number_sim(Some(50.0), Some(100.0)), 0.5);
        assert_eq!(number_sim(None, None), 0.0);
        assert_eq!(number_sim(Some(-5.0), Some(5.0)), 0.0);
        assert!(number_sim_str("12", "abc").is_err());
        assert_eq!(number_sim_str("", "").unwrap(), 0.0);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_metric(&[Some(1.0), Some(0.0)], &[1.0, 1.0]).unwrap(), 0.5);
        assert_abs_diff_eq!(aggregate_metric(&[Some(0.8)], &[3.0]).unwrap(), 0.8, epsilon = 1e-15);
        assert_eq!(aggregate_metric(&[Some(1.0); 3], &[2.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(aggregate_metric(&[Some(1.0), None], &[1.0, 1.0]).unwrap(), 0.5);
        assert!(aggregate_metric(&[Some(1.0)], &[0.0]).is_err());
        assert!(aggregate_metric(&[Some(1.0)], &[1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn similarities_are_symmetric(a in "[a-e ]{0,12}", b in "[a-e ]{0,12}") {
            prop_assert_eq!(jaro_winkler(&a, &b), jaro_winkler(&b, &a));
            prop_assert_eq!(jaccard(&token_set(&a), &token_set(&b)), jaccard(&token_set(&b), &token_set(&a)));
            let x = a.len() as f64;
            let y = b.len() as f64;
            prop_assert_eq!(number_sim(Some(x), Some(y)), number_sim(Some(y), Some(x)));
        }

        #[test]
        fn aggregate_is_monotone(
            sims in proptest::collection::vec(0.0f64..=1.0, 1..5),
            weights in proptest::collection::vec(0.01f64..10.0, 5),
            idx in 0usize..5,
            bump in 0.0f64..1.0,
        ) {
            let n = sims.len();
            let w = &weights[..n];
            let i = idx % n;
            let base: Vec<Option<f64>> = sims.iter().copied().map(Some).collect();
            let mut up = base.clone();
            up[i] = Some((sims[i] + bump).min(1.0));
            let m0 = aggregate_metric(&base, w).unwrap();
            let m1 = aggregate_metric(&up, w).unwrap();
            prop_assert!(m1 + 1e-12 >= m0);
            prop_assert!((0.0..=1.0).contains(&m0));
        }
    }
}
