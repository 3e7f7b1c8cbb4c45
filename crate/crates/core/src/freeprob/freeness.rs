//! Asymptotic-freeness tester: normalized traces of alternating words of
//! centered monomials drawn from different matrix sets. For a free family
//! every such trace vanishes in the large-n limit, so the largest absolute
//! word trace is a scalar freeness score.

use ndarray::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One alternating word and its normalized trace. Every factor named in
/// `word` is implicitly centered: the matrix minus its normalized trace
/// times the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTrace {
    pub word: String,
    pub trace: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreenessReport {
    pub max_word_trace: f64,
    pub per_word: Vec<WordTrace>,
    pub degree_bound: usize,
    pub length_bound: usize,
}

const MAX_DEGREE: usize = 3;
// Alternating pairs of degree-3 monomials need words of up to six factors,
// e.g. the commuting-diagonal counterexample uses length four.
const MAX_LENGTH: usize = 6;

struct Monomial {
    label: String,
    matrix: Array2<f64>,
}

fn normalized_trace(m: &Array2<f64>) -> f64 {
    m.diag().sum() / m.nrows() as f64
}

fn set_letter(i: usize) -> char {
    (b'A' + (i % 26) as u8) as char
}

/// All centered monomials of a set up to the degree bound. A monomial is a
/// product of up to `degree` factors from the set (mixing members), so
/// single-matrix sets contribute the plain powers.
fn centered_monomials(set: &[Array2<f64>], set_idx: usize, degree: usize) -> Vec<Monomial> {
    let letter = set_letter(set_idx);
    let name = |j: usize| {
        if set.len() == 1 {
            letter.to_string()
        } else {
            format!("{letter}{j}")
        }
    };
    let mut out: Vec<Monomial> = Vec::new();
    // (label path, product) pairs grown one factor at a time
    let mut level: Vec<(Vec<usize>, Array2<f64>)> = set
        .iter()
        .enumerate()
        .map(|(j, m)| (vec![j], m.clone()))
        .collect();
    for d in 1..=degree {
        if d > 1 {
            let mut next = Vec::new();
            for (path, prod) in &level {
                for (j, m) in set.iter().enumerate() {
                    let mut p = path.clone();
                    p.push(j);
                    next.push((p, prod.dot(m)));
                }
            }
            level = next;
        }
        for (path, prod) in &level {
            // compress runs into powers for the label
            let mut label = String::new();
            let mut run_start = 0;
            for i in 1..=path.len() {
                if i == path.len() || path[i] != path[run_start] {
                    if !label.is_empty() {
                        label.push('*');
                    }
                    let count = i - run_start;
                    if count == 1 {
                        label.push_str(&name(path[run_start]));
                    } else {
                        label.push_str(&format!("{}^{}", name(path[run_start]), count));
                    }
                    run_start = i;
                }
            }
            let phi = normalized_trace(prod);
            let mut centered = prod.clone();
            for i in 0..centered.nrows() {
                centered[[i, i]] -= phi;
            }
            out.push(Monomial {
                label,
                matrix: centered,
            });
        }
    }
    out
}

/// Enumerate alternating words `Q_1 .. Q_L` (`2 <= L <= length_bound`) of
/// centered monomials with neighbouring factors from different sets, and
/// return every normalized word trace together with the largest absolute
/// value. Length-one words are omitted: centering makes them vanish
/// identically.
pub fn freeness_score(
    family: &[Vec<Array2<f64>>],
    degree_bound: usize,
    length_bound: usize,
) -> Result<FreenessReport> {
    if family.is_empty() || family.iter().any(|s| s.is_empty()) {
        return Err(CoreError::InvalidParameter(
            "family must contain non-empty matrix sets".into(),
        ));
    }
    let n = family[0][0].nrows();
    for set in family {
        for m in set {
            if m.nrows() != n || m.ncols() != n {
                return Err(CoreError::DimensionMismatch {
                    what: "freeness family",
                    expected: n,
                    got: m.nrows(),
                });
            }
        }
    }
    if degree_bound == 0 || degree_bound > MAX_DEGREE {
        return Err(CoreError::InvalidParameter(format!(
            "degree bound must lie in 1..={MAX_DEGREE}, got {degree_bound}"
        )));
    }
    if length_bound == 0 || length_bound > MAX_LENGTH {
        return Err(CoreError::InvalidParameter(format!(
            "length bound must lie in 1..={MAX_LENGTH}, got {length_bound}"
        )));
    }

    let monomials: Vec<Vec<Monomial>> = family
        .iter()
        .enumerate()
        .map(|(i, set)| centered_monomials(set, i, degree_bound))
        .collect();

    let mut per_word = Vec::new();
    if family.len() >= 2 && length_bound >= 2 {
        for first_set in 0..family.len() {
            for mono in &monomials[first_set] {
                extend_word(
                    &monomials,
                    first_set,
                    &mono.label,
                    &mono.matrix,
                    1,
                    length_bound,
                    n,
                    &mut per_word,
                );
            }
        }
    }
    let max_word_trace = per_word
        .iter()
        .map(|w: &WordTrace| w.trace.abs())
        .fold(0.0, f64::max);
    Ok(FreenessReport {
        max_word_trace,
        per_word,
        degree_bound,
        length_bound,
    })
}

#[allow(clippy::too_many_arguments)]
fn extend_word(
    monomials: &[Vec<Monomial>],
    last_set: usize,
    prefix_label: &str,
    prefix: &Array2<f64>,
    depth: usize,
    length_bound: usize,
    n: usize,
    out: &mut Vec<WordTrace>,
) {
    for (set_idx, set_monos) in monomials.iter().enumerate() {
        if set_idx == last_set {
            continue;
        }
        for mono in set_monos {
            let label = format!("{prefix_label}|{}", mono.label);
            // tr(prefix * M) without forming the product
            let trace = frobenius_with_transpose(prefix, &mono.matrix) / n as f64;
            out.push(WordTrace {
                word: label.clone(),
                trace,
            });
            if depth + 1 < length_bound {
                let product = prefix.dot(&mono.matrix);
                extend_word(
                    monomials,
                    set_idx,
                    &label,
                    &product,
                    depth + 1,
                    length_bound,
                    n,
                    out,
                );
            }
        }
    }
}

/// `tr(P M) = sum_{ij} P_ij M_ji`.
fn frobenius_with_transpose(p: &Array2<f64>, m: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for (row, col) in p.rows().into_iter().zip(m.columns()) {
        acc += row.dot(&col);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randmat;

    #[test]
    fn single_set_has_no_words() {
        let fam = vec![vec![Array2::<f64>::eye(4)]];
        let rep = freeness_score(&fam, 2, 3).unwrap();
        assert!(rep.per_word.is_empty());
        assert_eq!(rep.max_word_trace, 0.0);
    }

    #[test]
    fn bounds_are_enforced() {
        let fam = vec![vec![Array2::<f64>::eye(4)], vec![Array2::<f64>::eye(4)]];
        assert!(freeness_score(&fam, 4, 3).is_err());
        assert!(freeness_score(&fam, 2, 7).is_err());
        let bad = vec![vec![Array2::<f64>::eye(4)], vec![Array2::<f64>::eye(5)]];
        assert!(freeness_score(&bad, 2, 3).is_err());
    }

    #[test]
    fn commuting_diagonals_fail_at_length_four() {
        // independent +-1 diagonals commute; the alternating length-4 word
        // has trace close to Var(A) Var(B) = 1
        let n = 512;
        let a = Array2::from_diag(&randmat::rademacher_diag(n, 1));
        let b = Array2::from_diag(&randmat::rademacher_diag(n, 2));
        let rep = freeness_score(&[vec![a], vec![b]], 1, 4).unwrap();
        let abab = rep
            .per_word
            .iter()
            .find(|w| w.word == "A|B|A|B")
            .expect("length-4 word present");
        assert!(abab.trace > 0.5, "trace={}", abab.trace);
        assert!(rep.max_word_trace > 0.5);
    }

    #[test]
    fn haar_conjugated_pair_scores_low() {
        let n = 256;
        let d1 = randmat::diag_from_law(n, randmat::DiagLaw::Uniform { a: 0.0, b: 1.0 }, 3).unwrap();
        let d2 = randmat::diag_from_law(n, randmat::DiagLaw::Uniform { a: 0.0, b: 1.0 }, 4).unwrap();
        let u = randmat::haar_orthogonal(n, 5);
        let mut rotated = u.clone();
        for (mut col, &d) in rotated.columns_mut().into_iter().zip(d2.iter()) {
            col.mapv_inplace(|v| v * d);
        }
        let rotated = rotated.dot(&u.t());
        let fam = vec![vec![Array2::from_diag(&d1)], vec![rotated]];
        let rep = freeness_score(&fam, 3, 4).unwrap();
        // finite-n fluctuation at n = 256 stays well under 0.1 for [0,1]
        // spectra
        assert!(rep.max_word_trace < 0.1, "score={}", rep.max_word_trace);
        assert!(!rep.per_word.is_empty());
    }

    #[test]
    fn word_labels_compress_powers() {
        let fam = vec![
            vec![Array2::<f64>::eye(3)],
            vec![Array2::from_diag(&ndarray::array![1.0, 2.0, 3.0])],
        ];
        let rep = freeness_score(&fam, 3, 2).unwrap();
        assert!(rep.per_word.iter().any(|w| w.word == "A^2|B"));
        assert!(rep.per_word.iter().any(|w| w.word == "B^3|A"));
    }
}
