//! Enumeration of monotone butterfly chains for a `rows × cols` matrix and
//! selection of the one with the fewest parameters.
//!
//! A chain of `L` factors `(a_l, b_l, c_l, d_l)` is accepted when
//!
//! * it chains without redundancy: `a_1 = 1`, `d_L = 1`,
//!   `a_{l+1} = a_l · c_l` and `d_l = b_{l+1} · d_{l+1}`. Then
//!   `rows = Π b_l`, `cols = Π c_l`, and the product of the full supports
//!   is the all-ones matrix with exactly one path per entry;
//! * it is monotone: the dimensions `rows = n_0, n_1, …, n_L = cols`
//!   between consecutive factors form a monotone sequence, so no
//!   intermediate dimension falls outside `[min(rows, cols), max(rows, cols)]`.
//!
//! Both conditions imply `a_l` non-decreasing and `d_l` non-increasing.
//! A chain is fully determined by the ordered factorizations `(b_l)` of
//! `rows` and `(c_l)` of `cols`, which is how the search enumerates it.

use serde::{Deserialize, Serialize};

use super::pattern::SupportPattern;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub rows: usize,
    pub cols: usize,
    pub factors: Vec<SupportPattern>,
    pub params: usize,
}

impl ChainSpec {
    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    /// Dimensions `n_0 = rows, …, n_L = cols` between consecutive factors.
    pub fn inner_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.rows];
        dims.extend(self.factors.iter().map(|p| p.cols()));
        dims
    }

    fn from_block_sizes(rows: usize, cols: usize, bs: &[usize], cs: &[usize]) -> Self {
        let depth = bs.len();
        let factors: Vec<SupportPattern> = (0..depth)
            .map(|l| SupportPattern {
                a: cs[..l].iter().product(),
                b: bs[l],
                c: cs[l],
                d: bs[l + 1..].iter().product(),
            })
            .collect();
        let params = factors.iter().map(|p| p.nnz()).sum();
        ChainSpec {
            rows,
            cols,
            factors,
            params,
        }
    }
}

/// True iff `factors` is a valid monotone chain for a `rows × cols` matrix.
pub fn is_monotone_chain(rows: usize, cols: usize, factors: &[SupportPattern]) -> bool {
    let Some(first) = factors.first() else {
        return false;
    };
    let last = factors[factors.len() - 1];
    if first.a != 1 || last.d != 1 || first.rows() != rows || last.cols() != cols {
        return false;
    }
    for pair in factors.windows(2) {
        let (p, q) = (pair[0], pair[1]);
        if q.a != p.a * p.c || p.d != q.b * q.d {
            return false;
        }
    }
    let mut dims = vec![rows];
    dims.extend(factors.iter().map(|p| p.cols()));
    dims.windows(2).all(|w| w[0] <= w[1]) || dims.windows(2).all(|w| w[0] >= w[1])
}

fn divisors(n: usize) -> Vec<usize> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut i = 1;
    while i * i <= n {
        if n.is_multiple_of(i) {
            small.push(i);
            if i * i != n {
                large.push(n / i);
            }
        }
        i += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// All ordered factorizations of `n` into `parts` positive integers, in lexicographic order.
fn ordered_factorizations(n: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for d in divisors(n) {
            prefix.push(d);
            rec(n / d, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

fn check_args(rows: usize, cols: usize, depth: usize) -> Result<()> {
    if rows == 0 || cols == 0 || depth == 0 {
        return Err(Error::Config(format!(
            "chain search needs rows, cols, factors >= 1 (got {rows}, {cols}, {depth})"
        )));
    }
    Ok(())
}

/// Every monotone chain with `depth` factors, sorted by shape sequence.
pub fn enumerate_monotone_chains(rows: usize, cols: usize, depth: usize) -> Result<Vec<ChainSpec>> {
    check_args(rows, cols, depth)?;
    let row_splits = ordered_factorizations(rows, depth);
    let col_splits = ordered_factorizations(cols, depth);
    let mut out = Vec::new();
    for bs in &row_splits {
        for cs in &col_splits {
            let spec = ChainSpec::from_block_sizes(rows, cols, bs, cs);
            if is_monotone_chain(rows, cols, &spec.factors) {
                out.push(spec);
            }
        }
    }
    out.sort_by(|x, y| x.factors.cmp(&y.factors));
    out.dedup_by(|x, y| x.factors == y.factors);
    Ok(out)
}

/// The monotone chain with the fewest parameters; ties go to the
/// lexicographically smallest shape sequence.
pub fn select_min_param_chain(rows: usize, cols: usize, depth: usize) -> Result<ChainSpec> {
    check_args(rows, cols, depth)?;
    // Running minimum over the (b, c) grid; the full list is never materialized.
    let mut best: Option<ChainSpec> = None;
    let col_splits = ordered_factorizations(cols, depth);
    for bs in ordered_factorizations(rows, depth) {
        for cs in &col_splits {
            let spec = ChainSpec::from_block_sizes(rows, cols, &bs, cs);
            if !is_monotone_chain(rows, cols, &spec.factors) {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => (spec.params, &spec.factors) < (b.params, &b.factors),
            };
            if better {
                best = Some(spec);
            }
        }
    }
    best.ok_or_else(|| {
        Error::Config(format!(
            "no monotone chain with {depth} factors exists for a {rows}x{cols} matrix"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_factor_is_dense() {
        let chains = enumerate_monotone_chains(3, 5, 1).unwrap();
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].factors, vec![SupportPattern { a: 1, b: 3, c: 5, d: 1 }]);
        let two = select_min_param_chain(2, 2, 1).unwrap();
        assert_eq!(two.params, 4);
    }

    #[test]
    fn square_4x4_two_factors_contains_butterfly() {
        let chains = enumerate_monotone_chains(4, 4, 2).unwrap();
        let bf = vec![
            SupportPattern { a: 1, b: 2, c: 2, d: 2 },
            SupportPattern { a: 2, b: 2, c: 2, d: 1 },
        ];
        let found = chains.iter().find(|c| c.factors == bf).unwrap();
        assert_eq!(found.params, 16);
    }

    #[test]
    fn square_chain_selected_for_powers_of_two() {
        for depth in 1..=4 {
            let n = 1 << depth;
            let spec = select_min_param_chain(n, n, depth).unwrap();
            assert_eq!(spec.params, 2 * n * depth, "n = {n}");
            for (l, p) in spec.factors.iter().enumerate() {
                if n > 2 {
                    assert_eq!(*p, SupportPattern::square(n, l + 1).unwrap());
                }
            }
        }
    }

    #[test]
    fn min_is_invariant_to_enumeration_order() {
        let mut all = enumerate_monotone_chains(12, 18, 3).unwrap();
        all.reverse();
        let best = all
            .iter()
            .min_by(|x, y| (x.params, &x.factors).cmp(&(y.params, &y.factors)))
            .unwrap();
        assert_eq!(*best, select_min_param_chain(12, 18, 3).unwrap());
    }

    #[test]
    fn rank_bottlenecks_are_excluded() {
        for spec in enumerate_monotone_chains(64, 576, 2).unwrap() {
            let dims = spec.inner_dims();
            assert!(dims.iter().all(|&d| (64..=576).contains(&d)), "{dims:?}");
        }
        let best = select_min_param_chain(64, 576, 2).unwrap();
        assert_eq!(best.params, 3200);
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(enumerate_monotone_chains(0, 4, 2).is_err());
        assert!(select_min_param_chain(4, 4, 0).is_err());
    }
}
