use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The support `I_a ⊗ 1_{b×c} ⊗ I_d`, where `1_{b×c}` is the all-ones block.
///
/// Row `i` decomposes as `(α, β, δ)` with `i = (α·b + β)·d + δ`, column `j` as
/// `(α, γ, δ)` with `j = (α·c + γ)·d + δ`; the entry is in the support iff
/// both share `α` and `δ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SupportPattern {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl SupportPattern {
    pub fn new(a: usize, b: usize, c: usize, d: usize) -> Result<Self> {
        if a == 0 || b == 0 || c == 0 || d == 0 {
            return Err(Error::Config(format!(
                "support pattern entries must be positive, got ({a},{b},{c},{d})"
            )));
        }
        Ok(SupportPattern { a, b, c, d })
    }

    /// Factor `level` (1-based) of the square butterfly of size `n = 2^L`:
    /// `I_{2^(level-1)} ⊗ 1_{2×2} ⊗ I_{n/2^level}`.
    pub fn square(n: usize, level: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "square butterfly size must be a power of two >= 2, got {n}"
            )));
        }
        let depth = n.trailing_zeros() as usize;
        if level == 0 || level > depth {
            return Err(Error::Config(format!(
                "factor index {level} out of range 1..={depth} for size {n}"
            )));
        }
        Ok(SupportPattern {
            a: 1 << (level - 1),
            b: 2,
            c: 2,
            d: n >> level,
        })
    }

    pub fn rows(&self) -> usize {
        self.a * self.b * self.d
    }

    pub fn cols(&self) -> usize {
        self.a * self.c * self.d
    }

    pub fn nnz(&self) -> usize {
        self.a * self.b * self.c * self.d
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        if row >= self.rows() || col >= self.cols() {
            return false;
        }
        let (ra, rd) = (row / (self.b * self.d), row % self.d);
        let (ca, cd) = (col / (self.c * self.d), col % self.d);
        ra == ca && rd == cd
    }

    /// Position of entry `(row, col)` in the canonical value array
    /// (row-major over the expanded pattern), if it is in the support.
    pub fn value_index(&self, row: usize, col: usize) -> Option<usize> {
        if !self.contains(row, col) {
            return None;
        }
        let gamma = (col / self.d) % self.c;
        Some(row * self.c + gamma)
    }

    /// Column of the `gamma`-th support entry of `row`.
    #[inline]
    pub fn col_of(&self, row: usize, gamma: usize) -> usize {
        let alpha = row / (self.b * self.d);
        let delta = row % self.d;
        (alpha * self.c + gamma) * self.d + delta
    }

    /// Row-major boolean expansion of the support.
    pub fn to_dense_mask(&self) -> Vec<bool> {
        let (rows, cols) = (self.rows(), self.cols());
        let mut out = vec![false; rows * cols];
        for row in 0..rows {
            for gamma in 0..self.c {
                out[row * cols + self.col_of(row, gamma)] = true;
            }
        }
        out
    }
}

/// Number of nonzero positions of a pattern.
pub fn pattern_nnz(pattern: &SupportPattern) -> usize {
    pattern.nnz()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_rejects_non_power_of_two() {
        assert!(SupportPattern::square(12, 1).is_err());
        assert!(SupportPattern::square(8, 4).is_err());
        assert!(SupportPattern::square(8, 0).is_err());
    }

    #[test]
    fn n2_is_full_block() {
        let p = SupportPattern::square(2, 1).unwrap();
        assert_eq!(p.to_dense_mask(), vec![true; 4]);
    }

    #[test]
    fn n4_level1_rows() {
        let p = SupportPattern::square(4, 1).unwrap();
        let cols: Vec<Vec<usize>> = (0..4)
            .map(|r| (0..4).filter(|&c| p.contains(r, c)).collect())
            .collect();
        assert_eq!(cols, vec![vec![0, 2], vec![1, 3], vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn n4_level2_block_diagonal() {
        let p = SupportPattern::square(4, 2).unwrap();
        let m = p.to_dense_mask();
        #[rustfmt::skip]
        let expected = [
            true, true, false, false,
            true, true, false, false,
            false, false, true, true,
            false, false, true, true,
        ];
        assert_eq!(m, expected);
    }

    #[test]
    fn nnz_examples() {
        assert_eq!(pattern_nnz(&SupportPattern::square(16, 3).unwrap()), 32);
        assert_eq!(pattern_nnz(&SupportPattern::new(1, 1, 1, 1).unwrap()), 1);
        assert_eq!(pattern_nnz(&SupportPattern::new(2, 3, 4, 5).unwrap()), 120);
    }

    #[test]
    fn value_index_is_row_major() {
        let p = SupportPattern::new(2, 3, 2, 2).unwrap();
        let mut seen = Vec::new();
        for r in 0..p.rows() {
            for c in 0..p.cols() {
                if let Some(k) = p.value_index(r, c) {
                    seen.push(k);
                }
            }
        }
        assert_eq!(seen, (0..p.nnz()).collect::<Vec<_>>());
    }
}
