use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pattern::SupportPattern;
use super::select::ChainSpec;
use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::tensor::Tensor;

/// One support-constrained sparse factor. Only the `nnz` in-support entries
/// exist; they are stored in row-major order of the expanded pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ButterflyFactor {
    pattern: SupportPattern,
    pub values: Parameter,
}

impl ButterflyFactor {
    pub fn zeros(pattern: SupportPattern) -> Self {
        ButterflyFactor {
            pattern,
            values: Parameter::zeros(&[pattern.nnz()], false).with_decay(true),
        }
    }

    pub fn from_values(pattern: SupportPattern, values: Vec<f64>) -> Result<Self> {
        let t = Tensor::from_vec(&[pattern.nnz()], values)?;
        Ok(ButterflyFactor {
            pattern,
            values: Parameter::new(t, false).with_decay(true),
        })
    }

    /// Every in-support entry set to one.
    pub fn ones(pattern: SupportPattern) -> Self {
        let mut f = Self::zeros(pattern);
        f.values.value.fill(1.0);
        f
    }

    /// Identity on a square pattern; the diagonal is in-support whenever `b == c`.
    pub fn identity(pattern: SupportPattern) -> Result<Self> {
        if pattern.b != pattern.c {
            return Err(Error::Config(format!(
                "identity needs a square block, got {pattern:?}"
            )));
        }
        let mut f = Self::zeros(pattern);
        for i in 0..pattern.rows() {
            f.set(i, i, 1.0)?;
        }
        Ok(f)
    }

    pub fn pattern(&self) -> SupportPattern {
        self.pattern
    }

    pub fn rows(&self) -> usize {
        self.pattern.rows()
    }

    pub fn cols(&self) -> usize {
        self.pattern.cols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern
            .value_index(row, col)
            .map_or(0.0, |k| self.values.value.data()[k])
    }

    /// Sets an in-support entry. Entries outside the support cannot be set.
    pub fn set(&mut self, row: usize, col: usize, v: f64) -> Result<()> {
        let k = self.pattern.value_index(row, col).ok_or_else(|| {
            Error::Config(format!(
                "entry ({row}, {col}) lies outside support {:?}",
                self.pattern
            ))
        })?;
        self.values.value.data_mut()[k] = v;
        Ok(())
    }

    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        let bound = 1.0 / (self.pattern.c as f64).sqrt();
        for v in self.values.value.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }

    /// `y = X x` for one vector; returns the number of multiply-adds.
    fn apply(&self, x: &[f64], y: &mut [f64]) -> usize {
        let p = self.pattern;
        let vals = self.values.value.data();
        for (row, out) in y.iter_mut().enumerate() {
            let w = &vals[row * p.c..(row + 1) * p.c];
            let mut s = 0.0;
            for (gamma, wv) in w.iter().enumerate() {
                s += wv * x[p.col_of(row, gamma)];
            }
            *out = s;
        }
        p.nnz()
    }

    /// Given input `x` and upstream `dy`, accumulates the value gradient and
    /// adds `Xᵀ dy` into `dx`.
    fn backprop(&mut self, x: &[f64], dy: &[f64], dx: &mut [f64]) {
        let p = self.pattern;
        let vals = self.values.value.data().to_vec();
        let grad = self.values.grad_mut();
        for (row, &g) in dy.iter().enumerate() {
            for gamma in 0..p.c {
                let col = p.col_of(row, gamma);
                let k = row * p.c + gamma;
                grad[k] += g * x[col];
                dx[col] += vals[k] * g;
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let (rows, cols) = (self.rows(), self.cols());
        let mut out = vec![0.0; rows * cols];
        let p = self.pattern;
        let vals = self.values.value.data();
        for row in 0..rows {
            for gamma in 0..p.c {
                out[row * cols + p.col_of(row, gamma)] = vals[row * p.c + gamma];
            }
        }
        out
    }
}

/// `W = X⁽¹⁾ X⁽²⁾ … X⁽ᴸ⁾`, applied right to left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ButterflyChain {
    factors: Vec<ButterflyFactor>,
}

impl ButterflyChain {
    pub fn new(factors: Vec<ButterflyFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Config("butterfly chain needs at least one factor".into()));
        }
        for (i, pair) in factors.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::shape(
                    format!("butterfly chain factor {}", i + 2),
                    format!("{} rows", pair[0].cols()),
                    pair[1].rows(),
                ));
            }
        }
        Ok(ButterflyChain { factors })
    }

    /// Zero-valued chain with the shapes of `spec`.
    pub fn from_spec(spec: &ChainSpec) -> Self {
        ButterflyChain {
            factors: spec.factors.iter().map(|&p| ButterflyFactor::zeros(p)).collect(),
        }
    }

    /// Square butterfly of size `n = 2^L` with `L = log2 n` identity factors.
    pub fn square_identity(n: usize) -> Result<Self> {
        let depth = Self::depth_of(n)?;
        let factors = (1..=depth)
            .map(|l| ButterflyFactor::identity(SupportPattern::square(n, l)?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }

    /// Square butterfly of size `n` with every in-support value drawn by `sample`.
    pub fn square_with<F: FnMut() -> f64>(n: usize, mut sample: F) -> Result<Self> {
        let depth = Self::depth_of(n)?;
        let factors = (1..=depth)
            .map(|l| {
                let p = SupportPattern::square(n, l)?;
                ButterflyFactor::from_values(p, (0..p.nnz()).map(|_| sample()).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }

    fn depth_of(n: usize) -> Result<usize> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Config(format!("size {n} is not a power of two >= 2")));
        }
        Ok(n.trailing_zeros() as usize)
    }

    pub fn rows(&self) -> usize {
        self.factors[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.factors[self.factors.len() - 1].cols()
    }

    pub fn factors(&self) -> &[ButterflyFactor] {
        &self.factors
    }

    pub fn factors_mut(&mut self) -> &mut [ButterflyFactor] {
        &mut self.factors
    }

    pub fn num_params(&self) -> usize {
        self.factors.iter().map(|f| f.pattern.nnz()).sum()
    }

    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        for f in &mut self.factors {
            f.init_uniform(rng);
        }
    }

    /// `y = W x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matvec_counted(x).map(|(y, _)| y)
    }

    /// `y = W x` together with the number of multiply-adds performed.
    pub fn matvec_counted(&self, x: &[f64]) -> Result<(Vec<f64>, usize)> {
        if x.len() != self.cols() {
            return Err(Error::shape("butterfly matvec", self.cols(), x.len()));
        }
        let mut ops = 0;
        let mut cur = x.to_vec();
        for f in self.factors.iter().rev() {
            let mut next = vec![0.0; f.rows()];
            ops += f.apply(&cur, &mut next);
            cur = next;
        }
        Ok((cur, ops))
    }

    /// Applies `W` to each of the `n` rows of `x` (shape `n × cols`).
    /// Returns the output (`n × rows`) and the per-factor inputs needed by
    /// [`ButterflyChain::backward_rows`].
    pub(crate) fn forward_rows(&self, x: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut inputs = Vec::with_capacity(self.factors.len());
        let mut cur = x.to_vec();
        for f in self.factors.iter().rev() {
            let (ci, ro) = (f.cols(), f.rows());
            let mut next = vec![0.0; n * ro];
            for s in 0..n {
                f.apply(&cur[s * ci..(s + 1) * ci], &mut next[s * ro..(s + 1) * ro]);
            }
            inputs.push(std::mem::replace(&mut cur, next));
        }
        inputs.reverse();
        (cur, inputs)
    }

    /// Inference-only variant of [`ButterflyChain::forward_rows`].
    pub(crate) fn apply_rows(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut cur = x.to_vec();
        for f in self.factors.iter().rev() {
            let (ci, ro) = (f.cols(), f.rows());
            let mut next = vec![0.0; n * ro];
            for s in 0..n {
                f.apply(&cur[s * ci..(s + 1) * ci], &mut next[s * ro..(s + 1) * ro]);
            }
            cur = next;
        }
        cur
    }

    /// Accumulates factor gradients and returns the gradient w.r.t. the `n` input rows.
    pub(crate) fn backward_rows(&mut self, inputs: &[Vec<f64>], dy: &[f64], n: usize) -> Vec<f64> {
        let mut grad = dy.to_vec();
        for (f, x) in self.factors.iter_mut().zip(inputs) {
            let (ci, ro) = (f.cols(), f.rows());
            let mut dx = vec![0.0; n * ci];
            for s in 0..n {
                f.backprop(
                    &x[s * ci..(s + 1) * ci],
                    &grad[s * ro..(s + 1) * ro],
                    &mut dx[s * ci..(s + 1) * ci],
                );
            }
            grad = dx;
        }
        grad
    }

    /// Explicit dense product `X⁽¹⁾ ⋯ X⁽ᴸ⁾` (row-major, `rows × cols`).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut acc = self.factors[0].to_dense();
        let mut acc_cols = self.factors[0].cols();
        let rows = self.rows();
        for f in &self.factors[1..] {
            let fd = f.to_dense();
            let fc = f.cols();
            let mut next = vec![0.0; rows * fc];
            for i in 0..rows {
                for k in 0..acc_cols {
                    let a = acc[i * acc_cols + k];
                    if a == 0.0 {
                        continue;
                    }
                    for j in 0..fc {
                        next[i * fc + j] += a * fd[k * fc + j];
                    }
                }
            }
            acc = next;
            acc_cols = fc;
        }
        acc
    }
}

/// Dense reconstruction of a chain; intended as a test oracle.
pub fn chain_to_dense(chain: &ButterflyChain) -> Vec<f64> {
    chain.to_dense()
}

/// Fast `y = W x` through the factors.
pub fn chain_matvec(chain: &ButterflyChain, x: &[f64]) -> Result<Vec<f64>> {
    chain.matvec(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_chain_is_identity() {
        let chain = ButterflyChain::square_identity(8).unwrap();
        let x: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        assert_eq!(chain.matvec(&x).unwrap(), x);
        let d = chain.to_dense();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(d[i * 8 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn all_ones_n4_gives_sum() {
        let chain = ButterflyChain::square_with(4, || 1.0).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(chain.matvec(&x).unwrap(), vec![10.0; 4]);
    }

    #[test]
    fn cannot_set_outside_support() {
        let mut f = ButterflyFactor::zeros(SupportPattern::square(4, 1).unwrap());
        assert!(f.set(0, 1, 1.0).is_err());
        assert!(f.set(0, 2, 1.0).is_ok());
        assert_eq!(f.get(0, 2), 1.0);
        assert_eq!(f.get(0, 1), 0.0);
    }

    #[test]
    fn single_factor_chain_densifies_to_factor() {
        let p = SupportPattern::new(2, 3, 2, 1).unwrap();
        let f = ButterflyFactor::from_values(p, (0..p.nnz()).map(|i| i as f64).collect()).unwrap();
        let chain = ButterflyChain::new(vec![f.clone()]).unwrap();
        assert_eq!(chain.to_dense(), f.to_dense());
    }

    #[test]
    fn matvec_rejects_wrong_length() {
        let chain = ButterflyChain::square_identity(4).unwrap();
        assert!(chain.matvec(&[1.0; 3]).is_err());
    }

    #[test]
    fn incompatible_factors_rejected() {
        let a = ButterflyFactor::zeros(SupportPattern::new(1, 2, 3, 1).unwrap());
        let b = ButterflyFactor::zeros(SupportPattern::new(1, 2, 2, 1).unwrap());
        assert!(ButterflyChain::new(vec![a, b]).is_err());
    }
}
