use crate::butterfly::ButterflyChain;
use crate::nn::Parameter;
use crate::tensor::{matmul_nt, Tensor};

/// A linear map `rows × cols`, stored either densely or as a butterfly chain.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightMatrix {
    Dense(Parameter),
    Butterfly(ButterflyChain),
}

/// Intermediate values kept by a training forward pass.
#[derive(Clone, Debug)]
pub(crate) enum WeightCache {
    Dense,
    Butterfly(Vec<Vec<f64>>),
}

impl WeightMatrix {
    pub fn dense(rows: usize, cols: usize, prunable: bool) -> Self {
        WeightMatrix::Dense(Parameter::zeros(&[rows, cols], prunable))
    }

    pub fn rows(&self) -> usize {
        match self {
            WeightMatrix::Dense(p) => p.value.shape()[0],
            WeightMatrix::Butterfly(c) => c.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            WeightMatrix::Dense(p) => p.value.shape()[1],
            WeightMatrix::Butterfly(c) => c.cols(),
        }
    }

    pub fn is_butterfly(&self) -> bool {
        matches!(self, WeightMatrix::Butterfly(_))
    }

    /// Row-major dense `rows × cols` matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            WeightMatrix::Dense(p) => p.value.data().to_vec(),
            WeightMatrix::Butterfly(c) => c.to_dense(),
        }
    }

    pub fn densified(&self) -> WeightMatrix {
        match self {
            WeightMatrix::Dense(_) => self.clone(),
            WeightMatrix::Butterfly(c) => {
                let t = Tensor::from_vec(&[c.rows(), c.cols()], c.to_dense())
                    .expect("dense reconstruction has rows*cols entries");
                WeightMatrix::Dense(Parameter::new(t, false).with_decay(true))
            }
        }
    }

    /// `out[s] = W x[s]` for `n` rows of `x`.
    pub(crate) fn apply_rows(&self, x: &[f64], n: usize) -> Vec<f64> {
        match self {
            WeightMatrix::Dense(p) => matmul_nt(x, p.value.data(), n, self.rows(), self.cols()),
            WeightMatrix::Butterfly(c) => c.apply_rows(x, n),
        }
    }

    pub(crate) fn forward_rows(&self, x: &[f64], n: usize) -> (Vec<f64>, WeightCache) {
        match self {
            WeightMatrix::Dense(_) => (self.apply_rows(x, n), WeightCache::Dense),
            WeightMatrix::Butterfly(c) => {
                let (y, inputs) = c.forward_rows(x, n);
                (y, WeightCache::Butterfly(inputs))
            }
        }
    }

    /// Accumulates weight gradients and returns `dx` (`n × cols`).
    pub(crate) fn backward_rows(
        &mut self,
        x: &[f64],
        cache: &WeightCache,
        dy: &[f64],
        n: usize,
    ) -> Vec<f64> {
        let (rows, cols) = (self.rows(), self.cols());
        match (self, cache) {
            (WeightMatrix::Dense(p), _) => {
                let w = p.value.data().to_vec();
                let gw = p.grad_mut();
                let mut dx = vec![0.0; n * cols];
                for s in 0..n {
                    let xs = &x[s * cols..(s + 1) * cols];
                    let dxs = &mut dx[s * cols..(s + 1) * cols];
                    for r in 0..rows {
                        let g = dy[s * rows + r];
                        if g == 0.0 {
                            continue;
                        }
                        let wr = &w[r * cols..(r + 1) * cols];
                        let gr = &mut gw[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            gr[c] += g * xs[c];
                            dxs[c] += g * wr[c];
                        }
                    }
                }
                p.mask_grad();
                dx
            }
            (WeightMatrix::Butterfly(c), WeightCache::Butterfly(inputs)) => {
                c.backward_rows(inputs, dy, n)
            }
            (WeightMatrix::Butterfly(_), WeightCache::Dense) => {
                unreachable!("butterfly weight paired with dense cache")
            }
        }
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        match self {
            WeightMatrix::Dense(p) => out.push((prefix.to_string(), p)),
            WeightMatrix::Butterfly(c) => {
                for (i, f) in c.factors().iter().enumerate() {
                    out.push((format!("{prefix}.factor{i}"), &f.values));
                }
            }
        }
    }

    pub(crate) fn collect_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Parameter)>,
    ) {
        match self {
            WeightMatrix::Dense(p) => out.push((prefix.to_string(), p)),
            WeightMatrix::Butterfly(c) => {
                for (i, f) in c.factors_mut().iter_mut().enumerate() {
                    out.push((format!("{prefix}.factor{i}"), &mut f.values));
                }
            }
        }
    }
}
