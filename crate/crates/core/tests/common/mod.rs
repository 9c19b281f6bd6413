//! Test-side oracles, written independently of the library internals.
#![allow(dead_code)]

pub mod grad;

use sparse_mia::butterfly::{ButterflyChain, SupportPattern};

/// Dense 0/1 matrix of `I_a ⊗ 1_{b×c} ⊗ I_d` by explicit Kronecker products.
pub fn kron_mask(a: usize, b: usize, c: usize, d: usize) -> Vec<Vec<u64>> {
    fn kron(x: &[Vec<u64>], y: &[Vec<u64>]) -> Vec<Vec<u64>> {
        let (xr, xc, yr, yc) = (x.len(), x[0].len(), y.len(), y[0].len());
        let mut out = vec![vec![0; xc * yc]; xr * yr];
        for i in 0..xr {
            for j in 0..xc {
                for k in 0..yr {
                    for l in 0..yc {
                        out[i * yr + k][j * yc + l] = x[i][j] * y[k][l];
                    }
                }
            }
        }
        out
    }
    let eye = |n: usize| -> Vec<Vec<u64>> {
        (0..n).map(|i| (0..n).map(|j| u64::from(i == j)).collect()).collect()
    };
    let ones = vec![vec![1u64; c]; b];
    kron(&kron(&eye(a), &ones), &eye(d))
}

pub fn int_matmul(x: &[Vec<u64>], y: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let (n, k, m) = (x.len(), y.len(), y[0].len());
    assert_eq!(x[0].len(), k);
    let mut out = vec![vec![0; m]; n];
    for i in 0..n {
        for t in 0..k {
            if x[i][t] != 0 {
                for j in 0..m {
                    out[i][j] += x[i][t] * y[t][j];
                }
            }
        }
    }
    out
}

/// Product of the chain's factors, each densified entry by entry through `get`.
pub fn oracle_dense(chain: &ButterflyChain) -> Vec<Vec<f64>> {
    let mut acc: Option<Vec<Vec<f64>>> = None;
    for f in chain.factors() {
        let m: Vec<Vec<f64>> = (0..f.rows())
            .map(|r| (0..f.cols()).map(|c| f.get(r, c)).collect())
            .collect();
        acc = Some(match acc {
            None => m,
            Some(a) => {
                let mut out = vec![vec![0.0; m[0].len()]; a.len()];
                for i in 0..a.len() {
                    for t in 0..m.len() {
                        for j in 0..m[0].len() {
                            out[i][j] += a[i][t] * m[t][j];
                        }
                    }
                }
                out
            }
        });
    }
    acc.expect("nonempty chain")
}

pub fn dense_matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn diff_norm(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn divisor_triples(n: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for a in 1..=n {
        if !n.is_multiple_of(a) {
            continue;
        }
        for d in 1..=n / a {
            if (n / a).is_multiple_of(d) {
                out.push((a, n / a / d, d));
            }
        }
    }
    out
}

/// Fewest parameters of any chain of `depth` Kronecker-pattern factors
/// from `rows` to `cols` whose full supports multiply to the all-ones
/// matrix with exactly one path per entry and whose intermediate
/// dimensions are monotone. Exhaustive; small sizes only.
pub fn brute_force_min_params(rows: usize, cols: usize, depth: usize) -> Option<usize> {
    fn rec(
        dims_left: usize,
        cur: usize,
        cols: usize,
        increasing: bool,
        acc: Option<Vec<Vec<u64>>>,
        params: usize,
        best: &mut Option<usize>,
    ) {
        if dims_left == 0 {
            let acc = acc.expect("at least one factor");
            if cur == cols && acc.iter().all(|r| r.iter().all(|&v| v == 1)) {
                *best = Some(best.map_or(params, |b| b.min(params)));
            }
            return;
        }
        let next_dims: Vec<usize> = if dims_left == 1 {
            vec![cols]
        } else if increasing {
            (cur..=cols).collect()
        } else {
            (cols..=cur).collect()
        };
        for next in next_dims {
            for (a, b, d) in divisor_triples(cur) {
                if next % (a * d) != 0 {
                    continue;
                }
                let c = next / (a * d);
                let m = kron_mask(a, b, c, d);
                let prod = match &acc {
                    None => m,
                    Some(p) => int_matmul(p, &m),
                };
                rec(dims_left - 1, next, cols, increasing, Some(prod), params + a * b * c * d, best);
            }
        }
    }
    let mut best = None;
    rec(depth, rows, cols, rows <= cols, None, 0, &mut best);
    best
}

pub fn pattern_mask(p: &SupportPattern) -> Vec<Vec<u64>> {
    let flat = p.to_dense_mask();
    flat.chunks(p.cols())
        .map(|r| r.iter().map(|&k| u64::from(k)).collect())
        .collect()
}
