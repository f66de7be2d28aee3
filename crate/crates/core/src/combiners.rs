//! Combination weights.
//!
//! `c[(n, m)]` is the weight node `m` gives to neighbor `n`, so each column
//! of a [`CombinationMatrix`] holds one node's weights and sums to one.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::topology::Network;

/// Column sums must match one within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Default floor on distances in the adaptive rule.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Weight selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Uniform,
    Metropolis,
    RelativeVariance,
    Adaptive,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Uniform,
        Policy::Metropolis,
        Policy::RelativeVariance,
        Policy::Adaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Uniform => "uniform",
            Policy::Metropolis => "metropolis",
            Policy::RelativeVariance => "relvar",
            Policy::Adaptive => "adaptive",
        }
    }

    pub fn is_static(self) -> bool {
        self != Policy::Adaptive
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Policy::Uniform),
            "metropolis" => Ok(Policy::Metropolis),
            "relvar" | "relative_variance" => Ok(Policy::RelativeVariance),
            "adaptive" => Ok(Policy::Adaptive),
            _ => Err(Error::InvalidParameter {
                name: "policy",
                reason: "expected one of uniform, metropolis, relvar, adaptive",
            }),
        }
    }
}

/// Left-stochastic weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix(Matrix);

impl CombinationMatrix {
    pub fn identity(n: usize) -> Self {
        CombinationMatrix(Matrix::identity(n))
    }

    /// Wraps `w` after checking it is square, non-negative and
    /// column-stochastic.
    pub fn from_matrix(w: Matrix) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::NotSquare {
                op: "combination matrix",
                rows: w.rows(),
                cols: w.cols(),
            });
        }
        let c = CombinationMatrix(w);
        c.check_stochastic(STOCHASTIC_TOL)?;
        Ok(c)
    }

    pub fn n_nodes(&self) -> usize {
        self.0.rows()
    }

    /// Weight node `m` assigns to node `n`.
    pub fn weight(&self, n: usize, m: usize) -> f64 {
        self.0[(n, m)]
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        self.0.column(m)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn check_stochastic(&self, tol: f64) -> Result<()> {
        let n = self.n_nodes();
        for m in 0..n {
            let mut sum = 0.0;
            for k in 0..n {
                let w = self.0[(k, m)];
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::InvalidWeight {
                        row: k,
                        column: m,
                        weight: w,
                    });
                }
                sum += w;
            }
            if !((sum - 1.0).abs() <= tol) {
                return Err(Error::NotStochastic { column: m, sum });
            }
        }
        Ok(())
    }

    /// Checks that weights vanish outside each node's neighborhood.
    pub fn check_support(&self, net: &Network) -> Result<()> {
        let n = self.n_nodes();
        if net.n_nodes() != n {
            return Err(Error::DimensionMismatch {
                op: "weight support",
                left: (n, n),
                right: (net.n_nodes(), net.n_nodes()),
            });
        }
        for m in 0..n {
            for k in 0..n {
                if k != m && !net.adjacent(k, m) && self.0[(k, m)] != 0.0 {
                    return Err(Error::InvalidWeight {
                        row: k,
                        column: m,
                        weight: self.0[(k, m)],
                    });
                }
            }
        }
        Ok(())
    }

    /// Element-wise mean of several matrices over the same nodes.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a CombinationMatrix>) -> Option<Self> {
        let mut iter = items.into_iter();
        let first = iter.next()?;
        let mut acc = first.0.clone();
        let mut count = 1usize;
        for c in iter {
            acc = acc.add(&c.0).ok()?;
            count += 1;
        }
        Some(CombinationMatrix(acc.scale(1.0 / count as f64)))
    }

    /// Replaces column `m` with weights over `support`.
    fn set_column(&mut self, m: usize, support: &[usize], weights: &[f64]) {
        let n = self.n_nodes();
        for k in 0..n {
            self.0[(k, m)] = 0.0;
        }
        for (&k, &w) in support.iter().zip(weights) {
            self.0[(k, m)] = w;
        }
    }
}

/// `A = C^T`, used to gate which neighbors' measurements a node absorbs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix(Matrix);

impl DiffusionMatrix {
    pub fn identity(n: usize) -> Self {
        DiffusionMatrix(Matrix::identity(n))
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.0[(n, m)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }
}

pub fn diffusion_matrix(c: &CombinationMatrix) -> DiffusionMatrix {
    DiffusionMatrix(c.0.transpose())
}

fn from_columns(
    net: &Network,
    mut column: impl FnMut(usize, &[usize]) -> Vec<f64>,
) -> CombinationMatrix {
    let n = net.n_nodes();
    let mut c = CombinationMatrix(Matrix::zeros(n, n));
    for m in 0..n {
        let support = net.neighborhood(m);
        let weights = column(m, support);
        c.set_column(m, support, &weights);
    }
    c
}

/// `c_nm = 1 / |N_m|` over the neighborhood.
pub fn uniform_weights(net: &Network) -> CombinationMatrix {
    from_columns(net, |_, support| {
        let w = 1.0 / support.len() as f64;
        support.iter().map(|_| w).collect()
    })
}

/// `c_nm = 1 / max(|N_n|, |N_m|)` for neighbors, remainder on the diagonal.
pub fn metropolis_weights(net: &Network) -> CombinationMatrix {
    from_columns(net, |m, support| {
        let size_m = support.len();
        let mut weights: Vec<f64> = support
            .iter()
            .map(|&k| {
                if k == m {
                    0.0
                } else {
                    1.0 / size_m.max(net.neighborhood(k).len()) as f64
                }
            })
            .collect();
        let off: f64 = weights.iter().sum();
        if let Some(pos) = support.iter().position(|&k| k == m) {
            weights[pos] = 1.0 - off;
        }
        weights
    })
}

/// `c_nm` proportional to the inverse noise variance of node `n`.
pub fn relative_variance_weights(net: &Network, sigma2: &[f64]) -> Result<CombinationMatrix> {
    if sigma2.len() != net.n_nodes() {
        return Err(Error::DimensionMismatch {
            op: "relative variance weights",
            left: (net.n_nodes(), 1),
            right: (sigma2.len(), 1),
        });
    }
    if !sigma2.iter().all(|&s| s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: "noise variances must be positive and finite",
        });
    }
    Ok(from_columns(net, |_, support| {
        let total: f64 = support.iter().map(|&k| 1.0 / sigma2[k]).sum();
        support.iter().map(|&k| (1.0 / sigma2[k]) / total).collect()
    }))
}

/// Adaptive weights of node `m` over its neighborhood.
///
/// With the anchor `psi[m] + q`, each neighbor `n` receives weight
/// proportional to `d_n^-2`, where `d_n = max(|anchor - psi[n]|, eps)`. The
/// self-distance reduces to `|q|`. `q` must already be in state coordinates.
/// The returned weights align with `neighborhood`.
pub fn adaptive_weight_row(
    m: usize,
    psi: &[Vector],
    q: &Vector,
    neighborhood: &[usize],
    eps: f64,
) -> Result<Vec<f64>> {
    if m >= psi.len() {
        return Err(Error::NodeOutOfRange {
            node: m,
            n_nodes: psi.len(),
        });
    }
    let anchor = psi[m].add(q)?;
    let mut inv_sq = Vec::with_capacity(neighborhood.len());
    for &n in neighborhood {
        let d = psi
            .get(n)
            .ok_or(Error::NodeOutOfRange {
                node: n,
                n_nodes: psi.len(),
            })
            .and_then(|p| anchor.sub(p))?
            .norm()
            .max(eps);
        inv_sq.push(1.0 / (d * d));
    }
    let total: f64 = inv_sq.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::NonFinite {
            what: "adaptive weights",
        });
    }
    Ok(inv_sq.into_iter().map(|w| w / total).collect())
}

/// Weight matrix of a static policy on `net`.
pub fn static_weights(policy: Policy, net: &Network, sigma2: &[f64]) -> Result<CombinationMatrix> {
    match policy {
        Policy::Uniform => Ok(uniform_weights(net)),
        Policy::Metropolis => Ok(metropolis_weights(net)),
        Policy::RelativeVariance => relative_variance_weights(net, sigma2),
        Policy::Adaptive => Err(Error::InvalidParameter {
            name: "policy",
            reason: "adaptive weights depend on the filter state",
        }),
    }
}

/// Builder used by the engine to assemble adaptive columns in place.
pub(crate) fn set_column(c: &mut CombinationMatrix, m: usize, support: &[usize], weights: &[f64]) {
    c.set_column(m, support, weights);
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn path3() -> Network {
        Network::from_edges(vec![[0.0; 2]; 3], &[(0, 1), (1, 2)]).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15)
    }

    #[test]
    fn uniform_examples() {
        let single = Network::from_edges(vec![[0.0; 2]], &[]).unwrap();
        assert_eq!(uniform_weights(&single).weight(0, 0), 1.0);

        let c = uniform_weights(&path3());
        assert!(close(&c.column(1), &[1.0 / 3.0; 3]));
        assert!(close(&c.column(0), &[0.5, 0.5, 0.0]));

        let star =
            Network::from_edges(vec![[0.0; 2]; 5], &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert!(close(&uniform_weights(&star).column(0), &[0.2; 5]));
    }

    #[test]
    fn metropolis_examples() {
        let c = metropolis_weights(&path3());
        assert!(close(&c.column(0), &[2.0 / 3.0, 1.0 / 3.0, 0.0]));
        assert!(close(&c.column(1), &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]));

        let single = Network::from_edges(vec![[0.0; 2]], &[]).unwrap();
        assert_eq!(metropolis_weights(&single).weight(0, 0), 1.0);

        let pair = Network::from_edges(vec![[0.0; 2]; 2], &[(0, 1)]).unwrap();
        let c = metropolis_weights(&pair);
        assert!(close(&c.column(0), &[0.5, 0.5]));
        assert!(close(&c.column(1), &[0.5, 0.5]));
    }

    #[test]
    fn relative_variance_examples() {
        let pair = Network::from_edges(vec![[0.0; 2]; 2], &[(0, 1)]).unwrap();
        let c = relative_variance_weights(&pair, &[1.0, 4.0]).unwrap();
        assert!(close(&c.column(0), &[0.8, 0.2]));

        let net = path3();
        let c = relative_variance_weights(&net, &[0.3; 3]).unwrap();
        let u = uniform_weights(&net);
        assert!(c.as_matrix().max_abs_diff(u.as_matrix()).unwrap() < 1e-15);

        let single = Network::from_edges(vec![[0.0; 2]], &[]).unwrap();
        assert_eq!(
            relative_variance_weights(&single, &[2.0])
                .unwrap()
                .weight(0, 0),
            1.0
        );
        assert!(relative_variance_weights(&net, &[0.3, 0.0, 0.3]).is_err());
        assert!(relative_variance_weights(&net, &[0.3, -1.0, 0.3]).is_err());
    }

    fn v(x: f64) -> Vector {
        Vector::from_vec(vec![x, 0.0, 0.0, 0.0])
    }

    #[test]
    fn adaptive_examples() {
        let w = adaptive_weight_row(0, &[v(0.0)], &v(0.3), &[0], 1e-12).unwrap();
        assert_eq!(w, vec![1.0]);

        // anchor at 1: self distance |q| = 1, neighbor at -1 is 2 away
        let psi = [v(0.0), v(-1.0)];
        let w = adaptive_weight_row(0, &psi, &v(1.0), &[0, 1], 1e-12).unwrap();
        assert!(close(&w, &[0.8, 0.2]));

        // anchor at 2: self, and neighbors at 0 and 4, all 2 away
        let psi = [v(0.0), v(0.0), v(4.0)];
        let w = adaptive_weight_row(0, &psi, &v(2.0), &[0, 1, 2], 1e-12).unwrap();
        assert!(close(&w, &[1.0 / 3.0; 3]));
    }

    #[test]
    fn adaptive_identical_estimates_are_uniform() {
        let psi = vec![v(1.0); 4];
        let w = adaptive_weight_row(2, &psi, &v(0.0), &[0, 2, 3], 1e-12).unwrap();
        assert!(close(&w, &[1.0 / 3.0; 3]));
    }

    #[test]
    fn diffusion_is_transpose() {
        assert_eq!(
            diffusion_matrix(&CombinationMatrix::identity(3)),
            DiffusionMatrix::identity(3)
        );
        let c = uniform_weights(&path3());
        let a = diffusion_matrix(&c);
        assert_eq!(a.as_matrix(), &c.as_matrix().transpose());
        for m in 0..3 {
            let row: f64 = (0..3).map(|n| a.get(m, n)).sum();
            assert!((row - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
        assert!("magic".parse::<Policy>().is_err());
    }

    #[test]
    fn support_and_stochastic_checks() {
        let net = path3();
        let mut w = Matrix::identity(3);
        w[(0, 2)] = 0.5;
        w[(2, 2)] = 0.5;
        let c = CombinationMatrix::from_matrix(w).unwrap();
        assert!(c.check_support(&net).is_err());
        assert!(CombinationMatrix::from_matrix(Matrix::scaled_identity(3, 0.9)).is_err());
    }
}
