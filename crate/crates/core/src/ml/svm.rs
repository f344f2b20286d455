//! Kernel soft-margin SVM trained with sequential minimal optimization,
//! extended to multiclass by one-vs-one voting.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Kernel request: RBF gamma defaults to 1 / (dim * feature variance), the
/// common "scale" heuristic, resolved against the training matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    /// Box constraint.
    pub c: f64,
    pub kernel: KernelSpec,
    /// KKT tolerance.
    pub tol: f64,
    /// Consecutive full passes without an update before declaring convergence.
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            kernel: KernelSpec::Rbf { gamma: None },
            tol: 1e-3,
            max_passes: 10,
            seed: 0,
        }
    }
}

impl SvmConfig {
    fn validate(&self) -> Result<()> {
        if self.c <= 0.0 || !self.c.is_finite() {
            return Err(Error::config(format!("C must be positive, got {}", self.c)));
        }
        if let KernelSpec::Rbf { gamma: Some(g) } = self.kernel {
            if g <= 0.0 {
                return Err(Error::config(format!("rbf gamma must be positive, got {g}")));
            }
        }
        if self.tol <= 0.0 || self.max_passes == 0 {
            return Err(Error::config("tol must be > 0 and max_passes >= 1".to_string()));
        }
        Ok(())
    }
}

/// One trained binary machine of the one-vs-one ensemble. A non-negative
/// decision value votes for `pos`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub pos: usize,
    pub neg: usize,
    pub alpha: Vec<f64>,
    pub labels: Vec<f64>,
    pub support: Vec<Vec<f64>>,
    pub bias: f64,
}

impl BinarySvm {
    pub fn decision(&self, kernel: &Kernel, x: &[f64]) -> f64 {
        let mut f = self.bias;
        for i in 0..self.support.len() {
            f += self.alpha[i] * self.labels[i] * kernel.eval(&self.support[i], x);
        }
        f
    }

    /// Dual feasibility: 0 <= alpha <= C and |sum(alpha_i y_i)| <= tol.
    pub fn check_dual_feasibility(&self, c: f64, tol: f64) -> Result<()> {
        let eps = 1e-12;
        if let Some(&a) = self.alpha.iter().find(|&&a| a < -eps || a > c + eps) {
            return Err(Error::validation(format!(
                "alpha {a} outside the box [0, {c}]"
            )));
        }
        let balance: f64 = self.alpha.iter().zip(&self.labels).map(|(a, y)| a * y).sum();
        if balance.abs() > tol {
            return Err(Error::validation(format!(
                "equality constraint violated: sum(alpha*y) = {balance}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub classes: usize,
    pub dim: usize,
    pub kernel: Kernel,
    pub config: SvmConfig,
    pub machines: Vec<BinarySvm>,
}

impl SvmModel {
    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.classes];
        for m in &self.machines {
            if m.decision(&self.kernel, x) >= 0.0 {
                votes[m.pos] += 1;
            } else {
                votes[m.neg] += 1;
            }
        }
        // Ties break toward the lowest class index.
        let mut best = 0;
        for (k, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = k;
            }
        }
        best
    }
}

/// Simplified SMO on one binary subproblem over a precomputed kernel matrix.
///
/// Pairs a KKT-violating index with a random partner, solves the
/// two-variable subproblem analytically and clips to the box. The equality
/// constraint sum(alpha*y) = 0 is preserved exactly by every update.
fn smo_binary(
    gram: &[f64],
    n: usize,
    y: &[f64],
    cfg: &SvmConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    let c = cfg.c;
    let tol = cfg.tol;
    let mut alpha = vec![0.0; n];
    let mut b = 0.0;

    let decision = |alpha: &[f64], b: f64, i: usize| -> f64 {
        let mut f = b;
        for j in 0..n {
            if alpha[j] != 0.0 {
                f += alpha[j] * y[j] * gram[j * n + i];
            }
        }
        f
    };

    let mut passes = 0;
    let mut sweeps = 0;
    // Convergence normally comes from the quiet-pass rule; the sweep cap is a
    // hard stop against pathological cycling.
    let max_sweeps = 200 + 20 * n;
    while passes < cfg.max_passes && sweeps < max_sweeps {
        sweeps += 1;
        let mut changed = 0;
        for i in 0..n {
            let e_i = decision(&alpha, b, i) - y[i];
            let r = y[i] * e_i;
            if !((r < -tol && alpha[i] < c) || (r > tol && alpha[i] > 0.0)) {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let e_j = decision(&alpha, b, j) - y[j];

            let (a_i_old, a_j_old) = (alpha[i], alpha[j]);
            let (lo, hi) = if y[i] != y[j] {
                ((a_j_old - a_i_old).max(0.0), (c + a_j_old - a_i_old).min(c))
            } else {
                ((a_i_old + a_j_old - c).max(0.0), (a_i_old + a_j_old).min(c))
            };
            if lo >= hi {
                continue;
            }
            let eta = 2.0 * gram[i * n + j] - gram[i * n + i] - gram[j * n + j];
            if eta >= 0.0 {
                continue;
            }
            let mut a_j = a_j_old - y[j] * (e_i - e_j) / eta;
            a_j = a_j.clamp(lo, hi);
            if (a_j - a_j_old).abs() < 1e-7 {
                continue;
            }
            let a_i = a_i_old + y[i] * y[j] * (a_j_old - a_j);
            alpha[i] = a_i;
            alpha[j] = a_j;

            let b1 = b - e_i
                - y[i] * (a_i - a_i_old) * gram[i * n + i]
                - y[j] * (a_j - a_j_old) * gram[i * n + j];
            let b2 = b - e_j
                - y[i] * (a_i - a_i_old) * gram[i * n + j]
                - y[j] * (a_j - a_j_old) * gram[j * n + j];
            b = if a_i > 0.0 && a_i < c {
                b1
            } else if a_j > 0.0 && a_j < c {
                b2
            } else {
                (b1 + b2) / 2.0
            };
            changed += 1;
        }
        if changed == 0 {
            passes += 1;
        } else {
            passes = 0;
        }
    }
    (alpha, b)
}

/// Resolve the RBF gamma against the training matrix: 1 / (dim * variance of
/// all feature entries), the convention scikit-learn calls "scale".
fn resolve_kernel(spec: KernelSpec, x: &Tensor) -> Kernel {
    match spec {
        KernelSpec::Linear => Kernel::Linear,
        KernelSpec::Rbf { gamma: Some(g) } => Kernel::Rbf { gamma: g },
        KernelSpec::Rbf { gamma: None } => {
            let d = x.row_len().max(1);
            let data = x.data();
            let mean = data.iter().sum::<f64>() / data.len().max(1) as f64;
            let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / data.len().max(1) as f64;
            let denom = d as f64 * if var > 0.0 { var } else { 1.0 };
            Kernel::Rbf { gamma: 1.0 / denom }
        }
    }
}

/// Train a one-vs-one multiclass SVM on feature rows (N x D) with class
/// labels in [0, K).
pub fn smo_train(x: &Tensor, labels: &[usize], cfg: &SvmConfig) -> Result<SvmModel> {
    cfg.validate()?;
    if x.shape().len() != 2 {
        return Err(Error::validation(format!(
            "expected a 2-D feature matrix, got shape {:?}",
            x.shape()
        )));
    }
    let n = x.rows();
    if labels.len() != n || n == 0 {
        return Err(Error::training(format!(
            "feature rows ({n}) and labels ({}) must match and be nonempty",
            labels.len()
        )));
    }
    let classes = labels.iter().max().map(|&m| m + 1).unwrap_or(0);
    let mut counts = vec![0usize; classes];
    for &y in labels {
        counts[y] += 1;
    }
    if classes < 2 || counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::training(
            "training data must contain at least two classes".to_string(),
        ));
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::training(
            "every class index up to the maximum must have at least one row".to_string(),
        ));
    }

    let kernel = resolve_kernel(cfg.kernel, x);
    // Echo the resolved kernel so the stored config round-trips.
    let config = SvmConfig {
        kernel: match kernel {
            Kernel::Linear => KernelSpec::Linear,
            Kernel::Rbf { gamma } => KernelSpec::Rbf { gamma: Some(gamma) },
        },
        ..*cfg
    };
    let dim = x.row_len();
    let mut machines = Vec::with_capacity(classes * (classes - 1) / 2);
    for pos in 0..classes {
        for neg in pos + 1..classes {
            let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == pos || labels[i] == neg).collect();
            let m = idx.len();
            let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == pos { 1.0 } else { -1.0 }).collect();
            let rows: Vec<&[f64]> = idx.iter().map(|&i| x.row(i)).collect();

            let mut gram = vec![0.0; m * m];
            for a in 0..m {
                for b in a..m {
                    let k = kernel.eval(rows[a], rows[b]);
                    gram[a * m + b] = k;
                    gram[b * m + a] = k;
                }
            }

            let mut rng = stream(cfg.seed, &[tag::TRAIN, pos as u64, neg as u64]);
            let (alpha, bias) = smo_binary(&gram, m, &y, cfg, &mut rng);

            // Keep only the support vectors.
            let mut sv_alpha = Vec::new();
            let mut sv_y = Vec::new();
            let mut sv_rows = Vec::new();
            for (k, &a) in alpha.iter().enumerate() {
                if a > 1e-12 {
                    sv_alpha.push(a);
                    sv_y.push(y[k]);
                    sv_rows.push(rows[k].to_vec());
                }
            }
            machines.push(BinarySvm {
                pos,
                neg,
                alpha: sv_alpha,
                labels: sv_y,
                support: sv_rows,
                bias,
            });
        }
    }
    Ok(SvmModel { classes, dim, kernel, config, machines })
}
