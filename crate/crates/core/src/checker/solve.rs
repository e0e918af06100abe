//! Solvers for fixed-point systems `x = A x + b` where `A` is substochastic.

use super::{CheckError, SolverConfig, SolverMethod};

/// States above this count go to Gauss-Seidel under [`SolverMethod::Auto`].
pub const DIRECT_LIMIT: usize = 500;

/// Sparse system over `n` unknowns: `x_i = sum_j coeffs[i] (j, a_ij) x_j + rhs[i]`.
#[derive(Debug, Clone)]
pub struct FixedPointSystem {
    pub coeffs: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl FixedPointSystem {
    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    /// Max-norm of `x - A x - b`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.rhs)
            .zip(x)
            .map(|((row, b), xi)| {
                let ax: f64 = row.iter().map(|(j, a)| a * x[*j]).sum();
                (xi - ax - b).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn solve(&self, config: &SolverConfig) -> Result<Vec<f64>, CheckError> {
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let direct = match config.method {
            SolverMethod::Direct => true,
            SolverMethod::Iterative => false,
            SolverMethod::Auto => self.len() <= DIRECT_LIMIT,
        };
        let x = if direct {
            self.solve_direct()?
        } else {
            self.solve_gauss_seidel(config)?
        };
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let residual = self.residual(&x);
        if !(residual <= config.tolerance * scale) {
            return Err(CheckError::NonConvergence { residual, iterations: None });
        }
        Ok(x)
    }

    /// Gaussian elimination with partial pivoting on `(I - A) x = b`.
    fn solve_direct(&self) -> Result<Vec<f64>, CheckError> {
        let n = self.len();
        let mut m = vec![0.0; n * (n + 1)];
        let w = n + 1;
        for (i, row) in self.coeffs.iter().enumerate() {
            m[i * w + i] = 1.0;
            for &(j, a) in row {
                m[i * w + j] -= a;
            }
            m[i * w + n] = self.rhs[i];
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&a, &b| m[a * w + col].abs().total_cmp(&m[b * w + col].abs()))
                .expect("non-empty range");
            if m[pivot * w + col].abs() < 1e-300 {
                return Err(CheckError::Singular);
            }
            if pivot != col {
                for k in 0..w {
                    m.swap(pivot * w + k, col * w + k);
                }
            }
            let diag = m[col * w + col];
            for r in col + 1..n {
                let f = m[r * w + col] / diag;
                if f != 0.0 {
                    m[r * w + col] = 0.0;
                    for k in col + 1..w {
                        m[r * w + k] -= f * m[col * w + k];
                    }
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = m[i * w + n];
            for k in i + 1..n {
                acc -= m[i * w + k] * x[k];
            }
            x[i] = acc / m[i * w + i];
        }
        Ok(x)
    }

    fn solve_gauss_seidel(&self, config: &SolverConfig) -> Result<Vec<f64>, CheckError> {
        let n = self.len();
        let diag: Vec<f64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().filter(|(j, _)| *j == i).map(|(_, a)| a).sum())
            .collect();
        let mut x = vec![0.0; n];
        for iter in 1..=config.max_iterations {
            let mut delta = 0.0f64;
            for i in 0..n {
                let off: f64 = self.coeffs[i]
                    .iter()
                    .filter(|(j, _)| *j != i)
                    .map(|(j, a)| a * x[*j])
                    .sum();
                let new = (off + self.rhs[i]) / (1.0 - diag[i]);
                delta = delta.max((new - x[i]).abs());
                x[i] = new;
            }
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if delta <= config.tolerance * 1e-3 * scale && self.residual(&x) <= config.tolerance * scale {
                return Ok(x);
            }
            if iter == config.max_iterations {
                return Err(CheckError::NonConvergence {
                    residual: self.residual(&x),
                    iterations: Some(iter),
                });
            }
        }
        unreachable!("max_iterations is positive")
    }
}
