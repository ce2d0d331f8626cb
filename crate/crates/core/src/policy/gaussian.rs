use rand::Rng;

use crate::error::{ensure_dim, Result};
use crate::numerics::{CholeskyFactor, Matrix};
use crate::scalar::{lit, Scalar};

/// Full-covariance Gaussian action distribution `N(mean, A Aᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead<T> {
    pub mean: Vec<T>,
    pub chol: CholeskyFactor<T>,
}

/// Gradient of a scalar with respect to a head's mean and the entries of its
/// lower-triangular factor (upper triangle is always zero).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrad<T> {
    pub mean: Vec<T>,
    pub lower: Matrix<T>,
}

impl<T: Scalar> GaussianGrad<T> {
    pub fn zeros(dim: usize) -> Self {
        GaussianGrad {
            mean: vec![T::zero(); dim],
            lower: Matrix::zeros(dim, dim),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &GaussianGrad<T>, scale: T) {
        for (a, &b) in self.mean.iter_mut().zip(&other.mean) {
            *a += scale * b;
        }
        for (a, &b) in self.lower.as_mut_slice().iter_mut().zip(other.lower.as_slice()) {
            *a += scale * b;
        }
    }
}

fn half<T: Scalar>() -> T {
    lit(0.5)
}

impl<T: Scalar> GaussianHead<T> {
    pub fn new(mean: Vec<T>, chol: CholeskyFactor<T>) -> Result<Self> {
        ensure_dim("GaussianHead", chol.dim(), mean.len())?;
        Ok(GaussianHead { mean, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_norm(&self) -> T {
        let d: T = lit(self.dim() as f64);
        -(half::<T>() * d * (T::PI() + T::PI()).ln()) - half::<T>() * self.chol.log_det_covariance()
    }

    /// Whitened residual `A⁻¹ (a − μ)`.
    fn whiten(&self, action: &[T]) -> Vec<T> {
        let diff: Vec<T> = action.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        self.chol.solve_lower(&diff)
    }

    pub fn log_prob(&self, action: &[T]) -> Result<T> {
        ensure_dim("GaussianHead::log_prob", self.dim(), action.len())?;
        let z = self.whiten(action);
        let sq: T = z.iter().map(|&v| v * v).sum();
        Ok(self.log_norm() - half::<T>() * sq)
    }

    /// Log-density and its gradient with respect to the mean and factor.
    pub fn log_prob_grad(&self, action: &[T]) -> Result<(T, GaussianGrad<T>)> {
        ensure_dim("GaussianHead::log_prob_grad", self.dim(), action.len())?;
        let n = self.dim();
        let z = self.whiten(action);
        let sq: T = z.iter().map(|&v| v * v).sum();
        let lp = self.log_norm() - half::<T>() * sq;
        // ∂/∂μ = A⁻ᵀ z ; ∂/∂A = (A⁻ᵀ z) zᵀ − diag(1/A_ii)
        let u = self.chol.solve_lower_transpose(&z);
        let mut lower = Matrix::zeros(n, n);
        for r in 0..n {
            for c in 0..=r {
                lower[(r, c)] = u[r] * z[c];
            }
            lower[(r, r)] -= T::one() / self.chol.lower()[(r, r)];
        }
        Ok((lp, GaussianGrad { mean: u, lower }))
    }

    /// Draws `μ + A z` and returns it with its log-density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<T>, T) {
        let z: Vec<T> = (0..self.dim()).map(|_| T::standard_normal(rng)).collect();
        let az = self.chol.mul_vec(&z).expect("matching dims");
        let action = self.mean.iter().zip(&az).map(|(&m, &v)| m + v).collect();
        let sq: T = z.iter().map(|&v| v * v).sum();
        (action, self.log_norm() - half::<T>() * sq)
    }

    pub fn entropy(&self) -> T {
        let d: T = lit(self.dim() as f64);
        half::<T>() * d * (T::one() + (T::PI() + T::PI()).ln()) + half::<T>() * self.chol.log_det_covariance()
    }
}

/// KL(old ‖ new) split into the mean and covariance contributions:
/// `½ (μₙ−μₒ)ᵀ Σₙ⁻¹ (μₙ−μₒ)` and `½ (tr(Σₙ⁻¹Σₒ) − n + ln det Σₙ/det Σₒ)`.
pub fn kl_decoupled<T: Scalar>(old: &GaussianHead<T>, new: &GaussianHead<T>) -> Result<(T, T)> {
    ensure_dim("kl_decoupled", old.dim(), new.dim())?;
    let n = old.dim();
    let diff: Vec<T> = new.mean.iter().zip(&old.mean).map(|(&a, &b)| a - b).collect();
    let y = new.chol.solve_lower(&diff);
    let mean_term = half::<T>() * y.iter().map(|&v| v * v).sum::<T>();
    let w = new.chol.solve_lower_matrix(old.chol.lower());
    let trace: T = w.as_slice().iter().map(|&v| v * v).sum();
    let cov_term = half::<T>()
        * (trace - lit(n as f64) + new.chol.log_det_covariance() - old.chol.log_det_covariance());
    Ok((mean_term.max(T::zero()), cov_term.max(T::zero())))
}

/// Decoupled KL terms with gradients taken with respect to the `new` head.
pub fn kl_decoupled_grad_new<T: Scalar>(
    old: &GaussianHead<T>,
    new: &GaussianHead<T>,
) -> Result<((T, T), GaussianGrad<T>, GaussianGrad<T>)> {
    ensure_dim("kl_decoupled", old.dim(), new.dim())?;
    let n = old.dim();
    let diff: Vec<T> = new.mean.iter().zip(&old.mean).map(|(&a, &b)| a - b).collect();
    let y = new.chol.solve_lower(&diff);
    let mean_term = half::<T>() * y.iter().map(|&v| v * v).sum::<T>();
    let u = new.chol.solve_lower_transpose(&y);
    let mut g_mean = GaussianGrad::zeros(n);
    g_mean.mean.clone_from(&u);
    for r in 0..n {
        for c in 0..=r {
            g_mean.lower[(r, c)] = -u[r] * y[c];
        }
    }

    // W = A⁻¹ Aₒ ; ∂(½‖W‖²)/∂A = −A⁻ᵀ W Wᵀ ; ∂(½ ln det Σ)/∂A = diag(1/A_ii)
    let w = new.chol.solve_lower_matrix(old.chol.lower());
    let trace: T = w.as_slice().iter().map(|&v| v * v).sum();
    let cov_term = half::<T>()
        * (trace - lit(n as f64) + new.chol.log_det_covariance() - old.chol.log_det_covariance());
    let wwt = w.gram();
    let mut g_cov = GaussianGrad::zeros(n);
    for c in 0..n {
        let col: Vec<T> = (0..n).map(|r| wwt[(r, c)]).collect();
        let solved = new.chol.solve_lower_transpose(&col);
        for (r, v) in solved.into_iter().enumerate() {
            if c <= r {
                g_cov.lower[(r, c)] = -v;
            }
        }
    }
    for i in 0..n {
        g_cov.lower[(i, i)] += T::one() / new.chol.lower()[(i, i)];
    }
    Ok(((mean_term, cov_term), g_mean, g_cov))
}

/// Decoupled KL terms with gradients taken with respect to the `old` head.
pub fn kl_decoupled_grad_old<T: Scalar>(
    old: &GaussianHead<T>,
    new: &GaussianHead<T>,
) -> Result<((T, T), GaussianGrad<T>, GaussianGrad<T>)> {
    ensure_dim("kl_decoupled", old.dim(), new.dim())?;
    let n = old.dim();
    let (mean_term, cov_term) = kl_decoupled(old, new)?;
    let diff: Vec<T> = new.mean.iter().zip(&old.mean).map(|(&a, &b)| a - b).collect();
    let mut g_mean = GaussianGrad::zeros(n);
    for (g, v) in g_mean.mean.iter_mut().zip(new.chol.solve_covariance(&diff)) {
        *g = -v;
    }
    // ∂/∂Aₒ ½ tr(Σₙ⁻¹ Aₒ Aₒᵀ) = Σₙ⁻¹ Aₒ ; ∂/∂Aₒ (−½ ln det Σₒ) = −diag(1/Aₒ_ii)
    let mut g_cov = GaussianGrad::zeros(n);
    for c in 0..n {
        let col: Vec<T> = (0..n).map(|r| old.chol.lower()[(r, c)]).collect();
        let solved = new.chol.solve_covariance(&col);
        for (r, v) in solved.into_iter().enumerate() {
            if c <= r {
                g_cov.lower[(r, c)] = v;
            }
        }
    }
    for i in 0..n {
        g_cov.lower[(i, i)] -= T::one() / old.chol.lower()[(i, i)];
    }
    Ok(((mean_term, cov_term), g_mean, g_cov))
}
