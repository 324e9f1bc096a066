//! Gaussian distributions over movement-primitive weights.

use nalgebra::{DMatrix, DVector};

use crate::basis::{block_row_matrix, features_at, BasisConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mpcore::{MpWeights, ObservationNoise};

/// Tolerance for symmetry and PSD checks on stored covariances.
pub(crate) const COVARIANCE_TOL: f64 = 1e-10;

/// A multivariate normal, used for trajectory marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `N(μ_ω, Σ_ω)` over weights of length `n·d`, plus the basis it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct PrompDistribution {
    mu_w: DVector<f64>,
    sigma_w: DMatrix<f64>,
    cfg: BasisConfig,
    d: usize,
    sigma_tau: ObservationNoise,
}

impl PrompDistribution {
    pub fn new(
        mu_w: DVector<f64>,
        sigma_w: DMatrix<f64>,
        cfg: BasisConfig,
        d: usize,
        sigma_tau: ObservationNoise,
    ) -> Result<Self> {
        let dim = cfg.n() * d;
        if mu_w.len() != dim {
            return Err(Error::dim(format!(
                "mean has length {}, expected n·d = {dim}",
                mu_w.len()
            )));
        }
        if sigma_w.shape() != (dim, dim) {
            return Err(Error::dim(format!(
                "covariance is {}x{}, expected {dim}x{dim}",
                sigma_w.nrows(),
                sigma_w.ncols()
            )));
        }
        if sigma_tau.dof() != d {
            return Err(Error::dim(format!(
                "observation noise is {0}x{0}, expected {d}x{d}",
                sigma_tau.dof()
            )));
        }
        if mu_w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("mean has non-finite entries".into()));
        }
        linalg::check_psd(&sigma_w, COVARIANCE_TOL)
            .map_err(|e| Error::InvalidConfig(format!("weight covariance: {e}")))?;
        Ok(PrompDistribution {
            mu_w,
            sigma_w,
            cfg,
            d,
            sigma_tau,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mu_w
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma_w
    }

    pub fn basis(&self) -> &BasisConfig {
        &self.cfg
    }

    pub fn dof(&self) -> usize {
        self.d
    }

    pub fn noise(&self) -> &ObservationNoise {
        &self.sigma_tau
    }

    pub fn mean_weights(&self) -> MpWeights {
        MpWeights::new(self.mu_w.clone(), self.cfg.n(), self.d).expect("validated on construction")
    }

    /// Number of eigenvalues of `Σ_ω` above `RANK_TOL` times the largest.
    pub fn covariance_rank(&self) -> usize {
        let eig = linalg::sorted_eigen(&self.sigma_w);
        linalg::numerical_rank(&eig.values, crate::primos::RANK_TOL)
    }

    /// Draws weight vectors using an eigen square root of `Σ_ω` (negative
    /// eigenvalues clipped to zero). Deterministic in `seed`.
    pub fn sample_weights(&self, seed: u64, count: usize) -> Vec<MpWeights> {
        linalg::sample_gaussian(&self.mu_w, &self.sigma_w, seed, count)
            .into_iter()
            .map(|w| MpWeights::new(w, self.cfg.n(), self.d).expect("finite sample"))
            .collect()
    }

    /// Distribution of the joint positions at phase `z`:
    /// `N(Ψ_z μ_ω, Ψ_z Σ_ω Ψ_zᵀ + Σ_τ)`.
    pub fn marginal_at(&self, z: f64) -> Result<Gaussian> {
        let psi = block_row_matrix(&features_at(z, &self.cfg)?, self.d);
        let mean = &psi * &self.mu_w;
        let mut cov = &psi * &self.sigma_w * psi.transpose() + self.sigma_tau.matrix();
        linalg::symmetrize(&mut cov);
        Ok(Gaussian { mean, cov })
    }

    /// Posterior over `ω` after observing `y* ~ N(Ψ_{z*} ω, Σ_y)`.
    pub fn condition_on_waypoint(&self, z_star: f64, y_star: &DVector<f64>, sigma_y: &DMatrix<f64>) -> Result<Self> {
        let psi = block_row_matrix(&features_at(z_star, &self.cfg)?, self.d);
        let (mu_w, sigma_w) = condition_linear(
            &self.mu_w,
            &self.sigma_w,
            &psi,
            &DVector::zeros(self.d),
            y_star,
            sigma_y,
        )?;
        Ok(PrompDistribution {
            mu_w,
            sigma_w,
            cfg: self.cfg.clone(),
            d: self.d,
            sigma_tau: self.sigma_tau.clone(),
        })
    }
}

/// Conditions `x ~ N(mu, sigma)` on `y = A x + offset + ε`, `ε ~ N(0, sigma_y)`.
pub(crate) fn condition_linear(
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    a: &DMatrix<f64>,
    offset: &DVector<f64>,
    y: &DVector<f64>,
    sigma_y: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = a.nrows();
    if y.len() != k || sigma_y.shape() != (k, k) {
        return Err(Error::dim(format!(
            "observation of length {} with {}x{} noise, expected {k} and {k}x{k}",
            y.len(),
            sigma_y.nrows(),
            sigma_y.ncols()
        )));
    }
    if y.iter().chain(sigma_y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Conditioning("observation has non-finite entries".into()));
    }
    let cross = sigma * a.transpose();
    let mut innovation = a * &cross + sigma_y;
    linalg::symmetrize(&mut innovation);
    let chol = innovation
        .cholesky()
        .ok_or_else(|| Error::Conditioning("innovation covariance is singular".into()))?;
    // gain = cross · innovation⁻¹, computed as (innovation⁻¹ crossᵀ)ᵀ
    let gain = chol.solve(&cross.transpose()).transpose();
    let residual = y - a * mu - offset;
    let post_mu = mu + &gain * residual;
    let mut post_sigma = sigma - &gain * cross.transpose();
    linalg::symmetrize(&mut post_sigma);
    Ok((post_mu, post_sigma))
}

/// Mean and 1/m covariance of fitted weights.
pub fn estimate_distribution(
    weights: &[MpWeights],
    cfg: &BasisConfig,
    sigma_tau: Option<ObservationNoise>,
) -> Result<PrompDistribution> {
    if weights.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            found: weights.len(),
        });
    }
    let d = weights[0].dof();
    for (i, w) in weights.iter().enumerate() {
        if w.n() != cfg.n() || w.dof() != d {
            return Err(Error::dim(format!(
                "weights {i} have shape n={}, d={}, expected n={}, d={d}",
                w.n(),
                w.dof(),
                cfg.n()
            )));
        }
    }
    let vecs: Vec<&DVector<f64>> = weights.iter().map(|w| w.vector()).collect();
    let (mu, sigma) = linalg::mean_and_covariance(&vecs);
    PrompDistribution::new(
        mu,
        sigma,
        cfg.clone(),
        d,
        sigma_tau.unwrap_or_else(|| ObservationNoise::default_for(d)),
    )
}
