//! Principal movements: PCA in weight space and the reduced coefficient model.
//!
//! A movement is written as `τ_t = Ψ_t ω̄ + Ψ_t Ω α`, where `ω̄` is the mean
//! movement and the columns of `Ω` are eigenvectors of the weight covariance
//! scaled by the square roots of their eigenvalues. The coefficients `α` are
//! fitted by ridge regression directly against each trajectory, on that
//! trajectory's own phase grid, so demonstrations of different lengths and
//! rates never need resampling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{block_row_matrix, feature_matrix, features_at, BasisConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, EIGEN_CLAMP};
use crate::mpcore::{fit_weights, reconstruct_vector, MpWeights, ObservationNoise, RidgeConfig, Trajectory};
use crate::promp::{condition_linear, estimate_distribution, Gaussian, PrompDistribution, COVARIANCE_TOL};

/// Tolerance for the orthogonality and column-norm invariants of `Ω`.
const OMEGA_TOL: f64 = 1e-8;

/// Eigenvalues below this fraction of the largest count as numerically zero.
pub const RANK_TOL: f64 = 1e-10;

/// Mean movement `ω̄` and principal movements `Ω` (`n·d × n_c`).
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalMovements {
    w_bar: DVector<f64>,
    omega: DMatrix<f64>,
    eigvals: Vec<f64>,
}

impl PrincipalMovements {
    /// Builds and validates: columns orthogonal, column `i` with squared norm
    /// `|λ_i|`, `|λ|` nonincreasing, and each column's first significant entry
    /// nonnegative.
    pub fn new(w_bar: DVector<f64>, omega: DMatrix<f64>, eigvals: Vec<f64>) -> Result<Self> {
        let dim = w_bar.len();
        if omega.nrows() != dim {
            return Err(Error::dim(format!(
                "principal movements have {} rows, mean movement has {dim}",
                omega.nrows()
            )));
        }
        if omega.ncols() != eigvals.len() {
            return Err(Error::dim(format!(
                "{} principal movements but {} eigenvalues",
                omega.ncols(),
                eigvals.len()
            )));
        }
        if omega.ncols() == 0 {
            return Err(Error::InvalidConfig(
                "at least one principal movement is required".into(),
            ));
        }
        if w_bar
            .iter()
            .chain(omega.iter())
            .chain(eigvals.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig("non-finite entries in principal movements".into()));
        }
        if let Some(i) = eigvals.windows(2).position(|w| w[1].abs() > w[0].abs()) {
            return Err(Error::InvalidConfig(format!(
                "eigenvalues are not ordered by magnitude at index {}",
                i + 1
            )));
        }
        let gram = omega.tr_mul(&omega);
        for i in 0..eigvals.len() {
            let li = eigvals[i].abs();
            if (gram[(i, i)] - li).abs() > OMEGA_TOL * li.max(1.0) {
                return Err(Error::InvalidConfig(format!(
                    "principal movement {i} has squared norm {:e}, eigenvalue {:e}",
                    gram[(i, i)],
                    eigvals[i]
                )));
            }
            for j in (i + 1)..eigvals.len() {
                let scale = (li * eigvals[j].abs()).sqrt().max(1.0);
                if gram[(i, j)].abs() > OMEGA_TOL * scale {
                    return Err(Error::InvalidConfig(format!(
                        "principal movements {i} and {j} are not orthogonal"
                    )));
                }
            }
            if !linalg::satisfies_sign_convention(omega.column(i).as_slice()) {
                return Err(Error::InvalidConfig(format!(
                    "principal movement {i} violates the sign convention"
                )));
            }
        }
        Ok(PrincipalMovements { w_bar, omega, eigvals })
    }

    pub fn mean_movement(&self) -> &DVector<f64> {
        &self.w_bar
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn n_components(&self) -> usize {
        self.omega.ncols()
    }

    /// Length `n·d` of the full weight space.
    pub fn dim(&self) -> usize {
        self.w_bar.len()
    }

    /// Number of retained components with a non-negligible eigenvalue.
    pub fn retained_rank(&self) -> usize {
        self.eigvals.iter().filter(|v| v.abs() > 0.0).count()
    }

    /// Keeps the leading `n_c` components.
    pub fn truncate(&self, n_c: usize) -> Result<Self> {
        if n_c == 0 || n_c > self.n_components() {
            return Err(Error::dim(format!(
                "cannot keep {n_c} of {} principal movements",
                self.n_components()
            )));
        }
        Ok(PrincipalMovements {
            w_bar: self.w_bar.clone(),
            omega: self.omega.columns(0, n_c).into_owned(),
            eigvals: self.eigvals[..n_c].to_vec(),
        })
    }

    /// Full weight vector `ω̄ + Ω α`.
    pub fn weights_for(&self, a: &AlphaCoeffs) -> Result<DVector<f64>> {
        if a.len() != self.n_components() {
            return Err(Error::dim(format!(
                "{} coefficients for {} principal movements",
                a.len(),
                self.n_components()
            )));
        }
        Ok(&self.w_bar + &self.omega * a.vector())
    }

    fn dof_for(&self, cfg: &BasisConfig) -> Result<usize> {
        if !self.dim().is_multiple_of(cfg.n()) {
            return Err(Error::dim(format!(
                "weight space of size {} is not a multiple of {} basis functions",
                self.dim(),
                cfg.n()
            )));
        }
        Ok(self.dim() / cfg.n())
    }
}

/// Reduced coefficients `α`, one per principal movement.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCoeffs(DVector<f64>);

impl AlphaCoeffs {
    pub fn new(a: DVector<f64>) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("coefficients have non-finite entries".into()));
        }
        Ok(AlphaCoeffs(a))
    }

    pub fn zeros(n_c: usize) -> Self {
        AlphaCoeffs(DVector::zeros(n_c))
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Ω = [v_1 √|λ_1|, …, v_{n_c} √|λ_{n_c}|]` from the eigendecomposition of `Σ_ω`,
/// with `ω̄ = μ_ω`.
///
/// Requesting more components than the numerical rank of `Σ_ω` is allowed; the
/// surplus columns come out (near) zero, see [`PrincipalMovements::retained_rank`].
pub fn principal_movements(dist: &PrompDistribution, n_c: usize) -> Result<PrincipalMovements> {
    let dim = dist.mean().len();
    if n_c == 0 || n_c > dim {
        return Err(Error::dim(format!(
            "requested {n_c} components in a {dim}-dimensional weight space"
        )));
    }
    let eig = linalg::sorted_eigen(dist.covariance());
    let max = eig.values.first().map_or(0.0, |v| v.abs());
    let mut omega = DMatrix::zeros(dim, n_c);
    let mut eigvals = Vec::with_capacity(n_c);
    for i in 0..n_c {
        let lam = if eig.values[i].abs() <= EIGEN_CLAMP * max {
            0.0
        } else {
            eig.values[i]
        };
        let scale = lam.abs().sqrt();
        omega.set_column(i, &(eig.vectors.column(i) * scale));
        eigvals.push(lam);
    }
    PrincipalMovements::new(dist.mean().clone(), omega, eigvals)
}

/// `α = (ΩᵀΨᵀΨΩ + λI)⁻¹ ΩᵀΨᵀ(τ − Ψω̄)`.
///
/// With `B_j` the rows of `Ω` belonging to joint `j`, `ΩᵀΨᵀΨΩ = Σ_j B_jᵀ ΦᵀΦ B_j`
/// and `ΩᵀΨᵀ r = Σ_j B_jᵀ Φᵀ r_j`, so `Ψ` is never formed.
pub fn fit_alpha(
    traj: &Trajectory,
    pm: &PrincipalMovements,
    cfg: &BasisConfig,
    ridge: &RidgeConfig,
) -> Result<AlphaCoeffs> {
    ridge.validate()?;
    let n = cfg.n();
    let d = traj.dof();
    if pm.dim() != n * d {
        return Err(Error::dim(format!(
            "model weight space has size {}, trajectory needs n·d = {n}·{d}",
            pm.dim()
        )));
    }
    let fm = feature_matrix(&traj.phase(), cfg, d)?;
    let phi = fm.phi();
    let gram = fm.gram();
    let mean_blocks = DMatrix::from_column_slice(n, d, pm.w_bar.as_slice());
    let residual = traj.positions() - phi * mean_blocks;
    let projected = phi.tr_mul(&residual);

    let n_c = pm.n_components();
    let mut normal = DMatrix::zeros(n_c, n_c);
    let mut rhs = DMatrix::zeros(n_c, 1);
    for j in 0..d {
        let block = pm.omega.rows(j * n, n);
        normal += block.transpose() * &gram * block;
        rhs += block.transpose() * projected.column(j);
    }
    linalg::symmetrize(&mut normal);
    let lambda = ridge.effective(&normal);
    let sol = linalg::ridge_solve(&normal, &rhs, lambda)?;
    AlphaCoeffs::new(sol.column(0).into_owned())
}

/// `τ_t = Ψ_t(ω̄ + Ω α)` on the given phases.
pub fn reconstruct_primo(
    a: &AlphaCoeffs,
    pm: &PrincipalMovements,
    z: &[f64],
    cfg: &BasisConfig,
) -> Result<DMatrix<f64>> {
    let d = pm.dof_for(cfg)?;
    let w = pm.weights_for(a)?;
    reconstruct_vector(w.as_slice(), d, z, cfg)
}

/// Mean and 1/m covariance of fitted coefficients.
pub fn estimate_alpha_distribution(alphas: &[AlphaCoeffs]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if alphas.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            found: alphas.len(),
        });
    }
    let n_c = alphas[0].len();
    if let Some(i) = alphas.iter().position(|a| a.len() != n_c) {
        return Err(Error::dim(format!(
            "coefficients {i} have length {}, expected {n_c}",
            alphas[i].len()
        )));
    }
    let refs: Vec<&DVector<f64>> = alphas.iter().map(|a| a.vector()).collect();
    Ok(linalg::mean_and_covariance(&refs))
}

/// Gaussian `N(μ_α, Σ_α)` over the reduced coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ProPrimoDistribution {
    pm: PrincipalMovements,
    mu_a: DVector<f64>,
    sigma_a: DMatrix<f64>,
    cfg: BasisConfig,
    d: usize,
    sigma_tau: ObservationNoise,
}

impl ProPrimoDistribution {
    pub fn new(
        pm: PrincipalMovements,
        mu_a: DVector<f64>,
        sigma_a: DMatrix<f64>,
        cfg: BasisConfig,
        sigma_tau: ObservationNoise,
    ) -> Result<Self> {
        let d = pm.dof_for(&cfg)?;
        let n_c = pm.n_components();
        if mu_a.len() != n_c || sigma_a.shape() != (n_c, n_c) {
            return Err(Error::dim(format!(
                "coefficient mean of length {} and covariance {}x{} for {n_c} components",
                mu_a.len(),
                sigma_a.nrows(),
                sigma_a.ncols()
            )));
        }
        if sigma_tau.dof() != d {
            return Err(Error::dim(format!(
                "observation noise is {0}x{0}, expected {d}x{d}",
                sigma_tau.dof()
            )));
        }
        if mu_a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("coefficient mean has non-finite entries".into()));
        }
        linalg::check_psd(&sigma_a, COVARIANCE_TOL)
            .map_err(|e| Error::InvalidConfig(format!("coefficient covariance: {e}")))?;
        Ok(ProPrimoDistribution {
            pm,
            mu_a,
            sigma_a,
            cfg,
            d,
            sigma_tau,
        })
    }

    pub fn principal_movements(&self) -> &PrincipalMovements {
        &self.pm
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mu_a
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma_a
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

    /// Full-space equivalent: `μ̂_ω = Ω μ_α + ω̄`, `Σ̂_ω = Ω Σ_α Ωᵀ`.
    pub fn to_promp(&self) -> PrompDistribution {
        let omega = &self.pm.omega;
        let mu = omega * &self.mu_a + &self.pm.w_bar;
        let mut sigma = omega * &self.sigma_a * omega.transpose();
        linalg::symmetrize(&mut sigma);
        PrompDistribution::new(mu, sigma, self.cfg.clone(), self.d, self.sigma_tau.clone())
            .expect("mapping preserves shapes and semidefiniteness")
    }

    /// `N(Ψ_z(Ω μ_α + ω̄), Ψ_z Ω Σ_α Ωᵀ Ψ_zᵀ + Σ_τ)`.
    pub fn marginal_primo(&self, z: f64) -> Result<Gaussian> {
        let psi = block_row_matrix(&features_at(z, &self.cfg)?, self.d);
        let design = &psi * &self.pm.omega;
        let mean = &psi * (&self.pm.omega * &self.mu_a + &self.pm.w_bar);
        let mut cov = &design * &self.sigma_a * design.transpose() + self.sigma_tau.matrix();
        linalg::symmetrize(&mut cov);
        Ok(Gaussian { mean, cov })
    }

    pub fn sample_alphas(&self, seed: u64, count: usize) -> Vec<AlphaCoeffs> {
        linalg::sample_gaussian(&self.mu_a, &self.sigma_a, seed, count)
            .into_iter()
            .map(AlphaCoeffs)
            .collect()
    }

    /// Samples mapped to full weight vectors `ω̄ + Ω α`.
    pub fn sample_weights(&self, seed: u64, count: usize) -> Vec<MpWeights> {
        self.sample_alphas(seed, count)
            .iter()
            .map(|a| {
                let w = self.pm.weights_for(a).expect("sample has n_c entries");
                MpWeights::new(w, self.cfg.n(), self.d).expect("finite sample")
            })
            .collect()
    }

    /// Posterior over `α` after observing `y* ~ N(Ψ_{z*}(ω̄ + Ω α), Σ_y)`.
    pub fn condition_on_waypoint(&self, z_star: f64, y_star: &DVector<f64>, sigma_y: &DMatrix<f64>) -> Result<Self> {
        let psi = block_row_matrix(&features_at(z_star, &self.cfg)?, self.d);
        let design = &psi * &self.pm.omega;
        let offset = &psi * &self.pm.w_bar;
        let (mu_a, sigma_a) = condition_linear(&self.mu_a, &self.sigma_a, &design, &offset, y_star, sigma_y)?;
        Ok(ProPrimoDistribution {
            pm: self.pm.clone(),
            mu_a,
            sigma_a,
            cfg: self.cfg.clone(),
            d: self.d,
            sigma_tau: self.sigma_tau.clone(),
        })
    }
}

/// Everything computed along the way by [`fit_pro_primos_detailed`].
#[derive(Debug, Clone)]
pub struct ProPrimoFit {
    pub weights: Vec<MpWeights>,
    pub promp: PrompDistribution,
    pub alphas: Vec<AlphaCoeffs>,
    pub model: ProPrimoDistribution,
}

/// Fits Pro-PriMos on a dataset: per-trajectory weights, their Gaussian,
/// `Ω` from its eigendecomposition, `ω̄ := μ_ω`, per-trajectory `α`, and
/// finally `(μ_α, Σ_α)`.
pub fn fit_pro_primos(
    dataset: &[Trajectory],
    cfg: &BasisConfig,
    ridge: &RidgeConfig,
    n_c: usize,
) -> Result<ProPrimoDistribution> {
    fit_pro_primos_detailed(dataset, cfg, ridge, n_c, None).map(|fit| fit.model)
}

pub fn fit_pro_primos_detailed(
    dataset: &[Trajectory],
    cfg: &BasisConfig,
    ridge: &RidgeConfig,
    n_c: usize,
    sigma_tau: Option<ObservationNoise>,
) -> Result<ProPrimoFit> {
    let (weights, promp) = fit_weight_distribution(dataset, cfg, ridge, sigma_tau)?;
    let pm = principal_movements(&promp, n_c)?;
    let alphas = fit_alphas(dataset, &pm, cfg, ridge)?;
    let (mu_a, sigma_a) = estimate_alpha_distribution(&alphas)?;
    let model = ProPrimoDistribution::new(pm, mu_a, sigma_a, cfg.clone(), promp.noise().clone())?;
    Ok(ProPrimoFit {
        weights,
        promp,
        alphas,
        model,
    })
}

/// Fits every trajectory's weights and the Gaussian over them.
pub(crate) fn fit_weight_distribution(
    dataset: &[Trajectory],
    cfg: &BasisConfig,
    ridge: &RidgeConfig,
    sigma_tau: Option<ObservationNoise>,
) -> Result<(Vec<MpWeights>, PrompDistribution)> {
    if dataset.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            found: dataset.len(),
        });
    }
    let d = dataset[0].dof();
    if let Some(i) = dataset.iter().position(|t| t.dof() != d) {
        return Err(Error::dim(format!("{} joints, expected {d}", dataset[i].dof())).in_trajectory(i));
    }
    let fitted: Vec<Result<MpWeights>> = dataset.par_iter().map(|t| fit_weights(t, cfg, ridge)).collect();
    let weights = collect_indexed(fitted)?;
    let promp = estimate_distribution(&weights, cfg, sigma_tau)?;
    Ok((weights, promp))
}

pub(crate) fn fit_alphas(
    dataset: &[Trajectory],
    pm: &PrincipalMovements,
    cfg: &BasisConfig,
    ridge: &RidgeConfig,
) -> Result<Vec<AlphaCoeffs>> {
    let fitted: Vec<Result<AlphaCoeffs>> = dataset.par_iter().map(|t| fit_alpha(t, pm, cfg, ridge)).collect();
    collect_indexed(fitted)
}

/// First failure in input order, tagged with its index.
pub(crate) fn collect_indexed<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| e.in_trajectory(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::PhaseVector;
    use crate::mpcore::reconstruct;

    fn cfg2() -> BasisConfig {
        BasisConfig::with_default_bandwidth(2).unwrap()
    }

    fn promp(mu: &[f64], sigma: DMatrix<f64>, cfg: &BasisConfig, d: usize) -> PrompDistribution {
        PrompDistribution::new(
            DVector::from_row_slice(mu),
            sigma,
            cfg.clone(),
            d,
            ObservationNoise::isotropic(d, 0.0).unwrap(),
        )
        .unwrap()
    }

    fn traj_from_weights(w: &DVector<f64>, cfg: &BasisConfig, d: usize, t: usize) -> Trajectory {
        let z = PhaseVector::uniform(t).unwrap();
        let pos = reconstruct_vector(w.as_slice(), d, &z, cfg).unwrap();
        Trajectory::new((0..t).map(|i| i as f64 * 0.05).collect(), pos).unwrap()
    }

    #[test]
    fn zero_covariance_gives_zero_movements() {
        let dist = promp(&[1.0, 2.0], DMatrix::zeros(2, 2), &cfg2(), 1);
        let pm = principal_movements(&dist, 2).unwrap();
        assert_eq!(pm.omega(), &DMatrix::zeros(2, 2));
        assert_eq!(pm.mean_movement(), dist.mean());
        assert_eq!(pm.retained_rank(), 0);
    }

    #[test]
    fn diagonal_covariance_example() {
        let dist = promp(
            &[0.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]),
            &cfg2(),
            1,
        );
        let pm = principal_movements(&dist, 2).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2f64.sqrt(), 0.0, 0.0, 0.5f64.sqrt()]);
        assert!((pm.omega() - expected).amax() < 1e-14);
        assert_eq!(pm.eigenvalues(), &[2.0, 0.5]);
    }

    #[test]
    fn chained_from_weight_estimate() {
        let cfg = cfg2();
        let ws = [
            MpWeights::new(DVector::from_row_slice(&[1.0, 0.0]), 2, 1).unwrap(),
            MpWeights::new(DVector::from_row_slice(&[-1.0, 0.0]), 2, 1).unwrap(),
        ];
        let dist = estimate_distribution(&ws, &cfg, None).unwrap();
        let pm = principal_movements(&dist, 1).unwrap();
        assert!((pm.omega() - DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn component_count_is_checked() {
        let dist = promp(&[0.0, 0.0], DMatrix::identity(2, 2), &cfg2(), 1);
        assert!(matches!(principal_movements(&dist, 3), Err(Error::Dimension(_))));
        assert!(matches!(principal_movements(&dist, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn validation_rejects_bad_columns() {
        let w = DVector::zeros(2);
        let bad_norm = DMatrix::from_row_slice(2, 1, &[2.0, 0.0]);
        assert!(PrincipalMovements::new(w.clone(), bad_norm, vec![1.0]).is_err());
        let bad_sign = DMatrix::from_row_slice(2, 1, &[-1.0, 0.0]);
        assert!(PrincipalMovements::new(w.clone(), bad_sign, vec![1.0]).is_err());
        let not_orth = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.0, 0.8]);
        assert!(PrincipalMovements::new(w.clone(), not_orth, vec![1.0, 1.0]).is_err());
        let unordered = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert!(PrincipalMovements::new(w, unordered, vec![1.0, 4.0]).is_err());
    }

    fn synthetic_model(n: usize, d: usize) -> (BasisConfig, PrincipalMovements) {
        let cfg = BasisConfig::with_default_bandwidth(n).unwrap();
        let dim = n * d;
        let mut sigma = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                sigma[(i, j)] = (-((i as f64 - j as f64) / 3.0).powi(2)).exp() * (1.0 + 0.1 * i as f64);
            }
        }
        linalg::symmetrize(&mut sigma);
        let mu: Vec<f64> = (0..dim).map(|i| (i as f64 * 0.37).sin()).collect();
        let dist = promp(&mu, sigma, &cfg, d);
        (cfg, principal_movements(&dist, 3).unwrap())
    }

    #[test]
    fn alpha_examples() {
        let (cfg, pm) = synthetic_model(6, 2);
        let mean_traj = traj_from_weights(pm.mean_movement(), &cfg, 2, 50);
        let a = fit_alpha(&mean_traj, &pm, &cfg, &RidgeConfig::absolute(1e-10)).unwrap();
        assert!(a.vector().amax() < 1e-8);

        let truth = AlphaCoeffs::new(DVector::from_row_slice(&[0.8, -1.3, 0.4])).unwrap();
        let t = traj_from_weights(&pm.weights_for(&truth).unwrap(), &cfg, 2, 200);
        let a = fit_alpha(&t, &pm, &cfg, &RidgeConfig::absolute(1e-10)).unwrap();
        assert!((a.vector() - truth.vector()).amax() < 1e-5);

        let zero_pm =
            PrincipalMovements::new(pm.mean_movement().clone(), DMatrix::zeros(12, 2), vec![0.0, 0.0]).unwrap();
        let a = fit_alpha(&t, &zero_pm, &cfg, &RidgeConfig::absolute(1e-3)).unwrap();
        assert_eq!(a.vector(), &DVector::zeros(2));
        let a = fit_alpha(&t, &zero_pm, &cfg, &RidgeConfig::default()).unwrap();
        assert_eq!(a.vector(), &DVector::zeros(2));
        assert!(matches!(
            fit_alpha(&t, &zero_pm, &cfg, &RidgeConfig::absolute(0.0)),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn fit_alpha_matches_explicit_design() {
        // oracle: materialize Ψ (T·d × n·d, joint-major rows) and evaluate the closed form directly
        let (cfg, pm) = synthetic_model(5, 2);
        let times: Vec<f64> = (0..30).map(|i| (i as f64).powf(1.2)).collect();
        let pos = DMatrix::from_fn(30, 2, |i, j| ((i + 3 * j) as f64 * 0.2).sin());
        let t = Trajectory::new(times, pos.clone()).unwrap();
        let lambda = 0.01;
        let a = fit_alpha(&t, &pm, &cfg, &RidgeConfig::absolute(lambda)).unwrap();

        let fm = feature_matrix(&t.phase(), &cfg, 2).unwrap();
        let psi = DMatrix::<f64>::identity(2, 2).kronecker(fm.phi());
        let tau = DVector::from_column_slice(pos.as_slice());
        let design = &psi * pm.omega();
        let lhs = design.transpose() * &design + DMatrix::identity(3, 3) * lambda;
        let rhs = design.transpose() * (tau - &psi * pm.mean_movement());
        let expected = lhs.try_inverse().unwrap() * rhs;
        assert!((a.vector() - expected).amax() < 1e-9);
    }

    #[test]
    fn reconstruction_is_affine_in_alpha() {
        let (cfg, pm) = synthetic_model(6, 2);
        let z = PhaseVector::uniform(40).unwrap();
        let zero = reconstruct_primo(&AlphaCoeffs::zeros(3), &pm, &z, &cfg).unwrap();
        let mean = reconstruct_vector(pm.mean_movement().as_slice(), 2, &z, &cfg).unwrap();
        assert_eq!(zero, mean);
        let a1 = AlphaCoeffs::new(DVector::from_row_slice(&[0.3, -0.2, 1.0])).unwrap();
        let a2 = AlphaCoeffs::new(DVector::from_row_slice(&[-1.1, 0.7, 0.05])).unwrap();
        let sum = AlphaCoeffs::new(a1.vector() + a2.vector()).unwrap();
        let r1 = reconstruct_primo(&a1, &pm, &z, &cfg).unwrap() - &zero;
        let r2 = reconstruct_primo(&a2, &pm, &z, &cfg).unwrap() - &zero;
        let r12 = reconstruct_primo(&sum, &pm, &z, &cfg).unwrap() - &zero;
        assert!((r12 - r1 - r2).amax() < 1e-10);
        assert!(reconstruct_primo(&AlphaCoeffs::zeros(2), &pm, &z, &cfg).is_err());
    }

    #[test]
    fn alpha_distribution_examples() {
        let same = [AlphaCoeffs::zeros(2), AlphaCoeffs::zeros(2)];
        let (mu, sigma) = estimate_alpha_distribution(&same).unwrap();
        assert_eq!(mu, DVector::zeros(2));
        assert_eq!(sigma, DMatrix::zeros(2, 2));

        let pair = [
            AlphaCoeffs::new(DVector::from_row_slice(&[1.0])).unwrap(),
            AlphaCoeffs::new(DVector::from_row_slice(&[-1.0])).unwrap(),
        ];
        let (mu, sigma) = estimate_alpha_distribution(&pair).unwrap();
        assert_eq!(mu[0], 0.0);
        assert_eq!(sigma[(0, 0)], 1.0);

        let set: Vec<AlphaCoeffs> = [[0.1, 2.0], [1.5, -0.3], [-0.7, 0.4], [0.0, 1.0]]
            .iter()
            .map(|v| AlphaCoeffs::new(DVector::from_row_slice(v)).unwrap())
            .collect();
        let mut rev = set.clone();
        rev.reverse();
        let (m1, s1) = estimate_alpha_distribution(&set).unwrap();
        let (m2, s2) = estimate_alpha_distribution(&rev).unwrap();
        assert!((m1 - m2).amax() < 1e-15);
        assert!((s1 - s2).amax() < 1e-15);

        assert!(estimate_alpha_distribution(&pair[..1]).is_err());
    }

    #[test]
    fn mapping_to_full_space() {
        let cfg = cfg2();
        let pm =
            PrincipalMovements::new(DVector::zeros(2), DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), vec![1.0]).unwrap();
        let ppd = ProPrimoDistribution::new(
            pm,
            DVector::from_row_slice(&[2.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            cfg.clone(),
            ObservationNoise::default_for(1),
        )
        .unwrap();
        let full = ppd.to_promp();
        assert_eq!(full.mean().as_slice(), &[2.0, 0.0]);
        assert_eq!(full.covariance(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));

        let (cfg, pm) = synthetic_model(4, 2);
        let ppd = ProPrimoDistribution::new(
            pm.clone(),
            DVector::zeros(3),
            DMatrix::identity(3, 3),
            cfg,
            ObservationNoise::default_for(2),
        )
        .unwrap();
        let full = ppd.to_promp();
        assert_eq!(full.mean(), pm.mean_movement());
        assert!((full.covariance() - pm.omega() * pm.omega().transpose()).amax() < 1e-14);
    }

    #[test]
    fn degenerate_marginal() {
        let (cfg, pm) = synthetic_model(4, 2);
        let ppd = ProPrimoDistribution::new(
            pm.clone(),
            DVector::zeros(3),
            DMatrix::zeros(3, 3),
            cfg.clone(),
            ObservationNoise::isotropic(2, 0.0).unwrap(),
        )
        .unwrap();
        let g = ppd.marginal_primo(0.4).unwrap();
        assert_eq!(g.cov, DMatrix::zeros(2, 2));
        let mean = reconstruct_vector(pm.mean_movement().as_slice(), 2, &[0.4], &cfg).unwrap();
        assert!((g.mean - mean.row(0).transpose()).amax() < 1e-14);
        for s in ppd.sample_weights(1, 3) {
            assert_eq!(s.vector(), pm.mean_movement());
        }
    }

    #[test]
    fn conditioning_in_coefficient_space_matches_full_space() {
        let (cfg, pm) = synthetic_model(4, 2);
        let ppd = ProPrimoDistribution::new(
            pm,
            DVector::from_row_slice(&[0.2, -0.1, 0.3]),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.8, 0.1, 0.0, 0.1, 0.5]),
            cfg,
            ObservationNoise::default_for(2),
        )
        .unwrap();
        let y = DVector::from_row_slice(&[0.4, -0.6]);
        let sy = DMatrix::from_diagonal_element(2, 2, 1e-3);
        let reduced = ppd.condition_on_waypoint(0.5, &y, &sy).unwrap().to_promp();
        let full = ppd.to_promp().condition_on_waypoint(0.5, &y, &sy).unwrap();
        assert!((reduced.mean() - full.mean()).amax() < 1e-8);
        assert!((reduced.covariance() - full.covariance()).amax() < 1e-8);
    }

    #[test]
    fn degenerate_dataset() {
        let cfg = BasisConfig::with_default_bandwidth(5).unwrap();
        let w = DVector::from_fn(10, |i, _| (i as f64).cos());
        let t = traj_from_weights(&w, &cfg, 2, 30);
        let data = vec![t.clone(), t.clone(), t];
        let fit = fit_pro_primos_detailed(&data, &cfg, &RidgeConfig::default(), 2, None).unwrap();
        assert_eq!(fit.promp.covariance(), &DMatrix::zeros(10, 10));
        assert_eq!(fit.model.principal_movements().omega(), &DMatrix::zeros(10, 2));
        for a in &fit.alphas {
            assert_eq!(a.vector(), &DVector::zeros(2));
        }
        assert_eq!(fit.model.covariance(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn failures_name_the_trajectory() {
        let cfg = BasisConfig::with_default_bandwidth(8).unwrap();
        let good = Trajectory::new(
            (0..20).map(|i| i as f64).collect(),
            DMatrix::from_fn(20, 1, |i, _| i as f64),
        )
        .unwrap();
        let short = Trajectory::new(vec![0.0, 1.0, 2.0], DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0])).unwrap();
        let err = fit_pro_primos(&[good.clone(), short, good], &cfg, &RidgeConfig::absolute(0.0), 1).unwrap_err();
        assert!(matches!(err, Error::Trajectory { index: 1, .. }), "{err}");
        let single = Trajectory::new(vec![0.0, 1.0], DMatrix::zeros(2, 1)).unwrap();
        assert!(matches!(
            fit_pro_primos(&[single], &cfg, &RidgeConfig::default(), 1),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn omega_gram_is_diagonal() {
        let (_, pm) = synthetic_model(8, 3);
        let gram = pm.omega().tr_mul(pm.omega());
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { pm.eigenvalues()[i].abs() } else { 0.0 };
                assert!((gram[(i, j)] - expected).abs() < 1e-8);
            }
        }
        let t = pm.truncate(2).unwrap();
        assert_eq!(t.omega().columns(0, 2), pm.omega().columns(0, 2));
        assert!(pm.truncate(4).is_err());
    }

    #[test]
    fn full_rank_model_reproduces_weights() {
        let cfg = BasisConfig::with_default_bandwidth(3).unwrap();
        let d = 2;
        let data: Vec<Trajectory> = (0..12)
            .map(|k| {
                let w = DVector::from_fn(6, |i, _| ((i * 7 + k * 3) as f64 * 0.9).sin());
                traj_from_weights(&w, &cfg, d, 40 + k)
            })
            .collect();
        let ridge = RidgeConfig::absolute(1e-10);
        let fit = fit_pro_primos_detailed(&data, &cfg, &ridge, 6, None).unwrap();
        let pm = fit.model.principal_movements();
        for (w, a) in fit.weights.iter().zip(&fit.alphas) {
            let rebuilt = pm.weights_for(a).unwrap();
            assert!((rebuilt - w.vector()).amax() < 1e-4 * w.vector().amax().max(1.0));
        }
        let z = data[0].phase();
        let rec = reconstruct_primo(&fit.alphas[0], pm, &z, &cfg).unwrap();
        let direct = reconstruct(&fit.weights[0], &z, &cfg).unwrap();
        assert!((rec - direct).amax() < 1e-6);
    }
}
