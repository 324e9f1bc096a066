//! Per-trajectory movement-primitive weights: ridge fitting and reconstruction.

use nalgebra::{DMatrix, DVector};

use crate::basis::{block_apply, feature_matrix, features_at, phase_from_timestamps, BasisConfig, PhaseVector};
use crate::error::{Error, Result};
use crate::linalg;

/// A timestamped multi-joint position series.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    /// T×d, one row per sample.
    positions: DMatrix<f64>,
    joint_names: Option<Vec<String>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, positions: DMatrix<f64>) -> Result<Self> {
        if times.len() != positions.nrows() {
            return Err(Error::InvalidTrajectory(format!(
                "{} timestamps but {} position rows",
                times.len(),
                positions.nrows()
            )));
        }
        if positions.ncols() == 0 {
            return Err(Error::InvalidTrajectory("trajectory has no joints".into()));
        }
        // validates length and monotonicity
        phase_from_timestamps(&times)?;
        if let Some(k) = positions.iter().position(|v| !v.is_finite()) {
            let t = k % positions.nrows();
            return Err(Error::InvalidTrajectory(format!("non-finite position at sample {t}")));
        }
        Ok(Trajectory {
            times,
            positions,
            joint_names: None,
        })
    }

    pub fn with_joint_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dof() {
            return Err(Error::dim(format!(
                "{} joint names for {} joints",
                names.len(),
                self.dof()
            )));
        }
        self.joint_names = Some(names);
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn joint_names(&self) -> Option<&[String]> {
        self.joint_names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.positions.ncols()
    }

    pub fn phase(&self) -> PhaseVector {
        phase_from_timestamps(&self.times).expect("validated on construction")
    }
}

/// Weight vector `ω` of length `n·d`, stored joint-major (joint `j` owns `ω[j·n..(j+1)·n]`).
#[derive(Debug, Clone, PartialEq)]
pub struct MpWeights {
    w: DVector<f64>,
    n: usize,
    d: usize,
}

impl MpWeights {
    pub fn new(w: DVector<f64>, n: usize, d: usize) -> Result<Self> {
        if w.len() != n * d {
            return Err(Error::dim(format!(
                "weight vector has length {}, expected {n}·{d}",
                w.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("weight vector has non-finite entries".into()));
        }
        Ok(MpWeights { w, n, d })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        MpWeights {
            w: DVector::zeros(n * d),
            n,
            d,
        }
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn as_slice(&self) -> &[f64] {
        self.w.as_slice()
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.w
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dof(&self) -> usize {
        self.d
    }

    pub fn joint(&self, j: usize) -> &[f64] {
        &self.w.as_slice()[j * self.n..(j + 1) * self.n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RidgeScale {
    /// `lambda` is added to the normal matrix as is.
    Absolute,
    /// `lambda` is multiplied by the mean diagonal of the normal matrix,
    /// which makes the penalty independent of the sample count.
    Relative,
}

/// Ridge penalization used by every regression in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeConfig {
    pub lambda: f64,
    pub scale: RidgeScale,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig {
            lambda: Self::DEFAULT_LAMBDA,
            scale: RidgeScale::Relative,
        }
    }
}

impl RidgeConfig {
    pub const DEFAULT_LAMBDA: f64 = 1e-6;

    pub fn absolute(lambda: f64) -> Self {
        RidgeConfig {
            lambda,
            scale: RidgeScale::Absolute,
        }
    }

    pub fn relative(lambda: f64) -> Self {
        RidgeConfig {
            lambda,
            scale: RidgeScale::Relative,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ridge penalty must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Penalty actually added to the diagonal of `normal`.
    ///
    /// A relative penalty on an all-zero normal matrix falls back to `lambda`.
    pub fn effective(&self, normal: &DMatrix<f64>) -> f64 {
        match self.scale {
            RidgeScale::Absolute => self.lambda,
            RidgeScale::Relative => {
                let dim = normal.nrows().max(1) as f64;
                let mean_diag = normal.trace() / dim;
                if mean_diag > 0.0 {
                    self.lambda * mean_diag
                } else {
                    self.lambda
                }
            }
        }
    }
}

/// Covariance of the per-sample observation noise, d×d.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationNoise {
    sigma_tau: DMatrix<f64>,
}

impl ObservationNoise {
    pub const DEFAULT_VARIANCE: f64 = 1e-6;

    pub fn new(sigma_tau: DMatrix<f64>) -> Result<Self> {
        linalg::check_psd(&sigma_tau, 1e-10).map_err(|e| Error::InvalidConfig(format!("observation noise: {e}")))?;
        Ok(ObservationNoise { sigma_tau })
    }

    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be nonnegative, got {variance}"
            )));
        }
        Ok(ObservationNoise {
            sigma_tau: DMatrix::from_diagonal_element(d, d, variance),
        })
    }

    pub fn default_for(d: usize) -> Self {
        Self::isotropic(d, Self::DEFAULT_VARIANCE).expect("default variance is valid")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma_tau
    }

    pub fn dof(&self) -> usize {
        self.sigma_tau.nrows()
    }
}

/// Fits `ω = (ΦᵀΦ + λI)⁻¹ Φᵀ τ` joint by joint.
///
/// `Ψ = I ⊗ Φ` makes `ΨᵀΨ` block diagonal with identical blocks, so one n×n
/// factorization serves all `d` joints.
pub fn fit_weights(traj: &Trajectory, cfg: &BasisConfig, ridge: &RidgeConfig) -> Result<MpWeights> {
    fit_weights_on(&traj.phase(), traj.positions(), cfg, ridge)
}

/// [`fit_weights`] for raw phases and a T×d target matrix.
pub fn fit_weights_on(
    z: &[f64],
    positions: &DMatrix<f64>,
    cfg: &BasisConfig,
    ridge: &RidgeConfig,
) -> Result<MpWeights> {
    ridge.validate()?;
    if z.len() != positions.nrows() {
        return Err(Error::dim(format!(
            "{} phases but {} position rows",
            z.len(),
            positions.nrows()
        )));
    }
    let d = positions.ncols();
    let fm = feature_matrix(z, cfg, d)?;
    let gram = fm.gram();
    let rhs = fm.phi().tr_mul(positions);
    let lambda = ridge.effective(&gram);
    // n×d, column j holds joint j's weights
    let sol = linalg::ridge_solve(&gram, &rhs, lambda)?;
    let w = DVector::from_column_slice(sol.as_slice());
    MpWeights::new(w, cfg.n(), d)
}

/// Noise-free mean reconstruction `τ_t = Ψ_t ω` on the given phases (T×d).
pub fn reconstruct(w: &MpWeights, z: &[f64], cfg: &BasisConfig) -> Result<DMatrix<f64>> {
    if w.n() != cfg.n() {
        return Err(Error::dim(format!(
            "weights use {} basis functions, configuration has {}",
            w.n(),
            cfg.n()
        )));
    }
    reconstruct_vector(w.as_slice(), w.dof(), z, cfg)
}

pub(crate) fn reconstruct_vector(w: &[f64], d: usize, z: &[f64], cfg: &BasisConfig) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(z.len(), d);
    for (t, &zt) in z.iter().enumerate() {
        let row = features_at(zt, cfg)?;
        let y = block_apply(&row, w, d)?;
        out.set_row(t, &y.transpose());
    }
    Ok(out)
}

/// The model families whose sizes can be compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Mp,
    Promp,
    Primos,
    ProPrimos,
    Cpca,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Mp => "mp",
            ModelKind::Promp => "promp",
            ModelKind::Primos => "primos",
            ModelKind::ProPrimos => "pro-primos",
            ModelKind::Cpca => "cpca",
        }
    }

    pub fn is_probabilistic(&self) -> bool {
        matches!(self, ModelKind::Promp | ModelKind::ProPrimos)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mp" => Ok(ModelKind::Mp),
            "promp" => Ok(ModelKind::Promp),
            "primos" => Ok(ModelKind::Primos),
            "pro-primos" | "pro_primos" => Ok(ModelKind::ProPrimos),
            "cpca" => Ok(ModelKind::Cpca),
            other => Err(Error::InvalidConfig(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Number of values a model stores for its mean and its covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub mean: usize,
    pub covariance: usize,
}

/// Parameter accounting per model kind.
///
/// `components` is `n_c` for the principal-movement kinds and the latent
/// dimension for CPCA; it is ignored for MP and ProMP. Deterministic kinds
/// report a covariance size of zero.
pub fn parameter_count(kind: ModelKind, n: usize, d: usize, components: usize) -> ParamCount {
    match kind {
        ModelKind::Mp => ParamCount {
            mean: n * d,
            covariance: 0,
        },
        ModelKind::Promp => ParamCount {
            mean: n * d,
            covariance: (n * d) * (n * d),
        },
        ModelKind::Primos => ParamCount {
            mean: components,
            covariance: 0,
        },
        ModelKind::ProPrimos => ParamCount {
            mean: components,
            covariance: components * components,
        },
        ModelKind::Cpca => ParamCount {
            mean: components * n,
            covariance: 0,
        },
    }
}
