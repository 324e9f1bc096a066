//! Phase normalization and normalized Gaussian radial basis features.
//!
//! A movement of any duration or sampling rate is mapped onto the phase
//! interval `[0, 1]`. Features are `n` Gaussian bumps with bandwidth `h`,
//! centered evenly over `[-2h, 1 + 2h]`, normalized so every row sums to one.
//! Multi-joint movements use the block form `I_d ⊗ Φ`, which is applied
//! joint by joint and never materialized.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Normalized time `z_i = (t_i - t_1) / (t_T - t_1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    /// Evenly spaced phase grid with `len ≥ 2` points.
    pub fn uniform(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "phase grid needs at least 2 points, got {len}"
            )));
        }
        let last = (len - 1) as f64;
        let mut values: Vec<f64> = (0..len).map(|i| i as f64 / last).collect();
        values[len - 1] = 1.0;
        Ok(PhaseVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PhaseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Maps strictly increasing timestamps onto `[0, 1]`.
pub fn phase_from_timestamps(times: &[f64]) -> Result<PhaseVector> {
    if times.len() < 2 {
        return Err(Error::InvalidTrajectory(format!(
            "need at least 2 samples, got {}",
            times.len()
        )));
    }
    if let Some(i) = times.iter().position(|t| !t.is_finite()) {
        return Err(Error::InvalidTrajectory(format!("time {i} is not finite")));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidTrajectory(format!(
            "times are not strictly increasing at sample {}",
            i + 1
        )));
    }
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    Ok(PhaseVector(times.iter().map(|t| (t - t0) / span).collect()))
}

/// Radial basis layout: `n` Gaussian kernels of bandwidth `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisConfig {
    n: usize,
    h: f64,
    centers: Vec<f64>,
}

impl BasisConfig {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("basis count must be positive".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be positive and finite, got {h}"
            )));
        }
        let lo = -2.0 * h;
        let hi = 1.0 + 2.0 * h;
        let centers = if n == 1 {
            vec![0.5]
        } else {
            let step = (hi - lo) / (n - 1) as f64;
            let mut c: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
            c[n - 1] = hi;
            c
        };
        Ok(BasisConfig { n, h, centers })
    }

    /// `h = 1/(n-1)` for `n ≥ 2`, `h = 0.5` for a single basis.
    pub fn default_bandwidth(n: usize) -> f64 {
        if n >= 2 {
            1.0 / (n - 1) as f64
        } else {
            0.5
        }
    }

    pub fn with_default_bandwidth(n: usize) -> Result<Self> {
        Self::new(n, Self::default_bandwidth(n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }
}

/// Normalized feature row `Φ(z)`; entries are nonnegative and sum to one.
pub fn features_at(z: f64, cfg: &BasisConfig) -> Result<Vec<f64>> {
    if !z.is_finite() {
        return Err(Error::InvalidTrajectory(format!("phase {z} is not finite")));
    }
    let denom = 2.0 * cfg.h * cfg.h;
    let mut row: Vec<f64> = cfg.centers.iter().map(|c| (-(z - c) * (z - c) / denom).exp()).collect();
    let sum: f64 = row.iter().sum();
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(Error::DegenerateBasis { z });
    }
    row.iter_mut().for_each(|v| *v /= sum);
    Ok(row)
}

/// Feature matrix `Φ` (T×n, one row per phase sample) plus the joint count
/// used for the block form `Ψ = I_d ⊗ Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    phi: DMatrix<f64>,
    dof: usize,
}

impl FeatureMatrix {
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.phi.row(t).iter().copied().collect()
    }

    /// `ΦᵀΦ`, the per-joint normal matrix shared by every block of `ΨᵀΨ`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.phi.tr_mul(&self.phi)
    }
}

pub fn feature_matrix(z: &[f64], cfg: &BasisConfig, dof: usize) -> Result<FeatureMatrix> {
    let mut phi = DMatrix::zeros(z.len(), cfg.n);
    for (t, &zt) in z.iter().enumerate() {
        let row = features_at(zt, cfg)?;
        for (i, v) in row.into_iter().enumerate() {
            phi[(t, i)] = v;
        }
    }
    Ok(FeatureMatrix { phi, dof })
}

/// Computes `Ψ_t ω` for one phase sample: joint `j` is `φ · ω[j·n..(j+1)·n]`.
pub fn block_apply(phi_row: &[f64], w: &[f64], d: usize) -> Result<DVector<f64>> {
    let n = phi_row.len();
    if w.len() != n * d {
        return Err(Error::dim(format!(
            "weight vector has length {}, expected n·d = {}·{} = {}",
            w.len(),
            n,
            d,
            n * d
        )));
    }
    Ok(DVector::from_iterator(
        d,
        w.chunks_exact(n.max(1))
            .take(d)
            .map(|block| block.iter().zip(phi_row).map(|(a, b)| a * b).sum()),
    ))
}

/// The explicit `d × n·d` matrix `Ψ_t = I_d ⊗ φᵀ`.
pub(crate) fn block_row_matrix(phi_row: &[f64], d: usize) -> DMatrix<f64> {
    let n = phi_row.len();
    let mut m = DMatrix::zeros(d, n * d);
    for j in 0..d {
        for (i, v) in phi_row.iter().enumerate() {
            m[(j, j * n + i)] = *v;
        }
    }
    m
}
