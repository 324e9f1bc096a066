//! Configuration-space PCA baseline ("CPCA").
//!
//! Joint configurations from every trajectory and timestep are pooled, PCA
//! keeps `n_latent` orthonormal directions, and ordinary movement primitives
//! are fitted to each trajectory's latent series.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisConfig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mpcore::{fit_weights_on, reconstruct, MpWeights, RidgeConfig, Trajectory};

const ORTHONORMAL_TOL: f64 = 1e-8;

/// Mean configuration plus `d × n_latent` orthonormal principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigProjection {
    mean_config: DVector<f64>,
    proj: DMatrix<f64>,
    /// Eigenvalues of the pooled configuration covariance, all `d` of them.
    spectrum: Vec<f64>,
}

impl ConfigProjection {
    pub fn new(mean_config: DVector<f64>, proj: DMatrix<f64>, spectrum: Vec<f64>) -> Result<Self> {
        let d = mean_config.len();
        if proj.nrows() != d || proj.ncols() == 0 || proj.ncols() > d {
            return Err(Error::dim(format!(
                "projection is {}x{}, expected {d} rows and 1..={d} columns",
                proj.nrows(),
                proj.ncols()
            )));
        }
        if spectrum.len() != d {
            return Err(Error::dim(format!(
                "spectrum has {} values, expected {d}",
                spectrum.len()
            )));
        }
        if mean_config
            .iter()
            .chain(proj.iter())
            .chain(spectrum.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig("projection has non-finite entries".into()));
        }
        let gram = proj.tr_mul(&proj);
        let off = (gram - DMatrix::identity(proj.ncols(), proj.ncols())).amax();
        if off > ORTHONORMAL_TOL {
            return Err(Error::InvalidConfig(format!(
                "projection columns are not orthonormal (deviation {off:e})"
            )));
        }
        Ok(ConfigProjection {
            mean_config,
            proj,
            spectrum,
        })
    }

    pub fn mean_config(&self) -> &DVector<f64> {
        &self.mean_config
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.proj
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn n_latent(&self) -> usize {
        self.proj.ncols()
    }

    pub fn dof(&self) -> usize {
        self.mean_config.len()
    }

    /// `(x − mean) · proj`, row by row.
    pub fn encode(&self, positions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_cols(positions.ncols(), self.dof())?;
        let mut centered = positions.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean_config.transpose();
        }
        Ok(centered * &self.proj)
    }

    /// `mean + y · projᵀ`, row by row.
    pub fn decode(&self, latent: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_cols(latent.ncols(), self.n_latent())?;
        let mut out = latent * self.proj.transpose();
        for mut row in out.row_iter_mut() {
            row += self.mean_config.transpose();
        }
        Ok(out)
    }

    fn check_cols(&self, found: usize, expected: usize) -> Result<()> {
        if found != expected {
            return Err(Error::dim(format!("{found} columns, expected {expected}")));
        }
        Ok(())
    }
}

/// PCA over every configuration sample in the dataset (1/N covariance).
pub fn fit_configuration_pca(dataset: &[Trajectory], n_latent: usize) -> Result<ConfigProjection> {
    let first = dataset.first().ok_or(Error::InsufficientData { needed: 2, found: 0 })?;
    let d = first.dof();
    if n_latent == 0 || n_latent > d {
        return Err(Error::dim(format!("latent dimension {n_latent} for {d} joints")));
    }
    if let Some(i) = dataset.iter().position(|t| t.dof() != d) {
        return Err(Error::dim(format!("{} joints, expected {d}", dataset[i].dof())).in_trajectory(i));
    }
    let total: usize = dataset.iter().map(|t| t.len()).sum();
    if total < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            found: total,
        });
    }
    let mut mean = DVector::zeros(d);
    for t in dataset {
        for row in t.positions().row_iter() {
            mean += row.transpose();
        }
    }
    mean /= total as f64;
    let mut cov = DMatrix::zeros(d, d);
    for t in dataset {
        for row in t.positions().row_iter() {
            let c = row.transpose() - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
    }
    cov /= total as f64;
    linalg::symmetrize(&mut cov);
    let eig = linalg::sorted_eigen(&cov);
    let proj = eig.vectors.columns(0, n_latent).into_owned();
    ConfigProjection::new(mean, proj, eig.values)
}

/// Encodes each trajectory and fits latent weights (`n_latent · n` values each).
pub fn fit_cpca_mp(
    dataset: &[Trajectory],
    p: &ConfigProjection,
    cfg: &BasisConfig,
    ridge: &RidgeConfig,
) -> Result<Vec<MpWeights>> {
    dataset
        .iter()
        .enumerate()
        .map(|(i, t)| fit_cpca_single(t, p, cfg, ridge).map_err(|e| e.in_trajectory(i)))
        .collect()
}

pub fn fit_cpca_single(
    t: &Trajectory,
    p: &ConfigProjection,
    cfg: &BasisConfig,
    ridge: &RidgeConfig,
) -> Result<MpWeights> {
    let latent = p.encode(t.positions())?;
    fit_weights_on(&t.phase(), &latent, cfg, ridge)
}

/// Decodes the latent movement-primitive reconstruction back to joints.
pub fn reconstruct_cpca(
    latent_w: &MpWeights,
    p: &ConfigProjection,
    z: &[f64],
    cfg: &BasisConfig,
) -> Result<DMatrix<f64>> {
    if latent_w.dof() != p.n_latent() {
        return Err(Error::dim(format!(
            "latent weights cover {} dimensions, projection has {}",
            latent_w.dof(),
            p.n_latent()
        )));
    }
    p.decode(&reconstruct(latent_w, z, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::PhaseVector;
    use crate::mpcore::fit_weights;
    use proptest::prelude::*;

    fn traj(pos: DMatrix<f64>) -> Trajectory {
        let t = pos.nrows();
        Trajectory::new((0..t).map(|i| i as f64 * 0.1).collect(), pos).unwrap()
    }

    fn wavy(t: usize, d: usize, seed: f64) -> Trajectory {
        traj(DMatrix::from_fn(t, d, |i, j| {
            let x = i as f64 / (t - 1) as f64;
            ((1.0 + j as f64) * 2.0 * x + seed).sin() * (1.0 + 0.3 * j as f64) + 0.2 * (5.0 * x * seed).cos()
        }))
    }

    #[test]
    fn constant_configurations() {
        let c = DMatrix::from_fn(10, 3, |_, j| j as f64 + 0.5);
        let data = vec![traj(c.clone()), traj(c.clone())];
        for k in 1..=3 {
            let p = fit_configuration_pca(&data, k).unwrap();
            assert_eq!(p.mean_config().as_slice(), &[0.5, 1.5, 2.5]);
            let back = p.decode(&p.encode(&c).unwrap()).unwrap();
            assert!((back - &c).amax() < 1e-12);
        }
    }

    #[test]
    fn diagonal_direction_is_found() {
        let pos = DMatrix::from_fn(20, 2, |i, _| i as f64 - 7.0);
        let p = fit_configuration_pca(&[traj(pos)], 1).unwrap();
        let v = p.projection().column(0);
        let s = 0.5f64.sqrt();
        assert!((v[0].abs() - s).abs() < 1e-12 && (v[1].abs() - s).abs() < 1e-12);
        assert!(v[0] * v[1] > 0.0);
    }

    #[test]
    fn encode_decode_examples() {
        let data = vec![wavy(30, 3, 0.1), wavy(25, 3, 0.9)];
        let p = fit_configuration_pca(&data, 3).unwrap();
        let x = data[0].positions();
        assert!((p.decode(&p.encode(x).unwrap()).unwrap() - x).amax() < 1e-10);

        let mean_rows = DMatrix::from_fn(4, 3, |_, j| p.mean_config()[j]);
        assert!(p.encode(&mean_rows).unwrap().amax() < 1e-14);

        let p1 = fit_configuration_pca(&data, 1).unwrap();
        let round = p1.decode(&p1.encode(x).unwrap()).unwrap();
        // oracle: mean + P Pᵀ (x − mean) with an explicit projector
        let proj = p1.projection() * p1.projection().transpose();
        for (r, row) in x.row_iter().enumerate() {
            let c = row.transpose() - p1.mean_config();
            let expected = p1.mean_config() + &proj * c;
            assert!((round.row(r).transpose() - expected).amax() < 1e-10);
        }
        assert!(p1.encode(&DMatrix::zeros(2, 2)).is_err());
        assert!(fit_configuration_pca(&data, 4).is_err());
        assert!(fit_configuration_pca(&data, 0).is_err());
    }

    #[test]
    fn parameter_counts_match_latent_layout() {
        let data = vec![wavy(80, 4, 0.3), wavy(90, 4, 1.7)];
        for (latent, n) in [(2, 50), (4, 25)] {
            let p = fit_configuration_pca(&data, latent).unwrap();
            let cfg = BasisConfig::with_default_bandwidth(n).unwrap();
            let ws = fit_cpca_mp(&data, &p, &cfg, &RidgeConfig::default()).unwrap();
            assert!(ws.iter().all(|w| w.as_slice().len() == 100));
        }
    }

    #[test]
    fn zero_latent_weights_decode_to_mean() {
        let data = vec![wavy(30, 3, 0.2), wavy(30, 3, 1.2)];
        let p = fit_configuration_pca(&data, 2).unwrap();
        let cfg = BasisConfig::with_default_bandwidth(6).unwrap();
        let z = PhaseVector::uniform(12).unwrap();
        let rec = reconstruct_cpca(&MpWeights::zeros(6, 2), &p, &z, &cfg).unwrap();
        for row in rec.row_iter() {
            assert!((row.transpose() - p.mean_config()).amax() < 1e-14);
        }

        // a trajectory sitting on the mean has a zero latent series
        let at_mean = traj(DMatrix::from_fn(20, 3, |_, j| p.mean_config()[j]));
        let w = fit_cpca_single(&at_mean, &p, &cfg, &RidgeConfig::default()).unwrap();
        assert!(w.vector().amax() < 1e-12);
    }

    #[test]
    fn full_latent_matches_plain_primitives() {
        let data = vec![wavy(60, 3, 0.4), wavy(70, 3, 2.0)];
        let p = fit_configuration_pca(&data, 3).unwrap();
        let cfg = BasisConfig::with_default_bandwidth(8).unwrap();
        let ridge = RidgeConfig::absolute(1e-12);
        let lw = fit_cpca_single(&data[0], &p, &cfg, &ridge).unwrap();
        let z = data[0].phase();
        let via_latent = reconstruct_cpca(&lw, &p, &z, &cfg).unwrap();
        let direct = reconstruct(&fit_weights(&data[0], &cfg, &ridge).unwrap(), &z, &cfg).unwrap();
        assert!((via_latent - direct).amax() < 1e-6);
    }

    #[test]
    fn discarded_energy_bounds_error() {
        let data: Vec<Trajectory> = (0..4).map(|k| wavy(50, 3, k as f64 * 0.7)).collect();
        let total: usize = data.iter().map(|t| t.len() * 3).sum();
        let all: Vec<f64> = data
            .iter()
            .flat_map(|t| t.positions().iter().copied().collect::<Vec<_>>())
            .collect();
        let mean = all.iter().sum::<f64>() / total as f64;
        let std = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / total as f64).sqrt();
        let cfg = BasisConfig::with_default_bandwidth(10).unwrap();
        for latent in 1..3 {
            let p = fit_configuration_pca(&data, latent).unwrap();
            let mut sq = 0.0;
            for t in &data {
                let w = fit_cpca_single(t, &p, &cfg, &RidgeConfig::default()).unwrap();
                let rec = reconstruct_cpca(&w, &p, &t.phase(), &cfg).unwrap();
                sq += (rec - t.positions()).norm_squared();
            }
            let nrmse = (sq / total as f64).sqrt() / std;
            let discarded: f64 = p.spectrum()[latent..].iter().sum();
            let bound = (discarded / 3.0).sqrt() / std;
            assert!(nrmse >= bound * (1.0 - 1e-9), "latent {latent}: {nrmse} < {bound}");
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(
            vals in proptest::collection::vec(-3.0f64..3.0, 40),
            latent in 1usize..=4,
        ) {
            let x = DMatrix::from_row_slice(10, 4, &vals);
            let p = fit_configuration_pca(&[traj(x.clone())], latent).unwrap();
            let once = p.decode(&p.encode(&x).unwrap()).unwrap();
            let twice = p.decode(&p.encode(&once).unwrap()).unwrap();
            prop_assert!((once - twice).amax() < 1e-10);
        }
    }
}
