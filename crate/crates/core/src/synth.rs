//! Seeded synthetic datasets with known principal movements.
//!
//! Each trajectory is `Ψ(ω̄* + Ω* α*)` sampled on its own duration and rate,
//! plus optional i.i.d. Gaussian noise. `α*` is standard normal and the
//! columns of `Ω*` are orthogonal with distinct, decreasing norms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::basis::{phase_from_timestamps, BasisConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mpcore::{reconstruct_vector, Trajectory};
use crate::primos::{AlphaCoeffs, PrincipalMovements};

/// Ratio between consecutive ground-truth component norms.
const NORM_DECAY: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    /// Ground-truth component count.
    pub k: usize,
    /// Basis count of the generating primitives.
    pub n: usize,
    pub d: usize,
    /// Number of trajectories.
    pub m: usize,
    pub noise_std: f64,
    /// Duration range in seconds.
    pub duration: (f64, f64),
    /// Sampling-rate range in samples per second.
    pub rate: (f64, f64),
    /// When set, all joints are linear mixtures of this many latent joint
    /// curves, so configurations only span a subspace of that dimension.
    pub joint_rank: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            k: 3,
            n: 10,
            d: 4,
            m: 20,
            noise_std: 0.0,
            duration: (2.0, 4.0),
            rate: (20.0, 50.0),
            joint_rank: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 || self.d == 0 {
            return err("basis count and joint count must be positive".into());
        }
        let free = self.n * self.joint_rank.unwrap_or(self.d);
        if self.k == 0 || self.k > free {
            return err(format!("component count {} must be in 1..={free}", self.k));
        }
        if let Some(r) = self.joint_rank {
            if r == 0 || r > self.d {
                return err(format!("joint rank {r} must be in 1..={}", self.d));
            }
        }
        if self.m < 2 {
            return err(format!("need at least 2 trajectories, got {}", self.m));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return err(format!("noise std must be nonnegative, got {}", self.noise_std));
        }
        let (d0, d1) = self.duration;
        let (r0, r1) = self.rate;
        if !(d0 > 0.0 && d1 >= d0 && d1.is_finite()) {
            return err(format!("invalid duration range ({d0}, {d1})"));
        }
        if !(r0 > 0.0 && r1 >= r0 && r1.is_finite()) {
            return err(format!("invalid rate range ({r0}, {r1})"));
        }
        if d0 * r0 < 1.0 {
            return err("shortest trajectory would have fewer than 2 samples".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub dataset: Vec<Trajectory>,
    pub cfg: BasisConfig,
    /// `ω̄*` and `Ω*`; eigenvalues are the squared column norms.
    pub truth: PrincipalMovements,
    pub alphas: Vec<AlphaCoeffs>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let cfg = BasisConfig::with_default_bandwidth(spec.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d, k) = (spec.n, spec.d, spec.k);
    let r = spec.joint_rank.unwrap_or(d);

    // latent weights live in n·r; mixing M ⊗ I_n lifts them to n·d
    let mixing = match spec.joint_rank {
        Some(_) => DMatrix::from_fn(d, r, |_, _| rng.random_range(-1.0..1.0)),
        None => DMatrix::identity(d, d),
    };
    let lift = mixing.kronecker(&DMatrix::<f64>::identity(n, n));

    let w_bar_latent = DVector::from_fn(n * r, |_, _| rng.random_range(-1.0..1.0));
    let raw = DMatrix::from_fn(n * r, k, |_, _| StandardNormal.sample(&mut rng));
    let basis = (&lift * raw).qr().q();
    let w_bar = &lift * w_bar_latent;

    let base_norm = 0.5 * ((n * d) as f64).sqrt();
    let mut omega = DMatrix::zeros(n * d, k);
    let mut eigvals = Vec::with_capacity(k);
    for j in 0..k {
        let s = base_norm * NORM_DECAY.powi(j as i32);
        let mut col = basis.column(j).into_owned();
        linalg::apply_sign_convention(&mut col);
        let col = &col * (s / col.norm());
        omega.set_column(j, &col);
        eigvals.push(s * s);
    }
    let truth = PrincipalMovements::new(w_bar, omega, eigvals)?;

    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let mut dataset = Vec::with_capacity(spec.m);
    let mut alphas = Vec::with_capacity(spec.m);
    for _ in 0..spec.m {
        let alpha = AlphaCoeffs::new(DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng)))?;
        let duration = sample_range(&mut rng, spec.duration);
        let rate = sample_range(&mut rng, spec.rate);
        let start = rng.random_range(0.0..1.0);
        let samples = ((duration * rate).round() as usize + 1).max(2);
        let times: Vec<f64> = (0..samples).map(|i| start + i as f64 / rate).collect();
        let z = phase_from_timestamps(&times)?;
        let w = truth.weights_for(&alpha)?;
        let mut pos = reconstruct_vector(w.as_slice(), d, &z, &cfg)?;
        if spec.noise_std > 0.0 {
            pos.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        dataset.push(Trajectory::new(times, pos)?);
        alphas.push(alpha);
    }
    Ok(SynthDataset {
        dataset,
        cfg,
        truth,
        alphas,
    })
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}
