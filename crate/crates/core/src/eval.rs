//! Reconstruction accuracy: NRMSE, parameter/error frontiers and leave-one-out.
//!
//! Errors are pooled over every joint, timestep and trajectory and divided by
//! the pooled standard deviation of the dataset positions.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::BasisConfig;
use crate::cpca::{fit_configuration_pca, fit_cpca_single, reconstruct_cpca};
use crate::error::{Error, ErrorClass, Result};
use crate::mpcore::{fit_weights, parameter_count, reconstruct, ModelKind, MpWeights, RidgeConfig, Trajectory};
use crate::primos::{
    collect_indexed, fit_alpha, fit_alphas, fit_weight_distribution, principal_movements, reconstruct_primo,
    PrincipalMovements,
};
use crate::promp::estimate_distribution;

/// Pooled statistics of every position value in a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl DatasetStats {
    pub fn from_dataset(dataset: &[Trajectory]) -> Result<Self> {
        Self::from_matrices(dataset.iter().map(|t| t.positions()))
    }

    pub fn from_matrices<'a>(mats: impl IntoIterator<Item = &'a DMatrix<f64>> + Clone) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = 0.0;
        for m in mats.clone() {
            count += m.len();
            sum += m.sum();
        }
        if count == 0 {
            return Err(Error::InsufficientData { needed: 1, found: 0 });
        }
        let mean = sum / count as f64;
        let sq: f64 = mats
            .into_iter()
            .map(|m| m.iter().map(|v| (v - mean).powi(2)).sum::<f64>())
            .sum();
        Ok(DatasetStats {
            mean,
            std: (sq / count as f64).sqrt(),
            count,
        })
    }
}

/// RMSE over all entries divided by the dataset standard deviation.
pub fn nrmse(pred: &DMatrix<f64>, reference: &DMatrix<f64>, stats: &DatasetStats) -> Result<f64> {
    pooled_nrmse(std::iter::once((pred, reference)), stats)
}

/// NRMSE pooled over several (prediction, reference) pairs.
pub fn pooled_nrmse<'a>(
    pairs: impl IntoIterator<Item = (&'a DMatrix<f64>, &'a DMatrix<f64>)>,
    stats: &DatasetStats,
) -> Result<f64> {
    if stats.std.is_nan() || stats.std <= 0.0 {
        return Err(Error::DegenerateDataset);
    }
    let mut sq = 0.0;
    let mut count = 0usize;
    for (p, r) in pairs {
        if p.shape() != r.shape() {
            return Err(Error::dim(format!(
                "prediction is {}x{}, reference is {}x{}",
                p.nrows(),
                p.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        sq += (p - r).norm_squared();
        count += p.len();
    }
    if count == 0 {
        return Err(Error::InsufficientData { needed: 1, found: 0 });
    }
    Ok((sq / count as f64).sqrt() / stats.std)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mp,
    Primos,
    Cpca,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Mp => "mp",
            Method::Primos => "primos",
            Method::Cpca => "cpca",
        }
    }

    fn kind(&self) -> ModelKind {
        match self {
            Method::Mp => ModelKind::Mp,
            Method::Primos => ModelKind::Primos,
            Method::Cpca => ModelKind::Cpca,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mp" => Ok(Method::Mp),
            "primos" => Ok(Method::Primos),
            "cpca" => Ok(Method::Cpca),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// One grid configuration. `size` is `n_c` for PriMos, the latent dimension
/// for CPCA, and unused for plain MPs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub n_basis: usize,
    pub bandwidth: Option<f64>,
    pub size: usize,
    pub ridge: RidgeConfig,
}

impl GridConfig {
    pub fn basis(&self) -> Result<BasisConfig> {
        match self.bandwidth {
            Some(h) => BasisConfig::new(self.n_basis, h),
            None => BasisConfig::with_default_bandwidth(self.n_basis),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurvePoint {
    pub method: Method,
    pub param_count: usize,
    pub nrmse: f64,
    pub config: GridConfig,
}

/// Why a grid point could not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFailure {
    pub class: ErrorClass,
    pub message: String,
}

/// A grid point and what happened when it was evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub method: Method,
    pub config: GridConfig,
    pub result: std::result::Result<ErrorCurvePoint, PointFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub outcomes: Vec<GridOutcome>,
    pub frontier: Vec<ErrorCurvePoint>,
}

impl ErrorCurve {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }

    /// Smallest parameter count on the frontier reaching `nrmse ≤ level`.
    pub fn min_params_at(&self, level: f64) -> Option<usize> {
        self.frontier.iter().find(|p| p.nrmse <= level).map(|p| p.param_count)
    }
}

/// Default grid: `n ∈ {5, 10, 15, 20}`; `n_c ∈ 1..=min(30, n·d, m−1)` for
/// PriMos, `n_latent ∈ 1..=d` for CPCA.
pub fn default_grid(method: Method, d: usize, m: usize, ridge: RidgeConfig) -> Vec<GridConfig> {
    let mut grid = Vec::new();
    for n_basis in [5, 10, 15, 20] {
        let sizes: Vec<usize> = match method {
            Method::Mp => vec![0],
            Method::Primos => (1..=30.min(n_basis * d).min(m.saturating_sub(1)).max(1)).collect(),
            Method::Cpca => (1..=d).collect(),
        };
        grid.extend(sizes.into_iter().map(|size| GridConfig {
            n_basis,
            bandwidth: None,
            size,
            ridge,
        }));
    }
    grid
}

/// Points sorted by parameter count, keeping only strictly improving NRMSE.
pub fn frontier(points: &[ErrorCurvePoint]) -> Vec<ErrorCurvePoint> {
    let mut sorted: Vec<&ErrorCurvePoint> = points.iter().filter(|p| p.nrmse.is_finite()).collect();
    sorted.sort_by(|a, b| {
        a.param_count
            .cmp(&b.param_count)
            .then(a.nrmse.partial_cmp(&b.nrmse).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for p in sorted {
        if p.nrmse < best {
            best = p.nrmse;
            out.push(p.clone());
        }
    }
    out
}

/// Fits `method` on the whole dataset for every grid configuration and
/// reports pooled training NRMSE per point plus the resulting frontier.
///
/// Failing configurations are kept in `outcomes` with their error message.
pub fn param_error_curve(dataset: &[Trajectory], method: Method, grid: &[GridConfig]) -> Result<ErrorCurve> {
    if dataset.is_empty() || grid.is_empty() {
        return Err(Error::InsufficientData { needed: 1, found: 0 });
    }
    let stats = DatasetStats::from_dataset(dataset)?;
    if stats.std.is_nan() || stats.std <= 0.0 {
        return Err(Error::DegenerateDataset);
    }
    let d = dataset[0].dof();
    if let Some(i) = dataset.iter().position(|t| t.dof() != d) {
        return Err(Error::dim(format!("{} joints, expected {d}", dataset[i].dof())).in_trajectory(i));
    }

    let results: Vec<Result<f64>> = match method {
        Method::Primos => primos_grid(dataset, grid, &stats),
        _ => grid
            .par_iter()
            .map(|c| evaluate_config(dataset, method, c, &stats))
            .collect(),
    };

    let outcomes: Vec<GridOutcome> = grid
        .iter()
        .zip(results)
        .map(|(c, r)| GridOutcome {
            method,
            config: *c,
            result: r
                .map(|nrmse| ErrorCurvePoint {
                    method,
                    param_count: parameter_count(method.kind(), c.n_basis, d, c.size).mean,
                    nrmse,
                    config: *c,
                })
                .map_err(|e| PointFailure {
                    class: e.class(),
                    message: e.to_string(),
                }),
        })
        .collect();
    let points: Vec<ErrorCurvePoint> = outcomes.iter().filter_map(|o| o.result.clone().ok()).collect();
    Ok(ErrorCurve {
        frontier: frontier(&points),
        outcomes,
    })
}

fn evaluate_config(dataset: &[Trajectory], method: Method, c: &GridConfig, stats: &DatasetStats) -> Result<f64> {
    let cfg = c.basis()?;
    let recs: Vec<DMatrix<f64>> = match method {
        Method::Mp => dataset
            .iter()
            .enumerate()
            .map(|(i, t)| {
                fit_weights(t, &cfg, &c.ridge)
                    .and_then(|w| reconstruct(&w, &t.phase(), &cfg))
                    .map_err(|e| e.in_trajectory(i))
            })
            .collect::<Result<_>>()?,
        Method::Cpca => {
            let p = fit_configuration_pca(dataset, c.size)?;
            dataset
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    fit_cpca_single(t, &p, &cfg, &c.ridge)
                        .and_then(|w| reconstruct_cpca(&w, &p, &t.phase(), &cfg))
                        .map_err(|e| e.in_trajectory(i))
                })
                .collect::<Result<_>>()?
        }
        Method::Primos => {
            let (_, dist) = fit_weight_distribution(dataset, &cfg, &c.ridge, None)?;
            let pm = principal_movements(&dist, c.size)?;
            primos_reconstructions(dataset, &pm, &cfg, &c.ridge)?
        }
    };
    pooled_nrmse(dataset.iter().zip(&recs).map(|(t, r)| (r, t.positions())), stats)
}

fn primos_reconstructions(
    dataset: &[Trajectory],
    pm: &PrincipalMovements,
    cfg: &BasisConfig,
    ridge: &RidgeConfig,
) -> Result<Vec<DMatrix<f64>>> {
    let alphas = fit_alphas(dataset, pm, cfg, ridge)?;
    dataset
        .iter()
        .zip(&alphas)
        .enumerate()
        .map(|(i, (t, a))| reconstruct_primo(a, pm, &t.phase(), cfg).map_err(|e| e.in_trajectory(i)))
        .collect()
}

/// PriMos grid points sharing a basis and ridge reuse one weight fit and one
/// eigendecomposition; `Ω` for smaller `n_c` is a column prefix of the largest.
fn primos_grid(dataset: &[Trajectory], grid: &[GridConfig], stats: &DatasetStats) -> Vec<Result<f64>> {
    // group key: bit patterns of the floats keep the grouping exact
    let key = |c: &GridConfig| {
        (
            c.n_basis,
            c.bandwidth.map(f64::to_bits),
            c.ridge.lambda.to_bits(),
            c.ridge.scale == crate::mpcore::RidgeScale::Relative,
        )
    };
    let mut groups: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (i, c) in grid.iter().enumerate() {
        groups.entry(key(c)).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let per_group: Vec<Vec<(usize, Result<f64>)>> = groups
        .par_iter()
        .map(|idx| {
            let c0 = grid[idx[0]];
            let shared = c0.basis().and_then(|cfg| {
                let (_, dist) = fit_weight_distribution(dataset, &cfg, &c0.ridge, None)?;
                Ok((cfg, dist))
            });
            let (cfg, dist) = match shared {
                Ok(s) => s,
                Err(e) => {
                    return idx.iter().map(|&i| (i, Err(shared_failure(&e)))).collect();
                }
            };
            let dim = dist.mean().len();
            let max_nc = idx
                .iter()
                .map(|&i| grid[i].size)
                .filter(|&s| s <= dim)
                .max()
                .unwrap_or(0);
            let full = if max_nc > 0 {
                Some(principal_movements(&dist, max_nc))
            } else {
                None
            };
            idx.par_iter()
                .map(|&i| {
                    let c = &grid[i];
                    let r = match &full {
                        _ if c.size == 0 || c.size > dim => Err(Error::dim(format!(
                            "requested {} components in a {dim}-dimensional weight space",
                            c.size
                        ))),
                        Some(Ok(pm)) => pm
                            .truncate(c.size)
                            .and_then(|pm| primos_reconstructions(dataset, &pm, &cfg, &c.ridge))
                            .and_then(|recs| {
                                pooled_nrmse(dataset.iter().zip(&recs).map(|(t, r)| (r, t.positions())), stats)
                            }),
                        Some(Err(e)) => Err(shared_failure(e)),
                        None => unreachable!("max_nc covers every valid size"),
                    };
                    (i, r)
                })
                .collect()
        })
        .collect();
    let mut out: Vec<Option<Result<f64>>> = (0..grid.len()).map(|_| None).collect();
    for (i, r) in per_group.into_iter().flatten() {
        out[i] = Some(r);
    }
    out.into_iter()
        .map(|r| r.expect("every grid index is evaluated"))
        .collect()
}

/// Re-creates a shared error for each grid point it affects, keeping its class.
fn shared_failure(e: &Error) -> Error {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Usage => Error::InvalidConfig(msg),
        ErrorClass::Numerical => Error::IllConditioned(msg),
        ErrorClass::Data => Error::Dimension(msg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LooRow {
    pub n_c: usize,
    pub fold: usize,
    pub train_nrmse: f64,
    pub validation_nrmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LooSummary {
    pub n_c: usize,
    pub train_nrmse: f64,
    pub validation_nrmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooReport {
    /// One row per (n_c, fold), ordered by n_c then fold.
    pub rows: Vec<LooRow>,
    /// Fold averages per n_c.
    pub summary: Vec<LooSummary>,
}

/// Leave-one-out evaluation of PriMos.
///
/// Each fold fits `ω̄` and `Ω` on the other `m − 1` trajectories, refits the
/// training coefficients, and fits the held-out trajectory's coefficients
/// against the frozen training model. NRMSE is normalized by the pooled
/// standard deviation of the whole dataset.
pub fn leave_one_out(
    dataset: &[Trajectory],
    cfg: &BasisConfig,
    ridge: &RidgeConfig,
    n_c_range: RangeInclusive<usize>,
) -> Result<LooReport> {
    let m = dataset.len();
    if m < 3 {
        return Err(Error::InsufficientData { needed: 3, found: m });
    }
    if *n_c_range.start() == 0 || n_c_range.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "component range {}..={} must start at 1 or more",
            n_c_range.start(),
            n_c_range.end()
        )));
    }
    let stats = DatasetStats::from_dataset(dataset)?;
    if stats.std.is_nan() || stats.std <= 0.0 {
        return Err(Error::DegenerateDataset);
    }
    let max_nc = *n_c_range.end();
    // every fold shares the per-trajectory weight fits
    let (weights, _) = fit_weight_distribution(dataset, cfg, ridge, None)?;
    let dim = weights[0].as_slice().len();
    if max_nc > dim {
        return Err(Error::dim(format!(
            "requested {max_nc} components in a {dim}-dimensional weight space"
        )));
    }

    let folds: Vec<Result<Vec<LooRow>>> = (0..m)
        .into_par_iter()
        .map(|fold| {
            let train: Vec<Trajectory> = dataset
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != fold)
                .map(|(_, t)| t.clone())
                .collect();
            let train_w: Vec<MpWeights> = weights
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != fold)
                .map(|(_, w)| w.clone())
                .collect();
            let dist = estimate_distribution(&train_w, cfg, None)?;
            let full = principal_movements(&dist, max_nc)?;
            let held = &dataset[fold];
            n_c_range
                .clone()
                .map(|n_c| {
                    let pm = full.truncate(n_c)?;
                    let recs = primos_reconstructions(&train, &pm, cfg, ridge)?;
                    let train_nrmse = pooled_nrmse(train.iter().zip(&recs).map(|(t, r)| (r, t.positions())), &stats)?;
                    let a = fit_alpha(held, &pm, cfg, ridge).map_err(|e| e.in_trajectory(fold))?;
                    let rec = reconstruct_primo(&a, &pm, &held.phase(), cfg)?;
                    let validation_nrmse = nrmse(&rec, held.positions(), &stats)?;
                    Ok(LooRow {
                        n_c,
                        fold,
                        train_nrmse,
                        validation_nrmse,
                    })
                })
                .collect()
        })
        .collect();
    let folds = collect_indexed(folds).map_err(|e| match e {
        Error::Trajectory { source, .. } => *source,
        other => other,
    })?;

    let mut rows: Vec<LooRow> = folds.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.n_c, r.fold));
    let summary = n_c_range
        .map(|n_c| {
            let sel: Vec<&LooRow> = rows.iter().filter(|r| r.n_c == n_c).collect();
            let k = sel.len() as f64;
            LooSummary {
                n_c,
                train_nrmse: sel.iter().map(|r| r.train_nrmse).sum::<f64>() / k,
                validation_nrmse: sel.iter().map(|r| r.validation_nrmse).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(LooReport { rows, summary })
}

/// Writes every grid outcome as CSV; `frontier` marks points on the frontier.
pub fn write_curve_csv<W: Write>(out: W, curves: &[ErrorCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "params",
        "nrmse",
        "n_basis",
        "bandwidth",
        "components",
        "latent",
        "ridge",
        "ridge_scale",
        "frontier",
        "error",
    ])?;
    for curve in curves {
        for o in &curve.outcomes {
            let c = &o.config;
            let (components, latent) = match o.method {
                Method::Primos => (c.size.to_string(), String::new()),
                Method::Cpca => (String::new(), c.size.to_string()),
                Method::Mp => (String::new(), String::new()),
            };
            let bandwidth = match c.basis() {
                Ok(b) => format!("{:?}", b.bandwidth()),
                Err(_) => String::new(),
            };
            let scale = match c.ridge.scale {
                crate::mpcore::RidgeScale::Absolute => "absolute",
                crate::mpcore::RidgeScale::Relative => "relative",
            };
            let (params, nrmse_s, on_frontier, err) = match &o.result {
                Ok(p) => (
                    p.param_count.to_string(),
                    format!("{:?}", p.nrmse),
                    curve.frontier.iter().any(|f| f == p).to_string(),
                    String::new(),
                ),
                Err(e) => (String::new(), String::new(), "false".to_string(), e.message.clone()),
            };
            w.write_record([
                o.method.name().to_string(),
                params,
                nrmse_s,
                c.n_basis.to_string(),
                bandwidth,
                components,
                latent,
                format!("{:?}", c.ridge.lambda),
                scale.to_string(),
                on_frontier,
                err,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_loo_csv<W: Write>(out: W, report: &LooReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_c", "fold", "train_nrmse", "validation_nrmse"])?;
    for r in &report.rows {
        w.write_record([
            r.n_c.to_string(),
            r.fold.to_string(),
            format!("{:?}", r.train_nrmse),
            format!("{:?}", r.validation_nrmse),
        ])?;
    }
    w.flush()?;
    Ok(())
}
