//! File formats: trajectory CSV, dataset manifests and model files.
//!
//! Reals are written in their shortest round-trip form, so every
//! save/load cycle is lossless and re-saving a loaded file reproduces it
//! byte for byte. All writes go through a temporary file and a rename.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisConfig;
use crate::cpca::ConfigProjection;
use crate::error::{Error, Result};
use crate::mpcore::{MpWeights, ObservationNoise, RidgeConfig, RidgeScale, Trajectory};
use crate::primos::{AlphaCoeffs, PrincipalMovements, ProPrimoDistribution};
use crate::promp::PrompDistribution;

pub const FORMAT_VERSION: u32 = 1;

/// Writes `path` atomically: the content goes to a sibling temporary file
/// that is renamed over `path` once complete.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// trajectory CSV

/// Parses a trajectory from CSV text with header `t,<joint>,...`.
///
/// Joint names `j1..jd` are treated as anonymous.
pub fn parse_trajectory_csv<R: Read>(input: R) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let cols: Vec<String> = header.iter().map(str::to_string).collect();
    if cols.first().map(String::as_str) != Some("t") {
        return Err(Error::Parse {
            line: 1,
            message: "header must start with `t`".into(),
        });
    }
    let names: Vec<String> = cols[1..].to_vec();
    let d = names.len();
    if d == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "header names no joints".into(),
        });
    }
    if names.iter().any(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "empty joint name".into(),
        });
    }
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(Error::Parse {
                line: 1,
                message: format!("duplicate joint name `{a}`"),
            });
        }
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut prev_line = 1;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(prev_line + 1, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(prev_line + 1, |p| p.line());
        prev_line = line;
        if rec.len() != d + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", d + 1, rec.len()),
            });
        }
        let mut row = Vec::with_capacity(d + 1);
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: `{field}` is not a number", cols[k]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column `{}`: non-finite value", cols[k]),
                });
            }
            row.push(v);
        }
        if let Some(&last) = times.last() {
            if row[0] <= last {
                return Err(Error::InvalidTrajectory(format!(
                    "line {line}: time {} does not increase past {last}",
                    row[0]
                )));
            }
        }
        times.push(row[0]);
        values.extend_from_slice(&row[1..]);
    }
    let t = times.len();
    let traj = Trajectory::new(times, DMatrix::from_row_slice(t, d, &values))?;
    if is_anonymous(&names) {
        Ok(traj)
    } else {
        traj.with_joint_names(names)
    }
}

fn anonymous_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("j{j}")).collect()
}

fn is_anonymous(names: &[String]) -> bool {
    names == anonymous_names(names.len()).as_slice()
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let f = File::open(path)?;
    parse_trajectory_csv(BufReader::new(f))
}

pub fn format_trajectory_csv<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let names = traj
        .joint_names()
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| anonymous_names(traj.dof()));
    write_rows_csv(out, &names, traj.times(), traj.positions())
}

fn write_rows_csv<W: Write>(out: W, names: &[String], first: &[f64], rows: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (i, t) in first.iter().enumerate() {
        let mut rec = vec![format!("{t:?}")];
        rec.extend(rows.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    write_atomic(path, |w| format_trajectory_csv(w, traj))
}

/// Writes a reconstruction indexed by phase rather than time; the first
/// column is still named `t` so the file reads back as a trajectory.
pub fn write_phase_csv(path: &Path, z: &[f64], positions: &DMatrix<f64>, names: Option<&[String]>) -> Result<()> {
    if positions.nrows() != z.len() {
        return Err(Error::dim(format!("{} phases for {} rows", z.len(), positions.nrows())));
    }
    let names = names
        .map(<[String]>::to_vec)
        .unwrap_or_else(|| anonymous_names(positions.ncols()));
    write_atomic(path, |w| write_rows_csv(w, &names, z, positions))
}

// ---------------------------------------------------------------------------
// dataset manifests

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// Paths relative to the manifest's directory, or absolute.
    pub trajectories: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// Loads the manifest at `path` and every trajectory it lists.
pub fn load_dataset(path: &Path) -> Result<(DatasetManifest, Vec<Trajectory>)> {
    let text = std::fs::read_to_string(path)?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            "format_version",
            format!(
                "unsupported version {}, expected {FORMAT_VERSION}",
                manifest.format_version
            ),
        ));
    }
    if manifest.trajectories.is_empty() {
        return Err(Error::format("trajectories", "manifest lists no trajectories"));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut dataset = Vec::with_capacity(manifest.trajectories.len());
    for (i, rel) in manifest.trajectories.iter().enumerate() {
        let p = base.join(rel);
        let traj = read_trajectory_csv(&p).map_err(|e| match e {
            Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", p.display()))),
            other => other.in_trajectory(i),
        })?;
        if let Some(first) = dataset.first() {
            let first: &Trajectory = first;
            if traj.dof() != first.dof() {
                return Err(Error::dim(format!("{} joints, expected {}", traj.dof(), first.dof())).in_trajectory(i));
            }
        }
        let traj = match &manifest.joint_names {
            Some(names) => {
                if let Some(own) = traj.joint_names() {
                    if own != names.as_slice() {
                        return Err(Error::dim("joint names differ from the manifest").in_trajectory(i));
                    }
                }
                traj.with_joint_names(names.clone()).map_err(|e| e.in_trajectory(i))?
            }
            None => traj,
        };
        dataset.push(traj);
    }
    Ok((manifest, dataset))
}

/// Writes `dataset` as `traj_000.csv`, ... plus `manifest.json` inside
/// `dir`, returning the manifest path.
pub fn write_dataset(
    dir: &Path,
    dataset: &[Trajectory],
    joint_names: Option<Vec<String>>,
    provenance: Option<serde_json::Value>,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let width = dataset.len().saturating_sub(1).to_string().len().max(3);
    let mut files = Vec::with_capacity(dataset.len());
    for (i, t) in dataset.iter().enumerate() {
        let name = PathBuf::from(format!("traj_{i:0width$}.csv"));
        write_trajectory_csv(t, &dir.join(&name))?;
        files.push(name);
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        trajectories: files,
        joint_names,
        provenance,
    };
    let path = dir.join("manifest.json");
    write_atomic(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// models

/// Principal movements together with the coefficients of the trajectories
/// they were fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimosModel {
    pub movements: PrincipalMovements,
    pub alphas: Vec<AlphaCoeffs>,
}

/// Configuration-space projection plus per-trajectory latent weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CpcaModel {
    pub projection: ConfigProjection,
    pub latent_weights: Vec<MpWeights>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Per-trajectory weights.
    Mp(Vec<MpWeights>),
    Promp(PrompDistribution),
    Primos(PrimosModel),
    ProPrimos(ProPrimoDistribution),
    Cpca(CpcaModel),
}

impl Model {
    pub fn kind(&self) -> crate::mpcore::ModelKind {
        use crate::mpcore::ModelKind;
        match self {
            Model::Mp(_) => ModelKind::Mp,
            Model::Promp(_) => ModelKind::Promp,
            Model::Primos(_) => ModelKind::Primos,
            Model::ProPrimos(_) => ModelKind::ProPrimos,
            Model::Cpca(_) => ModelKind::Cpca,
        }
    }
}

/// A fitted model with the settings it was fitted under.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    basis: BasisConfig,
    dof: usize,
    ridge: RidgeConfig,
    sigma_tau: ObservationNoise,
    model: Model,
}

impl ModelFile {
    /// Checks that the model lives on `basis` with `sigma_tau.dof()` joints.
    pub fn new(basis: BasisConfig, ridge: RidgeConfig, sigma_tau: ObservationNoise, model: Model) -> Result<Self> {
        ridge.validate()?;
        let d = sigma_tau.dof();
        let n = basis.n();
        let check = |what: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::dim(format!("{what} does not match basis n = {n}, d = {d}")))
            }
        };
        match &model {
            Model::Mp(ws) => {
                check(
                    "weights",
                    !ws.is_empty() && ws.iter().all(|w| w.n() == n && w.dof() == d),
                )?;
            }
            Model::Promp(p) => {
                check("distribution", p.basis() == &basis && p.dof() == d)?;
                check("observation noise", p.noise() == &sigma_tau)?;
            }
            Model::Primos(p) => {
                let nc = p.movements.n_components();
                check("principal movements", p.movements.dim() == n * d)?;
                check("coefficients", p.alphas.iter().all(|a| a.len() == nc))?;
            }
            Model::ProPrimos(p) => {
                check("distribution", p.basis() == &basis && p.dof() == d)?;
                check("observation noise", p.noise() == &sigma_tau)?;
            }
            Model::Cpca(c) => {
                let k = c.projection.n_latent();
                check("projection", c.projection.dof() == d)?;
                check(
                    "latent weights",
                    !c.latent_weights.is_empty() && c.latent_weights.iter().all(|w| w.n() == n && w.dof() == k),
                )?;
            }
        }
        Ok(ModelFile {
            basis,
            dof: d,
            ridge,
            sigma_tau,
            model,
        })
    }

    pub fn basis(&self) -> &BasisConfig {
        &self.basis
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn ridge(&self) -> &RidgeConfig {
        &self.ridge
    }

    pub fn noise(&self) -> &ObservationNoise {
        &self.sigma_tau
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_repr())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: ModelRepr = serde_json::from_str(text)?;
        Self::from_repr(repr)
    }

    fn to_repr(&self) -> ModelRepr {
        let body = match &self.model {
            Model::Mp(ws) => BodyRepr::Mp {
                weights: MatrixRepr::from_rows(ws.iter().map(|w| w.as_slice())),
            },
            Model::Promp(p) => BodyRepr::Promp {
                mean: p.mean().as_slice().to_vec(),
                covariance: MatrixRepr::from(p.covariance()),
            },
            Model::Primos(p) => BodyRepr::Primos {
                movements: MovementsRepr::from(&p.movements),
                alphas: MatrixRepr::from_rows_with_cols(
                    p.alphas.iter().map(|a| a.as_slice()),
                    p.movements.n_components(),
                ),
            },
            Model::ProPrimos(p) => BodyRepr::ProPrimos {
                movements: MovementsRepr::from(p.principal_movements()),
                alpha_mean: p.mean().as_slice().to_vec(),
                alpha_covariance: MatrixRepr::from(p.covariance()),
            },
            Model::Cpca(c) => BodyRepr::Cpca {
                mean_config: c.projection.mean_config().as_slice().to_vec(),
                projection: MatrixRepr::from(c.projection.projection()),
                spectrum: c.projection.spectrum().to_vec(),
                latent_weights: MatrixRepr::from_rows(c.latent_weights.iter().map(|w| w.as_slice())),
            },
        };
        ModelRepr {
            format_version: FORMAT_VERSION,
            n_basis: self.basis.n(),
            bandwidth: self.basis.bandwidth(),
            dof: self.dof,
            ridge: RidgeRepr {
                lambda: self.ridge.lambda,
                scale: match self.ridge.scale {
                    RidgeScale::Absolute => "absolute".into(),
                    RidgeScale::Relative => "relative".into(),
                },
            },
            sigma_tau: MatrixRepr::from(self.sigma_tau.matrix()),
            model: body,
        }
    }

    fn from_repr(r: ModelRepr) -> Result<Self> {
        if r.format_version != FORMAT_VERSION {
            return Err(Error::format(
                "format_version",
                format!("unsupported version {}, expected {FORMAT_VERSION}", r.format_version),
            ));
        }
        let field = |name: &'static str| move |e: Error| Error::format(name, e.to_string());
        let basis = BasisConfig::new(r.n_basis, r.bandwidth).map_err(field("bandwidth"))?;
        let (n, d) = (r.n_basis, r.dof);
        if d == 0 {
            return Err(Error::format("dof", "must be positive"));
        }
        let scale = match r.ridge.scale.as_str() {
            "absolute" => RidgeScale::Absolute,
            "relative" => RidgeScale::Relative,
            other => return Err(Error::format("ridge.scale", format!("unknown scale `{other}`"))),
        };
        let ridge = RidgeConfig {
            lambda: r.ridge.lambda,
            scale,
        };
        ridge.validate().map_err(field("ridge.lambda"))?;
        let sigma_tau = r.sigma_tau.square("sigma_tau", d)?;
        let sigma_tau = ObservationNoise::new(sigma_tau).map_err(field("sigma_tau"))?;

        let model = match r.model {
            BodyRepr::Mp { weights } => {
                let rows = weights.rows_of("model.weights", n * d)?;
                if rows.is_empty() {
                    return Err(Error::format("model.weights", "no weight vectors"));
                }
                let ws = rows
                    .into_iter()
                    .map(|w| MpWeights::new(DVector::from_vec(w), n, d))
                    .collect::<Result<Vec<_>>>()
                    .map_err(field("model.weights"))?;
                Model::Mp(ws)
            }
            BodyRepr::Promp { mean, covariance } => {
                let dim = n * d;
                let mean = vector_of("model.mean", mean, dim)?;
                let cov = covariance.square("model.covariance", dim)?;
                Model::Promp(
                    PrompDistribution::new(mean, cov, basis.clone(), d, sigma_tau.clone())
                        .map_err(field("model.covariance"))?,
                )
            }
            BodyRepr::Primos { movements, alphas } => {
                let pm = movements.build(n * d)?;
                let rows = alphas.rows_of("model.alphas", pm.n_components())?;
                let alphas = rows
                    .into_iter()
                    .map(|a| AlphaCoeffs::new(DVector::from_vec(a)))
                    .collect::<Result<Vec<_>>>()
                    .map_err(field("model.alphas"))?;
                Model::Primos(PrimosModel { movements: pm, alphas })
            }
            BodyRepr::ProPrimos {
                movements,
                alpha_mean,
                alpha_covariance,
            } => {
                let pm = movements.build(n * d)?;
                let nc = pm.n_components();
                let mu = vector_of("model.alpha_mean", alpha_mean, nc)?;
                let cov = alpha_covariance.square("model.alpha_covariance", nc)?;
                Model::ProPrimos(
                    ProPrimoDistribution::new(pm, mu, cov, basis.clone(), sigma_tau.clone())
                        .map_err(field("model.alpha_covariance"))?,
                )
            }
            BodyRepr::Cpca {
                mean_config,
                projection,
                spectrum,
                latent_weights,
            } => {
                let mean = vector_of("model.mean_config", mean_config, d)?;
                if projection.rows != d {
                    return Err(Error::format(
                        "model.projection",
                        format!("has {} rows, expected {d}", projection.rows),
                    ));
                }
                let k = projection.cols;
                let proj = projection.matrix("model.projection")?;
                let p = ConfigProjection::new(mean, proj, spectrum).map_err(field("model.projection"))?;
                let rows = latent_weights.rows_of("model.latent_weights", n * k)?;
                if rows.is_empty() {
                    return Err(Error::format("model.latent_weights", "no weight vectors"));
                }
                let ws = rows
                    .into_iter()
                    .map(|w| MpWeights::new(DVector::from_vec(w), n, k))
                    .collect::<Result<Vec<_>>>()
                    .map_err(field("model.latent_weights"))?;
                Model::Cpca(CpcaModel {
                    projection: p,
                    latent_weights: ws,
                })
            }
        };
        ModelFile::new(basis, ridge, sigma_tau, model).map_err(field("model"))
    }
}

pub fn save_model(model: &ModelFile, path: &Path) -> Result<()> {
    let text = model.to_json()?;
    write_atomic(path, |w| {
        w.write_all(text.as_bytes())?;
        Ok(())
    })
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)?;
    ModelFile::from_json(&text)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    format_version: u32,
    n_basis: usize,
    bandwidth: f64,
    dof: usize,
    ridge: RidgeRepr,
    sigma_tau: MatrixRepr,
    model: BodyRepr,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RidgeRepr {
    lambda: f64,
    scale: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum BodyRepr {
    Mp {
        weights: MatrixRepr,
    },
    Promp {
        mean: Vec<f64>,
        covariance: MatrixRepr,
    },
    Primos {
        movements: MovementsRepr,
        alphas: MatrixRepr,
    },
    ProPrimos {
        movements: MovementsRepr,
        alpha_mean: Vec<f64>,
        alpha_covariance: MatrixRepr,
    },
    Cpca {
        mean_config: Vec<f64>,
        projection: MatrixRepr,
        spectrum: Vec<f64>,
        latent_weights: MatrixRepr,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MovementsRepr {
    mean_movement: Vec<f64>,
    omega: MatrixRepr,
    eigenvalues: Vec<f64>,
}

impl From<&PrincipalMovements> for MovementsRepr {
    fn from(pm: &PrincipalMovements) -> Self {
        MovementsRepr {
            mean_movement: pm.mean_movement().as_slice().to_vec(),
            omega: MatrixRepr::from(pm.omega()),
            eigenvalues: pm.eigenvalues().to_vec(),
        }
    }
}

impl MovementsRepr {
    fn build(self, dim: usize) -> Result<PrincipalMovements> {
        let w_bar = vector_of("model.movements.mean_movement", self.mean_movement, dim)?;
        if self.omega.rows != dim {
            return Err(Error::format(
                "model.movements.omega",
                format!("has {} rows, expected {dim}", self.omega.rows),
            ));
        }
        let omega = self.omega.matrix("model.movements.omega")?;
        PrincipalMovements::new(w_bar, omega, self.eigenvalues)
            .map_err(|e| Error::format("model.movements.omega", e.to_string()))
    }
}

/// Dense matrix stored row-major with explicit dimensions.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixRepr {
    fn from(m: &DMatrix<f64>) -> Self {
        MatrixRepr {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

impl MatrixRepr {
    fn from_rows<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]> + Clone) -> Self {
        let cols = rows.clone().next().map_or(0, <[f64]>::len);
        Self::from_rows_with_cols(rows, cols)
    }

    fn from_rows_with_cols<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, cols: usize) -> Self {
        let count = rows.len();
        MatrixRepr {
            rows: count,
            cols,
            data: rows.flat_map(|r| r.iter().copied()).collect(),
        }
    }

    fn check(&self, field: &str) -> Result<()> {
        if self.rows.checked_mul(self.cols) != Some(self.data.len()) {
            return Err(Error::format(
                field,
                format!(
                    "declared {}x{} but holds {} values",
                    self.rows,
                    self.cols,
                    self.data.len()
                ),
            ));
        }
        Ok(())
    }

    fn matrix(self, field: &str) -> Result<DMatrix<f64>> {
        self.check(field)?;
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }

    fn square(self, field: &str, dim: usize) -> Result<DMatrix<f64>> {
        if self.rows != dim || self.cols != dim {
            return Err(Error::format(
                field,
                format!("is {}x{}, expected {dim}x{dim}", self.rows, self.cols),
            ));
        }
        self.matrix(field)
    }

    fn rows_of(self, field: &str, cols: usize) -> Result<Vec<Vec<f64>>> {
        if self.cols != cols {
            return Err(Error::format(
                field,
                format!("has {} columns, expected {cols}", self.cols),
            ));
        }
        self.check(field)?;
        if cols == 0 {
            return Ok(vec![Vec::new(); self.rows]);
        }
        Ok(self.data.chunks(cols).map(<[f64]>::to_vec).collect())
    }
}

fn vector_of(field: &str, v: Vec<f64>, len: usize) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::format(field, format!("has {} values, expected {len}", v.len())));
    }
    Ok(DVector::from_vec(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpca::{fit_configuration_pca, fit_cpca_mp};
    use crate::mpcore::fit_weights;
    use crate::primos::fit_pro_primos_detailed;
    use crate::synth::{generate, SynthSpec};
    use proptest::prelude::*;

    #[test]
    fn two_row_file() {
        let t = parse_trajectory_csv("t,j1\n0,0\n1,1\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dof(), 1);
        assert!(t.joint_names().is_none());
        assert_eq!(t.positions()[(1, 0)], 1.0);
    }

    #[test]
    fn named_joints_survive() {
        let t = parse_trajectory_csv("t,shoulder,elbow\n0,1,2\n0.5,3,4\n".as_bytes()).unwrap();
        assert_eq!(t.joint_names().unwrap(), ["shoulder", "elbow"]);
        let mut buf = Vec::new();
        format_trajectory_csv(&mut buf, &t).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,shoulder,elbow\n"));
    }

    #[test]
    fn duplicate_timestamp_names_the_line() {
        let err = parse_trajectory_csv("t,j1\n0,0\n1,1\n1,2\n".as_bytes()).unwrap_err();
        match err {
            Error::InvalidTrajectory(msg) => assert!(msg.contains("line 4"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let cases = [
            ("t,j1\n0,0\n1,abc\n", 3),
            ("t,j1,j2\n0,0,1\n1,1\n", 3),
            ("t,j1\n0,0\n1,1\n2,NaN\n", 4),
        ];
        for (text, line) in cases {
            match parse_trajectory_csv(text.as_bytes()) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            parse_trajectory_csv("x,j1\n0,0\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_trajectory_csv("t\n0\n1\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_trajectory_csv("t,a,a\n0,0,0\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            steps in proptest::collection::vec(1e-9f64..10.0, 2..20),
            vals in proptest::collection::vec(-1e6f64..1e6, 60),
            start in -100.0f64..100.0,
            tiny in -1e-300f64..1e-300,
        ) {
            let mut times = vec![start];
            for s in &steps[1..] {
                let next = times.last().unwrap() + s;
                prop_assume!(next > *times.last().unwrap());
                times.push(next);
            }
            let t = times.len();
            let mut pos = DMatrix::from_fn(t, 3, |i, j| vals[(i * 3 + j) % vals.len()]);
            pos[(0, 0)] = tiny;
            let traj = Trajectory::new(times, pos).unwrap();
            let mut buf = Vec::new();
            format_trajectory_csv(&mut buf, &traj).unwrap();
            let back = parse_trajectory_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, traj);
        }
    }

    fn synth() -> Vec<Trajectory> {
        generate(&SynthSpec {
            m: 8,
            n: 6,
            d: 3,
            noise_std: 0.01,
            ..SynthSpec::default()
        })
        .unwrap()
        .dataset
    }

    fn all_models() -> Vec<ModelFile> {
        let data = synth();
        let cfg = BasisConfig::with_default_bandwidth(6).unwrap();
        let ridge = RidgeConfig::default();
        let fit = fit_pro_primos_detailed(&data, &cfg, &ridge, 3, None).unwrap();
        let noise = fit.promp.noise().clone();
        let mp = data.iter().map(|t| fit_weights(t, &cfg, &ridge).unwrap()).collect();
        let p = fit_configuration_pca(&data, 2).unwrap();
        let lw = fit_cpca_mp(&data, &p, &cfg, &ridge).unwrap();
        vec![
            ModelFile::new(cfg.clone(), ridge, noise.clone(), Model::Mp(mp)).unwrap(),
            ModelFile::new(cfg.clone(), ridge, noise.clone(), Model::Promp(fit.promp.clone())).unwrap(),
            ModelFile::new(
                cfg.clone(),
                ridge,
                noise.clone(),
                Model::Primos(PrimosModel {
                    movements: fit.model.principal_movements().clone(),
                    alphas: fit.alphas.clone(),
                }),
            )
            .unwrap(),
            ModelFile::new(cfg.clone(), ridge, noise.clone(), Model::ProPrimos(fit.model.clone())).unwrap(),
            ModelFile::new(
                cfg,
                RidgeConfig::absolute(1e-9),
                noise,
                Model::Cpca(CpcaModel {
                    projection: p,
                    latent_weights: lw,
                }),
            )
            .unwrap(),
        ]
    }

    #[test]
    fn model_round_trips_are_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for (i, m) in all_models().into_iter().enumerate() {
            let path = dir.path().join(format!("m{i}.json"));
            save_model(&m, &path).unwrap();
            let first = std::fs::read(&path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, m, "{:?}", m.model().kind());
            save_model(&back, &path).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), first);
        }
    }

    #[test]
    fn marginals_survive_round_trip_exactly() {
        let m = all_models().swap_remove(3);
        let back = ModelFile::from_json(&m.to_json().unwrap()).unwrap();
        let (Model::ProPrimos(a), Model::ProPrimos(b)) = (m.model(), back.model()) else {
            panic!("expected pro-primos");
        };
        for z in [0.0, 0.13, 0.5, 0.99, 1.0] {
            assert_eq!(a.marginal_primo(z).unwrap(), b.marginal_primo(z).unwrap());
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = all_models()[3].to_json().unwrap();
        for cut in [0, 10, text.len() / 2, text.len() - 3] {
            assert!(matches!(ModelFile::from_json(&text[..cut]), Err(Error::Json(_))));
        }
    }

    fn edit(text: &str, f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
        f(&mut v);
        v.to_string()
    }

    fn field_of(r: Result<ModelFile>) -> String {
        match r {
            Err(Error::Format { field, .. }) => field,
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn hand_edits_are_rejected_with_field_names() {
        let text = all_models()[3].to_json().unwrap();
        let bad_norm = edit(&text, |v| {
            let d = &mut v["model"]["movements"]["omega"]["data"][0];
            *d = serde_json::json!(d.as_f64().unwrap() * 1.5 + 0.1);
        });
        assert_eq!(field_of(ModelFile::from_json(&bad_norm)), "model.movements.omega");

        let bad_version = edit(&text, |v| v["format_version"] = serde_json::json!(7));
        assert_eq!(field_of(ModelFile::from_json(&bad_version)), "format_version");

        let bad_shape = edit(&text, |v| v["model"]["alpha_covariance"]["rows"] = serde_json::json!(2));
        assert_eq!(field_of(ModelFile::from_json(&bad_shape)), "model.alpha_covariance");

        let not_psd = edit(&text, |v| {
            v["model"]["alpha_covariance"]["data"][0] = serde_json::json!(-5.0)
        });
        assert_eq!(field_of(ModelFile::from_json(&not_psd)), "model.alpha_covariance");

        let bad_scale = edit(&text, |v| v["ridge"]["scale"] = serde_json::json!("huge"));
        assert_eq!(field_of(ModelFile::from_json(&bad_scale)), "ridge.scale");

        let cpca = all_models()[4].to_json().unwrap();
        let skew = edit(&cpca, |v| v["model"]["projection"]["data"][0] = serde_json::json!(3.0));
        assert_eq!(field_of(ModelFile::from_json(&skew)), "model.projection");
    }

    #[test]
    fn dataset_round_trip() {
        let data = synth();
        let dir = tempfile::tempdir().unwrap();
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let path = write_dataset(
            dir.path(),
            &data,
            Some(names.clone()),
            Some(serde_json::json!({"seed": 0})),
        )
        .unwrap();
        let (manifest, back) = load_dataset(&path).unwrap();
        assert_eq!(manifest.trajectories.len(), data.len());
        assert_eq!(manifest.provenance.unwrap()["seed"], 0);
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.times(), b.times());
            assert_eq!(a.positions(), b.positions());
            assert_eq!(b.joint_names().unwrap(), names.as_slice());
        }
    }

    #[test]
    fn dataset_errors() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "t,j1\n0,0\n1,1\n").unwrap();
        std::fs::write(dir.path().join("b.csv"), "t,j1,j2\n0,0,0\n1,1,1\n").unwrap();
        let write_manifest = |files: &[&str]| {
            let m = DatasetManifest {
                format_version: FORMAT_VERSION,
                trajectories: files.iter().map(PathBuf::from).collect(),
                joint_names: None,
                provenance: None,
            };
            let p = dir.path().join("m.json");
            std::fs::write(&p, serde_json::to_string(&m).unwrap()).unwrap();
            p
        };
        assert!(matches!(
            load_dataset(&write_manifest(&["a.csv", "b.csv"])),
            Err(Error::Trajectory { index: 1, .. })
        ));
        assert!(matches!(
            load_dataset(&write_manifest(&["a.csv", "missing.csv"])),
            Err(Error::Io(_))
        ));
        assert!(load_dataset(&write_manifest(&["a.csv", "a.csv"])).is_ok());
    }
}
