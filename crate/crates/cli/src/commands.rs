use nalgebra::{DMatrix, DVector};
use primos::cpca::{fit_configuration_pca, fit_cpca_mp, fit_cpca_single, reconstruct_cpca};
use primos::eval::{self, DatasetStats, GridConfig, Method};
use primos::io::{self, CpcaModel, Model, ModelFile, PrimosModel};
use primos::primos::fit_pro_primos_detailed;
use primos::promp::estimate_distribution;
use primos::synth::{generate, SynthSpec};
use primos::{
    fit_alpha, fit_weights, parameter_count, reconstruct, reconstruct_primo, BasisConfig, Error, ErrorClass, ModelKind,
    MpWeights, ObservationNoise, PhaseVector, Result, RidgeConfig, Trajectory,
};

use crate::{
    BasisArgs, Command, ConditionArgs, EvalGridArgs, FitArgs, LooArgs, MethodArg, ParamsArgs, ReconstructArgs,
    RidgeArgs, SampleArgs, ScaleArg, SynthArgs,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fit(a) => fit(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Sample(a) => sample(a),
        Command::EvalGrid(a) => eval_grid(a),
        Command::Loo(a) => loo(a),
        Command::Synth(a) => synth(a),
        Command::Condition(a) => condition(a),
        Command::Params(a) => params(a),
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn kind_of(m: MethodArg) -> ModelKind {
    match m {
        MethodArg::Mp => ModelKind::Mp,
        MethodArg::Promp => ModelKind::Promp,
        MethodArg::Primos => ModelKind::Primos,
        MethodArg::ProPrimos => ModelKind::ProPrimos,
        MethodArg::Cpca => ModelKind::Cpca,
    }
}

impl RidgeArgs {
    fn config(&self) -> Result<RidgeConfig> {
        let r = match self.ridge_scale {
            ScaleArg::Relative => RidgeConfig::relative(self.ridge),
            ScaleArg::Absolute => RidgeConfig::absolute(self.ridge),
        };
        r.validate()?;
        Ok(r)
    }
}

impl BasisArgs {
    fn config(&self) -> Result<BasisConfig> {
        match self.bandwidth {
            Some(h) => BasisConfig::new(self.n_basis, h),
            None => BasisConfig::with_default_bandwidth(self.n_basis),
        }
    }
}

/// Rejects `--components` / `--latent` on methods that do not use them and
/// returns the size the method does use.
fn method_size(method: MethodArg, components: Option<usize>, latent: Option<usize>) -> Result<usize> {
    let uses_components = matches!(method, MethodArg::Primos | MethodArg::ProPrimos);
    if components.is_some() && !uses_components {
        return Err(usage(format!(
            "--components does not apply to method {}",
            kind_of(method)
        )));
    }
    if latent.is_some() && method != MethodArg::Cpca {
        return Err(usage(format!("--latent does not apply to method {}", kind_of(method))));
    }
    Ok(match method {
        MethodArg::Primos | MethodArg::ProPrimos => components.unwrap_or(5),
        MethodArg::Cpca => latent.unwrap_or(2),
        MethodArg::Mp | MethodArg::Promp => 0,
    })
}

fn print_counts(kind: ModelKind, n: usize, d: usize, size: usize) {
    let c = parameter_count(kind, n, d, size);
    println!("mean parameters: {}", c.mean);
    println!("covariance values: {}", c.covariance);
}

fn fit(a: FitArgs) -> Result<()> {
    let size = method_size(a.method, a.components, a.latent)?;
    let cfg = a.basis.config()?;
    let ridge = a.ridge.config()?;
    let (_, data) = io::load_dataset(&a.manifest)?;
    let d = data[0].dof();
    let noise = match a.noise {
        Some(v) => ObservationNoise::isotropic(d, v).map_err(|e| usage(e.to_string()))?,
        None => ObservationNoise::default_for(d),
    };
    let fit_all = || -> Result<Vec<MpWeights>> {
        data.iter()
            .enumerate()
            .map(|(i, t)| fit_weights(t, &cfg, &ridge).map_err(|e| e.in_trajectory(i)))
            .collect()
    };
    let model = match a.method {
        MethodArg::Mp => Model::Mp(fit_all()?),
        MethodArg::Promp => {
            if data.len() < 2 {
                return Err(Error::InsufficientData {
                    needed: 2,
                    found: data.len(),
                });
            }
            Model::Promp(estimate_distribution(&fit_all()?, &cfg, Some(noise.clone()))?)
        }
        MethodArg::Primos | MethodArg::ProPrimos => {
            let fit = fit_pro_primos_detailed(&data, &cfg, &ridge, size, Some(noise.clone()))?;
            let pm = fit.model.principal_movements();
            if pm.retained_rank() < size {
                eprintln!(
                    "warning: only {} of {size} principal movements have nonzero variance",
                    pm.retained_rank()
                );
            }
            if a.method == MethodArg::Primos {
                Model::Primos(PrimosModel {
                    movements: pm.clone(),
                    alphas: fit.alphas,
                })
            } else {
                Model::ProPrimos(fit.model)
            }
        }
        MethodArg::Cpca => {
            let p = fit_configuration_pca(&data, size)?;
            let latent_weights = fit_cpca_mp(&data, &p, &cfg, &ridge)?;
            Model::Cpca(CpcaModel {
                projection: p,
                latent_weights,
            })
        }
    };
    let file = ModelFile::new(cfg.clone(), ridge, noise, model)?;
    io::save_model(&file, &a.out)?;
    println!(
        "fitted {} on {} trajectories ({} joints)",
        kind_of(a.method),
        data.len(),
        d
    );
    // fitting primos also estimates the coefficient Gaussian, so its size is reported
    let counted = if a.method == MethodArg::Primos {
        ModelKind::ProPrimos
    } else {
        kind_of(a.method)
    };
    print_counts(counted, cfg.n(), d, size);
    println!("model written to {}", a.out.display());
    Ok(())
}

fn mean_of(ws: &[MpWeights]) -> Result<MpWeights> {
    let mut sum = DVector::zeros(ws[0].as_slice().len());
    for w in ws {
        sum += w.vector();
    }
    MpWeights::new(sum / ws.len() as f64, ws[0].n(), ws[0].dof())
}

/// Positions of the model mean on phases `z`.
fn mean_positions(file: &ModelFile, z: &[f64]) -> Result<DMatrix<f64>> {
    let cfg = file.basis();
    match file.model() {
        Model::Mp(ws) => reconstruct(&mean_of(ws)?, z, cfg),
        Model::Promp(p) => reconstruct(&p.mean_weights(), z, cfg),
        Model::Primos(p) => reconstruct_primo(
            &primos::AlphaCoeffs::zeros(p.movements.n_components()),
            &p.movements,
            z,
            cfg,
        ),
        Model::ProPrimos(p) => {
            let a = primos::AlphaCoeffs::new(p.mean().clone())?;
            reconstruct_primo(&a, p.principal_movements(), z, cfg)
        }
        Model::Cpca(c) => reconstruct_cpca(&mean_of(&c.latent_weights)?, &c.projection, z, cfg),
    }
}

/// Encodes `t` with the model and reconstructs it on its own phases.
fn encode_and_reconstruct(file: &ModelFile, t: &Trajectory) -> Result<DMatrix<f64>> {
    if t.dof() != file.dof() {
        return Err(Error::Dimension(format!(
            "trajectory has {} joints, model has {}",
            t.dof(),
            file.dof()
        )));
    }
    let (cfg, ridge) = (file.basis(), file.ridge());
    let z = t.phase();
    match file.model() {
        Model::Mp(_) | Model::Promp(_) => reconstruct(&fit_weights(t, cfg, ridge)?, &z, cfg),
        Model::Primos(p) => reconstruct_primo(&fit_alpha(t, &p.movements, cfg, ridge)?, &p.movements, &z, cfg),
        Model::ProPrimos(p) => {
            let pm = p.principal_movements();
            reconstruct_primo(&fit_alpha(t, pm, cfg, ridge)?, pm, &z, cfg)
        }
        Model::Cpca(c) => reconstruct_cpca(&fit_cpca_single(t, &c.projection, cfg, ridge)?, &c.projection, &z, cfg),
    }
}

fn reconstruct_cmd(a: ReconstructArgs) -> Result<()> {
    let file = io::load_model(&a.model)?;
    match a.trajectory {
        Some(path) => {
            let t = io::read_trajectory_csv(&path)?;
            let rec = encode_and_reconstruct(&file, &t)?;
            let out = Trajectory::new(t.times().to_vec(), rec.clone())?;
            let out = match t.joint_names() {
                Some(names) => out.with_joint_names(names.to_vec())?,
                None => out,
            };
            io::write_trajectory_csv(&out, &a.out)?;
            let stats = DatasetStats::from_dataset(std::slice::from_ref(&t))?;
            println!("nrmse: {:e}", eval::nrmse(&rec, t.positions(), &stats)?);
        }
        None => {
            let z = PhaseVector::uniform(a.samples.unwrap_or(100))?;
            let rec = mean_positions(&file, &z)?;
            io::write_phase_csv(&a.out, &z, &rec, None)?;
            println!("mean movement on {} phases", z.len());
        }
    }
    println!("reconstruction written to {}", a.out.display());
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let file = io::load_model(&a.model)?;
    let weights = match file.model() {
        Model::Promp(p) => p.sample_weights(a.seed, a.count),
        Model::ProPrimos(p) => p.sample_weights(a.seed, a.count),
        other => {
            return Err(usage(format!(
                "sampling needs a probabilistic model (promp or pro-primos), got {}",
                other.kind()
            )))
        }
    };
    let z = PhaseVector::uniform(a.samples)?;
    std::fs::create_dir_all(&a.out)?;
    let width = a.count.saturating_sub(1).to_string().len().max(3);
    for (i, w) in weights.iter().enumerate() {
        let rec = reconstruct(w, &z, file.basis())?;
        io::write_phase_csv(&a.out.join(format!("sample_{i:0width$}.csv")), &z, &rec, None)?;
    }
    println!("wrote {} samples to {}", weights.len(), a.out.display());
    Ok(())
}

fn grid_method(m: MethodArg) -> Result<Method> {
    match m {
        MethodArg::Mp => Ok(Method::Mp),
        MethodArg::Primos => Ok(Method::Primos),
        MethodArg::Cpca => Ok(Method::Cpca),
        other => Err(usage(format!(
            "grid evaluation supports mp, primos and cpca, got {}",
            kind_of(other)
        ))),
    }
}

fn classed(class: ErrorClass, msg: String) -> Error {
    match class {
        ErrorClass::Usage => Error::InvalidConfig(msg),
        ErrorClass::Data => Error::InvalidTrajectory(msg),
        ErrorClass::Numerical => Error::IllConditioned(msg),
    }
}

fn eval_grid(a: EvalGridArgs) -> Result<()> {
    let ridge = a.ridge.config()?;
    if a.n_basis.is_empty() {
        return Err(usage("--n-basis needs at least one value"));
    }
    let methods: Vec<Method> = a.methods.iter().map(|&m| grid_method(m)).collect::<Result<_>>()?;
    let (_, data) = io::load_dataset(&a.manifest)?;
    let (d, m) = (data[0].dof(), data.len());

    let mut curves = Vec::new();
    for &method in &methods {
        let mut grid = Vec::new();
        for &n_basis in &a.n_basis {
            let sizes: Vec<usize> = match method {
                Method::Mp => vec![0],
                Method::Primos => {
                    let max = a
                        .components
                        .unwrap_or_else(|| 30.min(n_basis * d).min(m.saturating_sub(1)).max(1));
                    (1..=max).collect()
                }
                Method::Cpca => (1..=a.latent.unwrap_or(d)).collect(),
            };
            grid.extend(sizes.into_iter().map(|size| GridConfig {
                n_basis,
                bandwidth: a.bandwidth,
                size,
                ridge,
            }));
        }
        curves.push(eval::param_error_curve(&data, method, &grid)?);
    }

    io::write_atomic(&a.out, |w| eval::write_curve_csv(w, &curves))?;
    for (method, curve) in methods.iter().zip(&curves) {
        let best = curve.frontier.last();
        match curve.min_params_at(a.level) {
            Some(p) => println!("{method}: {p} parameters reach nrmse {}", a.level),
            None => println!("{method}: nrmse {} not reached", a.level),
        }
        if let Some(b) = best {
            println!("{method}: best nrmse {:e} with {} parameters", b.nrmse, b.param_count);
        }
    }
    println!("grid written to {}", a.out.display());

    let failed: Vec<_> = curves
        .iter()
        .flat_map(|c| &c.outcomes)
        .filter_map(|o| o.result.as_ref().err().map(|e| (o, e)))
        .collect();
    if let Some((o, e)) = failed.first() {
        return Err(classed(
            e.class,
            format!(
                "{} grid points failed; first: {} n_basis={} size={}: {}",
                failed.len(),
                o.method,
                o.config.n_basis,
                o.config.size,
                e.message
            ),
        ));
    }
    Ok(())
}

fn loo(a: LooArgs) -> Result<()> {
    if a.method != MethodArg::Primos {
        return Err(usage(format!(
            "leave-one-out is implemented for primos, got {}",
            kind_of(a.method)
        )));
    }
    let cfg = a.basis.config()?;
    let ridge = a.ridge.config()?;
    let (_, data) = io::load_dataset(&a.manifest)?;
    let dim = cfg.n() * data[0].dof();
    let max = a
        .components
        .unwrap_or_else(|| 10.min(dim).min(data.len().saturating_sub(2)).max(a.min_components));
    if a.min_components == 0 || max < a.min_components {
        return Err(usage(format!("invalid component range {}..={max}", a.min_components)));
    }
    let report = eval::leave_one_out(&data, &cfg, &ridge, a.min_components..=max)?;
    io::write_atomic(&a.out, |w| eval::write_loo_csv(w, &report))?;
    for s in &report.summary {
        println!(
            "n_c {:>3}: train nrmse {:.6e}  validation nrmse {:.6e}",
            s.n_c, s.train_nrmse, s.validation_nrmse
        );
    }
    println!("{} fold rows written to {}", report.rows.len(), a.out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        seed: a.seed,
        k: a.components,
        n: a.n_basis,
        d: a.dof,
        m: a.count,
        noise_std: a.noise,
        joint_rank: a.joint_rank,
        ..SynthSpec::default()
    };
    let s = generate(&spec)?;
    let provenance = serde_json::json!({
        "generator": "synthetic",
        "seed": spec.seed,
        "components": spec.k,
        "n_basis": spec.n,
        "dof": spec.d,
        "count": spec.m,
        "noise_std": spec.noise_std,
        "joint_rank": spec.joint_rank,
    });
    let manifest = io::write_dataset(&a.out, &s.dataset, None, Some(provenance))?;
    let truth = ModelFile::new(
        s.cfg.clone(),
        RidgeConfig::default(),
        ObservationNoise::default_for(spec.d),
        Model::Primos(PrimosModel {
            movements: s.truth,
            alphas: s.alphas,
        }),
    )?;
    let truth_path = a.out.join("truth.json");
    io::save_model(&truth, &truth_path)?;
    println!(
        "wrote {} trajectories; manifest {}",
        s.dataset.len(),
        manifest.display()
    );
    println!("ground truth written to {}", truth_path.display());
    Ok(())
}

fn condition(a: ConditionArgs) -> Result<()> {
    let file = io::load_model(&a.model)?;
    let d = file.dof();
    if a.value.len() != d {
        return Err(Error::Dimension(format!(
            "{} values for a {d}-joint model",
            a.value.len()
        )));
    }
    if !(0.0..=1.0).contains(&a.phase) {
        return Err(usage(format!("phase {} outside [0, 1]", a.phase)));
    }
    if !(a.variance.is_finite() && a.variance >= 0.0) {
        return Err(usage(format!("variance must be nonnegative, got {}", a.variance)));
    }
    let y = DVector::from_vec(a.value.clone());
    let sigma_y = DMatrix::identity(d, d) * a.variance;
    let model = match file.model() {
        Model::Promp(p) => Model::Promp(p.condition_on_waypoint(a.phase, &y, &sigma_y)?),
        Model::ProPrimos(p) => Model::ProPrimos(p.condition_on_waypoint(a.phase, &y, &sigma_y)?),
        other => {
            return Err(usage(format!(
                "conditioning needs a probabilistic model (promp or pro-primos), got {}",
                other.kind()
            )))
        }
    };
    let out = ModelFile::new(file.basis().clone(), *file.ridge(), file.noise().clone(), model)?;
    io::save_model(&out, &a.out)?;
    println!("conditioned model written to {}", a.out.display());
    Ok(())
}

fn params(a: ParamsArgs) -> Result<()> {
    let size = method_size(a.method, a.components, a.latent)?;
    if a.n_basis == 0 || a.dof == 0 {
        return Err(usage("--n-basis and --dof must be positive"));
    }
    print_counts(kind_of(a.method), a.n_basis, a.dof, size);
    Ok(())
}
