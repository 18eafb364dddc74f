use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use impactlab::dataforge::{generate_dataset, load_dataset, save_dataset, GenConfig};
use impactlab::dynamics::VelocityMetric;
use impactlab::evaluation::{
    evaluate_models, learning_curve, parse_sizes, split_dataset, CurveModel, ErrorMetric,
    EvalModel, EvalReport, LearningCurve, Split, SplitConfig,
};
use impactlab::gp::{
    train_learned_model, BaseModel, FeatureSpaceId, LearnedClass, LearnedContactModel,
    TargetSpaceId, TrainOptions,
};
use impactlab::identification::{
    fit_batch, fit_bootstrap, objective_surface, surface_axes, FitConfig, FitResult,
    OptimizerSettings,
};
use impactlab::models::{ModelId, ModelParams, ParamBounds};
use impactlab::trial::ImpactTrial;
use serde_json::json;

use crate::manifest::{output_dir, RunRecorder};
use crate::{
    BaseArgs, CurveArgs, EvalArgs, GenArgs, IdentifyArgs, MetricArg, ReportArgs, SplitArgs,
    TrainArgs,
};

pub enum Outcome {
    Success,
    /// Outputs were written but a checked invariant failed.
    InvariantViolated(String),
}

fn load_trials(path: &Path) -> Result<Vec<ImpactTrial>> {
    let ds = load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
    if !ds.flagged.is_empty() {
        log::warn!(
            "{}: dropping {} flagged trials",
            path.display(),
            ds.flagged.len()
        );
    }
    Ok(ds.clean())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn metric(arg: MetricArg) -> ErrorMetric {
    let velocity = match arg {
        MetricArg::Linear => VelocityMetric::Linear,
        MetricArg::Scaled => VelocityMetric::Scaled,
    };
    ErrorMetric::new(velocity, true)
}

fn split_config(args: &SplitArgs, seed: u64) -> Result<Option<SplitConfig>> {
    if args.split.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let fraction: f64 = args
        .split
        .parse()
        .map_err(|_| anyhow!("--split must be a training fraction or 'none', got '{}'", args.split))?;
    Ok(Some(SplitConfig {
        train_fraction: fraction,
        strata: args.strata,
        seed,
    }))
}

fn required_split(trials: &[ImpactTrial], args: &SplitArgs, seed: u64) -> Result<Split> {
    let config = split_config(args, seed)?.ok_or_else(|| anyhow!("this command needs a train/eval split"))?;
    Ok(split_dataset(trials, &config)?)
}

fn parse_models(spec: &str) -> Result<Vec<ModelId>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(ModelId::ALL.to_vec());
    }
    Ok(vec![spec.parse()?])
}

fn read_fits(path: &Path) -> Result<Vec<FitResult>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn params_from_fits(fits: &[FitResult], model: ModelId) -> Result<ModelParams> {
    fits.iter()
        .find(|f| f.model == model)
        .map(|f| f.mean_params)
        .ok_or_else(|| anyhow!("no identified parameters for {model}"))
}

/// Parameters for `model`: from an identification file when given,
/// otherwise fitted on `train`.
fn analytical_params(model: ModelId, fits: Option<&[FitResult]>, train: &[ImpactTrial]) -> Result<ModelParams> {
    match fits {
        Some(f) => params_from_fits(f, model),
        None => {
            if train.is_empty() {
                bail!("cannot identify {model} without training data; pass --fits");
            }
            Ok(fit_batch(model, train, &ParamBounds::default(), &OptimizerSettings::default())?.params)
        }
    }
}

fn base_model(args: &BaseArgs, train: &[ImpactTrial]) -> Result<Option<BaseModel>> {
    let Some(name) = &args.base_model else {
        return Ok(None);
    };
    let model: ModelId = name.parse()?;
    let fits = args.fits.as_deref().map(read_fits).transpose()?;
    Ok(Some(BaseModel {
        model,
        params: analytical_params(model, fits.as_deref(), train)?,
    }))
}

fn gp_options(seed: u64) -> TrainOptions {
    let mut options = TrainOptions::default();
    options.gp.seed = seed;
    options
}

pub fn gen(args: &GenArgs) -> Result<Outcome> {
    let mut config = match &args.config {
        Some(path) => GenConfig::from_file(path)?,
        None if args.compliant => GenConfig::compliant(),
        None => GenConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.n {
        config.n_trials = n;
    }
    let inputs: Vec<&Path> = args.config.iter().map(|p| p.as_path()).collect();
    let run = RunRecorder::start("gen", json!({ "generator": &config }), config.seed, &inputs)?;
    let ds = generate_dataset(&config)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_dataset(&args.out, &ds.trials)?;
    println!(
        "wrote {} trials to {} ({} candidates, acceptance {:.1}%)",
        ds.trials.len(),
        args.out.display(),
        ds.stats.attempted,
        100.0 * ds.stats.acceptance_rate()
    );
    run.finish(&output_dir(&args.out), &[args.out.clone()])?;
    Ok(Outcome::Success)
}

pub fn identify(args: &IdentifyArgs) -> Result<Outcome> {
    let models = parse_models(&args.model)?;
    if args.surface.is_some() && models.len() != 1 {
        bail!("--surface needs a single --model");
    }
    let trials = load_trials(&args.data)?;
    let k = args.k.unwrap_or(trials.len().min(100));
    let config = FitConfig::new(k, args.m, args.seed);
    config.validate(trials.len())?;
    let run = RunRecorder::start(
        "identify",
        json!({ "models": models, "fit": config }),
        args.seed,
        &[args.data.as_path()],
    )?;

    let fits = models
        .iter()
        .map(|&m| fit_bootstrap(m, &trials, &config))
        .collect::<impactlab::Result<Vec<_>>>()?;
    println!("{:<18} {:>20} {:>20}", "model", "mu", "epsilon");
    for f in &fits {
        println!(
            "{:<18} {:>9.4} ± {:<8.4} {:>9.4} ± {:<8.4}",
            f.model.to_string(),
            f.mean_params.mu,
            f.std_params.mu,
            f.mean_params.epsilon,
            f.std_params.epsilon
        );
    }

    let mut outputs = vec![args.out.clone()];
    let surface = match &args.surface {
        Some(path) => {
            let (mu, eps) = surface_axes(&config.bounds, 64, 64);
            let s = objective_surface(models[0], &trials, &mu, &eps)?;
            let mut buf = Vec::new();
            s.write_csv(&mut buf)?;
            outputs.push(path.clone());
            Some((path, buf))
        }
        None => None,
    };
    write_text(&args.out, &to_json(&fits)?)?;
    if let Some((path, buf)) = surface {
        write_text(path, std::str::from_utf8(&buf)?)?;
    }
    run.finish(&output_dir(&args.out), &outputs)?;
    Ok(Outcome::Success)
}

pub fn train(args: &TrainArgs) -> Result<Outcome> {
    let class: LearnedClass = args.class.parse()?;
    let features: FeatureSpaceId = args.features.parse()?;
    let target: TargetSpaceId = args.target.parse()?;
    class.check_target(target)?;
    if class.needs_base() && args.base.base_model.is_none() {
        bail!("{class} needs --base-model");
    }
    if !class.needs_base() && args.base.base_model.is_some() {
        bail!("{class} takes no base model");
    }
    let trials = load_trials(&args.data)?;
    let train = match split_config(&args.split, args.seed)? {
        Some(cfg) if !trials.is_empty() => split_dataset(&trials, &cfg)?.apply(&trials)?.0,
        _ => trials,
    };
    let base = base_model(&args.base, &train)?;
    let mut inputs = vec![args.data.as_path()];
    inputs.extend(args.base.fits.as_deref());
    let run = RunRecorder::start(
        "train",
        json!({
            "class": class, "features": features, "target": target, "base": base,
            "split": args.split.split, "strata": args.split.strata,
        }),
        args.seed,
        &inputs,
    )?;
    let model = train_learned_model(class, features, target, &train, base, &gp_options(args.seed))?;
    write_text(&args.out, &(model.to_json()? + "\n"))?;
    println!("trained {class} ({features} -> {target}) on {} trials", train.len());
    run.finish(&output_dir(&args.out), &[args.out.clone()])?;
    Ok(Outcome::Success)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn eval(args: &EvalArgs) -> Result<Outcome> {
    let trials = load_trials(&args.data)?;
    let split = required_split(&trials, &args.split, args.seed)?;
    let (train, _) = split.apply(&trials)?;
    let fits = args.fits.as_deref().map(read_fits).transpose()?;

    let mut analytical = Vec::new();
    let mut learned = Vec::new();
    let mut want_bph = false;
    for token in &args.models {
        let token = token.trim();
        match token.to_ascii_lowercase().as_str() {
            "irb-bound" | "irb" => {}
            "best-post-hoc" | "bph" => want_bph = true,
            "all" => analytical.extend(ModelId::ALL),
            lower => {
                if let Ok(m) = lower.parse::<ModelId>() {
                    analytical.push(m);
                } else {
                    let path = PathBuf::from(token);
                    if !path.is_file() {
                        bail!("'{token}' is neither a model id nor a model file");
                    }
                    learned.push(path);
                }
            }
        }
    }
    analytical.sort();
    analytical.dedup();
    if want_bph && analytical.is_empty() {
        bail!("best-post-hoc needs at least one analytical model");
    }

    let mut models = Vec::new();
    for &m in &analytical {
        models.push(EvalModel::Analytical {
            model: m,
            params: analytical_params(m, fits.as_deref(), &train)?,
        });
    }
    for path in &learned {
        let model = LearnedContactModel::load(path).with_context(|| format!("loading {}", path.display()))?;
        models.push(EvalModel::Learned {
            name: file_stem(path),
            model: Box::new(model),
        });
    }

    let mut inputs: Vec<&Path> = vec![args.data.as_path()];
    inputs.extend(args.fits.as_deref());
    inputs.extend(learned.iter().map(|p| p.as_path()));
    let run = RunRecorder::start(
        "eval",
        json!({
            "models": models.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "split": args.split.split, "strata": args.split.strata, "metric": metric(args.metric),
        }),
        args.seed,
        &inputs,
    )?;
    let report = evaluate_models(&trials, &models, &split, &metric(args.metric), args.seed)?;
    let outputs = write_eval(&report, &args.out)?;
    print_eval(&report);
    run.finish(&args.out, &outputs)?;
    if report.dominance.holds {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::InvariantViolated(format!(
            "IRB ≤ best post hoc ≤ analytical violated in {} comparisons",
            report.dominance.violations
        )))
    }
}

fn write_eval(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir.join("kde"))?;
    let path = dir.join("eval_report.json");
    write_text(&path, &to_json(report)?)?;
    let mut outputs = vec![path];
    for row in &report.rows {
        if let Some(d) = &row.density {
            let p = dir.join("kde").join(format!("{}.csv", row.name));
            let mut buf = Vec::new();
            d.write_csv(&mut buf)?;
            fs::write(&p, buf)?;
            outputs.push(p);
        }
    }
    Ok(outputs)
}

fn print_eval(report: &EvalReport) {
    println!("{:<28} {:>10} {:>10} {:>10}", "model", "mean", "median", "std");
    for r in &report.rows {
        println!(
            "{:<28} {:>10.5} {:>10.5} {:>10.5}",
            r.name, r.summary.mean, r.summary.median, r.summary.std
        );
    }
    println!(
        "dominance: {}",
        if report.dominance.holds { "holds" } else { "VIOLATED" }
    );
}

pub fn curve(args: &CurveArgs) -> Result<Outcome> {
    let sizes = parse_sizes(&args.sizes)?;
    let trials = load_trials(&args.data)?;
    let split = required_split(&trials, &args.split, args.seed)?;
    let (train, eval) = split.apply(&trials)?;
    let model = match (&args.model, &args.class) {
        (Some(m), None) => CurveModel::Analytical { model: m.parse()? },
        (None, Some(c)) => {
            let class: LearnedClass = c.parse()?;
            let target: TargetSpaceId = args.target.parse()?;
            class.check_target(target)?;
            CurveModel::Learned {
                class,
                features: args.features.parse()?,
                target,
                base: base_model(&args.base, &train)?,
                options: gp_options(args.seed),
            }
        }
        _ => bail!("give exactly one of --model or --class"),
    };
    let mut inputs = vec![args.data.as_path()];
    inputs.extend(args.base.fits.as_deref());
    let run = RunRecorder::start(
        "curve",
        json!({
            "model": model, "sizes": sizes, "repeats": args.repeats,
            "split": args.split.split, "strata": args.split.strata, "metric": metric(args.metric),
        }),
        args.seed,
        &inputs,
    )?;
    let curve = learning_curve(&train, &eval, &model, &sizes, args.repeats, args.seed, &metric(args.metric))?;
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    write_text(&args.out, std::str::from_utf8(&buf)?)?;
    println!(
        "{}: {} sizes, plateau at {:?}",
        curve.model,
        curve.sizes.len(),
        curve.plateau_size(0.05)
    );
    run.finish(&output_dir(&args.out), &[args.out.clone()])?;
    Ok(Outcome::Success)
}

fn read_curve(path: &Path) -> Result<LearningCurve> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut sizes, mut mean, mut std) = (Vec::new(), Vec::new(), Vec::new());
    for row in r.deserialize::<(usize, f64, f64)>() {
        let (s, m, d) = row.with_context(|| format!("parsing {}", path.display()))?;
        sizes.push(s);
        mean.push(m);
        std.push(d);
    }
    Ok(LearningCurve {
        model: file_stem(path),
        sizes,
        repeats: 0,
        mean,
        std,
    })
}

pub fn report(args: &ReportArgs) -> Result<Outcome> {
    if args.eval.is_none() && args.fits.is_none() && args.curves.is_empty() {
        bail!("nothing to report: give --eval, --fits or --curves");
    }
    let mut md = String::from("# Impact model report\n");
    let mut inputs: Vec<&Path> = Vec::new();
    let mut ok = true;

    if let Some(path) = &args.fits {
        inputs.push(path);
        let fits = read_fits(path)?;
        md.push_str("\n## Identified parameters\n\n| model | μ | ε | k | m |\n|---|---|---|---|---|\n");
        for f in &fits {
            writeln!(
                md,
                "| {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {} | {} |",
                f.model, f.mean_params.mu, f.std_params.mu, f.mean_params.epsilon, f.std_params.epsilon, f.k, f.m
            )?;
        }
    }

    if let Some(path) = &args.eval {
        inputs.push(path);
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: EvalReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        writeln!(
            md,
            "\n## Post-impact velocity error\n\nDataset `{}` ({} trials), split: {}, metric: {:?}{}.\n",
            &report.dataset.sha256[..12],
            report.dataset.n_trials,
            report.split.description,
            report.metric.velocity,
            if report.metric.normalized { ", normalised by incident speed" } else { "" }
        )?;
        md.push_str("| model | kind | mean | median | std |\n|---|---|---|---|---|\n");
        for r in &report.rows {
            writeln!(
                md,
                "| {} | {:?} | {:.5} | {:.5} | {:.5} |",
                r.name, r.kind, r.summary.mean, r.summary.median, r.summary.std
            )?;
        }
        writeln!(
            md,
            "\nDominance (IRB ≤ best post hoc ≤ each analytical model): {}",
            if report.dominance.holds {
                "holds on every trial".to_string()
            } else {
                format!("**violated** in {} comparisons", report.dominance.violations)
            }
        )?;
        ok &= report.dominance.holds;
    }

    if !args.curves.is_empty() {
        md.push_str("\n## Learning curves\n\n| curve | sizes | final error | plateau (5 %) |\n|---|---|---|---|\n");
        for path in &args.curves {
            inputs.push(path);
            let c = read_curve(path)?;
            writeln!(
                md,
                "| {} | {}–{} | {:.5} | {} |",
                c.model,
                c.sizes.first().copied().unwrap_or(0),
                c.sizes.last().copied().unwrap_or(0),
                c.mean.last().copied().unwrap_or(f64::NAN),
                c.plateau_size(0.05).map_or("-".into(), |s| s.to_string())
            )?;
        }
    }

    let run = RunRecorder::start("report", json!({}), 0, &inputs)?;
    write_text(&args.out, &md)?;
    run.finish(&output_dir(&args.out), &[args.out.clone()])?;
    if ok {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::InvariantViolated("evaluation report records a dominance violation".into()))
    }
}
