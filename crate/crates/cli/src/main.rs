mod args;
mod config;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::Serialize;
use serde_json::json;

use args::{
    Cli, Command, DataArgs, EstimandArgs, EstimandName, MethodName, OnDegenerate, OutputArgs, OutputFormat,
    QCovariates, SideName, WeakArgs,
};
use config::{Protocol, SimFile, SolverConfig};
use dosesens::model::{ColumnMapping, MatchedDataset};
use dosesens::report::{
    self, ci_sweep, sharp_sweep, sweep_csv, sweep_table, to_json, weak_sweep, write_output, Report, RunManifest,
    Sweep,
};
use dosesens::sharp::SharpConfig;
use dosesens::sim::{run_ci_coverage, run_sharp_sim, run_weak_sim};
use dosesens::stats::{build_statistic, RankScope, ScoreFn, ScoreTable, StatisticKind, StatisticSpec};
use dosesens::variance::DesignSpec;
use dosesens::weak::{
    build_estimand, DegeneratePolicy, EstimandKind, EstimandSpec, Intervention, Method, Side, WeakAnalysis, WeakConfig,
};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return report_error(&e);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("DOSESENS_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| dosesens::Error::InvalidConfig(format!("DOSESENS_THREADS must be a positive integer, got {raw:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// Machine-readable error on stderr; exit 2 for I/O failures, 1 otherwise.
fn report_error(e: &anyhow::Error) -> ExitCode {
    let lib = e.chain().find_map(|c| c.downcast_ref::<dosesens::Error>());
    let code = lib.map_or("ConfigError", dosesens::Error::code);
    let mut message = String::new();
    for cause in e.chain().map(ToString::to_string) {
        if !message.contains(&cause) {
            if !message.is_empty() {
                message.push_str(": ");
            }
            message.push_str(&cause);
        }
    }
    eprintln!("{}", json!({ "error": code, "message": message }));
    if matches!(lib, Some(dosesens::Error::Io { .. })) {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SharpTest(a) => sharp_test(a),
        Command::Estimate(a) => estimate(a),
        Command::WeakTest(a) => weak_test(a, false),
        Command::Ci(a) => weak_test(a, true),
        Command::Simulate(a) => simulate(a),
    }
}

fn load(data: &DataArgs) -> Result<MatchedDataset> {
    let mapping = ColumnMapping {
        set_id: data.set_col.clone(),
        unit_id: data.unit_col.clone(),
        dose: data.dose_col.clone(),
        outcome: data.outcome_col.clone(),
        covariates: data.covariates.clone(),
    };
    Ok(MatchedDataset::load_csv(&data.data, &mapping)?)
}

fn design(data: &DataArgs) -> DesignSpec {
    match data.q_covariates {
        QCovariates::None => DesignSpec::Intercept,
        QCovariates::Means => DesignSpec::CovariateMeans,
    }
}

fn data_json(data: &DataArgs) -> serde_json::Value {
    json!({
        "path": data.data.display().to_string(),
        "set_col": data.set_col,
        "unit_col": data.unit_col,
        "dose_col": data.dose_col,
        "outcome_col": data.outcome_col,
        "covariates": data.covariates,
        "q_covariates": format!("{:?}", data.q_covariates).to_lowercase(),
    })
}

fn emit_json<T: Serialize>(value: &T, out: &OutputArgs) -> Result<()> {
    write_output(&to_json(value)?, out.out.as_deref())?;
    Ok(())
}

fn emit_sweep(sweep: &Sweep, out: &OutputArgs) -> Result<()> {
    let text = match out.format {
        OutputFormat::Csv => sweep_csv(sweep),
        OutputFormat::Table => sweep_table(sweep),
        OutputFormat::Json => unreachable!("json handled by the caller"),
    };
    write_output(&text, out.out.as_deref())?;
    Ok(())
}

fn statistic_spec(a: &args::SharpArgs) -> Result<StatisticSpec> {
    let kind: StatisticKind = a.statistic.parse()?;
    let scope = match a.dose_rank.as_str() {
        "global" => RankScope::Global,
        "within-set" => RankScope::WithinSet,
        other => bail!(dosesens::Error::UnknownKind(format!("dose rank scope {other:?}"))),
    };
    if kind != StatisticKind::Custom {
        if a.dose_scores.is_some() || a.outcome_scores.is_some() {
            bail!(dosesens::Error::InvalidConfig(
                "score tables require --statistic custom".into()
            ));
        }
        return Ok(StatisticSpec::with_dose_rank_scope(kind, scope)?);
    }
    let table = |p: &Option<std::path::PathBuf>| -> Result<ScoreFn> {
        Ok(match p {
            Some(path) => ScoreFn::Table(ScoreTable::load_csv(path)?),
            None => ScoreFn::Identity,
        })
    };
    Ok(StatisticSpec::custom(table(&a.dose_scores)?, table(&a.outcome_scores)?))
}

fn sharp_test(a: args::SharpArgs) -> Result<()> {
    let solver = config::solver_config(a.output.config.as_deref())?;
    let dataset = load(&a.data)?;
    let spec = statistic_spec(&a)?;
    let statistic = build_statistic(&spec, &dataset)?;
    let mut cfg = SharpConfig {
        design: design(&a.data),
        ..SharpConfig::default()
    };
    solver.apply_lp(&mut cfg.options.lp);
    let resolved = json!({
        "data": data_json(&a.data),
        "statistic": spec,
        "gamma": a.gamma,
        "alpha": a.alpha,
        "sharp": cfg,
    });
    let sweep = sharp_sweep(&dataset, &statistic, &a.gamma, a.alpha, &cfg)?;
    if a.output.format != OutputFormat::Json {
        return emit_sweep(&sweep.sweep, &a.output);
    }
    let manifest = RunManifest::new("sharp-test", &resolved, Some(&a.data.data), a.output.seed)?;
    if sweep.results.len() == 1 {
        let entry = sweep.results.into_iter().next().expect("one entry");
        emit_json(&Report { manifest, body: entry }, &a.output)
    } else {
        emit_json(&Report { manifest, body: sweep }, &a.output)
    }
}

fn parse_intervention(s: &str) -> Result<Intervention> {
    let bad = || dosesens::Error::UnknownKind(format!("intervention {s:?}; expected above:C, below:C or baseline"));
    if s == "baseline" {
        return Ok(Intervention::Baseline);
    }
    let (head, value) = s.split_once(':').ok_or_else(bad)?;
    let c: f64 = value.trim().parse().map_err(|_| bad())?;
    match head {
        "above" => Ok(Intervention::AboveThreshold(c)),
        "below" => Ok(Intervention::BelowThreshold(c)),
        _ => Err(bad().into()),
    }
}

fn estimand_kind(a: &EstimandArgs) -> Result<EstimandKind> {
    Ok(match a.estimand {
        EstimandName::Sate => EstimandKind::Sate,
        EstimandName::EffectRatio => EstimandKind::EffectRatio { lambda0: a.lambda0 },
        EstimandName::Tsate => EstimandKind::Tsate { threshold: a.threshold },
        EstimandName::AvgSlope => EstimandKind::AvgSlope,
        EstimandName::Contrast => EstimandKind::StochasticContrast {
            first: parse_intervention(&a.first)?,
            second: parse_intervention(&a.second)?,
        },
    })
}

fn estimand(a: &EstimandArgs, dataset: &MatchedDataset) -> Result<EstimandSpec> {
    let policy = match a.on_degenerate {
        OnDegenerate::Error => DegeneratePolicy::Error,
        OnDegenerate::Drop => DegeneratePolicy::Drop,
    };
    Ok(build_estimand(estimand_kind(a)?, dataset, policy)?)
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct EstimateBody {
    estimand: EstimandKind,
    V_N: f64,
    S_N: f64,
    dropped: Vec<String>,
    per_set: Vec<SetEstimate>,
}

#[derive(Serialize)]
struct SetEstimate {
    set_id: String,
    estimate: f64,
}

fn estimate(a: args::EstimateArgs) -> Result<()> {
    let dataset = load(&a.data)?;
    let spec = estimand(&a.estimand, &dataset)?;
    let cfg = WeakConfig {
        design: design(&a.data),
        ..WeakConfig::default()
    };
    let analysis = WeakAnalysis::new(&dataset, &spec, 0.0, &cfg)?;
    let body = EstimateBody {
        estimand: spec.kind.clone(),
        V_N: analysis.v_n(),
        S_N: analysis.s_n()?,
        dropped: spec.dropped.iter().map(|&i| dataset.sets()[i].id().to_string()).collect(),
        per_set: spec
            .retained
            .iter()
            .zip(analysis.set_estimates())
            .map(|(&i, &e)| SetEstimate {
                set_id: dataset.sets()[i].id().to_string(),
                estimate: e,
            })
            .collect(),
    };
    let resolved = json!({ "data": data_json(&a.data), "estimand": spec.kind });
    let manifest = RunManifest::new("estimate", &resolved, Some(&a.data.data), a.output.seed)?;
    match a.output.format {
        OutputFormat::Json => emit_json(&Report { manifest, body }, &a.output),
        OutputFormat::Csv => {
            let mut text = String::from("set_id,estimate\n");
            for s in &body.per_set {
                text.push_str(&format!("{},{}\n", s.set_id, report::sig6(s.estimate)));
            }
            write_output(&text, a.output.out.as_deref()).map_err(Into::into)
        }
        OutputFormat::Table => {
            let text = format!(
                "estimand  {}\nV_N       {}\nS_N       {}\nsets      {} ({} dropped)\n",
                body.estimand.name(),
                report::sig6(body.V_N),
                report::sig6(body.S_N),
                body.per_set.len(),
                body.dropped.len()
            );
            write_output(&text, a.output.out.as_deref()).map_err(Into::into)
        }
    }
}

fn weak_config(data: &DataArgs, w: &WeakArgs, solver: &SolverConfig, seed: Option<u64>) -> WeakConfig {
    let mut cfg = WeakConfig {
        method: match w.method {
            MethodName::Vn => Method::Vn,
            MethodName::Vc => Method::Vc,
        },
        side: match w.side {
            SideName::Greater => Side::Greater,
            SideName::Less => Side::Less,
        },
        design: design(data),
        ..WeakConfig::default()
    };
    solver.apply_box(&mut cfg.box_opts);
    if let Some(s) = seed {
        cfg.box_opts.seed = s;
    }
    cfg
}

fn weak_test(a: args::WeakCommandArgs, with_ci: bool) -> Result<()> {
    let solver = config::solver_config(a.output.config.as_deref())?;
    let dataset = load(&a.data)?;
    let spec = estimand(&a.estimand, &dataset)?;
    let cfg = weak_config(&a.data, &a.weak, &solver, a.output.seed);
    let resolved = json!({
        "data": data_json(&a.data),
        "estimand": spec.kind,
        "gamma": a.weak.gamma,
        "theta0": a.weak.theta0,
        "alpha": a.weak.alpha,
        "weak": cfg,
    });
    let sweep = if with_ci {
        ci_sweep(&dataset, &spec, &a.weak.gamma, a.weak.alpha, a.weak.theta0, &cfg)?
    } else {
        weak_sweep(&dataset, &spec, &a.weak.gamma, a.weak.alpha, a.weak.theta0, &cfg)?
    };
    if a.output.format != OutputFormat::Json {
        return emit_sweep(&sweep.sweep, &a.output);
    }
    let command = if with_ci { "ci" } else { "weak-test" };
    let manifest = RunManifest::new(command, &resolved, Some(&a.data.data), a.output.seed)?;
    if !with_ci && sweep.results.len() == 1 {
        let entry = sweep.results.into_iter().next().expect("one entry");
        emit_json(&Report { manifest, body: entry }, &a.output)
    } else {
        emit_json(&Report { manifest, body: sweep }, &a.output)
    }
}

fn simulate(a: args::SimulateArgs) -> Result<()> {
    let mut file: SimFile = config::read_toml(&a.config)?;
    let out = a.out.as_deref();
    apply_sim_overrides(&mut file, a.reps, a.seed);
    let seed = match file.protocol {
        Protocol::Sharp => file.sharp.seed,
        _ => file.weak.seed,
    };
    let manifest = |resolved: serde_json::Value| RunManifest::new("simulate", &resolved, Some(&a.config), Some(seed));
    match file.protocol {
        Protocol::Sharp => {
            let mut rep = run_sharp_sim(&file.sharp)?;
            if !a.keep_reps {
                rep.summary.records.clear();
            }
            write_sim(&Report { manifest: manifest(serde_json::to_value(&file.sharp)?)?, body: rep }, out)
        }
        Protocol::Weak => {
            let mut rep = run_weak_sim(&file.weak)?;
            if !a.keep_reps {
                rep.vn.records.clear();
                rep.vc.records.clear();
            }
            write_sim(&Report { manifest: manifest(serde_json::to_value(&file.weak)?)?, body: rep }, out)
        }
        Protocol::Coverage => {
            let rep = run_ci_coverage(&file.weak)?;
            write_sim(&Report { manifest: manifest(serde_json::to_value(&file.weak)?)?, body: rep }, out)
        }
    }
}

fn apply_sim_overrides(file: &mut SimFile, reps: Option<usize>, seed: Option<u64>) {
    file.solver.apply_lp(&mut file.sharp.lp);
    file.solver.apply_box(&mut file.sharp.box_opts);
    file.solver.apply_box(&mut file.weak.box_opts);
    if let Some(r) = reps {
        file.sharp.reps = r;
        file.weak.reps = r;
    }
    if let Some(s) = seed {
        file.sharp.seed = s;
        file.weak.seed = s;
    }
}

fn write_sim<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    write_output(&to_json(value)?, out).context("writing simulation report")
}
