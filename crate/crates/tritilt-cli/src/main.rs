//! Command-line experiments: phase diagnostics, estimation runs, the
//! comparison tables, curve data, and exact small-`n` oracles.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{default_steps_coeff, resolve_tilt, ConfigError, ExperimentConfig, ResolvedRun};
use output::{csv_cell, emit, fmt_f64, json_document, Budgets, Provenance};
use tritilt::estimate::{psi_er_exact, run_replicas, EstimateReport, RunPlan};
use tritilt::glauber::ConstraintSet;
use tritilt::oracle::{enumerate_joint, exact_glauber_matrix, JointDistribution};
use tritilt::phase::{self, phase_report};
use tritilt::rates::{
    log_odds, maximize_v, ProblemSpec, StationaryKind, ThresholdMode, TiltParams,
};

#[derive(Parser)]
#[command(
    name = "tritilt",
    version,
    about = "Importance sampling of rare triangle counts in dense random graphs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Default)]
struct EstimateFlags {
    /// Source edge probability.
    #[arg(long)]
    p: Option<f64>,
    /// Target density (event: triangle count at or above the t^3 threshold).
    #[arg(long)]
    t: Option<f64>,
    /// Graph sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Tilt descriptor: mc | edge | triangle[:alpha] | hybrid[:q].
    #[arg(long)]
    tilt: Option<String>,
    /// Triangle exponent for `triangle` tilts.
    #[arg(long)]
    alpha: Option<f64>,
    /// Hybrid parameter for `hybrid` tilts.
    #[arg(long)]
    q: Option<f64>,
    /// Restrict the chain to A_r (triangle density <= r^3, edge density <= r).
    #[arg(long)]
    r: Option<f64>,
    /// Total step budget coefficient c in c n^2 ln n (default: paper rule).
    #[arg(long)]
    steps_coeff: Option<f64>,
    /// Burn-in coefficient b in b n^2 ln n per replica (default 10).
    #[arg(long)]
    burnin_coeff: Option<f64>,
    /// Master seed; replica seeds split deterministically from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel replica chains sharing the total budget.
    #[arg(long)]
    replicas: Option<usize>,
    /// binomial: T >= C(n,3) t^3; graphon: T >= (n^3/6) t^3.
    #[arg(long)]
    threshold_mode: Option<String>,
    /// Scale every budget down for quick runs.
    #[arg(long)]
    budget_frac: Option<f64>,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<String>,
    /// Also write the hit-conditional edge histogram CSV here.
    #[arg(long)]
    hist_out: Option<String>,
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the merged configuration in config-file form and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Replica-symmetry and S_alpha phase diagnostics for one (p, t).
    Phase {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        t: f64,
        /// Exponents to test (repeatable).
        #[arg(long = "alpha", value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Run an importance-sampling estimation from flags or a config.
    Estimate(EstimateFlags),
    /// Reproduce a comparison table: t1 | t2 | t3 | t4.
    Table {
        name: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget_frac: Option<f64>,
        /// Include the large-n columns (n = 64/96 for t1/t2, 48/64 for t3/t4).
        #[arg(long)]
        full: bool,
        #[arg(long)]
        out: Option<String>,
    },
    /// Curve data: `phase` (stationary branches vs beta) or
    /// `second_moment` (conditioned/unconditioned asymptotics vs beta).
    Curve {
        name: String,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long, default_value_t = 8.0)]
        beta_max: f64,
        #[arg(long, default_value_t = 160)]
        beta_steps: usize,
        #[arg(long)]
        out: Option<String>,
    },
    /// Exact quantities from exhaustive enumeration (n <= 7, or 8 with --allow-n8).
    Oracle {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        tilt: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        threshold_mode: Option<String>,
        #[arg(long)]
        allow_n8: bool,
        /// Cache the (E,T) histogram as CSV at this path.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Estimate and write only the hit-conditional edge histogram CSV.
    HistEdges(EstimateFlags),
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn parse_threshold_mode(text: Option<&str>) -> Result<ThresholdMode, CliError> {
    match text {
        None | Some("binomial") => Ok(ThresholdMode::Binomial),
        Some("graphon") => Ok(ThresholdMode::Graphon),
        Some(other) => Err(CliError::Config(format!("unknown threshold mode {other:?}"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Command::Phase { p, t, alphas, out } => cmd_phase(p, t, alphas, out),
        Command::Estimate(flags) => cmd_estimate(flags, false),
        Command::HistEdges(flags) => cmd_estimate(flags, true),
        Command::Table { name, seed, budget_frac, full, out } => {
            cmd_table(&name, seed.unwrap_or(0), budget_frac.unwrap_or(1.0), full, out)
        }
        Command::Curve { name, p, t, alpha, r, beta_max, beta_steps, out } => {
            cmd_curve(&name, p, t, alpha, r, beta_max, beta_steps, out)
        }
        Command::Oracle { n, p, t, tilt, alpha, q, r, threshold_mode, allow_n8, cache, out } => {
            cmd_oracle(n, p, t, tilt, alpha, q, r, threshold_mode, allow_n8, cache, out)
        }
    }
}

fn cmd_phase(
    p: f64,
    t: f64,
    alphas: Option<Vec<f64>>,
    out: Option<String>,
) -> Result<(), CliError> {
    let spec = ProblemSpec::new(p, t, ThresholdMode::Binomial)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let alphas = alphas.unwrap_or_else(|| vec![2.0 / 3.0, 1.0]);
    let report = phase_report(&spec, &alphas).map_err(|e| CliError::Runtime(e.to_string()))?;
    let header = Provenance::new("phase");
    emit(out.as_deref(), &json_document(&header, &report))?;
    Ok(())
}

fn merged_config(flags: &EstimateFlags) -> Result<ExperimentConfig, CliError> {
    let base = match &flags.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overlay = ExperimentConfig {
        p: flags.p,
        t: flags.t,
        n: flags.n.clone(),
        tilt: flags.tilt.clone(),
        alpha: flags.alpha,
        q: flags.q,
        r: flags.r,
        steps_coeff: flags.steps_coeff,
        burnin_coeff: flags.burnin_coeff,
        seed: flags.seed,
        replicas: flags.replicas,
        threshold_mode: match flags.threshold_mode.as_deref() {
            None => None,
            some => Some(parse_threshold_mode(some)?),
        },
        budget_frac: flags.budget_frac,
        out: flags.out.clone(),
        hist_out: flags.hist_out.clone(),
    };
    Ok(base.overlaid(&overlay))
}

/// Execute one resolved run and return the report plus the histogram.
fn execute_run(
    run: &ResolvedRun,
    with_histogram: bool,
) -> Result<(EstimateReport, Option<Vec<u64>>), CliError> {
    let plan = RunPlan {
        n: run.n,
        total_steps: run.steps_per_replica,
        burnin: run.burnin,
        master_seed: run.seed,
        replicas: run.replicas,
    };
    let acc = run_replicas(&plan, &run.spec, &run.tilt, run.constraint, with_histogram)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let steps = run.steps_per_replica * run.replicas as u64;
    let report = if run.constraint.is_some() {
        acc.report_conditioned(run.seed, steps)
    } else {
        acc.report_self_normalized(run.seed, steps)
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let hist = with_histogram.then(|| acc.edge_histogram().map(|h| h.to_vec()));
    let hist = match hist {
        Some(Ok(h)) => Some(h),
        Some(Err(e)) => return Err(CliError::Runtime(e.to_string())),
        None => None,
    };
    Ok((report, hist))
}

fn provenance_for(run: &ResolvedRun, command: &str) -> Provenance {
    let mut header = Provenance::new(command);
    header.master_seed = Some(run.seed);
    header.tilt_descriptor = Some(run.tilt_name.clone());
    header.tilt = Some(run.tilt);
    header.budgets = Some(Budgets {
        total_steps: run.steps_per_replica * run.replicas as u64,
        steps_per_replica: run.steps_per_replica,
        burnin_per_replica: run.burnin,
        replicas: run.replicas,
    });
    header
}

fn cmd_estimate(flags: EstimateFlags, histogram_only: bool) -> Result<(), CliError> {
    let cfg = merged_config(&flags)?;
    if flags.dump_config {
        print!("{}", cfg.serialize());
        return Ok(());
    }
    let runs = cfg.resolve()?;
    let want_hist = histogram_only || cfg.hist_out.is_some();

    let mut documents = Vec::new();
    for run in &runs {
        let (report, hist) = execute_run(run, want_hist)?;
        let header = provenance_for(run, if histogram_only { "hist-edges" } else { "estimate" });
        if let Some(h) = &hist {
            let mut csv = String::from("edge_count,frequency\n");
            for (e, c) in h.iter().enumerate() {
                if *c > 0 {
                    csv.push_str(&format!("{e},{c}\n"));
                }
            }
            if histogram_only {
                emit(cfg.out.as_deref(), &csv)?;
                eprintln!("{}", json_document(&header, &report));
                continue;
            }
            let path = cfg.hist_out.as_ref().expect("histogram requested");
            std::fs::write(path, csv)?;
        }
        documents.push(json_document(&header, &report));
    }
    if !histogram_only {
        if documents.len() == 1 {
            emit(cfg.out.as_deref(), &format!("{}\n", documents[0]))?;
        } else {
            emit(cfg.out.as_deref(), &format!("[{}]\n", documents.join(",\n")))?;
        }
    }
    Ok(())
}

/// The A_r cap used by the conditioned triangle tilt: the local
/// minimum of V between the metastable well at t and the dense phase.
fn conditioning_radius(spec: &ProblemSpec) -> Result<f64, CliError> {
    let tilt = TiltParams::triangle(spec, 1.0).map_err(|e| CliError::Config(e.to_string()))?;
    let res = maximize_v(&tilt, None);
    res.stationary_points
        .iter()
        .find(|s| s.kind == StationaryKind::Minimum && s.u > spec.t)
        .map(|s| s.u)
        .ok_or_else(|| {
            CliError::Config(format!(
                "V(.; h_p, beta*, 1) has no interior local minimum above t for (p,t)=({},{})",
                spec.p, spec.t
            ))
        })
}

fn table_runs(
    name: &str,
    seed: u64,
    budget_frac: f64,
    full: bool,
) -> Result<(Vec<usize>, Vec<(String, TiltParams, Option<ConstraintSet>)>, ProblemSpec), CliError>
{
    match name {
        "t1" | "t2" => {
            let spec = ProblemSpec::new(0.35, 0.4, ThresholdMode::Binomial).unwrap();
            let ns = if full { vec![16, 32, 64, 96] } else { vec![16, 32] };
            let qs = [0.35, 0.36, 0.37, 0.38, 0.39, 0.40];
            let tilts = qs
                .iter()
                .map(|&q| {
                    let (tilt, name) = resolve_tilt(&format!("hybrid:{q}"), &spec, None, None)?;
                    Ok((name, tilt, None))
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            let _ = seed;
            Ok((ns, tilts, spec))
        }
        "t3" | "t4" => {
            let spec = ProblemSpec::new(0.2, 0.3, ThresholdMode::Binomial).unwrap();
            let ns = if full { vec![16, 32, 48, 64] } else { vec![16, 32] };
            let r = conditioning_radius(&spec)?;
            let tri23 = TiltParams::triangle(&spec, 2.0 / 3.0)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let tri1 =
                TiltParams::triangle(&spec, 1.0).map_err(|e| CliError::Config(e.to_string()))?;
            let _ = budget_frac;
            Ok((
                ns,
                vec![
                    ("triangle:2/3".into(), tri23, None),
                    (format!("cond-triangle:1,r={r:.4}"), tri1, Some(ConstraintSet::a_r(r))),
                    ("edge".into(), TiltParams::edge(spec.t), None),
                ],
                spec,
            ))
        }
        other => Err(CliError::Config(format!("unknown table {other:?}"))),
    }
}

fn cmd_table(
    name: &str,
    seed: u64,
    budget_frac: f64,
    full: bool,
    out: Option<String>,
) -> Result<(), CliError> {
    if !(budget_frac > 0.0) {
        return Err(CliError::Config(format!("budget_frac must be positive, got {budget_frac}")));
    }
    let (ns, tilts, spec) = table_runs(name, seed, budget_frac, full)?;
    let variance_table = name == "t2" || name == "t4";

    let mut csv = String::from("n");
    for (tname, _, _) in &tilts {
        csv.push_str(&format!(",{}", csv_cell(tname)));
    }
    csv.push('\n');

    let mut meta_cells = Vec::new();
    let mut cell_idx = 0usize;
    for &n in &ns {
        csv.push_str(&n.to_string());
        for (tname, tilt, constraint) in &tilts {
            let coeff = default_steps_coeff(n) * budget_frac;
            let run = ResolvedRun {
                spec,
                tilt: *tilt,
                tilt_name: tname.clone(),
                constraint: *constraint,
                n,
                total_steps: tritilt::glauber::steps_budget(n, coeff),
                steps_per_replica: tritilt::glauber::steps_budget(n, coeff),
                burnin: tritilt::glauber::steps_budget(n, 10.0 * budget_frac.min(1.0)),
                replicas: 1,
                seed: tritilt::glauber::replica_seed(seed, cell_idx),
            };
            cell_idx += 1;
            let (report, _) = execute_run(&run, false)?;
            let cell = if variance_table {
                format!(
                    "{},{}",
                    fmt_f64(report.sample_variance),
                    fmt_f64(report.log_second_moment)
                )
            } else {
                format!("{},{}", fmt_f64(report.mu_hat), fmt_f64(report.log_prob))
            };
            csv.push_str(&format!(",{}", csv_cell(&cell)));
            meta_cells.push(json!({
                "n": n,
                "tilt": tname,
                "params": tilt,
                "seed": run.seed,
                "steps": run.total_steps,
            }));
        }
        csv.push('\n');
    }

    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": format!("table {name}"),
        "master_seed": seed,
        "budget_frac": budget_frac,
        "cells": meta_cells,
    });
    write_csv_with_meta(out.as_deref(), &csv, &meta)
}

fn write_csv_with_meta(
    out: Option<&str>,
    csv: &str,
    meta: &serde_json::Value,
) -> Result<(), CliError> {
    emit(out, csv)?;
    let meta_text = serde_json::to_string_pretty(meta).expect("serializable");
    match out {
        Some(path) => std::fs::write(format!("{path}.meta.json"), meta_text)?,
        None => eprintln!("{meta_text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_curve(
    name: &str,
    p: f64,
    t: Option<f64>,
    alpha: f64,
    r: Option<f64>,
    beta_max: f64,
    beta_steps: usize,
    out: Option<String>,
) -> Result<(), CliError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CliError::Config(format!("p={p} outside (0,1)")));
    }
    if !(beta_max > 0.0) || beta_steps < 2 {
        return Err(CliError::Config("need beta_max > 0 and beta_steps >= 2".into()));
    }
    let grid: Vec<f64> = (0..=beta_steps)
        .map(|k| beta_max * k as f64 / beta_steps as f64)
        .collect();
    match name {
        "phase" => {
            let curve = phase::phase_curve(p, alpha, &grid);
            let mut csv = String::from("beta,u,value,kind,is_global_max\n");
            for pt in &curve.points {
                for s in &pt.stationaries {
                    let kind = match s.kind {
                        StationaryKind::Maximum => "max",
                        StationaryKind::Minimum => "min",
                        StationaryKind::Saddle => "saddle",
                    };
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        fmt_f64(pt.beta),
                        fmt_f64(s.u),
                        fmt_f64(s.value),
                        kind,
                        s.is_global_max
                    ));
                }
            }
            let meta = json!({
                "version": env!("CARGO_PKG_VERSION"),
                "command": "curve phase",
                "p": p,
                "alpha": alpha,
                "transition": curve.transition,
            });
            write_csv_with_meta(out.as_deref(), &csv, &meta)
        }
        "second_moment" => {
            let t = t.ok_or(CliError::Config("second_moment needs --t".into()))?;
            let spec = ProblemSpec::new(p, t, ThresholdMode::Binomial)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let r = match r {
                Some(v) => v,
                None => conditioning_radius(&spec)?,
            };
            let hp = log_odds(p);
            let mut csv = String::from("beta,conditioned,unconditioned\n");
            for &beta in &grid {
                let params = TiltParams { h: hp, beta, alpha };
                let cond = phase::asymptotic_second_moment(&spec, &params, Some(r))
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                let uncond = phase::asymptotic_second_moment(&spec, &params, None)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                csv.push_str(&format!(
                    "{},{},{}\n",
                    fmt_f64(beta),
                    fmt_f64(cond),
                    fmt_f64(uncond)
                ));
            }
            let meta = json!({
                "version": env!("CARGO_PKG_VERSION"),
                "command": "curve second_moment",
                "p": p,
                "t": t,
                "alpha": alpha,
                "r": r,
            });
            write_csv_with_meta(out.as_deref(), &csv, &meta)
        }
        other => Err(CliError::Config(format!("unknown curve {other:?}"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracle(
    n: usize,
    p: f64,
    t: f64,
    tilt: Option<String>,
    alpha: Option<f64>,
    q: Option<f64>,
    r: Option<f64>,
    threshold_mode: Option<String>,
    allow_n8: bool,
    cache: Option<PathBuf>,
    out: Option<String>,
) -> Result<(), CliError> {
    let mode = parse_threshold_mode(threshold_mode.as_deref())?;
    if !(p > 0.0 && p < 1.0) {
        return Err(CliError::Config(format!("p={p} outside (0,1)")));
    }

    let joint: JointDistribution = match &cache {
        Some(path) if path.exists() => {
            let j = JointDistribution::read_csv(path).map_err(|e| CliError::Runtime(e.to_string()))?;
            if j.n() != n {
                return Err(CliError::Config(format!(
                    "cache holds n={}, requested n={n}",
                    j.n()
                )));
            }
            j
        }
        _ => {
            let j = enumerate_joint(n, allow_n8).map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(path) = &cache {
                j.write_csv(path).map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            j
        }
    };

    let mut doc = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": "oracle",
        "n": n,
        "p": p,
        "t": t,
        "graphs": joint.total(),
        "mu_exact": joint.exact_mu(p, t, mode),
        "psi_source": psi_er_exact(n, p),
    });

    if let Some(descriptor) = tilt {
        let spec = ProblemSpec::new(p, t, mode).map_err(|e| CliError::Config(e.to_string()))?;
        let (params, tilt_name) = resolve_tilt(&descriptor, &spec, alpha, q)?;
        let constraint = r.map(ConstraintSet::a_r);
        let moments = joint.exact_estimator_moments(&spec, &params, constraint.as_ref());
        doc["tilt"] = json!({ "descriptor": tilt_name, "params": params });
        doc["psi_tilt"] = json!(joint.exact_psi(&params));
        doc["moments"] = serde_json::to_value(moments).expect("serializable");
        if let Some(c) = &constraint {
            doc["nu_exact"] = json!(joint.exact_nu(&spec, c));
            doc["psi_tilt_constrained"] = json!(joint.exact_psi_constrained(&params, c));
        }
        if n <= 4 {
            let check = exact_glauber_matrix(n, &params, constraint.as_ref())
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            doc["glauber_check"] = serde_json::to_value(check).expect("serializable");
        }
    }

    emit(out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()))?;
    Ok(())
}
