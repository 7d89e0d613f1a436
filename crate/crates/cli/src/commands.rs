use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde_json::json;

use dynconn::data::{
    load_csv, precision_to_graphs, write_precision_sequence, GraphSequence, PrecisionFormat, TimeSeries,
};
use dynconn::experiment::{run_benchmark, ExperimentConfig};
use dynconn::kernels::{estimate_covariances_with, Centering, KernelSpec};
use dynconn::metrics::{betweenness_change, f_curve, MetricsReport, SubjectGraphs};
use dynconn::par::Execution;
use dynconn::simgen::{simulate_replicate, SimScenario, PRESETS};
use dynconn::solver::{solve, SingleResult};
use dynconn::tuning::{default_h_grid, tune, TuningGrid, DEFAULT_LAMBDA_GRID};

use crate::args::{
    AnalyzeArgs, BenchmarkArgs, Command, EstimateArgs, GridArgs, RerunArgs, ScenarioArgs, ScoreArgs, SimulateArgs,
    TuneArgs,
};
use crate::manifest::Manifest;
use crate::schedule::{self, Condition};

pub struct Outcome {
    pub warnings: Vec<String>,
}

struct Written {
    outputs: Vec<String>,
    status: serde_json::Value,
    warnings: Vec<String>,
}

pub fn execute(command: Command) -> anyhow::Result<Outcome> {
    let Some(dir) = command.output_dir().cloned() else {
        bail!("`{}` cannot be executed from a manifest", command.name());
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let written = match &command {
        Command::Estimate(a) => estimate(a, &dir)?,
        Command::Tune(a) => tune_cmd(a, &dir)?,
        Command::Simulate(a) => simulate(a, &dir)?,
        Command::Benchmark(a) => benchmark(a, &dir)?,
        Command::Analyze(a) => analyze(a, &dir)?,
        Command::Score(a) => score(a, &dir)?,
        Command::Rerun(_) => unreachable!("rerun has no output directory"),
    };
    Manifest::new(command, written.outputs, written.status).write(&dir)?;
    Ok(Outcome { warnings: written.warnings })
}

/// The recorded seed is reused; the environment override is not applied again.
pub fn rerun(args: &RerunArgs) -> anyhow::Result<Outcome> {
    let manifest = Manifest::read(&args.manifest)?;
    let mut command = manifest.command;
    if let Some(dir) = &args.output {
        command.set_output_dir(dir.clone());
    }
    execute(command)
}

fn load_series(path: &Path, no_header: bool) -> anyhow::Result<TimeSeries> {
    load_csv(path, !no_header).with_context(|| format!("loading {}", path.display()))
}

fn tuning_grid(grid: &GridArgs, t: usize) -> anyhow::Result<TuningGrid> {
    let l1 = grid.lambda_grid.clone().unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
    let l2 = grid.lambda2_grid.clone().unwrap_or_else(|| l1.clone());
    let h = grid.h_grid.clone().unwrap_or_else(|| default_h_grid(t));
    Ok(TuningGrid::new(h, l1, l2)?)
}

fn convergence_warning(res: &SingleResult, max_iter: usize) -> Vec<String> {
    if res.converged {
        Vec::new()
    } else {
        vec![format!("solver stopped at the iteration limit ({max_iter}) without converging")]
    }
}

fn estimate(a: &EstimateArgs, dir: &Path) -> anyhow::Result<Written> {
    let ts = load_series(&a.input.input, a.input.no_header)?;
    let (result, h, lambda1, lambda2, tuning) = if a.auto_tune {
        ensure!(
            a.h.is_none() && a.lambda1.is_none() && a.lambda2.is_none(),
            "--auto-tune chooses h, lambda1 and lambda2; drop the explicit values"
        );
        let grid = tuning_grid(&a.grid, ts.len())?;
        let fit = tune(&ts, a.kernel, &grid, &a.solver.config(0.0, 0.0))?;
        let r = &fit.report;
        (fit.result, r.chosen_h, r.chosen_lambda1, r.chosen_lambda2, Some(fit.report))
    } else {
        let (Some(h), Some(l1), Some(l2)) = (a.h, a.lambda1, a.lambda2) else {
            bail!("give --h, --lambda1 and --lambda2, or pass --auto-tune");
        };
        let spec = KernelSpec::new(a.kernel, h)?;
        let cfg = a.solver.config(l1, l2);
        let covs = estimate_covariances_with(&ts, &spec, Centering::default(), cfg.execution)?;
        (solve(&covs, &cfg)?, h, l1, l2, None)
    };

    let (name, format) =
        if a.csv { ("precisions.csv", PrecisionFormat::CsvStack) } else { ("precisions.json", PrecisionFormat::Json) };
    write_precision_sequence(&result.precisions, &dir.join(name), format, Some(a.edge_tol))?;
    let graphs = precision_to_graphs(&result.precisions, a.edge_tol);
    graphs.write_json(&dir.join("edges.json"))?;

    Ok(Written {
        outputs: vec![name.into(), "edges.json".into()],
        status: json!({
            "T": ts.len(),
            "p": ts.dim(),
            "kernel": a.kernel,
            "h": h,
            "lambda1": lambda1,
            "lambda2": lambda2,
            "converged": result.converged,
            "iterations": result.iterations_used,
            "objective": result.objective,
            "edge_changes": graphs.change_count(),
            "tuning": tuning,
        }),
        warnings: convergence_warning(&result, a.solver.max_iter),
    })
}

fn tune_cmd(a: &TuneArgs, dir: &Path) -> anyhow::Result<Written> {
    let ts = load_series(&a.input.input, a.input.no_header)?;
    let grid = tuning_grid(&a.grid, ts.len())?;
    let fit = tune(&ts, a.kernel, &grid, &a.solver.config(0.0, 0.0))?;
    let path = dir.join("tuning.json");
    let mut text = serde_json::to_string_pretty(&fit.report)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(Written {
        outputs: vec!["tuning.json".into()],
        status: json!({
            "h": fit.report.chosen_h,
            "lambda1": fit.report.chosen_lambda1,
            "lambda2": fit.report.chosen_lambda2,
            "converged": fit.result.converged,
            "iterations": fit.result.iterations_used,
        }),
        warnings: convergence_warning(&fit.result, a.solver.max_iter),
    })
}

fn resolve_scenario(a: &ScenarioArgs, seed: Option<u64>) -> anyhow::Result<SimScenario> {
    if PRESETS.contains(&a.scenario.as_str()) {
        return Ok(SimScenario::preset(&a.scenario, a.seglen, seed.unwrap_or(0))?);
    }
    let path = PathBuf::from(&a.scenario);
    if !path.is_file() {
        bail!("unknown scenario {:?}: not a preset ({}) and no such file", a.scenario, PRESETS.join(", "));
    }
    ensure!(a.seglen.is_none(), "--seglen applies to presets only");
    let mut s = SimScenario::from_json(&path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn simulate(a: &SimulateArgs, dir: &Path) -> anyhow::Result<Written> {
    let scenario = resolve_scenario(&a.scenario, a.seed)?;
    let (ts, truth) = simulate_replicate(&scenario, a.replicate)?;
    ts.write_csv(&dir.join("data.csv"))?;
    truth.write_json(&dir.join("truth.json"), &scenario, a.replicate)?;
    truth.true_edge_sets.write_json(&dir.join("truth_edges.json"))?;
    Ok(Written {
        outputs: vec!["data.csv".into(), "truth.json".into(), "truth_edges.json".into()],
        status: json!({
            "T": ts.len(),
            "p": ts.dim(),
            "seed": scenario.seed,
            "replicate": a.replicate,
            "change_points": truth.change_points,
            "scenario": scenario,
        }),
        warnings: Vec::new(),
    })
}

fn benchmark(a: &BenchmarkArgs, dir: &Path) -> anyhow::Result<Written> {
    let scenario = resolve_scenario(&a.scenario, a.seed)?;
    let lambda1_grid = a.grid.lambda_grid.clone().unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
    let config = ExperimentConfig {
        h_grid: a.grid.h_grid.clone(),
        lambda2_grid: a.grid.lambda2_grid.clone().unwrap_or_else(|| lambda1_grid.clone()),
        lambda1_grid,
        solver: a.solver.config(0.0, 0.0),
        edge_tolerance: a.edge_tol,
    };
    let report = run_benchmark(&scenario, a.reps, &a.methods, &config, Execution::Parallel)?;
    report.write_json(&dir.join("report.json"))?;
    let mut outputs = vec!["report.json".to_string()];
    if a.csv {
        report.write_per_time_csv(&dir.join("per_time.csv"))?;
        outputs.push("per_time.csv".into());
    }

    let mut warnings = Vec::new();
    if !report.failures.is_empty() {
        warnings.push(format!("{} method runs failed; see `failures` in report.json", report.failures.len()));
    }
    let methods: Vec<_> = report
        .methods
        .iter()
        .map(|m| {
            if m.non_converged > 0 {
                warnings.push(format!("{}: {} replicates did not converge", m.name, m.non_converged));
            }
            json!({
                "method": m.name,
                "replicates_ok": m.replicates_ok,
                "non_converged": m.non_converged,
                "mean_F": m.mean_f,
                "sd_F": m.sd_f,
            })
        })
        .collect();
    Ok(Written {
        outputs,
        status: json!({
            "seed": scenario.seed,
            "reps": a.reps,
            "T": scenario.total_len(),
            "methods": methods,
            "failures": report.failures.len(),
            "dcr": report.dcr,
        }),
        warnings,
    })
}

fn subject_graphs(path: &Path) -> anyhow::Result<GraphSequence> {
    let file = if path.is_dir() { path.join("edges.json") } else { path.to_path_buf() };
    GraphSequence::read_json(&file).with_context(|| format!("loading {}", file.display()))
}

fn analyze(a: &AnalyzeArgs, dir: &Path) -> anyhow::Result<Written> {
    let graphs = a.subjects.iter().map(|p| subject_graphs(p)).collect::<anyhow::Result<Vec<_>>>()?;
    let (p, t) = (graphs[0].p, graphs[0].len());
    for (g, path) in graphs.iter().zip(&a.subjects).skip(1) {
        ensure!(
            g.p == p && g.len() == t,
            "{}: p = {}, T = {} differs from the first subject (p = {p}, T = {t})",
            path.display(),
            g.p,
            g.len(),
        );
    }
    let conditions = schedule::load(&a.schedule, t)?;
    let subjects: Vec<SubjectGraphs> = graphs
        .into_iter()
        .map(|g| {
            let (mut on, mut off) = (Vec::new(), Vec::new());
            for (set, c) in g.edge_sets.into_iter().zip(&conditions) {
                match c {
                    Condition::On => on.push(set),
                    Condition::Off => off.push(set),
                }
            }
            SubjectGraphs { on, off }
        })
        .collect();
    let nodes = betweenness_change(&subjects, p, a.alpha)?;
    let flagged: Vec<usize> = nodes.iter().filter(|n| n.flagged).map(|n| n.id).collect();
    MetricsReport::from_nodes(nodes).write_json(&dir.join("metrics.json"))?;
    Ok(Written {
        outputs: vec!["metrics.json".into()],
        status: json!({
            "subjects": subjects.len(),
            "p": p,
            "T": t,
            "alpha": a.alpha,
            "flagged": flagged,
        }),
        warnings: Vec::new(),
    })
}

fn score(a: &ScoreArgs, dir: &Path) -> anyhow::Result<Written> {
    let est = subject_graphs(&a.estimate)?;
    let truth = subject_graphs(&a.truth)?;
    let curve = f_curve(&est, &truth)?;
    let report = MetricsReport::from_curve(&curve);
    report.write_json(&dir.join("metrics.json"))?;
    Ok(Written {
        outputs: vec!["metrics.json".into()],
        status: json!({ "mean_F": report.summary.map(|s| s.mean_f) }),
        warnings: Vec::new(),
    })
}
