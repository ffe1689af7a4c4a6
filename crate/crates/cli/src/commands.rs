use std::path::{Path, PathBuf};
use std::time::Instant;

use pnl_core::datagen::build;
use pnl_core::estimation::fit;
use pnl_core::evaluation::{align, amari_index, global_map, sir_db};
use pnl_core::{separate, Role, SignalBlock};

use crate::config::RunConfig;
use crate::csvio::{read_block, write_block};
use crate::error::{CliError, CliResult};
use crate::report::{
    write_json, write_trace, Evaluation, GroundTruth, RunReport, TraceRow, TOOL_VERSION,
};

pub const SOURCES_CSV: &str = "sources.csv";
pub const OBSERVATIONS_CSV: &str = "observations.csv";
pub const GROUND_TRUTH_JSON: &str = "ground_truth.json";
pub const OUTPUTS_CSV: &str = "outputs.csv";
pub const SEPARATOR_JSON: &str = "separator.json";
pub const REPORT_JSON: &str = "report.json";
pub const TRACE_CSV: &str = "trace.csv";
pub const EVAL_JSON: &str = "eval.json";

fn prepare_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Builds the configured scenario and writes its sources, observations and
/// ground truth to `out_dir`.
pub fn cmd_generate(config: &Path, seed: Option<u64>, out_dir: &Path) -> CliResult<GroundTruth> {
    let cfg = RunConfig::load(config)?.with_seed(seed);
    let scenario = cfg.require_scenario()?.clone();
    let (model, sources, observations) = build(&scenario)?;
    prepare_dir(out_dir)?;
    write_block(&out_dir.join(SOURCES_CSV), &sources)?;
    write_block(&out_dir.join(OBSERVATIONS_CSV), &observations)?;
    let truth = GroundTruth {
        seed: scenario.seed,
        mixing: model.mixing().clone(),
        distortions: model.distortions().to_vec(),
        scenario,
    };
    write_json(&out_dir.join(GROUND_TRUTH_JSON), &truth)?;
    log::info!(
        "generated {} channels x {} samples in {}",
        sources.channels(),
        sources.samples(),
        out_dir.display()
    );
    Ok(truth)
}

pub fn evaluate_blocks(outputs: &SignalBlock, sources: &SignalBlock) -> CliResult<Evaluation> {
    if outputs.channels() != sources.channels() || outputs.samples() != sources.samples() {
        return Err(CliError::BadInput(format!(
            "outputs are {}x{} but sources are {}x{}",
            outputs.channels(),
            outputs.samples(),
            sources.channels(),
            sources.samples()
        )));
    }
    let g = global_map(outputs, sources)?;
    let amari = amari_index(&g)?;
    let alignment = align(outputs, sources)?;
    let sir = sir_db(&alignment.aligned, sources)?;
    let mean_sir_db = sir.iter().sum::<f64>() / sir.len() as f64;
    Ok(Evaluation {
        amari,
        mean_sir_db,
        sir_db: sir,
        permutation: alignment.permutation,
        scales: alignment.scales,
        global_map: g.entries.outer_iter().map(|r| r.to_vec()).collect(),
    })
}

pub struct SeparateArgs<'a> {
    pub observations: &'a Path,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub truth: Option<&'a Path>,
    pub out_dir: &'a Path,
}

/// Fits a separator to the observations and writes the outputs, the
/// separator, the contrast trace and a run report. When `truth` names a
/// sources file the report includes an evaluation against it.
pub fn cmd_separate(args: &SeparateArgs) -> CliResult<RunReport> {
    let cfg = match args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    }
    .with_seed(args.seed);
    let x = read_block(args.observations, Role::Observation)?;
    let sources = args
        .truth
        .map(|p| read_block(p, Role::Source))
        .transpose()?;
    prepare_dir(args.out_dir)?;

    let clock = Instant::now();
    let (sep, trace) = fit(&x, &cfg.train)?;
    let y = separate(&sep, &x)?;
    let wall_ms = clock.elapsed().as_millis() as u64;
    log::info!(
        "fit: {} iterations, contrast {:.6}, converged {}",
        trace.records.len() - 1,
        trace.records.last().map_or(f64::NAN, |r| r.contrast.total),
        trace.converged
    );
    if !trace.converged {
        log::warn!("iteration limit reached before convergence");
    }
    for r in &trace.records {
        log::debug!("iter {} contrast {:.10}", r.iter, r.contrast.total);
    }

    write_block(&args.out_dir.join(OUTPUTS_CSV), &y)?;
    write_json(&args.out_dir.join(SEPARATOR_JSON), &sep)?;
    write_trace(&args.out_dir.join(TRACE_CSV), &trace)?;

    let evaluation = sources.map(|s| evaluate_blocks(&y, &s)).transpose()?;
    let report = RunReport {
        version: TOOL_VERSION.to_string(),
        config: cfg,
        observations: args.observations.display().to_string(),
        channels: x.channels(),
        samples: x.samples(),
        converged: trace.converged,
        iterations: trace.records.len() - 1,
        start: trace.start,
        start_contrasts: trace.start_contrasts.clone(),
        trace: TraceRow::rows(&trace),
        evaluation,
        wall_ms,
    };
    write_json(&args.out_dir.join(REPORT_JSON), &report)?;
    Ok(report)
}

/// Compares separated outputs with the true sources and writes `eval.json`.
pub fn cmd_evaluate(outputs: &Path, sources: &Path, out_dir: &Path) -> CliResult<Evaluation> {
    let y = read_block(outputs, Role::Output)?;
    let s = read_block(sources, Role::Source)?;
    let eval = evaluate_blocks(&y, &s)?;
    prepare_dir(out_dir)?;
    write_json(&out_dir.join(EVAL_JSON), &eval)?;
    Ok(eval)
}

/// Paths written by [`cmd_separate`] into `out_dir`.
pub fn separate_artifacts(out_dir: &Path) -> [PathBuf; 4] {
    [OUTPUTS_CSV, SEPARATOR_JSON, REPORT_JSON, TRACE_CSV].map(|f| out_dir.join(f))
}
