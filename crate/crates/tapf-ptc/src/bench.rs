//! Benchmark sweeps over the generator's difficulty axes. Each cell draws
//! seeded instances, runs each solver on the same seeds, and records one
//! row per trial; aggregates report success rate, optimality ratio, and
//! runtime per cell. Everything except wall time is deterministic for a
//! fixed config.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::oracle::{generate_instance, GeneratorConfig};
use crate::partition::HeuristicKind;
use crate::search::{
    solve_task, Chunking, SolveStatus, SolverKind, SolverOptions, TaskOutcome,
};
use crate::task::AgentStart;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub bombs_per_region: Vec<usize>,
    pub bombs_per_subtask: Vec<usize>,
    pub seconds_per_timestep: Vec<u32>,
    pub trials: usize,
    pub timeout: Duration,
    pub solvers: Vec<SolverKind>,
    pub heuristic: HeuristicKind,
    pub epsilon: f64,
    /// Base seed; per-trial seeds are derived from it and the cell.
    pub seed: u64,
    /// Instance shape shared by all cells; each cell overrides the two
    /// generator axes it owns.
    pub base: GeneratorConfig,
}

impl SweepConfig {
    /// The default sweep: the published difficulty grid at a scale a
    /// single desktop core can cover, with 10 trials and a 60 second
    /// timeout per trial.
    pub fn desk_default() -> Self {
        SweepConfig {
            bombs_per_region: vec![1, 3, 5, 7, 9],
            bombs_per_subtask: vec![1, 2, 3],
            seconds_per_timestep: vec![1, 2, 3],
            trials: 10,
            timeout: Duration::from_secs(60),
            solvers: vec![SolverKind::CbsTaPtc, SolverKind::CbsTa],
            heuristic: HeuristicKind::FuseAscending,
            epsilon: 1.0,
            seed: 0,
            base: desk_generator(),
        }
    }
}

/// Desk-scale instance shape: two regions, three agents as in the full
/// environment, and a five minute mission. Three agents keep the crowded
/// end of the sweep physically attainable, so differences there measure
/// the solvers rather than the instances.
pub fn desk_generator() -> GeneratorConfig {
    GeneratorConfig {
        regions: 2,
        nodes_per_region: 8,
        agent_count: 3,
        mission_length_seconds: 300,
        fuse_seconds_range: (60, 300),
        ..GeneratorConfig::field_defaults()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Finished(SolveStatus),
    /// The solver returned an error; the sweep records it and moves on.
    Error(String),
}

impl TrialOutcome {
    pub fn name(&self) -> &str {
        match self {
            TrialOutcome::Finished(status) => status.name(),
            TrialOutcome::Error(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub solver: SolverKind,
    pub bombs_per_region: usize,
    pub bombs_per_subtask: usize,
    pub seconds_per_timestep: u32,
    pub heuristic: HeuristicKind,
    pub epsilon: f64,
    pub outcome: TrialOutcome,
    pub return_value: f64,
    pub max_return: f64,
    pub optimality_ratio: f64,
    pub wall_time_seconds: f64,
    pub nodes_expanded: u64,
    pub roots_evaluated: u64,
}

impl TrialRecord {
    /// The protocol's success test: full return before the timeout.
    pub fn success(&self) -> bool {
        matches!(self.outcome, TrialOutcome::Finished(s) if s != SolveStatus::Timeout)
            && self.return_value == self.max_return
    }
}

/// Stable per-trial seed. Trials share seeds across solvers and across the
/// subtask-size axis, so those comparisons are paired.
fn trial_seed(base: u64, bombs_per_region: usize, seconds_per_timestep: u32, trial: usize) -> u64 {
    let mut x = base
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(bombs_per_region as u64)
        .wrapping_mul(0xbf58476d1ce4e5b9)
        .wrapping_add(seconds_per_timestep as u64)
        .wrapping_mul(0x94d049bb133111eb)
        .wrapping_add(trial as u64);
    x ^= x >> 31;
    x = x.wrapping_mul(0xd6e8feb86659fd93);
    x ^= x >> 32;
    x
}

fn ratio(ret: f64, max: f64) -> f64 {
    if max > 0.0 {
        ret / max
    } else {
        1.0
    }
}

/// Runs one seeded trial. Wall time covers only the solve itself.
pub fn run_trial(
    config: &SweepConfig,
    bombs_per_region: usize,
    bombs_per_subtask: usize,
    seconds_per_timestep: u32,
    trial: usize,
    solver: SolverKind,
) -> TrialRecord {
    let seed = trial_seed(config.seed, bombs_per_region, seconds_per_timestep, trial);
    let generator = GeneratorConfig {
        bombs_per_region,
        seconds_per_timestep,
        ..config.base.clone()
    };
    let instance = generate_instance(&generator, seed);
    let record = |outcome: TrialOutcome, result: Option<&TaskOutcome>, wall: f64| {
        let (ret, max, expanded, roots) = match result {
            Some(r) => (
                r.return_value,
                r.max_return,
                r.telemetry.nodes_expanded,
                r.telemetry.roots_evaluated,
            ),
            None => (0.0, instance.max_return(), 0, 0),
        };
        TrialRecord {
            seed,
            solver,
            bombs_per_region,
            bombs_per_subtask,
            seconds_per_timestep,
            heuristic: config.heuristic,
            epsilon: config.epsilon,
            outcome,
            return_value: ret,
            max_return: max,
            optimality_ratio: ratio(ret, max),
            wall_time_seconds: wall,
            nodes_expanded: expanded,
            roots_evaluated: roots,
        }
    };

    let task = match crate::task::compile_bomb_task(&instance) {
        Ok(task) => task,
        Err(e) => return record(TrialOutcome::Error(e.to_string()), None, 0.0),
    };
    let starts = AgentStart::initial(&instance.agents);
    let options = SolverOptions {
        epsilon: config.epsilon,
        timeout: Some(config.timeout),
        ..SolverOptions::default()
    };
    let clock = Instant::now();
    let result = solve_task(
        &instance.graph,
        &starts,
        &task,
        Chunking::Bombs(bombs_per_subtask),
        config.heuristic,
        seed,
        &instance,
        solver,
        &options,
    );
    let wall = clock.elapsed().as_secs_f64();
    match result {
        Ok(outcome) => record(TrialOutcome::Finished(outcome.status), Some(&outcome), wall),
        Err(e) => record(TrialOutcome::Error(e.to_string()), None, wall),
    }
}

/// Runs the whole grid in deterministic (cell, trial, solver) order,
/// invoking the callback after each trial.
pub fn run_sweep(config: &SweepConfig, mut on_record: impl FnMut(&TrialRecord)) -> Vec<TrialRecord> {
    let mut records = Vec::new();
    for &bpr in &config.bombs_per_region {
        for &bps in &config.bombs_per_subtask {
            for &spt in &config.seconds_per_timestep {
                for trial in 0..config.trials {
                    for &solver in &config.solvers {
                        let record = run_trial(config, bpr, bps, spt, trial, solver);
                        on_record(&record);
                        records.push(record);
                    }
                }
            }
        }
    }
    records
}

pub const CSV_HEADER: &str = "seed,solver,bombs_per_region,bombs_per_subtask,seconds_per_timestep,heuristic,epsilon,outcome,return,max_return,optimality_ratio,wall_time_seconds,nodes_expanded,roots_evaluated";

pub fn csv_line(r: &TrialRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.seed,
        r.solver.name(),
        r.bombs_per_region,
        r.bombs_per_subtask,
        r.seconds_per_timestep,
        r.heuristic.name(),
        r.epsilon,
        r.outcome.name(),
        r.return_value,
        r.max_return,
        r.optimality_ratio,
        r.wall_time_seconds,
        r.nodes_expanded,
        r.roots_evaluated
    )
}

pub fn render_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 80);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&csv_line(r));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub bombs_per_region: usize,
    pub bombs_per_subtask: usize,
    pub seconds_per_timestep: u32,
    pub solver_name: &'static str,
}

#[derive(Debug, Clone)]
pub struct CellAggregate {
    pub key: CellKey,
    pub trials: usize,
    pub success_rate: f64,
    pub ratio_mean: f64,
    pub ratio_sd: f64,
    pub runtime_all_mean: f64,
    pub runtime_all_sd: f64,
    /// Mean and deviation over successful trials only; absent when none
    /// succeeded.
    pub runtime_success: Option<(f64, f64)>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

/// Per-cell statistics, sorted by cell key.
pub fn aggregate(records: &[TrialRecord]) -> Vec<CellAggregate> {
    let mut cells: std::collections::BTreeMap<CellKey, Vec<&TrialRecord>> =
        std::collections::BTreeMap::new();
    for r in records {
        cells
            .entry(CellKey {
                bombs_per_region: r.bombs_per_region,
                bombs_per_subtask: r.bombs_per_subtask,
                seconds_per_timestep: r.seconds_per_timestep,
                solver_name: r.solver.name(),
            })
            .or_default()
            .push(r);
    }
    cells
        .into_iter()
        .map(|(key, rows)| {
            let successes: Vec<&&TrialRecord> = rows.iter().filter(|r| r.success()).collect();
            let ratios: Vec<f64> = rows.iter().map(|r| r.optimality_ratio).collect();
            let runtimes: Vec<f64> = rows.iter().map(|r| r.wall_time_seconds).collect();
            let success_runtimes: Vec<f64> =
                successes.iter().map(|r| r.wall_time_seconds).collect();
            let (ratio_mean, ratio_sd) = mean_sd(&ratios);
            let (runtime_all_mean, runtime_all_sd) = mean_sd(&runtimes);
            CellAggregate {
                key,
                trials: rows.len(),
                success_rate: successes.len() as f64 / rows.len() as f64,
                ratio_mean,
                ratio_sd,
                runtime_all_mean,
                runtime_all_sd,
                runtime_success: if success_runtimes.is_empty() {
                    None
                } else {
                    Some(mean_sd(&success_runtimes))
                },
            }
        })
        .collect()
}

pub fn render_aggregate_table(cells: &[CellAggregate]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<12} {:>4} {:>4} {:>4} {:>7} {:>8} {:>15} {:>17} {:>17}",
        "solver", "b/r", "b/s", "s/t", "trials", "success", "ratio", "runtime(all)", "runtime(success)"
    )
    .unwrap();
    for cell in cells {
        let success_runtime = match cell.runtime_success {
            Some((mean, sd)) => format!("{mean:.2}s ±{sd:.2}"),
            None => "-".to_string(),
        };
        writeln!(
            out,
            "{:<12} {:>4} {:>4} {:>4} {:>7} {:>8.2} {:>15} {:>17} {:>17}",
            cell.key.solver_name,
            cell.key.bombs_per_region,
            cell.key.bombs_per_subtask,
            cell.key.seconds_per_timestep,
            cell.trials,
            cell.success_rate,
            format!("{:.3} ±{:.3}", cell.ratio_mean, cell.ratio_sd),
            format!("{:.2}s ±{:.2}", cell.runtime_all_mean, cell.runtime_all_sd),
            success_runtime,
        )
        .unwrap();
    }
    out
}
