//! Command line front end: generate seeded instances, solve them, replay
//! and verify solution files, and run benchmark sweeps. Exit codes: 0 on
//! success, 2 when an instance is proven unsolvable, 3 on timeout, 1 for
//! any error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use tapf_ptc::bench::{
    aggregate, csv_line, render_aggregate_table, render_csv, run_sweep, SweepConfig, TrialOutcome,
    TrialRecord,
};
use tapf_ptc::format::{parse_instance, parse_solution, write_instance, write_solution, SolutionFile};
use tapf_ptc::oracle::{generate_instance, GeneratorConfig, InstanceSpec, RolloutReport};
use tapf_ptc::partition::HeuristicKind;
use tapf_ptc::search::{solve_task, Chunking, SolveStatus, SolverKind, SolverOptions};
use tapf_ptc::task::{compile_bomb_task, AgentStart, Anchor, GoalId, Task};

/// Directory used for outputs when --out is relative or omitted.
const OUT_DIR_ENV: &str = "TAPF_PTC_OUT_DIR";

#[derive(Parser)]
#[command(name = "tapf-ptc", about = "Bomb-defusing task assignment and path finding toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance file
    Generate(GenerateArgs),
    /// Solve an instance file and write a solution file
    Solve(SolveArgs),
    /// Run a benchmark sweep and write a CSV of trial records
    Bench(BenchArgs),
    /// Replay a solution file against its instance and verify it
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Instance seed; the same seed always writes the same bytes
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path (relative paths land in the output directory)
    #[arg(long, default_value = "instance.tapf")]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    regions: usize,
    #[arg(long, default_value_t = 40)]
    nodes_per_region: usize,
    #[arg(long, default_value_t = 3)]
    agents: usize,
    #[arg(long, default_value_t = 5)]
    bombs_per_region: usize,
    #[arg(long, default_value_t = 900)]
    mission_seconds: u32,
    #[arg(long, default_value_t = 1)]
    seconds_per_timestep: u32,
    /// Shortest fuse the generator may draw, in seconds
    #[arg(long, default_value_t = 60)]
    fuse_min: u32,
    /// Longest fuse the generator may draw, in seconds
    #[arg(long, default_value_t = 900)]
    fuse_max: u32,
    #[arg(long, default_value_t = 60)]
    fuse_step: u32,
    #[arg(long, default_value_t = 15)]
    countdown_seconds: u32,
    #[arg(long, default_value_t = 1)]
    sequence_min: usize,
    #[arg(long, default_value_t = 3)]
    sequence_max: usize,
    #[arg(long, default_value_t = 1)]
    chain_min: usize,
    #[arg(long, default_value_t = 4)]
    chain_max: usize,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file to solve
    instance: PathBuf,
    #[arg(long, default_value = "cbs-ta-ptc", value_parser = parse_solver)]
    solver: SolverKind,
    #[arg(long, default_value_t = 3)]
    bombs_per_subtask: usize,
    #[arg(long, default_value = "fuse-length-ascending", value_parser = parse_heuristic)]
    heuristic: HeuristicKind,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Wall-clock budget in seconds
    #[arg(long)]
    timeout: Option<f64>,
    /// Seed for the locality heuristic's clustering
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Detect and resolve vertex and edge collisions between agents
    #[arg(long, default_value_t = false)]
    collisions: bool,
    #[arg(long, default_value_t = 1)]
    parallel_roots: usize,
    /// Solution output path (relative paths land in the output directory)
    #[arg(long, default_value = "solution.tapf")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// CSV output path (relative paths land in the output directory)
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    /// Comma-separated bombs-per-region axis
    #[arg(long, default_value = "1,3,5,7,9", value_delimiter = ',')]
    bombs_per_region: Vec<usize>,
    /// Comma-separated bombs-per-subtask axis
    #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
    bombs_per_subtask: Vec<usize>,
    /// Comma-separated seconds-per-timestep axis
    #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
    seconds_per_timestep: Vec<u32>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Per-trial timeout in seconds
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Restrict the sweep to one solver (default runs both)
    #[arg(long, value_parser = parse_solver)]
    solver: Option<SolverKind>,
    #[arg(long, default_value = "fuse-length-ascending", value_parser = parse_heuristic)]
    heuristic: HeuristicKind,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    regions: usize,
    #[arg(long, default_value_t = 8)]
    nodes_per_region: usize,
    #[arg(long, default_value_t = 3)]
    agents: usize,
    #[arg(long, default_value_t = 300)]
    mission_seconds: u32,
    /// Print each trial record as it completes
    #[arg(long, default_value_t = false)]
    progress: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Instance file the solution was produced from
    instance: PathBuf,
    /// Solution file to replay
    solution: PathBuf,
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    SolverKind::from_name(s).ok_or_else(|| format!("unknown solver '{s}' (cbs-ta-ptc or cbs-ta)"))
}

fn parse_heuristic(s: &str) -> Result<HeuristicKind, String> {
    HeuristicKind::from_name(s).ok_or_else(|| {
        format!("unknown heuristic '{s}' (fuse-length-ascending, kmeans-locality, or input-order)")
    })
}

/// Resolves an output path against the output directory variable.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(path),
        None => path.to_path_buf(),
    }
}

fn fail(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(1)
}

fn status_exit(status: SolveStatus) -> ExitCode {
    match status {
        SolveStatus::Optimal | SolveStatus::BestEffort => ExitCode::SUCCESS,
        SolveStatus::Unsolvable => ExitCode::from(2),
        SolveStatus::Timeout => ExitCode::from(3),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Replay(args) => cmd_replay(args),
    }
}

fn cmd_generate(args: GenerateArgs) -> ExitCode {
    if args.regions == 0 || args.nodes_per_region == 0 || args.agents == 0 {
        return fail("regions, nodes-per-region, and agents must all be at least 1");
    }
    if args.bombs_per_region == 0 {
        return fail("bombs-per-region must be at least 1");
    }
    if args.mission_seconds == 0 || args.seconds_per_timestep == 0 {
        return fail("mission-seconds and seconds-per-timestep must be at least 1");
    }
    if args.fuse_min == 0 || args.fuse_min > args.fuse_max || args.fuse_step == 0 {
        return fail("fuse range must satisfy 1 <= fuse-min <= fuse-max with a nonzero step");
    }
    if args.countdown_seconds == 0 {
        return fail("countdown-seconds must be at least 1");
    }
    if args.sequence_min == 0 || args.sequence_min > args.sequence_max || args.sequence_max > 3 {
        return fail("sequence lengths must satisfy 1 <= min <= max <= 3");
    }
    if args.chain_min == 0 || args.chain_min > args.chain_max {
        return fail("chain lengths must satisfy 1 <= min <= max");
    }
    let config = GeneratorConfig {
        regions: args.regions,
        nodes_per_region: args.nodes_per_region,
        agent_count: args.agents,
        bombs_per_region: args.bombs_per_region,
        mission_length_seconds: args.mission_seconds,
        seconds_per_timestep: args.seconds_per_timestep,
        fuse_seconds_range: (args.fuse_min, args.fuse_max),
        fuse_step_seconds: args.fuse_step,
        countdown_seconds: args.countdown_seconds,
        sequence_length_range: (args.sequence_min, args.sequence_max),
        chain_length_range: (args.chain_min, args.chain_max),
        ..GeneratorConfig::field_defaults()
    };
    let instance = generate_instance(&config, args.seed);
    if let Err(e) = instance.validate() {
        return fail(format!("generated instance failed validation: {e}"));
    }
    let out = resolve_out(&args.out);
    if let Err(e) = std::fs::write(&out, write_instance(&instance)) {
        return fail(format!("writing {}: {e}", out.display()));
    }
    println!(
        "wrote {} ({} vertices, {} agents, {} bombs, seed {})",
        out.display(),
        instance.graph.vertex_count(),
        instance.agents.len(),
        instance.bombs.len(),
        args.seed
    );
    ExitCode::SUCCESS
}

fn read_instance(path: &Path) -> Result<InstanceSpec, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    parse_instance(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_solve(args: SolveArgs) -> ExitCode {
    let instance = match read_instance(&args.instance) {
        Ok(i) => i,
        Err(e) => return fail(e),
    };
    let task = match compile_bomb_task(&instance) {
        Ok(t) => t,
        Err(e) => return fail(format!("compiling the task: {e}")),
    };
    let starts = AgentStart::initial(&instance.agents);
    let options = SolverOptions {
        epsilon: args.epsilon,
        collision_checking: args.collisions,
        timeout: args.timeout.map(Duration::from_secs_f64),
        max_expansions: None,
        parallel_roots: args.parallel_roots,
    };
    let clock = Instant::now();
    let outcome = match solve_task(
        &instance.graph,
        &starts,
        &task,
        Chunking::Bombs(args.bombs_per_subtask),
        args.heuristic,
        args.seed,
        &instance,
        args.solver,
        &options,
    ) {
        Ok(outcome) => outcome,
        Err(e) => return fail(format!("solving: {e}")),
    };
    let wall = clock.elapsed().as_secs_f64();

    let solution = SolutionFile {
        solver: args.solver,
        status: outcome.status,
        epsilon: args.epsilon,
        return_value: outcome.return_value,
        max_return: outcome.max_return,
        goal_times: outcome.goal_times.clone(),
        rows: outcome.trace.rows.clone(),
    };
    let out = resolve_out(&args.out);
    if let Err(e) = std::fs::write(&out, write_solution(&solution)) {
        return fail(format!("writing {}: {e}", out.display()));
    }

    // Verify the written file independently: read it back, replay its
    // trace on the oracle, and demand the exact reported return.
    let written = match std::fs::read_to_string(&out) {
        Ok(text) => text,
        Err(e) => return fail(format!("re-reading {}: {e}", out.display())),
    };
    let reparsed = match parse_solution(&written) {
        Ok(s) => s,
        Err(e) => return fail(format!("re-parsing {}: {e}", out.display())),
    };
    let replayed = match instance.rollout(&reparsed.rows) {
        Ok(report) => report.ret,
        Err(e) => return fail(format!("replaying the written solution: {e}")),
    };
    if replayed != outcome.return_value {
        return fail(format!(
            "written solution replays to {replayed} but the solver reported {}",
            outcome.return_value
        ));
    }

    let bombs_per_region = instance.bombs.len() / instance.graph.region_count().max(1);
    let record = TrialRecord {
        seed: args.seed,
        solver: args.solver,
        bombs_per_region,
        bombs_per_subtask: args.bombs_per_subtask,
        seconds_per_timestep: instance.seconds_per_timestep,
        heuristic: args.heuristic,
        epsilon: args.epsilon,
        outcome: TrialOutcome::Finished(outcome.status),
        return_value: outcome.return_value,
        max_return: outcome.max_return,
        optimality_ratio: if outcome.max_return > 0.0 {
            outcome.return_value / outcome.max_return
        } else {
            1.0
        },
        wall_time_seconds: wall,
        nodes_expanded: outcome.telemetry.nodes_expanded,
        roots_evaluated: outcome.telemetry.roots_evaluated,
    };
    println!("{}", tapf_ptc::bench::CSV_HEADER);
    println!("{}", csv_line(&record));
    eprintln!("wrote {}", out.display());
    status_exit(outcome.status)
}

fn cmd_bench(args: BenchArgs) -> ExitCode {
    if args.trials == 0 {
        return fail("trials must be at least 1");
    }
    if args.bombs_per_region.is_empty()
        || args.bombs_per_subtask.is_empty()
        || args.seconds_per_timestep.is_empty()
    {
        return fail("every sweep axis needs at least one value");
    }
    let mut config = SweepConfig {
        bombs_per_region: args.bombs_per_region,
        bombs_per_subtask: args.bombs_per_subtask,
        seconds_per_timestep: args.seconds_per_timestep,
        trials: args.trials,
        timeout: Duration::from_secs_f64(args.timeout),
        solvers: match args.solver {
            Some(solver) => vec![solver],
            None => vec![SolverKind::CbsTaPtc, SolverKind::CbsTa],
        },
        heuristic: args.heuristic,
        epsilon: args.epsilon,
        seed: args.seed,
        ..SweepConfig::desk_default()
    };
    config.base.regions = args.regions;
    config.base.nodes_per_region = args.nodes_per_region;
    config.base.agent_count = args.agents;
    config.base.mission_length_seconds = args.mission_seconds;

    let progress = args.progress;
    let records = run_sweep(&config, |record| {
        if progress {
            eprintln!("{}", csv_line(record));
        }
    });
    let out = resolve_out(&args.out);
    if let Err(e) = std::fs::write(&out, render_csv(&records)) {
        return fail(format!("writing {}: {e}", out.display()));
    }
    print!("{}", render_aggregate_table(&aggregate(&records)));
    eprintln!("wrote {} trial records to {}", records.len(), out.display());
    ExitCode::SUCCESS
}

/// Derived timings and rule violations for a replayed trace.
fn replay_violations(task: &Task, report: &RolloutReport, times: &[(GoalId, u32, u32)]) -> Vec<String> {
    let value = |goal: GoalId, anchor: Anchor| {
        times
            .iter()
            .find(|&&(g, _, _)| g == goal)
            .map(|&(_, mu, tau)| match anchor {
                Anchor::Execution => mu,
                Anchor::Completion => tau,
            })
    };
    let mut violations = Vec::new();
    for c in &task.abs_constraints {
        if let Some(t) = value(c.goal, c.anchor) {
            if t < c.t_lower || t > c.t_upper {
                violations.push(format!(
                    "goal {} at timestep {t} outside [{}, {}]",
                    c.goal, c.t_lower, c.t_upper
                ));
            }
        }
    }
    for c in &task.prec_constraints {
        if let (Some(a), Some(b)) = (value(c.earlier.0, c.earlier.1), value(c.later.0, c.later.1)) {
            if a >= b {
                violations.push(format!(
                    "goal {} at {a} does not precede goal {} at {b}",
                    c.earlier.0, c.later.0
                ));
            }
        }
    }
    for c in &task.inter_constraints {
        if let (Some(a), Some(b)) = (value(c.from.0, c.from.1), value(c.to.0, c.to.1)) {
            if i64::from(b) - i64::from(a) > c.t_inter {
                violations.push(format!(
                    "goals {} and {} are {} timesteps apart, limit {}",
                    c.from.0,
                    c.to.0,
                    i64::from(b) - i64::from(a),
                    c.t_inter
                ));
            }
        }
    }
    for e in &report.explosions {
        violations.push(format!("bomb {} exploded at timestep {}", e.bomb, e.timestep));
    }
    violations
}

fn cmd_replay(args: ReplayArgs) -> ExitCode {
    let instance = match read_instance(&args.instance) {
        Ok(i) => i,
        Err(e) => return fail(e),
    };
    let solution_text = match std::fs::read_to_string(&args.solution) {
        Ok(t) => t,
        Err(e) => return fail(format!("reading {}: {e}", args.solution.display())),
    };
    let solution = match parse_solution(&solution_text) {
        Ok(s) => s,
        Err(e) => return fail(format!("{}: {e}", args.solution.display())),
    };
    let task = match compile_bomb_task(&instance) {
        Ok(t) => t,
        Err(e) => return fail(format!("compiling the task: {e}")),
    };
    let report = match instance.rollout(&solution.rows) {
        Ok(r) => r,
        Err(e) => return fail(format!("replaying: {e}")),
    };

    // Goal timings derived from the trace itself, via the cut log.
    let mut times: Vec<(GoalId, u32, u32)> = Vec::new();
    for cut in &report.cuts {
        let goal = task
            .goals
            .iter()
            .find(|g| g.bomb.map(|b| (b.bomb, b.position)) == Some((cut.bomb, cut.position)));
        if let Some(goal) = goal {
            times.push((goal.id, cut.mu, cut.tau));
        }
    }
    times.sort_by_key(|&(g, _, _)| g);

    println!("replayed {} timesteps", report.end_timestep);
    for cut in &report.cuts {
        println!(
            "  t={} agent {} cuts bomb {} wire {} (complete {})",
            cut.mu, cut.agent, cut.bomb, cut.position, cut.tau
        );
    }
    for e in &report.explosions {
        println!("  t={} bomb {} explodes", e.timestep, e.bomb);
    }
    for &(goal, mu, tau) in &times {
        println!("  goal {goal} executed {mu} completed {tau}");
    }
    println!("return {}", report.ret);

    let violations = replay_violations(&task, &report, &times);
    for v in &violations {
        println!("violation: {v}");
    }
    let matches = report.ret == solution.return_value;
    if !matches {
        println!(
            "verdict: return mismatch (file says {}, replay says {})",
            solution.return_value, report.ret
        );
        return ExitCode::from(1);
    }
    if violations.is_empty() {
        println!("verdict: valid, return matches the file");
        ExitCode::SUCCESS
    } else {
        println!("verdict: return matches but {} violation(s) found", violations.len());
        ExitCode::from(1)
    }
}
