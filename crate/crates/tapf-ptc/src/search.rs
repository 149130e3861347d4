//! High-level search over the constraint tree. Roots enumerate every
//! capability-valid assignment and score it by rolling the planned paths
//! through the episode simulator; the expansion loop pops the highest-return
//! node, branches on its top-priority conflict, prunes children whose bound
//! sets admit no schedule, and replans only the constrained agent. The
//! vertex-constraint-only baseline shares the framework but reacts to
//! explosion events instead of temporal conflicts.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::feasibility::{build_system, check_feasible, ScheduleVarId, TemporalBound};
use crate::graph::{VertexId, WorldGraph};
use crate::mla::{plan_solution, sum_of_path_costs, PathAction, PathConstraintSet, TimedPath};
use crate::oracle::{
    AgentAction, Color, Explosion, InstanceSpec, OracleError, TeamTrace,
};
use crate::partition::{
    bind_deferred, chunk_by_beta, chunk_by_bombs, goal_group_count, heuristic_sort,
    split_constraints, HeuristicKind, PartitionError,
};
use crate::task::{
    enumerate_assignments, AgentStart, Anchor, Assignment, GoalId, Task, MAX_ENUMERATION_GOALS,
};

/// Slack for comparing oracle returns, which are exact sums of small
/// integers; this only absorbs the epsilon multiplication.
const RETURN_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("epsilon must lie in (0, 1], got {0}")]
    BadEpsilon(f64),
    #[error("subtask has {0} goals, more than the {MAX_ENUMERATION_GOALS} assignment enumeration supports")]
    TooManyGoals(usize),
    #[error("candidate solution was rejected by the oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Accept a solution once its return reaches epsilon times the best
    /// attainable return; 1.0 demands the maximum.
    pub epsilon: f64,
    /// Whether vertex and edge conflicts between agents are detected and
    /// branched on. The benchmark environment ignores collisions, so this
    /// defaults to off.
    pub collision_checking: bool,
    /// Wall-clock budget for one solve call.
    pub timeout: Option<Duration>,
    /// Cap on constraint tree expansions before giving up with the
    /// incumbent.
    pub max_expansions: Option<u64>,
    /// Worker threads for root evaluation; 1 evaluates serially. Results
    /// are merged in enumeration order either way.
    pub parallel_roots: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            epsilon: 1.0,
            collision_checking: false,
            timeout: None,
            max_expansions: None,
            parallel_roots: 1,
        }
    }
}

/// A violated constraint observed in a candidate solution, ordered by
/// resolution priority: absolute range, then precedence, then inter-goal,
/// then collisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conflict {
    /// An anchor timestep fell outside its absolute range.
    AbsRange {
        goal: GoalId,
        anchor: Anchor,
        observed: u32,
        t_lower: u32,
        t_upper: u32,
    },
    /// The earlier goal's anchor failed to strictly precede the later one's.
    Precedence {
        earlier: (GoalId, Anchor),
        later: (GoalId, Anchor),
        observed_earlier: u32,
        observed_later: u32,
    },
    /// anchor(to) ran more than t_inter timesteps after anchor(from).
    InterGoal {
        from: (GoalId, Anchor),
        to: (GoalId, Anchor),
        t_inter: i64,
        observed_from: u32,
        observed_to: u32,
    },
    /// Two agents occupied one vertex at one timestep.
    Vertex {
        agents: (usize, usize),
        vertex: VertexId,
        timestep: u32,
    },
    /// Two agents swapped along one edge between t and t + 1.
    Edge {
        agents: (usize, usize),
        from: VertexId,
        to: VertexId,
        timestep: u32,
    },
}

impl Conflict {
    /// Resolution priority; lower ranks resolve first. Vertex and edge
    /// conflicts share the last rank.
    pub fn kind_rank(&self) -> u8 {
        match self {
            Conflict::AbsRange { .. } => 0,
            Conflict::Precedence { .. } => 1,
            Conflict::InterGoal { .. } => 2,
            Conflict::Vertex { .. } | Conflict::Edge { .. } => 3,
        }
    }

    /// The timestep at which the violation is observed, used to order
    /// conflicts of equal rank.
    pub fn violation_time(&self) -> u32 {
        match *self {
            Conflict::AbsRange { observed, .. } => observed,
            Conflict::Precedence { observed_later, .. } => observed_later,
            Conflict::InterGoal { observed_to, .. } => observed_to,
            Conflict::Vertex { timestep, .. } | Conflict::Edge { timestep, .. } => timestep,
        }
    }
}

/// One constraint added to a child node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintDelta {
    Bound(TemporalBound),
    ForbidVertex { vertex: VertexId, timestep: u32 },
    ForbidEdge { from: VertexId, to: VertexId, timestep: u32 },
}

/// A child node recipe: the agent to replan and the constraints to add.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub agent: usize,
    pub deltas: Vec<ConstraintDelta>,
}

/// One constraint tree node.
#[derive(Debug, Clone)]
pub struct CTNode {
    /// Per-agent path constraints the low level must respect.
    pub constraint_sets: Vec<PathConstraintSet>,
    /// Accumulated temporal bounds, kept flat for the feasibility check.
    pub bounds: Vec<TemporalBound>,
    pub assignment: Assignment,
    pub solution: Vec<TimedPath>,
    pub cost: u64,
    pub return_value: f64,
    pub conflicts: Vec<Conflict>,
    /// Explosions seen when this node's solution was rolled out; drives the
    /// baseline's branching.
    pub explosions: Vec<Explosion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    BestEffort,
    Unsolvable,
    Timeout,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::BestEffort => "best-effort",
            SolveStatus::Unsolvable => "unsolvable",
            SolveStatus::Timeout => "timeout",
        }
    }

    pub fn from_name(name: &str) -> Option<SolveStatus> {
        match name {
            "optimal" => Some(SolveStatus::Optimal),
            "best-effort" => Some(SolveStatus::BestEffort),
            "unsolvable" => Some(SolveStatus::Unsolvable),
            "timeout" => Some(SolveStatus::Timeout),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Telemetry {
    pub nodes_expanded: u64,
    /// Children attempted, before pruning.
    pub nodes_generated: u64,
    /// Children (or roots) dropped by the feasibility check, a failed
    /// replan, or a no-progress constraint.
    pub nodes_pruned: u64,
    pub roots_evaluated: u64,
    pub wall_time_seconds: f64,
}

impl Telemetry {
    fn absorb(&mut self, other: &Telemetry) {
        self.nodes_expanded += other.nodes_expanded;
        self.nodes_generated += other.nodes_generated;
        self.nodes_pruned += other.nodes_pruned;
        self.roots_evaluated += other.roots_evaluated;
        self.wall_time_seconds += other.wall_time_seconds;
    }
}

/// Return value of a popped node and whether it was a root, recorded in pop
/// order. Diagnostic output; the best-first tests key on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopRecord {
    pub return_value: f64,
    pub is_root: bool,
}

#[derive(Debug, Clone)]
pub struct SubtaskOutcome {
    /// One path per agent; stationary paths when nothing was assignable.
    pub solution: Vec<TimedPath>,
    pub assignment: Option<Assignment>,
    pub return_value: f64,
    /// Best return attainable for the past plus this subtask.
    pub target_return: f64,
    pub status: SolveStatus,
    pub telemetry: Telemetry,
    pub pop_trace: Vec<PopRecord>,
}

/// Converts planned paths into per-agent action rows that continue each
/// agent's past rows. Rows are padded with waits up to each path's
/// departure so actions land on their absolute timesteps.
pub fn segment_trace(task: &Task, solution: &[TimedPath], past_len: &[u32]) -> TeamTrace {
    let rows = solution
        .iter()
        .zip(past_len)
        .map(|(path, &from)| {
            debug_assert!(path.depart >= from, "path departs before its past ends");
            let mut row = vec![AgentAction::Wait; path.depart.saturating_sub(from) as usize];
            for action in &path.actions {
                row.push(match *action {
                    PathAction::Move(v) => AgentAction::Move(v),
                    PathAction::Wait => AgentAction::Wait,
                    PathAction::Execute(goal) => {
                        let tag = task.goal(goal).expect("path executes a task goal").action;
                        let color = Color::from_action_tag(tag)
                            .expect("oracle rollout requires color-tagged goals");
                        AgentAction::Cut(color)
                    }
                });
            }
            row
        })
        .collect();
    TeamTrace { rows }
}

/// Anchor timesteps per goal, read off the planned paths.
fn anchor_times(solution: &[TimedPath]) -> BTreeMap<GoalId, (u32, u32)> {
    let mut times = BTreeMap::new();
    for path in solution {
        for &(goal, mu, tau) in &path.goal_times {
            times.insert(goal, (mu, tau));
        }
    }
    times
}

fn anchor_value(times: &BTreeMap<GoalId, (u32, u32)>, goal: GoalId, anchor: Anchor) -> Option<u32> {
    times.get(&goal).map(|&(mu, tau)| match anchor {
        Anchor::Execution => mu,
        Anchor::Completion => tau,
    })
}

/// Lists every violated constraint in the solution, sorted by kind priority
/// and then by the violating timestep. Vertex and edge conflicts are only
/// reported when collision checking is on, and only the earliest event per
/// agent pair.
pub fn detect_conflicts(solution: &[TimedPath], task: &Task, options: &SolverOptions) -> Vec<Conflict> {
    let times = anchor_times(solution);
    let mut conflicts = Vec::new();

    for c in &task.abs_constraints {
        if let Some(observed) = anchor_value(&times, c.goal, c.anchor) {
            if observed < c.t_lower || observed > c.t_upper {
                conflicts.push(Conflict::AbsRange {
                    goal: c.goal,
                    anchor: c.anchor,
                    observed,
                    t_lower: c.t_lower,
                    t_upper: c.t_upper,
                });
            }
        }
    }
    for c in &task.prec_constraints {
        let earlier = anchor_value(&times, c.earlier.0, c.earlier.1);
        let later = anchor_value(&times, c.later.0, c.later.1);
        if let (Some(a), Some(b)) = (earlier, later) {
            if a >= b {
                conflicts.push(Conflict::Precedence {
                    earlier: c.earlier,
                    later: c.later,
                    observed_earlier: a,
                    observed_later: b,
                });
            }
        }
    }
    for c in &task.inter_constraints {
        let from = anchor_value(&times, c.from.0, c.from.1);
        let to = anchor_value(&times, c.to.0, c.to.1);
        if let (Some(a), Some(b)) = (from, to) {
            if b as i64 - a as i64 > c.t_inter {
                conflicts.push(Conflict::InterGoal {
                    from: c.from,
                    to: c.to,
                    t_inter: c.t_inter,
                    observed_from: a,
                    observed_to: b,
                });
            }
        }
    }

    if options.collision_checking {
        conflicts.extend(detect_collisions(solution));
    }

    conflicts.sort_by_key(|c| (c.kind_rank(), c.violation_time()));
    conflicts
}

/// Earliest vertex or edge conflict per agent pair. Agents occupy their
/// final vertex after their path ends.
fn detect_collisions(solution: &[TimedPath]) -> Vec<Conflict> {
    let mut collisions = Vec::new();
    let horizon = solution.iter().map(|p| p.end_time()).max().unwrap_or(0);
    for i in 0..solution.len() {
        for j in i + 1..solution.len() {
            'pair: for t in 0..=horizon {
                let (ai, aj) = (solution[i].vertex_at(t), solution[j].vertex_at(t));
                if ai == aj {
                    collisions.push(Conflict::Vertex {
                        agents: (i, j),
                        vertex: ai,
                        timestep: t,
                    });
                    break 'pair;
                }
                if t < horizon {
                    let (bi, bj) = (solution[i].vertex_at(t + 1), solution[j].vertex_at(t + 1));
                    if ai == bj && aj == bi && ai != bi {
                        collisions.push(Conflict::Edge {
                            agents: (i, j),
                            from: ai,
                            to: bi,
                            timestep: t,
                        });
                        break 'pair;
                    }
                }
            }
        }
    }
    collisions
}

/// Expands a conflict into child recipes. Children whose bounds would be
/// negative are omitted. The inter-goal split follows the published rule
/// and the precedence and absolute splits mirror it.
pub fn resolve_conflict(conflict: &Conflict, node: &CTNode) -> Vec<Branch> {
    let agent_of = |goal: GoalId| node.assignment.agent_of(goal);
    let var = |goal: GoalId, anchor: Anchor| ScheduleVarId { goal, anchor };
    let mut branches = Vec::new();

    match *conflict {
        Conflict::InterGoal {
            from,
            to,
            t_inter,
            observed_to,
            ..
        } => {
            let t_prime = observed_to as i64;
            let split = t_prime - t_inter;
            if let Some(agent) = agent_of(from.0) {
                if split >= 0 {
                    branches.push(Branch {
                        agent,
                        deltas: vec![ConstraintDelta::Bound(TemporalBound::AtLeast(
                            var(from.0, from.1),
                            split as u32,
                        ))],
                    });
                }
            }
            if let Some(agent) = agent_of(to.0) {
                if split >= 1 && t_prime >= 1 {
                    branches.push(Branch {
                        agent,
                        deltas: vec![
                            ConstraintDelta::Bound(TemporalBound::AtMost(
                                var(from.0, from.1),
                                (split - 1) as u32,
                            )),
                            ConstraintDelta::Bound(TemporalBound::AtMost(
                                var(to.0, to.1),
                                (t_prime - 1) as u32,
                            )),
                        ],
                    });
                }
            }
        }
        Conflict::Precedence {
            earlier,
            later,
            observed_later,
            ..
        } => {
            let t_prime = observed_later;
            if let Some(agent) = agent_of(earlier.0) {
                if t_prime >= 1 {
                    branches.push(Branch {
                        agent,
                        deltas: vec![ConstraintDelta::Bound(TemporalBound::AtMost(
                            var(earlier.0, earlier.1),
                            t_prime - 1,
                        ))],
                    });
                }
            }
            if let Some(agent) = agent_of(later.0) {
                branches.push(Branch {
                    agent,
                    deltas: vec![
                        ConstraintDelta::Bound(TemporalBound::AtLeast(
                            var(earlier.0, earlier.1),
                            t_prime,
                        )),
                        ConstraintDelta::Bound(TemporalBound::AtLeast(
                            var(later.0, later.1),
                            t_prime + 1,
                        )),
                    ],
                });
            }
        }
        Conflict::AbsRange {
            goal,
            anchor,
            observed,
            t_lower,
            t_upper,
        } => {
            if let Some(agent) = agent_of(goal) {
                let bound = if observed < t_lower {
                    TemporalBound::AtLeast(var(goal, anchor), t_lower)
                } else {
                    TemporalBound::AtMost(var(goal, anchor), t_upper)
                };
                branches.push(Branch {
                    agent,
                    deltas: vec![ConstraintDelta::Bound(bound)],
                });
            }
        }
        Conflict::Vertex {
            agents,
            vertex,
            timestep,
        } => {
            for agent in [agents.0, agents.1] {
                branches.push(Branch {
                    agent,
                    deltas: vec![ConstraintDelta::ForbidVertex { vertex, timestep }],
                });
            }
        }
        Conflict::Edge {
            agents,
            from,
            to,
            timestep,
        } => {
            branches.push(Branch {
                agent: agents.0,
                deltas: vec![ConstraintDelta::ForbidEdge { from, to, timestep }],
            });
            branches.push(Branch {
                agent: agents.1,
                deltas: vec![ConstraintDelta::ForbidEdge {
                    from: to,
                    to: from,
                    timestep,
                }],
            });
        }
    }
    branches
}

/// OPEN is ordered by return descending, then lower path cost, fewer
/// conflicts, and finally insertion order.
struct OpenEntry {
    return_value: f64,
    cost: u64,
    conflict_count: usize,
    seq: u64,
    is_root: bool,
    node: CTNode,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.return_value
            .total_cmp(&other.return_value)
            .then_with(|| other.cost.cmp(&self.cost))
            .then_with(|| other.conflict_count.cmp(&self.conflict_count))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct SearchContext<'a> {
    graph: &'a WorldGraph,
    starts: &'a [AgentStart],
    subtask: &'a Task,
    past: &'a [TeamTrace],
    oracle: &'a InstanceSpec,
    options: &'a SolverOptions,
    past_len: Vec<u32>,
    target: f64,
    deadline: Option<Instant>,
}

impl SearchContext<'_> {
    fn out_of_time(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn accepts(&self, node: &CTNode) -> bool {
        node.return_value + RETURN_SLACK >= self.options.epsilon * self.target
            && !node
                .conflicts
                .iter()
                .any(|c| matches!(c, Conflict::Vertex { .. } | Conflict::Edge { .. }))
    }

    /// Scores a solution and recomputes its conflict list.
    fn evaluate(
        &self,
        assignment: Assignment,
        constraint_sets: Vec<PathConstraintSet>,
        bounds: Vec<TemporalBound>,
        solution: Vec<TimedPath>,
    ) -> Result<CTNode, SolverError> {
        let trace = segment_trace(self.subtask, &solution, &self.past_len);
        let report = self.oracle.rollout_report(self.past, &trace)?;
        let conflicts = detect_conflicts(&solution, self.subtask, self.options);
        debug_assert!(
            report.ret <= self.target + RETURN_SLACK,
            "return {} exceeds the subtask target {}",
            report.ret,
            self.target
        );
        Ok(CTNode {
            cost: sum_of_path_costs(&solution),
            return_value: report.ret,
            explosions: report.explosions,
            constraint_sets,
            bounds,
            assignment,
            solution,
            conflicts,
        })
    }
}

/// Best return attainable by the past solutions plus this subtask: the past
/// rollout's return plus full reward for every bomb the subtask touches.
fn subtask_target(oracle: &InstanceSpec, subtask: &Task, past: &[TeamTrace]) -> Result<f64, SolverError> {
    let base = if past.iter().all(|t| t.rows.iter().all(|r| r.is_empty())) {
        0.0
    } else {
        oracle.rollout_return(past, &TeamTrace::empty(oracle.agents.len()))?
    };
    let bombs: BTreeSet<usize> = subtask
        .goals
        .iter()
        .filter_map(|g| g.bomb.map(|b| b.bomb))
        .collect();
    let reward: u32 = bombs.iter().map(|&b| oracle.bombs[b].reward()).sum();
    Ok(base + reward as f64)
}

fn stationary_outcome(
    ctx: &SearchContext,
    status: SolveStatus,
    telemetry: Telemetry,
    pop_trace: Vec<PopRecord>,
) -> Result<SubtaskOutcome, SolverError> {
    let solution: Vec<TimedPath> = ctx.starts.iter().map(|&s| TimedPath::stationary(s)).collect();
    let trace = segment_trace(ctx.subtask, &solution, &ctx.past_len);
    let return_value = ctx.oracle.rollout_return(ctx.past, &trace)?;
    Ok(SubtaskOutcome {
        solution,
        assignment: None,
        return_value,
        target_return: ctx.target,
        status,
        telemetry,
        pop_trace,
    })
}

/// Whether this subtask is the entire task, which is the mode in which an
/// exhausted OPEN proves no full-return solution exists.
fn covers_whole_task(oracle: &InstanceSpec, subtask: &Task, past: &[TeamTrace]) -> bool {
    let total: usize = oracle.bombs.iter().map(|b| b.sequence.len()).sum();
    past.iter().all(|t| t.rows.iter().all(|r| r.is_empty()))
        && subtask.goal_count() == total
}

fn root_constraint_sets(n: usize) -> Vec<PathConstraintSet> {
    vec![PathConstraintSet::new(); n]
}

enum RootEval {
    Infeasible,
    NoPath,
    Deadline,
    Node(Box<CTNode>),
}

fn eval_root(ctx: &SearchContext, assignment: &Assignment) -> Result<RootEval, SolverError> {
    if ctx.out_of_time() {
        return Ok(RootEval::Deadline);
    }
    let n = ctx.starts.len();
    let system = build_system(ctx.subtask, assignment, &[], ctx.graph, ctx.starts);
    if !check_feasible(&system) {
        return Ok(RootEval::Infeasible);
    }
    let sets = root_constraint_sets(n);
    let Some(solution) = plan_solution(
        ctx.graph,
        ctx.starts,
        ctx.subtask,
        assignment,
        &sets,
        ctx.subtask.horizon,
        None,
        None,
    ) else {
        return Ok(RootEval::NoPath);
    };
    let node = ctx.evaluate(assignment.clone(), sets, Vec::new(), solution)?;
    Ok(RootEval::Node(Box::new(node)))
}

/// Evaluates all candidate roots, serially or fanned out over worker
/// threads, preserving enumeration order in the result.
fn eval_roots(ctx: &SearchContext, candidates: &[Assignment]) -> Result<Vec<RootEval>, SolverError> {
    let workers = ctx.options.parallel_roots.max(1).min(candidates.len().max(1));
    if workers <= 1 {
        return candidates.iter().map(|a| eval_root(ctx, a)).collect();
    }
    let chunk_size = candidates.len().div_ceil(workers);
    let mut results: Vec<Result<Vec<RootEval>, SolverError>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = candidates
            .chunks(chunk_size)
            .map(|chunk| scope.spawn(move || chunk.iter().map(|a| eval_root(ctx, a)).collect()))
            .collect();
        for handle in handles {
            results.push(handle.join().expect("root evaluation worker panicked"));
        }
    });
    let mut merged = Vec::with_capacity(candidates.len());
    for chunk in results {
        merged.extend(chunk?);
    }
    Ok(merged)
}

/// Solves one subtask with return-ordered constraint tree search over all
/// assignments, resolving absolute, precedence, inter-goal, and (optionally)
/// collision conflicts.
pub fn solve_subtask(
    graph: &WorldGraph,
    starts: &[AgentStart],
    subtask: &Task,
    past: &[TeamTrace],
    oracle: &InstanceSpec,
    options: &SolverOptions,
) -> Result<SubtaskOutcome, SolverError> {
    solve_inner(graph, starts, subtask, past, oracle, options, false)
}

/// The vertex-constraint-only baseline. Temporal structure is invisible to
/// it; when a rollout explodes a bomb of this subtask it branches one child
/// per agent, forbidding that agent's occupied vertex at the explosion
/// timestep.
pub fn solve_cbs_ta_baseline(
    graph: &WorldGraph,
    starts: &[AgentStart],
    subtask: &Task,
    past: &[TeamTrace],
    oracle: &InstanceSpec,
    options: &SolverOptions,
) -> Result<SubtaskOutcome, SolverError> {
    solve_inner(graph, starts, subtask, past, oracle, options, true)
}

fn solve_inner(
    graph: &WorldGraph,
    starts: &[AgentStart],
    subtask: &Task,
    past: &[TeamTrace],
    oracle: &InstanceSpec,
    options: &SolverOptions,
    baseline: bool,
) -> Result<SubtaskOutcome, SolverError> {
    if !(options.epsilon > 0.0 && options.epsilon <= 1.0) {
        return Err(SolverError::BadEpsilon(options.epsilon));
    }
    if subtask.goal_count() > MAX_ENUMERATION_GOALS {
        return Err(SolverError::TooManyGoals(subtask.goal_count()));
    }
    let clock = Instant::now();
    let n = starts.len();
    debug_assert_eq!(n, oracle.agents.len());
    let past_len: Vec<u32> = (0..n)
        .map(|i| past.iter().map(|t| t.rows[i].len() as u32).sum())
        .collect();
    let ctx = SearchContext {
        graph,
        starts,
        subtask,
        past,
        oracle,
        options,
        past_len,
        target: subtask_target(oracle, subtask, past)?,
        deadline: options.timeout.map(|d| clock + d),
    };
    let whole_task = covers_whole_task(oracle, subtask, past);
    let subtask_bombs: BTreeSet<usize> = subtask
        .goals
        .iter()
        .filter_map(|g| g.bomb.map(|b| b.bomb))
        .collect();

    let mut telemetry = Telemetry::default();
    let mut pop_trace = Vec::new();
    let mut open: BinaryHeap<OpenEntry> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut incumbent: Option<CTNode> = None;
    let mut seen_assignments: HashSet<Vec<usize>> = HashSet::new();

    let finish = |node: CTNode,
                  status: SolveStatus,
                  mut telemetry: Telemetry,
                  pop_trace: Vec<PopRecord>,
                  target: f64| {
        telemetry.wall_time_seconds = clock.elapsed().as_secs_f64();
        if status == SolveStatus::Optimal
            && node.return_value + RETURN_SLACK >= target
            && !(node.conflicts.is_empty() || !node.explosions.is_empty())
        {
            eprintln!("DIAG full-return node with conflicts:");
            eprintln!("  return={} target={}", node.return_value, target);
            eprintln!("  conflicts={:?}", node.conflicts);
            eprintln!("  explosions={:?}", node.explosions);
            for (agent, path) in node.solution.iter().enumerate() {
                eprintln!("  agent {agent} goal_times={:?}", path.goal_times);
                eprintln!("  agent {agent} depart={} occupied={:?}", path.depart, path.occupied);
            }
        }
        SubtaskOutcome {
            return_value: node.return_value,
            target_return: target,
            assignment: Some(node.assignment.clone()),
            solution: node.solution,
            status,
            telemetry,
            pop_trace,
        }
    };

    let candidates: Vec<Assignment> = enumerate_assignments(&subtask.goals, &oracle.agents).collect();
    let evals = eval_roots(&ctx, &candidates)?;
    for (assignment, eval) in candidates.into_iter().zip(evals) {
        telemetry.roots_evaluated += 1;
        let fingerprint: Vec<usize> = assignment.pairs().iter().map(|&(_, a)| a).collect();
        if !seen_assignments.insert(fingerprint) {
            continue;
        }
        match eval {
            RootEval::Deadline => {
                telemetry.wall_time_seconds = clock.elapsed().as_secs_f64();
                return match incumbent {
                    Some(node) => {
                        Ok(finish(node, SolveStatus::Timeout, telemetry, pop_trace, ctx.target))
                    }
                    None => stationary_outcome(&ctx, SolveStatus::Timeout, telemetry, pop_trace),
                };
            }
            RootEval::Infeasible | RootEval::NoPath => {
                telemetry.nodes_pruned += 1;
            }
            RootEval::Node(node) => {
                let node = *node;
                if incumbent
                    .as_ref()
                    .is_none_or(|best| node.return_value > best.return_value)
                {
                    incumbent = Some(node.clone());
                }
                if ctx.accepts(&node) {
                    return Ok(finish(node, SolveStatus::Optimal, telemetry, pop_trace, ctx.target));
                }
                open.push(OpenEntry {
                    return_value: node.return_value,
                    cost: node.cost,
                    conflict_count: node.conflicts.len(),
                    seq,
                    is_root: true,
                    node,
                });
                seq += 1;
            }
        }
    }

    while let Some(entry) = open.pop() {
        if ctx.out_of_time() {
            let node = incumbent.expect("OPEN was nonempty, so an incumbent exists");
            return Ok(finish(node, SolveStatus::Timeout, telemetry, pop_trace, ctx.target));
        }
        pop_trace.push(PopRecord {
            return_value: entry.return_value,
            is_root: entry.is_root,
        });
        if ctx.accepts(&entry.node) {
            return Ok(finish(entry.node, SolveStatus::Optimal, telemetry, pop_trace, ctx.target));
        }
        if let Some(cap) = options.max_expansions {
            if telemetry.nodes_expanded >= cap {
                let node = incumbent.expect("OPEN was nonempty, so an incumbent exists");
                return Ok(finish(node, SolveStatus::BestEffort, telemetry, pop_trace, ctx.target));
            }
        }
        telemetry.nodes_expanded += 1;

        let branches = if baseline {
            baseline_branches(&entry.node, &subtask_bombs)
        } else {
            match entry.node.conflicts.first() {
                Some(conflict) => resolve_conflict(conflict, &entry.node),
                None => Vec::new(),
            }
        };

        for branch in branches {
            telemetry.nodes_generated += 1;
            let mut sets = entry.node.constraint_sets.clone();
            let mut bounds = entry.node.bounds.clone();
            let mut progressed = true;
            for delta in &branch.deltas {
                match *delta {
                    ConstraintDelta::Bound(bound) => {
                        bounds.push(bound);
                        let owner = entry
                            .node
                            .assignment
                            .agent_of(bound.var().goal)
                            .expect("bounds reference assigned goals");
                        match bound {
                            TemporalBound::AtLeast(v, t) => {
                                sets[owner].bound_at_least(v.goal, v.anchor, t)
                            }
                            TemporalBound::AtMost(v, t) => {
                                sets[owner].bound_at_most(v.goal, v.anchor, t)
                            }
                        }
                    }
                    ConstraintDelta::ForbidVertex { vertex, timestep } => {
                        if !sets[branch.agent].vertex_allowed(vertex, timestep) {
                            progressed = false;
                            break;
                        }
                        sets[branch.agent].forbid_vertex(vertex, timestep);
                    }
                    ConstraintDelta::ForbidEdge { from, to, timestep } => {
                        if !sets[branch.agent].edge_allowed(from, to, timestep) {
                            progressed = false;
                            break;
                        }
                        sets[branch.agent].forbid_edge(from, to, timestep);
                    }
                }
            }
            if !progressed {
                telemetry.nodes_pruned += 1;
                continue;
            }
            if !baseline {
                let system = build_system(subtask, &entry.node.assignment, &bounds, graph, starts);
                if !check_feasible(&system) {
                    telemetry.nodes_pruned += 1;
                    continue;
                }
            }
            let Some(solution) = plan_solution(
                graph,
                starts,
                subtask,
                &entry.node.assignment,
                &sets,
                subtask.horizon,
                Some(&entry.node.solution),
                Some(branch.agent),
            ) else {
                telemetry.nodes_pruned += 1;
                continue;
            };
            let node = ctx.evaluate(entry.node.assignment.clone(), sets, bounds, solution)?;
            if incumbent
                .as_ref()
                .is_none_or(|best| node.return_value > best.return_value)
            {
                incumbent = Some(node.clone());
            }
            open.push(OpenEntry {
                return_value: node.return_value,
                cost: node.cost,
                conflict_count: node.conflicts.len(),
                seq,
                is_root: false,
                node,
            });
            seq += 1;
        }
    }

    let status = if whole_task {
        SolveStatus::Unsolvable
    } else {
        SolveStatus::BestEffort
    };
    match incumbent {
        Some(node) => Ok(finish(node, status, telemetry, pop_trace, ctx.target)),
        None => stationary_outcome(&ctx, status, telemetry, pop_trace),
    }
}

/// The baseline's branching: the earliest among collision conflicts and
/// explosions of this subtask's bombs. An explosion spawns one child per
/// agent, each forbidding that agent's occupied vertex at the explosion
/// timestep (clamped into the agent's planning window so the constraint can
/// bite).
fn baseline_branches(node: &CTNode, subtask_bombs: &BTreeSet<usize>) -> Vec<Branch> {
    let collision = node
        .conflicts
        .iter()
        .find(|c| matches!(c, Conflict::Vertex { .. } | Conflict::Edge { .. }));
    let explosion = node
        .explosions
        .iter()
        .filter(|e| subtask_bombs.contains(&e.bomb))
        .min_by_key(|e| e.timestep);

    match (collision, explosion) {
        (Some(c), Some(e)) if c.violation_time() <= e.timestep => resolve_conflict(c, node),
        (Some(c), None) => resolve_conflict(c, node),
        (_, Some(e)) => {
            (0..node.solution.len())
                .map(|agent| {
                    let path = &node.solution[agent];
                    let t = e.timestep.min(path.end_time()).max(path.depart);
                    Branch {
                        agent,
                        deltas: vec![ConstraintDelta::ForbidVertex {
                            vertex: path.vertex_at(t),
                            timestep: t,
                        }],
                    }
                })
                .collect()
        }
        (None, None) => Vec::new(),
    }
}

/// How the full task is cut into subtasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chunking {
    /// At most this many goals per subtask.
    Beta(usize),
    /// This many bombs per subtask; goals per subtask follows from their
    /// sequence lengths.
    Bombs(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    CbsTaPtc,
    CbsTa,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::CbsTaPtc => "cbs-ta-ptc",
            SolverKind::CbsTa => "cbs-ta",
        }
    }

    pub fn from_name(name: &str) -> Option<SolverKind> {
        match name {
            "cbs-ta-ptc" => Some(SolverKind::CbsTaPtc),
            "cbs-ta" => Some(SolverKind::CbsTa),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub subtasks: Vec<SubtaskOutcome>,
    /// Combined per-agent action rows from timestep 0.
    pub trace: TeamTrace,
    /// Realized (goal, execution, completion) triples across all subtasks.
    pub goal_times: Vec<(GoalId, u32, u32)>,
    pub return_value: f64,
    pub max_return: f64,
    pub status: SolveStatus,
    pub telemetry: Telemetry,
}

/// Goals-per-subtask figure handed to the k-means heuristic. For bomb
/// chunking it is the average sequence length times the bombs per subtask.
fn effective_beta(task: &Task, chunking: Chunking) -> usize {
    match chunking {
        Chunking::Beta(beta) => beta,
        Chunking::Bombs(k) => {
            let groups = goal_group_count(task);
            if groups == 0 {
                k
            } else {
                (task.goal_count() * k).div_ceil(groups).max(1)
            }
        }
    }
}

/// A planned cut can land on a different bomb than its goal intended when
/// several bombs share a vertex and the color matches: the oracle hands the
/// cut to the first matching bomb whether the plan meant it or not. When the
/// receiving bomb belongs to a later chunk, every cut this chunk aims at its
/// own bomb feeds the interloper instead, the chunk's bomb stays live, and no
/// amount of branching inside the chunk can recover. Reports the receiving
/// bomb so the caller can merge it into the chunk and solve again with both
/// bombs planned jointly.
#[allow(clippy::too_many_arguments)]
fn cut_thief(
    bound: &Task,
    solution: &[TimedPath],
    past: &[TeamTrace],
    segment: &TeamTrace,
    oracle: &InstanceSpec,
    sorted: &Task,
    chunks: &[Vec<Vec<usize>>],
    ci: usize,
) -> Result<Option<usize>, SolverError> {
    let in_later_chunk = |bomb: usize| {
        chunks[ci + 1..].iter().flatten().any(|group| {
            sorted.goals[group[0]].bomb.map(|b| b.bomb) == Some(bomb)
        })
    };
    if !bound.goals.iter().any(|g| {
        g.bomb.is_some_and(|planned| {
            oracle
                .bombs
                .iter()
                .enumerate()
                .any(|(other, spec)| {
                    other != planned.bomb
                        && spec.vertex == oracle.bombs[planned.bomb].vertex
                        && in_later_chunk(other)
                })
        })
    }) {
        return Ok(None);
    }
    let report = oracle.rollout_report(past, segment)?;
    for (agent, path) in solution.iter().enumerate() {
        for &(goal_id, mu, _) in &path.goal_times {
            let Some(goal) = bound.goals.iter().find(|g| g.id == goal_id) else {
                continue;
            };
            let Some(planned) = goal.bomb.map(|b| b.bomb) else {
                continue;
            };
            let landed = report
                .cuts
                .iter()
                .find(|c| c.agent == agent && c.mu == mu)
                .map(|c| c.bomb)
                .or_else(|| {
                    report
                        .explosions
                        .iter()
                        .find(|e| {
                            e.timestep == mu + 1
                                && e.bomb != planned
                                && oracle.bombs[e.bomb].vertex == oracle.bombs[planned].vertex
                        })
                        .map(|e| e.bomb)
                });
            if let Some(landed) = landed {
                if landed != planned && in_later_chunk(landed) {
                    return Ok(Some(landed));
                }
            }
        }
    }
    Ok(None)
}

/// Sorts, partitions, and solves the whole task, threading each subtask's
/// terminal agent states and committed paths into the next. With a single
/// subtask the search is complete and optimal; with more it is best-effort
/// by construction.
#[allow(clippy::too_many_arguments)]
pub fn solve_task(
    graph: &WorldGraph,
    initial: &[AgentStart],
    task: &Task,
    chunking: Chunking,
    heuristic: HeuristicKind,
    seed: u64,
    oracle: &InstanceSpec,
    solver: SolverKind,
    options: &SolverOptions,
) -> Result<TaskOutcome, SolverError> {
    let clock = Instant::now();
    let sorted = heuristic_sort(
        graph,
        initial,
        task,
        heuristic,
        effective_beta(task, chunking),
        seed,
    );
    let mut chunks = match chunking {
        Chunking::Beta(beta) => chunk_by_beta(&sorted, beta)?,
        Chunking::Bombs(k) => chunk_by_bombs(&sorted, k)?,
    };

    let n = initial.len();
    let mut starts = initial.to_vec();
    let mut past: Vec<TeamTrace> = Vec::new();
    let mut realized: BTreeMap<GoalId, (u32, u32)> = BTreeMap::new();
    let mut goal_times = Vec::new();
    let mut outcomes: Vec<SubtaskOutcome> = Vec::new();
    let mut telemetry = Telemetry::default();
    let mut timed_out = false;

    let mut ci = 0usize;
    while ci < chunks.len() {
        let remaining = options.timeout.map(|d| d.saturating_sub(clock.elapsed()));
        if matches!(remaining, Some(d) if d.is_zero()) {
            timed_out = true;
            break;
        }
        let sub_options = SolverOptions {
            timeout: remaining,
            ..options.clone()
        };
        let specs = split_constraints(&sorted, chunks.clone());
        let bound_task = bind_deferred(&specs[ci], &realized, task.horizon);
        let outcome = match solver {
            SolverKind::CbsTaPtc => {
                solve_subtask(graph, &starts, &bound_task, &past, oracle, &sub_options)?
            }
            SolverKind::CbsTa => {
                solve_cbs_ta_baseline(graph, &starts, &bound_task, &past, oracle, &sub_options)?
            }
        };
        telemetry.absorb(&outcome.telemetry);
        let past_len: Vec<u32> = (0..n)
            .map(|i| past.iter().map(|t| t.rows[i].len() as u32).sum())
            .collect();
        let segment = segment_trace(&bound_task, &outcome.solution, &past_len);
        if let Some(thief) =
            cut_thief(&bound_task, &outcome.solution, &past, &segment, oracle, &sorted, &chunks, ci)?
        {
            let mut moved = Vec::new();
            for chunk in chunks.iter_mut().skip(ci + 1) {
                chunk.retain(|group| {
                    let stolen = sorted.goals[group[0]].bomb.map(|b| b.bomb) == Some(thief);
                    if stolen {
                        moved.push(group.clone());
                    }
                    !stolen
                });
            }
            chunks[ci].extend(moved);
            chunks.retain(|chunk| !chunk.is_empty());
            continue;
        }
        for path in &outcome.solution {
            for &(goal, mu, tau) in &path.goal_times {
                realized.insert(goal, (mu, tau));
                goal_times.push((goal, mu, tau));
            }
        }
        past.push(segment);
        for (i, path) in outcome.solution.iter().enumerate() {
            starts[i] = AgentStart {
                vertex: path.vertex_at(path.end_time()),
                depart: path.end_time(),
            };
        }
        let subtask_timed_out = outcome.status == SolveStatus::Timeout;
        outcomes.push(outcome);
        if subtask_timed_out {
            timed_out = true;
            break;
        }
        ci += 1;
    }

    let mut rows = vec![Vec::new(); n];
    for segment in &past {
        for (row, seg) in rows.iter_mut().zip(&segment.rows) {
            row.extend_from_slice(seg);
        }
    }
    let return_value = oracle.rollout(&rows)?.ret;
    let max_return = oracle.max_return();
    let status = if timed_out {
        SolveStatus::Timeout
    } else if chunks.len() == 1 && outcomes.len() == 1 {
        outcomes[0].status
    } else if return_value + RETURN_SLACK >= options.epsilon * max_return {
        SolveStatus::Optimal
    } else {
        SolveStatus::BestEffort
    };
    telemetry.wall_time_seconds = clock.elapsed().as_secs_f64();
    goal_times.sort_by_key(|&(goal, _, _)| goal);

    Ok(TaskOutcome {
        subtasks: outcomes,
        trace: TeamTrace { rows },
        goal_times,
        return_value,
        max_return,
        status,
        telemetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exhaustive::best_plan_return;
    use crate::oracle::{test_instance, BombSpec, Color};
    use crate::task::{compile_bomb_task, AgentSpec, Goal};
    use proptest::prelude::*;

    fn bomb(id: usize, vertex: usize, colors: &str, fuse_seconds: u32) -> BombSpec {
        BombSpec {
            id,
            vertex: VertexId(vertex),
            sequence: colors.chars().map(|c| Color::from_letter(c).unwrap()).collect(),
            fuse_seconds,
            countdown_seconds: fuse_seconds,
            depends_on: None,
        }
    }

    fn solve_whole(
        instance: &InstanceSpec,
        options: &SolverOptions,
    ) -> (SubtaskOutcome, Task) {
        let task = compile_bomb_task(instance).unwrap();
        let starts = AgentStart::initial(&instance.agents);
        let outcome =
            solve_subtask(&instance.graph, &starts, &task, &[], instance, options).unwrap();
        (outcome, task)
    }

    fn path_for(occupied: &[usize], goal_times: &[(usize, u32, u32)]) -> TimedPath {
        TimedPath {
            depart: 0,
            occupied: occupied.iter().map(|&v| VertexId(v)).collect(),
            actions: vec![PathAction::Wait; occupied.len() - 1],
            goal_times: goal_times
                .iter()
                .map(|&(g, mu, tau)| (GoalId(g), mu, tau))
                .collect(),
            cost: occupied.len() as u32 - 1,
        }
    }

    fn two_goal_node() -> (Task, CTNode) {
        let goals = vec![
            Goal {
                id: GoalId(0),
                vertex: VertexId(1),
                action: Color::Red.action_tag(),
                duration: 1,
                bomb: None,
            },
            Goal {
                id: GoalId(1),
                vertex: VertexId(2),
                action: Color::Blue.action_tag(),
                duration: 1,
                bomb: None,
            },
        ];
        let agents = vec![
            AgentSpec::new(0, VertexId(0), [Color::Red.action_tag()]),
            AgentSpec::new(1, VertexId(0), [Color::Blue.action_tag()]),
        ];
        let assignment = Assignment::new(&goals, &agents, &[0, 1]).unwrap();
        let task = Task {
            goals,
            abs_constraints: Vec::new(),
            inter_constraints: Vec::new(),
            prec_constraints: Vec::new(),
            horizon: 20,
        };
        let node = CTNode {
            constraint_sets: vec![PathConstraintSet::new(), PathConstraintSet::new()],
            bounds: Vec::new(),
            assignment,
            solution: Vec::new(),
            cost: 0,
            return_value: 0.0,
            conflicts: Vec::new(),
            explosions: Vec::new(),
        };
        (task, node)
    }

    fn at_least(goal: usize, anchor: Anchor, t: u32) -> ConstraintDelta {
        ConstraintDelta::Bound(TemporalBound::AtLeast(
            ScheduleVarId {
                goal: GoalId(goal),
                anchor,
            },
            t,
        ))
    }

    fn at_most(goal: usize, anchor: Anchor, t: u32) -> ConstraintDelta {
        ConstraintDelta::Bound(TemporalBound::AtMost(
            ScheduleVarId {
                goal: GoalId(goal),
                anchor,
            },
            t,
        ))
    }

    #[test]
    fn conflicts_sorted_by_kind_then_time() {
        let (mut task, _) = two_goal_node();
        task.abs_constraints.push(crate::task::AbsRangeConstraint {
            goal: GoalId(1),
            anchor: Anchor::Completion,
            t_lower: 0,
            t_upper: 4,
        });
        task.prec_constraints.push(crate::task::PrecedenceConstraint {
            earlier: (GoalId(0), Anchor::Completion),
            later: (GoalId(1), Anchor::Execution),
        });
        task.inter_constraints.push(crate::task::InterGoalConstraint {
            from: (GoalId(0), Anchor::Completion),
            to: (GoalId(1), Anchor::Completion),
            t_inter: 1,
        });
        // g0 executes at 5 and completes at 6; g1 executes at 2 and
        // completes at 8, so every constraint is violated at once.
        let solution = vec![
            path_for(&[0, 1], &[(0, 5, 6)]),
            path_for(&[2, 2], &[(1, 2, 8)]),
        ];
        let conflicts = detect_conflicts(&solution, &task, &SolverOptions::default());
        assert_eq!(conflicts.len(), 3);
        assert!(matches!(conflicts[0], Conflict::AbsRange { observed: 8, .. }));
        assert!(matches!(
            conflicts[1],
            Conflict::Precedence {
                observed_earlier: 6,
                observed_later: 2,
                ..
            }
        ));
        assert!(matches!(conflicts[2], Conflict::InterGoal { observed_to: 8, .. }));
    }

    #[test]
    fn vertex_conflict_reported_at_earliest_shared_timestep() {
        let a = path_for(&[0, 1, 2], &[]);
        let b = path_for(&[2, 1, 0], &[]);
        let collisions = detect_collisions(&[a, b]);
        assert_eq!(
            collisions,
            vec![Conflict::Vertex {
                agents: (0, 1),
                vertex: VertexId(1),
                timestep: 1,
            }]
        );
    }

    #[test]
    fn edge_swap_detected() {
        let a = path_for(&[0, 1], &[]);
        let b = path_for(&[1, 0], &[]);
        let collisions = detect_collisions(&[a, b]);
        assert_eq!(
            collisions,
            vec![Conflict::Edge {
                agents: (0, 1),
                from: VertexId(0),
                to: VertexId(1),
                timestep: 0,
            }]
        );
    }

    #[test]
    fn collisions_ignored_when_checking_is_off() {
        let (task, _) = two_goal_node();
        let solution = vec![path_for(&[0, 0], &[]), path_for(&[0, 0], &[])];
        assert!(detect_conflicts(&solution, &task, &SolverOptions::default()).is_empty());
        let options = SolverOptions {
            collision_checking: true,
            ..SolverOptions::default()
        };
        assert_eq!(detect_conflicts(&solution, &task, &options).len(), 1);
    }

    #[test]
    fn inter_goal_split_matches_published_rule() {
        // Completion gap limited to 7, observed completion of the later
        // goal at 10: one child floors the earlier goal at 3, the other
        // caps the earlier at 2 and the later at 9.
        let (_, node) = two_goal_node();
        let conflict = Conflict::InterGoal {
            from: (GoalId(0), Anchor::Completion),
            to: (GoalId(1), Anchor::Completion),
            t_inter: 7,
            observed_from: 1,
            observed_to: 10,
        };
        let branches = resolve_conflict(&conflict, &node);
        assert_eq!(
            branches,
            vec![
                Branch {
                    agent: 0,
                    deltas: vec![at_least(0, Anchor::Completion, 3)],
                },
                Branch {
                    agent: 1,
                    deltas: vec![
                        at_most(0, Anchor::Completion, 2),
                        at_most(1, Anchor::Completion, 9),
                    ],
                },
            ]
        );
    }

    #[test]
    fn precedence_split_straddles_the_observed_time() {
        let (_, node) = two_goal_node();
        let conflict = Conflict::Precedence {
            earlier: (GoalId(0), Anchor::Completion),
            later: (GoalId(1), Anchor::Execution),
            observed_earlier: 6,
            observed_later: 4,
        };
        let branches = resolve_conflict(&conflict, &node);
        assert_eq!(
            branches,
            vec![
                Branch {
                    agent: 0,
                    deltas: vec![at_most(0, Anchor::Completion, 3)],
                },
                Branch {
                    agent: 1,
                    deltas: vec![
                        at_least(0, Anchor::Completion, 4),
                        at_least(1, Anchor::Execution, 5),
                    ],
                },
            ]
        );
    }

    #[test]
    fn precedence_at_timestep_zero_drops_the_impossible_child() {
        let (_, node) = two_goal_node();
        let conflict = Conflict::Precedence {
            earlier: (GoalId(0), Anchor::Completion),
            later: (GoalId(1), Anchor::Execution),
            observed_earlier: 3,
            observed_later: 0,
        };
        let branches = resolve_conflict(&conflict, &node);
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].agent, 1);
    }

    #[test]
    fn abs_range_overshoot_clamps_from_above() {
        let (_, node) = two_goal_node();
        let conflict = Conflict::AbsRange {
            goal: GoalId(0),
            anchor: Anchor::Completion,
            observed: 12,
            t_lower: 0,
            t_upper: 10,
        };
        let branches = resolve_conflict(&conflict, &node);
        assert_eq!(
            branches,
            vec![Branch {
                agent: 0,
                deltas: vec![at_most(0, Anchor::Completion, 10)],
            }]
        );
    }

    #[test]
    fn edge_children_forbid_opposite_directions() {
        let (_, node) = two_goal_node();
        let conflict = Conflict::Edge {
            agents: (0, 1),
            from: VertexId(3),
            to: VertexId(4),
            timestep: 2,
        };
        let branches = resolve_conflict(&conflict, &node);
        assert_eq!(branches.len(), 2);
        assert_eq!(
            branches[0].deltas,
            vec![ConstraintDelta::ForbidEdge {
                from: VertexId(3),
                to: VertexId(4),
                timestep: 2,
            }]
        );
        assert_eq!(
            branches[1].deltas,
            vec![ConstraintDelta::ForbidEdge {
                from: VertexId(4),
                to: VertexId(3),
                timestep: 2,
            }]
        );
    }

    #[test]
    fn greedy_instance_accepts_a_root_without_expansion() {
        let instance = test_instance(vec![bomb(0, 2, "R", 30)], 30, 1);
        let (outcome, _) = solve_whole(&instance, &SolverOptions::default());
        assert_eq!(outcome.status, SolveStatus::Optimal);
        assert_eq!(outcome.return_value, 10.0);
        assert_eq!(outcome.telemetry.nodes_expanded, 0);
        assert!(outcome.pop_trace.is_empty());
    }

    #[test]
    fn cross_agent_wire_order_resolves_through_branching() {
        // One bomb needs a red cut then a blue cut, held by different
        // agents. The greedy root cuts both as early as possible, which is
        // premature for blue; only precedence branching fixes it.
        let mut b = bomb(0, 2, "RB", 30);
        b.countdown_seconds = 4;
        let instance = test_instance(vec![b], 30, 1);
        let (outcome, _) = solve_whole(&instance, &SolverOptions::default());
        assert_eq!(outcome.status, SolveStatus::Optimal);
        assert_eq!(outcome.return_value, 20.0);
        assert!(outcome.telemetry.nodes_expanded >= 1);
        let times = anchor_times(&outcome.solution);
        let (_, tau_r) = times[&GoalId(0)];
        let (mu_b, tau_b) = times[&GoalId(1)];
        assert!(mu_b > tau_r);
        assert!(tau_b - tau_r <= 4);
    }

    #[test]
    fn short_fuse_prunes_every_root_and_proves_unsolvability() {
        // Reaching the bomb takes 2 steps, so the earliest completion is 3,
        // past the 2-timestep fuse. Every root dies in the feasibility
        // check and the exhausted search is a proof.
        let instance = test_instance(vec![bomb(0, 2, "R", 2)], 30, 1);
        let (outcome, _) = solve_whole(&instance, &SolverOptions::default());
        assert_eq!(outcome.status, SolveStatus::Unsolvable);
        assert_eq!(outcome.return_value, 0.0);
        assert_eq!(outcome.telemetry.nodes_expanded, 0);
        assert!(outcome.telemetry.nodes_pruned > 0);
    }

    #[test]
    fn expansion_cap_returns_best_effort() {
        let mut b = bomb(0, 2, "RB", 30);
        b.countdown_seconds = 4;
        let instance = test_instance(vec![b], 30, 1);
        let options = SolverOptions {
            max_expansions: Some(0),
            ..SolverOptions::default()
        };
        let (outcome, _) = solve_whole(&instance, &options);
        assert_eq!(outcome.status, SolveStatus::BestEffort);
        assert_eq!(outcome.telemetry.nodes_expanded, 0);
    }

    #[test]
    fn root_pops_come_out_in_non_increasing_return_order() {
        let mut b0 = bomb(0, 1, "RB", 30);
        b0.countdown_seconds = 3;
        let mut b1 = bomb(1, 3, "GR", 30);
        b1.countdown_seconds = 3;
        let instance = test_instance(vec![b0, b1], 30, 1);
        let (outcome, _) = solve_whole(&instance, &SolverOptions::default());
        let root_returns: Vec<f64> = outcome
            .pop_trace
            .iter()
            .filter(|r| r.is_root)
            .map(|r| r.return_value)
            .collect();
        assert!(root_returns.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(outcome.status, SolveStatus::Optimal);
    }

    #[test]
    fn solver_matches_brute_force_on_small_instances() {
        let cases: Vec<Vec<BombSpec>> = vec![
            vec![bomb(0, 2, "RB", 12)],
            vec![bomb(0, 1, "G", 12), bomb(1, 3, "RB", 12)],
            vec![
                {
                    let mut b = bomb(0, 1, "RG", 12);
                    b.countdown_seconds = 3;
                    b
                },
                bomb(1, 2, "B", 12),
            ],
            vec![bomb(0, 2, "R", 4), bomb(1, 1, "B", 12)],
            vec![{
                let mut b = bomb(1, 2, "BG", 12);
                b.id = 0;
                b.depends_on = None;
                b
            }],
            vec![bomb(0, 1, "R", 12), {
                let mut b = bomb(1, 2, "B", 12);
                b.depends_on = Some(0);
                b
            }],
        ];
        for bombs in cases {
            let instance = test_instance(bombs, 12, 1);
            let task = compile_bomb_task(&instance).unwrap();
            let starts = AgentStart::initial(&instance.agents);
            let brute = best_plan_return(&instance.graph, &starts, &task, &instance).unwrap();
            let (outcome, _) = solve_whole(&instance, &SolverOptions::default());
            assert!(
                (outcome.return_value - brute).abs() < RETURN_SLACK,
                "solver found {} but brute force found {}",
                outcome.return_value,
                brute
            );
        }
    }

    #[test]
    fn baseline_solves_by_vertex_blocking_but_works_harder() {
        // The red cutter sits next to the bomb while the blue cutter is
        // four steps out, and the countdown allows two timesteps between
        // completions. The red cut has to be delayed, which the inter-goal
        // branch computes in one step; the baseline discovers it by
        // repeated explosion forbids.
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)];
        let graph = WorldGraph::new(7, &edges, vec![0; 7], None).unwrap();
        let agents = vec![
            AgentSpec::new(0, VertexId(1), [Color::Red.action_tag()]),
            AgentSpec::new(1, VertexId(6), [Color::Blue.action_tag()]),
        ];
        let mut b = bomb(0, 2, "RB", 30);
        b.countdown_seconds = 2;
        let instance = InstanceSpec {
            graph,
            agents,
            bombs: vec![b],
            mission_length_seconds: 30,
            seconds_per_timestep: 1,
        };
        let task = compile_bomb_task(&instance).unwrap();
        let starts = AgentStart::initial(&instance.agents);
        let options = SolverOptions::default();
        let ptc =
            solve_subtask(&instance.graph, &starts, &task, &[], &instance, &options).unwrap();
        let base =
            solve_cbs_ta_baseline(&instance.graph, &starts, &task, &[], &instance, &options)
                .unwrap();
        assert_eq!(ptc.return_value, 20.0);
        assert_eq!(base.return_value, 20.0);
        assert!(
            base.telemetry.nodes_expanded > ptc.telemetry.nodes_expanded,
            "baseline expanded {} nodes, temporal branching {}",
            base.telemetry.nodes_expanded,
            ptc.telemetry.nodes_expanded
        );
    }

    #[test]
    fn explosion_fans_out_one_child_per_agent() {
        // Three agents, and a premature blue cut at the root. The single
        // explosion event spawns exactly one child per agent.
        let edges = [(0, 1), (1, 2)];
        let graph = WorldGraph::new(3, &edges, vec![0; 3], None).unwrap();
        let agents = vec![
            AgentSpec::new(0, VertexId(0), [Color::Red.action_tag()]),
            AgentSpec::new(1, VertexId(0), [Color::Blue.action_tag()]),
            AgentSpec::new(2, VertexId(0), [Color::Green.action_tag()]),
        ];
        let instance = InstanceSpec {
            graph,
            agents,
            bombs: vec![bomb(0, 1, "RB", 30)],
            mission_length_seconds: 30,
            seconds_per_timestep: 1,
        };
        let task = compile_bomb_task(&instance).unwrap();
        let starts = AgentStart::initial(&instance.agents);
        let options = SolverOptions {
            max_expansions: Some(1),
            ..SolverOptions::default()
        };
        let outcome =
            solve_cbs_ta_baseline(&instance.graph, &starts, &task, &[], &instance, &options)
                .unwrap();
        assert_eq!(outcome.telemetry.nodes_expanded, 1);
        assert_eq!(outcome.telemetry.nodes_generated, 3);
    }

    #[test]
    fn epsilon_outside_unit_interval_is_rejected() {
        let instance = test_instance(vec![bomb(0, 2, "R", 30)], 30, 1);
        let task = compile_bomb_task(&instance).unwrap();
        let starts = AgentStart::initial(&instance.agents);
        for epsilon in [0.0, -0.5, 1.5] {
            let options = SolverOptions {
                epsilon,
                ..SolverOptions::default()
            };
            let err = solve_subtask(&instance.graph, &starts, &task, &[], &instance, &options);
            assert!(matches!(err, Err(SolverError::BadEpsilon(_))));
        }
    }

    #[test]
    fn solve_task_trace_replays_to_the_reported_return() {
        let bombs = vec![
            bomb(0, 1, "R", 40),
            bomb(1, 3, "GB", 40),
            bomb(2, 4, "G", 40),
        ];
        let instance = test_instance(bombs, 40, 1);
        let task = compile_bomb_task(&instance).unwrap();
        let starts = AgentStart::initial(&instance.agents);
        let outcome = solve_task(
            &instance.graph,
            &starts,
            &task,
            Chunking::Bombs(1),
            HeuristicKind::InputOrder,
            7,
            &instance,
            SolverKind::CbsTaPtc,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.subtasks.len(), 3);
        let replayed = instance.rollout(&outcome.trace.rows).unwrap().ret;
        assert_eq!(replayed, outcome.return_value);
        assert_eq!(outcome.return_value, outcome.max_return);
        assert_eq!(outcome.status, SolveStatus::Optimal);
        let goals: Vec<usize> = outcome.goal_times.iter().map(|&(g, _, _)| g.0).collect();
        assert_eq!(goals, vec![0, 1, 2, 3]);
    }

    #[test]
    fn whole_task_and_partitioned_agree_on_an_easy_instance() {
        let bombs = vec![bomb(0, 1, "R", 40), bomb(1, 3, "B", 40)];
        let instance = test_instance(bombs, 40, 1);
        let task = compile_bomb_task(&instance).unwrap();
        let starts = AgentStart::initial(&instance.agents);
        for chunking in [Chunking::Beta(16), Chunking::Bombs(1)] {
            let outcome = solve_task(
                &instance.graph,
                &starts,
                &task,
                chunking,
                HeuristicKind::FuseAscending,
                0,
                &instance,
                SolverKind::CbsTaPtc,
                &SolverOptions::default(),
            )
            .unwrap();
            assert_eq!(outcome.return_value, 20.0, "chunking {:?}", chunking);
        }
    }

    #[test]
    fn parallel_root_evaluation_matches_serial() {
        let bombs = vec![bomb(0, 1, "G", 30), bomb(1, 3, "GB", 30)];
        let instance = test_instance(bombs, 30, 1);
        let task = compile_bomb_task(&instance).unwrap();
        let starts = AgentStart::initial(&instance.agents);
        let serial = solve_subtask(
            &instance.graph,
            &starts,
            &task,
            &[],
            &instance,
            &SolverOptions::default(),
        )
        .unwrap();
        let threaded = solve_subtask(
            &instance.graph,
            &starts,
            &task,
            &[],
            &instance,
            &SolverOptions {
                parallel_roots: 3,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        assert_eq!(serial.return_value, threaded.return_value);
        assert_eq!(serial.status, threaded.status);
        assert_eq!(
            serial.telemetry.roots_evaluated,
            threaded.telemetry.roots_evaluated
        );
        let sa = serial.assignment.unwrap();
        let ta = threaded.assignment.unwrap();
        assert_eq!(sa.pairs(), ta.pairs());
    }

    prop_compose! {
        fn arb_bomb(id: usize, vertex: usize)
            (len in 1usize..=2,
             shift in 0usize..3,
             fuse in 6u32..=14,
             countdown in 3u32..=14)
            -> BombSpec
        {
            let colors = [Color::Red, Color::Green, Color::Blue];
            let sequence = (0..len).map(|i| colors[(shift + i) % 3]).collect();
            BombSpec {
                id,
                vertex: VertexId(vertex),
                sequence,
                fuse_seconds: fuse,
                countdown_seconds: countdown,
                depends_on: None,
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn solver_never_beats_brute_force_and_optimal_means_equal(
            first in arb_bomb(0, 1),
            second in arb_bomb(1, 3),
            take_second in proptest::bool::ANY,
            chain in proptest::bool::ANY,
        ) {
            let mut bombs = vec![first];
            if take_second {
                let mut second = second;
                if chain {
                    second.depends_on = Some(0);
                }
                bombs.push(second);
            }
            let instance = test_instance(bombs, 12, 1);
            prop_assume!(instance.validate().is_ok());
            let task = compile_bomb_task(&instance).unwrap();
            let starts = AgentStart::initial(&instance.agents);
            let brute = best_plan_return(&instance.graph, &starts, &task, &instance).unwrap();
            let (outcome, _) = solve_whole(&instance, &SolverOptions::default());
            prop_assert!(outcome.return_value <= brute + RETURN_SLACK);
            prop_assert!(outcome.return_value <= instance.max_return() + RETURN_SLACK);
            if outcome.status == SolveStatus::Optimal {
                prop_assert!((outcome.return_value - brute).abs() < RETURN_SLACK);
            }
            let roots: Vec<f64> = outcome
                .pop_trace
                .iter()
                .filter(|r| r.is_root)
                .map(|r| r.return_value)
                .collect();
            prop_assert!(roots.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
