//! Goals, temporal constraints, assignments, and the compiler that turns a
//! bomb instance into a constrained task model.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::graph::VertexId;
use crate::oracle::InstanceSpec;

/// Index of a goal, stable across partitioning: subtasks keep original ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GoalId(pub usize);

impl std::fmt::Display for GoalId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "g{}", self.0)
    }
}

/// Domain action label. Movement is not an action tag; the bomb domain uses
/// one tag per wire color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionTag(pub u16);

/// Which timestep of a goal a constraint anchors to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Anchor {
    /// The timestep the goal action starts (written μ elsewhere).
    Execution,
    /// The timestep the goal action finishes (written τ elsewhere).
    Completion,
}

/// Bomb and sequence position a goal was compiled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BombRef {
    pub bomb: usize,
    pub position: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goal {
    pub id: GoalId,
    pub vertex: VertexId,
    pub action: ActionTag,
    /// Timesteps from execution to completion.
    pub duration: u32,
    pub bomb: Option<BombRef>,
}

/// t_lower <= anchor(goal) <= t_upper.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbsRangeConstraint {
    pub goal: GoalId,
    pub anchor: Anchor,
    pub t_lower: u32,
    pub t_upper: u32,
}

/// anchor(to) - anchor(from) <= t_inter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterGoalConstraint {
    pub from: (GoalId, Anchor),
    pub to: (GoalId, Anchor),
    pub t_inter: i64,
}

/// anchor(earlier) < anchor(later), strict on integer timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrecedenceConstraint {
    pub earlier: (GoalId, Anchor),
    pub later: (GoalId, Anchor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    /// Global goal order; per-agent sequences are restrictions of it.
    pub goals: Vec<Goal>,
    pub abs_constraints: Vec<AbsRangeConstraint>,
    pub inter_constraints: Vec<InterGoalConstraint>,
    pub prec_constraints: Vec<PrecedenceConstraint>,
    /// Terminal timestep; completions never exceed it.
    pub horizon: u32,
}

impl Task {
    pub fn goal(&self, id: GoalId) -> Option<&Goal> {
        self.goals.iter().find(|g| g.id == id)
    }

    pub fn goal_count(&self) -> usize {
        self.goals.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentSpec {
    pub id: usize,
    pub start_vertex: VertexId,
    pub capabilities: BTreeSet<ActionTag>,
}

impl AgentSpec {
    pub fn new(id: usize, start_vertex: VertexId, capabilities: impl IntoIterator<Item = ActionTag>) -> Self {
        AgentSpec {
            id,
            start_vertex,
            capabilities: capabilities.into_iter().collect(),
        }
    }

    pub fn can_perform(&self, action: ActionTag) -> bool {
        self.capabilities.contains(&action)
    }
}

/// Where and when an agent becomes available for planning. For the first
/// subtask this is the spec start at timestep 0; later subtasks continue
/// from the end of the agent's previous path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentStart {
    pub vertex: VertexId,
    pub depart: u32,
}

impl AgentStart {
    pub fn initial(agents: &[AgentSpec]) -> Vec<AgentStart> {
        agents
            .iter()
            .map(|a| AgentStart {
                vertex: a.start_vertex,
                depart: 0,
            })
            .collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssignmentError {
    #[error("choice list has {got} entries for {want} goals")]
    ChoiceArity { got: usize, want: usize },
    #[error("goal {goal} assigned to unknown agent {agent}")]
    UnknownAgent { goal: GoalId, agent: usize },
    #[error("goal {goal} assigned to agent {agent} lacking its action")]
    IncapableAgent { goal: GoalId, agent: usize },
}

/// A many-to-one mapping from goals to agents. Each agent performs its
/// goals in the task's global order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    agent_count: usize,
    pairs: Vec<(GoalId, usize)>,
}

impl Assignment {
    /// `choice[k]` is the agent for `goals[k]`; capability-checked.
    pub fn new(goals: &[Goal], agents: &[AgentSpec], choice: &[usize]) -> Result<Self, AssignmentError> {
        if choice.len() != goals.len() {
            return Err(AssignmentError::ChoiceArity {
                got: choice.len(),
                want: goals.len(),
            });
        }
        let mut pairs = Vec::with_capacity(goals.len());
        for (goal, &agent) in goals.iter().zip(choice) {
            let spec = agents.get(agent).ok_or(AssignmentError::UnknownAgent {
                goal: goal.id,
                agent,
            })?;
            if !spec.can_perform(goal.action) {
                return Err(AssignmentError::IncapableAgent {
                    goal: goal.id,
                    agent,
                });
            }
            pairs.push((goal.id, agent));
        }
        Ok(Assignment {
            agent_count: agents.len(),
            pairs,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn goal_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn agent_of(&self, goal: GoalId) -> Option<usize> {
        self.pairs.iter().find(|(g, _)| *g == goal).map(|&(_, a)| a)
    }

    /// Goal/agent pairs in global goal order.
    pub fn pairs(&self) -> &[(GoalId, usize)] {
        &self.pairs
    }

    /// The ordered goal sequence agent `agent` performs.
    pub fn sequence(&self, agent: usize) -> Vec<GoalId> {
        self.pairs
            .iter()
            .filter(|&&(_, a)| a == agent)
            .map(|&(g, _)| g)
            .collect()
    }

    /// The equivalent binary agent-by-goal matrix, rows = agents.
    pub fn matrix(&self) -> Vec<Vec<bool>> {
        let mut m = vec![vec![false; self.pairs.len()]; self.agent_count];
        for (col, &(_, agent)) in self.pairs.iter().enumerate() {
            m[agent][col] = true;
        }
        m
    }
}

/// Combinatorial guard for assignment enumeration.
pub const MAX_ENUMERATION_GOALS: usize = 16;

/// Lazily yields every capability-respecting goal-to-agent mapping, in a
/// deterministic lexicographic order. A goal no agent can perform makes the
/// sequence empty.
#[derive(Debug, Clone)]
pub struct AssignmentIter<'a> {
    goals: &'a [Goal],
    agent_count: usize,
    eligible: Vec<Vec<usize>>,
    counter: Vec<usize>,
    exhausted: bool,
}

pub fn enumerate_assignments<'a>(goals: &'a [Goal], agents: &'a [AgentSpec]) -> AssignmentIter<'a> {
    assert!(
        goals.len() <= MAX_ENUMERATION_GOALS,
        "assignment enumeration over {} goals exceeds the guard of {}",
        goals.len(),
        MAX_ENUMERATION_GOALS
    );
    let eligible: Vec<Vec<usize>> = goals
        .iter()
        .map(|g| {
            agents
                .iter()
                .filter(|a| a.can_perform(g.action))
                .map(|a| a.id)
                .collect()
        })
        .collect();
    let exhausted = eligible.iter().any(|e| e.is_empty());
    AssignmentIter {
        goals,
        agent_count: agents.len(),
        counter: vec![0; eligible.len()],
        eligible,
        exhausted,
    }
}

impl AssignmentIter<'_> {
    /// Number of assignments the full enumeration yields.
    pub fn total(&self) -> usize {
        if self.eligible.iter().any(|e| e.is_empty()) {
            return 0;
        }
        self.eligible.iter().map(|e| e.len()).product()
    }
}

impl Iterator for AssignmentIter<'_> {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        if self.exhausted {
            return None;
        }
        let pairs = self
            .goals
            .iter()
            .zip(&self.counter)
            .zip(&self.eligible)
            .map(|((g, &c), e)| (g.id, e[c]))
            .collect();
        // Mixed-radix increment, last goal fastest.
        let mut pos = self.counter.len();
        loop {
            if pos == 0 {
                self.exhausted = true;
                break;
            }
            pos -= 1;
            self.counter[pos] += 1;
            if self.counter[pos] < self.eligible[pos].len() {
                break;
            }
            self.counter[pos] = 0;
        }
        Some(Assignment {
            agent_count: self.agent_count,
            pairs,
        })
    }
}

/// Timesteps a defusing action occupies; traversal and defusing take the
/// same unit cost.
pub const DEFUSE_DURATION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompileError {
    #[error("bomb {bomb}: {timer} timer rounds to zero timesteps at {seconds_per_timestep} s/timestep")]
    DegenerateTimer {
        bomb: usize,
        timer: &'static str,
        seconds_per_timestep: u32,
    },
    #[error("instance invalid: {0}")]
    InvalidInstance(String),
}

/// Compiles a bomb instance into goals plus temporal constraints: one goal
/// per sequence color; precedence and a countdown window between
/// consecutive cuts; a fuse deadline on each bomb's last cut; precedence
/// from a prerequisite bomb's last cut to its dependent's first.
pub fn compile_bomb_task(instance: &InstanceSpec) -> Result<Task, CompileError> {
    instance
        .validate()
        .map_err(|e| CompileError::InvalidInstance(e.to_string()))?;
    let horizon = instance.horizon();
    let mut goals = Vec::new();
    let mut abs_constraints = Vec::new();
    let mut inter_constraints = Vec::new();
    let mut prec_constraints = Vec::new();
    let mut first_goal = Vec::with_capacity(instance.bombs.len());
    let mut last_goal = Vec::with_capacity(instance.bombs.len());

    for (b, bomb) in instance.bombs.iter().enumerate() {
        let fuse_ts = instance.fuse_timesteps(b);
        if fuse_ts == 0 {
            return Err(CompileError::DegenerateTimer {
                bomb: b,
                timer: "fuse",
                seconds_per_timestep: instance.seconds_per_timestep,
            });
        }
        let countdown_ts = instance.countdown_timesteps(b);
        if countdown_ts == 0 {
            return Err(CompileError::DegenerateTimer {
                bomb: b,
                timer: "countdown",
                seconds_per_timestep: instance.seconds_per_timestep,
            });
        }
        let base = goals.len();
        for (position, &color) in bomb.sequence.iter().enumerate() {
            goals.push(Goal {
                id: GoalId(goals.len()),
                vertex: bomb.vertex,
                action: color.action_tag(),
                duration: DEFUSE_DURATION,
                bomb: Some(BombRef { bomb: b, position }),
            });
        }
        first_goal.push(GoalId(base));
        last_goal.push(GoalId(goals.len() - 1));
        for p in 1..bomb.sequence.len() {
            let prev = GoalId(base + p - 1);
            let next = GoalId(base + p);
            prec_constraints.push(PrecedenceConstraint {
                earlier: (prev, Anchor::Completion),
                later: (next, Anchor::Execution),
            });
            inter_constraints.push(InterGoalConstraint {
                from: (prev, Anchor::Completion),
                to: (next, Anchor::Completion),
                t_inter: countdown_ts as i64,
            });
        }
        abs_constraints.push(AbsRangeConstraint {
            goal: last_goal[b],
            anchor: Anchor::Completion,
            t_lower: 0,
            t_upper: fuse_ts.min(horizon),
        });
    }
    for (b, bomb) in instance.bombs.iter().enumerate() {
        if let Some(dep) = bomb.depends_on {
            prec_constraints.push(PrecedenceConstraint {
                earlier: (last_goal[dep], Anchor::Completion),
                later: (first_goal[b], Anchor::Execution),
            });
        }
    }
    Ok(Task {
        goals,
        abs_constraints,
        inter_constraints,
        prec_constraints,
        horizon,
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskViolation {
    #[error("{context} references unknown goal {goal}")]
    DanglingReference { goal: GoalId, context: &'static str },
    #[error("absolute range on {goal} is empty: [{t_lower}, {t_upper}]")]
    EmptyRange { goal: GoalId, t_lower: u32, t_upper: u32 },
    #[error("absolute range on {goal} reaches {t_upper}, past horizon {horizon}")]
    RangeBeyondHorizon { goal: GoalId, t_upper: u32, horizon: u32 },
    #[error("{context} relates goal {goal} to itself")]
    SelfReferential { goal: GoalId, context: &'static str },
    #[error("duplicate goal id {0}")]
    DuplicateGoalId(GoalId),
    #[error("precedence cycle through goals {0:?}")]
    PrecedenceCycle(Vec<GoalId>),
}

/// Structural check: every constraint references existing distinct goals,
/// ranges are non-empty and inside the horizon, and the precedence relation
/// (chained through execution-before-completion within each goal) is
/// acyclic.
pub fn validate_task(task: &Task) -> Vec<TaskViolation> {
    let mut violations = Vec::new();
    let mut ids = BTreeSet::new();
    for g in &task.goals {
        if !ids.insert(g.id) {
            violations.push(TaskViolation::DuplicateGoalId(g.id));
        }
    }
    let known = |g: GoalId| ids.contains(&g);

    for c in &task.abs_constraints {
        if !known(c.goal) {
            violations.push(TaskViolation::DanglingReference {
                goal: c.goal,
                context: "absolute range constraint",
            });
            continue;
        }
        if c.t_lower > c.t_upper {
            violations.push(TaskViolation::EmptyRange {
                goal: c.goal,
                t_lower: c.t_lower,
                t_upper: c.t_upper,
            });
        }
        if c.t_upper > task.horizon {
            violations.push(TaskViolation::RangeBeyondHorizon {
                goal: c.goal,
                t_upper: c.t_upper,
                horizon: task.horizon,
            });
        }
    }
    for c in &task.inter_constraints {
        for (goal, _) in [c.from, c.to] {
            if !known(goal) {
                violations.push(TaskViolation::DanglingReference {
                    goal,
                    context: "inter-goal constraint",
                });
            }
        }
        if c.from.0 == c.to.0 {
            violations.push(TaskViolation::SelfReferential {
                goal: c.from.0,
                context: "inter-goal constraint",
            });
        }
    }
    for c in &task.prec_constraints {
        for (goal, _) in [c.earlier, c.later] {
            if !known(goal) {
                violations.push(TaskViolation::DanglingReference {
                    goal,
                    context: "precedence constraint",
                });
            }
        }
        if c.earlier.0 == c.later.0 {
            violations.push(TaskViolation::SelfReferential {
                goal: c.earlier.0,
                context: "precedence constraint",
            });
        }
    }
    if let Some(cycle) = precedence_cycle(task, &ids) {
        violations.push(TaskViolation::PrecedenceCycle(cycle));
    }
    violations
}

/// Kahn's algorithm over (goal, anchor) nodes. Edges: execution before
/// completion within each goal, plus every precedence constraint. Returns
/// the goals left unprocessed when a cycle blocks the topological order.
fn precedence_cycle(task: &Task, known: &BTreeSet<GoalId>) -> Option<Vec<GoalId>> {
    let index: std::collections::HashMap<(GoalId, Anchor), usize> = task
        .goals
        .iter()
        .flat_map(|g| [(g.id, Anchor::Execution), (g.id, Anchor::Completion)])
        .enumerate()
        .map(|(i, node)| (node, i))
        .collect();
    let n = index.len();
    let mut out_edges = vec![Vec::new(); n];
    let mut in_degree = vec![0usize; n];
    let add_edge = |from: (GoalId, Anchor), to: (GoalId, Anchor), out_edges: &mut Vec<Vec<usize>>, in_degree: &mut Vec<usize>| {
        let (f, t) = (index[&from], index[&to]);
        out_edges[f].push(t);
        in_degree[t] += 1;
    };
    for g in &task.goals {
        add_edge(
            (g.id, Anchor::Execution),
            (g.id, Anchor::Completion),
            &mut out_edges,
            &mut in_degree,
        );
    }
    for c in &task.prec_constraints {
        if known.contains(&c.earlier.0) && known.contains(&c.later.0) {
            add_edge(c.earlier, c.later, &mut out_edges, &mut in_degree);
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| in_degree[i] == 0).collect();
    let mut processed = 0;
    while let Some(i) = queue.pop() {
        processed += 1;
        for &j in &out_edges[i] {
            in_degree[j] -= 1;
            if in_degree[j] == 0 {
                queue.push(j);
            }
        }
    }
    if processed == n {
        return None;
    }
    let mut cycle: Vec<GoalId> = index
        .iter()
        .filter(|&(_, &i)| in_degree[i] > 0)
        .map(|(&(g, _), _)| g)
        .collect();
    cycle.sort_unstable();
    cycle.dedup();
    Some(cycle)
}
