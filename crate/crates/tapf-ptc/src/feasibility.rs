//! Temporal feasibility of accumulated constraints: every constraint in the
//! model is a difference of two schedule variables, so satisfiability
//! reduces to negative-cycle detection, checked before any replanning.

use std::collections::HashMap;

use crate::graph::WorldGraph;
use crate::task::{AgentStart, Anchor, Assignment, GoalId, Task};

/// One schedule variable: the execution or completion timestep of a goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScheduleVarId {
    pub goal: GoalId,
    pub anchor: Anchor,
}

pub fn mu(goal: GoalId) -> ScheduleVarId {
    ScheduleVarId {
        goal,
        anchor: Anchor::Execution,
    }
}

pub fn tau(goal: GoalId) -> ScheduleVarId {
    ScheduleVarId {
        goal,
        anchor: Anchor::Completion,
    }
}

impl std::fmt::Display for ScheduleVarId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.anchor {
            Anchor::Execution => write!(f, "mu({})", self.goal),
            Anchor::Completion => write!(f, "tau({})", self.goal),
        }
    }
}

/// A single-variable bound a constraint tree node accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemporalBound {
    AtLeast(ScheduleVarId, u32),
    AtMost(ScheduleVarId, u32),
}

impl TemporalBound {
    pub fn var(&self) -> ScheduleVarId {
        match *self {
            TemporalBound::AtLeast(v, _) | TemporalBound::AtMost(v, _) => v,
        }
    }
}

impl std::fmt::Display for TemporalBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TemporalBound::AtLeast(v, t) => write!(f, "{v} >= {t}"),
            TemporalBound::AtMost(v, t) => write!(f, "{v} <= {t}"),
        }
    }
}

/// Conjunction of difference constraints over schedule variables and a zero
/// origin. `minuend - subtrahend <= bound`, with `None` standing for the
/// origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffConstraint {
    pub minuend: Option<ScheduleVarId>,
    pub subtrahend: Option<ScheduleVarId>,
    pub bound: i64,
}

#[derive(Debug, Clone, Default)]
pub struct DifferenceSystem {
    vars: Vec<ScheduleVarId>,
    index: HashMap<ScheduleVarId, usize>,
    constraints: Vec<DiffConstraint>,
}

impl DifferenceSystem {
    pub fn new() -> Self {
        DifferenceSystem::default()
    }

    pub fn declare(&mut self, var: ScheduleVarId) -> usize {
        if let Some(&i) = self.index.get(&var) {
            return i;
        }
        let i = self.vars.len();
        self.vars.push(var);
        self.index.insert(var, i);
        i
    }

    /// x - y <= c.
    pub fn add_diff(&mut self, x: ScheduleVarId, y: ScheduleVarId, c: i64) {
        self.declare(x);
        self.declare(y);
        self.constraints.push(DiffConstraint {
            minuend: Some(x),
            subtrahend: Some(y),
            bound: c,
        });
    }

    /// x <= c.
    pub fn add_upper(&mut self, x: ScheduleVarId, c: i64) {
        self.declare(x);
        self.constraints.push(DiffConstraint {
            minuend: Some(x),
            subtrahend: None,
            bound: c,
        });
    }

    /// x >= c.
    pub fn add_lower(&mut self, x: ScheduleVarId, c: i64) {
        self.declare(x);
        self.constraints.push(DiffConstraint {
            minuend: None,
            subtrahend: Some(x),
            bound: -c,
        });
    }

    pub fn add_bound(&mut self, bound: TemporalBound) {
        match bound {
            TemporalBound::AtLeast(v, t) => self.add_lower(v, t as i64),
            TemporalBound::AtMost(v, t) => self.add_upper(v, t as i64),
        }
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn constraints(&self) -> &[DiffConstraint] {
        &self.constraints
    }

    /// Text edge list, one constraint per line, for debugging.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let name = |v: &Option<ScheduleVarId>| match v {
            Some(var) => var.to_string(),
            None => "origin".to_string(),
        };
        for c in &self.constraints {
            out.push_str(&format!(
                "{} - {} <= {}\n",
                name(&c.minuend),
                name(&c.subtrahend),
                c.bound
            ));
        }
        out
    }
}

/// True iff some integer assignment satisfies every constraint, decided by
/// Bellman-Ford negative-cycle detection on the constraint graph. Exact for
/// this constraint class; nothing is approximated.
pub fn check_feasible(system: &DifferenceSystem) -> bool {
    // Node 0 is the origin; variable i lives at node i + 1. Edge y -> x
    // with weight c encodes x - y <= c. Starting all distances at zero acts
    // as a virtual source reaching every node, so any negative cycle is
    // found regardless of connectivity.
    let n = system.var_count() + 1;
    let node = |v: &Option<ScheduleVarId>| match v {
        Some(var) => system.index[var] + 1,
        None => 0,
    };
    let edges: Vec<(usize, usize, i64)> = system
        .constraints
        .iter()
        .map(|c| (node(&c.subtrahend), node(&c.minuend), c.bound))
        .collect();
    let mut dist = vec![0i64; n];
    for _ in 0..n.saturating_sub(1) {
        let mut changed = false;
        for &(y, x, c) in &edges {
            if dist[y] + c < dist[x] {
                dist[x] = dist[y] + c;
                changed = true;
            }
        }
        if !changed {
            return true;
        }
    }
    edges.iter().all(|&(y, x, c)| dist[y] + c >= dist[x])
}

/// Assembles the full difference system for one constraint tree node:
/// duration links, movement lower bounds along each agent's goal chain,
/// the task's temporal constraint sets, the node's accumulated bounds, and
/// horizon caps. Movement bounds ignore vertex and edge constraints, which
/// only delay agents, so the bounds stay admissible.
pub fn build_system(
    task: &Task,
    assignment: &Assignment,
    ct_bounds: &[TemporalBound],
    graph: &WorldGraph,
    starts: &[AgentStart],
) -> DifferenceSystem {
    let mut system = DifferenceSystem::new();
    for goal in &task.goals {
        let alpha = goal.duration as i64;
        system.add_diff(tau(goal.id), mu(goal.id), alpha);
        system.add_diff(mu(goal.id), tau(goal.id), -alpha);
        system.add_lower(mu(goal.id), 0);
        system.add_upper(tau(goal.id), task.horizon as i64);
    }
    for agent in 0..assignment.agent_count() {
        let sequence = assignment.sequence(agent);
        let mut previous: Option<GoalId> = None;
        for goal_id in sequence {
            let goal = task.goal(goal_id).expect("assignment references task goal");
            match previous {
                None => {
                    let start = starts[agent];
                    let travel = graph.dist(start.vertex, goal.vertex) as i64;
                    system.add_lower(mu(goal_id), start.depart as i64 + travel);
                }
                Some(prev_id) => {
                    let prev = task.goal(prev_id).expect("assignment references task goal");
                    let travel = graph.dist(prev.vertex, goal.vertex) as i64;
                    // mu(next) >= tau(prev) + travel.
                    system.add_diff(tau(prev_id), mu(goal_id), -travel);
                }
            }
            previous = Some(goal_id);
        }
    }
    for c in &task.abs_constraints {
        let var = ScheduleVarId {
            goal: c.goal,
            anchor: c.anchor,
        };
        system.add_lower(var, c.t_lower as i64);
        system.add_upper(var, c.t_upper as i64);
    }
    for c in &task.inter_constraints {
        let from = ScheduleVarId {
            goal: c.from.0,
            anchor: c.from.1,
        };
        let to = ScheduleVarId {
            goal: c.to.0,
            anchor: c.to.1,
        };
        system.add_diff(to, from, c.t_inter);
    }
    for c in &task.prec_constraints {
        let earlier = ScheduleVarId {
            goal: c.earlier.0,
            anchor: c.earlier.1,
        };
        let later = ScheduleVarId {
            goal: c.later.0,
            anchor: c.later.1,
        };
        // Strict on integer time: earlier <= later - 1.
        system.add_diff(earlier, later, -1);
    }
    for bound in ct_bounds {
        system.add_bound(*bound);
    }
    system
}

#[cfg(test)]
pub(crate) fn brute_force_feasible(system: &DifferenceSystem, lo: i64, hi: i64) -> bool {
    // Exhaustive backtracking over integer assignments in [lo, hi],
    // checking each constraint as soon as both its variables are fixed.
    // The origin is fixed at zero. Independent of the Bellman-Ford path.
    fn solve(
        system: &DifferenceSystem,
        values: &mut Vec<Option<i64>>,
        next: usize,
        lo: i64,
        hi: i64,
    ) -> bool {
        let value_of = |values: &Vec<Option<i64>>, v: &Option<ScheduleVarId>| -> Option<i64> {
            match v {
                None => Some(0),
                Some(var) => values[system.index[var]],
            }
        };
        let consistent = |values: &Vec<Option<i64>>| {
            system.constraints.iter().all(|c| {
                match (value_of(values, &c.minuend), value_of(values, &c.subtrahend)) {
                    (Some(x), Some(y)) => x - y <= c.bound,
                    _ => true,
                }
            })
        };
        if next == values.len() {
            return consistent(values);
        }
        for candidate in lo..=hi {
            values[next] = Some(candidate);
            if consistent(values) && solve(system, values, next + 1, lo, hi) {
                return true;
            }
        }
        values[next] = None;
        false
    }
    let mut values = vec![None; system.var_count()];
    solve(system, &mut values, 0, lo, hi)
}
