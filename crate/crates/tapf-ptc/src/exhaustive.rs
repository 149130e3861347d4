//! Plan-space brute force for tiny instances: every assignment, every
//! timing of every assigned execution, each candidate scored by replaying
//! it through the episode simulator. Ground truth for the optimality
//! tests; hopeless beyond a handful of goals.

use crate::graph::{VertexId, WorldGraph};
use crate::oracle::{AgentAction, Color, InstanceSpec, OracleError};
use crate::task::{enumerate_assignments, AgentStart, GoalId, Task};

struct TimedGoal {
    vertex: VertexId,
    color: Color,
    duration: u32,
}

/// The highest return any assignment and execution timing can reach. Rows
/// walk shortest routes, wait out any slack at the goal vertex, and cut at
/// the chosen timestep; the idle plan is included, so the result is never
/// worse than doing nothing.
pub fn best_plan_return(
    graph: &WorldGraph,
    starts: &[AgentStart],
    task: &Task,
    oracle: &InstanceSpec,
) -> Result<f64, OracleError> {
    let horizon = task.horizon.min(oracle.horizon());
    let n = starts.len();
    let mut best = oracle.rollout(&vec![Vec::new(); n])?.ret;

    for assignment in enumerate_assignments(&task.goals, &oracle.agents) {
        let per_agent: Vec<Vec<Vec<AgentAction>>> = (0..n)
            .map(|agent| {
                let seq = assignment.sequence(agent);
                agent_rows(graph, starts[agent], task, &seq, horizon)
            })
            .collect();
        if per_agent.iter().any(|rows| rows.is_empty()) {
            continue;
        }
        let mut pick = vec![0usize; n];
        loop {
            let rows: Vec<Vec<AgentAction>> = (0..n)
                .map(|i| per_agent[i][pick[i]].clone())
                .collect();
            let ret = oracle.rollout(&rows)?.ret;
            if ret > best {
                best = ret;
            }
            let mut i = 0;
            loop {
                if i == n {
                    break;
                }
                pick[i] += 1;
                if pick[i] < per_agent[i].len() {
                    break;
                }
                pick[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
    }
    Ok(best)
}

/// All action rows for one agent: every strictly ordered choice of
/// execution timesteps whose completions fit the horizon.
fn agent_rows(
    graph: &WorldGraph,
    start: AgentStart,
    task: &Task,
    seq: &[GoalId],
    horizon: u32,
) -> Vec<Vec<AgentAction>> {
    if seq.is_empty() {
        return vec![Vec::new()];
    }
    let goals: Vec<TimedGoal> = seq
        .iter()
        .map(|&g| {
            let goal = task.goal(g).expect("assigned goal exists");
            TimedGoal {
                vertex: goal.vertex,
                color: Color::from_action_tag(goal.action).expect("goal carries a cut color"),
                duration: goal.duration,
            }
        })
        .collect();
    let mut rows = Vec::new();
    let mut mus = Vec::new();
    enumerate_times(graph, start, &goals, horizon, &mut mus, &mut rows);
    rows
}

fn enumerate_times(
    graph: &WorldGraph,
    start: AgentStart,
    goals: &[TimedGoal],
    horizon: u32,
    mus: &mut Vec<u32>,
    rows: &mut Vec<Vec<AgentAction>>,
) {
    let depth = mus.len();
    if depth == goals.len() {
        rows.push(build_row(graph, start, goals, mus));
        return;
    }
    let goal = &goals[depth];
    let travel = if depth == 0 {
        graph.dist(start.vertex, goal.vertex)
    } else {
        graph.dist(goals[depth - 1].vertex, goal.vertex)
    };
    if travel == u32::MAX {
        return;
    }
    let earliest = if depth == 0 {
        start.depart.saturating_add(travel)
    } else {
        mus[depth - 1].saturating_add(1).saturating_add(travel)
    };
    if goal.duration > horizon {
        return;
    }
    for mu in earliest..=horizon - goal.duration {
        mus.push(mu);
        enumerate_times(graph, start, goals, horizon, mus, rows);
        mus.pop();
    }
}

fn build_row(graph: &WorldGraph, start: AgentStart, goals: &[TimedGoal], mus: &[u32]) -> Vec<AgentAction> {
    let mut row = vec![AgentAction::Wait; start.depart as usize];
    let mut at = start.vertex;
    let mut t = start.depart;
    for (goal, &mu) in goals.iter().zip(mus) {
        while at != goal.vertex {
            let d = graph.dist(at, goal.vertex);
            let next = graph
                .neighbors(at)
                .expect("route vertex exists")
                .iter()
                .copied()
                .find(|&w| graph.dist(w, goal.vertex) + 1 == d)
                .expect("a neighbor lies on the shortest route");
            row.push(AgentAction::Move(next));
            at = next;
            t += 1;
        }
        while t < mu {
            row.push(AgentAction::Wait);
            t += 1;
        }
        row.push(AgentAction::Cut(goal.color));
        t += 1;
    }
    row
}
