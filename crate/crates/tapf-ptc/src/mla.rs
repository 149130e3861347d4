//! Multi-label A*: a minimum-cost timed path for one agent through its
//! ordered goal sequence, under vertex/edge forbids and per-goal timestep
//! bounds.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use crate::graph::{VertexId, WorldGraph};
use crate::task::{AgentStart, Anchor, Assignment, Goal, GoalId, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathAction {
    Move(VertexId),
    Wait,
    /// One timestep spent performing the goal's action at its vertex.
    Execute(GoalId),
}

/// A single agent's plan. Timesteps are absolute: entry `i` of `occupied`
/// or `actions` is at timestep `depart + i`. Cost counts timesteps from
/// departure to the last goal completion; the path ends there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedPath {
    pub depart: u32,
    pub occupied: Vec<VertexId>,
    pub actions: Vec<PathAction>,
    /// Per goal in sequence order: (goal, execution, completion).
    pub goal_times: Vec<(GoalId, u32, u32)>,
    pub cost: u32,
}

impl TimedPath {
    pub fn stationary(start: AgentStart) -> Self {
        TimedPath {
            depart: start.depart,
            occupied: vec![start.vertex],
            actions: Vec::new(),
            goal_times: Vec::new(),
            cost: 0,
        }
    }

    pub fn end_time(&self) -> u32 {
        self.depart + self.cost
    }

    /// Vertex at an absolute timestep, clamped to the path's extent.
    pub fn vertex_at(&self, t: u32) -> VertexId {
        if t <= self.depart {
            return self.occupied[0];
        }
        let i = ((t - self.depart) as usize).min(self.occupied.len() - 1);
        self.occupied[i]
    }

    pub fn completion_of(&self, goal: GoalId) -> Option<u32> {
        self.goal_times
            .iter()
            .find(|&&(g, _, _)| g == goal)
            .map(|&(_, _, tau)| tau)
    }
}

/// Everything a single low-level search must respect: spatial forbids from
/// collision branching and per-goal anchor windows from temporal branching.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathConstraintSet {
    pub vertex_forbids: HashSet<(VertexId, u32)>,
    /// (from, to, t): the agent may not be at `from` at `t` and `to` at
    /// `t + 1`.
    pub edge_forbids: HashSet<(VertexId, VertexId, u32)>,
    pub goal_bounds: HashMap<(GoalId, Anchor), (u32, u32)>,
}

impl PathConstraintSet {
    pub fn new() -> Self {
        PathConstraintSet::default()
    }

    pub fn forbid_vertex(&mut self, vertex: VertexId, t: u32) {
        self.vertex_forbids.insert((vertex, t));
    }

    pub fn forbid_edge(&mut self, from: VertexId, to: VertexId, t: u32) {
        self.edge_forbids.insert((from, to, t));
    }

    /// Narrows the window of one goal anchor; windows start unbounded.
    pub fn bound_at_least(&mut self, goal: GoalId, anchor: Anchor, t: u32) {
        let entry = self.goal_bounds.entry((goal, anchor)).or_insert((0, u32::MAX));
        entry.0 = entry.0.max(t);
    }

    pub fn bound_at_most(&mut self, goal: GoalId, anchor: Anchor, t: u32) {
        let entry = self.goal_bounds.entry((goal, anchor)).or_insert((0, u32::MAX));
        entry.1 = entry.1.min(t);
    }

    pub fn vertex_allowed(&self, vertex: VertexId, t: u32) -> bool {
        !self.vertex_forbids.contains(&(vertex, t))
    }

    pub fn edge_allowed(&self, from: VertexId, to: VertexId, t: u32) -> bool {
        !self.edge_forbids.contains(&(from, to, t))
    }

    /// Closed interval of legal execution timesteps for a goal, folding
    /// completion bounds back by the duration and capping by the horizon.
    /// May come back empty (lo > hi).
    pub fn execution_window(&self, goal: &Goal, horizon: u32) -> (i64, i64) {
        let alpha = goal.duration as i64;
        let mut lo = 0i64;
        let mut hi = horizon as i64 - alpha;
        if let Some(&(l, h)) = self.goal_bounds.get(&(goal.id, Anchor::Execution)) {
            lo = lo.max(l as i64);
            hi = hi.min(h as i64);
        }
        if let Some(&(l, h)) = self.goal_bounds.get(&(goal.id, Anchor::Completion)) {
            lo = lo.max(l as i64 - alpha);
            hi = hi.min(h as i64 - alpha);
        }
        (lo, hi)
    }
}

/// Ordering for the open list: smallest f first, ties broken toward higher
/// goal index, then lower timestep, then lower vertex id, then insertion
/// order, so runs are reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct OpenEntry {
    f: u32,
    goal_index: usize,
    timestep: u32,
    vertex: VertexId,
    node: usize,
}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .cmp(&self.f)
            .then(self.goal_index.cmp(&other.goal_index))
            .then(other.timestep.cmp(&self.timestep))
            .then(other.vertex.cmp(&self.vertex))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
enum Arrival {
    Start,
    Move,
    Wait,
    Execute,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    vertex: VertexId,
    timestep: u32,
    goal_index: usize,
    parent: usize,
    arrival: Arrival,
}

/// Minimum-cost timed path visiting `goal_seq` in order, or `None` when no
/// path fits the constraints and horizon. Search states are (vertex,
/// timestep, next goal index); the heuristic chains remaining shortest
/// distances and durations, sharpened by pending completion lower bounds.
pub fn mla_star(
    graph: &WorldGraph,
    start: AgentStart,
    goal_seq: &[Goal],
    constraints: &PathConstraintSet,
    horizon: u32,
) -> Option<TimedPath> {
    if start.depart > horizon {
        return None;
    }
    let windows: Vec<(i64, i64)> = goal_seq
        .iter()
        .map(|g| constraints.execution_window(g, horizon))
        .collect();
    if windows.iter().any(|&(lo, hi)| lo > hi) {
        return None;
    }
    // chain_to_go[k]: distance and duration cost of finishing goals k..
    // from goal k's vertex onward, excluding the approach to goal k.
    let n = goal_seq.len();
    let mut chain_to_go = vec![0u32; n + 1];
    for k in (0..n).rev() {
        let hop = if k + 1 < n {
            graph.dist(goal_seq[k].vertex, goal_seq[k + 1].vertex)
        } else {
            0
        };
        chain_to_go[k] = goal_seq[k].duration + hop + chain_to_go[k + 1];
    }
    // latest_completion_floor[k]: no plan with goals k.. left can finish
    // before this absolute timestep.
    let mut completion_floor = vec![0i64; n + 1];
    for k in (0..n).rev() {
        let own = windows[k].0 + goal_seq[k].duration as i64;
        completion_floor[k] = completion_floor[k + 1].max(own);
    }
    let heuristic = |vertex: VertexId, timestep: u32, k: usize| -> u32 {
        if k >= n {
            return 0;
        }
        let chain = graph.dist(vertex, goal_seq[k].vertex) + chain_to_go[k];
        let floor = (completion_floor[k] - timestep as i64).max(0) as u32;
        chain.max(floor)
    };

    if !constraints.vertex_allowed(start.vertex, start.depart) {
        return None;
    }
    let mut nodes = vec![Node {
        vertex: start.vertex,
        timestep: start.depart,
        goal_index: 0,
        parent: usize::MAX,
        arrival: Arrival::Start,
    }];
    let mut open = BinaryHeap::new();
    let h0 = heuristic(start.vertex, start.depart, 0);
    if start.depart + h0 > horizon {
        return None;
    }
    open.push(OpenEntry {
        f: h0,
        goal_index: 0,
        timestep: start.depart,
        vertex: start.vertex,
        node: 0,
    });
    let mut closed: HashSet<(VertexId, u32, usize)> = HashSet::new();

    while let Some(entry) = open.pop() {
        let Node {
            vertex,
            timestep,
            goal_index,
            ..
        } = nodes[entry.node];
        if !closed.insert((vertex, timestep, goal_index)) {
            continue;
        }
        if goal_index == n {
            return Some(reconstruct(&nodes, entry.node, start, goal_seq));
        }

        let push = |nodes: &mut Vec<Node>,
                        open: &mut BinaryHeap<OpenEntry>,
                        vertex: VertexId,
                        timestep: u32,
                        goal_index: usize,
                        arrival: Arrival| {
            if closed.contains(&(vertex, timestep, goal_index)) {
                return;
            }
            if goal_index < n && timestep as i64 > windows[goal_index].1 {
                return;
            }
            let h = heuristic(vertex, timestep, goal_index);
            if timestep + h > horizon {
                return;
            }
            let node = nodes.len();
            nodes.push(Node {
                vertex,
                timestep,
                goal_index,
                parent: entry.node,
                arrival,
            });
            open.push(OpenEntry {
                f: timestep - start.depart + h,
                goal_index,
                timestep,
                vertex,
                node,
            });
        };

        let goal = &goal_seq[goal_index];
        if vertex == goal.vertex {
            let alpha = goal.duration;
            let (lo, hi) = windows[goal_index];
            let occupancy_free = (1..=alpha).all(|s| constraints.vertex_allowed(vertex, timestep + s));
            if (timestep as i64) >= lo && (timestep as i64) <= hi && occupancy_free {
                push(
                    &mut nodes,
                    &mut open,
                    vertex,
                    timestep + alpha,
                    goal_index + 1,
                    Arrival::Execute,
                );
            }
        }
        let next_t = timestep + 1;
        if next_t <= horizon {
            if constraints.vertex_allowed(vertex, next_t) {
                push(&mut nodes, &mut open, vertex, next_t, goal_index, Arrival::Wait);
            }
            for &neighbor in graph.neighbors(vertex).expect("start and goals are validated") {
                if constraints.vertex_allowed(neighbor, next_t)
                    && constraints.edge_allowed(vertex, neighbor, timestep)
                {
                    push(&mut nodes, &mut open, neighbor, next_t, goal_index, Arrival::Move);
                }
            }
        }
    }
    None
}

fn reconstruct(nodes: &[Node], last: usize, start: AgentStart, goal_seq: &[Goal]) -> TimedPath {
    let mut chain = Vec::new();
    let mut i = last;
    while i != usize::MAX {
        chain.push(i);
        i = nodes[i].parent;
    }
    chain.reverse();

    let mut occupied = vec![start.vertex];
    let mut actions = Vec::new();
    let mut goal_times = Vec::new();
    for &i in chain.iter().skip(1) {
        let node = nodes[i];
        match node.arrival {
            Arrival::Start => unreachable!("start node has no parent"),
            Arrival::Move => {
                actions.push(PathAction::Move(node.vertex));
                occupied.push(node.vertex);
            }
            Arrival::Wait => {
                actions.push(PathAction::Wait);
                occupied.push(node.vertex);
            }
            Arrival::Execute => {
                let goal = &goal_seq[node.goal_index - 1];
                let tau = node.timestep;
                let mu = tau - goal.duration;
                goal_times.push((goal.id, mu, tau));
                for _ in 0..goal.duration {
                    actions.push(PathAction::Execute(goal.id));
                    occupied.push(node.vertex);
                }
            }
        }
    }
    let cost = nodes[last].timestep - start.depart;
    TimedPath {
        depart: start.depart,
        occupied,
        actions,
        goal_times,
        cost,
    }
}

/// Plans the whole team. Root mode (`prior` absent) runs the low level for
/// every agent; child mode replans `replan_agent` only and copies the other
/// paths unchanged. `None` when any planned agent has no path.
#[allow(clippy::too_many_arguments)]
pub fn plan_solution(
    graph: &WorldGraph,
    starts: &[AgentStart],
    task: &Task,
    assignment: &Assignment,
    constraints: &[PathConstraintSet],
    horizon: u32,
    prior: Option<&[TimedPath]>,
    replan_agent: Option<usize>,
) -> Option<Vec<TimedPath>> {
    let mut solution = Vec::with_capacity(assignment.agent_count());
    for agent in 0..assignment.agent_count() {
        if let (Some(prior), Some(replan)) = (prior, replan_agent) {
            if agent != replan {
                solution.push(prior[agent].clone());
                continue;
            }
        }
        let sequence = assignment.sequence(agent);
        if sequence.is_empty() {
            solution.push(TimedPath::stationary(starts[agent]));
            continue;
        }
        let goals: Vec<Goal> = sequence
            .iter()
            .map(|&id| *task.goal(id).expect("assignment references task goal"))
            .collect();
        let path = mla_star(graph, starts[agent], &goals, &constraints[agent], horizon)?;
        solution.push(path);
    }
    Some(solution)
}

pub fn sum_of_path_costs(solution: &[TimedPath]) -> u64 {
    solution.iter().map(|p| p.cost as u64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_world, WorldGenConfig, WorldGraph};
    use crate::oracle::Color;
    use crate::task::AgentSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path_graph(n: usize) -> WorldGraph {
        let edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
        WorldGraph::new(n, &edges, vec![0; n], None).unwrap()
    }

    fn goal(id: usize, vertex: usize) -> Goal {
        Goal {
            id: GoalId(id),
            vertex: VertexId(vertex),
            action: Color::Red.action_tag(),
            duration: 1,
            bomb: None,
        }
    }

    fn at(vertex: usize) -> AgentStart {
        AgentStart {
            vertex: VertexId(vertex),
            depart: 0,
        }
    }

    #[test]
    fn executes_in_place_when_starting_on_goal() {
        let g = path_graph(3);
        let path = mla_star(&g, at(1), &[goal(0, 1)], &PathConstraintSet::new(), 10).unwrap();
        assert_eq!(path.goal_times, vec![(GoalId(0), 0, 1)]);
        assert_eq!(path.cost, 1);
        assert_eq!(path.actions, vec![PathAction::Execute(GoalId(0))]);
        assert_eq!(path.occupied, vec![VertexId(1), VertexId(1)]);
    }

    #[test]
    fn walks_then_executes() {
        let g = path_graph(3);
        let path = mla_star(&g, at(0), &[goal(0, 2)], &PathConstraintSet::new(), 10).unwrap();
        assert_eq!(path.goal_times, vec![(GoalId(0), 2, 3)]);
        assert_eq!(path.cost, 3);
        assert_eq!(
            path.occupied,
            vec![VertexId(0), VertexId(1), VertexId(2), VertexId(2)]
        );
    }

    #[test]
    fn completion_lower_bound_inserts_waits() {
        let g = path_graph(3);
        let mut constraints = PathConstraintSet::new();
        constraints.bound_at_least(GoalId(0), Anchor::Completion, 5);
        constraints.bound_at_most(GoalId(0), Anchor::Completion, 5);
        let path = mla_star(&g, at(0), &[goal(0, 2)], &constraints, 10).unwrap();
        assert_eq!(path.goal_times, vec![(GoalId(0), 4, 5)]);
        assert_eq!(path.cost, 5);
        let waits = path
            .actions
            .iter()
            .filter(|a| matches!(a, PathAction::Wait))
            .count();
        assert_eq!(waits, 2);
    }

    #[test]
    fn unreachable_completion_bound_returns_none() {
        let g = path_graph(3);
        let mut constraints = PathConstraintSet::new();
        constraints.bound_at_most(GoalId(0), Anchor::Completion, 1);
        assert_eq!(mla_star(&g, at(0), &[goal(0, 2)], &constraints, 10), None);
    }

    #[test]
    fn horizon_exhaustion_returns_none() {
        let g = path_graph(5);
        assert_eq!(
            mla_star(&g, at(0), &[goal(0, 4)], &PathConstraintSet::new(), 4),
            None
        );
        assert!(mla_star(&g, at(0), &[goal(0, 4)], &PathConstraintSet::new(), 5).is_some());
    }

    #[test]
    fn vertex_forbid_forces_a_wait() {
        let g = path_graph(3);
        let mut constraints = PathConstraintSet::new();
        constraints.forbid_vertex(VertexId(1), 1);
        let path = mla_star(&g, at(0), &[goal(0, 2)], &constraints, 10).unwrap();
        assert_eq!(path.cost, 4);
        assert_eq!(path.occupied[1], VertexId(0));
    }

    #[test]
    fn edge_forbid_forces_a_wait() {
        let g = path_graph(3);
        let mut constraints = PathConstraintSet::new();
        constraints.forbid_edge(VertexId(0), VertexId(1), 0);
        let path = mla_star(&g, at(0), &[goal(0, 2)], &constraints, 10).unwrap();
        assert_eq!(path.cost, 4);
        assert_eq!(path.actions[0], PathAction::Wait);
    }

    #[test]
    fn execution_blocked_by_occupancy_forbid_waits_out() {
        let g = path_graph(2);
        let mut constraints = PathConstraintSet::new();
        // Executing at timestep 0 would occupy vertex 0 at timestep 1, and
        // waiting there is equally forbidden, so the agent sidesteps to
        // vertex 1 and comes back.
        constraints.forbid_vertex(VertexId(0), 1);
        let path = mla_star(&g, at(0), &[goal(0, 0)], &constraints, 10).unwrap();
        assert_eq!(path.goal_times, vec![(GoalId(0), 2, 3)]);
        assert_eq!(path.actions[0], PathAction::Move(VertexId(1)));
        assert_eq!(path.actions[1], PathAction::Move(VertexId(0)));
    }

    #[test]
    fn two_goals_in_order() {
        let g = path_graph(4);
        let path = mla_star(
            &g,
            at(0),
            &[goal(0, 1), goal(1, 3)],
            &PathConstraintSet::new(),
            20,
        )
        .unwrap();
        assert_eq!(
            path.goal_times,
            vec![(GoalId(0), 1, 2), (GoalId(1), 4, 5)]
        );
        assert_eq!(path.cost, 5);
    }

    #[test]
    fn departure_offset_shifts_everything() {
        let g = path_graph(3);
        let start = AgentStart {
            vertex: VertexId(0),
            depart: 4,
        };
        let path = mla_star(&g, start, &[goal(0, 2)], &PathConstraintSet::new(), 20).unwrap();
        assert_eq!(path.goal_times, vec![(GoalId(0), 6, 7)]);
        assert_eq!(path.cost, 3);
        assert_eq!(path.end_time(), 7);
        assert_eq!(path.vertex_at(2), VertexId(0));
        assert_eq!(path.vertex_at(5), VertexId(1));
        assert_eq!(path.vertex_at(99), VertexId(2));
    }

    #[test]
    fn plan_solution_handles_empty_sequences_and_copies() {
        let g = path_graph(4);
        let agents = [
            AgentSpec::new(0, VertexId(0), [Color::Red.action_tag()]),
            AgentSpec::new(1, VertexId(3), [Color::Red.action_tag()]),
        ];
        let task = Task {
            goals: vec![goal(0, 1)],
            abs_constraints: vec![],
            inter_constraints: vec![],
            prec_constraints: vec![],
            horizon: 10,
        };
        let assignment = Assignment::new(&task.goals, &agents, &[0]).unwrap();
        let starts = AgentStart::initial(&agents);
        let constraints = vec![PathConstraintSet::new(), PathConstraintSet::new()];
        let root = plan_solution(&g, &starts, &task, &assignment, &constraints, 10, None, None).unwrap();
        assert_eq!(root[0].cost, 2);
        assert_eq!(root[1].cost, 0);
        assert_eq!(root[1].occupied, vec![VertexId(3)]);
        assert_eq!(sum_of_path_costs(&root), 2);

        let mut tighter = constraints.clone();
        tighter[0].forbid_vertex(VertexId(1), 1);
        let child = plan_solution(
            &g,
            &starts,
            &task,
            &assignment,
            &tighter,
            10,
            Some(&root),
            Some(0),
        )
        .unwrap();
        assert_eq!(child[1], root[1]);
        assert!(child[0].cost > root[0].cost);
    }

    #[test]
    fn sum_of_costs_is_plain_summation() {
        assert_eq!(sum_of_path_costs(&[]), 0);
        let mut p = TimedPath::stationary(at(0));
        p.cost = 3;
        let mut q = TimedPath::stationary(at(0));
        q.cost = 5;
        let r = TimedPath::stationary(at(0));
        assert_eq!(sum_of_path_costs(&[p, q, r]), 8);
    }

    // Exhaustive minimum-cost search over all timed action sequences, kept
    // free of heuristics and shared code with the planner under test.
    fn brute_force_cost(
        graph: &WorldGraph,
        start: AgentStart,
        goals: &[Goal],
        constraints: &PathConstraintSet,
        horizon: u32,
    ) -> Option<u32> {
        fn explore(
            graph: &WorldGraph,
            goals: &[Goal],
            constraints: &PathConstraintSet,
            horizon: u32,
            vertex: VertexId,
            t: u32,
            k: usize,
            seen: &mut HashSet<(VertexId, u32, usize)>,
            best: &mut Option<u32>,
        ) {
            if k == goals.len() {
                *best = Some(best.map_or(t, |b: u32| b.min(t)));
                return;
            }
            if t >= horizon || !seen.insert((vertex, t, k)) {
                return;
            }
            let goal = &goals[k];
            if vertex == goal.vertex {
                let tau = t + goal.duration;
                let (lo, hi) = constraints.execution_window(goal, horizon);
                let free = (1..=goal.duration).all(|s| constraints.vertex_allowed(vertex, t + s));
                if (t as i64) >= lo && (t as i64) <= hi && free {
                    explore(graph, goals, constraints, horizon, vertex, tau, k + 1, seen, best);
                }
            }
            if constraints.vertex_allowed(vertex, t + 1) {
                explore(graph, goals, constraints, horizon, vertex, t + 1, k, seen, best);
            }
            for &n in graph.neighbors(vertex).unwrap() {
                if constraints.vertex_allowed(n, t + 1) && constraints.edge_allowed(vertex, n, t) {
                    explore(graph, goals, constraints, horizon, n, t + 1, k, seen, best);
                }
            }
        }
        if !constraints.vertex_allowed(start.vertex, start.depart) {
            return None;
        }
        let mut best = None;
        let mut seen = HashSet::new();
        explore(
            graph,
            goals,
            constraints,
            horizon,
            start.vertex,
            start.depart,
            0,
            &mut seen,
            &mut best,
        );
        best.map(|b| b - start.depart)
    }

    fn random_case(seed: u64) -> (WorldGraph, AgentStart, Vec<Goal>, PathConstraintSet, u32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = generate_world(&WorldGenConfig::new(1, rng.gen_range(3..=6)), rng.gen());
        let n = graph.vertex_count();
        let horizon = rng.gen_range(6..=12);
        let start = AgentStart {
            vertex: VertexId(rng.gen_range(0..n)),
            depart: 0,
        };
        let goal_count = rng.gen_range(1..=2);
        let goals: Vec<Goal> = (0..goal_count).map(|i| goal(i, rng.gen_range(0..n))).collect();
        let mut constraints = PathConstraintSet::new();
        for _ in 0..rng.gen_range(0..4) {
            constraints.forbid_vertex(VertexId(rng.gen_range(0..n)), rng.gen_range(1..=horizon));
        }
        for _ in 0..rng.gen_range(0..3) {
            let v = VertexId(rng.gen_range(0..n));
            if let Some(&w) = graph.neighbors(v).unwrap().first() {
                constraints.forbid_edge(v, w, rng.gen_range(0..horizon));
            }
        }
        if rng.gen_bool(0.5) {
            let g = &goals[rng.gen_range(0..goals.len())];
            let anchor = if rng.gen_bool(0.5) { Anchor::Execution } else { Anchor::Completion };
            if rng.gen_bool(0.5) {
                constraints.bound_at_least(g.id, anchor, rng.gen_range(0..=horizon));
            } else {
                constraints.bound_at_most(g.id, anchor, rng.gen_range(0..=horizon));
            }
        }
        (graph, start, goals, constraints, horizon)
    }

    #[test]
    fn cost_matches_brute_force_on_random_cases() {
        for seed in 0..60 {
            let (graph, start, goals, constraints, horizon) = random_case(seed);
            let expected = brute_force_cost(&graph, start, &goals, &constraints, horizon);
            let got = mla_star(&graph, start, &goals, &constraints, horizon).map(|p| p.cost);
            assert_eq!(got, expected, "seed {seed}");
        }
    }

    fn check_path_satisfies(
        graph: &WorldGraph,
        start: AgentStart,
        goals: &[Goal],
        constraints: &PathConstraintSet,
        horizon: u32,
        path: &TimedPath,
    ) {
        assert_eq!(path.depart, start.depart);
        assert_eq!(path.occupied[0], start.vertex);
        assert_eq!(path.occupied.len(), path.cost as usize + 1);
        assert!(path.end_time() <= horizon);
        for (i, pair) in path.occupied.windows(2).enumerate() {
            let t = path.depart + i as u32;
            let (a, b) = (pair[0], pair[1]);
            assert!(a == b || graph.neighbors(a).unwrap().contains(&b));
            assert!(constraints.vertex_allowed(b, t + 1));
            if a != b {
                assert!(constraints.edge_allowed(a, b, t));
            }
        }
        assert_eq!(path.goal_times.len(), goals.len());
        let mut previous_tau = None;
        for (goal, &(gid, mu, tau)) in goals.iter().zip(&path.goal_times) {
            assert_eq!(gid, goal.id);
            assert_eq!(tau - mu, goal.duration);
            for t in mu..tau {
                assert_eq!(path.vertex_at(t), goal.vertex);
            }
            let (lo, hi) = constraints.execution_window(goal, horizon);
            assert!((mu as i64) >= lo && (mu as i64) <= hi);
            if let Some(p) = previous_tau {
                assert!(mu >= p);
            }
            previous_tau = Some(tau);
        }
    }

    proptest::proptest! {
        #[test]
        fn returned_paths_satisfy_their_constraints(seed in 0u64..300) {
            let (graph, start, goals, constraints, horizon) = random_case(seed);
            if let Some(path) = mla_star(&graph, start, &goals, &constraints, horizon) {
                check_path_satisfies(&graph, start, &goals, &constraints, horizon, &path);
            }
        }
    }
}
