//! Goal ordering and chunking of a task into subtasks. Goals that belong to
//! one bomb travel as a unit: the sort reorders whole sequences and the
//! partition never splits one across a chunk boundary.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::WorldGraph;
use crate::task::{
    AbsRangeConstraint, AgentStart, Anchor, GoalId, InterGoalConstraint, PrecedenceConstraint,
    Task,
};

/// How the execution order of goals is chosen before chunking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeuristicKind {
    /// Bombs in ascending order of their hard deadline.
    FuseAscending,
    /// Bombs clustered by location, clusters visited nearest-first from the
    /// agents' starting centroid.
    KmeansLocality,
    /// Keep the order the task came in.
    InputOrder,
}

impl HeuristicKind {
    pub fn name(self) -> &'static str {
        match self {
            HeuristicKind::FuseAscending => "fuse-length-ascending",
            HeuristicKind::KmeansLocality => "kmeans-locality",
            HeuristicKind::InputOrder => "input-order",
        }
    }

    pub fn from_name(name: &str) -> Option<HeuristicKind> {
        match name {
            "fuse-length-ascending" => Some(HeuristicKind::FuseAscending),
            "kmeans-locality" => Some(HeuristicKind::KmeansLocality),
            "input-order" => Some(HeuristicKind::InputOrder),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("subtask capacity must be at least 1")]
    ZeroCapacity,
    #[error("subtask capacity {beta} cannot hold a {len}-goal bomb sequence")]
    BombTooLong { beta: usize, len: usize },
}

/// A chunk of the task plus the constraints that reach back into earlier
/// chunks. Those are bound to concrete timesteps once the earlier chunks
/// have committed solutions; see [`bind_deferred`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubtaskSpec {
    pub task: Task,
    pub deferred_prec: Vec<PrecedenceConstraint>,
    pub deferred_inter: Vec<InterGoalConstraint>,
}

/// Maximal runs of goals sharing one bomb, in task order. Goals without a
/// bomb reference form singleton groups.
pub(crate) fn goal_groups(task: &Task) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (idx, goal) in task.goals.iter().enumerate() {
        let same_bomb = goal.bomb.is_some()
            && groups.last().is_some_and(|g: &Vec<usize>| {
                task.goals[g[0]].bomb.map(|b| b.bomb) == goal.bomb.map(|b| b.bomb)
            });
        if same_bomb {
            groups.last_mut().unwrap().push(idx);
        } else {
            groups.push(vec![idx]);
        }
    }
    groups
}

/// How many bomb groups the task contains.
pub(crate) fn goal_group_count(task: &Task) -> usize {
    goal_groups(task).len()
}

/// The hard deadline of a group, read from the tightest absolute upper bound
/// on any of its goals. Groups without one sort last.
fn group_deadline(task: &Task, group: &[usize]) -> u32 {
    group
        .iter()
        .flat_map(|&idx| {
            let id = task.goals[idx].id;
            task.abs_constraints
                .iter()
                .filter(move |c| c.goal == id)
                .map(|c| c.t_upper)
        })
        .min()
        .unwrap_or(u32::MAX)
}

fn rebuild(task: &Task, groups: Vec<Vec<usize>>) -> Task {
    let goals = groups
        .into_iter()
        .flatten()
        .map(|idx| task.goals[idx])
        .collect();
    Task {
        goals,
        abs_constraints: task.abs_constraints.clone(),
        inter_constraints: task.inter_constraints.clone(),
        prec_constraints: task.prec_constraints.clone(),
        horizon: task.horizon,
    }
}

/// Dependency edges between groups, as (prerequisite, dependent) pairs read
/// from cross-group precedence constraints.
fn group_dependencies(task: &Task, groups: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut group_of: BTreeMap<GoalId, usize> = BTreeMap::new();
    for (gi, group) in groups.iter().enumerate() {
        for &idx in group {
            group_of.insert(task.goals[idx].id, gi);
        }
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for c in &task.prec_constraints {
        let (Some(&from), Some(&to)) = (group_of.get(&c.earlier.0), group_of.get(&c.later.0))
        else {
            continue;
        };
        if from != to && !edges.contains(&(from, to)) {
            edges.push((from, to));
        }
    }
    edges
}

/// Group deadlines with urgency inherited from dependents: a bomb gating a
/// shorter-fused bomb adopts that fuse, because the dependent cannot be
/// touched until its gate resolves. Without this a prerequisite with a lazy
/// fuse sorts late and drags the urgent dependent behind it, past the
/// dependent's deadline.
fn inherited_deadlines(task: &Task, groups: &[Vec<usize>]) -> Vec<u32> {
    let mut deadline: Vec<u32> = groups.iter().map(|g| group_deadline(task, g)).collect();
    let edges = group_dependencies(task, groups);
    for _ in 0..groups.len() {
        let mut changed = false;
        for &(from, to) in &edges {
            if deadline[to] < deadline[from] {
                deadline[from] = deadline[to];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    deadline
}

/// Pulls each bomb's prerequisites ahead of it while otherwise preserving
/// the given order. Cross-bomb precedence constraints encode defusal
/// dependencies, and chunking strands a dependent whose prerequisite lands
/// in a later subtask: the dependent's subtask rolls out before the
/// prerequisite is ever cut, so the dependent stays blocked and its reward
/// is unreachable no matter what the search does.
fn prerequisite_first(task: &Task, groups: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let mut prereqs: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    for (from, to) in group_dependencies(task, &groups) {
        prereqs[to].push(from);
    }
    if prereqs.iter().all(Vec::is_empty) {
        return groups;
    }
    let mut placed = vec![false; groups.len()];
    let mut order: Vec<usize> = Vec::with_capacity(groups.len());
    while order.len() < groups.len() {
        let next = (0..groups.len())
            .find(|&g| !placed[g] && prereqs[g].iter().all(|&p| placed[p]))
            // Bomb chains cannot form a cycle; if one ever slips through,
            // emit the remainder as-is rather than spin.
            .unwrap_or_else(|| (0..groups.len()).find(|&g| !placed[g]).unwrap());
        placed[next] = true;
        order.push(next);
    }
    let mut slots: Vec<Option<Vec<usize>>> = groups.into_iter().map(Some).collect();
    order.into_iter().map(|g| slots[g].take().unwrap()).collect()
}

/// Reorders the task's goals according to the chosen heuristic. Equal keys
/// keep their input order, the goals of one bomb stay contiguous, and a bomb
/// never sorts ahead of one it depends on, whatever the heuristic prefers.
/// `beta` and `seed` only matter to the k-means heuristic, which derives its
/// cluster count from goals-per-subtask over the team size and needs a seed
/// for reproducible initialization.
pub fn heuristic_sort(
    graph: &WorldGraph,
    starts: &[AgentStart],
    task: &Task,
    kind: HeuristicKind,
    beta: usize,
    seed: u64,
) -> Task {
    let groups = goal_groups(task);
    let ordered = match kind {
        HeuristicKind::InputOrder => groups,
        HeuristicKind::FuseAscending => {
            let deadlines = inherited_deadlines(task, &groups);
            let mut keyed: Vec<(u32, Vec<usize>)> = deadlines.into_iter().zip(groups).collect();
            keyed.sort_by_key(|&(key, _)| key);
            keyed.into_iter().map(|(_, g)| g).collect()
        }
        HeuristicKind::KmeansLocality => kmeans_order(graph, starts, task, &groups, beta, seed),
    };
    rebuild(task, prerequisite_first(task, ordered))
}

/// Lloyd's algorithm over group locations with a fixed iteration budget.
/// Ties go to the lowest cluster index and empty clusters keep their last
/// centroid, so the outcome is a pure function of the seed.
fn kmeans_order(
    graph: &WorldGraph,
    starts: &[AgentStart],
    task: &Task,
    groups: &[Vec<usize>],
    beta: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    const ITERATIONS: usize = 20;
    let coords = graph.coords_or_synthesized();
    let point = |group: &[usize]| -> (f64, f64) {
        let mut x = 0.0;
        let mut y = 0.0;
        for &idx in group {
            let (px, py) = coords[task.goals[idx].vertex.0];
            x += px;
            y += py;
        }
        (x / group.len() as f64, y / group.len() as f64)
    };
    let points: Vec<(f64, f64)> = groups.iter().map(|g| point(g)).collect();

    let team = starts.len().max(1);
    let k = (beta / team).max(1).min(points.len().max(1));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut rng);
    let mut centroids: Vec<(f64, f64)> = order[..k].iter().map(|&i| points[i]).collect();

    let dist2 = |a: (f64, f64), b: (f64, f64)| {
        let dx = a.0 - b.0;
        let dy = a.1 - b.1;
        dx * dx + dy * dy
    };

    let mut membership = vec![0usize; points.len()];
    for _ in 0..ITERATIONS {
        for (i, &p) in points.iter().enumerate() {
            membership[i] = (0..k)
                .min_by(|&a, &b| dist2(p, centroids[a]).total_cmp(&dist2(p, centroids[b])))
                .unwrap();
        }
        for c in 0..k {
            let members: Vec<usize> = (0..points.len()).filter(|&i| membership[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let sum = members.iter().fold((0.0, 0.0), |acc, &i| {
                (acc.0 + points[i].0, acc.1 + points[i].1)
            });
            centroids[c] = (sum.0 / members.len() as f64, sum.1 / members.len() as f64);
        }
    }

    let agent_centroid = {
        let sum = starts.iter().fold((0.0, 0.0), |acc, s| {
            let (px, py) = coords[s.vertex.0];
            (acc.0 + px, acc.1 + py)
        });
        let n = starts.len().max(1) as f64;
        (sum.0 / n, sum.1 / n)
    };
    let mut visit: Vec<usize> = (0..k).collect();
    visit.sort_by(|&a, &b| {
        dist2(centroids[a], agent_centroid)
            .total_cmp(&dist2(centroids[b], agent_centroid))
            .then(a.cmp(&b))
    });

    let mut ordered = Vec::with_capacity(groups.len());
    for c in visit {
        for (i, group) in groups.iter().enumerate() {
            if membership[i] == c {
                ordered.push(group.clone());
            }
        }
    }
    ordered
}

/// Splits the (already sorted) task into consecutive chunks of at most
/// `beta` goals. A bomb whose sequence would straddle a boundary moves
/// whole into the next chunk, so chunks may close early. Constraints with
/// both endpoints inside a chunk stay as they are; constraints reaching
/// back to an earlier chunk are deferred for [`bind_deferred`]; constraints
/// reaching forward impose nothing on the earlier chunk and are handled
/// when the later chunk comes up.
pub fn partition(task: &Task, beta: usize) -> Result<Vec<SubtaskSpec>, PartitionError> {
    Ok(split_constraints(task, chunk_by_beta(task, beta)?))
}

/// Splits the task into chunks of `per_subtask` bombs each; the resulting
/// goals-per-subtask is the sum of the chunk's sequence lengths.
pub fn partition_by_bombs(
    task: &Task,
    per_subtask: usize,
) -> Result<Vec<SubtaskSpec>, PartitionError> {
    Ok(split_constraints(task, chunk_by_bombs(task, per_subtask)?))
}

/// The chunk layout behind [`partition`]: greedy packing of whole groups up
/// to `beta` goals per chunk.
pub(crate) fn chunk_by_beta(
    task: &Task,
    beta: usize,
) -> Result<Vec<Vec<Vec<usize>>>, PartitionError> {
    if beta == 0 {
        return Err(PartitionError::ZeroCapacity);
    }
    let groups = goal_groups(task);
    if let Some(too_long) = groups.iter().find(|g| g.len() > beta) {
        return Err(PartitionError::BombTooLong {
            beta,
            len: too_long.len(),
        });
    }
    let mut chunks: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut current: Vec<Vec<usize>> = Vec::new();
    let mut filled = 0usize;
    for group in groups {
        if filled + group.len() > beta {
            chunks.push(std::mem::take(&mut current));
            filled = 0;
        }
        filled += group.len();
        current.push(group);
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    Ok(chunks)
}

/// The chunk layout behind [`partition_by_bombs`]: `per_subtask` groups per
/// chunk in order.
pub(crate) fn chunk_by_bombs(
    task: &Task,
    per_subtask: usize,
) -> Result<Vec<Vec<Vec<usize>>>, PartitionError> {
    if per_subtask == 0 {
        return Err(PartitionError::ZeroCapacity);
    }
    let groups = goal_groups(task);
    Ok(groups.chunks(per_subtask).map(|c| c.to_vec()).collect())
}

pub(crate) fn split_constraints(task: &Task, chunks: Vec<Vec<Vec<usize>>>) -> Vec<SubtaskSpec> {
    let mut chunk_of: BTreeMap<GoalId, usize> = BTreeMap::new();
    for (ci, chunk) in chunks.iter().enumerate() {
        for &idx in chunk.iter().flatten() {
            chunk_of.insert(task.goals[idx].id, ci);
        }
    }

    chunks
        .iter()
        .enumerate()
        .map(|(ci, chunk)| {
            let goals: Vec<_> = chunk
                .iter()
                .flatten()
                .map(|&idx| task.goals[idx])
                .collect();
            let here = |id: GoalId| chunk_of.get(&id) == Some(&ci);
            let earlier = |id: GoalId| chunk_of.get(&id).is_some_and(|&c| c < ci);

            let abs_constraints = task
                .abs_constraints
                .iter()
                .filter(|c| here(c.goal))
                .cloned()
                .collect();
            let mut prec_constraints = Vec::new();
            let mut deferred_prec = Vec::new();
            for c in &task.prec_constraints {
                let (a, b) = (c.earlier.0, c.later.0);
                if here(a) && here(b) {
                    prec_constraints.push(*c);
                } else if (here(a) && earlier(b)) || (here(b) && earlier(a)) {
                    deferred_prec.push(*c);
                }
            }
            let mut inter_constraints = Vec::new();
            let mut deferred_inter = Vec::new();
            for c in &task.inter_constraints {
                let (a, b) = (c.from.0, c.to.0);
                if here(a) && here(b) {
                    inter_constraints.push(*c);
                } else if (here(a) && earlier(b)) || (here(b) && earlier(a)) {
                    deferred_inter.push(*c);
                }
            }

            SubtaskSpec {
                task: Task {
                    goals,
                    abs_constraints,
                    inter_constraints,
                    prec_constraints,
                    horizon: task.horizon,
                },
                deferred_prec,
                deferred_inter,
            }
        })
        .collect()
}

/// Turns the deferred cross-chunk constraints into absolute bounds on this
/// chunk's goals, using the committed execution and completion timesteps of
/// earlier chunks. A referenced goal with no committed timestep leaves the
/// dependent goal without a legal slot, encoded as an empty range.
pub fn bind_deferred(
    spec: &SubtaskSpec,
    realized: &BTreeMap<GoalId, (u32, u32)>,
    horizon: u32,
) -> Task {
    let mut task = spec.task.clone();
    let local: BTreeMap<GoalId, ()> = task.goals.iter().map(|g| (g.id, ())).collect();
    let value = |id: GoalId, anchor: Anchor| -> Option<i64> {
        realized.get(&id).map(|&(mu, tau)| match anchor {
            Anchor::Execution => mu as i64,
            Anchor::Completion => tau as i64,
        })
    };
    let clamp = |t: i64| t.clamp(0, horizon as i64) as u32;
    let empty_range = |goal: GoalId, anchor: Anchor| AbsRangeConstraint {
        goal,
        anchor,
        t_lower: 1,
        t_upper: 0,
    };

    for c in &spec.deferred_prec {
        if local.contains_key(&c.later.0) {
            // Earlier goal committed at r: the later anchor starts at r + 1.
            match value(c.earlier.0, c.earlier.1) {
                Some(r) if r < horizon as i64 => {
                    task.abs_constraints.push(AbsRangeConstraint {
                        goal: c.later.0,
                        anchor: c.later.1,
                        t_lower: clamp(r + 1),
                        t_upper: horizon,
                    })
                }
                _ => task.abs_constraints.push(empty_range(c.later.0, c.later.1)),
            }
        } else {
            // The later goal is already committed; this goal must precede it.
            match value(c.later.0, c.later.1) {
                Some(r) if r >= 1 => task.abs_constraints.push(AbsRangeConstraint {
                    goal: c.earlier.0,
                    anchor: c.earlier.1,
                    t_lower: 0,
                    t_upper: clamp(r - 1),
                }),
                _ => task.abs_constraints.push(empty_range(c.earlier.0, c.earlier.1)),
            }
        }
    }
    for c in &spec.deferred_inter {
        if local.contains_key(&c.to.0) {
            // anchor(to) <= committed anchor(from) + t_inter.
            match value(c.from.0, c.from.1) {
                Some(r) if r + c.t_inter >= 0 => task.abs_constraints.push(AbsRangeConstraint {
                    goal: c.to.0,
                    anchor: c.to.1,
                    t_lower: 0,
                    t_upper: clamp(r + c.t_inter),
                }),
                _ => task.abs_constraints.push(empty_range(c.to.0, c.to.1)),
            }
        } else {
            // anchor(from) >= committed anchor(to) - t_inter.
            match value(c.to.0, c.to.1) {
                Some(r) => task.abs_constraints.push(AbsRangeConstraint {
                    goal: c.from.0,
                    anchor: c.from.1,
                    t_lower: clamp(r - c.t_inter),
                    t_upper: horizon,
                }),
                None => task.abs_constraints.push(empty_range(c.from.0, c.from.1)),
            }
        }
    }
    task
}
