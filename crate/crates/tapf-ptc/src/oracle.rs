//! Bomb-defusing episode simulator: the deterministic scorer that evaluates
//! candidate solutions, plus the random instance generator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{generate_world, VertexId, WorldGenConfig, WorldGraph};
use crate::task::{ActionTag, AgentSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Color {
    Red,
    Green,
    Blue,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Red, Color::Green, Color::Blue];

    pub fn letter(self) -> char {
        match self {
            Color::Red => 'R',
            Color::Green => 'G',
            Color::Blue => 'B',
        }
    }

    pub fn from_letter(c: char) -> Option<Color> {
        match c {
            'R' => Some(Color::Red),
            'G' => Some(Color::Green),
            'B' => Some(Color::Blue),
            _ => None,
        }
    }

    pub fn action_tag(self) -> ActionTag {
        ActionTag(self as u16)
    }

    pub fn from_action_tag(tag: ActionTag) -> Option<Color> {
        Color::ALL.get(tag.0 as usize).copied()
    }
}

impl std::fmt::Display for Color {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.letter())
    }
}

pub const REWARD_PER_SEQUENCE_STEP: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BombSpec {
    pub id: usize,
    pub vertex: VertexId,
    /// 1 to 3 distinct colors, cut in order.
    pub sequence: Vec<Color>,
    /// Deadline for full defusal, measured from episode start.
    pub fuse_seconds: u32,
    /// Window between consecutive cut completions once cutting has begun.
    pub countdown_seconds: u32,
    /// Prerequisite bomb that must resolve before this one is touched.
    pub depends_on: Option<usize>,
}

impl BombSpec {
    pub fn reward(&self) -> u32 {
        REWARD_PER_SEQUENCE_STEP * self.sequence.len() as u32
    }

    pub fn sequence_string(&self) -> String {
        self.sequence.iter().map(|c| c.letter()).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("seconds_per_timestep must be positive")]
    ZeroTimestep,
    #[error("mission shorter than one timestep")]
    ZeroHorizon,
    #[error("no agents")]
    NoAgents,
    #[error("agent {0} out of order: id must equal position")]
    AgentIdMismatch(usize),
    #[error("agent {0} starts at invalid vertex")]
    BadAgentStart(usize),
    #[error("agent {0} has no capabilities")]
    NoCapabilities(usize),
    #[error("bomb {0} out of order: id must equal position")]
    BombIdMismatch(usize),
    #[error("bomb {0} placed on invalid vertex")]
    BadBombVertex(usize),
    #[error("bomb {0} sequence length {1} outside [1, 3]")]
    BadSequenceLength(usize, usize),
    #[error("bomb {0} repeats a color")]
    RepeatedColor(usize),
    #[error("bomb {0} has a non-positive timer")]
    NonPositiveTimer(usize),
    #[error("bomb {0} depends on unknown bomb {1}")]
    UnknownDependency(usize, usize),
    #[error("bomb {0} depends on itself")]
    SelfDependency(usize),
    #[error("bombs {0} and {1} both depend on bomb {2}")]
    ForkedDependency(usize, usize, usize),
    #[error("dependency cycle through bomb {0}")]
    DependencyCycle(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub graph: WorldGraph,
    pub agents: Vec<AgentSpec>,
    pub bombs: Vec<BombSpec>,
    pub mission_length_seconds: u32,
    pub seconds_per_timestep: u32,
}

impl InstanceSpec {
    /// Terminal timestep of an episode.
    pub fn horizon(&self) -> u32 {
        self.mission_length_seconds / self.seconds_per_timestep
    }

    /// Timer conversions round down: a deadline never gets looser in
    /// timesteps than it was in seconds.
    pub fn fuse_timesteps(&self, bomb: usize) -> u32 {
        self.bombs[bomb].fuse_seconds / self.seconds_per_timestep
    }

    pub fn countdown_timesteps(&self, bomb: usize) -> u32 {
        self.bombs[bomb].countdown_seconds / self.seconds_per_timestep
    }

    pub fn max_return(&self) -> f64 {
        self.bombs.iter().map(|b| b.reward() as f64).sum()
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.seconds_per_timestep == 0 {
            return Err(InstanceError::ZeroTimestep);
        }
        if self.horizon() == 0 {
            return Err(InstanceError::ZeroHorizon);
        }
        if self.agents.is_empty() {
            return Err(InstanceError::NoAgents);
        }
        for (i, agent) in self.agents.iter().enumerate() {
            if agent.id != i {
                return Err(InstanceError::AgentIdMismatch(i));
            }
            if !self.graph.contains(agent.start_vertex) {
                return Err(InstanceError::BadAgentStart(i));
            }
            if agent.capabilities.is_empty() {
                return Err(InstanceError::NoCapabilities(i));
            }
        }
        let mut dependents: Vec<Option<usize>> = vec![None; self.bombs.len()];
        for (b, bomb) in self.bombs.iter().enumerate() {
            if bomb.id != b {
                return Err(InstanceError::BombIdMismatch(b));
            }
            if !self.graph.contains(bomb.vertex) {
                return Err(InstanceError::BadBombVertex(b));
            }
            if bomb.sequence.is_empty() || bomb.sequence.len() > 3 {
                return Err(InstanceError::BadSequenceLength(b, bomb.sequence.len()));
            }
            let mut seen = [false; 3];
            for &c in &bomb.sequence {
                if std::mem::replace(&mut seen[c as usize], true) {
                    return Err(InstanceError::RepeatedColor(b));
                }
            }
            if bomb.fuse_seconds == 0 || bomb.countdown_seconds == 0 {
                return Err(InstanceError::NonPositiveTimer(b));
            }
            if let Some(dep) = bomb.depends_on {
                if dep >= self.bombs.len() {
                    return Err(InstanceError::UnknownDependency(b, dep));
                }
                if dep == b {
                    return Err(InstanceError::SelfDependency(b));
                }
                if let Some(other) = dependents[dep] {
                    return Err(InstanceError::ForkedDependency(other, b, dep));
                }
                dependents[dep] = Some(b);
            }
        }
        for b in 0..self.bombs.len() {
            let mut slow = b;
            let mut fast = b;
            loop {
                fast = match self.bombs[fast].depends_on {
                    Some(d) => d,
                    None => break,
                };
                fast = match self.bombs[fast].depends_on {
                    Some(d) => d,
                    None => break,
                };
                slow = self.bombs[slow].depends_on.unwrap();
                if slow == fast {
                    return Err(InstanceError::DependencyCycle(b));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BombStatus {
    /// Waiting on its prerequisite; any cut explodes it.
    Blocked,
    /// Ready for its first cut.
    Active,
    /// `cut` colors removed, the latest completing at `last_tau`. The next
    /// cut must complete by `last_tau` plus the countdown window, and may
    /// start no earlier than `last_tau + 1`.
    InProgress { cut: usize, last_tau: u32 },
    Defused,
    Exploded,
}

impl BombStatus {
    pub fn resolved(self) -> bool {
        matches!(self, BombStatus::Defused | BombStatus::Exploded)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EpisodeState {
    pub timestep: u32,
    pub agent_vertices: Vec<VertexId>,
    pub bombs: Vec<BombStatus>,
    /// Timestep each bomb became defused or exploded.
    pub resolved_at: Vec<Option<u32>>,
    pub reward: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentAction {
    Move(VertexId),
    Wait,
    Cut(Color),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointAction(pub Vec<AgentAction>);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("joint action has {got} entries for {want} agents")]
    ActionArity { got: usize, want: usize },
    #[error("agent {agent} at timestep {timestep}: move {from} -> {target} is not an edge")]
    NonAdjacentMove {
        agent: usize,
        timestep: u32,
        from: VertexId,
        target: VertexId,
    },
    #[error("agent {agent} at timestep {timestep}: cuts {color} without the tool")]
    UntooledCut {
        agent: usize,
        timestep: u32,
        color: Color,
    },
    #[error("agent {agent} at timestep {timestep}: cuts at vertex {vertex}, which never held a bomb")]
    CutAtBomblessVertex {
        agent: usize,
        timestep: u32,
        vertex: VertexId,
    },
    #[error("step on a finished episode at timestep {0}")]
    EpisodeOver(u32),
    #[error(transparent)]
    InvalidInstance(#[from] InstanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplosionCause {
    WrongColor,
    PrematureCut,
    CountdownExpired,
    FuseExpired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutRecord {
    pub bomb: usize,
    pub position: usize,
    pub agent: usize,
    pub mu: u32,
    pub tau: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Explosion {
    pub bomb: usize,
    pub timestep: u32,
    pub cause: ExplosionCause,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub reward_delta: u32,
    pub done: bool,
    pub cuts: Vec<CutRecord>,
    pub explosions: Vec<Explosion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutReport {
    pub ret: f64,
    pub cuts: Vec<CutRecord>,
    pub explosions: Vec<Explosion>,
    pub final_statuses: Vec<BombStatus>,
    pub end_timestep: u32,
}

impl InstanceSpec {
    pub fn reset(&self) -> EpisodeState {
        EpisodeState {
            timestep: 0,
            agent_vertices: self.agents.iter().map(|a| a.start_vertex).collect(),
            bombs: self
                .bombs
                .iter()
                .map(|b| {
                    if b.depends_on.is_some() {
                        BombStatus::Blocked
                    } else {
                        BombStatus::Active
                    }
                })
                .collect(),
            resolved_at: vec![None; self.bombs.len()],
            reward: 0,
        }
    }

    pub fn is_done(&self, state: &EpisodeState) -> bool {
        state.timestep >= self.horizon() || state.bombs.iter().all(|s| s.resolved())
    }

    /// Advances one timestep. All agents act simultaneously: cuts are judged
    /// against the pre-step bomb state, then timers advance. Malformed
    /// actions are rejected; rule-breaking cuts explode bombs instead.
    pub fn step(&self, state: &mut EpisodeState, action: &JointAction) -> Result<StepReport, OracleError> {
        if self.is_done(state) {
            return Err(OracleError::EpisodeOver(state.timestep));
        }
        if action.0.len() != self.agents.len() {
            return Err(OracleError::ActionArity {
                got: action.0.len(),
                want: self.agents.len(),
            });
        }
        let t = state.timestep;
        let u = t + 1;

        // A dependent becomes touchable only strictly after its
        // prerequisite resolves: cuts starting at the resolution timestep
        // are still premature.
        for b in 0..self.bombs.len() {
            if state.bombs[b] == BombStatus::Blocked {
                let dep = self.bombs[b].depends_on.expect("blocked bomb has a dependency");
                if let Some(r) = state.resolved_at[dep] {
                    if r < t {
                        state.bombs[b] = BombStatus::Active;
                    }
                }
            }
        }

        let mut new_vertices = state.agent_vertices.clone();
        let mut groups: Vec<Vec<(usize, Color)>> = vec![Vec::new(); self.bombs.len()];
        let mut targeted = vec![false; self.bombs.len()];
        for (agent, act) in action.0.iter().enumerate() {
            match *act {
                AgentAction::Wait => {}
                AgentAction::Move(target) => {
                    let from = state.agent_vertices[agent];
                    let ok = self
                        .graph
                        .neighbors(from)
                        .map(|ns| ns.contains(&target))
                        .unwrap_or(false);
                    if !ok {
                        return Err(OracleError::NonAdjacentMove {
                            agent,
                            timestep: t,
                            from,
                            target,
                        });
                    }
                    new_vertices[agent] = target;
                }
                AgentAction::Cut(color) => {
                    if !self.agents[agent].can_perform(color.action_tag()) {
                        return Err(OracleError::UntooledCut {
                            agent,
                            timestep: t,
                            color,
                        });
                    }
                    let vertex = state.agent_vertices[agent];
                    let here: Vec<usize> = (0..self.bombs.len())
                        .filter(|&b| self.bombs[b].vertex == vertex)
                        .collect();
                    if here.is_empty() {
                        return Err(OracleError::CutAtBomblessVertex {
                            agent,
                            timestep: t,
                            vertex,
                        });
                    }
                    let unresolved: Vec<usize> = here
                        .iter()
                        .copied()
                        .filter(|&b| !state.bombs[b].resolved())
                        .collect();
                    // Cutting where every bomb is already resolved is a
                    // no-op, so committed plans replay cleanly after an
                    // explosion elsewhere changed nothing locally.
                    if unresolved.is_empty() {
                        continue;
                    }
                    let next_color = |b: usize| -> Option<Color> {
                        match state.bombs[b] {
                            BombStatus::Active => Some(self.bombs[b].sequence[0]),
                            BombStatus::InProgress { cut, .. } => {
                                Some(self.bombs[b].sequence[cut])
                            }
                            _ => None,
                        }
                    };
                    let matching: Vec<usize> = unresolved
                        .iter()
                        .copied()
                        .filter(|&b| next_color(b) == Some(color))
                        .collect();
                    // Prefer a matching bomb nobody picked yet, so two
                    // agents issuing the same color on a shared vertex work
                    // on two bombs rather than crowding one.
                    let target = matching
                        .iter()
                        .copied()
                        .find(|&b| !targeted[b])
                        .or_else(|| matching.first().copied())
                        .or_else(|| {
                            unresolved.iter().copied().find(|&b| {
                                state.bombs[b] == BombStatus::Blocked
                                    && self.bombs[b].sequence[0] == color
                            })
                        })
                        .unwrap_or(unresolved[0]);
                    targeted[target] = true;
                    groups[target].push((agent, color));
                }
            }
        }
        state.agent_vertices = new_vertices;

        let mut cuts = Vec::new();
        let mut explosions = Vec::new();
        let mut reward_delta = 0;
        for b in 0..self.bombs.len() {
            if groups[b].is_empty() {
                continue;
            }
            let explode = |cause: ExplosionCause, state: &mut EpisodeState, explosions: &mut Vec<Explosion>| {
                state.bombs[b] = BombStatus::Exploded;
                state.resolved_at[b] = Some(u);
                explosions.push(Explosion {
                    bomb: b,
                    timestep: u,
                    cause,
                });
            };
            let next = match state.bombs[b] {
                BombStatus::Blocked => {
                    explode(ExplosionCause::PrematureCut, state, &mut explosions);
                    continue;
                }
                BombStatus::Active => 0,
                BombStatus::InProgress { cut, last_tau } => {
                    if t <= last_tau {
                        explode(ExplosionCause::PrematureCut, state, &mut explosions);
                        continue;
                    }
                    cut
                }
                BombStatus::Defused | BombStatus::Exploded => unreachable!("resolved bombs are never targeted"),
            };
            let want = self.bombs[b].sequence[next];
            if groups[b].iter().any(|&(_, c)| c != want) {
                explode(ExplosionCause::WrongColor, state, &mut explosions);
                continue;
            }
            for &(agent, _) in &groups[b] {
                cuts.push(CutRecord {
                    bomb: b,
                    position: next,
                    agent,
                    mu: t,
                    tau: u,
                });
            }
            if next + 1 == self.bombs[b].sequence.len() {
                state.bombs[b] = BombStatus::Defused;
                state.resolved_at[b] = Some(u);
                reward_delta += self.bombs[b].reward();
            } else {
                state.bombs[b] = BombStatus::InProgress {
                    cut: next + 1,
                    last_tau: u,
                };
            }
        }

        for b in 0..self.bombs.len() {
            let expired = match state.bombs[b] {
                BombStatus::InProgress { last_tau, .. } if u >= last_tau + self.countdown_timesteps(b) => {
                    Some(ExplosionCause::CountdownExpired)
                }
                BombStatus::Blocked | BombStatus::Active | BombStatus::InProgress { .. }
                    if u >= self.fuse_timesteps(b) =>
                {
                    Some(ExplosionCause::FuseExpired)
                }
                _ => None,
            };
            if let Some(cause) = expired {
                state.bombs[b] = BombStatus::Exploded;
                state.resolved_at[b] = Some(u);
                explosions.push(Explosion {
                    bomb: b,
                    timestep: u,
                    cause,
                });
            }
        }

        state.reward += reward_delta;
        state.timestep = u;
        Ok(StepReport {
            reward_delta,
            done: self.is_done(state),
            cuts,
            explosions,
        })
    }

    /// Replays dense per-agent action rows from timestep 0 until the
    /// episode ends. Agents whose rows run out wait in place.
    pub fn rollout(&self, rows: &[Vec<AgentAction>]) -> Result<RolloutReport, OracleError> {
        if rows.len() != self.agents.len() {
            return Err(OracleError::ActionArity {
                got: rows.len(),
                want: self.agents.len(),
            });
        }
        let mut state = self.reset();
        let mut cuts = Vec::new();
        let mut explosions = Vec::new();
        while !self.is_done(&state) {
            let t = state.timestep as usize;
            let joint = JointAction(
                rows.iter()
                    .map(|row| row.get(t).copied().unwrap_or(AgentAction::Wait))
                    .collect(),
            );
            let report = self.step(&mut state, &joint)?;
            cuts.extend(report.cuts);
            explosions.extend(report.explosions);
        }
        Ok(RolloutReport {
            ret: state.reward as f64,
            cuts,
            explosions,
            final_statuses: state.bombs.clone(),
            end_timestep: state.timestep,
        })
    }

    /// Return of past solution segments followed by a candidate segment,
    /// concatenated per agent and replayed from reset.
    pub fn rollout_return(&self, past: &[TeamTrace], current: &TeamTrace) -> Result<f64, OracleError> {
        Ok(self.rollout_report(past, current)?.ret)
    }

    pub fn rollout_report(&self, past: &[TeamTrace], current: &TeamTrace) -> Result<RolloutReport, OracleError> {
        let mut rows = vec![Vec::new(); self.agents.len()];
        for segment in past.iter().chain(std::iter::once(current)) {
            if segment.rows.len() != self.agents.len() {
                return Err(OracleError::ActionArity {
                    got: segment.rows.len(),
                    want: self.agents.len(),
                });
            }
            for (row, seg) in rows.iter_mut().zip(&segment.rows) {
                row.extend_from_slice(seg);
            }
        }
        self.rollout(&rows)
    }
}

/// One action row per agent; a solution segment in replay form. Segments
/// concatenate per agent, so each row continues where the previous
/// segment's row for that agent ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeamTrace {
    pub rows: Vec<Vec<AgentAction>>,
}

impl TeamTrace {
    pub fn empty(agents: usize) -> Self {
        TeamTrace {
            rows: vec![Vec::new(); agents],
        }
    }
}

/// Instance randomization ranges; inclusive bounds.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub regions: usize,
    pub nodes_per_region: usize,
    pub edge_density: f64,
    pub agent_count: usize,
    pub bombs_per_region: usize,
    pub mission_length_seconds: u32,
    pub seconds_per_timestep: u32,
    pub fuse_seconds_range: (u32, u32),
    /// Granularity of fuse draws, in seconds. Field defaults draw whole
    /// minutes.
    pub fuse_step_seconds: u32,
    pub countdown_seconds: u32,
    pub sequence_length_range: (usize, usize),
    pub chain_length_range: (usize, usize),
}

impl GeneratorConfig {
    /// Field defaults: a 15 minute mission over three regions, fuses of 1
    /// to 15 whole minutes, sequences of 1 to 3 colors, one dependency
    /// chain of length 1 to 4 per region, 15 second countdowns.
    pub fn field_defaults() -> Self {
        GeneratorConfig {
            regions: 3,
            nodes_per_region: 40,
            edge_density: 1.3,
            agent_count: 3,
            bombs_per_region: 5,
            mission_length_seconds: 15 * 60,
            seconds_per_timestep: 1,
            fuse_seconds_range: (60, 15 * 60),
            fuse_step_seconds: 60,
            countdown_seconds: 15,
            sequence_length_range: (1, 3),
            chain_length_range: (1, 4),
        }
    }
}

/// Draws a random instance: random world, one shared agent start, random
/// bomb placements, color sequences, and fuses, plus one dependency chain
/// per region. Two-of-three color tools are resampled until the team
/// covers all three colors (possible whenever there are two or more
/// agents). Deterministic per seed; solvability is not guaranteed.
pub fn generate_instance(config: &GeneratorConfig, seed: u64) -> InstanceSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world_config = WorldGenConfig {
        region_count: config.regions,
        nodes_per_region: config.nodes_per_region,
        edge_density: config.edge_density,
        bridges_per_pair: 1,
    };
    let graph = generate_world(&world_config, rng.gen());

    let start = VertexId(rng.gen_range(0..graph.vertex_count()));
    let agents = loop {
        let mut agents = Vec::with_capacity(config.agent_count);
        let mut covered = [false; 3];
        for id in 0..config.agent_count {
            let mut colors = Color::ALL.to_vec();
            colors.shuffle(&mut rng);
            colors.truncate(2);
            colors.sort_unstable();
            for &c in &colors {
                covered[c as usize] = true;
            }
            agents.push(AgentSpec::new(id, start, colors.iter().map(|c| c.action_tag())));
        }
        if covered.iter().all(|&c| c) || config.agent_count < 2 {
            break agents;
        }
    };

    let mut bombs = Vec::new();
    for region in 0..config.regions {
        let region_vertices = graph.region_vertices(region as u16);
        let first = bombs.len();
        for _ in 0..config.bombs_per_region {
            let vertex = region_vertices[rng.gen_range(0..region_vertices.len())];
            let (lo, hi) = config.sequence_length_range;
            let len = rng.gen_range(lo..=hi).clamp(1, 3);
            let mut sequence = Color::ALL.to_vec();
            sequence.shuffle(&mut rng);
            sequence.truncate(len);
            let (flo, fhi) = config.fuse_seconds_range;
            let step = config.fuse_step_seconds.max(1);
            let fuse_seconds = rng.gen_range(flo / step..=fhi / step).max(1) * step;
            bombs.push(BombSpec {
                id: bombs.len(),
                vertex,
                sequence,
                fuse_seconds,
                countdown_seconds: config.countdown_seconds,
                depends_on: None,
            });
        }
        let (clo, chi) = config.chain_length_range;
        let length = rng.gen_range(clo..=chi).min(config.bombs_per_region);
        if length >= 2 {
            let mut members: Vec<usize> = (first..bombs.len()).collect();
            members.shuffle(&mut rng);
            members.truncate(length);
            for pair in members.windows(2) {
                bombs[pair[1]].depends_on = Some(pair[0]);
            }
        }
    }

    let instance = InstanceSpec {
        graph,
        agents,
        bombs,
        mission_length_seconds: config.mission_length_seconds,
        seconds_per_timestep: config.seconds_per_timestep,
    };
    debug_assert_eq!(instance.validate(), Ok(()));
    instance
}

/// Path-graph instance with two agents covering all three colors, both at
/// vertex 0. Graph is just large enough for the bombs.
#[cfg(test)]
pub(crate) fn test_instance(bombs: Vec<BombSpec>, mission_length_seconds: u32, seconds_per_timestep: u32) -> InstanceSpec {
    let max_vertex = bombs.iter().map(|b| b.vertex.0).max().unwrap_or(0);
    let n = (max_vertex + 1).max(3);
    let edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
    let graph = WorldGraph::new(n, &edges, vec![0; n], None).unwrap();
    let agents = vec![
        AgentSpec::new(0, VertexId(0), [Color::Red.action_tag(), Color::Green.action_tag()]),
        AgentSpec::new(1, VertexId(0), [Color::Green.action_tag(), Color::Blue.action_tag()]),
    ];
    InstanceSpec {
        graph,
        agents,
        bombs,
        mission_length_seconds,
        seconds_per_timestep,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bomb(id: usize, vertex: usize, colors: &str, fuse_seconds: u32, depends_on: Option<usize>) -> BombSpec {
        BombSpec {
            id,
            vertex: VertexId(vertex),
            sequence: colors.chars().map(|c| Color::from_letter(c).unwrap()).collect(),
            fuse_seconds,
            countdown_seconds: 15,
            depends_on,
        }
    }

    fn wait(n: usize) -> Vec<AgentAction> {
        vec![AgentAction::Wait; n]
    }

    #[test]
    fn reset_blocks_dependents() {
        let instance = test_instance(
            vec![bomb(0, 1, "R", 60, None), bomb(1, 2, "G", 60, Some(0))],
            120,
            1,
        );
        let state = instance.reset();
        assert_eq!(state.bombs, vec![BombStatus::Active, BombStatus::Blocked]);
        assert_eq!(state.reward, 0);
        assert_eq!(state.timestep, 0);
        assert_eq!(instance.reset(), state);
    }

    #[test]
    fn no_bombs_is_immediately_done() {
        let instance = test_instance(vec![], 120, 1);
        let state = instance.reset();
        assert!(instance.is_done(&state));
        assert_eq!(instance.max_return(), 0.0);
        let report = instance.rollout(&[Vec::new(), Vec::new()]).unwrap();
        assert_eq!(report.ret, 0.0);
        assert_eq!(report.end_timestep, 0);
    }

    // Two agents covering {R,G} and {G,B} stand on the bomb and alternate
    // cuts with the required one-step gap after each completion.
    #[test]
    fn full_defusal_of_three_color_bomb_pays_thirty() {
        let instance = test_instance(vec![bomb(0, 0, "RGB", 60, None)], 120, 1);
        let rows = vec![
            vec![
                AgentAction::Cut(Color::Red),
                AgentAction::Wait,
                AgentAction::Cut(Color::Green),
            ],
            vec![
                AgentAction::Wait,
                AgentAction::Wait,
                AgentAction::Wait,
                AgentAction::Wait,
                AgentAction::Cut(Color::Blue),
            ],
        ];
        let report = instance.rollout(&rows).unwrap();
        assert_eq!(report.ret, 30.0);
        assert_eq!(report.final_statuses, vec![BombStatus::Defused]);
        assert_eq!(
            report.cuts,
            vec![
                CutRecord { bomb: 0, position: 0, agent: 0, mu: 0, tau: 1 },
                CutRecord { bomb: 0, position: 1, agent: 0, mu: 2, tau: 3 },
                CutRecord { bomb: 0, position: 2, agent: 1, mu: 4, tau: 5 },
            ]
        );
        assert_eq!(report.end_timestep, 5);
    }

    #[test]
    fn back_to_back_cut_is_premature() {
        let instance = test_instance(vec![bomb(0, 0, "RG", 60, None)], 120, 1);
        let rows = vec![
            vec![AgentAction::Cut(Color::Red), AgentAction::Cut(Color::Green)],
            wait(2),
        ];
        let report = instance.rollout(&rows).unwrap();
        assert_eq!(report.ret, 0.0);
        assert_eq!(
            report.explosions,
            vec![Explosion { bomb: 0, timestep: 2, cause: ExplosionCause::PrematureCut }]
        );
    }

    #[test]
    fn idling_past_countdown_explodes() {
        let instance = test_instance(vec![bomb(0, 0, "RG", 60, None)], 120, 1);
        let mut rows = vec![vec![AgentAction::Cut(Color::Red)], wait(1)];
        rows[0].extend(wait(30));
        let report = instance.rollout(&rows).unwrap();
        assert_eq!(report.ret, 0.0);
        // First cut completes at 1; the countdown window of 15 expires at 16.
        assert_eq!(
            report.explosions,
            vec![Explosion { bomb: 0, timestep: 16, cause: ExplosionCause::CountdownExpired }]
        );
    }

    #[test]
    fn cut_completing_exactly_at_countdown_deadline_counts() {
        let instance = test_instance(vec![bomb(0, 0, "RG", 60, None)], 120, 1);
        let mut row = vec![AgentAction::Cut(Color::Red)];
        row.extend(wait(14));
        row.push(AgentAction::Cut(Color::Green));
        let report = instance.rollout(&[row, wait(1)]).unwrap();
        assert_eq!(report.ret, 20.0);
        assert_eq!(report.cuts.last().unwrap().tau, 16);
    }

    #[test]
    fn wrong_color_explodes() {
        let instance = test_instance(vec![bomb(0, 0, "RG", 60, None)], 120, 1);
        let report = instance
            .rollout(&[vec![AgentAction::Cut(Color::Green)], wait(1)])
            .unwrap();
        assert_eq!(report.ret, 0.0);
        assert_eq!(report.explosions[0].cause, ExplosionCause::WrongColor);
    }

    #[test]
    fn cutting_blocked_bomb_explodes_it() {
        let instance = test_instance(
            vec![bomb(0, 1, "R", 60, None), bomb(1, 0, "G", 60, Some(0))],
            120,
            1,
        );
        let report = instance
            .rollout(&[vec![AgentAction::Cut(Color::Green)], wait(1)])
            .unwrap();
        assert_eq!(report.explosions[0].bomb, 1);
        assert_eq!(report.explosions[0].cause, ExplosionCause::PrematureCut);
    }

    #[test]
    fn fuse_expires_for_untouched_bomb() {
        let instance = test_instance(vec![bomb(0, 1, "R", 5, None)], 120, 1);
        let report = instance.rollout(&[wait(1), wait(1)]).unwrap();
        assert_eq!(
            report.explosions,
            vec![Explosion { bomb: 0, timestep: 5, cause: ExplosionCause::FuseExpired }]
        );
        assert_eq!(report.end_timestep, 5);
    }

    #[test]
    fn defusal_exactly_at_fuse_deadline_counts() {
        let instance = test_instance(vec![bomb(0, 0, "R", 5, None)], 120, 1);
        let mut row = wait(4);
        row.push(AgentAction::Cut(Color::Red));
        let report = instance.rollout(&[row, wait(1)]).unwrap();
        assert_eq!(report.ret, 10.0);
        assert_eq!(report.cuts[0].tau, 5);
    }

    #[test]
    fn mid_sequence_bomb_still_explodes_at_fuse() {
        let instance = test_instance(vec![bomb(0, 0, "RG", 4, None)], 120, 1);
        let report = instance
            .rollout(&[vec![AgentAction::Cut(Color::Red)], wait(1)])
            .unwrap();
        assert_eq!(report.ret, 0.0);
        assert_eq!(
            report.explosions,
            vec![Explosion { bomb: 0, timestep: 4, cause: ExplosionCause::FuseExpired }]
        );
    }

    #[test]
    fn dependent_unblocks_one_step_after_resolution() {
        let instance = test_instance(
            vec![bomb(0, 0, "R", 60, None), bomb(1, 0, "G", 60, Some(0))],
            120,
            1,
        );
        // Cut bomb 0 at timestep 0 (resolves at 1). A cut on bomb 1 at
        // timestep 1 would be premature; at timestep 2 it is legal.
        let rows = vec![
            vec![AgentAction::Cut(Color::Red)],
            vec![AgentAction::Wait, AgentAction::Wait, AgentAction::Cut(Color::Green)],
        ];
        let report = instance.rollout(&rows).unwrap();
        assert_eq!(report.ret, 20.0);

        let premature = vec![
            vec![AgentAction::Cut(Color::Red)],
            vec![AgentAction::Wait, AgentAction::Cut(Color::Green)],
        ];
        let report = instance.rollout(&premature).unwrap();
        assert_eq!(report.ret, 10.0);
        assert_eq!(report.explosions[0].cause, ExplosionCause::PrematureCut);
    }

    #[test]
    fn exploded_prerequisite_also_unblocks() {
        let instance = test_instance(
            vec![bomb(0, 2, "B", 3, None), bomb(1, 0, "G", 60, Some(0))],
            120,
            1,
        );
        // Nobody reaches bomb 0; it explodes at fuse time 3. Bomb 1 is
        // cuttable from timestep 4 on.
        let rows = vec![
            wait(1),
            vec![
                AgentAction::Wait,
                AgentAction::Wait,
                AgentAction::Wait,
                AgentAction::Wait,
                AgentAction::Cut(Color::Green),
            ],
        ];
        let report = instance.rollout(&rows).unwrap();
        assert_eq!(report.ret, 10.0);
        assert_eq!(report.final_statuses[1], BombStatus::Defused);
    }

    #[test]
    fn same_vertex_simultaneous_cuts_on_two_bombs() {
        let instance = test_instance(
            vec![bomb(0, 0, "R", 60, None), bomb(1, 0, "G", 60, None)],
            120,
            1,
        );
        let rows = vec![
            vec![AgentAction::Cut(Color::Red)],
            vec![AgentAction::Cut(Color::Green)],
        ];
        let report = instance.rollout(&rows).unwrap();
        assert_eq!(report.ret, 20.0);
        assert_eq!(report.end_timestep, 1);
    }

    #[test]
    fn identical_simultaneous_cuts_spread_across_matching_bombs() {
        let instance = test_instance(
            vec![bomb(0, 0, "G", 60, None), bomb(1, 0, "G", 60, None)],
            120,
            1,
        );
        let rows = vec![
            vec![AgentAction::Cut(Color::Green)],
            vec![AgentAction::Cut(Color::Green)],
        ];
        let report = instance.rollout(&rows).unwrap();
        assert_eq!(report.ret, 20.0);
        let mut hit: Vec<usize> = report.cuts.iter().map(|c| c.bomb).collect();
        hit.sort_unstable();
        assert_eq!(hit, vec![0, 1]);
    }

    #[test]
    fn moves_respect_adjacency() {
        let instance = test_instance(vec![bomb(0, 2, "R", 60, None)], 120, 1);
        let mut state = instance.reset();
        let err = instance
            .step(
                &mut state,
                &JointAction(vec![AgentAction::Move(VertexId(2)), AgentAction::Wait]),
            )
            .unwrap_err();
        assert_eq!(
            err,
            OracleError::NonAdjacentMove {
                agent: 0,
                timestep: 0,
                from: VertexId(0),
                target: VertexId(2),
            }
        );
    }

    #[test]
    fn untooled_cut_rejected() {
        let instance = test_instance(vec![bomb(0, 0, "B", 60, None)], 120, 1);
        let mut state = instance.reset();
        let err = instance
            .step(
                &mut state,
                &JointAction(vec![AgentAction::Cut(Color::Blue), AgentAction::Wait]),
            )
            .unwrap_err();
        assert_eq!(
            err,
            OracleError::UntooledCut {
                agent: 0,
                timestep: 0,
                color: Color::Blue,
            }
        );
    }

    #[test]
    fn cut_on_bombless_vertex_rejected() {
        let instance = test_instance(vec![bomb(0, 2, "R", 60, None)], 120, 1);
        let mut state = instance.reset();
        let err = instance
            .step(
                &mut state,
                &JointAction(vec![AgentAction::Cut(Color::Red), AgentAction::Wait]),
            )
            .unwrap_err();
        assert!(matches!(err, OracleError::CutAtBomblessVertex { agent: 0, .. }));
    }

    #[test]
    fn cut_after_local_resolution_is_noop() {
        let instance = test_instance(vec![bomb(0, 0, "R", 60, None)], 120, 1);
        let rows = vec![
            vec![AgentAction::Cut(Color::Red), AgentAction::Cut(Color::Red)],
            wait(2),
        ];
        // Bomb defused at 1; the second cut hits a resolved vertex and is
        // ignored rather than rejected.
        let report = instance.rollout(&rows).unwrap();
        assert_eq!(report.ret, 10.0);
        assert_eq!(report.cuts.len(), 1);
    }

    #[test]
    fn rollout_of_two_color_bomb_pays_twenty() {
        let instance = test_instance(vec![bomb(0, 1, "RG", 60, None)], 120, 1);
        let rows = vec![
            vec![
                AgentAction::Move(VertexId(1)),
                AgentAction::Cut(Color::Red),
                AgentAction::Wait,
                AgentAction::Cut(Color::Green),
            ],
            wait(1),
        ];
        assert_eq!(instance.rollout(&rows).unwrap().ret, 20.0);
    }

    #[test]
    fn rollout_segments_concatenate_per_agent() {
        let instance = test_instance(vec![bomb(0, 1, "RG", 60, None)], 120, 1);
        let past = TeamTrace {
            rows: vec![
                vec![AgentAction::Move(VertexId(1)), AgentAction::Cut(Color::Red)],
                vec![AgentAction::Wait],
            ],
        };
        let current = TeamTrace {
            rows: vec![
                vec![AgentAction::Wait, AgentAction::Cut(Color::Green)],
                vec![],
            ],
        };
        assert_eq!(instance.rollout_return(&[past], &current).unwrap(), 20.0);
    }

    #[test]
    fn empty_trace_returns_zero() {
        let instance = test_instance(vec![bomb(0, 1, "R", 5, None)], 120, 1);
        let empty = TeamTrace::empty(2);
        assert_eq!(instance.rollout_return(&[], &empty).unwrap(), 0.0);
    }

    #[test]
    fn rollouts_are_pure() {
        let instance = test_instance(
            vec![bomb(0, 1, "RG", 60, None), bomb(1, 2, "B", 9, None)],
            120,
            1,
        );
        let rows = vec![
            vec![
                AgentAction::Move(VertexId(1)),
                AgentAction::Cut(Color::Red),
                AgentAction::Wait,
                AgentAction::Cut(Color::Green),
            ],
            vec![
                AgentAction::Move(VertexId(1)),
                AgentAction::Move(VertexId(2)),
                AgentAction::Cut(Color::Blue),
            ],
        ];
        let a = instance.rollout(&rows).unwrap();
        let b = instance.rollout(&rows).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ret, 30.0);
    }

    #[test]
    fn stepping_finished_episode_errors() {
        let instance = test_instance(vec![bomb(0, 0, "R", 60, None)], 120, 1);
        let mut state = instance.reset();
        let report = instance
            .step(
                &mut state,
                &JointAction(vec![AgentAction::Cut(Color::Red), AgentAction::Wait]),
            )
            .unwrap();
        assert!(report.done);
        let err = instance
            .step(&mut state, &JointAction(vec![AgentAction::Wait, AgentAction::Wait]))
            .unwrap_err();
        assert_eq!(err, OracleError::EpisodeOver(1));
    }

    #[test]
    fn validation_catches_bad_specs() {
        let good = test_instance(vec![bomb(0, 0, "R", 60, None)], 120, 1);
        assert_eq!(good.validate(), Ok(()));

        let mut bad = good.clone();
        bad.bombs[0].sequence = vec![Color::Red, Color::Red];
        assert_eq!(bad.validate(), Err(InstanceError::RepeatedColor(0)));

        let mut bad = good.clone();
        bad.bombs[0].depends_on = Some(0);
        assert_eq!(bad.validate(), Err(InstanceError::SelfDependency(0)));

        let cyclic = test_instance(
            vec![bomb(0, 0, "R", 60, Some(1)), bomb(1, 1, "G", 60, Some(0))],
            120,
            1,
        );
        assert_eq!(cyclic.validate(), Err(InstanceError::DependencyCycle(0)));

        let forked = test_instance(
            vec![
                bomb(0, 0, "R", 60, None),
                bomb(1, 1, "G", 60, Some(0)),
                bomb(2, 2, "B", 60, Some(0)),
            ],
            120,
            1,
        );
        assert_eq!(forked.validate(), Err(InstanceError::ForkedDependency(1, 2, 0)));
    }

    #[test]
    fn generated_instances_stay_in_declared_ranges() {
        let config = GeneratorConfig::field_defaults();
        for seed in 0..5 {
            let instance = generate_instance(&config, seed);
            assert_eq!(instance.validate(), Ok(()));
            assert_eq!(instance.agents.len(), 3);
            assert_eq!(instance.bombs.len(), 15);
            assert_eq!(instance.mission_length_seconds, 900);
            let start = instance.agents[0].start_vertex;
            let mut covered = [false; 3];
            for agent in &instance.agents {
                assert_eq!(agent.start_vertex, start);
                assert_eq!(agent.capabilities.len(), 2);
                for tag in &agent.capabilities {
                    covered[Color::from_action_tag(*tag).unwrap() as usize] = true;
                }
            }
            assert!(covered.iter().all(|&c| c));
            for bomb in &instance.bombs {
                assert!((1..=3).contains(&bomb.sequence.len()));
                assert!((60..=900).contains(&bomb.fuse_seconds));
                assert_eq!(bomb.fuse_seconds % 60, 0);
                assert_eq!(bomb.countdown_seconds, 15);
                if let Some(dep) = bomb.depends_on {
                    assert_eq!(
                        instance.graph.region_label(instance.bombs[dep].vertex),
                        instance.graph.region_label(bomb.vertex)
                    );
                }
            }
        }
    }

    #[test]
    fn chain_length_one_means_no_dependencies() {
        let mut config = GeneratorConfig::field_defaults();
        config.chain_length_range = (1, 1);
        let instance = generate_instance(&config, 11);
        assert!(instance.bombs.iter().all(|b| b.depends_on.is_none()));
    }

    #[test]
    fn generation_is_deterministic() {
        let config = GeneratorConfig::field_defaults();
        assert_eq!(generate_instance(&config, 42), generate_instance(&config, 42));
        assert_ne!(generate_instance(&config, 42), generate_instance(&config, 43));
    }

    #[test]
    fn fifteen_bombs_of_mean_length_two_pay_three_hundred() {
        let mut bombs = Vec::new();
        for i in 0..15 {
            let colors = match i % 3 {
                0 => "R",
                1 => "RG",
                _ => "RGB",
            };
            bombs.push(bomb(i, 0, colors, 900, None));
        }
        let instance = test_instance(bombs, 900, 1);
        assert_eq!(instance.max_return(), 300.0);
    }

    proptest::proptest! {
        // Random action soup against a random small instance: reward
        // conservation, return bounds, and purity hold for every trace.
        #[test]
        fn rollout_invariants_hold_on_random_traces(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let mut config = GeneratorConfig::field_defaults();
            config.regions = 1;
            config.nodes_per_region = 5;
            config.agent_count = 2;
            config.bombs_per_region = 3;
            config.mission_length_seconds = 30;
            config.fuse_seconds_range = (3, 20);
            config.fuse_step_seconds = 1;
            config.chain_length_range = (1, 3);
            let instance = generate_instance(&config, seed);
            let horizon = instance.horizon() as usize;
            let rows: Vec<Vec<AgentAction>> = instance.agents.iter().map(|agent| {
                let mut vertex = agent.start_vertex;
                (0..horizon).map(|_| {
                    match rng.gen_range(0..4u8) {
                        0 => AgentAction::Wait,
                        1 => {
                            let colors: Vec<Color> = agent.capabilities.iter()
                                .filter_map(|&t| Color::from_action_tag(t)).collect();
                            let bombed = instance.bombs.iter().any(|b| b.vertex == vertex);
                            if bombed {
                                AgentAction::Cut(colors[rng.gen_range(0..colors.len())])
                            } else {
                                AgentAction::Wait
                            }
                        }
                        _ => {
                            let ns = instance.graph.neighbors(vertex).unwrap();
                            if ns.is_empty() {
                                AgentAction::Wait
                            } else {
                                vertex = ns[rng.gen_range(0..ns.len())];
                                AgentAction::Move(vertex)
                            }
                        }
                    }
                }).collect()
            }).collect();
            let report = instance.rollout(&rows).unwrap();
            let defused_value: u32 = instance.bombs.iter().zip(&report.final_statuses)
                .filter(|(_, s)| **s == BombStatus::Defused)
                .map(|(b, _)| b.reward())
                .sum();
            proptest::prop_assert_eq!(report.ret, defused_value as f64);
            proptest::prop_assert!(report.ret >= 0.0);
            proptest::prop_assert!(report.ret <= instance.max_return());
            let again = instance.rollout(&rows).unwrap();
            proptest::prop_assert_eq!(report, again);
        }
    }
}
