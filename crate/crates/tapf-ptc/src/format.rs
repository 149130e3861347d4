//! Versioned text formats for instance and solution files. Writers are
//! canonical (a given value always produces the same bytes) and parsers
//! accept exactly what the writers emit, so files round-trip byte for
//! byte and golden files stay stable across runs.

use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{VertexId, WorldGraph};
use crate::oracle::{AgentAction, BombSpec, Color, InstanceSpec};
use crate::search::{SolveStatus, SolverKind};
use crate::task::{AgentSpec, GoalId};

pub const INSTANCE_HEADER: &str = "tapf-ptc instance v1";
pub const SOLUTION_HEADER: &str = "tapf-ptc solution v1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("instance rejected: {0}")]
    BadInstance(String),
}

fn err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

/// Everything a solution file records besides the instance itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFile {
    pub solver: SolverKind,
    pub status: SolveStatus,
    pub epsilon: f64,
    pub return_value: f64,
    pub max_return: f64,
    /// (goal, execution, completion), sorted by goal id.
    pub goal_times: Vec<(GoalId, u32, u32)>,
    /// Per-agent action rows from timestep 0.
    pub rows: Vec<Vec<AgentAction>>,
}

pub fn write_instance(instance: &InstanceSpec) -> String {
    let mut out = String::new();
    let graph = &instance.graph;
    writeln!(out, "{INSTANCE_HEADER}").unwrap();
    writeln!(
        out,
        "episode {} {}",
        instance.mission_length_seconds, instance.seconds_per_timestep
    )
    .unwrap();
    let edges = graph.edges();
    writeln!(out, "graph {} {}", graph.vertex_count(), edges.len()).unwrap();
    for (u, v) in edges {
        writeln!(out, "e {u} {v}").unwrap();
    }
    let labels: Vec<String> = graph.regions().iter().map(|r| r.to_string()).collect();
    writeln!(out, "regions {}", labels.join(" ")).unwrap();
    if let Some(coords) = graph.coords() {
        for &(x, y) in coords {
            writeln!(out, "coords {x} {y}").unwrap();
        }
    }
    writeln!(out, "agents {}", instance.agents.len()).unwrap();
    for agent in &instance.agents {
        let tools: String = agent
            .capabilities
            .iter()
            .filter_map(|&tag| Color::from_action_tag(tag))
            .map(|c| c.letter())
            .collect();
        writeln!(out, "a {} {} {}", agent.id, agent.start_vertex.0, tools).unwrap();
    }
    writeln!(out, "bombs {}", instance.bombs.len()).unwrap();
    for bomb in &instance.bombs {
        write!(
            out,
            "b {} {} {} fuse {} countdown {}",
            bomb.id,
            bomb.vertex.0,
            bomb.sequence_string(),
            bomb.fuse_seconds,
            bomb.countdown_seconds
        )
        .unwrap();
        if let Some(dep) = bomb.depends_on {
            write!(out, " after {dep}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Splits a line into fields and checks the tag field.
fn fields<'a>(line: &'a str, tag: &str, lineno: usize) -> Result<Vec<&'a str>, FormatError> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.first() != Some(&tag) {
        return Err(err(lineno, format!("expected a '{tag}' line, got '{line}'")));
    }
    Ok(parts[1..].to_vec())
}

fn parse_num<T: std::str::FromStr>(s: &str, lineno: usize, what: &str) -> Result<T, FormatError> {
    s.parse()
        .map_err(|_| err(lineno, format!("bad {what} '{s}'")))
}

fn parse_colors(s: &str, lineno: usize) -> Result<Vec<Color>, FormatError> {
    s.chars()
        .map(|c| Color::from_letter(c).ok_or_else(|| err(lineno, format!("unknown color '{c}'"))))
        .collect()
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            iter: text.lines().enumerate(),
        }
    }

    /// Next line with its 1-based number, or an error naming what was
    /// missing.
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), FormatError> {
        match self.iter.next() {
            Some((i, line)) => Ok((i + 1, line)),
            None => Err(err(0, format!("file ended before {what}"))),
        }
    }

    fn peek_tag(&self) -> Option<&'a str> {
        self.iter
            .clone()
            .next()
            .and_then(|(_, l)| l.split_whitespace().next())
    }
}

pub fn parse_instance(text: &str) -> Result<InstanceSpec, FormatError> {
    let mut lines = Lines::new(text);
    let (n1, header) = lines.next("the header")?;
    if header.trim() != INSTANCE_HEADER {
        return Err(err(n1, format!("expected header '{INSTANCE_HEADER}'")));
    }

    let (n, line) = lines.next("the episode line")?;
    let ep = fields(line, "episode", n)?;
    if ep.len() != 2 {
        return Err(err(n, "episode takes mission seconds and seconds per timestep"));
    }
    let mission_length_seconds: u32 = parse_num(ep[0], n, "mission length")?;
    let seconds_per_timestep: u32 = parse_num(ep[1], n, "timestep length")?;

    let (n, line) = lines.next("the graph line")?;
    let g = fields(line, "graph", n)?;
    if g.len() != 2 {
        return Err(err(n, "graph takes a vertex count and an edge count"));
    }
    let vertex_count: usize = parse_num(g[0], n, "vertex count")?;
    let edge_count: usize = parse_num(g[1], n, "edge count")?;
    let mut edges = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        let (n, line) = lines.next("an edge line")?;
        let e = fields(line, "e", n)?;
        if e.len() != 2 {
            return Err(err(n, "an edge takes two vertex ids"));
        }
        edges.push((
            parse_num::<usize>(e[0], n, "vertex id")?,
            parse_num::<usize>(e[1], n, "vertex id")?,
        ));
    }

    let (n, line) = lines.next("the regions line")?;
    let r = fields(line, "regions", n)?;
    if r.len() != vertex_count {
        return Err(err(n, format!("expected {vertex_count} region labels, got {}", r.len())));
    }
    let regions: Vec<u16> = r
        .iter()
        .map(|s| parse_num(s, n, "region label"))
        .collect::<Result<_, _>>()?;

    let coords = if lines.peek_tag() == Some("coords") {
        let mut coords = Vec::with_capacity(vertex_count);
        for _ in 0..vertex_count {
            let (n, line) = lines.next("a coords line")?;
            let c = fields(line, "coords", n)?;
            if c.len() != 2 {
                return Err(err(n, "coords takes x and y"));
            }
            coords.push((
                parse_num::<f64>(c[0], n, "coordinate")?,
                parse_num::<f64>(c[1], n, "coordinate")?,
            ));
        }
        Some(coords)
    } else {
        None
    };

    let graph = WorldGraph::new(vertex_count, &edges, regions, coords)
        .map_err(|e| FormatError::BadInstance(e.to_string()))?;

    let (n, line) = lines.next("the agents line")?;
    let a = fields(line, "agents", n)?;
    if a.len() != 1 {
        return Err(err(n, "agents takes a count"));
    }
    let agent_count: usize = parse_num(a[0], n, "agent count")?;
    let mut agents = Vec::with_capacity(agent_count);
    for _ in 0..agent_count {
        let (n, line) = lines.next("an agent line")?;
        let a = fields(line, "a", n)?;
        if a.len() != 3 {
            return Err(err(n, "an agent takes an id, a start vertex, and tool colors"));
        }
        let id: usize = parse_num(a[0], n, "agent id")?;
        let vertex: usize = parse_num(a[1], n, "start vertex")?;
        let tools = parse_colors(a[2], n)?;
        agents.push(AgentSpec::new(
            id,
            VertexId(vertex),
            tools.iter().map(|c| c.action_tag()),
        ));
    }

    let (n, line) = lines.next("the bombs line")?;
    let b = fields(line, "bombs", n)?;
    if b.len() != 1 {
        return Err(err(n, "bombs takes a count"));
    }
    let bomb_count: usize = parse_num(b[0], n, "bomb count")?;
    let mut bombs = Vec::with_capacity(bomb_count);
    for _ in 0..bomb_count {
        let (n, line) = lines.next("a bomb line")?;
        let b = fields(line, "b", n)?;
        if b.len() != 7 && b.len() != 9 {
            return Err(err(n, "a bomb takes id, vertex, sequence, fuse, countdown, and an optional dependency"));
        }
        if b[3] != "fuse" || b[5] != "countdown" {
            return Err(err(n, "bomb fields must read 'fuse <s> countdown <s>'"));
        }
        let depends_on = if b.len() == 9 {
            if b[7] != "after" {
                return Err(err(n, "bomb dependency must read 'after <bomb>'"));
            }
            Some(parse_num::<usize>(b[8], n, "dependency bomb id")?)
        } else {
            None
        };
        bombs.push(BombSpec {
            id: parse_num(b[0], n, "bomb id")?,
            vertex: VertexId(parse_num(b[1], n, "bomb vertex")?),
            sequence: parse_colors(b[2], n)?,
            fuse_seconds: parse_num(b[4], n, "fuse seconds")?,
            countdown_seconds: parse_num(b[6], n, "countdown seconds")?,
            depends_on,
        });
    }

    let instance = InstanceSpec {
        graph,
        agents,
        bombs,
        mission_length_seconds,
        seconds_per_timestep,
    };
    instance
        .validate()
        .map_err(|e| FormatError::BadInstance(e.to_string()))?;
    Ok(instance)
}

fn action_token(action: &AgentAction) -> String {
    match action {
        AgentAction::Move(v) => format!("m{}", v.0),
        AgentAction::Wait => "w".to_string(),
        AgentAction::Cut(color) => format!("c{}", color.letter()),
    }
}

fn parse_action(token: &str, lineno: usize) -> Result<AgentAction, FormatError> {
    if token == "w" {
        return Ok(AgentAction::Wait);
    }
    if let Some(rest) = token.strip_prefix('m') {
        return Ok(AgentAction::Move(VertexId(parse_num(rest, lineno, "move target")?)));
    }
    if let Some(rest) = token.strip_prefix('c') {
        let mut chars = rest.chars();
        match (chars.next().and_then(Color::from_letter), chars.next()) {
            (Some(color), None) => return Ok(AgentAction::Cut(color)),
            _ => return Err(err(lineno, format!("bad cut token '{token}'"))),
        }
    }
    Err(err(lineno, format!("unknown action token '{token}'")))
}

pub fn write_solution(solution: &SolutionFile) -> String {
    let mut out = String::new();
    writeln!(out, "{SOLUTION_HEADER}").unwrap();
    writeln!(out, "solver {}", solution.solver.name()).unwrap();
    writeln!(out, "status {}", solution.status.name()).unwrap();
    writeln!(out, "epsilon {}", solution.epsilon).unwrap();
    writeln!(out, "return {}", solution.return_value).unwrap();
    writeln!(out, "max_return {}", solution.max_return).unwrap();
    writeln!(out, "goals {}", solution.goal_times.len()).unwrap();
    for &(goal, mu, tau) in &solution.goal_times {
        writeln!(out, "g {} mu {} tau {}", goal.0, mu, tau).unwrap();
    }
    writeln!(out, "trace {}", solution.rows.len()).unwrap();
    for (agent, row) in solution.rows.iter().enumerate() {
        write!(out, "t {agent}").unwrap();
        for action in row {
            write!(out, " {}", action_token(action)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_solution(text: &str) -> Result<SolutionFile, FormatError> {
    let mut lines = Lines::new(text);
    let (n1, header) = lines.next("the header")?;
    if header.trim() != SOLUTION_HEADER {
        return Err(err(n1, format!("expected header '{SOLUTION_HEADER}'")));
    }

    let (n, line) = lines.next("the solver line")?;
    let s = fields(line, "solver", n)?;
    let solver = s
        .first()
        .and_then(|name| SolverKind::from_name(name))
        .ok_or_else(|| err(n, "unknown solver id"))?;

    let (n, line) = lines.next("the status line")?;
    let s = fields(line, "status", n)?;
    let status = s
        .first()
        .and_then(|name| SolveStatus::from_name(name))
        .ok_or_else(|| err(n, "unknown status"))?;

    let (n, line) = lines.next("the epsilon line")?;
    let s = fields(line, "epsilon", n)?;
    let epsilon: f64 = parse_num(s.first().copied().unwrap_or(""), n, "epsilon")?;

    let (n, line) = lines.next("the return line")?;
    let s = fields(line, "return", n)?;
    let return_value: f64 = parse_num(s.first().copied().unwrap_or(""), n, "return")?;

    let (n, line) = lines.next("the max_return line")?;
    let s = fields(line, "max_return", n)?;
    let max_return: f64 = parse_num(s.first().copied().unwrap_or(""), n, "max return")?;

    let (n, line) = lines.next("the goals line")?;
    let s = fields(line, "goals", n)?;
    let goal_count: usize = parse_num(s.first().copied().unwrap_or(""), n, "goal count")?;
    let mut goal_times = Vec::with_capacity(goal_count);
    for _ in 0..goal_count {
        let (n, line) = lines.next("a goal timing line")?;
        let g = fields(line, "g", n)?;
        if g.len() != 5 || g[1] != "mu" || g[3] != "tau" {
            return Err(err(n, "a goal timing reads 'g <id> mu <t> tau <t>'"));
        }
        goal_times.push((
            GoalId(parse_num(g[0], n, "goal id")?),
            parse_num(g[2], n, "execution timestep")?,
            parse_num(g[4], n, "completion timestep")?,
        ));
    }

    let (n, line) = lines.next("the trace line")?;
    let s = fields(line, "trace", n)?;
    let agent_count: usize = parse_num(s.first().copied().unwrap_or(""), n, "agent count")?;
    let mut rows = Vec::with_capacity(agent_count);
    for expect in 0..agent_count {
        let (n, line) = lines.next("a trace row")?;
        let t = fields(line, "t", n)?;
        let agent: usize = parse_num(t.first().copied().unwrap_or(""), n, "agent id")?;
        if agent != expect {
            return Err(err(n, format!("trace rows must be in agent order; expected {expect}")));
        }
        rows.push(
            t[1..]
                .iter()
                .map(|tok| parse_action(tok, n))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }

    Ok(SolutionFile {
        solver,
        status,
        epsilon,
        return_value,
        max_return,
        goal_times,
        rows,
    })
}
