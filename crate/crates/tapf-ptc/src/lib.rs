//! Task assignment and path finding with precedence and temporal
//! constraints, solved by conflict-based search over joint assignments,
//! plus the bomb-defusing benchmark environment the solver is scored on.

pub mod bench;
pub mod exhaustive;
pub mod feasibility;
pub mod format;
pub mod graph;
pub mod mla;
pub mod oracle;
pub mod partition;
pub mod search;
pub mod task;

pub use graph::{VertexId, WorldGraph};
pub use oracle::{Color, InstanceSpec};
pub use task::{GoalId, Task};
