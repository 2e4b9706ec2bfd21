//! Environment abstraction for asynchronous macro-action decision making:
//! primitive-timestep simulation under concurrently executing macro-actions
//! with per-agent termination flags.

pub mod boxpushing;
pub mod driver;
pub mod tinyasync;
pub mod trace;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown grid size {0} (supported: 6, 8, 10, 12, 14)")]
    UnknownGrid(usize),
    #[error("unknown environment {0}")]
    UnknownEnv(String),
}

/// A macro-action currently being executed by one agent: which one, and how
/// many primitive steps it has already run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveMacro {
    pub id: usize,
    pub step: usize,
}

/// Result of one primitive timestep.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Joint reward emitted by this primitive transition.
    pub reward: f64,
    /// Per-agent termination flags of the macro-actions, evaluated on the
    /// post-step state.
    pub terminated: Vec<bool>,
    /// Episode over (goal event or horizon reached).
    pub done: bool,
}

/// A simulated world advanced one primitive timestep at a time while every
/// agent runs some macro-action. Implementations are deterministic given
/// the reset seed.
pub trait MacroEnv {
    fn id(&self) -> String;
    fn num_agents(&self) -> usize;
    /// Macro-actions per agent (symmetric across agents).
    fn action_count(&self) -> usize;
    fn action_name(&self, id: usize) -> String;
    fn obs_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn timestep(&self) -> usize;
    fn reset(&mut self, seed: u64);
    fn state_features(&self) -> Vec<f64>;
    /// Fresh macro-observation of the current state (sampled every
    /// timestep, never held stale at the last termination point).
    fn macro_observation(&self, agent: usize) -> Vec<f64>;
    /// Initiation-legal macro-actions. For the built-in maps this depends
    /// only on the map configuration, never on the timestep.
    fn available_actions(&self, agent: usize) -> Vec<usize>;
    /// Execute one primitive step of every agent's active macro-action.
    fn advance(&mut self, active: &[ActiveMacro]) -> StepOutcome;
    fn render(&self) -> String;
}

/// Construct a built-in environment by name.
pub fn make_env(name: &str, grid: usize) -> Result<Box<dyn MacroEnv>, EnvError> {
    match name {
        "boxpushing" => Ok(Box::new(boxpushing::BoxPushing::new(grid)?)),
        "tiny-async" => Ok(Box::new(tinyasync::TinyAsync::new())),
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}
