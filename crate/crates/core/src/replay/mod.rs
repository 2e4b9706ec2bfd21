//! Replay buffers for asynchronous macro-action training.
//!
//! `sjert` holds the per-agent segmented joint experience buffer with
//! decentralized reward accumulation; `macjert` holds the
//! termination-point baseline buffer used for ablations. Both emit the
//! same sample shape so the trainer is buffer-agnostic.

pub mod macjert;
pub mod sjert;

use thiserror::Error;

use crate::env::ActiveMacro;

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("insufficient data: {0}")]
    Insufficient(&'static str),
}

#[derive(Debug, Error)]
pub enum BufferIoError {
    #[error("buffer io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed buffer file: {0}")]
    Format(String),
    #[error("buffer version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("discount mismatch: buffer has gamma={buffer}, requested gamma={requested}")]
    GammaMismatch { buffer: f64, requested: f64 },
}

/// How tokens are built from sampled steps. Temporal buffers stamp wall
/// time and execution progress into the tokens; the baseline buffer does
/// not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenSpec {
    pub obs_dim: usize,
    pub action_count: usize,
    pub d_pe: usize,
    pub temporal: bool,
}

impl TokenSpec {
    pub fn obs_token_len(&self) -> usize {
        self.obs_dim + if self.temporal { self.d_pe } else { 0 }
    }

    pub fn action_token_len(&self) -> usize {
        self.action_count + if self.temporal { 2 * self.d_pe } else { 0 }
    }

    /// Agent-network input: observation token plus previous-action token.
    pub fn agent_input_len(&self) -> usize {
        self.obs_token_len() + self.action_token_len()
    }

    /// Attention input: observation token plus current-action token.
    pub fn attn_input_len(&self) -> usize {
        self.obs_token_len() + self.action_token_len()
    }
}

/// One joint step inside a sampled context window.
#[derive(Debug, Clone, PartialEq)]
pub struct JointStepView {
    pub t: usize,
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<ActiveMacro>,
}

/// A TD training sample: a context window of joint steps, the step at
/// which the online value is evaluated, the step at which the target
/// bootstraps, and the discounted reward accumulated in between.
///
/// `bootstrap_scale` already folds the discount power and the terminal
/// cutoff: the target is `reward + bootstrap_scale * max Q_total_target`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdSample {
    pub steps: Vec<JointStepView>,
    pub online_idx: usize,
    pub target_idx: usize,
    pub reward: f64,
    pub bootstrap_scale: f64,
    pub terminated_at_target: Vec<bool>,
}
