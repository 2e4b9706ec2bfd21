//! A two-agent matrix game with fixed-duration macro-actions, small enough
//! for exact reasoning. Every primitive step pays a table lookup on the
//! pair of currently executing macro-actions. Used by sanity tests that
//! need asynchronous terminations without grid-world dynamics.

use super::{ActiveMacro, MacroEnv, StepOutcome};

pub const HORIZON: usize = 12;
pub const DURATIONS: [usize; 3] = [1, 2, 3];
const PAYOFF: [[f64; 3]; 3] = [
    [0.0, 1.0, -1.0],
    [1.0, 2.0, 0.5],
    [-1.0, 0.5, 3.0],
];

#[derive(Debug, Clone)]
pub struct TinyAsync {
    t: usize,
    done: bool,
    last_active: [ActiveMacro; 2],
}

impl TinyAsync {
    pub fn new() -> Self {
        TinyAsync {
            t: 0,
            done: false,
            last_active: [ActiveMacro { id: 0, step: 0 }; 2],
        }
    }
}

impl Default for TinyAsync {
    fn default() -> Self {
        Self::new()
    }
}

impl MacroEnv for TinyAsync {
    fn id(&self) -> String {
        "tiny-async".into()
    }

    fn num_agents(&self) -> usize {
        2
    }

    fn action_count(&self) -> usize {
        3
    }

    fn action_name(&self, id: usize) -> String {
        format!("opt{id}(d{})", DURATIONS[id])
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn state_dim(&self) -> usize {
        9
    }

    fn horizon(&self) -> usize {
        HORIZON
    }

    fn timestep(&self) -> usize {
        self.t
    }

    fn reset(&mut self, _seed: u64) {
        self.t = 0;
        self.done = false;
        self.last_active = [ActiveMacro { id: 0, step: 0 }; 2];
    }

    fn state_features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(9);
        for a in 0..2 {
            out.extend_from_slice(&self.macro_observation(a));
        }
        out.push(self.t as f64 / HORIZON as f64);
        out
    }

    fn macro_observation(&self, agent: usize) -> Vec<f64> {
        // own last macro-action and its progress; zeros before the first step
        let mut obs = vec![0.0; 4];
        if self.t > 0 {
            let m = self.last_active[agent];
            obs[m.id] = 1.0;
            obs[3] = m.step as f64 / 3.0;
        }
        obs
    }

    fn available_actions(&self, _agent: usize) -> Vec<usize> {
        vec![0, 1, 2]
    }

    fn advance(&mut self, active: &[ActiveMacro]) -> StepOutcome {
        assert!(!self.done, "advance called on a finished episode");
        let reward = PAYOFF[active[0].id][active[1].id];
        self.last_active = [active[0], active[1]];
        self.t += 1;
        self.done = self.t >= HORIZON;
        let terminated = active
            .iter()
            .map(|m| m.step + 1 >= DURATIONS[m.id])
            .collect();
        StepOutcome {
            reward,
            terminated,
            done: self.done,
        }
    }

    fn render(&self) -> String {
        format!(
            "t={} m0={}({}) m1={}({})",
            self.t,
            self.last_active[0].id,
            self.last_active[0].step,
            self.last_active[1].id,
            self.last_active[1].step
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations_drive_termination() {
        let mut env = TinyAsync::new();
        env.reset(0);
        let out = env.advance(&[ActiveMacro { id: 0, step: 0 }, ActiveMacro { id: 2, step: 0 }]);
        assert_eq!(out.terminated, vec![true, false]);
        assert_eq!(out.reward, -1.0);
        let out = env.advance(&[ActiveMacro { id: 1, step: 0 }, ActiveMacro { id: 2, step: 1 }]);
        assert_eq!(out.terminated, vec![false, false]);
        let out = env.advance(&[ActiveMacro { id: 1, step: 1 }, ActiveMacro { id: 2, step: 2 }]);
        assert_eq!(out.terminated, vec![true, true]);
        assert_eq!(out.reward, 0.5);
    }
}
