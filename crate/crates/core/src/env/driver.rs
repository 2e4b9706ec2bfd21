//! Episode driver: owns the per-agent macro cursors (which macro-action is
//! running and for how long) and advances the world one primitive timestep
//! at a time, handing back everything a recorder or buffer needs.

use super::{ActiveMacro, MacroEnv, StepOutcome};

/// Env-side bookkeeping for one agent's macro-action execution.
#[derive(Debug, Clone, Copy)]
pub struct MacroCursor {
    pub id: usize,
    pub progress: usize,
    pub needs_selection: bool,
}

/// Everything observed during one primitive timestep.
#[derive(Debug, Clone)]
pub struct DriverStep {
    pub t: usize,
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<ActiveMacro>,
    pub reward: f64,
    pub terminated: Vec<bool>,
    pub done: bool,
    pub next_state: Vec<f64>,
    pub next_obs: Vec<Vec<f64>>,
}

pub struct EpisodeDriver<'e> {
    env: &'e mut dyn MacroEnv,
    cursors: Vec<MacroCursor>,
    done: bool,
}

impl<'e> EpisodeDriver<'e> {
    pub fn new(env: &'e mut dyn MacroEnv, seed: u64) -> Self {
        env.reset(seed);
        let n = env.num_agents();
        EpisodeDriver {
            env,
            cursors: vec![
                MacroCursor {
                    id: 0,
                    progress: 0,
                    needs_selection: true,
                };
                n
            ],
            done: false,
        }
    }

    pub fn env(&self) -> &dyn MacroEnv {
        &*self.env
    }

    pub fn t(&self) -> usize {
        self.env.timestep()
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn cursors(&self) -> &[MacroCursor] {
        &self.cursors
    }

    pub fn needs_selection(&self, agent: usize) -> bool {
        self.cursors[agent].needs_selection
    }

    /// Install a freshly selected macro-action; execution progress resets
    /// to zero.
    pub fn select(&mut self, agent: usize, id: usize) {
        assert!(
            self.cursors[agent].needs_selection,
            "agent {agent} still has a running macro-action"
        );
        self.cursors[agent] = MacroCursor {
            id,
            progress: 0,
            needs_selection: false,
        };
    }

    /// Execute one primitive step of every agent's macro-action.
    pub fn step(&mut self) -> DriverStep {
        assert!(!self.done, "step on a finished episode");
        assert!(
            self.cursors.iter().all(|c| !c.needs_selection),
            "every agent needs an active macro-action before stepping"
        );
        let n = self.env.num_agents();
        let t = self.env.timestep();
        let state = self.env.state_features();
        let obs: Vec<Vec<f64>> = (0..n).map(|a| self.env.macro_observation(a)).collect();
        let actions: Vec<ActiveMacro> = self
            .cursors
            .iter()
            .map(|c| ActiveMacro {
                id: c.id,
                step: c.progress,
            })
            .collect();
        let StepOutcome {
            reward,
            terminated,
            done,
        } = self.env.advance(&actions);
        for (i, c) in self.cursors.iter_mut().enumerate() {
            if terminated[i] {
                c.needs_selection = true;
            } else {
                c.progress += 1;
            }
        }
        self.done = done;
        DriverStep {
            t,
            state,
            obs,
            actions,
            reward,
            terminated,
            done,
            next_state: self.env.state_features(),
            next_obs: (0..n).map(|a| self.env.macro_observation(a)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tinyasync::TinyAsync;

    #[test]
    fn progress_counts_steps_since_selection() {
        let mut env = TinyAsync::new();
        let mut d = EpisodeDriver::new(&mut env, 0);
        d.select(0, 2);
        d.select(1, 0);
        let s = d.step();
        assert_eq!(s.t, 0);
        assert_eq!(s.actions[0], ActiveMacro { id: 2, step: 0 });
        assert!(!d.needs_selection(0));
        assert!(d.needs_selection(1));
        d.select(1, 2);
        let s = d.step();
        assert_eq!(s.actions[0].step, 1);
        assert_eq!(s.actions[1].step, 0);
    }

    #[test]
    #[should_panic(expected = "needs an active macro-action")]
    fn step_requires_selection() {
        let mut env = TinyAsync::new();
        let mut d = EpisodeDriver::new(&mut env, 0);
        d.step();
    }
}
