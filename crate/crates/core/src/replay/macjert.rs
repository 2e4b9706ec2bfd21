//! Termination-point baseline buffer for ablations.
//!
//! Built from complete episode traces, it deliberately reproduces the three
//! defects of sampling joint experience only at macro-action termination
//! timesteps: an agent's macro-observation is updated only when its own
//! macro-action terminates (stale in between), the joint cumulative reward
//! accumulator resets whenever ANY agent terminates (so a macro-action
//! spanning other agents' terminations is credited only the tail of its
//! rewards), and tokens carry no temporal position or progress codes.

use std::collections::VecDeque;

use rand::Rng;

use super::{JointStepView, SampleError, TdSample, TokenSpec};
use crate::env::driver::DriverStep;
use crate::env::ActiveMacro;
use crate::replay::sjert::BufferMeta;

/// One selection point on the squeezed event timeline.
#[derive(Debug, Clone, PartialEq)]
struct EventView {
    t: usize,
    state: Vec<f64>,
    /// Per-agent macro-observations as of each agent's own last
    /// termination (defect: stale between own terminations).
    stale_obs: Vec<Vec<f64>>,
    /// Joint macro ids in effect from this point until the next event.
    actions: Vec<ActiveMacro>,
    /// Who selected a fresh macro-action at this point.
    selected: Vec<bool>,
}

#[derive(Debug, Clone)]
struct JertEpisode {
    episode: usize,
    /// Event views, one per selection point plus a final terminal view.
    views: Vec<EventView>,
    /// Reward accumulated between consecutive views (discounted from the
    /// chunk start) — the accumulator that resets at every event.
    chunk_rewards: Vec<f64>,
    /// Primitive-step gap between consecutive views.
    gaps: Vec<usize>,
    /// Termination flags observed at each view (arrival flags).
    flags_at: Vec<Vec<bool>>,
    done: bool,
}

#[derive(Debug, Clone)]
pub struct MacJertBuffer {
    gamma: f64,
    capacity_events: usize,
    meta: BufferMeta,
    episodes: VecDeque<JertEpisode>,
    total_events: usize,
}

impl MacJertBuffer {
    pub fn new(gamma: f64, capacity_events: usize, meta: BufferMeta) -> Self {
        MacJertBuffer {
            gamma,
            capacity_events,
            meta,
            episodes: VecDeque::new(),
            total_events: 0,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn token_spec(&self) -> TokenSpec {
        TokenSpec {
            obs_dim: self.meta.obs_dim,
            action_count: self.meta.action_count,
            d_pe: 0,
            temporal: false,
        }
    }

    pub fn episodes(&self) -> Vec<usize> {
        self.episodes.iter().map(|e| e.episode).collect()
    }

    pub fn total_transitions(&self) -> usize {
        self.episodes.iter().map(|e| e.views.len().saturating_sub(1)).sum()
    }

    /// Convert one complete episode trace into squeezed termination-point
    /// experience.
    pub fn ingest_episode(&mut self, episode: usize, steps: &[DriverStep]) {
        if steps.is_empty() {
            return;
        }
        let n = self.meta.n_agents;
        let mut views: Vec<EventView> = Vec::new();
        let mut chunk_rewards: Vec<f64> = Vec::new();
        let mut gaps: Vec<usize> = Vec::new();
        let mut flags_at: Vec<Vec<bool>> = Vec::new();
        let mut stale: Vec<Vec<f64>> = steps[0].obs.clone();

        let mut chunk = 0.0;
        let mut chunk_len = 0usize;
        for (k, step) in steps.iter().enumerate() {
            let selected: Vec<bool> = step.actions.iter().map(|m| m.step == 0).collect();
            if selected.iter().any(|s| *s) {
                // selection point: refresh the selectors' observations only
                for i in 0..n {
                    if selected[i] {
                        stale[i] = step.obs[i].clone();
                    }
                }
                if !views.is_empty() {
                    chunk_rewards.push(chunk);
                    gaps.push(chunk_len);
                    flags_at.push(steps[k - 1].terminated.clone());
                }
                views.push(EventView {
                    t: step.t,
                    state: step.state.clone(),
                    stale_obs: stale.clone(),
                    actions: step.actions.clone(),
                    selected,
                });
                chunk = 0.0;
                chunk_len = 0;
            }
            chunk += self.gamma.powi(chunk_len as i32) * step.reward;
            chunk_len += 1;
        }
        // terminal view at the episode's final arrival state
        let last = steps.last().expect("non-empty episode");
        chunk_rewards.push(chunk);
        gaps.push(chunk_len);
        flags_at.push(last.terminated.clone());
        for i in 0..n {
            if last.terminated[i] {
                stale[i] = last.next_obs[i].clone();
            }
        }
        views.push(EventView {
            t: last.t + 1,
            state: last.next_state.clone(),
            stale_obs: stale.clone(),
            actions: last
                .actions
                .iter()
                .map(|m| ActiveMacro { id: m.id, step: m.step + 1 })
                .collect(),
            selected: vec![false; n],
        });

        self.total_events += views.len();
        self.episodes.push_back(JertEpisode {
            episode,
            views,
            chunk_rewards,
            gaps,
            flags_at,
            done: last.done,
        });
        while self.total_events > self.capacity_events && self.episodes.len() > 1 {
            let old = self.episodes.pop_front().expect("non-empty");
            self.total_events -= old.views.len();
        }
    }

    fn view_to_step(&self, v: &EventView) -> JointStepView {
        JointStepView {
            t: v.t,
            state: v.state.clone(),
            obs: v.stale_obs.clone(),
            actions: v.actions.clone(),
        }
    }

    fn event_transition(&self, ep: &JertEpisode, j: usize, unroll_cap: usize) -> TdSample {
        let target = j + 1;
        let lo = (target + 1).saturating_sub(unroll_cap).min(j);
        let steps: Vec<JointStepView> = ep.views[lo..=target].iter().map(|v| self.view_to_step(v)).collect();
        let terminal = target == ep.views.len() - 1 && ep.done;
        TdSample {
            online_idx: j - lo,
            target_idx: target - lo,
            steps,
            reward: ep.chunk_rewards[j],
            bootstrap_scale: if terminal {
                0.0
            } else {
                self.gamma.powi(ep.gaps[j] as i32)
            },
            terminated_at_target: ep.flags_at[j].clone(),
        }
    }

    /// Transitions between consecutive termination events.
    pub fn sample_micro_from(
        &self,
        episodes: &[usize],
        batch: usize,
        _n_step: usize,
        unroll_cap: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<TdSample>, SampleError> {
        let mut pool: Vec<(usize, usize)> = Vec::new();
        for (idx, ep) in self.episodes.iter().enumerate() {
            if !episodes.contains(&ep.episode) {
                continue;
            }
            for j in 0..ep.views.len() - 1 {
                pool.push((idx, j));
            }
        }
        if pool.is_empty() {
            return Err(SampleError::Insufficient("no termination-point transitions"));
        }
        Ok((0..batch)
            .map(|_| {
                let (idx, j) = pool[rng.gen_range(0..pool.len())];
                self.event_transition(&self.episodes[idx], j, unroll_cap)
            })
            .collect())
    }

    /// Per-agent macro-action transitions credited with the defective
    /// reset-on-any-termination reward.
    pub fn sample_macro_from(
        &self,
        agent: usize,
        episodes: &[usize],
        batch: usize,
        unroll_cap: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<TdSample>, SampleError> {
        // candidates: (episode idx, start view, end view) per own macro
        let mut pool: Vec<(usize, usize, usize)> = Vec::new();
        for (idx, ep) in self.episodes.iter().enumerate() {
            if !episodes.contains(&ep.episode) {
                continue;
            }
            let mut start: Option<usize> = None;
            for (j, v) in ep.views.iter().enumerate() {
                if j == ep.views.len() - 1 {
                    break;
                }
                if v.selected[agent] {
                    start = Some(j);
                }
                let ends_here = ep.flags_at[j][agent];
                if ends_here {
                    if let Some(s) = start {
                        pool.push((idx, s, j + 1));
                    }
                    start = None;
                }
            }
        }
        if pool.is_empty() {
            return Err(SampleError::Insufficient("no terminated macro-actions for agent"));
        }
        Ok((0..batch)
            .map(|_| {
                let (idx, s, e) = pool[rng.gen_range(0..pool.len())];
                let ep = &self.episodes[idx];
                let lo = if e + 1 > unroll_cap { (e + 1 - unroll_cap).min(s) } else { 0 };
                let steps: Vec<JointStepView> =
                    ep.views[lo..=e].iter().map(|v| self.view_to_step(v)).collect();
                let duration: usize = ep.gaps[s..e].iter().sum();
                let terminal = e == ep.views.len() - 1 && ep.done;
                TdSample {
                    online_idx: s - lo,
                    target_idx: e - lo,
                    steps,
                    // defect: only the tail chunk since the last event
                    reward: ep.chunk_rewards[e - 1],
                    bootstrap_scale: if terminal {
                        0.0
                    } else {
                        self.gamma.powi(duration as i32)
                    },
                    terminated_at_target: ep.flags_at[e - 1].clone(),
                }
            })
            .collect())
    }
}
