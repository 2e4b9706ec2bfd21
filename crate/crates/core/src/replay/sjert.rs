//! Per-agent segmented joint experience replay with decentralized reward
//! accumulation.
//!
//! Each agent owns an ordered buffer of segments, one per completed
//! macro-action. A segment records the full joint experience over every
//! primitive timestep of the macro-action's execution — real state, fresh
//! joint macro-observations, the joint macro-actions with their execution
//! progress, and the immediate joint reward — and, at close time, the
//! discounted joint cumulative reward over the whole segment plus a closing
//! snapshot of the arrival state. Segments are ordered by termination time
//! and evicted oldest-first, never split.

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use super::{BufferIoError, JointStepView, SampleError, TdSample, TokenSpec};
use crate::env::driver::DriverStep;
use crate::env::ActiveMacro;

pub const BUFFER_FORMAT_VERSION: u32 = 1;

/// One primitive timestep of joint experience, written at wall time `t`.
/// `reward` is the joint reward of the transition from `t` to `t+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<ActiveMacro>,
    pub reward: f64,
}

/// Snapshot taken at the arrival timestep that closed a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CloseInfo {
    pub t: usize,
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub terminated: Vec<bool>,
    pub done: bool,
}

/// Complete execution record of one macro-action of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroSegment {
    pub episode: usize,
    pub owner: usize,
    pub macro_id: usize,
    pub start: usize,
    pub records: Vec<StepRecord>,
    pub close: CloseInfo,
    /// Discounted joint cumulative reward over the records, set at close.
    pub r_cum: f64,
}

impl MacroSegment {
    pub fn duration(&self) -> usize {
        self.records.len()
    }

    /// Wall time of the last record.
    pub fn end(&self) -> usize {
        self.start + self.records.len() - 1
    }
}

#[derive(Debug, Clone)]
struct OpenSegment {
    episode: usize,
    macro_id: usize,
    start: usize,
    records: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct AgentBuffer {
    owner: usize,
    capacity: usize,
    segments: VecDeque<MacroSegment>,
    base_id: u64,
    by_episode: BTreeMap<usize, Vec<u64>>,
    open: Option<OpenSegment>,
}

impl AgentBuffer {
    fn new(owner: usize, capacity: usize) -> Self {
        AgentBuffer {
            owner,
            capacity,
            segments: VecDeque::new(),
            base_id: 0,
            by_episode: BTreeMap::new(),
            open: None,
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn closed(&self) -> impl Iterator<Item = &MacroSegment> {
        self.segments.iter()
    }

    pub fn segment(&self, idx: usize) -> &MacroSegment {
        &self.segments[idx]
    }

    fn seg_by_id(&self, id: u64) -> &MacroSegment {
        &self.segments[(id - self.base_id) as usize]
    }

    fn episode_segment_ids(&self, episode: usize) -> &[u64] {
        self.by_episode.get(&episode).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Push a closed segment; evicts the oldest segment when over
    /// capacity. Returns the episode of an evicted segment, if any.
    fn push_closed(&mut self, seg: MacroSegment) -> Option<usize> {
        let id = self.base_id + self.segments.len() as u64;
        self.by_episode.entry(seg.episode).or_default().push(id);
        self.segments.push_back(seg);
        if self.segments.len() > self.capacity {
            let evicted = self.segments.pop_front().expect("non-empty");
            let ids = self.by_episode.get_mut(&evicted.episode).expect("tracked episode");
            ids.retain(|x| *x != self.base_id);
            if ids.is_empty() {
                self.by_episode.remove(&evicted.episode);
            }
            self.base_id += 1;
            Some(evicted.episode)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferMeta {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    pub action_count: usize,
    pub d_pe: usize,
}

/// The set of per-agent segmented buffers plus shared episode bookkeeping.
#[derive(Debug, Clone)]
pub struct SjertBuffers {
    gamma: f64,
    capacity: usize,
    meta: BufferMeta,
    agents: Vec<AgentBuffer>,
    /// Live segment count per episode, across agents.
    episode_refs: BTreeMap<usize, usize>,
    current_episode: Option<(usize, bool)>,
}

impl SjertBuffers {
    pub fn new(gamma: f64, capacity: usize, meta: BufferMeta) -> Self {
        SjertBuffers {
            gamma,
            capacity,
            meta,
            agents: (0..meta.n_agents).map(|i| AgentBuffer::new(i, capacity)).collect(),
            episode_refs: BTreeMap::new(),
            current_episode: None,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn meta(&self) -> BufferMeta {
        self.meta
    }

    pub fn token_spec(&self) -> TokenSpec {
        TokenSpec {
            obs_dim: self.meta.obs_dim,
            action_count: self.meta.action_count,
            d_pe: self.meta.d_pe,
            temporal: true,
        }
    }

    pub fn agent(&self, i: usize) -> &AgentBuffer {
        &self.agents[i]
    }

    pub fn episodes(&self) -> Vec<usize> {
        self.episode_refs.keys().copied().collect()
    }

    /// Record one primitive timestep into every agent's open segment,
    /// closing the segments of agents whose macro-action terminated.
    pub fn record_step(&mut self, episode: usize, step: &DriverStep) {
        match self.current_episode {
            Some((ep, done)) if ep == episode => {
                assert!(!done, "recording into a finished episode");
            }
            _ => self.current_episode = Some((episode, false)),
        }
        let record = StepRecord {
            t: step.t,
            state: step.state.clone(),
            obs: step.obs.clone(),
            actions: step.actions.clone(),
            reward: step.reward,
        };
        let gamma = self.gamma;
        let mut evictions: Vec<usize> = Vec::new();
        for i in 0..self.agents.len() {
            // a fresh macro-action opens a fresh segment
            if step.actions[i].step == 0 {
                debug_assert!(self.agents[i].open.is_none(), "unclosed previous segment");
                self.agents[i].open = Some(OpenSegment {
                    episode,
                    macro_id: step.actions[i].id,
                    start: step.t,
                    records: Vec::new(),
                });
            }
            let open = self.agents[i].open.as_mut().expect("open segment");
            open.records.push(record.clone());
            if step.terminated[i] || step.done {
                let open = self.agents[i].open.take().expect("open segment");
                let r_cum = open
                    .records
                    .iter()
                    .enumerate()
                    .map(|(k, r)| gamma.powi(k as i32) * r.reward)
                    .sum();
                let seg = MacroSegment {
                    episode: open.episode,
                    owner: i,
                    macro_id: open.macro_id,
                    start: open.start,
                    records: open.records,
                    close: CloseInfo {
                        t: step.t + 1,
                        state: step.next_state.clone(),
                        obs: step.next_obs.clone(),
                        terminated: step.terminated.clone(),
                        done: step.done,
                    },
                    r_cum,
                };
                if let Some(ep) = self.agents[i].push_closed(seg) {
                    evictions.push(ep);
                }
                *self.episode_refs.entry(episode).or_insert(0) += 1;
            }
        }
        for ep in evictions {
            if let Some(c) = self.episode_refs.get_mut(&ep) {
                *c -= 1;
                if *c == 0 {
                    self.episode_refs.remove(&ep);
                }
            }
        }
        if step.done {
            self.current_episode = Some((episode, true));
        }
    }

    pub fn total_segments(&self) -> usize {
        self.agents.iter().map(|a| a.len()).sum()
    }

    /// Number of micro-transition starting points: one per record of every
    /// closed segment (the last record pairs with the closing snapshot).
    pub fn total_micro_candidates(&self) -> usize {
        self.agents
            .iter()
            .map(|a| a.closed().map(|s| s.duration()).sum::<usize>())
            .sum()
    }

    pub fn sample_micro(
        &self,
        batch: usize,
        n_step: usize,
        unroll_cap: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<TdSample>, SampleError> {
        let episodes = self.episodes();
        self.sample_micro_from(&episodes, batch, n_step, unroll_cap, rng)
    }

    pub fn sample_micro_from(
        &self,
        episodes: &[usize],
        batch: usize,
        n_step: usize,
        unroll_cap: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<TdSample>, SampleError> {
        // candidate pool: (agent, segment id, weight = duration)
        let mut pool: Vec<(usize, u64, usize)> = Vec::new();
        let mut total = 0usize;
        for ep in episodes {
            for (ai, a) in self.agents.iter().enumerate() {
                for &sid in a.episode_segment_ids(*ep) {
                    let d = a.seg_by_id(sid).duration();
                    pool.push((ai, sid, d));
                    total += d;
                }
            }
        }
        if total == 0 {
            return Err(SampleError::Insufficient("no closed segments to sample micro-transitions"));
        }
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mut pick = rng.gen_range(0..total);
            let mut chosen = None;
            for (ai, sid, w) in &pool {
                if pick < *w {
                    chosen = Some((*ai, *sid, pick));
                    break;
                }
                pick -= w;
            }
            let (ai, sid, offset) = chosen.expect("weighted pick");
            let seg = self.agents[ai].seg_by_id(sid);
            out.push(micro_sample(seg, offset, n_step, self.gamma, unroll_cap));
        }
        Ok(out)
    }

    pub fn sample_macro(
        &self,
        agent: usize,
        batch: usize,
        unroll_cap: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<TdSample>, SampleError> {
        let episodes = self.episodes();
        self.sample_macro_from(agent, &episodes, batch, unroll_cap, rng)
    }

    pub fn sample_macro_from(
        &self,
        agent: usize,
        episodes: &[usize],
        batch: usize,
        unroll_cap: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<TdSample>, SampleError> {
        let a = &self.agents[agent];
        let mut ids: Vec<u64> = Vec::new();
        for ep in episodes {
            for &sid in a.episode_segment_ids(*ep) {
                if a.seg_by_id(sid).duration() + 1 <= unroll_cap {
                    ids.push(sid);
                }
            }
        }
        if ids.is_empty() {
            return Err(SampleError::Insufficient("no closed segments for macro-transitions"));
        }
        let out = (0..batch)
            .map(|_| {
                let sid = ids[rng.gen_range(0..ids.len())];
                macro_sample(a.seg_by_id(sid), self.gamma)
            })
            .collect();
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), BufferIoError> {
        let mut f = std::fs::File::create(path)?;
        let header = serde_json::json!({
            "version": BUFFER_FORMAT_VERSION,
            "gamma": self.gamma,
            "capacity": self.capacity,
            "n_agents": self.meta.n_agents,
            "obs_dim": self.meta.obs_dim,
            "state_dim": self.meta.state_dim,
            "action_count": self.meta.action_count,
            "d_pe": self.meta.d_pe,
        });
        f.write_all(header.to_string().as_bytes())?;
        f.write_all(b"\n")?;
        let mut buf: Vec<u8> = Vec::new();
        for a in &self.agents {
            w_u32(&mut buf, a.segments.len() as u32);
            for seg in &a.segments {
                w_u64(&mut buf, seg.episode as u64);
                w_u32(&mut buf, seg.owner as u32);
                w_u32(&mut buf, seg.macro_id as u32);
                w_u32(&mut buf, seg.start as u32);
                w_f64(&mut buf, seg.r_cum);
                w_u32(&mut buf, seg.records.len() as u32);
                for r in &seg.records {
                    w_u32(&mut buf, r.t as u32);
                    w_f64(&mut buf, r.reward);
                    w_f64s(&mut buf, &r.state);
                    for o in &r.obs {
                        w_f64s(&mut buf, o);
                    }
                    for m in &r.actions {
                        w_u32(&mut buf, m.id as u32);
                        w_u32(&mut buf, m.step as u32);
                    }
                }
                w_u32(&mut buf, seg.close.t as u32);
                buf.push(seg.close.done as u8);
                for fl in &seg.close.terminated {
                    buf.push(*fl as u8);
                }
                w_f64s(&mut buf, &seg.close.state);
                for o in &seg.close.obs {
                    w_f64s(&mut buf, o);
                }
            }
        }
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SjertBuffers, BufferIoError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| BufferIoError::Format("missing header line".into()))?;
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| BufferIoError::Format(format!("bad header: {e}")))?;
        let version = header["version"].as_u64().unwrap_or(0) as u32;
        if version != BUFFER_FORMAT_VERSION {
            return Err(BufferIoError::Version {
                found: version,
                expected: BUFFER_FORMAT_VERSION,
            });
        }
        let gamma = header["gamma"].as_f64().ok_or_else(|| BufferIoError::Format("gamma".into()))?;
        let capacity = header["capacity"].as_u64().ok_or_else(|| BufferIoError::Format("capacity".into()))? as usize;
        let meta = BufferMeta {
            n_agents: header["n_agents"].as_u64().unwrap_or(0) as usize,
            obs_dim: header["obs_dim"].as_u64().unwrap_or(0) as usize,
            state_dim: header["state_dim"].as_u64().unwrap_or(0) as usize,
            action_count: header["action_count"].as_u64().unwrap_or(0) as usize,
            d_pe: header["d_pe"].as_u64().unwrap_or(0) as usize,
        };
        let mut out = SjertBuffers::new(gamma, capacity, meta);
        let mut c = Cursor {
            bytes: &bytes[nl + 1..],
            pos: 0,
        };
        for ai in 0..meta.n_agents {
            let count = c.u32()? as usize;
            for _ in 0..count {
                let episode = c.u64()? as usize;
                let owner = c.u32()? as usize;
                let macro_id = c.u32()? as usize;
                let start = c.u32()? as usize;
                let r_cum = c.f64()?;
                let n_rec = c.u32()? as usize;
                let mut records = Vec::with_capacity(n_rec);
                for _ in 0..n_rec {
                    let t = c.u32()? as usize;
                    let reward = c.f64()?;
                    let state = c.f64s(meta.state_dim)?;
                    let mut obs = Vec::with_capacity(meta.n_agents);
                    for _ in 0..meta.n_agents {
                        obs.push(c.f64s(meta.obs_dim)?);
                    }
                    let mut actions = Vec::with_capacity(meta.n_agents);
                    for _ in 0..meta.n_agents {
                        let id = c.u32()? as usize;
                        let step = c.u32()? as usize;
                        actions.push(ActiveMacro { id, step });
                    }
                    records.push(StepRecord { t, state, obs, actions, reward });
                }
                let close_t = c.u32()? as usize;
                let done = c.u8()? != 0;
                let mut terminated = Vec::with_capacity(meta.n_agents);
                for _ in 0..meta.n_agents {
                    terminated.push(c.u8()? != 0);
                }
                let state = c.f64s(meta.state_dim)?;
                let mut obs = Vec::with_capacity(meta.n_agents);
                for _ in 0..meta.n_agents {
                    obs.push(c.f64s(meta.obs_dim)?);
                }
                let seg = MacroSegment {
                    episode,
                    owner,
                    macro_id,
                    start,
                    records,
                    close: CloseInfo { t: close_t, state, obs, terminated, done },
                    r_cum,
                };
                *out.episode_refs.entry(episode).or_insert(0) += 1;
                out.agents[ai].push_closed(seg);
            }
        }
        Ok(out)
    }

    /// Buffers are tagged with the discount used to close their segments;
    /// mixing discounts invalidates stored cumulative rewards.
    pub fn check_gamma(&self, requested: f64) -> Result<(), BufferIoError> {
        if (self.gamma - requested).abs() > 1e-12 {
            return Err(BufferIoError::GammaMismatch {
                buffer: self.gamma,
                requested,
            });
        }
        Ok(())
    }
}

fn view_of(rec: &StepRecord) -> JointStepView {
    JointStepView {
        t: rec.t,
        state: rec.state.clone(),
        obs: rec.obs.clone(),
        actions: rec.actions.clone(),
    }
}

fn close_view(seg: &MacroSegment) -> JointStepView {
    let last = seg.records.last().expect("non-empty segment");
    JointStepView {
        t: seg.close.t,
        state: seg.close.state.clone(),
        obs: seg.close.obs.clone(),
        actions: last
            .actions
            .iter()
            .map(|m| ActiveMacro {
                id: m.id,
                step: m.step + 1,
            })
            .collect(),
    }
}

/// Micro-transition starting at record `k`, bootstrapping `n'` steps later
/// (truncated at the segment close).
fn micro_sample(seg: &MacroSegment, k: usize, n_step: usize, gamma: f64, unroll_cap: usize) -> TdSample {
    let dur = seg.duration();
    let n_eff = n_step.max(1).min(dur - k);
    let target_abs = k + n_eff;
    let reward = (0..n_eff)
        .map(|j| gamma.powi(j as i32) * seg.records[k + j].reward)
        .sum();
    let mut steps: Vec<JointStepView> = seg.records[..=target_abs.min(dur - 1)]
        .iter()
        .map(view_of)
        .collect();
    if target_abs == dur {
        steps.push(close_view(seg));
    }
    // truncate old context, keeping both evaluation points in the window
    let lo = (target_abs + 1).saturating_sub(unroll_cap).min(k);
    if lo > 0 {
        steps.drain(..lo);
    }
    let terminated_at_target = if target_abs == dur {
        seg.close.terminated.clone()
    } else {
        seg.records[target_abs]
            .actions
            .iter()
            .map(|m| m.step == 0)
            .collect()
    };
    let done_at_target = target_abs == dur && seg.close.done;
    TdSample {
        online_idx: k - lo,
        target_idx: target_abs - lo,
        steps,
        reward,
        bootstrap_scale: if done_at_target { 0.0 } else { gamma.powi(n_eff as i32) },
        terminated_at_target,
    }
}

/// Whole-segment transition: evaluated at the start step, bootstrapped at
/// the closing snapshot with discount gamma^duration.
fn macro_sample(seg: &MacroSegment, gamma: f64) -> TdSample {
    let mut steps: Vec<JointStepView> = seg.records.iter().map(view_of).collect();
    steps.push(close_view(seg));
    let dur = seg.duration();
    TdSample {
        online_idx: 0,
        target_idx: dur,
        steps,
        reward: seg.r_cum,
        bootstrap_scale: if seg.close.done { 0.0 } else { gamma.powi(dur as i32) },
        terminated_at_target: seg.close.terminated.clone(),
    }
}

fn w_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}
fn w_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}
fn w_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}
fn w_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        w_f64(buf, *v);
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BufferIoError> {
        if self.pos + n > self.bytes.len() {
            return Err(BufferIoError::Format("unexpected end of buffer file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, BufferIoError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, BufferIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, BufferIoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, BufferIoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, BufferIoError> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;

    fn meta2() -> BufferMeta {
        BufferMeta {
            n_agents: 2,
            obs_dim: 2,
            state_dim: 3,
            action_count: 4,
            d_pe: 4,
        }
    }

    /// Hand-scripted episode: agent 0 runs macro 1 for 3 steps, agent 1
    /// runs macro 2 for 2 steps then macro 3. Rewards are 1, 2, 4 so the
    /// credited sums are distinguishable.
    pub(crate) fn scripted_steps() -> Vec<DriverStep> {
        let mk = |t: usize,
                  actions: [(usize, usize); 2],
                  reward: f64,
                  terminated: [bool; 2],
                  done: bool| DriverStep {
            t,
            state: vec![t as f64, 0.0, 1.0],
            obs: vec![vec![t as f64, 0.0], vec![0.0, t as f64]],
            actions: vec![
                ActiveMacro { id: actions[0].0, step: actions[0].1 },
                ActiveMacro { id: actions[1].0, step: actions[1].1 },
            ],
            reward,
            terminated: terminated.to_vec(),
            done,
            next_state: vec![(t + 1) as f64, 0.0, 1.0],
            next_obs: vec![vec![(t + 1) as f64, 0.0], vec![0.0, (t + 1) as f64]],
        };
        vec![
            mk(0, [(1, 0), (2, 0)], 1.0, [false, false], false),
            mk(1, [(1, 1), (2, 1)], 2.0, [false, true], false),
            mk(2, [(1, 2), (3, 0)], 4.0, [true, false], false),
            mk(3, [(0, 0), (3, 1)], 8.0, [true, true], true),
        ]
    }

    fn filled(gamma: f64) -> SjertBuffers {
        let mut b = SjertBuffers::new(gamma, 100, meta2());
        for s in scripted_steps() {
            b.record_step(0, &s);
        }
        b
    }

    #[test]
    fn decentralized_credit_spans_other_agents_terminations() {
        let b = filled(1.0);
        let seg = b.agent(0).segment(0);
        assert_eq!(seg.macro_id, 1);
        assert_eq!(seg.start, 0);
        assert_eq!(seg.duration(), 3);
        // r_1 + r_2 + r_3 in arrival terms: the rewards of its three steps
        assert_eq!(seg.r_cum, 1.0 + 2.0 + 4.0);
        // agent 1's first macro closed earlier with its own two rewards
        let s1 = b.agent(1).segment(0);
        assert_eq!(s1.macro_id, 2);
        assert_eq!(s1.r_cum, 1.0 + 2.0);
    }

    #[test]
    fn discounted_cumulative_reward() {
        let b = filled(0.9);
        let seg = b.agent(0).segment(0);
        let expect = 1.0 + 0.9 * 2.0 + 0.81 * 4.0;
        assert!((seg.r_cum - expect).abs() < 1e-9);
    }

    #[test]
    fn one_step_macro_credits_single_reward() {
        let b = filled(0.5);
        // agent 0's second macro (id 0) ran exactly one step with reward 8
        let seg = b.agent(0).segment(1);
        assert_eq!(seg.duration(), 1);
        assert_eq!(seg.r_cum, 8.0);
    }

    #[test]
    fn ordering_relation_is_strict_per_agent() {
        let b = filled(1.0);
        for a in 0..2 {
            let closes: Vec<usize> = b.agent(a).closed().map(|s| s.close.t).collect();
            for w in closes.windows(2) {
                assert!(w[0] < w[1], "termination order violated: {closes:?}");
            }
        }
    }

    #[test]
    fn segments_closed_at_episode_end() {
        let b = filled(1.0);
        // both agents' final segments close with done
        assert_eq!(b.agent(0).len(), 2);
        assert_eq!(b.agent(1).len(), 2);
        assert!(b.agent(0).segment(1).close.done);
    }

    #[test]
    fn micro_sample_fields_reconstruct_from_records() {
        let b = filled(1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let samples = b.sample_micro(64, 1, 64, &mut rng).unwrap();
        for s in samples {
            assert_eq!(s.target_idx, s.online_idx + 1);
            let a = &s.steps[s.online_idx];
            let bview = &s.steps[s.target_idx];
            assert_eq!(bview.t, a.t + 1, "adjacent timesteps");
        }
    }

    #[test]
    fn single_two_step_segment_always_yields_its_transitions() {
        // one segment of duration 2 gives starting offsets {0, 1}
        let mut b = SjertBuffers::new(1.0, 10, meta2());
        let steps = scripted_steps();
        b.record_step(0, &steps[0]);
        b.record_step(0, &steps[1]);
        // only agent 1's first macro closed so far
        assert_eq!(b.agent(1).len(), 1);
        assert_eq!(b.total_micro_candidates(), 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for s in b.sample_micro(32, 1, 64, &mut rng).unwrap() {
            assert!(s.online_idx == 0 || s.online_idx == 1);
        }
    }

    #[test]
    fn open_segments_are_excluded_from_sampling() {
        let mut b = SjertBuffers::new(1.0, 10, meta2());
        let steps = scripted_steps();
        b.record_step(0, &steps[0]);
        // nothing closed yet
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        assert_eq!(
            b.sample_micro(4, 1, 64, &mut rng),
            Err(SampleError::Insufficient("no closed segments to sample micro-transitions"))
        );
        assert!(b.sample_macro(0, 4, 64, &mut rng).is_err());
    }

    #[test]
    fn macro_sample_shape() {
        let b = filled(0.9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let samples = b.sample_macro(0, 8, 64, &mut rng).unwrap();
        for s in samples {
            assert_eq!(s.online_idx, 0);
            assert_eq!(s.target_idx, s.steps.len() - 1);
            if s.target_idx == 3 {
                // the three-step macro: bootstrap discount gamma^3 unless done
                assert_eq!(s.steps.len(), 4);
                assert!((s.reward - (1.0 + 0.9 * 2.0 + 0.81 * 4.0)).abs() < 1e-9);
                assert!((s.bootstrap_scale - 0.9f64.powi(3)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closing_view_advances_progress() {
        let b = filled(1.0);
        let seg = b.agent(0).segment(0);
        let v = close_view(seg);
        assert_eq!(v.t, 3);
        // continuing agent 1 was at progress 0 of macro 3 at t=2, so the
        // closing view pins it at progress 1
        assert_eq!(v.actions[1], ActiveMacro { id: 3, step: 1 });
    }

    #[test]
    fn terminal_macro_does_not_bootstrap() {
        let b = filled(1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let samples = b.sample_macro(1, 32, 64, &mut rng).unwrap();
        let terminal: Vec<_> = samples.iter().filter(|s| s.bootstrap_scale == 0.0).collect();
        assert!(!terminal.is_empty(), "agent 1's last segment ends the episode");
    }

    #[test]
    fn eviction_never_splits_segments_and_prunes_episodes() {
        let mut b = SjertBuffers::new(1.0, 3, meta2());
        for ep in 0..5 {
            for s in scripted_steps() {
                b.record_step(ep, &s);
            }
        }
        for a in 0..2 {
            assert!(b.agent(a).len() <= 3);
            for seg in b.agent(a).closed() {
                assert_eq!(seg.records.len(), seg.duration());
                assert!(!seg.records.is_empty());
            }
        }
        // old episodes fully evicted disappear from the episode index
        assert!(b.episodes().len() <= 4);
    }

    #[test]
    fn micro_sampling_is_uniform_over_candidates() {
        let b = filled(1.0);
        let total = b.total_micro_candidates();
        assert_eq!(total, 3 + 1 + 2 + 2);
        // the eight candidates group two per starting wall time
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let draws = 40_000usize;
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for s in b.sample_micro(draws, 1, 64, &mut rng).unwrap() {
            *counts.entry(s.steps[s.online_idx].t).or_insert(0) += 1;
        }
        let p = 2.0 / total as f64;
        let expect = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert_eq!(counts.len(), 4);
        for (t, c) in counts {
            assert!(
                (c as f64 - expect).abs() <= 3.0 * sigma,
                "start t={t}: count {c} vs expected {expect} (sigma {sigma})"
            );
        }
    }

    #[test]
    fn save_load_round_trip() {
        let b = filled(0.95);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("buffer.bin");
        b.save(&path).unwrap();
        let loaded = SjertBuffers::load(&path).unwrap();
        assert_eq!(loaded.gamma(), 0.95);
        for a in 0..2 {
            assert_eq!(loaded.agent(a).len(), b.agent(a).len());
            for (x, y) in loaded.agent(a).closed().zip(b.agent(a).closed()) {
                assert_eq!(x, y);
            }
        }
        assert!(loaded.check_gamma(0.95).is_ok());
        assert!(loaded.check_gamma(0.9).is_err());
    }

    #[test]
    #[should_panic(expected = "finished episode")]
    fn recording_after_done_is_rejected() {
        let mut b = filled(1.0);
        let extra = scripted_steps().pop().unwrap();
        b.record_step(0, &extra);
    }
}
