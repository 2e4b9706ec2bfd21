//! Sinusoidal temporal positional encoding and the construction of
//! time-stamped macro-action / macro-observation tokens.
//!
//! A macro-action token carries two time codes: the wall-clock timestep at
//! which it was recorded and the execution progress of the macro-action, so
//! that the same action at different stages of execution is never
//! represented identically. Macro-observation tokens carry the wall-clock
//! code only.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("d_pe must be even, got {0}")]
    OddDim(usize),
    #[error("macro-action progress {progress} exceeds wall time {wall}")]
    ProgressAfterWall { progress: usize, wall: usize },
}

/// Sinusoidal code of a timestep: entry 2j is sin(t / 10000^(2j/d_pe)),
/// entry 2j+1 is cos of the same phase.
pub fn encode_time(t: usize, d_pe: usize) -> Result<Vec<f64>, EncodingError> {
    if d_pe % 2 != 0 {
        return Err(EncodingError::OddDim(d_pe));
    }
    let mut out = Vec::with_capacity(d_pe);
    for j in 0..d_pe / 2 {
        let freq = 10000f64.powf((2 * j) as f64 / d_pe as f64);
        let phase = t as f64 / freq;
        out.push(phase.sin());
        out.push(phase.cos());
    }
    Ok(out)
}

/// Precomputed `encode_time` rows for t in 0..=horizon. Rollout and
/// sampling paths hit this table instead of recomputing transcendentals.
#[derive(Debug, Clone)]
pub struct TimeTable {
    d_pe: usize,
    rows: Vec<Vec<f64>>,
}

impl TimeTable {
    pub fn new(horizon: usize, d_pe: usize) -> Result<Self, EncodingError> {
        let rows = (0..=horizon)
            .map(|t| encode_time(t, d_pe))
            .collect::<Result<_, _>>()?;
        Ok(TimeTable { d_pe, rows })
    }

    pub fn d_pe(&self) -> usize {
        self.d_pe
    }

    pub fn code(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedToken {
    pub values: Vec<f64>,
}

/// onehot(action) (+) f_e(wall) (+) f_e(progress).
pub fn encode_macro_action(
    action_id: usize,
    action_count: usize,
    wall: usize,
    progress: usize,
    table: &TimeTable,
) -> Result<EncodedToken, EncodingError> {
    if progress > wall {
        return Err(EncodingError::ProgressAfterWall { progress, wall });
    }
    let mut values = vec![0.0; action_count];
    values[action_id] = 1.0;
    values.extend_from_slice(table.code(wall));
    values.extend_from_slice(table.code(progress));
    Ok(EncodedToken { values })
}

/// obs (+) f_e(wall). Observations carry no progress code.
pub fn encode_macro_observation(obs: &[f64], wall: usize, table: &TimeTable) -> EncodedToken {
    let mut values = Vec::with_capacity(obs.len() + table.d_pe());
    values.extend_from_slice(obs);
    values.extend_from_slice(table.code(wall));
    EncodedToken { values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_zero_alternates_zero_one() {
        let v = encode_time(0, 8).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn t_one_d2_is_sin_cos_of_one() {
        let v = encode_time(1, 2).unwrap();
        assert!((v[0] - 0.8414709848078965).abs() < 1e-12);
        assert!((v[1] - 0.5403023058681398).abs() < 1e-12);
    }

    #[test]
    fn odd_dim_rejected() {
        assert_eq!(encode_time(3, 5), Err(EncodingError::OddDim(5)));
    }

    #[test]
    fn codes_bounded_by_one() {
        for t in 0..200 {
            let v = encode_time(t, 8).unwrap();
            assert!(v.iter().all(|x| x.abs() <= 1.0));
        }
    }

    #[test]
    fn injective_over_scan() {
        let codes: Vec<Vec<f64>> = (0..=100).map(|t| encode_time(t, 8).unwrap()).collect();
        for i in 0..codes.len() {
            for j in i + 1..codes.len() {
                assert_ne!(codes[i], codes[j], "t={i} and t={j} collide");
            }
        }
    }

    #[test]
    fn same_action_different_times_differ() {
        let table = TimeTable::new(10, 8).unwrap();
        let a = encode_macro_action(1, 4, 0, 0, &table).unwrap();
        let b = encode_macro_action(1, 4, 3, 3, &table).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn progress_only_differs_in_progress_code() {
        let table = TimeTable::new(10, 8).unwrap();
        let a = encode_macro_action(2, 4, 5, 0, &table).unwrap();
        let b = encode_macro_action(2, 4, 5, 2, &table).unwrap();
        let prefix = 4 + 8;
        assert_eq!(a.values[..prefix], b.values[..prefix]);
        assert_ne!(a.values[prefix..], b.values[prefix..]);
    }

    #[test]
    fn zero_dpe_degenerates_to_onehot() {
        let table = TimeTable::new(10, 0).unwrap();
        let a = encode_macro_action(2, 4, 5, 2, &table).unwrap();
        assert_eq!(a.values, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn progress_beyond_wall_rejected() {
        let table = TimeTable::new(10, 4).unwrap();
        let err = encode_macro_action(0, 2, 1, 2, &table).unwrap_err();
        assert_eq!(err, EncodingError::ProgressAfterWall { progress: 2, wall: 1 });
    }

    #[test]
    fn observation_tokens_fresh_per_timestep() {
        let table = TimeTable::new(10, 8).unwrap();
        let obs = vec![0.0, 1.0, 0.0];
        let a = encode_macro_observation(&obs, 4, &table);
        let b = encode_macro_observation(&obs, 5, &table);
        assert_ne!(a, b);
        assert_eq!(a.values.len(), 3 + 8);
    }

    #[test]
    fn zero_obs_at_zero() {
        let table = TimeTable::new(4, 4).unwrap();
        let tok = encode_macro_observation(&[0.0, 0.0], 0, &table);
        assert_eq!(tok.values, vec![0.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn action_tokens_injective_over_range() {
        let table = TimeTable::new(6, 8).unwrap();
        let mut seen: Vec<(usize, usize, usize, Vec<f64>)> = Vec::new();
        for a in 0..3 {
            for wall in 0..=6 {
                for prog in 0..=wall {
                    let tok = encode_macro_action(a, 3, wall, prog, &table).unwrap();
                    for (pa, pw, pp, pv) in &seen {
                        if *pv == tok.values {
                            panic!("collision: ({a},{wall},{prog}) vs ({pa},{pw},{pp})");
                        }
                    }
                    seen.push((a, wall, prog, tok.values));
                }
            }
        }
    }
}
