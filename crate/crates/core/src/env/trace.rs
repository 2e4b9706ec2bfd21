//! Rollout trace files: one tab-separated line per primitive timestep with
//! fields (t, per-agent macro-action id, per-agent internal step, reward,
//! termination flags). A leading `# env=... seed=...` comment makes traces
//! self-describing for replay.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed trace at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub ids: Vec<usize>,
    pub steps: Vec<usize>,
    pub reward: f64,
    pub flags: Vec<bool>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub env_id: String,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new(env_id: impl Into<String>, seed: u64) -> Self {
        Trace {
            env_id: env_id.into(),
            seed,
            rows: Vec::new(),
        }
    }

    pub fn to_string(&self) -> String {
        let mut out = format!("# env={} seed={}\n", self.env_id, self.seed);
        for r in &self.rows {
            let ids: Vec<String> = r.ids.iter().map(|v| v.to_string()).collect();
            let steps: Vec<String> = r.steps.iter().map(|v| v.to_string()).collect();
            let flags: Vec<String> = r
                .flags
                .iter()
                .map(|f| if *f { "1".into() } else { "0".into() })
                .collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.t,
                ids.join(" "),
                steps.join(" "),
                r.reward,
                flags.join(" ")
            ));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut trace = Trace::default();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.split_whitespace() {
                    if let Some(v) = kv.strip_prefix("env=") {
                        trace.env_id = v.to_string();
                    } else if let Some(v) = kv.strip_prefix("seed=") {
                        trace.seed = v.parse().map_err(|_| TraceError::Malformed {
                            line: lineno,
                            reason: format!("bad seed {v}"),
                        })?;
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(TraceError::Malformed {
                    line: lineno,
                    reason: format!("expected 5 tab-separated fields, got {}", fields.len()),
                });
            }
            let bad = |reason: String| TraceError::Malformed { line: lineno, reason };
            let t = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad timestep {}", fields[0])))?;
            let ids = fields[1]
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad(format!("bad macro id {v}"))))
                .collect::<Result<Vec<usize>, _>>()?;
            let steps = fields[2]
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad(format!("bad internal step {v}"))))
                .collect::<Result<Vec<usize>, _>>()?;
            let reward = fields[3]
                .parse()
                .map_err(|_| bad(format!("bad reward {}", fields[3])))?;
            let flags = fields[4]
                .split_whitespace()
                .map(|v| match v {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(bad(format!("bad flag {other}"))),
                })
                .collect::<Result<Vec<bool>, _>>()?;
            if ids.len() != steps.len() || ids.len() != flags.len() {
                return Err(bad("inconsistent per-agent field lengths".into()));
            }
            trace.rows.push(TraceRow {
                t,
                ids,
                steps,
                reward,
                flags,
            });
        }
        Ok(trace)
    }

    pub fn read(path: &Path) -> Result<Trace, TraceError> {
        let text = fs::read_to_string(path)?;
        Trace::parse(&text)
    }
}

/// Split an environment id like "boxpushing6" into its name and grid size.
pub fn parse_env_id(env_id: &str) -> (String, usize) {
    let digits: String = env_id.chars().filter(|c| c.is_ascii_digit()).collect();
    let name: String = env_id.chars().filter(|c| !c.is_ascii_digit()).collect();
    (name, digits.parse().unwrap_or(0))
}
