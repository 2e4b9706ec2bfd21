//! Named parameter bundles and the on-disk checkpoint format: a text
//! manifest plus one flat little-endian f64 array file per parameter path.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use super::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("incompatible checkpoint version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
}

/// All trainable parameters, keyed by path. Iteration order is the sorted
/// path order, which keeps every run deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamBundle {
    params: BTreeMap<String, Tensor>,
    pub version: u64,
}

impl ParamBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, t: Tensor) {
        self.params.insert(path.into(), t);
    }

    pub fn get(&self, path: &str) -> &Tensor {
        self.params
            .get(path)
            .unwrap_or_else(|| panic!("unknown parameter path {path}"))
    }

    pub fn get_mut(&mut self, path: &str) -> &mut Tensor {
        self.params
            .get_mut(path)
            .unwrap_or_else(|| panic!("unknown parameter path {path}"))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.params.contains_key(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn paths(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// True when `other` has exactly the same paths and shapes — the
    /// invariant between an online bundle and its target mirror.
    pub fn mirrors(&self, other: &ParamBundle) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().all(|(k, t)| {
                other
                    .params
                    .get(k)
                    .map(|o| o.shape() == t.shape())
                    .unwrap_or(false)
            })
    }
}

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight matrix.
pub fn init_weight(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data)
}

pub fn init_bias(fan_out: usize) -> Tensor {
    Tensor::zeros(1, fan_out)
}

#[derive(Debug, Clone, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub init_scheme: String,
    pub extra: BTreeMap<String, String>,
}

pub fn save_checkpoint(dir: &Path, bundle: &ParamBundle, meta: &CheckpointMeta) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(&format!("format_version = {}\n", CHECKPOINT_FORMAT_VERSION));
    manifest.push_str(&format!("bundle_version = {}\n", bundle.version));
    manifest.push_str(&format!("seed = {}\n", meta.seed));
    manifest.push_str(&format!("init = {}\n", meta.init_scheme));
    for (k, v) in &meta.extra {
        manifest.push_str(&format!("meta.{k} = {v}\n"));
    }
    for (path, t) in bundle.iter() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("param {} {}\n", path, dims.join("x")));
        let mut bytes = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(dir.join(format!("{path}.f64")))?;
        f.write_all(&bytes)?;
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(ParamBundle, CheckpointMeta), CheckpointError> {
    let manifest = fs::read_to_string(dir.join("manifest.txt"))
        .map_err(|e| CheckpointError::Format(format!("cannot read manifest in {}: {e}", dir.display())))?;
    let mut bundle = ParamBundle::new();
    let mut meta = CheckpointMeta::default();
    let mut format_version = None;
    for (lineno, line) in manifest.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("param ") {
            let mut parts = rest.split_whitespace();
            let (name, dims) = match (parts.next(), parts.next()) {
                (Some(n), Some(d)) => (n, d),
                _ => {
                    return Err(CheckpointError::Format(format!(
                        "manifest line {}: malformed param entry",
                        lineno + 1
                    )))
                }
            };
            let shape: Vec<usize> = dims
                .split('x')
                .map(|d| {
                    d.parse::<usize>().map_err(|_| {
                        CheckpointError::Format(format!("manifest line {}: bad dims {dims}", lineno + 1))
                    })
                })
                .collect::<Result<_, _>>()?;
            let expected: usize = shape.iter().product();
            let mut bytes = Vec::new();
            fs::File::open(dir.join(format!("{name}.f64")))
                .map_err(|e| CheckpointError::Format(format!("missing parameter file for {name}: {e}")))?
                .read_to_end(&mut bytes)?;
            if bytes.len() != expected * 8 {
                return Err(CheckpointError::Format(format!(
                    "parameter {name}: expected {} bytes, found {}",
                    expected * 8,
                    bytes.len()
                )));
            }
            let data: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            bundle.insert(name, Tensor::new(shape, data));
        } else if let Some((k, v)) = line.split_once(" = ") {
            match k {
                "format_version" => {
                    let fv: u32 = v
                        .parse()
                        .map_err(|_| CheckpointError::Format(format!("bad format_version {v}")))?;
                    if fv != CHECKPOINT_FORMAT_VERSION {
                        return Err(CheckpointError::VersionMismatch {
                            found: fv,
                            supported: CHECKPOINT_FORMAT_VERSION,
                        });
                    }
                    format_version = Some(fv);
                }
                "bundle_version" => {
                    bundle.version = v
                        .parse()
                        .map_err(|_| CheckpointError::Format(format!("bad bundle_version {v}")))?;
                }
                "seed" => {
                    meta.seed = v
                        .parse()
                        .map_err(|_| CheckpointError::Format(format!("bad seed {v}")))?;
                }
                "init" => meta.init_scheme = v.to_string(),
                other => {
                    if let Some(mk) = other.strip_prefix("meta.") {
                        meta.extra.insert(mk.to_string(), v.to_string());
                    } else {
                        return Err(CheckpointError::Format(format!(
                            "manifest line {}: unknown key {other}",
                            lineno + 1
                        )));
                    }
                }
            }
        } else {
            return Err(CheckpointError::Format(format!(
                "manifest line {}: unparseable: {line}",
                lineno + 1
            )));
        }
    }
    if format_version.is_none() {
        return Err(CheckpointError::Format("manifest missing format_version".into()));
    }
    Ok((bundle, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut bundle = ParamBundle::new();
        bundle.insert("net.w", init_weight(&mut rng, 4, 3));
        bundle.insert("net.b", init_bias(3));
        bundle.version = 42;
        let mut meta = CheckpointMeta {
            seed: 7,
            init_scheme: "uniform_fan_in".into(),
            extra: BTreeMap::new(),
        };
        meta.extra.insert("env".into(), "boxpushing6".into());
        save_checkpoint(dir.path(), &bundle, &meta).unwrap();
        let (loaded, lmeta) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(loaded, bundle);
        assert_eq!(lmeta.seed, 7);
        assert_eq!(lmeta.extra["env"], "boxpushing6");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = ParamBundle::new();
        save_checkpoint(dir.path(), &bundle, &CheckpointMeta::default()).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        let tampered = manifest.replace("format_version = 1", "format_version = 99");
        std::fs::write(dir.path().join("manifest.txt"), tampered).unwrap();
        match load_checkpoint(dir.path()) {
            Err(CheckpointError::VersionMismatch { found: 99, .. }) => {}
            other => panic!("expected version mismatch, got {other:?}"),
        }
    }

    #[test]
    fn mirror_invariant() {
        let mut a = ParamBundle::new();
        a.insert("x", Tensor::zeros(2, 2));
        let b = a.clone();
        assert!(a.mirrors(&b));
        let mut c = b.clone();
        c.insert("y", Tensor::zeros(1, 1));
        assert!(!a.mirrors(&c));
    }

    #[test]
    fn init_weight_is_bounded_by_fan_in() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = init_weight(&mut rng, 16, 8);
        let bound = 1.0 / 4.0;
        assert!(w.data().iter().all(|v| v.abs() < bound));
    }
}
