//! Versioned binary persistence of trained posteriors.
//!
//! Layout (little-endian): magic `MVTSNAP\0`, format version `u16`, payload
//! length `u64`, payload, CRC-32 of the payload. Floating-point values are
//! stored as raw IEEE-754 bits, so a save/load cycle is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::blip::GaussianPosterior;
use crate::features::{ModelKind, TemplateSpec};
use crate::policy::{ArgmaxMode, HillClimbConfig};
use crate::simulator::{Algorithm, AlgorithmSpec, Learner};

pub const MAGIC: &[u8; 8] = b"MVTSNAP\0";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 8 + 2 + 8;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] crate::Error),
}

fn corrupt(msg: impl Into<String>) -> SnapshotError {
    SnapshotError::Corrupt(msg.into())
}

/// Everything needed to serve selections from a trained learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub algorithm: AlgorithmSpec,
    pub spec: TemplateSpec,
    pub kinds: Vec<ModelKind>,
    pub posteriors: Vec<GaussianPosterior>,
}

impl Snapshot {
    pub fn from_learner(algorithm: AlgorithmSpec, spec: &TemplateSpec, learner: &Learner) -> Self {
        Self {
            algorithm,
            spec: spec.clone(),
            kinds: learner.kinds(),
            posteriors: learner.posteriors().into_iter().cloned().collect(),
        }
    }

    pub fn learner(&self) -> crate::Result<Learner> {
        Learner::from_posteriors(&self.algorithm, &self.spec, self.posteriors.clone())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut p = Vec::new();
        p.push(algorithm_tag(self.algorithm.algorithm));
        match self.algorithm.argmax {
            ArgmaxMode::Exhaustive => p.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 0]),
            ArgmaxMode::HillClimb(cfg) => {
                p.push(1);
                put_u32(&mut p, cfg.restarts as u32);
                put_u32(&mut p, cfg.max_steps as u32);
                p.push(cfg.early_stop as u8);
            }
        }
        put_dims(&mut p, self.spec.widgets());
        put_dims(&mut p, self.spec.context());
        put_u32(&mut p, self.posteriors.len() as u32);
        for (kind, post) in self.kinds.iter().zip(&self.posteriors) {
            let (tag, widget) = kind_tag(*kind);
            p.push(tag);
            put_u32(&mut p, widget);
            p.extend_from_slice(&(post.dim() as u64).to_le_bytes());
            for m in post.means() {
                p.extend_from_slice(&m.to_bits().to_le_bytes());
            }
            for v in post.variances() {
                p.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }

        let mut out = Vec::with_capacity(HEADER_LEN + p.len() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        out.extend_from_slice(&p);
        out.extend_from_slice(&crc32fast::hash(&p).to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SnapshotError> {
        if bytes.len() < 10 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing snapshot magic"));
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != FORMAT_VERSION {
            return Err(SnapshotError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(corrupt("truncated header"));
        }
        let len = u64::from_le_bytes(bytes[10..18].try_into().expect("8 bytes"));
        let expected_total = (HEADER_LEN as u64)
            .checked_add(len)
            .and_then(|n| n.checked_add(4));
        if expected_total != Some(bytes.len() as u64) {
            return Err(corrupt(format!(
                "payload length {len} disagrees with file size {}",
                bytes.len()
            )));
        }
        let payload = &bytes[HEADER_LEN..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        Reader {
            buf: payload,
            pos: 0,
        }
        .snapshot()
    }

    /// Writes atomically: the file is replaced only once fully written.
    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        Ok(write_atomic(path, &self.encode())?)
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        Self::decode(&fs::read(path)?)
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn put_u32(p: &mut Vec<u8>, v: u32) {
    p.extend_from_slice(&v.to_le_bytes());
}

fn put_dims(p: &mut Vec<u8>, dims: &[usize]) {
    put_u32(p, dims.len() as u32);
    for &d in dims {
        put_u32(p, d as u32);
    }
}

fn algorithm_tag(a: Algorithm) -> u8 {
    Algorithm::ALL.iter().position(|&x| x == a).expect("listed") as u8
}

fn kind_tag(kind: ModelKind) -> (u8, u32) {
    match kind {
        ModelKind::Mvt1 => (0, 0),
        ModelKind::Mvt2 => (1, 0),
        ModelKind::Mvt2c => (2, 0),
        ModelKind::Mvt3 => (3, 0),
        ModelKind::NdMab => (4, 0),
        ModelKind::DMabs(i) => (5, i as u32),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], SnapshotError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("payload ends early"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, SnapshotError> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| corrupt("weight count overflows"))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }

    fn dims(&mut self) -> Result<Vec<usize>, SnapshotError> {
        let n = self.u32()? as usize;
        if n > self.buf.len() {
            return Err(corrupt("dimension list longer than payload"));
        }
        (0..n).map(|_| Ok(self.u32()? as usize)).collect()
    }

    fn snapshot(mut self) -> Result<Snapshot, SnapshotError> {
        let tag = self.u8()? as usize;
        let algorithm = *Algorithm::ALL
            .get(tag)
            .ok_or_else(|| corrupt(format!("unknown algorithm tag {tag}")))?;
        let mode = self.u8()?;
        let restarts = self.u32()? as usize;
        let max_steps = self.u32()? as usize;
        let early_stop = self.u8()?;
        let argmax = match (mode, early_stop) {
            (0, _) => ArgmaxMode::Exhaustive,
            (1, 0 | 1) => ArgmaxMode::HillClimb(
                HillClimbConfig::new(restarts, max_steps, early_stop == 1)
                    .map_err(|e| corrupt(e.to_string()))?,
            ),
            _ => return Err(corrupt(format!("unknown argmax mode {mode}"))),
        };
        let widgets = self.dims()?;
        let context = self.dims()?;
        let spec = TemplateSpec::new(widgets, context).map_err(|e| corrupt(e.to_string()))?;
        let count = self.u32()? as usize;
        if count > spec.widget_count().max(1) {
            return Err(corrupt(format!("{count} posteriors for one learner")));
        }
        let mut kinds = Vec::with_capacity(count);
        let mut posteriors = Vec::with_capacity(count);
        for _ in 0..count {
            let tag = self.u8()?;
            let widget = self.u32()? as usize;
            kinds.push(match tag {
                0 => ModelKind::Mvt1,
                1 => ModelKind::Mvt2,
                2 => ModelKind::Mvt2c,
                3 => ModelKind::Mvt3,
                4 => ModelKind::NdMab,
                5 => ModelKind::DMabs(widget),
                t => return Err(corrupt(format!("unknown model tag {t}"))),
            });
            let dim = usize::try_from(self.u64()?).map_err(|_| corrupt("dimension overflows"))?;
            let means = self.f64s(dim)?;
            let variances = self.f64s(dim)?;
            posteriors.push(
                GaussianPosterior::from_parts(means, variances)
                    .map_err(|e| corrupt(e.to_string()))?,
            );
        }
        if self.pos != self.buf.len() {
            return Err(corrupt("trailing bytes after posteriors"));
        }
        let snap = Snapshot {
            algorithm: AlgorithmSpec { algorithm, argmax },
            spec,
            kinds,
            posteriors,
        };
        let learner = snap.learner().map_err(|e| corrupt(e.to_string()))?;
        if learner.kinds() != snap.kinds {
            return Err(corrupt("model kinds do not match the algorithm"));
        }
        Ok(snap)
    }
}
