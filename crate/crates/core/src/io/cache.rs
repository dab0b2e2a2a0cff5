use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::encode_beats;
use crate::beat::BeatTensor;
use crate::error::{Error, Result};
use crate::metric::ShapeMetric;
use crate::ot::{CostMatrix, MetricTag};

pub const COST_MAGIC: &[u8; 4] = b"WCST";

/// SHA-256 over both encoded beat payloads and the metric description.
pub fn cost_digest(a: &[BeatTensor], b: &[BeatTensor], metric: &ShapeMetric) -> Result<[u8; 32]> {
    let mut h = Sha256::new();
    h.update(encode_beats(a)?);
    h.update(encode_beats(b)?);
    h.update(metric.describe().as_bytes());
    Ok(h.finalize().into())
}

/// `"WCST" | digest [32] | n u32 | m u32 | n·m f64`, little-endian,
/// row-major; written atomically.
pub fn save_cost_cache(path: &Path, digest: &[u8; 32], cost: &CostMatrix) -> Result<()> {
    let (n, m) = cost.shape();
    let mut out = Vec::with_capacity(44 + 8 * n * m);
    out.extend_from_slice(COST_MAGIC);
    out.extend_from_slice(digest);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    for v in cost.matrix().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    super::write_atomic(path, &out)
}

/// The cached matrix if the file exists, parses and carries `digest`;
/// `Ok(None)` when it is missing or stale.
pub fn load_cost_cache(path: &Path, digest: &[u8; 32]) -> Result<Option<CostMatrix>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    if bytes.len() < 44 {
        return Err(Error::Truncated(format!("cost cache of {} bytes", bytes.len())));
    }
    if &bytes[..4] != COST_MAGIC {
        return Err(Error::Format("not a cost cache (bad magic)".into()));
    }
    if &bytes[4..36] != digest {
        return Ok(None);
    }
    let n = u32::from_le_bytes(bytes[36..40].try_into().expect("4 bytes")) as usize;
    let m = u32::from_le_bytes(bytes[40..44].try_into().expect("4 bytes")) as usize;
    let body = &bytes[44..];
    if body.len() != 8 * n * m {
        return Err(Error::Truncated(format!(
            "cost cache declares {n}x{m} entries, holds {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let matrix = Array2::from_shape_vec((n, m), values).map_err(|e| Error::Format(e.to_string()))?;
    Ok(Some(CostMatrix::new(matrix, MetricTag::BeatShape)?))
}

/// Pairwise beat-shape costs, served from `path` when its digest matches and
/// recomputed (and rewritten) otherwise. The flag reports a cache hit.
pub fn cached_pairwise(
    path: &Path,
    a: &[BeatTensor],
    b: &[BeatTensor],
    metric: &ShapeMetric,
) -> Result<(CostMatrix, bool)> {
    let digest = cost_digest(a, b, metric)?;
    if let Some(c) = load_cost_cache(path, &digest)? {
        return Ok((c, true));
    }
    let cost = metric.pairwise(a, b)?;
    save_cost_cache(path, &digest, &cost)?;
    Ok((cost, false))
}
