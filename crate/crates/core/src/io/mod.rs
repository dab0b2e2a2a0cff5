//! File formats, run configuration and dataset summaries.

mod beats;
mod cache;
mod config;
mod records;
mod summary;

pub use beats::{decode_beats, encode_beats, load_beats, save_beats, BEATS_MAGIC, BEATS_VERSION};
pub use cache::{cached_pairwise, cost_digest, load_cost_cache, save_cost_cache, COST_MAGIC};
pub use config::RunConfig;
pub use records::{import_csv, load_records, save_records, LabeledRecord};
pub use summary::{dataset_summary, percentages, summarize_counts, ClassSummary, DatasetSummary};

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;

/// Writes `bytes` next to `path` under a temporary name, then renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
