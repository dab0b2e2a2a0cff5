use std::fs;
use std::path::Path;

use crate::beat::{BeatTensor, ClassId};
use crate::error::{Error, Result};

pub const BEATS_MAGIC: &[u8; 4] = b"ECGB";
pub const BEATS_VERSION: u32 = 1;

/// Little-endian layout:
///
/// ```text
/// "ECGB" | version u32 | n_beats u32 | n_leads u32 | beat_len u32 | sample_rate f64
/// per beat: class u32 | id_len u32 | id bytes | n_leads·beat_len f32 (row-major by lead)
/// ```
///
/// Samples are stored as `f32`, so encoding is lossy for arbitrary `f64`
/// beats but exact for anything that was itself decoded from this format.
pub fn encode_beats(beats: &[BeatTensor]) -> Result<Vec<u8>> {
    let (n_leads, beat_len, fs) = match beats.first() {
        Some(b) => (b.n_leads(), b.beat_len(), b.sample_rate),
        None => (0, 0, 0.0),
    };
    if let Some(b) = beats
        .iter()
        .find(|b| !b.same_shape(&beats[0]) || b.sample_rate != fs)
    {
        return Err(Error::Dimension(format!(
            "beat from {} is {}x{} at {} Hz; file holds {n_leads}x{beat_len} at {fs} Hz",
            b.source_id,
            b.n_leads(),
            b.beat_len(),
            b.sample_rate
        )));
    }
    let mut out = Vec::with_capacity(28 + beats.len() * (8 + 4 * n_leads * beat_len));
    out.extend_from_slice(BEATS_MAGIC);
    for v in [BEATS_VERSION, beats.len() as u32, n_leads as u32, beat_len as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&fs.to_le_bytes());
    for b in beats {
        out.extend_from_slice(&b.label.0.to_le_bytes());
        out.extend_from_slice(&(b.source_id.len() as u32).to_le_bytes());
        out.extend_from_slice(b.source_id.as_bytes());
        for &s in b.samples() {
            out.extend_from_slice(&(s as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what} at byte {} needs {n} bytes, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_beats(bytes: &[u8]) -> Result<Vec<BeatTensor>> {
    let mut c = Cursor { bytes, pos: 0 };
    if bytes.len() < 4 {
        return Err(Error::Truncated(format!("beats file of {} bytes", bytes.len())));
    }
    if c.take(4, "magic")? != BEATS_MAGIC {
        return Err(Error::Format("not a beats file (bad magic)".into()));
    }
    let version = c.u32("version")?;
    if version != BEATS_VERSION {
        return Err(Error::Format(format!("unsupported beats file version {version}")));
    }
    let n_beats = c.u32("beat count")? as usize;
    let n_leads = c.u32("lead count")? as usize;
    let beat_len = c.u32("beat length")? as usize;
    let fs = f64::from_le_bytes(c.take(8, "sample rate")?.try_into().expect("8 bytes"));
    let n_samples = n_leads * beat_len;
    let mut beats = Vec::with_capacity(n_beats.min(1 << 20));
    for k in 0..n_beats {
        let label = ClassId(c.u32("class id")?);
        let id_len = c.u32("source id length")? as usize;
        let id = std::str::from_utf8(c.take(id_len, "source id")?)
            .map_err(|_| Error::Format(format!("beat {k}: source id is not UTF-8")))?
            .to_owned();
        let raw = c.take(4 * n_samples, "samples")?;
        let samples = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        beats.push(BeatTensor::new(samples, n_leads, label, fs, id)?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after {n_beats} declared beats",
            bytes.len() - c.pos
        )));
    }
    Ok(beats)
}

pub fn save_beats(path: &Path, beats: &[BeatTensor]) -> Result<()> {
    super::write_atomic(path, &encode_beats(beats)?)
}

pub fn load_beats(path: &Path) -> Result<Vec<BeatTensor>> {
    decode_beats(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beats() -> Vec<BeatTensor> {
        (0..3)
            .map(|k| {
                let s = (0..20).map(|i| (i as f64 * 0.37 + k as f64).sin()).collect();
                BeatTensor::new(s, 2, ClassId(k), 100.0, format!("p{k}")).unwrap()
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bytes = encode_beats(&beats()).unwrap();
        let back = decode_beats(&bytes).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in beats().iter().zip(&back) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.source_id, b.source_id);
            for (x, y) in a.samples().iter().zip(b.samples()) {
                assert_eq!((*x as f32).to_bits(), (*y as f32).to_bits());
            }
        }
        assert_eq!(encode_beats(&back).unwrap(), bytes);
        assert!(decode_beats(&encode_beats(&[]).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn corrupt_files() {
        let mut bytes = encode_beats(&beats()).unwrap();
        assert!(matches!(decode_beats(&[]), Err(Error::Truncated(_))));
        assert!(matches!(decode_beats(&bytes[..bytes.len() - 3]), Err(Error::Truncated(_))));
        bytes.push(0);
        assert!(matches!(decode_beats(&bytes), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(decode_beats(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn mixed_shapes_rejected() {
        let mut b = beats();
        b.push(BeatTensor::new(vec![0.0; 30], 3, ClassId(0), 100.0, "x").unwrap());
        assert!(encode_beats(&b).is_err());
    }
}
