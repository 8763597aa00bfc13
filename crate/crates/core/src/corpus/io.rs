//! Corpus file formats: the binary feature file and the text manifest.
//!
//! Feature file layout: magic `MFRM`, version (u32 LE), record count,
//! feature dim, then per record a length-prefixed utterance id, speaker
//! id, domain id, frame count and the little-endian f32 frame matrix in
//! row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::corpus::store::Utterance;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MFRM";
const VERSION: u32 = 1;

pub fn save_utterances(utts: &[Utterance], dim: usize, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(utts.len() as u32)?;
    w.write_u32::<LittleEndian>(dim as u32)?;
    for u in utts {
        if u.frames.ncols() != dim {
            return Err(Error::Shape(format!(
                "utterance '{}' has dim {}, file dim {}",
                u.utt_id,
                u.frames.ncols(),
                dim
            )));
        }
        let id = u.utt_id.as_bytes();
        w.write_u32::<LittleEndian>(id.len() as u32)?;
        w.write_all(id)?;
        w.write_u32::<LittleEndian>(u.speaker_id as u32)?;
        w.write_u32::<LittleEndian>(u.domain_id as u32)?;
        w.write_u32::<LittleEndian>(u.frames.nrows() as u32)?;
        for v in u.frames.iter() {
            w.write_f32::<LittleEndian>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_utterances(path: &Path) -> Result<Vec<Utterance>> {
    let mut r = BufReader::new(File::open(path)?);
    let bad = |reason: String| Error::Format { path: path.display().to_string(), reason };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let mut utts = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = r.read_u32::<LittleEndian>()? as usize;
        if id_len > 1 << 16 {
            return Err(bad("utterance id too long".into()));
        }
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id)?;
        let utt_id = String::from_utf8(id).map_err(|_| bad("utterance id not utf-8".into()))?;
        let speaker_id = r.read_u32::<LittleEndian>()? as usize;
        let domain_id = r.read_u32::<LittleEndian>()? as usize;
        let n_frames = r.read_u32::<LittleEndian>()? as usize;
        let mut frames = Array2::zeros((n_frames, dim));
        for v in frames.iter_mut() {
            *v = r.read_f32::<LittleEndian>()?;
        }
        utts.push(Utterance { utt_id, speaker_id, domain_id, frames });
    }
    Ok(utts)
}

/// `utt_id<TAB>speaker_id<TAB>domain_id<TAB>n_frames` lines.
pub fn manifest_text(utts: &[Utterance]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    for u in utts {
        writeln!(out, "{}\t{}\t{}\t{}", u.utt_id, u.speaker_id, u.domain_id, u.frames.nrows())
            .unwrap();
    }
    out
}

pub fn save_manifest(utts: &[Utterance], path: &Path) -> Result<()> {
    std::fs::write(path, manifest_text(utts))?;
    Ok(())
}
