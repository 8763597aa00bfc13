//! Binary checkpoint format.
//!
//! Layout: magic `MSDA`, format version (u32 LE), embedding layer index,
//! layer table (kind, name, dims, flags) and the parameter payload as
//! little-endian 64-bit floats in declaration order (weights row-major,
//! then bias, per layer). Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::layer::{Activation, LayerKind, LayerParams, LayerSpec};
use crate::nn::network::EmbeddingNetwork;

const MAGIC: &[u8; 4] = b"MSDA";
const VERSION: u32 = 1;

fn kind_code(kind: LayerKind) -> u8 {
    match kind {
        LayerKind::TimeDelay => 0,
        LayerKind::Dense => 1,
        LayerKind::StatsPool => 2,
        LayerKind::Grl => 3,
    }
}

fn kind_from(code: u8, path: &Path) -> Result<LayerKind> {
    Ok(match code {
        0 => LayerKind::TimeDelay,
        1 => LayerKind::Dense,
        2 => LayerKind::StatsPool,
        3 => LayerKind::Grl,
        _ => {
            return Err(Error::Format {
                path: path.display().to_string(),
                reason: format!("unknown layer kind {code}"),
            })
        }
    })
}

pub fn save(net: &EmbeddingNetwork, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(net.embedding_layer_index as u32)?;
    w.write_u32::<LittleEndian>(net.layers.len() as u32)?;
    for spec in &net.layers {
        w.write_u8(kind_code(spec.kind))?;
        let name = spec.name.as_bytes();
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name)?;
        w.write_u32::<LittleEndian>(spec.in_dim as u32)?;
        w.write_u32::<LittleEndian>(spec.out_dim as u32)?;
        w.write_u32::<LittleEndian>(spec.context_width as u32)?;
        w.write_u32::<LittleEndian>(spec.dilation as u32)?;
        w.write_u8(if spec.activation == Activation::Relu { 0 } else { 1 })?;
        w.write_u8(spec.trainable as u8)?;
    }
    for p in &net.params {
        for v in p.weight.iter() {
            w.write_f64::<LittleEndian>(*v)?;
        }
        for v in p.bias.iter() {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<EmbeddingNetwork> {
    let mut r = BufReader::new(File::open(path)?);
    let bad = |reason: &str| Error::Format { path: path.display().to_string(), reason: reason.into() };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let emb_idx = r.read_u32::<LittleEndian>()? as usize;
    let n_layers = r.read_u32::<LittleEndian>()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let kind = kind_from(r.read_u8()?, path)?;
        let name_len = r.read_u32::<LittleEndian>()? as usize;
        if name_len > 1 << 16 {
            return Err(bad("layer name too long"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("layer name not utf-8"))?;
        let in_dim = r.read_u32::<LittleEndian>()? as usize;
        let out_dim = r.read_u32::<LittleEndian>()? as usize;
        let context_width = r.read_u32::<LittleEndian>()? as usize;
        let dilation = r.read_u32::<LittleEndian>()? as usize;
        let activation = if r.read_u8()? == 0 { Activation::Relu } else { Activation::None };
        let trainable = r.read_u8()? != 0;
        layers.push(LayerSpec {
            name,
            kind,
            in_dim,
            out_dim,
            context_width,
            dilation,
            activation,
            trainable,
        });
    }
    let mut params = Vec::with_capacity(n_layers);
    for spec in &layers {
        if !spec.has_params() {
            params.push(LayerParams::empty());
            continue;
        }
        let rows = spec.out_dim;
        let cols = spec.weight_cols();
        let mut weight = Array2::zeros((rows, cols));
        for v in weight.iter_mut() {
            *v = r.read_f64::<LittleEndian>()?;
        }
        let mut bias = Array1::zeros(rows);
        for v in bias.iter_mut() {
            *v = r.read_f64::<LittleEndian>()?;
        }
        params.push(LayerParams { weight, bias });
    }
    EmbeddingNetwork::new(layers, params, emb_idx)
}
