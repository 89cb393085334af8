//! `CCS1` model files (little-endian):
//!
//! ```text
//! magic "CCS1" | version u32 = 1 | input_dim u32 | output_dim u32
//! support_count u32 x output_dim | c f64 x output_dim
//! for each output, for each support:
//!     anchor f64 x input_dim | value f64 | gradient f64 x input_dim | offset f64
//! ```
//!
//! `offset` is the f-part intercept `value - gradient · anchor`; it is stored
//! so that reloaded and cluster-derived planes evaluate bit-identically.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::model::{CcsModel, SupportSet};
use crate::error::{Error, Result};

pub const CCS_MAGIC: &[u8; 4] = b"CCS1";
const VERSION: u32 = 1;

pub fn write_ccs(model: &CcsModel, mut w: impl Write) -> Result<()> {
    w.write_all(CCS_MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(model.input_dim() as u32)?;
    w.write_u32::<LittleEndian>(model.output_dim() as u32)?;
    for n in model.support_counts() {
        w.write_u32::<LittleEndian>(n as u32)?;
    }
    for &c in model.c() {
        w.write_f64::<LittleEndian>(c)?;
    }
    for set in model.outputs() {
        for i in 0..set.len() {
            for &v in set.anchors().row(i) {
                w.write_f64::<LittleEndian>(v)?;
            }
            w.write_f64::<LittleEndian>(set.values()[i])?;
            for &v in set.gradients().row(i) {
                w.write_f64::<LittleEndian>(v)?;
            }
            w.write_f64::<LittleEndian>(set.offsets()[i])?;
        }
    }
    Ok(())
}

pub fn read_ccs(mut r: impl Read) -> Result<CcsModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CCS_MAGIC {
        return Err(Error::format(format!("CCS magic {magic:?}, expected \"CCS1\"")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported CCS version {version}")));
    }
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let outs = r.read_u32::<LittleEndian>()? as usize;
    let counts = (0..outs).map(|_| Ok(r.read_u32::<LittleEndian>()? as usize)).collect::<Result<Vec<_>>>()?;
    let c = (0..outs).map(|_| Ok(r.read_f64::<LittleEndian>()?)).collect::<Result<Vec<_>>>()?;
    let mut sets = Vec::with_capacity(outs);
    for &n in &counts {
        let mut anchors = Array2::zeros((n, dim));
        let mut gradients = Array2::zeros((n, dim));
        let mut values = Array1::zeros(n);
        let mut offsets = Array1::zeros(n);
        for i in 0..n {
            for v in anchors.row_mut(i) {
                *v = r.read_f64::<LittleEndian>()?;
            }
            values[i] = r.read_f64::<LittleEndian>()?;
            for v in gradients.row_mut(i) {
                *v = r.read_f64::<LittleEndian>()?;
            }
            offsets[i] = r.read_f64::<LittleEndian>()?;
        }
        sets.push(SupportSet::with_offsets(Arc::new(anchors), values, gradients, offsets)?);
    }
    CcsModel::new(c, sets)
}

pub fn save_ccs(model: &CcsModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_ccs(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_ccs(path: impl AsRef<Path>) -> Result<CcsModel> {
    read_ccs(BufReader::new(std::fs::File::open(path)?))
}
