//! `NNC1` network files (little-endian):
//!
//! ```text
//! magic "NNC1" | version u32 = 1 | input_dim u32 | output_dim u32 | layer_count u32
//! per layer:   kind u8 (0 dense, 1 conv2d, 2 maxpool2d) | activation u8 (0 sigmoid, 1 relu, 2 identity)
//!              dense: in u32, out u32
//!              conv2d: in_channels u32, out_channels u32, height u32, width u32
//!              maxpool2d: channels u32, height u32, width u32
//! then, for each dense/conv2d layer in order: weights f64 (row-major), bias f64
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::{Activation, Layer, LayerKind, Network, CONV_KERNEL};
use crate::error::{Error, Result};

pub const NETWORK_MAGIC: &[u8; 4] = b"NNC1";
const VERSION: u32 = 1;

pub fn write_network(net: &Network, mut w: impl Write) -> Result<()> {
    w.write_all(NETWORK_MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(net.input_dim() as u32)?;
    w.write_u32::<LittleEndian>(net.output_dim() as u32)?;
    w.write_u32::<LittleEndian>(net.layers().len() as u32)?;
    for layer in net.layers() {
        let dims: Vec<usize> = match &layer.kind {
            LayerKind::Dense { weights, .. } => {
                w.write_u8(0)?;
                vec![weights.ncols(), weights.nrows()]
            }
            LayerKind::Conv2d { in_channels, out_channels, height, width, .. } => {
                w.write_u8(1)?;
                vec![*in_channels, *out_channels, *height, *width]
            }
            LayerKind::MaxPool2d { channels, height, width } => {
                w.write_u8(2)?;
                vec![*channels, *height, *width]
            }
        };
        w.write_u8(layer.activation.tag())?;
        for d in dims {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
    }
    for layer in net.layers() {
        if let LayerKind::Dense { weights, bias } | LayerKind::Conv2d { weights, bias, .. } = &layer.kind {
            for &v in weights.iter() {
                w.write_f64::<LittleEndian>(v)?;
            }
            for &v in bias.iter() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    Ok(())
}

pub fn read_network(mut r: impl Read) -> Result<Network> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != NETWORK_MAGIC {
        return Err(Error::format(format!("network magic {magic:?}, expected \"NNC1\"")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported network version {version}")));
    }
    let input_dim = r.read_u32::<LittleEndian>()? as usize;
    let output_dim = r.read_u32::<LittleEndian>()? as usize;
    let count = r.read_u32::<LittleEndian>()? as usize;

    enum Header {
        Dense(usize, usize),
        Conv(usize, usize, usize, usize),
        Pool(usize, usize, usize),
    }
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = r.read_u8()?;
        let act = Activation::from_tag(r.read_u8()?)?;
        let mut dim = || -> Result<usize> { Ok(r.read_u32::<LittleEndian>()? as usize) };
        let h = match kind {
            0 => Header::Dense(dim()?, dim()?),
            1 => Header::Conv(dim()?, dim()?, dim()?, dim()?),
            2 => Header::Pool(dim()?, dim()?, dim()?),
            k => return Err(Error::format(format!("unknown layer kind {k}"))),
        };
        headers.push((h, act));
    }

    let read_vec = |r: &mut dyn Read, n: usize| -> Result<Vec<f64>> {
        let mut v = vec![0.0; n];
        for x in v.iter_mut() {
            *x = r.read_f64::<LittleEndian>()?;
        }
        Ok(v)
    };
    let mut layers = Vec::with_capacity(count);
    for (h, activation) in headers {
        let kind = match h {
            Header::Dense(inp, out) => {
                let weights = Array2::from_shape_vec((out, inp), read_vec(&mut r, out * inp)?).expect("sized");
                let bias = Array1::from(read_vec(&mut r, out)?);
                LayerKind::Dense { weights, bias }
            }
            Header::Conv(in_channels, out_channels, height, width) => {
                let taps = in_channels * CONV_KERNEL * CONV_KERNEL;
                let weights = Array2::from_shape_vec((out_channels, taps), read_vec(&mut r, out_channels * taps)?)
                    .expect("sized");
                let bias = Array1::from(read_vec(&mut r, out_channels)?);
                LayerKind::Conv2d { in_channels, out_channels, height, width, weights, bias }
            }
            Header::Pool(channels, height, width) => LayerKind::MaxPool2d { channels, height, width },
        };
        layers.push(Layer { kind, activation });
    }
    let net = Network::new(layers)?;
    if net.input_dim() != input_dim || net.output_dim() != output_dim {
        return Err(Error::format("network header dims disagree with layer shapes"));
    }
    Ok(net)
}

pub fn save_network(net: &Network, path: impl AsRef<std::path::Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_network(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_network(path: impl AsRef<std::path::Path>) -> Result<Network> {
    read_network(std::io::BufReader::new(std::fs::File::open(path)?))
}
