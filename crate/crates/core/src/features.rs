//! Feature maps: the gradient part of representative planes, rendered as
//! 8-bit greyscale where zero is mid-grey, positive is light and negative dark.

use std::io::Write;
use std::path::Path;

use rand::seq::index;

use crate::cluster::ClusterReduction;
use crate::error::{Error, Result};
use crate::rng;
use crate::transform::{CcsModel, SupportSet};

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub output_index: usize,
    pub cluster_index: usize,
    pub gradient: Vec<f64>,
    pub width: usize,
    pub height: usize,
}

impl FeatureMap {
    pub fn max_abs(&self) -> f64 {
        self.gradient.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn file_name(&self) -> String {
        feature_file_name(self.output_index, self.cluster_index)
    }
}

pub fn feature_file_name(output: usize, cluster: usize) -> String {
    format!("feat_out{output}_cluster{cluster}.pgm")
}

/// Which clusters to render.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    All,
    /// `count` distinct clusters drawn with `seed`, reported in index order.
    Random { count: usize, seed: u64 },
}

/// Square raster dimensions for a flattened input of length `dim`.
pub fn square_raster(dim: usize) -> Result<(usize, usize)> {
    let side = (dim as f64).sqrt().round() as usize;
    if side == 0 || side * side != dim {
        return Err(Error::arg(format!("input dimension {dim} is not a square raster")));
    }
    Ok((side, side))
}

pub fn extract_features(
    reduction: &ClusterReduction,
    k: usize,
    raster: (usize, usize),
    selection: Selection,
) -> Result<Vec<FeatureMap>> {
    model_features(&reduction.model, k, raster, selection)
}

/// One map per selected support of output `k`, holding its f-gradient.
pub fn model_features(
    model: &CcsModel,
    k: usize,
    raster: (usize, usize),
    selection: Selection,
) -> Result<Vec<FeatureMap>> {
    let set = model.outputs().get(k).ok_or(Error::Index { index: k, len: model.output_dim() })?;
    support_features(set, k, raster, selection)
}

/// Maps for the supports of `set`, labelled as output `k`.
pub fn support_features(
    set: &SupportSet,
    k: usize,
    (width, height): (usize, usize),
    selection: Selection,
) -> Result<Vec<FeatureMap>> {
    if width * height != set.gradients().ncols() {
        return Err(Error::arg(format!(
            "{width}x{height} raster does not match input dimension {}",
            set.gradients().ncols()
        )));
    }
    let picked: Vec<usize> = match selection {
        Selection::All => (0..set.len()).collect(),
        Selection::Random { count, seed } => {
            if count > set.len() {
                return Err(Error::arg(format!("cannot select {count} of {} clusters", set.len())));
            }
            let mut v = index::sample(&mut rng::seeded(seed), set.len(), count).into_vec();
            v.sort_unstable();
            v
        }
    };
    Ok(picked
        .into_iter()
        .map(|i| FeatureMap {
            output_index: k,
            cluster_index: i,
            gradient: set.gradients().row(i).to_vec(),
            width,
            height,
        })
        .collect())
}

/// Largest magnitude across maps, for a shared normalisation.
pub fn global_scale(maps: &[FeatureMap]) -> f64 {
    maps.iter().fold(0.0, |m, f| m.max(f.max_abs()))
}

/// `v -> round((v / M + 1) * 127.5)`, with `M` the map's own maximum
/// magnitude unless `scale` is given. An all-zero map is uniform 128.
pub fn render(map: &FeatureMap, scale: Option<f64>) -> Result<Vec<u8>> {
    if let Some(v) = map.gradient.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite feature value {v}")));
    }
    let m = scale.unwrap_or_else(|| map.max_abs());
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::arg(format!("invalid normalisation scale {m}")));
    }
    Ok(map
        .gradient
        .iter()
        .map(|&v| {
            if m == 0.0 {
                128
            } else {
                ((v / m + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect())
}

/// Binary greymap bytes.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    crate::error::check_len(width * height, pixels.len())?;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Parses a binary greymap with maxval 255: `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Length { needed: pos + 1, available: bytes.len() }),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(Error::format(format!("PGM magic {magic:?}, expected \"P5\"")));
    }
    let mut number = || -> Result<usize> {
        let t = token()?;
        t.parse().map_err(|_| Error::format(format!("bad PGM header field {t:?}")))
    };
    let (width, height, maxval) = (number()?, number()?, number()?);
    if maxval != 255 {
        return Err(Error::format(format!("PGM maxval {maxval}, expected 255")));
    }
    let start = pos + 1;
    let needed = start + width * height;
    if bytes.len() < needed {
        return Err(Error::Length { needed, available: bytes.len() });
    }
    Ok((width, height, bytes[start..needed].to_vec()))
}

pub fn export_pgm(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    export_pgm_scaled(map, None, path)
}

pub fn export_pgm_scaled(map: &FeatureMap, scale: Option<f64>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_pgm(map.width, map.height, &render(map, scale)?)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Raw values, one row per pixel: `output,cluster,pixel,value`.
pub fn write_features_csv(maps: &[FeatureMap], mut w: impl Write) -> Result<()> {
    writeln!(w, "output,cluster,pixel,value")?;
    for m in maps {
        for (p, v) in m.gradient.iter().enumerate() {
            writeln!(w, "{},{},{p},{v}", m.output_index, m.cluster_index)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: Vec<f64>) -> FeatureMap {
        FeatureMap { output_index: 0, cluster_index: 0, width: values.len(), height: 1, gradient: values }
    }

    #[test]
    fn zero_map_is_mid_grey() {
        assert_eq!(render(&map(vec![0.0; 4]), None).unwrap(), vec![128; 4]);
    }

    #[test]
    fn endpoints() {
        assert_eq!(render(&map(vec![0.0, 2.0, 0.0]), None).unwrap(), vec![128, 255, 128]);
        assert_eq!(render(&map(vec![-3.0, 3.0, 1.5]), None).unwrap(), vec![0, 255, 191]);
    }

    #[test]
    fn pgm_round_trip() {
        let px = vec![0, 17, 128, 255, 3, 9];
        let bytes = encode_pgm(3, 2, &px).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(parse_pgm(&bytes).unwrap(), (3, 2, px));
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert_eq!(parse_pgm(b"P5 # c\n1 1 255\n\x07").unwrap(), (1, 1, vec![7]));
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(matches!(render(&map(vec![f64::NAN]), None), Err(Error::Numeric(_))));
    }

    #[test]
    fn raster_dims() {
        assert_eq!(square_raster(784).unwrap(), (28, 28));
        assert!(square_raster(785).is_err());
        assert_eq!(feature_file_name(0, 7), "feat_out0_cluster7.pgm");
    }
}
