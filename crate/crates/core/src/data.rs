//! Datasets: MNIST IDX parsing, preprocessing, subsetting and the `DSB1`
//! cache format.
//!
//! IDX pixels are scaled to `[0, 1]` and shifted by `-0.5`, so every loaded
//! MNIST input lies in `[-0.5, 0.5]`.
//!
//! `DSB1` layout (little-endian):
//!
//! ```text
//! magic "DSB1" | version u32 = 1 | n u64 | input_dim u32 | n_classes u32
//! labels: n x u32 | inputs: n x input_dim x f64 (row-major)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
pub const DATASET_MAGIC: &[u8; 4] = b"DSB1";
const DATASET_VERSION: u32 = 1;

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Inputs as rows with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::Shape { expected: inputs.nrows(), got: labels.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::arg(format!("label {bad} outside 0..{n_classes}")));
        }
        Ok(Dataset { inputs: inputs.as_standard_layout().into_owned(), labels, n_classes })
    }

    /// The four XOR points, labelled by parity.
    pub fn xor() -> Self {
        let inputs = ndarray::array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        Dataset::new(inputs, vec![0, 1, 1, 0], 2).expect("static dataset")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn input(&self, i: usize) -> ArrayView1<'_, f64> {
        self.inputs.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }
}

/// Parses an IDX image file and an IDX label file.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    parse_idx(&images, &labels)
}

/// Loads `<dir>/train-*` (`train = true`) or `<dir>/t10k-*` MNIST files.
pub fn load_mnist(dir: impl AsRef<Path>, train: bool) -> Result<Dataset> {
    let dir = dir.as_ref();
    let (img, lab) =
        if train { (MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS) } else { (MNIST_TEST_IMAGES, MNIST_TEST_LABELS) };
    load_idx(dir.join(img), dir.join(lab))
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::format(format!("{n} images but {} labels", labels.len())));
    }
    let dim = rows * cols;
    let inputs = Array2::from_shape_fn((n, dim), |(i, j)| pixels[i * dim + j] as f64 / 255.0 - 0.5);
    let n_classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    Dataset::new(inputs, labels.into_iter().map(usize::from).collect(), n_classes)
}

fn need(bytes: &[u8], needed: usize) -> Result<()> {
    if bytes.len() < needed {
        Err(Error::Length { needed, available: bytes.len() })
    } else {
        Ok(())
    }
}

/// Returns `(count, rows, cols, pixel bytes)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    need(bytes, 4)?;
    let magic = BigEndian::read_u32(&bytes[0..4]);
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::format(format!(
            "image file magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )));
    }
    need(bytes, 16)?;
    let n = BigEndian::read_u32(&bytes[4..8]) as usize;
    let rows = BigEndian::read_u32(&bytes[8..12]) as usize;
    let cols = BigEndian::read_u32(&bytes[12..16]) as usize;
    let total = 16 + n * rows * cols;
    need(bytes, total)?;
    Ok((n, rows, cols, &bytes[16..total]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    need(bytes, 4)?;
    let magic = BigEndian::read_u32(&bytes[0..4]);
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::format(format!(
            "label file magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
        )));
    }
    need(bytes, 8)?;
    let n = BigEndian::read_u32(&bytes[4..8]) as usize;
    need(bytes, 8 + n)?;
    Ok(bytes[8..8 + n].to_vec())
}

/// Seeded sample of `n` rows without replacement. When `n` is at least the
/// number of classes the sample is stratified: every present class keeps at
/// least one row and the rest follow class frequencies (largest remainder).
pub fn subset(data: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > data.len() {
        return Err(Error::arg(format!("subset of {n} from {} samples", data.len())));
    }
    let mut rng = rng::seeded(seed);
    let mut chosen = if n >= data.n_classes() && n > 0 {
        stratified_indices(data, n, &mut rng)
    } else {
        let mut all: Vec<usize> = (0..data.len()).collect();
        all.shuffle(&mut rng);
        all.truncate(n);
        all
    };
    chosen.shuffle(&mut rng);
    Ok(data.select(&chosen))
}

fn stratified_indices(data: &Dataset, n: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes()];
    for (i, &l) in data.labels().iter().enumerate() {
        groups[l].push(i);
    }
    for g in &mut groups {
        g.shuffle(rng);
    }
    let total = data.len() as f64;
    let exact: Vec<f64> = groups.iter().map(|g| n as f64 * g.len() as f64 / total).collect();
    let mut quota: Vec<usize> = groups
        .iter()
        .zip(&exact)
        .map(|(g, &e)| if g.is_empty() { 0 } else { (e.floor() as usize).max(1).min(g.len()) })
        .collect();
    let mut assigned: usize = quota.iter().sum();
    while assigned > n {
        // trim the largest quota that can spare a row
        let c = (0..quota.len()).filter(|&c| quota[c] > 1).max_by_key(|&c| (quota[c], usize::MAX - c));
        let c = c.expect("n >= number of present classes");
        quota[c] -= 1;
        assigned -= 1;
    }
    if assigned < n {
        let mut order: Vec<usize> = (0..quota.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        while assigned < n {
            let before = assigned;
            for &c in &order {
                if assigned == n {
                    break;
                }
                if quota[c] < groups[c].len() {
                    quota[c] += 1;
                    assigned += 1;
                }
            }
            debug_assert!(assigned > before);
        }
    }
    groups.iter().zip(&quota).flat_map(|(g, &q)| g[..q].iter().copied()).collect()
}

pub fn write_dataset(data: &Dataset, mut w: impl Write) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_u32::<LittleEndian>(DATASET_VERSION)?;
    w.write_u64::<LittleEndian>(data.len() as u64)?;
    w.write_u32::<LittleEndian>(data.input_dim() as u32)?;
    w.write_u32::<LittleEndian>(data.n_classes() as u32)?;
    for &l in data.labels() {
        w.write_u32::<LittleEndian>(l as u32)?;
    }
    for &v in data.inputs.iter() {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn read_dataset(mut r: impl Read) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::format(format!("dataset magic {magic:?}, expected \"DSB1\"")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != DATASET_VERSION {
        return Err(Error::format(format!("unsupported dataset version {version}")));
    }
    let n = r.read_u64::<LittleEndian>()? as usize;
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let n_classes = r.read_u32::<LittleEndian>()? as usize;
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let mut values = vec![0.0; n * dim];
    r.read_f64_into::<LittleEndian>(&mut values)?;
    let inputs = Array2::from_shape_vec((n, dim), values).expect("sized buffer");
    Dataset::new(inputs, labels, n_classes)
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(data, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Loads either a `DSB1` file or a directory holding MNIST IDX files
/// (`train` picks which split).
pub fn load_any(path: impl AsRef<Path>, train: bool) -> Result<Dataset> {
    let path = path.as_ref();
    if path.is_dir() {
        load_mnist(path, train)
    } else {
        load_dataset(path)
    }
}
