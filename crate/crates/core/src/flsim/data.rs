//! Datasets: a seeded synthetic generator and an IDX (MNIST) reader.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::montecarlo::stream_rng;

/// Feature vectors with labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::shape(format!("{} samples but {} labels", features.len(), labels.len())));
        }
        if features.is_empty() {
            return Err(Error::shape("dataset is empty"));
        }
        let d = features[0].len();
        for (j, x) in features.iter().enumerate() {
            if x.len() != d {
                return Err(Error::shape(format!("sample {j} has dimension {} (expected {d})", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("sample {j} has a non-finite feature")));
            }
        }
        if let Some(y) = labels.iter().find(|y| **y != 1.0 && **y != -1.0) {
            return Err(Error::domain(format!("label {y} is not +1 or -1")));
        }
        Ok(Dataset { features, labels })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// Concatenation of several datasets.
    pub fn pooled(parts: &[Dataset]) -> Result<Dataset> {
        let mut f = Vec::new();
        let mut l = Vec::new();
        for p in parts {
            f.extend(p.features.iter().cloned());
            l.extend(p.labels.iter().copied());
        }
        Dataset::new(f, l)
    }
}

/// Squared-SVM and synthetic-data settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub lambda_reg: f64,
    pub dim: usize,
    pub samples_per_client: usize,
    /// Distance between the two classes along the planted normal.
    pub margin: f64,
    /// Probability of flipping a synthetic label.
    pub label_noise: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda_reg: 0.01,
            dim: 10,
            samples_per_client: 1000,
            margin: 2.0,
            label_noise: 0.0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_reg > 0.0) {
            return Err(Error::domain(format!("lambda must be positive, got {}", self.lambda_reg)));
        }
        if self.dim == 0 || self.samples_per_client == 0 {
            return Err(Error::domain("dimension and sample count must be positive"));
        }
        if !(0.0..=0.5).contains(&self.label_noise) {
            return Err(Error::domain("label noise must lie in [0, 0.5]"));
        }
        Ok(())
    }
}

/// Unit normal of the planted hyperplane for `seed`.
pub fn planted_normal(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, u64::MAX);
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Two Gaussian clusters separated by `margin` along a planted normal. Each
/// client draws from its own random stream.
pub fn generate_synthetic(cfg: &SvmConfig, n_clients: usize, seed: u64) -> Result<Vec<Dataset>> {
    cfg.validate()?;
    let u = planted_normal(cfg.dim, seed);
    (0..n_clients)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut features = Vec::with_capacity(cfg.samples_per_client);
            let mut labels = Vec::with_capacity(cfg.samples_per_client);
            for _ in 0..cfg.samples_per_client {
                let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let mut x: Vec<f64> = (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                // replace the component along u by a half-normal offset past the margin
                let along: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
                let g: f64 = StandardNormal.sample(&mut rng);
                let target = y * (cfg.margin / 2.0 + 0.5 * g.abs());
                for (xk, uk) in x.iter_mut().zip(&u) {
                    *xk += (target - along) * uk;
                }
                let flip = cfg.label_noise > 0.0 && rng.random_bool(cfg.label_noise);
                labels.push(if flip { -y } else { y });
                features.push(x);
            }
            Dataset::new(features, labels)
        })
        .collect()
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset,
            message: format!("truncated header: need 4 bytes, file has {}", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic: expected 0x{expected:08x}, found 0x{found:08x}"),
        });
    }
    Ok(())
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    bytes.get(start..start + len).ok_or_else(|| Error::Parse {
        offset: bytes.len(),
        message: format!("truncated payload: expected {len} bytes from offset {start}, file ends early"),
    })
}

/// Images as flattened vectors scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let data = payload(bytes, 16, count * size)?;
    Ok(data
        .chunks(size.max(1))
        .take(count)
        .map(|c| c.iter().map(|b| f64::from(*b) / 255.0).collect())
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

/// Keeps the two digits of `pair`, mapping the first to `-1` and the second
/// to `+1`.
pub fn binary_digits(images: Vec<Vec<f64>>, labels: &[u8], pair: (u8, u8)) -> Result<Dataset> {
    if images.len() != labels.len() {
        return Err(Error::shape(format!("{} images but {} labels", images.len(), labels.len())));
    }
    let (mut f, mut l) = (Vec::new(), Vec::new());
    for (x, y) in images.into_iter().zip(labels) {
        if *y == pair.0 || *y == pair.1 {
            l.push(if *y == pair.0 { -1.0 } else { 1.0 });
            f.push(x);
        }
    }
    Dataset::new(f, l)
}

/// Reads an IDX image file and its label file.
pub fn load_idx(images: &Path, labels: &Path, pair: (u8, u8)) -> Result<Dataset> {
    let img = parse_idx_images(&std::fs::read(images)?)?;
    let lab = parse_idx_labels(&std::fs::read(labels)?)?;
    binary_digits(img, &lab, pair)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images_fixture() -> Vec<u8> {
        let mut b = IDX_IMAGES_MAGIC.to_be_bytes().to_vec();
        for d in [2u32, 2, 2] {
            b.extend(d.to_be_bytes());
        }
        b.extend([0u8, 255, 51, 102, 255, 0, 0, 0]);
        b
    }

    #[test]
    fn parses_image_fixture() {
        let img = parse_idx_images(&images_fixture()).unwrap();
        assert_eq!(img.len(), 2);
        assert_eq!(img[0], vec![0.0, 1.0, 0.2, 0.4]);
        assert_eq!(img[1], vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut b = images_fixture();
        b[3] = 0x01;
        match parse_idx_images(&b).unwrap_err() {
            Error::Parse { offset, message } => {
                assert_eq!(offset, 0);
                assert!(message.contains("0x00000803") && message.contains("0x00000801"), "{message}");
            }
            e => panic!("{e}"),
        }
        let short = &images_fixture()[..20];
        match parse_idx_images(short).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, 20),
            e => panic!("{e}"),
        }
        assert!(matches!(parse_idx_labels(&[0, 0, 8]).unwrap_err(), Error::Parse { offset: 0, .. }));
    }

    #[test]
    fn digit_pair_filter() {
        let labels: Vec<u8> = (0..20).map(|k| (k % 10) as u8).collect();
        let mut lb = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        lb.extend(20u32.to_be_bytes());
        lb.extend(&labels);
        let parsed = parse_idx_labels(&lb).unwrap();
        let images: Vec<Vec<f64>> = (0..20).map(|k| vec![k as f64 / 20.0]).collect();
        let d = binary_digits(images, &parsed, (3, 5)).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.labels(), &[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(d.features()[1], vec![0.25]);
    }

    #[test]
    fn synthetic_is_deterministic_and_disjoint() {
        let cfg = SvmConfig { samples_per_client: 50, ..SvmConfig::default() };
        let a = generate_synthetic(&cfg, 3, 7).unwrap();
        let b = generate_synthetic(&cfg, 3, 7).unwrap();
        assert_eq!(a, b);
        for x in a[0].features() {
            assert!(!a[1].features().contains(x) && !a[2].features().contains(x));
        }
        let u = planted_normal(cfg.dim, 7);
        for d in &a {
            for (x, y) in d.features().iter().zip(d.labels()) {
                let s: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
                assert!(y * s >= cfg.margin / 2.0 - 1e-12);
            }
        }
    }
}
