//! Scenario specification, dataset generation and dataset file I/O.
//!
//! A scenario describes per-path uniform ranges for gain and both angles.
//! Sampling a scenario yields path parameters; pushing those through the
//! geometric channel model yields a dataset of channel matrices with known
//! ground truth. Datasets round-trip through a little-endian binary format
//! (`CHM1`) storing entries as interleaved `f32` pairs, with ground-truth
//! parameters in an optional JSON sidecar.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::ppgc::{synthesize_channel, ArrayConfig, PathParams};
use crate::rng::Rng64;

const MAGIC: &[u8; 4] = b"CHM1";
const VERSION: u32 = 1;
/// Stream tag separating split shuffles from sample-generation streams.
const SPLIT_STREAM: u64 = 0x73706c69;

/// Uniform sampling ranges for one path, each as `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRange {
    pub gain: (f64, f64),
    pub theta_a: (f64, f64),
    pub theta_d: (f64, f64),
}

impl PathRange {
    fn validate(&self, index: usize) -> Result<()> {
        for (name, (lo, hi)) in [
            ("gain", self.gain),
            ("theta_a", self.theta_a),
            ("theta_d", self.theta_d),
        ] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::validation(format!(
                    "paths[{index}].{name}: invalid range [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// A user-defined channel scenario: array geometry, RNG seed and one range
/// descriptor per path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub array: ArrayConfig,
    pub seed: u64,
    pub paths: Vec<PathRange>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.array.validate().map_err(Error::validation)?;
        if self.paths.is_empty() {
            return Err(Error::validation("paths: scenario needs at least one path"));
        }
        for (i, p) in self.paths.iter().enumerate() {
            p.validate(i)?;
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let spec: ScenarioSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// A set of channel matrices with shared array geometry.
///
/// `scale` records the normalization applied to the stored samples: raw
/// channel values are `sample * scale`, so a freshly generated dataset has
/// `scale = 1`.
#[derive(Debug, Clone)]
pub struct ChannelDataset {
    pub array: ArrayConfig,
    pub samples: Vec<ComplexMatrix>,
    /// Ground-truth path parameters per sample, when synthetically generated.
    pub params: Option<Vec<Vec<PathParams>>>,
    pub scale: f64,
}

impl ChannelDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.array.n_r, self.array.n_t)
    }
}

/// Draws one parameter triple per path descriptor, uniformly within each
/// range. Per path the draw order is gain, theta_a, theta_d.
pub fn sample_params(spec: &ScenarioSpec, rng: &mut Rng64) -> Vec<PathParams> {
    spec.paths
        .iter()
        .map(|p| PathParams {
            gain: rng.uniform(p.gain.0, p.gain.1),
            theta_a: rng.uniform(p.theta_a.0, p.theta_a.1),
            theta_d: rng.uniform(p.theta_d.0, p.theta_d.1),
        })
        .collect()
}

/// Generates `count` channels from a scenario. Sample `i` draws from an RNG
/// stream derived from `(spec.seed, i)`, so the dataset is reproducible and
/// independent of evaluation order.
pub fn generate_dataset(spec: &ScenarioSpec, count: usize) -> Result<ChannelDataset> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::validation("count must be at least 1"));
    }
    let mut samples = Vec::with_capacity(count);
    let mut params = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = Rng64::derive(spec.seed, &[i as u64]);
        let paths = sample_params(spec, &mut rng);
        samples.push(synthesize_channel(&paths, &spec.array));
        params.push(paths);
    }
    Ok(ChannelDataset {
        array: spec.array,
        samples,
        params: Some(params),
        scale: 1.0,
    })
}

/// Deterministic shuffled split into `floor(n * fraction)` training samples
/// and the remainder for testing.
pub fn split(
    ds: &ChannelDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(ChannelDataset, ChannelDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::validation(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    Rng64::derive(seed, &[SPLIT_STREAM]).shuffle(&mut order);
    let n_train = (n as f64 * train_fraction).floor() as usize;

    let pick = |indices: &[usize]| ChannelDataset {
        array: ds.array,
        samples: indices.iter().map(|&i| ds.samples[i].clone()).collect(),
        params: ds
            .params
            .as_ref()
            .map(|p| indices.iter().map(|&i| p[i].clone()).collect()),
        scale: ds.scale,
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Root-mean-square Frobenius norm over the dataset, the normalization scale.
pub fn dataset_scale(ds: &ChannelDataset) -> f64 {
    let mean_power = ds
        .samples
        .iter()
        .map(|h| {
            let f = h.frobenius_norm();
            f * f
        })
        .sum::<f64>()
        / ds.len() as f64;
    mean_power.sqrt()
}

/// Divides every sample by the dataset-level scale `c = sqrt(mean ||H||_F^2)`
/// and records it, so generated channels can be mapped back to raw units.
/// Normalization is dataset-level on purpose: per-sample scaling would erase
/// the gain distribution the generative model has to learn.
pub fn normalize(ds: &ChannelDataset) -> Result<ChannelDataset> {
    if ds.is_empty() {
        return Err(Error::validation("cannot normalize an empty dataset"));
    }
    let c = dataset_scale(ds);
    if c == 0.0 {
        return Err(Error::validation(
            "cannot normalize an all-zero dataset (scale would be 0)",
        ));
    }
    let inv = 1.0 / c;
    let samples = ds
        .samples
        .iter()
        .map(|h| {
            let mut out = ComplexMatrix::zeros(h.rows(), h.cols());
            out.add_scaled(h, inv);
            out
        })
        .collect();
    Ok(ChannelDataset {
        array: ds.array,
        samples,
        params: ds.params.clone(),
        scale: ds.scale * c,
    })
}

/// Undoes [`normalize`]: multiplies samples by the recorded scale.
pub fn denormalize(ds: &ChannelDataset) -> ChannelDataset {
    let samples = ds
        .samples
        .iter()
        .map(|h| {
            let mut out = ComplexMatrix::zeros(h.rows(), h.cols());
            out.add_scaled(h, ds.scale);
            out
        })
        .collect();
    ChannelDataset {
        array: ds.array,
        samples,
        params: ds.params.clone(),
        scale: 1.0,
    }
}

fn encode(ds: &ChannelDataset) -> Vec<u8> {
    let (n_r, n_t) = ds.shape();
    let mut out = Vec::with_capacity(24 + ds.len() * n_r * n_t * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(n_r as u32).to_le_bytes());
    out.extend_from_slice(&(n_t as u32).to_le_bytes());
    out.extend_from_slice(&ds.scale.to_le_bytes());
    for sample in &ds.samples {
        for z in sample.data() {
            out.extend_from_slice(&(z.re as f32).to_le_bytes());
            out.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
    }
    out
}

fn decode(bytes: &[u8]) -> Result<ChannelDataset> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(format!(
            "bad magic: expected \"CHM1\", found {:?}",
            &bytes[..bytes.len().min(4)]
        )));
    }
    if bytes.len() < 28 {
        return Err(Error::format("truncated header (file shorter than 28 bytes)"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let count = u32_at(8) as usize;
    let n_r = u32_at(12) as usize;
    let n_t = u32_at(16) as usize;
    let scale = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
    if n_r == 0 || n_t == 0 {
        return Err(Error::format(format!(
            "shape mismatch: header declares {n_r} x {n_t} channel matrices"
        )));
    }
    let expected = count * n_r * n_t * 8;
    let payload = &bytes[28..];
    if payload.len() < expected {
        return Err(Error::format(format!(
            "truncated payload: expected {expected} bytes for {count} samples, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::format(format!(
            "shape mismatch: header implies {expected} payload bytes but file has {}",
            payload.len()
        )));
    }

    let mut samples = Vec::with_capacity(count);
    let mut off = 0;
    for _ in 0..count {
        let mut data = Vec::with_capacity(n_r * n_t);
        for _ in 0..n_r * n_t {
            let re = f32::from_le_bytes(payload[off..off + 4].try_into().unwrap());
            let im = f32::from_le_bytes(payload[off + 4..off + 8].try_into().unwrap());
            data.push(num_complex::Complex64::new(re as f64, im as f64));
            off += 8;
        }
        samples.push(ComplexMatrix::from_data(n_r, n_t, data));
    }
    Ok(ChannelDataset {
        array: ArrayConfig::new(n_r, n_t),
        samples,
        params: None,
        scale,
    })
}

/// Writes the dataset in the `CHM1` binary layout (little-endian, `f32`
/// interleaved real/imag, sample-major then row-major).
pub fn write_dataset(ds: &ChannelDataset, path: &Path) -> Result<()> {
    fs::write(path, encode(ds))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<ChannelDataset> {
    decode(&fs::read(path)?)
}

/// Sidecar path for ground-truth parameters: `<file>.params.json`.
pub fn sidecar_path(dataset_path: &Path) -> std::path::PathBuf {
    let mut name = dataset_path.as_os_str().to_os_string();
    name.push(".params.json");
    std::path::PathBuf::from(name)
}

/// Writes the per-sample ground-truth parameter lists next to the dataset.
/// No-op when the dataset carries no parameters.
pub fn write_params_sidecar(ds: &ChannelDataset, dataset_path: &Path) -> Result<Option<std::path::PathBuf>> {
    match &ds.params {
        Some(params) => {
            let path = sidecar_path(dataset_path);
            fs::write(&path, serde_json::to_vec_pretty(params)?)?;
            Ok(Some(path))
        }
        None => Ok(None),
    }
}

pub fn read_params_sidecar(dataset_path: &Path) -> Result<Vec<Vec<PathParams>>> {
    let text = fs::read_to_string(sidecar_path(dataset_path))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn two_path_spec(seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            array: ArrayConfig::new(4, 4),
            seed,
            paths: vec![
                PathRange {
                    gain: (0.5, 1.0),
                    theta_a: (0.4, 0.8),
                    theta_d: (0.1, 0.3),
                },
                PathRange {
                    gain: (0.5, 1.0),
                    theta_a: (-0.8, -0.4),
                    theta_d: (-0.9, -0.5),
                },
            ],
        }
    }

    #[test]
    fn degenerate_ranges_sample_exactly() {
        let spec = ScenarioSpec {
            array: ArrayConfig::new(2, 2),
            seed: 1,
            paths: vec![PathRange {
                gain: (0.7, 0.7),
                theta_a: (0.2, 0.2),
                theta_d: (-0.1, -0.1),
            }],
        };
        let p = sample_params(&spec, &mut Rng64::new(1));
        assert_eq!(p[0].gain, 0.7);
        assert_eq!(p[0].theta_a, 0.2);
        assert_eq!(p[0].theta_d, -0.1);
    }

    #[test]
    fn gains_stay_inside_declared_range() {
        let spec = ScenarioSpec {
            array: ArrayConfig::new(2, 2),
            seed: 3,
            paths: vec![PathRange {
                gain: (0.001, 0.01),
                theta_a: (-1.0, 1.0),
                theta_d: (-1.0, 1.0),
            }],
        };
        let mut rng = Rng64::new(3);
        for _ in 0..5_000 {
            let p = sample_params(&spec, &mut rng);
            assert!((0.001..=0.01).contains(&p[0].gain));
        }
    }

    #[test]
    fn angle_draws_match_uniform_statistics() {
        let spec = ScenarioSpec {
            array: ArrayConfig::new(2, 2),
            seed: 8,
            paths: vec![PathRange {
                gain: (1.0, 1.0),
                theta_a: (0.4, 0.8),
                theta_d: (0.4, 0.8),
            }],
        };
        let n = 100_000;
        let mut rng = Rng64::new(8);
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for _ in 0..n {
            let theta = sample_params(&spec, &mut rng)[0].theta_a;
            min = min.min(theta);
            max = max.max(theta);
            sum += theta;
        }
        assert!(min >= 0.4 && max <= 0.8);
        assert!((sum / n as f64 - 0.6).abs() < 0.01);
    }

    #[test]
    fn single_sample_broadside_dataset() {
        let spec = ScenarioSpec {
            array: ArrayConfig::new(2, 2),
            seed: 0,
            paths: vec![PathRange {
                gain: (1.0, 1.0),
                theta_a: (0.0, 0.0),
                theta_d: (0.0, 0.0),
            }],
        };
        let ds = generate_dataset(&spec, 1).unwrap();
        assert_eq!(ds.len(), 1);
        for z in ds.samples[0].data() {
            assert!((z - num_complex::Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn generation_is_reproducible_bytewise() {
        let spec = two_path_spec(42);
        let a = encode(&generate_dataset(&spec, 64).unwrap());
        let b = encode(&generate_dataset(&spec, 64).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn generated_count_and_ranges() {
        let spec = two_path_spec(5);
        let ds = generate_dataset(&spec, 200).unwrap();
        assert_eq!(ds.len(), 200);
        let params = ds.params.as_ref().unwrap();
        for sample in params {
            assert!((0.4..=0.8).contains(&sample[0].theta_a));
            assert!((0.1..=0.3).contains(&sample[0].theta_d));
            assert!((-0.8..=-0.4).contains(&sample[1].theta_a));
        }
    }

    #[test]
    fn zero_count_is_a_validation_error() {
        assert!(matches!(
            generate_dataset(&two_path_spec(1), 0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let ds = generate_dataset(&two_path_spec(7), 10).unwrap();
        let (train, test) = split(&ds, 0.8, 11).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);

        // Every original sample must land in exactly one side.
        let key = |m: &ComplexMatrix| {
            m.data()
                .iter()
                .flat_map(|z| {
                    z.re.to_bits()
                        .to_le_bytes()
                        .into_iter()
                        .chain(z.im.to_bits().to_le_bytes())
                })
                .collect::<Vec<u8>>()
        };
        let mut seen: Vec<Vec<u8>> = train.samples.iter().map(key).collect();
        seen.extend(test.samples.iter().map(key));
        seen.sort();
        let mut original: Vec<Vec<u8>> = ds.samples.iter().map(key).collect();
        original.sort();
        assert_eq!(seen, original);
    }

    #[test]
    fn split_large_dataset_sizes() {
        let ds = generate_dataset(&two_path_spec(9), 2_000).unwrap();
        let (train, test) = split(&ds, 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (1600, 400));
    }

    #[test]
    fn normalize_sets_unit_mean_power() {
        let ds = generate_dataset(&two_path_spec(13), 50).unwrap();
        let normed = normalize(&ds).unwrap();
        let mean_power = normed
            .samples
            .iter()
            .map(|h| h.frobenius_norm().powi(2))
            .sum::<f64>()
            / normed.len() as f64;
        assert!((mean_power - 1.0).abs() < 1e-12);
        assert!((normed.scale - dataset_scale(&ds)).abs() < 1e-12);
    }

    #[test]
    fn normalize_single_sample_norm_three() {
        let mut m = ComplexMatrix::zeros(1, 1);
        m.set(0, 0, num_complex::Complex64::new(3.0, 0.0));
        let ds = ChannelDataset {
            array: ArrayConfig::new(1, 1),
            samples: vec![m],
            params: None,
            scale: 1.0,
        };
        let normed = normalize(&ds).unwrap();
        assert!((normed.scale - 3.0).abs() < 1e-15);
        assert!((normed.samples[0].frobenius_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_round_trips() {
        let ds = generate_dataset(&two_path_spec(17), 20).unwrap();
        let back = denormalize(&normalize(&ds).unwrap());
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).norm() <= 1e-12 * x.norm().max(1.0));
            }
        }
    }

    #[test]
    fn normalize_rejects_all_zero() {
        let ds = ChannelDataset {
            array: ArrayConfig::new(2, 2),
            samples: vec![ComplexMatrix::zeros(2, 2)],
            params: None,
            scale: 1.0,
        };
        assert!(normalize(&ds).is_err());
    }

    #[test]
    fn file_round_trip_within_f32_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ds.chm");
        let ds = generate_dataset(&two_path_spec(23), 32).unwrap();
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(back.shape(), ds.shape());
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x.re - y.re).abs() <= 1.2e-7 * x.re.abs().max(1.0));
                assert!((x.im - y.im).abs() <= 1.2e-7 * x.im.abs().max(1.0));
            }
        }
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ds.chm");
        let ds = generate_dataset(&two_path_spec(29), 8).unwrap();
        write_dataset(&ds, &path).unwrap();
        let side = write_params_sidecar(&ds, &path).unwrap().unwrap();
        assert!(side.ends_with("ds.chm.params.json"));
        let params = read_params_sidecar(&path).unwrap();
        assert_eq!(&params, ds.params.as_ref().unwrap());
    }

    #[test]
    fn empty_file_reports_bad_magic() {
        let err = decode(&[]).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn wrong_magic_reported() {
        let err = decode(b"NOPE0000000000000000000000000000").unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn missing_payload_reports_truncation() {
        let ds = generate_dataset(&two_path_spec(31), 5).unwrap();
        let mut bytes = encode(&ds);
        bytes.truncate(28); // header only, count still says 5
        let err = decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("truncated payload"), "{err}");
    }

    #[test]
    fn trailing_bytes_report_shape_mismatch() {
        let ds = generate_dataset(&two_path_spec(37), 2).unwrap();
        let mut bytes = encode(&ds);
        bytes.extend_from_slice(&[0u8; 16]);
        let err = decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("shape mismatch"), "{err}");
    }

    #[test]
    fn zero_dimension_reports_shape_mismatch() {
        let ds = generate_dataset(&two_path_spec(41), 2).unwrap();
        let mut bytes = encode(&ds);
        bytes[12..16].copy_from_slice(&0u32.to_le_bytes()); // n_r = 0
        let err = decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("shape mismatch"), "{err}");
    }
}
