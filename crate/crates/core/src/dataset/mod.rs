//! On-disk single-shot datasets.
//!
//! ```text
//! out_dir/
//!   manifest.json
//!   model.json                 (optional calibration reference)
//!   samples/<id>/input.pfm     first shift of the highest frequency
//!   samples/<id>/height.pfm    mm, NaN where invalid
//!   samples/<id>/mask.pgm
//!   samples/<id>/provenance.json
//!   samples/<id>/stack/f<freq>_s<shift>.pfm   (only with full stacks)
//! ```

mod pfm;
mod pgm;
mod pnm;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use pgm::{decode_mask_pgm, encode_mask_pgm, read_mask_pgm, write_mask_pgm};

use crate::error::{FppError, Result};
use crate::fringe::{FringeSpec, Orientation};
use crate::image::{HeightMap, Mask, ScalarImage};
use crate::scalar::Real;
use crate::simulator::SceneSummary;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_DIR: &str = "samples";
pub const INPUT_FILE: &str = "input.pfm";
pub const HEIGHT_FILE: &str = "height.pfm";
pub const MASK_FILE: &str = "mask.pgm";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const STACK_DIR: &str = "stack";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// `reconstructed` when the label came out of the measurement chain,
    /// `analytic` when it is the simulator's height field.
    pub label_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneSummary>,
}

/// One single-shot training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub input: ScalarImage<f32>,
    pub truth: HeightMap<f32>,
    pub provenance: Provenance,
}

impl Sample {
    pub fn new(id: impl Into<String>, input: ScalarImage<f32>, truth: HeightMap<f32>, provenance: Provenance) -> Result<Self> {
        let id = id.into();
        validate_id(&id)?;
        input.ensure_dims(truth.dims())?;
        Ok(Self {
            id,
            input,
            truth,
            provenance,
        })
    }

    pub fn mask(&self) -> &Mask {
        &self.truth.mask
    }

    pub fn dims(&self) -> (usize, usize) {
        self.input.dims()
    }
}

fn validate_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if !ok {
        return Err(FppError::invalid(format!(
            "sample id '{id}' must be non-empty ASCII alphanumerics, '-', '_' or '.'"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    pub fn get(&self, name: &str) -> Option<&[String]> {
        match name {
            "train" => Some(&self.train),
            "validation" => Some(&self.validation),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    /// Checks id syntax and pairwise disjointness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.iter() {
            validate_id(id)?;
            if !seen.insert(id.as_str()) {
                return Err(FppError::DuplicateId(id.clone()));
            }
        }
        Ok(())
    }
}

/// How samples are divided among train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    Ratios { train: f64, validation: f64, test: f64 },
    Counts { train: usize, validation: usize, test: usize },
}

impl SplitSpec {
    /// Per-split counts for `n` samples. Ratio splits floor each share and
    /// hand the remainder out one at a time starting with train.
    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        match *self {
            SplitSpec::Ratios { train, validation, test } => {
                let r = [train, validation, test];
                if r.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return Err(FppError::invalid(format!("split ratios must be positive, got {r:?}")));
                }
                let sum: f64 = r.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(FppError::invalid(format!("split ratios must sum to 1, got {sum}")));
                }
                let mut c = r.map(|x| (x * n as f64 + 1e-9).floor() as usize);
                let mut k = 0;
                while c.iter().sum::<usize>() < n {
                    c[k % 3] += 1;
                    k += 1;
                }
                Ok(c)
            }
            SplitSpec::Counts { train, validation, test } => {
                let c = [train, validation, test];
                if c.iter().sum::<usize>() != n {
                    return Err(FppError::invalid(format!(
                        "split counts {c:?} sum to {}, but there are {n} samples",
                        c.iter().sum::<usize>()
                    )));
                }
                Ok(c)
            }
        }
    }
}

/// Sorts ids, shuffles them with a seeded generator and cuts contiguous
/// train, validation and test runs.
pub fn assign_splits(ids: &[String], split: &SplitSpec, seed: u64) -> Result<Splits> {
    let mut order: Vec<String> = ids.to_vec();
    order.sort();
    if let Some(pair) = order.windows(2).find(|w| w[0] == w[1]) {
        return Err(FppError::DuplicateId(pair[0].clone()));
    }
    let [a, b, _] = split.counts(order.len())?;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(a + b);
    let validation = order.split_off(a);
    Ok(Splits {
        train: order,
        validation,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

/// Projection settings the inputs were captured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeSummary {
    pub frequencies: Vec<u32>,
    pub steps: usize,
    pub i0: f64,
    pub orientation: Orientation,
    /// Frequency and zero-based shift index of `input.pfm`.
    pub input_frequency: u32,
    pub input_shift: usize,
}

impl From<&FringeSpec> for FringeSummary {
    fn from(s: &FringeSpec) -> Self {
        Self {
            frequencies: s.frequencies.clone(),
            steps: s.steps,
            i0: s.i0,
            orientation: s.orientation,
            input_frequency: s.highest_frequency(),
            input_shift: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub units: String,
    pub dims: Dims,
    pub fringe: FringeSummary,
    /// Path of the calibration file, relative to the dataset root.
    pub calibration: Option<String>,
    pub depth_range_mm: [f64; 2],
    pub seed: u64,
    pub has_stacks: bool,
    pub splits: Splits,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(FppError::invalid(format!(
                "unsupported dataset version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        if self.units != "mm" {
            return Err(FppError::invalid(format!("unsupported units '{}'", self.units)));
        }
        if self.dims.width == 0 || self.dims.height == 0 || self.dims.channels != 1 {
            return Err(FppError::invalid("manifest dims must be positive with one channel"));
        }
        self.splits.validate()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| FppError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| FppError::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| FppError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        m.validate()?;
        Ok(m)
    }
}

/// Dataset-wide metadata that is not derived from the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub fringe: FringeSummary,
    pub calibration: Option<String>,
    pub depth_range_mm: [f64; 2],
    pub has_stacks: bool,
}

pub fn sample_dir(root: &Path, id: &str) -> PathBuf {
    root.join(SAMPLES_DIR).join(id)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| FppError::io(path, e))
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    fs::write(path, s).map_err(|e| FppError::io(path, e))
}

/// Writes the four files of one sample under `root/samples/<id>/`.
pub fn write_sample(root: &Path, sample: &Sample) -> Result<()> {
    validate_id(&sample.id)?;
    let dir = sample_dir(root, &sample.id);
    create_dir(&dir)?;
    write_pfm(&sample.input, dir.join(INPUT_FILE))?;
    write_pfm(&sample.truth.image, dir.join(HEIGHT_FILE))?;
    write_mask_pgm(&sample.truth.mask, dir.join(MASK_FILE))?;
    write_json(&sample.provenance, &dir.join(PROVENANCE_FILE))
}

pub fn stack_file_name(frequency: u32, shift: usize) -> String {
    format!("f{frequency:03}_s{shift}.pfm")
}

/// Writes a full `images[i][j]` stack into `dir`.
pub fn write_stack<T: Real>(dir: &Path, frequencies: &[u32], images: &[Vec<ScalarImage<T>>]) -> Result<()> {
    if frequencies.len() != images.len() {
        return Err(FppError::invalid("one image row per frequency required"));
    }
    create_dir(dir)?;
    for (&f, row) in frequencies.iter().zip(images) {
        for (j, img) in row.iter().enumerate() {
            write_pfm(img, dir.join(stack_file_name(f, j)))?;
        }
    }
    Ok(())
}

/// Reads a stack written by [`write_stack`]; a missing file is reported
/// together with the frequencies that are present.
pub fn read_stack(dir: &Path, frequencies: &[u32], steps: usize) -> Result<Vec<Vec<ScalarImage<f32>>>> {
    let mut missing = Vec::new();
    for &f in frequencies {
        for j in 0..steps {
            if !dir.join(stack_file_name(f, j)).is_file() {
                missing.push(stack_file_name(f, j));
            }
        }
    }
    if !missing.is_empty() {
        let found = stack_frequencies(dir)?;
        return Err(FppError::invalid(format!(
            "stack in {} is incomplete: missing {} (frequencies present: {found:?})",
            dir.display(),
            missing.join(", ")
        )));
    }
    frequencies
        .iter()
        .map(|&f| (0..steps).map(|j| read_pfm(dir.join(stack_file_name(f, j)))).collect())
        .collect()
}

/// Frequencies with at least one stack image in `dir`, ascending.
pub fn stack_frequencies(dir: &Path) -> Result<Vec<u32>> {
    let entries = fs::read_dir(dir).map_err(|e| FppError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| FppError::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let freq = name
            .strip_prefix('f')
            .and_then(|r| r.strip_suffix(".pfm"))
            .and_then(|r| r.split_once("_s"))
            .and_then(|(f, s)| s.parse::<usize>().ok().and(f.parse::<u32>().ok()));
        if let Some(f) = freq {
            out.push(f);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Writes every sample and the manifest.
pub fn export_dataset(samples: &[Sample], split: &SplitSpec, seed: u64, out_dir: &Path, meta: DatasetMeta) -> Result<DatasetManifest> {
    let first = samples.first().ok_or_else(|| FppError::invalid("no samples to export"))?;
    let dims = first.dims();
    for s in samples {
        if s.dims() != dims {
            return Err(FppError::DimensionMismatch {
                expected: dims,
                found: s.dims(),
            });
        }
    }
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let splits = assign_splits(&ids, split, seed)?;
    for s in samples {
        write_sample(out_dir, s)?;
    }
    finish_dataset(out_dir, dims, splits, seed, meta)
}

/// Writes the manifest for samples already on disk.
pub fn finish_dataset(out_dir: &Path, dims: (usize, usize), splits: Splits, seed: u64, meta: DatasetMeta) -> Result<DatasetManifest> {
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        units: "mm".into(),
        dims: Dims {
            width: dims.0,
            height: dims.1,
            channels: 1,
        },
        fringe: meta.fringe,
        calibration: meta.calibration,
        depth_range_mm: meta.depth_range_mm,
        seed,
        has_stacks: meta.has_stacks,
        splits,
    };
    manifest.validate()?;
    create_dir(out_dir)?;
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// A dataset opened from disk. Samples are read on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

/// Opens a dataset, checking split disjointness and that every referenced
/// sample file exists.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let root = dir.as_ref().to_path_buf();
    let manifest = DatasetManifest::load(root.join(MANIFEST_FILE))?;
    for id in manifest.splits.iter() {
        let sd = sample_dir(&root, id);
        for f in [INPUT_FILE, HEIGHT_FILE, MASK_FILE, PROVENANCE_FILE] {
            let path = sd.join(f);
            if !path.is_file() {
                return Err(FppError::MissingFile { id: id.clone(), path });
            }
        }
    }
    if let Some(cal) = &manifest.calibration {
        let path = root.join(cal);
        if !path.is_file() {
            return Err(FppError::MissingFile {
                id: "<calibration>".into(),
                path,
            });
        }
    }
    Ok(Dataset { root, manifest })
}

impl Dataset {
    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.manifest.splits.iter()
    }

    pub fn sample_dir(&self, id: &str) -> PathBuf {
        sample_dir(&self.root, id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids().any(|x| x == id)
    }

    pub fn load_sample(&self, id: &str) -> Result<Sample> {
        if !self.contains(id) {
            return Err(FppError::invalid(format!("sample '{id}' is not in the manifest")));
        }
        let dir = self.sample_dir(id);
        let input = read_pfm(dir.join(INPUT_FILE))?;
        let truth = read_height_map(&dir)?;
        input.ensure_dims(truth.dims())?;
        let dims = (self.manifest.dims.width, self.manifest.dims.height);
        input.ensure_dims(dims)?;
        let path = dir.join(PROVENANCE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| FppError::io(&path, e))?;
        let provenance = serde_json::from_str(&text).map_err(|e| FppError::Json { path, source: e })?;
        Sample::new(id, input, truth, provenance)
    }

    pub fn load_stack(&self, id: &str) -> Result<Vec<Vec<ScalarImage<f32>>>> {
        read_stack(
            &self.sample_dir(id).join(STACK_DIR),
            &self.manifest.fringe.frequencies,
            self.manifest.fringe.steps,
        )
    }
}

/// Reads `height.pfm` and `mask.pgm` from `dir`. Without a mask file, NaN
/// pixels are invalid.
pub fn read_height_map(dir: &Path) -> Result<HeightMap<f32>> {
    let hp = dir.join(HEIGHT_FILE);
    let image = read_pfm(&hp)?;
    let mp = dir.join(MASK_FILE);
    let mask = if mp.is_file() {
        read_mask_pgm(&mp)?
    } else {
        let (w, h) = image.dims();
        Mask::new(w, h, image.data().iter().map(|z| z.is_finite()).collect())?
    };
    if mask.dims() != image.dims() {
        return Err(FppError::format(
            &mp,
            format!("mask is {:?} but height map is {:?}", mask.dims(), image.dims()),
        ));
    }
    HeightMap::new(image, mask).map_err(|e| FppError::format(&hp, e.to_string()))
}

/// Writes `height.pfm` and `mask.pgm` into `dir`.
pub fn write_height_map<T: Real>(dir: &Path, map: &HeightMap<T>) -> Result<()> {
    create_dir(dir)?;
    write_pfm(&map.image, dir.join(HEIGHT_FILE))?;
    write_mask_pgm(&map.mask, dir.join(MASK_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:04}")).collect()
    }

    #[test]
    fn ratio_counts() {
        let r = SplitSpec::Ratios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        };
        assert_eq!(r.counts(10).unwrap(), [8, 1, 1]);
        assert_eq!(r.counts(11).unwrap(), [9, 1, 1]);
        assert_eq!(r.counts(672).unwrap(), [538, 67, 67]);
        let bad = SplitSpec::Ratios {
            train: 0.8,
            validation: 0.1,
            test: 0.2,
        };
        assert!(bad.counts(10).is_err());
        let neg = SplitSpec::Ratios {
            train: 1.1,
            validation: -0.1,
            test: 0.0,
        };
        assert!(neg.counts(10).is_err());
    }

    #[test]
    fn explicit_counts() {
        let c = SplitSpec::Counts {
            train: 540,
            validation: 60,
            test: 72,
        };
        let s = assign_splits(&ids(672), &c, 9).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (540, 60, 72));
        s.validate().unwrap();
        assert!(assign_splits(&ids(671), &c, 9).is_err());
    }

    #[test]
    fn split_assignment_is_seeded_and_order_free() {
        let r = SplitSpec::Ratios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        };
        let a = assign_splits(&ids(50), &r, 3).unwrap();
        let mut rev = ids(50);
        rev.reverse();
        assert_eq!(assign_splits(&rev, &r, 3).unwrap(), a);
        assert_ne!(assign_splits(&ids(50), &r, 4).unwrap(), a);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut v = ids(5);
        v.push("s0001".into());
        let r = SplitSpec::Counts {
            train: 4,
            validation: 1,
            test: 1,
        };
        assert!(matches!(assign_splits(&v, &r, 0), Err(FppError::DuplicateId(_))));
        let s = Splits {
            train: vec!["a".into()],
            validation: vec!["a".into()],
            test: vec![],
        };
        assert!(matches!(s.validate(), Err(FppError::DuplicateId(_))));
    }

    #[test]
    fn bad_ids() {
        assert!(validate_id("../x").is_err());
        assert!(validate_id("").is_err());
        assert!(validate_id("..").is_err());
        assert!(validate_id("scene-001_a.b").is_ok());
    }

    #[test]
    fn stack_names() {
        assert_eq!(stack_file_name(4, 2), "f004_s2.pfm");
        assert_eq!(stack_file_name(100, 0), "f100_s0.pfm");
    }

    proptest! {
        #[test]
        fn splits_partition_ids(n in 1usize..200, seed in any::<u64>(), a in 0.05..0.9f64, b in 0.05..0.9f64) {
            let c = 1.0 - a - b;
            prop_assume!(c > 0.0);
            let s = assign_splits(&ids(n), &SplitSpec::Ratios { train: a, validation: b, test: c }, seed).unwrap();
            prop_assert_eq!(s.len(), n);
            s.validate().unwrap();
            let mut all: Vec<&String> = s.iter().collect();
            all.sort();
            let want = ids(n);
            prop_assert!(all.into_iter().eq(want.iter()));
        }
    }
}
