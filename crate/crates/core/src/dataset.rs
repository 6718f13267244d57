//! Tabular datasets with per-instance observation sets, CSV I/O, the random
//! observation policy, seeded 70/10/20 splitting and train-split z-scoring.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};

use crate::error::{GenexError, Result};
use crate::features::{FeatureSet, MaskedInput};
use crate::seed::{rng_from, tag};

pub mod synthetic;

/// One example: full feature vector, label and observed index set.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    /// Row index in the source file; stable across splits.
    pub id: usize,
    pub features: Vec<f64>,
    pub label: usize,
    pub observed: FeatureSet,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.features.len()
    }

    /// `x[O]` as a masked network input.
    pub fn observed_input(&self) -> MaskedInput {
        MaskedInput::from_subset(&self.features, &self.observed)
    }

    /// `x[O ∪ extra]`.
    pub fn input_with(&self, extra: &FeatureSet) -> MaskedInput {
        let mut m = self.observed_input();
        m.reveal(extra, &self.features);
        m
    }

    pub fn observed_view(&self) -> SparseFeatures {
        SparseFeatures {
            n: self.n(),
            indices: self.observed.clone(),
            values: self.observed.iter().map(|j| self.features[j]).collect(),
        }
    }

    /// The observed vector padded with zeros to length `n`.
    pub fn padded_observed(&self) -> Vec<f64> {
        self.observed_input().values
    }
}

/// The part of an instance visible before any acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseFeatures {
    pub n: usize,
    pub indices: FeatureSet,
    /// Values aligned with `indices` in ascending index order.
    pub values: Vec<f64>,
}

impl SparseFeatures {
    pub fn new(n: usize, pairs: &[(usize, f64)]) -> Result<Self> {
        let indices: FeatureSet = pairs.iter().map(|p| p.0).collect();
        if indices.len() != pairs.len() {
            return Err(GenexError::invalid("duplicate index in sparse feature view"));
        }
        indices.check_bounds(n)?;
        let mut sorted = pairs.to_vec();
        sorted.sort_by_key(|p| p.0);
        Ok(SparseFeatures {
            n,
            indices,
            values: sorted.into_iter().map(|p| p.1).collect(),
        })
    }

    pub fn dense(values: &[f64]) -> Self {
        SparseFeatures {
            n: values.len(),
            indices: FeatureSet::full(values.len()),
            values: values.to_vec(),
        }
    }

    pub fn padded(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (j, v) in self.indices.iter().zip(&self.values) {
            out[j] = *v;
        }
        out
    }

    pub fn to_masked(&self) -> MaskedInput {
        MaskedInput::from_subset(&self.padded(), &self.indices)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitTag {
    /// Not split yet.
    Full,
    Train,
    Validation,
    Test,
}

/// Per-column affine standardization fitted on a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(d: &Dataset) -> Result<Self> {
        if d.is_empty() {
            return Err(GenexError::invalid("cannot fit a standardizer on an empty dataset"));
        }
        let count = d.len() as f64;
        let mut mean = vec![0.0; d.n];
        for inst in &d.instances {
            for (m, x) in mean.iter_mut().zip(&inst.features) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; d.n];
        for inst in &d.instances {
            for ((v, x), m) in var.iter_mut().zip(&inst.features).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        // constant columns keep their scale
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / count).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        if d.n != self.mean.len() {
            return Err(GenexError::DimensionMismatch {
                expected: self.mean.len(),
                actual: d.n,
            });
        }
        let mut out = d.clone();
        for inst in &mut out.instances {
            for ((x, m), s) in inst.features.iter_mut().zip(&self.mean).zip(&self.scale) {
                *x = (*x - m) / s;
            }
        }
        out.standardization = Some(self.clone());
        Ok(out)
    }

    /// One `mean scale` line per column.
    pub fn to_text(&self) -> String {
        self.mean
            .iter()
            .zip(&self.scale)
            .map(|(m, s)| format!("{m:?} {s:?}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut st = Standardizer {
            mean: Vec::new(),
            scale: Vec::new(),
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let parsed: Vec<f64> = line.split_whitespace().filter_map(|t| t.parse().ok()).collect();
            match parsed.as_slice() {
                [m, s] if *s > 0.0 => {
                    st.mean.push(*m);
                    st.scale.push(*s);
                }
                _ => return Err(GenexError::format("standardizer", format!("bad line {line:?}"))),
            }
        }
        Ok(st)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| GenexError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GenexError::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub n: usize,
    pub num_classes: usize,
    pub split: SplitTag,
    pub standardization: Option<Standardizer>,
}

impl Dataset {
    pub fn new(instances: Vec<Instance>, n: usize, num_classes: usize) -> Result<Self> {
        let d = Dataset {
            instances,
            n,
            num_classes,
            split: SplitTag::Full,
            standardization: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (row, inst) in self.instances.iter().enumerate() {
            if inst.features.len() != self.n {
                return Err(GenexError::ShapeMismatch(format!(
                    "row {row} has {} features, dataset has {}",
                    inst.features.len(),
                    self.n
                )));
            }
            if inst.label >= self.num_classes {
                return Err(GenexError::LabelOutOfRange {
                    row,
                    label: inst.label,
                    num_classes: self.num_classes,
                });
            }
            inst.observed.check_bounds(self.n)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// A dataset restricted to the given positions, keeping metadata.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        Dataset {
            instances: positions.iter().map(|&p| self.instances[p].clone()).collect(),
            n: self.n,
            num_classes: self.num_classes,
            split: self.split,
            standardization: self.standardization.clone(),
        }
    }

    /// Indices observed by every instance (empty for an empty dataset).
    pub fn common_observed(&self) -> FeatureSet {
        let mut it = self.instances.iter();
        let Some(first) = it.next() else {
            return FeatureSet::empty();
        };
        it.fold(first.observed.clone(), |acc, inst| acc.intersection(&inst.observed))
    }

    pub fn mean_observed(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.instances.iter().map(|i| i.observed.len() as f64).sum::<f64>() / self.len() as f64
    }
}

/// Where the labels live.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelSource {
    /// A named column of the features file.
    Column(String),
    /// A separate single-column CSV with a header row.
    File(PathBuf),
}

fn parse_cell(file: &Path, row: usize, column: usize, cell: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| GenexError::NonNumeric {
        file: file.display().to_string(),
        row,
        column,
        cell: cell.to_string(),
    })
}

fn parse_label(file: &Path, row: usize, column: usize, cell: &str) -> Result<usize> {
    let v = parse_cell(file, row, column, cell)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(GenexError::NonNumeric {
            file: file.display().to_string(),
            row,
            column,
            cell: cell.to_string(),
        });
    }
    Ok(v as usize)
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| GenexError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(f))
}

/// Reads a features CSV (header row, one instance per row), labels and an
/// optional 0/1 mask CSV of identical shape.
///
/// Without a mask every observed set is empty and an observation policy
/// must be applied before use. When `num_classes` is `None` it is inferred
/// as `max label + 1`.
pub fn load_dataset(
    features_path: &Path,
    labels: &LabelSource,
    mask_path: Option<&Path>,
    num_classes: Option<usize>,
) -> Result<Dataset> {
    let mut reader = open_csv(features_path)?;
    let headers = reader.headers()?.clone();
    let label_col = match labels {
        LabelSource::Column(name) => Some(
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| GenexError::invalid(format!("no label column named {name:?}")))?,
        ),
        LabelSource::File(_) => None,
    };
    let n = headers.len() - usize::from(label_col.is_some());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut column_labels: Vec<usize> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(GenexError::ShapeMismatch(format!(
                "row {row} of {} has {} cells, header has {}",
                features_path.display(),
                record.len(),
                headers.len()
            )));
        }
        let mut feats = Vec::with_capacity(n);
        for (col, cell) in record.iter().enumerate() {
            if Some(col) == label_col {
                column_labels.push(parse_label(features_path, row, col, cell)?);
            } else {
                feats.push(parse_cell(features_path, row, col, cell)?);
            }
        }
        rows.push(feats);
    }

    let labels_vec = match labels {
        LabelSource::Column(_) => column_labels,
        LabelSource::File(path) => {
            let mut r = open_csv(path)?;
            let mut out = Vec::new();
            for (row, record) in r.records().enumerate() {
                let record = record?;
                if record.len() != 1 {
                    return Err(GenexError::ShapeMismatch(format!(
                        "labels file row {row} has {} cells",
                        record.len()
                    )));
                }
                out.push(parse_label(path, row, 0, &record[0])?);
            }
            out
        }
    };
    if labels_vec.len() != rows.len() {
        return Err(GenexError::ShapeMismatch(format!(
            "{} feature rows but {} labels",
            rows.len(),
            labels_vec.len()
        )));
    }

    let observed: Vec<FeatureSet> = match mask_path {
        None => vec![FeatureSet::empty(); rows.len()],
        Some(path) => {
            let mut r = open_csv(path)?;
            let mut out = Vec::with_capacity(rows.len());
            for (row, record) in r.records().enumerate() {
                let record = record?;
                if record.len() != n {
                    return Err(GenexError::ShapeMismatch(format!(
                        "mask row {row} has {} cells, features have {n}",
                        record.len()
                    )));
                }
                let mut set = Vec::new();
                for (col, cell) in record.iter().enumerate() {
                    match cell.trim() {
                        "1" => set.push(col),
                        "0" => {}
                        _ => {
                            return Err(GenexError::NonNumeric {
                                file: path.display().to_string(),
                                row,
                                column: col,
                                cell: cell.to_string(),
                            })
                        }
                    }
                }
                out.push(set.into_iter().collect());
            }
            if out.len() != rows.len() {
                return Err(GenexError::ShapeMismatch(format!(
                    "{} feature rows but {} mask rows",
                    rows.len(),
                    out.len()
                )));
            }
            out
        }
    };

    let num_classes = match num_classes {
        Some(c) => c,
        None => labels_vec.iter().max().map_or(1, |m| m + 1),
    };
    let instances = rows
        .into_iter()
        .zip(labels_vec)
        .zip(observed)
        .enumerate()
        .map(|(id, ((features, label), observed))| Instance {
            id,
            features,
            label,
            observed,
        })
        .collect();
    Dataset::new(instances, n, num_classes)
}

/// Writes `features.csv` (with a trailing `label` column), and `mask.csv`
/// into `dir`. Values are written in shortest round-trip form, so reloading
/// reproduces them bit for bit.
pub fn save_dataset(d: &Dataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| GenexError::io(dir, e))?;
    let fpath = dir.join("features.csv");
    let mpath = dir.join("mask.csv");
    let write = |path: &Path, body: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| {
        let f = File::create(path).map_err(|e| GenexError::io(path, e))?;
        let mut w = BufWriter::new(f);
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| GenexError::io(path, e))
    };
    let header: Vec<String> = (0..d.n).map(|j| format!("f{j}")).collect();
    write(&fpath, &|w| {
        writeln!(w, "{},label", header.join(","))?;
        for inst in &d.instances {
            let cells: Vec<String> = inst.features.iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{},{}", cells.join(","), inst.label)?;
        }
        Ok(())
    })?;
    write(&mpath, &|w| {
        writeln!(w, "{}", header.join(","))?;
        for inst in &d.instances {
            let cells: Vec<&str> = (0..d.n)
                .map(|j| if inst.observed.contains(j) { "1" } else { "0" })
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })?;
    Ok((fpath, mpath))
}

/// Gives every instance an independent uniformly random observed set of
/// size `round(fraction * n)`.
pub fn apply_observation_policy(d: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(GenexError::invalid(format!(
            "observation fraction {fraction} outside (0, 1]"
        )));
    }
    let size = (fraction * d.n as f64).round() as usize;
    if size < 1 {
        return Err(GenexError::invalid(format!(
            "fraction {fraction} observes no feature out of {}",
            d.n
        )));
    }
    let mut rng = rng_from(seed, &[tag::OBSERVE]);
    let all: Vec<usize> = (0..d.n).collect();
    let mut out = d.clone();
    for inst in &mut out.instances {
        inst.observed = all.choose_multiple(&mut rng, size).copied().collect();
    }
    Ok(out)
}

/// Seeded 70/10/20 train/validation/test split.
pub fn split_dataset(d: &Dataset, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let total = d.len();
    let n_train = (0.7 * total as f64).round() as usize;
    let n_val = (0.1 * total as f64).round() as usize;
    if total < 10 || n_train == 0 || n_val == 0 || n_train + n_val >= total {
        return Err(GenexError::invalid(format!(
            "dataset of {total} instances is too small to split 70/10/20"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng_from(seed, &[tag::SPLIT]));
    let tagged = |positions: &[usize], split: SplitTag| {
        let mut part = d.subset(positions);
        part.split = split;
        part
    };
    Ok((
        tagged(&order[..n_train], SplitTag::Train),
        tagged(&order[n_train..n_train + n_val], SplitTag::Validation),
        tagged(&order[n_train + n_val..], SplitTag::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn toy(rows: usize, n: usize) -> Dataset {
        let instances = (0..rows)
            .map(|id| Instance {
                id,
                features: (0..n).map(|j| (id * n + j) as f64 * 0.5 - 3.0).collect(),
                label: id % 3,
                observed: FeatureSet::empty(),
            })
            .collect();
        Dataset::new(instances, n, 3).unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn mask_decoding() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "f0,f1,f2,f3,label\n1,2,3,4,0\n5,6,7,8,1\n9,1,2,3,1\n");
        let ones = write(dir.path(), "m1.csv", "f0,f1,f2,f3\n1,1,1,1\n1,1,1,1\n1,1,1,1\n");
        let zeros = write(dir.path(), "m0.csv", "f0,f1,f2,f3\n0,0,0,0\n0,0,0,0\n0,0,0,0\n");
        let mixed = write(dir.path(), "mx.csv", "f0,f1,f2,f3\n1,0,0,1\n0,0,0,0\n0,1,0,0\n");
        let labels = LabelSource::Column("label".into());

        let d = load_dataset(&f, &labels, Some(&ones), None).unwrap();
        assert_eq!(d.n, 4);
        assert_eq!(d.num_classes, 2);
        assert!(d.instances.iter().all(|i| i.observed == FeatureSet::full(4)));

        let d = load_dataset(&f, &labels, Some(&zeros), None).unwrap();
        assert!(d.instances.iter().all(|i| i.observed.is_empty()));

        let d = load_dataset(&f, &labels, Some(&mixed), None).unwrap();
        assert_eq!(d.instances[0].observed, FeatureSet::from_iter([0, 3]));
        assert_eq!(d.instances[2].features, vec![9.0, 1.0, 2.0, 3.0]);

        let d = load_dataset(&f, &labels, None, None).unwrap();
        assert!(d.instances.iter().all(|i| i.observed.is_empty()));
    }

    #[test]
    fn separate_label_file() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "f0,f1\n1,2\n3,4\n");
        let l = write(dir.path(), "y.csv", "y\n2\n0\n");
        let d = load_dataset(&f, &LabelSource::File(l), None, Some(3)).unwrap();
        assert_eq!(d.instances[0].label, 2);
        assert_eq!(d.num_classes, 3);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let labels = LabelSource::Column("label".into());
        let f = write(dir.path(), "f.csv", "f0,f1,label\n1,2,0\n3,4,1\n");
        let bad_mask = write(dir.path(), "m.csv", "f0,f1,f2\n1,1,1\n1,1,1\n");
        assert!(matches!(
            load_dataset(&f, &labels, Some(&bad_mask), None),
            Err(GenexError::ShapeMismatch(_))
        ));
        let short_mask = write(dir.path(), "m2.csv", "f0,f1\n1,1\n");
        assert!(matches!(
            load_dataset(&f, &labels, Some(&short_mask), None),
            Err(GenexError::ShapeMismatch(_))
        ));
        let nonnum = write(dir.path(), "g.csv", "f0,f1,label\n1,abc,0\n");
        assert!(matches!(
            load_dataset(&nonnum, &labels, None, None),
            Err(GenexError::NonNumeric { row: 0, column: 1, .. })
        ));
        assert!(matches!(
            load_dataset(&f, &labels, None, Some(1)),
            Err(GenexError::LabelOutOfRange { label: 1, .. })
        ));
    }

    #[test]
    fn save_and_reload_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = toy(12, 5);
        d.instances[3].features[2] = 0.1 + 0.2;
        d.instances[4].features[0] = -1.0e-300;
        d.instances[5].features[1] = std::f64::consts::PI * 1e17;
        let d = apply_observation_policy(&d, 0.4, 3).unwrap();
        let (f, m) = save_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(&f, &LabelSource::Column("label".into()), Some(&m), Some(3)).unwrap();
        for (a, b) in d.instances.iter().zip(&back.instances) {
            let bits_a: Vec<u64> = a.features.iter().map(|x| x.to_bits()).collect();
            let bits_b: Vec<u64> = b.features.iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
            assert_eq!(a.observed, b.observed);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn standardizer_text_round_trip() {
        let st = Standardizer::fit(&toy(30, 4)).unwrap();
        assert_eq!(Standardizer::from_text(&st.to_text()).unwrap(), st);
        assert!(Standardizer::from_text("1.0 0.0\n").is_err());
        assert!(Standardizer::from_text("1.0\n").is_err());
    }

    #[test]
    fn observation_policy_sizes() {
        let d = toy(20, 132);
        let p = apply_observation_policy(&d, 0.1, 9).unwrap();
        assert!(p.instances.iter().all(|i| i.observed.len() == 13));
        let full = apply_observation_policy(&d, 1.0, 9).unwrap();
        assert!(full.instances.iter().all(|i| i.observed == FeatureSet::full(132)));
        assert_eq!(p, apply_observation_policy(&d, 0.1, 9).unwrap());
        assert_ne!(p, apply_observation_policy(&d, 0.1, 10).unwrap());
        assert!(apply_observation_policy(&d, 0.0, 1).is_err());
        assert!(apply_observation_policy(&d, 1.5, 1).is_err());
        assert!(apply_observation_policy(&toy(3, 4), 0.1, 1).is_err());
    }

    #[test]
    fn split_sizes() {
        let sizes = |d: &Dataset| {
            let (a, b, c) = split_dataset(d, 1).unwrap();
            (a.len(), b.len(), c.len())
        };
        assert_eq!(sizes(&toy(100, 2)), (70, 10, 20));
        assert_eq!(sizes(&toy(10, 2)), (7, 1, 2));
        assert!(split_dataset(&toy(9, 2), 1).is_err());
        let d = toy(50, 2);
        let (a1, _, _) = split_dataset(&d, 4).unwrap();
        let (a2, _, _) = split_dataset(&d, 4).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(a1.split, SplitTag::Train);
    }

    #[test]
    fn standardizer_uses_training_statistics() {
        let d = toy(30, 3);
        let (train, _, test) = split_dataset(&d, 2).unwrap();
        let st = Standardizer::fit(&train).unwrap();
        let z = st.apply(&train).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = z.instances.iter().map(|i| i.features[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
        let zt = st.apply(&test).unwrap();
        assert_eq!(zt.standardization.as_ref(), Some(&st));
    }

    proptest! {
        #[test]
        fn splits_are_disjoint_and_exhaustive(size in 10usize..300, seed in any::<u64>()) {
            let d = toy(size, 1);
            let (a, b, c) = split_dataset(&d, seed).unwrap();
            let ids: Vec<usize> = a.instances.iter().chain(&b.instances).chain(&c.instances)
                .map(|i| i.id).collect();
            let unique: BTreeSet<usize> = ids.iter().copied().collect();
            prop_assert_eq!(ids.len(), size);
            prop_assert_eq!(unique.len(), size);
            prop_assert!(a.len() >= 1 && b.len() >= 1 && c.len() >= 1);
        }

        #[test]
        fn policy_sizes_are_exact(n in 1usize..60, frac in 0.05f64..1.0, seed in any::<u64>()) {
            let want = (frac * n as f64).round() as usize;
            prop_assume!(want >= 1);
            let d = apply_observation_policy(&toy(5, n), frac, seed).unwrap();
            prop_assert!(d.instances.iter().all(|i| i.observed.len() == want));
        }
    }
}
