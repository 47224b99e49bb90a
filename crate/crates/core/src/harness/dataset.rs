use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modelkit::Target;
use crate::pipeline::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    GaussianBlobs,
    TwoSpirals,
    QuadraticRegression,
    CsvFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    #[serde(default)]
    pub n_samples: usize,
    #[serde(default)]
    pub n_features: usize,
    #[serde(default)]
    pub n_classes: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn blobs(n_samples: usize, n_features: usize, n_classes: usize, noise: f64, seed: u64) -> Self {
        DatasetSpec {
            kind: DatasetKind::GaussianBlobs,
            n_samples,
            n_features,
            n_classes,
            noise,
            seed,
            path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("dataset.noise must be >= 0, got {}", self.noise)));
        }
        let need = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Config(msg.to_string())) };
        match self.kind {
            DatasetKind::CsvFile => need(self.path.is_some(), "dataset.path is required for csv_file"),
            DatasetKind::GaussianBlobs => {
                need(self.n_samples > 0, "dataset.n_samples must be >= 1")?;
                need(self.n_features > 0, "dataset.n_features must be >= 1")?;
                need(self.n_classes >= 2, "dataset.n_classes must be >= 2")
            }
            DatasetKind::TwoSpirals => {
                need(self.n_samples > 0, "dataset.n_samples must be >= 1")?;
                need(self.n_features == 2, "two_spirals has n_features = 2")?;
                need(self.n_classes == 2, "two_spirals has n_classes = 2")
            }
            DatasetKind::QuadraticRegression => {
                need(self.n_samples > 0, "dataset.n_samples must be >= 1")?;
                need(self.n_features > 0, "dataset.n_features must be >= 1")
            }
        }
    }
}

/// Feature rows with class labels or regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_features: usize,
    /// Zero for regression.
    pub n_classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Width of the model output this data needs.
    pub fn output_dim(&self) -> usize {
        if self.n_classes > 0 {
            self.n_classes
        } else {
            self.samples.first().map_or(1, |s| match &s.target {
                Target::Values(v) => v.len(),
                Target::Class(_) => 1,
            })
        }
    }

    pub fn is_classification(&self) -> bool {
        self.n_classes > 0
    }

    /// Header `x0..x{f-1}` then `label` (classes) or `y0..` (regression).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.n_features).map(|i| format!("x{i}")).collect();
        if self.is_classification() {
            header.push("label".into());
        } else {
            header.extend((0..self.output_dim()).map(|i| format!("y{i}")));
        }
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.input.iter().map(f64::to_string).collect();
            match &s.target {
                Target::Class(c) => row.push(c.to_string()),
                Target::Values(v) => row.extend(v.iter().map(f64::to_string)),
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
        Ok(())
    }

    /// Reads the layout produced by [`Dataset::write_csv`]. Errors carry the
    /// 1-based line number of the offending row.
    pub fn read_csv<R: Read>(input: R, source: &Path) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let header = rdr.headers()?.clone();
        let bad_header = |message: String| Error::Input {
            path: source.to_path_buf(),
            line: 1,
            message,
        };
        let n_features = header.iter().take_while(|h| h.starts_with('x')).count();
        if n_features == 0 {
            return Err(bad_header("expected feature columns x0, x1, ...".into()));
        }
        let rest: Vec<&str> = header.iter().skip(n_features).collect();
        let classification = match rest.as_slice() {
            ["label"] => true,
            ys if !ys.is_empty() && ys.iter().all(|h| h.starts_with('y')) => false,
            _ => return Err(bad_header("expected a `label` column or target columns y0, y1, ...".into())),
        };
        let mut samples = Vec::new();
        let mut max_class = 0usize;
        for (id, row) in rdr.records().enumerate() {
            let line = id as u64 + 2;
            let row = row.map_err(|e| Error::Input {
                path: source.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
            let bad = |message: String| Error::Input {
                path: source.to_path_buf(),
                line,
                message,
            };
            if row.len() != header.len() {
                return Err(bad(format!("expected {} fields, found {}", header.len(), row.len())));
            }
            let num = |k: usize| -> Result<f64> {
                let v: f64 = row[k]
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("column {}: not a number: {:?}", &header[k], &row[k])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad(format!("column {}: value must be finite", &header[k])))
                }
            };
            let input = (0..n_features).map(num).collect::<Result<Vec<_>>>()?;
            let target = if classification {
                let c: usize = row[n_features]
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("label must be a non-negative integer, got {:?}", &row[n_features])))?;
                max_class = max_class.max(c);
                Target::Class(c)
            } else {
                Target::Values((n_features..row.len()).map(num).collect::<Result<_>>()?)
            };
            samples.push(Sample { id, input, target });
        }
        if samples.is_empty() {
            return Err(bad_header("file has no data rows".into()));
        }
        Ok(Dataset {
            n_features,
            n_classes: if classification { (max_class + 1).max(2) } else { 0 },
            samples,
        })
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(file, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

pub fn gen_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        DatasetKind::GaussianBlobs => Ok(blobs(spec, &mut rng)),
        DatasetKind::TwoSpirals => Ok(spirals(spec, &mut rng)),
        DatasetKind::QuadraticRegression => Ok(quadratic(spec, &mut rng)),
        DatasetKind::CsvFile => Dataset::load(spec.path.as_deref().unwrap()),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Class centers on the unit sphere; sample `i` belongs to class `i mod k`.
fn blobs(spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> Dataset {
    let centers: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| {
            let mut c: Vec<f64> = (0..spec.n_features).map(|_| normal(rng)).collect();
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            c.iter_mut().for_each(|x| *x /= norm);
            c
        })
        .collect();
    let samples = (0..spec.n_samples)
        .map(|id| {
            let class = id % spec.n_classes;
            let input = centers[class].iter().map(|&c| c + spec.noise * normal(rng)).collect();
            Sample {
                id,
                input,
                target: Target::Class(class),
            }
        })
        .collect();
    Dataset {
        n_features: spec.n_features,
        n_classes: spec.n_classes,
        samples,
    }
}

/// Two interleaved arms of an Archimedean spiral, alternating labels.
fn spirals(spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> Dataset {
    let per_arm = spec.n_samples.div_ceil(2).max(1);
    let samples = (0..spec.n_samples)
        .map(|id| {
            let class = id % 2;
            let k = (id / 2) as f64 / per_arm as f64;
            let theta = 0.25 + 3.0 * std::f64::consts::PI * k;
            let r = theta / (3.0 * std::f64::consts::PI);
            let sign = if class == 0 { 1.0 } else { -1.0 };
            let input = vec![
                sign * r * theta.cos() + spec.noise * normal(rng),
                sign * r * theta.sin() + spec.noise * normal(rng),
            ];
            Sample {
                id,
                input,
                target: Target::Class(class),
            }
        })
        .collect();
    Dataset {
        n_features: 2,
        n_classes: 2,
        samples,
    }
}

/// `y = sum_i c_i x_i^2 + noise`, with `c_i` drawn once from `[0.5, 1.5)`.
fn quadratic(spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> Dataset {
    let coeffs: Vec<f64> = (0..spec.n_features).map(|_| rng.random_range(0.5..1.5)).collect();
    let samples = (0..spec.n_samples)
        .map(|id| {
            let input: Vec<f64> = (0..spec.n_features).map(|_| normal(rng)).collect();
            let y = coeffs.iter().zip(&input).map(|(c, x)| c * x * x).sum::<f64>() + spec.noise * normal(rng);
            Sample {
                id,
                input,
                target: Target::Values(vec![y]),
            }
        })
        .collect();
    Dataset {
        n_features: spec.n_features,
        n_classes: 0,
        samples,
    }
}
