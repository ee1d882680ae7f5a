//! CSV ingestion, the bundled benchmark datasets, and the synthetic
//! four-blob dataset used by the robustness study.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::lloyd;
use crate::data::{child_seed, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    #[default]
    Comma,
    Byte(u8),
    /// Runs of spaces and tabs.
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label_column: Option<usize>,
    pub delimiter: Delimiter,
}

/// Loads a delimited text file; a `.gz` extension is decompressed.
///
/// Error locations are 1-based: `row` is the line in the file, `col` the field.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut text = String::new();
    if path.extension().is_some_and(|e| e == "gz") {
        flate2::read::GzDecoder::new(BufReader::new(file))
            .read_to_string(&mut text)
            .map_err(io_err)?;
    } else {
        BufReader::new(file)
            .read_to_string(&mut text)
            .map_err(io_err)?;
    }
    parse_csv(&text, &dataset_name(path), opts)
}

fn dataset_name(path: &Path) -> String {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for ext in [".gz", ".csv", ".txt", ".data"] {
        if let Some(stripped) = name.strip_suffix(ext) {
            name = stripped.to_string();
        }
    }
    name
}

fn split_records(text: &str, delimiter: Delimiter) -> Result<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    match delimiter {
        Delimiter::Whitespace => {
            for (i, line) in text.lines().enumerate() {
                let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                if !fields.is_empty() {
                    out.push((i + 1, fields));
                }
            }
        }
        Delimiter::Comma | Delimiter::Byte(_) => {
            let byte = match delimiter {
                Delimiter::Byte(b) => b,
                _ => b',',
            };
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .delimiter(byte)
                .from_reader(text.as_bytes());
            for record in reader.records() {
                let record = record.map_err(|e| {
                    let row = e.position().map_or(0, |p| p.line() as usize);
                    Error::Parse {
                        row,
                        col: 0,
                        message: e.to_string(),
                    }
                })?;
                let row = record
                    .position()
                    .map_or(out.len() + 1, |p| p.line() as usize);
                if record.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                out.push((row, record.iter().map(|f| f.trim().to_string()).collect()));
            }
        }
    }
    Ok(out)
}

/// Parses delimited text into a dataset. Labels are re-indexed densely in
/// order of first appearance; the original strings become the label names.
pub fn parse_csv(text: &str, name: &str, opts: &CsvOptions) -> Result<Dataset> {
    let mut records = split_records(text, opts.delimiter)?;
    if opts.has_header && !records.is_empty() {
        records.remove(0);
    }
    let Some((_, first)) = records.first() else {
        return Err(Error::EmptyDataset);
    };
    let width = first.len();
    if let Some(lc) = opts.label_column {
        if lc >= width {
            return Err(Error::InvalidInput(format!(
                "label column {lc} but rows have {width} fields"
            )));
        }
    }
    let dim = width - usize::from(opts.label_column.is_some());
    if dim == 0 {
        return Err(Error::InvalidInput("no feature columns".into()));
    }

    let mut points = Vec::with_capacity(records.len() * dim);
    let mut labels = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (row, fields) in &records {
        if fields.len() != width {
            return Err(Error::Parse {
                row: *row,
                col: fields.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        for (c, field) in fields.iter().enumerate() {
            if Some(c) == opts.label_column {
                let next = names.len();
                let id = *index.entry(field.clone()).or_insert_with(|| {
                    names.push(field.clone());
                    next
                });
                labels.push(id);
                continue;
            }
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                row: *row,
                col: c + 1,
                message: format!("'{field}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: *row,
                    col: c + 1,
                });
            }
            points.push(value);
        }
    }
    let labels = opts.label_column.map(|_| labels);
    let ds = Dataset::from_flat(name, points, dim, labels)?;
    Ok(if opts.label_column.is_some() {
        ds.with_label_names(names)
    } else {
        ds
    })
}

/// A benchmark dataset shipped in the repository's `data/` directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bundled {
    pub name: &'static str,
    /// Candidate file names, tried in order.
    pub files: &'static [(&'static str, Delimiter, bool)],
    pub label_column: Option<usize>,
    /// Number of clusters used in experiments.
    pub k: usize,
}

pub const BUNDLED: &[Bundled] = &[
    Bundled {
        name: "iris",
        files: &[("iris.csv", Delimiter::Comma, true)],
        label_column: Some(4),
        k: 3,
    },
    Bundled {
        name: "seeds",
        files: &[
            ("seeds_dataset.txt", Delimiter::Whitespace, false),
            ("seeds.csv", Delimiter::Comma, true),
        ],
        label_column: Some(7),
        k: 3,
    },
    Bundled {
        name: "glass",
        files: &[("glass.csv", Delimiter::Comma, true)],
        label_column: Some(9),
        k: 6,
    },
    Bundled {
        name: "ionosphere",
        files: &[("ionosphere.csv", Delimiter::Comma, true)],
        label_column: Some(33),
        k: 2,
    },
    Bundled {
        name: "dermatology",
        files: &[("dermatology.csv", Delimiter::Comma, true)],
        label_column: None,
        k: 6,
    },
    Bundled {
        name: "breast_cancer",
        files: &[("breast_cancer.csv", Delimiter::Comma, true)],
        label_column: Some(9),
        k: 2,
    },
    Bundled {
        name: "yeast",
        files: &[("yeast.csv", Delimiter::Comma, true)],
        label_column: None,
        k: 10,
    },
];

pub fn bundled(name: &str) -> Option<&'static Bundled> {
    let key = name.to_ascii_lowercase().replace('-', "_");
    BUNDLED.iter().find(|b| b.name == key)
}

/// The repository's `data/` directory.
pub fn default_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

impl Bundled {
    /// Loads the first candidate file present in `dir`.
    pub fn load_from(&self, dir: &Path) -> Result<Dataset> {
        for &(file, delimiter, has_header) in self.files {
            let path = dir.join(file);
            if path.exists() {
                let opts = CsvOptions {
                    has_header,
                    label_column: self.label_column,
                    delimiter,
                };
                let ds = load_csv(&path, &opts)?;
                let names = ds.label_names().to_vec();
                return Ok(Dataset::from_flat(
                    self.name,
                    ds.points().to_vec(),
                    ds.dim(),
                    ds.labels().map(<[usize]>::to_vec),
                )?
                .with_label_names(names));
            }
        }
        Err(Error::Io {
            path: dir.join(self.files[0].0),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
        })
    }

    pub fn load(&self) -> Result<Dataset> {
        self.load_from(&default_data_dir())
    }
}

/// One isotropic Gaussian blob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 2],
    pub sigma: f64,
    pub size: usize,
}

/// Geometry of the synthetic dataset: two large and two small blobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtificialConfig {
    pub blobs: Vec<Blob>,
}

impl Default for ArtificialConfig {
    fn default() -> Self {
        let blob = |x, y, sigma, size| Blob {
            center: [x, y],
            sigma,
            size,
        };
        Self {
            blobs: vec![
                blob(0.0, 0.0, 0.8, 150),
                blob(6.0, 0.0, 0.8, 150),
                blob(3.0, 5.0, 0.3, 5),
                blob(3.0, -5.0, 0.3, 5),
            ],
        }
    }
}

const ARTIFICIAL_ATTEMPTS: u64 = 1000;

/// The 310-point, four-class synthetic dataset with default geometry.
pub fn make_artificial(seed: u64) -> Dataset {
    make_blobs(&ArtificialConfig::default(), seed).expect("default geometry is separable")
}

/// Samples the blobs, redrawing (deterministically) until Lloyd's algorithm
/// started from the true class means reproduces the class partition.
pub fn make_blobs(cfg: &ArtificialConfig, seed: u64) -> Result<Dataset> {
    if cfg.blobs.is_empty()
        || cfg
            .blobs
            .iter()
            .any(|b| b.size == 0 || b.sigma.is_nan() || b.sigma < 0.0)
    {
        return Err(Error::InvalidInput(
            "blobs need positive sizes and sigmas".into(),
        ));
    }
    for attempt in 0..ARTIFICIAL_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, attempt));
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, b) in cfg.blobs.iter().enumerate() {
            for _ in 0..b.size {
                let dx: f64 = StandardNormal.sample(&mut rng);
                let dy: f64 = StandardNormal.sample(&mut rng);
                rows.push(vec![b.center[0] + b.sigma * dx, b.center[1] + b.sigma * dy]);
                labels.push(c);
            }
        }
        let ds = Dataset::from_rows("artificial", &rows, Some(labels.clone()))?;
        let means: Vec<Vec<f64>> = (0..cfg.blobs.len())
            .map(|c| {
                let members: Vec<&Vec<f64>> = rows
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == c)
                    .map(|(r, _)| r)
                    .collect();
                let n = members.len() as f64;
                (0..2)
                    .map(|t| members.iter().map(|r| r[t]).sum::<f64>() / n)
                    .collect()
            })
            .collect();
        if lloyd(&ds, &means, 100).labels == labels {
            return Ok(ds);
        }
    }
    Err(Error::InvalidInput(
        "blob geometry is not separable enough for exact recovery".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labels_by_first_appearance() {
        let opts = CsvOptions {
            label_column: Some(2),
            ..CsvOptions::default()
        };
        let ds = parse_csv("1,2,a\n3,4,a\n5,6,b", "t", &opts).unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 2));
        assert_eq!(ds.labels(), Some(&[0, 0, 1][..]));
        assert_eq!(ds.label_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn header_is_skipped() {
        let opts = CsvOptions {
            has_header: true,
            ..CsvOptions::default()
        };
        let ds = parse_csv("x,y\n1,2\n3,4\n", "t", &opts).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.point(0), &[1.0, 2.0]);
    }

    #[test]
    fn whitespace_and_custom_delimiters() {
        let ws = CsvOptions {
            delimiter: Delimiter::Whitespace,
            label_column: Some(0),
            ..CsvOptions::default()
        };
        let ds = parse_csv("1  2.5\t3\n2 4 5\n\n", "t", &ws).unwrap();
        assert_eq!(ds.point(1), &[4.0, 5.0]);
        let semi = CsvOptions {
            delimiter: Delimiter::Byte(b';'),
            ..CsvOptions::default()
        };
        assert_eq!(parse_csv("1;2\n3;4", "t", &semi).unwrap().dim(), 2);
    }

    #[test]
    fn errors_are_located() {
        let opts = CsvOptions::default();
        assert!(matches!(
            parse_csv("1,2\n3,x\n", "t", &opts),
            Err(Error::Parse { row: 2, col: 2, .. })
        ));
        assert!(matches!(
            parse_csv("1,2\n3\n", "t", &opts),
            Err(Error::Parse { row: 2, .. })
        ));
        assert!(matches!(
            parse_csv("1,2\n3,inf\n", "t", &opts),
            Err(Error::NonFiniteValue { row: 2, col: 2 })
        ));
        assert!(matches!(
            parse_csv("", "t", &opts),
            Err(Error::EmptyDataset)
        ));
        let header_only = CsvOptions {
            has_header: true,
            ..CsvOptions::default()
        };
        assert!(matches!(
            parse_csv("a,b\n", "t", &header_only),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn artificial_shape_and_determinism() {
        let a = make_artificial(3);
        assert_eq!((a.len(), a.dim()), (310, 2));
        let labels = a.labels().unwrap();
        let sizes: Vec<usize> = (0..4)
            .map(|c| labels.iter().filter(|&&l| l == c).count())
            .collect();
        assert_eq!(sizes, vec![150, 150, 5, 5]);
        assert_eq!(a, make_artificial(3));
        assert_ne!(a, make_artificial(4));
    }

    #[test]
    fn inseparable_geometry_is_rejected() {
        let cfg = ArtificialConfig {
            blobs: vec![
                Blob {
                    center: [0.0, 0.0],
                    sigma: 1.0,
                    size: 50,
                },
                Blob {
                    center: [0.1, 0.0],
                    sigma: 1.0,
                    size: 50,
                },
            ],
        };
        assert!(make_blobs(&cfg, 0).is_err());
    }

    #[test]
    fn bundled_lookup() {
        assert_eq!(bundled("Breast-Cancer").unwrap().k, 2);
        assert!(bundled("mnist").is_none());
    }
}
