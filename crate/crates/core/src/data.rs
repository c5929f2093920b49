//! Landmark datasets: canonical CSV ingestion, synthetic generation and
//! atomic output.
//!
//! The canonical CSV has the header `id,label,x1,y1,x2,y2,…,xk,yk`, one
//! configuration per row, non-negative integer labels and `.` as the
//! decimal point. Class display names live in an optional sidecar JSON
//! object mapping label to name, e.g. `{"0": "Lobed", "1": "Cordate"}`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::classifiers::LabeledShape;
use crate::error::{Result, ShapeError};
use crate::shape::{to_preshape, LandmarkConfig, Preshape, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkDataset {
    pub records: Vec<LandmarkConfig>,
    pub k: usize,
    pub class_names: BTreeMap<u32, String>,
}

impl LandmarkDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted distinct labels present in the records.
    pub fn labels(&self) -> Vec<u32> {
        let mut l: Vec<u32> = self.records.iter().filter_map(|r| r.label).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    /// Normalizes every record. Records without an id get their row index.
    pub fn preshapes(&self) -> Result<Vec<LabeledShape>> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let id = r.id.clone().unwrap_or_else(|| i.to_string());
                let label = r.label.ok_or_else(|| {
                    ShapeError::InvalidInput(format!("record `{id}` has no label"))
                })?;
                Ok(LabeledShape::new(id, label, to_preshape(r)?))
            })
            .collect()
    }

    /// Ids of records whose landmarks all coincide.
    pub fn degenerate_ids(&self) -> Vec<String> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| matches!(to_preshape(r), Err(ShapeError::DegenerateConfiguration { .. })))
            .map(|(i, r)| r.id.clone().unwrap_or_else(|| i.to_string()))
            .collect()
    }

    /// Builds a dataset from already-normalized shapes.
    pub fn from_shapes(shapes: &[LabeledShape]) -> Result<Self> {
        let k = shapes.first().map_or(0, |s| s.shape.k());
        let mut records = Vec::with_capacity(shapes.len());
        let mut class_names = BTreeMap::new();
        for s in shapes {
            let points: Vec<C64> = s.shape.coords().iter().copied().collect();
            records.push(LandmarkConfig::new(points)?.with_label(s.label).with_id(s.id.clone()));
            class_names.entry(s.label).or_insert_with(|| s.label.to_string());
        }
        Ok(Self {
            records,
            k,
            class_names,
        })
    }
}

/// Draws `per_class` noisy configurations around each template: every
/// landmark gets independent N(0, noise_sd²) noise on both coordinates.
/// The results are not normalized. Template `i` gets label `i`.
pub fn generate_synthetic(
    templates: &[Preshape],
    per_class: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<LandmarkDataset> {
    if !(noise_sd > 0.0 && noise_sd.is_finite()) {
        return Err(ShapeError::InvalidInput(format!(
            "noise_sd must be positive, got {noise_sd}"
        )));
    }
    let k = templates.first().map_or(0, |t| t.k());
    if templates.iter().any(|t| t.k() != k) {
        return Err(ShapeError::InvalidInput("templates have different landmark counts".into()));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| ShapeError::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(templates.len() * per_class);
    let mut class_names = BTreeMap::new();
    for (label, t) in templates.iter().enumerate() {
        let label = label as u32;
        class_names.insert(label, format!("class{label}"));
        for j in 0..per_class {
            let points: Vec<C64> = t
                .coords()
                .iter()
                .map(|z| z + C64::new(noise.sample(&mut rng), noise.sample(&mut rng)))
                .collect();
            records.push(
                LandmarkConfig::new(points)?
                    .with_label(label)
                    .with_id(format!("c{label}_{j}")),
            );
        }
    }
    Ok(LandmarkDataset {
        records,
        k,
        class_names,
    })
}

/// A leaf-like outline: a tip, two lobed margins and a petiole base, `k`
/// points in order.
pub fn leaf_outline(k: usize) -> Result<Preshape> {
    let points: Vec<C64> = (0..k)
        .map(|j| {
            let t = std::f64::consts::TAU * j as f64 / k as f64;
            let r = 1.0 + 0.35 * (3.0 * t).cos() + 0.1 * (5.0 * t).sin();
            C64::new(0.8 * r * t.sin(), 1.2 * r * t.cos())
        })
        .collect();
    Preshape::normalize(&points)
}

/// `count` class templates scattered around `base`: each is `base` plus a
/// smooth random deformation with Euclidean norm `spread`, renormalized.
pub fn perturbed_templates(base: &Preshape, count: usize, spread: f64, seed: u64) -> Result<Vec<Preshape>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let k = base.k();
    (0..count)
        .map(|_| {
            // low-frequency Fourier deformation keeps templates outline-like
            let coeffs: Vec<(C64, C64)> = (1..=3)
                .map(|_| {
                    (
                        C64::new(unit.sample(&mut rng), unit.sample(&mut rng)),
                        C64::new(unit.sample(&mut rng), unit.sample(&mut rng)),
                    )
                })
                .collect();
            let bump: Vec<C64> = (0..k)
                .map(|j| {
                    let t = std::f64::consts::TAU * j as f64 / k as f64;
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(h, (a, b))| {
                            let f = (h + 1) as f64 * t;
                            a * f.cos() + b * f.sin()
                        })
                        .sum()
                })
                .collect();
            let size = bump.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let points: Vec<C64> = base
                .coords()
                .iter()
                .zip(&bump)
                .map(|(z, b)| z + b * (spread / size))
                .collect();
            Preshape::normalize(&points)
        })
        .collect()
}

#[cfg(feature = "io")]
pub use self::io::*;

#[cfg(feature = "io")]
mod io {
    use std::collections::BTreeMap;
    use std::fs::File;
    use std::io::{Read, Write};
    use std::path::Path;

    use super::LandmarkDataset;
    use crate::error::{Result, ShapeError};
    use crate::shape::{LandmarkConfig, C64};

    #[derive(Debug, Clone, Default)]
    pub struct LoadOptions<'a> {
        /// Sidecar JSON with class names; when given, every label must appear.
        pub classes_json: Option<&'a Path>,
    }

    /// Writes `bytes` to a temp file next to `path`, then renames it over
    /// `path`.
    pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.flush()?;
        tmp.persist(path).map_err(|e| ShapeError::Io(e.error))?;
        Ok(())
    }

    pub fn read_class_names(path: &Path) -> Result<BTreeMap<u32, String>> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load_landmark_csv(path: &Path, options: &LoadOptions<'_>) -> Result<LandmarkDataset> {
        let names = options.classes_json.map(read_class_names).transpose()?;
        read_landmark_csv(File::open(path)?, names)
    }

    fn parse_err(line: usize, message: impl Into<String>) -> ShapeError {
        ShapeError::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn read_landmark_csv<R: Read>(reader: R, class_names: Option<BTreeMap<u32, String>>) -> Result<LandmarkDataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if headers.len() < 2 || &headers[0] != "id" || &headers[1] != "label" {
            return Err(parse_err(1, "header must start with `id,label`"));
        }
        let coord_cols = headers.len() - 2;
        if coord_cols % 2 != 0 {
            return Err(parse_err(1, "header has an odd number of coordinate columns"));
        }
        let k = coord_cols / 2;
        if k < 3 {
            return Err(parse_err(1, format!("need at least 3 landmarks, header has {k}")));
        }

        let mut records = Vec::new();
        let mut seen = BTreeMap::new();
        for row in rdr.records() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            if row.len() != headers.len() {
                let found = row.len().saturating_sub(2);
                if found % 2 != 0 {
                    return Err(parse_err(line, format!("odd number of coordinates ({found})")));
                }
                return Err(ShapeError::InconsistentLandmarkCount {
                    line,
                    expected: k,
                    found: found / 2,
                });
            }
            let id = row[0].to_string();
            let label: u32 = row[1]
                .parse()
                .map_err(|_| parse_err(line, format!("label `{}` is not a non-negative integer", &row[1])))?;
            if let Some(names) = &class_names {
                if !names.contains_key(&label) {
                    return Err(ShapeError::UnknownLabel { line, label });
                }
            }
            let mut points = Vec::with_capacity(k);
            for j in 0..k {
                let x = parse_f64(&row[2 + 2 * j], line)?;
                let y = parse_f64(&row[3 + 2 * j], line)?;
                points.push(C64::new(x, y));
            }
            let config = LandmarkConfig::new(points)
                .map_err(|e| parse_err(line, e.to_string()))?
                .with_label(label)
                .with_id(id);
            seen.entry(label).or_insert_with(|| label.to_string());
            records.push(config);
        }
        Ok(LandmarkDataset {
            records,
            k,
            class_names: class_names.unwrap_or(seen),
        })
    }

    fn parse_f64(s: &str, line: usize) -> Result<f64> {
        let v: f64 = s
            .parse()
            .map_err(|_| parse_err(line, format!("`{s}` is not a number")))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("non-finite coordinate `{s}`")));
        }
        Ok(v)
    }

    pub fn landmark_csv_string(dataset: &LandmarkDataset) -> Result<String> {
        let mut out = String::from("id,label");
        for j in 1..=dataset.k {
            out.push_str(&format!(",x{j},y{j}"));
        }
        out.push('\n');
        for (i, r) in dataset.records.iter().enumerate() {
            if r.k() != dataset.k {
                return Err(ShapeError::InvalidInput(format!(
                    "record {i} has {} landmarks, dataset has {}",
                    r.k(),
                    dataset.k
                )));
            }
            let id = r.id.clone().unwrap_or_else(|| i.to_string());
            if id.contains([',', '"', '\n', '\r']) {
                return Err(ShapeError::InvalidInput(format!("id `{id}` contains a CSV delimiter")));
            }
            out.push_str(&id);
            out.push(',');
            out.push_str(&r.label.map(|l| l.to_string()).unwrap_or_default());
            for z in r.points() {
                // `{}` on f64 prints the shortest string that parses back exactly
                out.push_str(&format!(",{},{}", z.re, z.im));
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save_landmark_csv(path: &Path, dataset: &LandmarkDataset) -> Result<()> {
        write_atomic(path, landmark_csv_string(dataset)?.as_bytes())
    }

    pub fn save_class_names(path: &Path, names: &BTreeMap<u32, String>) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(names)?.as_bytes())
    }
}
