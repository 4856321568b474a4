//! Grouped datasets: the synthetic bars generator and the `FVD1` text format.
//!
//! `FVD1` files are UTF-8 with LF line endings:
//!
//! ```text
//! FVD1
//! TL:16,TR:16,BL:16,BR:16
//! <v>,<v>,...|*|<v>,...|<v>,...
//! ```
//!
//! Each record line holds one sample with its groups separated by `|`; a
//! group is either `*` (missing) or its values separated by commas,
//! written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::SeededRng;
use crate::model::io::{format_f64, parse_group_list};
use crate::model::{validate_specs, GroupSpec, GroupedSample};

pub const DATASET_MAGIC: &str = "FVD1";

/// Quadrant group names in storage order.
pub const QUADRANTS: [&str; 4] = ["TL", "TR", "BL", "BR"];

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    specs: Vec<GroupSpec>,
    samples: Vec<GroupedSample>,
}

impl GroupedDataset {
    pub fn new(specs: Vec<GroupSpec>, samples: Vec<GroupedSample>) -> Result<Self> {
        validate_specs(&specs)?;
        for (i, s) in samples.iter().enumerate() {
            s.check_against(&specs).map_err(|e| Error::invalid(format!("sample {i}: {e}")))?;
        }
        Ok(Self { specs, samples })
    }

    pub fn specs(&self) -> &[GroupSpec] {
        &self.specs
    }

    pub fn samples(&self) -> &[GroupedSample] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [GroupedSample] {
        &mut self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-group, per-coordinate mean over the samples where the group is
    /// present. Groups never observed get zeros.
    pub fn group_means(&self) -> Vec<Vec<f64>> {
        self.specs
            .iter()
            .enumerate()
            .map(|(g, spec)| {
                let mut sum = vec![0.0; spec.dim];
                let mut count = 0usize;
                for x in self.samples.iter().filter_map(|s| s.get(g)) {
                    sum.iter_mut().zip(x).for_each(|(a, b)| *a += b);
                    count += 1;
                }
                if count > 0 {
                    sum.iter_mut().for_each(|a| *a /= count as f64);
                }
                sum
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.specs.iter().map(|s| format!("{}:{}", s.name, s.dim)).collect();
        let _ = writeln!(out, "{DATASET_MAGIC}");
        let _ = writeln!(out, "{}", header.join(","));
        for s in &self.samples {
            let groups: Vec<String> = (0..self.specs.len())
                .map(|g| match s.get(g) {
                    None => "*".to_string(),
                    Some(x) => x.iter().map(|&v| format_f64(v)).collect::<Vec<_>>().join(","),
                })
                .collect();
            let _ = writeln!(out, "{}", groups.join("|"));
        }
        out
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: source.to_string(), line, msg };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == DATASET_MAGIC => {}
            Some((n, l)) => return Err(perr(n, format!("expected header {DATASET_MAGIC}, found {l:?}"))),
            None => return Err(perr(1, "empty file".into())),
        }
        let specs = match lines.next() {
            Some((n, l)) => parse_group_list(l).map_err(|m| perr(n, m))?,
            None => return Err(perr(2, "missing group list".into())),
        };
        let mut samples = Vec::new();
        for (n, line) in lines {
            let fields: Vec<&str> = line.split('|').collect();
            if fields.len() != specs.len() {
                return Err(perr(n, format!("expected {} groups, found {}", specs.len(), fields.len())));
            }
            let mut groups = Vec::with_capacity(specs.len());
            for (field, spec) in fields.iter().zip(&specs) {
                if field.trim() == "*" {
                    groups.push(None);
                    continue;
                }
                let values = field
                    .split(',')
                    .map(|tok| {
                        let tok = tok.trim();
                        match tok.parse::<f64>() {
                            Ok(v) if v.is_finite() => Ok(v),
                            Ok(_) => Err(perr(n, format!("non-finite value {tok:?} in group {}", spec.name))),
                            Err(_) => Err(perr(n, format!("non-numeric token {tok:?} in group {}", spec.name))),
                        }
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if values.len() != spec.dim {
                    return Err(perr(
                        n,
                        format!("group {} has {} values, expected {}", spec.name, values.len(), spec.dim),
                    ));
                }
                groups.push(Some(values));
            }
            let sample = GroupedSample::from_options(&specs, groups).map_err(|e| perr(n, e.to_string()))?;
            samples.push(sample);
        }
        Self::new(specs, samples)
    }
}

pub fn write_dataset(dataset: &GroupedDataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<GroupedDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GroupedDataset::from_text(&text, &path.display().to_string())
}

/// Knobs of the horizontal-bars generator.
#[derive(Debug, Clone, PartialEq)]
pub struct BarsConfig {
    pub n: usize,
    /// Image side length; even and at least 4.
    pub size: usize,
    pub p_row: f64,
    pub noise: f64,
    pub p_miss: f64,
    pub seed: u64,
}

impl Default for BarsConfig {
    fn default() -> Self {
        Self { n: 2000, size: 8, p_row: 0.25, noise: 0.05, p_miss: 0.25, seed: 0 }
    }
}

impl BarsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 4 || !self.size.is_multiple_of(2) {
            return Err(Error::invalid(format!("image size must be even and >= 4, got {}", self.size)));
        }
        for (name, p) in [("p_row", self.p_row), ("p_miss", self.p_miss)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::invalid(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

pub fn bars_specs(size: usize) -> Vec<GroupSpec> {
    let d = (size / 2) * (size / 2);
    QUADRANTS.iter().map(|q| GroupSpec::new(*q, d)).collect()
}

/// Splits a row-major `size × size` image into TL, TR, BL, BR quadrants,
/// each flattened row-major.
pub fn split_quadrants(image: &[f64], size: usize) -> Vec<Vec<f64>> {
    let h = size / 2;
    let quad = |r0: usize, c0: usize| -> Vec<f64> {
        (r0..r0 + h).flat_map(|r| image[r * size + c0..r * size + c0 + h].iter().copied()).collect()
    };
    vec![quad(0, 0), quad(0, h), quad(h, 0), quad(h, h)]
}

/// Inverse of [`split_quadrants`].
pub fn join_quadrants(quadrants: &[Vec<f64>], size: usize) -> Vec<f64> {
    let h = size / 2;
    let mut image = vec![0.0; size * size];
    for (q, (r0, c0)) in quadrants.iter().zip([(0, 0), (0, h), (h, 0), (h, h)]) {
        for r in 0..h {
            for c in 0..h {
                image[(r0 + r) * size + c0 + c] = q[r * h + c];
            }
        }
    }
    image
}

/// Images of random horizontal bars plus Gaussian noise, split into four
/// quadrant groups with quadrants randomly withheld.
///
/// Per image, in stream order: one Bernoulli(`p_row`) per row, then one
/// noise draw per pixel (only when `noise > 0`), then one Bernoulli(`p_miss`)
/// per quadrant, redrawn as a block while all four come up missing.
/// Withheld quadrants keep their pixels in the sample's backing storage.
pub fn generate_bars(config: &BarsConfig) -> Result<GroupedDataset> {
    config.validate()?;
    let size = config.size;
    let mut rng = SeededRng::new(config.seed);
    let mut samples = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let rows: Vec<bool> = (0..size).map(|_| rng.bernoulli(config.p_row)).collect();
        let mut image: Vec<f64> = (0..size * size).map(|i| if rows[i / size] { 1.0 } else { 0.0 }).collect();
        if config.noise > 0.0 {
            for px in &mut image {
                *px += config.noise * rng.standard_normal();
            }
        }
        let present = loop {
            let mask: Vec<bool> = (0..4).map(|_| !rng.bernoulli(config.p_miss)).collect();
            if mask.iter().any(|&p| p) {
                break mask;
            }
        };
        samples.push(GroupedSample::new(split_quadrants(&image, size), present)?);
    }
    GroupedDataset::new(bars_specs(size), samples)
}
