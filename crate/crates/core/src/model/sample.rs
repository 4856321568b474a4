use std::collections::HashSet;

use crate::error::{Error, Result};

/// Name and dimensionality of one observation group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub name: String,
    pub dim: usize,
}

impl GroupSpec {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self { name: name.into(), dim }
    }
}

pub fn validate_specs(specs: &[GroupSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::invalid("at least one group is required"));
    }
    let mut seen = HashSet::new();
    for s in specs {
        if s.dim == 0 {
            return Err(Error::invalid(format!("group {:?} has zero dimension", s.name)));
        }
        if s.name.is_empty() || s.name.contains([',', ':', '|', ' ', '\t', '\n']) {
            return Err(Error::invalid(format!("bad group name {:?}", s.name)));
        }
        if !seen.insert(s.name.as_str()) {
            return Err(Error::invalid(format!("duplicate group name {:?}", s.name)));
        }
    }
    Ok(())
}

/// Looks up group indices by name.
pub fn resolve_groups(specs: &[GroupSpec], names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| specs.iter().position(|s| s.name == *n).ok_or_else(|| Error::invalid(format!("unknown group {n:?}"))))
        .collect()
}

/// One observation, split into groups, some of which may be missing.
///
/// Every group keeps backing storage of its full dimension even when it
/// is missing; readers only ever see it through [`GroupedSample::get`],
/// which returns `None` for missing groups. Generators keep the hidden
/// ground truth there, file readers fill it with NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSample {
    values: Vec<Vec<f64>>,
    present: Vec<bool>,
}

impl GroupedSample {
    pub fn new(values: Vec<Vec<f64>>, present: Vec<bool>) -> Result<Self> {
        if values.len() != present.len() {
            return Err(Error::invalid("values and presence mask differ in length"));
        }
        if !present.iter().any(|&p| p) {
            return Err(Error::invalid("a sample needs at least one present group"));
        }
        Ok(Self { values, present })
    }

    /// Builds a sample from per-group options; missing groups get NaN
    /// storage of the spec's dimension.
    pub fn from_options(specs: &[GroupSpec], groups: Vec<Option<Vec<f64>>>) -> Result<Self> {
        if groups.len() != specs.len() {
            return Err(Error::invalid(format!("sample has {} groups, expected {}", groups.len(), specs.len())));
        }
        let present = groups.iter().map(Option::is_some).collect();
        let values = groups.into_iter().zip(specs).map(|(g, s)| g.unwrap_or_else(|| vec![f64::NAN; s.dim])).collect();
        let sample = Self::new(values, present)?;
        sample.check_against(specs)?;
        Ok(sample)
    }

    pub fn fully_observed(values: Vec<Vec<f64>>) -> Result<Self> {
        let present = vec![true; values.len()];
        Self::new(values, present)
    }

    pub fn check_against(&self, specs: &[GroupSpec]) -> Result<()> {
        if self.values.len() != specs.len() {
            return Err(Error::invalid(format!("sample has {} groups, expected {}", self.values.len(), specs.len())));
        }
        for (g, s) in specs.iter().enumerate() {
            if self.values[g].len() != s.dim {
                return Err(Error::invalid(format!(
                    "group {} has {} values, expected {}",
                    s.name,
                    self.values[g].len(),
                    s.dim
                )));
            }
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, g: usize) -> Option<&[f64]> {
        self.present[g].then(|| self.values[g].as_slice())
    }

    pub fn is_present(&self, g: usize) -> bool {
        self.present[g]
    }

    /// Indices of present groups, ascending.
    pub fn observed(&self) -> Vec<usize> {
        (0..self.present.len()).filter(|&g| self.present[g]).collect()
    }

    /// Backing storage of group `g`, ignoring presence. Holds the hidden
    /// ground truth for generated data and NaN for data read from disk.
    pub fn storage(&self, g: usize) -> &[f64] {
        &self.values[g]
    }

    pub fn storage_mut(&mut self, g: usize) -> &mut [f64] {
        &mut self.values[g]
    }

    /// Same values with only the groups in `keep` marked present.
    pub fn restricted_to(&self, keep: &[usize]) -> Result<Self> {
        let present = (0..self.present.len()).map(|g| self.present[g] && keep.contains(&g)).collect();
        Self::new(self.values.clone(), present)
    }
}
