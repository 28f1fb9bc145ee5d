use std::path::Path;

use super::complement;
use crate::error::{CabError, Result};

/// Disjoint sets of features that are requested and revealed together.
///
/// File format: one group per line, `name: idx,idx,...` with 1-based feature
/// indices. Blank lines and lines starting with `#` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGroups {
    names: Vec<String>,
    /// Zero-based member indices, ascending within each group.
    members: Vec<Vec<usize>>,
}

impl FeatureGroups {
    pub fn new(names: Vec<String>, mut members: Vec<Vec<usize>>) -> Result<Self> {
        if names.len() != members.len() {
            return Err(CabError::Config("group names and members differ in length".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (name, group) in names.iter().zip(members.iter_mut()) {
            if group.is_empty() {
                return Err(CabError::Config(format!("group '{name}' is empty")));
            }
            group.sort_unstable();
            for &i in group.iter() {
                if !seen.insert(i) {
                    return Err(CabError::Config(format!(
                        "feature {} appears in more than one group",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { names, members })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut members = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, list) = line.split_once(':').ok_or_else(|| {
                CabError::Config(format!("group file line {}: expected 'name: idx,...'", lineno + 1))
            })?;
            let group = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| match s.parse::<usize>() {
                    Ok(i) if i >= 1 => Ok(i - 1),
                    _ => Err(CabError::Config(format!(
                        "group file line {}: bad feature index '{s}'",
                        lineno + 1
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            names.push(name.trim().to_string());
            members.push(group);
        }
        Self::new(names, members)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Checks that the groups cover exactly the selectable columns.
    pub fn validate(&self, n_features: usize, known_set: &[usize]) -> Result<()> {
        let mut union: Vec<usize> = self.members.iter().flatten().copied().collect();
        union.sort_unstable();
        if let Some(&bad) = union.iter().find(|&&i| i >= n_features) {
            return Err(CabError::Config(format!(
                "group member {} exceeds the {n_features} features",
                bad + 1
            )));
        }
        if union != complement(n_features, known_set) {
            return Err(CabError::Config(
                "feature groups must partition the non-known features".into(),
            ));
        }
        Ok(())
    }

    /// Features outside every group; these form the known context.
    pub fn known_complement(&self, n_features: usize) -> Vec<usize> {
        let grouped: Vec<usize> = self.members.iter().flatten().copied().collect();
        complement(n_features, &grouped)
    }
}
