use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_played, validate_request, Environment, FeatureGroups};
use crate::context::ObservedContext;
use crate::error::{CabError, Result};

/// A labelled classification table, normalized for bandit replay.
///
/// Each feature column is min-max scaled to `[0, 1]` (constant columns map to
/// 0), then every row is divided by the largest row norm so that all feature
/// vectors satisfy `‖c‖ ≤ 1`. Both steps use statistics of the whole file.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    /// Original label strings; arm `k` corresponds to `class_labels[k]`.
    pub class_labels: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    /// Rows dropped because a feature cell was missing or non-numeric.
    pub rejected_rows: usize,
}

impl Dataset {
    /// Builds a dataset from raw (unnormalized) rows and zero-based labels.
    pub fn from_raw(
        feature_names: Vec<String>,
        class_labels: Vec<String>,
        mut rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n = feature_names.len();
        if rows.is_empty() {
            return Err(CabError::Dataset("no usable rows".into()));
        }
        if rows.len() != labels.len() || rows.iter().any(|r| r.len() != n) {
            return Err(CabError::Dataset("ragged rows".into()));
        }
        if class_labels.len() < 2 {
            return Err(CabError::Dataset(format!(
                "need at least 2 classes, found {}",
                class_labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_labels.len()) {
            return Err(CabError::Dataset(format!("label index {bad} out of range")));
        }
        normalize(&mut rows, n);
        Ok(Self {
            feature_names,
            class_labels,
            rows,
            labels,
            rejected_rows: 0,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Normalized feature values of row `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Writes the normalized table with a trailing `label` column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push("label".into());
        writer.write_record(&header)?;
        for (row, &label) in self.rows.iter().zip(&self.labels) {
            let mut record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            record.push(self.class_labels[label].clone());
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn normalize(rows: &mut [Vec<f64>], n: usize) {
    for j in 0..n {
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r[j]), hi.max(r[j]))
        });
        let span = hi - lo;
        for r in rows.iter_mut() {
            r[j] = if span > 0.0 { (r[j] - lo) / span } else { 0.0 };
        }
    }
    let max_norm = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if max_norm > 0.0 {
        for r in rows.iter_mut() {
            r.iter_mut().for_each(|v| *v /= max_norm);
        }
    }
}

/// Reads a CSV with a header row. Every column other than `label_column` is a
/// numeric feature; rows with a non-numeric or empty feature cell are skipped
/// and counted in [`Dataset::rejected_rows`].
pub fn load_dataset(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_pos = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| CabError::Dataset(format!("label column '{label_column}' not found")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_pos)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut rejected = 0;
    for record in reader.records() {
        let record = record?;
        let label = record.get(label_pos).unwrap_or("").to_string();
        let parsed: Option<Vec<f64>> = record
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label_pos)
            .map(|(_, cell)| cell.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match parsed {
            Some(row) if !label.is_empty() && row.len() == feature_names.len() => {
                rows.push(row);
                raw_labels.push(label);
            }
            _ => rejected += 1,
        }
    }

    let class_labels = dense_labels(&raw_labels);
    let index: BTreeMap<&str, usize> = class_labels
        .iter()
        .enumerate()
        .map(|(k, l)| (l.as_str(), k))
        .collect();
    let labels = raw_labels.iter().map(|l| index[l.as_str()]).collect();
    let mut data = Dataset::from_raw(feature_names, class_labels, rows, labels)?;
    data.rejected_rows = rejected;
    Ok(data)
}

/// Distinct labels in a stable order: numeric order when every label parses
/// as a number, lexicographic otherwise.
fn dense_labels(raw: &[String]) -> Vec<String> {
    let mut distinct: Vec<String> = raw.to_vec();
    distinct.sort();
    distinct.dedup();
    let numeric: Option<Vec<f64>> = distinct.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut pairs: Vec<(f64, String)> = values.into_iter().zip(distinct).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        return pairs.into_iter().map(|(_, l)| l).collect();
    }
    distinct
}

/// `floor(fraction · n)`, tolerant to representation error in `fraction`.
pub fn known_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 1e-9).floor().max(0.0) as usize
}

/// Replays a [`Dataset`] as a bandit: arm `k` earns 1 when it equals the row's label.
#[derive(Debug, Clone)]
pub struct DatasetEnv {
    data: Arc<Dataset>,
    known_set: Vec<usize>,
    groups: Option<FeatureGroups>,
    order: Vec<usize>,
    current: usize,
    known: ObservedContext,
}

impl DatasetEnv {
    /// Draws `floor(known_fraction · N)` known columns and a row order from `seed`.
    ///
    /// When `groups` is given the known set is instead every column outside
    /// the groups.
    pub fn new(
        data: Arc<Dataset>,
        known_fraction: f64,
        groups: Option<FeatureGroups>,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = data.n_features();
        if horizon == 0 || horizon > data.len() {
            return Err(CabError::Config(format!(
                "horizon {horizon} must lie in 1..={} (dataset rows)",
                data.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let known_set = match &groups {
            Some(g) => g.known_complement(n),
            None => {
                if !(0.0..=1.0).contains(&known_fraction) {
                    return Err(CabError::Config(format!(
                        "known fraction must lie in [0, 1], got {known_fraction}"
                    )));
                }
                let mut set = index::sample(&mut rng, n, known_count(n, known_fraction)).into_vec();
                set.sort_unstable();
                set
            }
        };
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        order.truncate(horizon);
        Ok(Self {
            known: ObservedContext::bias_only(n),
            data,
            known_set,
            groups,
            order,
            current: 0,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Row indices in service order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn horizon(&self) -> usize {
        self.order.len()
    }

    pub(super) fn row_at(&self, t: usize) -> Result<usize> {
        self.order
            .get(t)
            .copied()
            .ok_or_else(|| CabError::Protocol(format!("step {t} beyond horizon {}", self.order.len())))
    }
}

impl Environment for DatasetEnv {
    fn n_features(&self) -> usize {
        self.data.n_features()
    }

    fn n_arms(&self) -> usize {
        self.data.n_classes()
    }

    fn known_set(&self) -> &[usize] {
        &self.known_set
    }

    fn groups(&self) -> Option<&FeatureGroups> {
        self.groups.as_ref()
    }

    fn max_horizon(&self) -> Option<usize> {
        Some(self.order.len())
    }

    fn begin_step(&mut self, t: usize) -> Result<ObservedContext> {
        self.current = self.row_at(t)?;
        self.known = ObservedContext::from_full(self.data.row(self.current), &self.known_set)?;
        Ok(self.known.clone())
    }

    fn reveal(&self, requested: &[usize]) -> Result<ObservedContext> {
        validate_request(self.n_features(), &self.known_set, requested)?;
        let mut ctx = self.known.clone();
        ctx.reveal(self.data.row(self.current), requested)?;
        Ok(ctx)
    }

    fn reward(&mut self, arm: usize, played: &ObservedContext) -> Result<f64> {
        if arm >= self.n_arms() {
            return Err(CabError::Protocol(format!("arm {arm} out of range")));
        }
        check_played(self.data.row(self.current), played)?;
        Ok(if arm == self.data.label(self.current) { 1.0 } else { 0.0 })
    }
}
