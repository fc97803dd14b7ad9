//! Dataset ingestion and the three-way class partition.
//!
//! Samples are routed by label into three disjoint groups: `A` (classes the
//! automated components are trained on), `B` (unknown to the AI, but within
//! reach of a competent expert) and `C` (unknown to both). Group `A` is
//! further split into stratified train/test index sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns of a KDD Cup 99 record holding symbolic values.
pub const KDD_CATEGORICAL_COLUMNS: [usize; 3] = [1, 2, 3];
pub const KDD_FEATURE_COUNT: usize = 41;

const KDD_COLUMN_NAMES: [&str; KDD_FEATURE_COUNT] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

/// Column names of a KDD Cup 99 record, in file order (label excluded).
pub fn kdd_column_names() -> &'static [&'static str] {
    &KDD_COLUMN_NAMES
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassLabel {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

impl Sample {
    pub fn label(&self) -> Result<usize> {
        self.label.ok_or(Error::Unlabeled(self.id))
    }
}

/// Class names indexed by id. Ids are assigned in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRegistry {
    names: Vec<String>,
}

impl ClassRegistry {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut reg = ClassRegistry::default();
        for n in names {
            reg.intern(&n.into());
        }
        reg
    }

    pub fn intern(&mut self, name: &str) -> usize {
        match self.id_of(name) {
            Some(id) => id,
            None => {
                self.names.push(name.to_string());
                self.names.len() - 1
            }
        }
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn label(&self, id: usize) -> Option<ClassLabel> {
        self.name(id).map(|name| ClassLabel {
            id,
            name: name.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub classes: ClassRegistry,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn dimension(&self) -> usize {
        self.feature_names.len()
    }

    /// Sample count per class id.
    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            if let Some(l) = s.label {
                *counts.entry(l).or_insert(0) += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    #[serde(rename = "kdd-csv")]
    KddCsv,
    #[serde(rename = "generic-csv")]
    GenericCsv,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kdd-csv" => Ok(DatasetFormat::KddCsv),
            "generic-csv" => Ok(DatasetFormat::GenericCsv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::KddCsv => "kdd-csv",
            DatasetFormat::GenericCsv => "generic-csv",
        })
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    match format {
        DatasetFormat::KddCsv => read_kdd(reader),
        DatasetFormat::GenericCsv => read_generic(reader),
    }
}

/// Parses headerless KDD Cup 99 records: 41 features followed by a label
/// that may carry a trailing period.
pub fn read_kdd<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    struct Row {
        numeric: Vec<f64>,
        symbols: [String; 3],
        label: String,
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(i + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != KDD_FEATURE_COUNT + 1 {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {} fields, found {}", KDD_FEATURE_COUNT + 1, rec.len()),
            });
        }
        let mut numeric = Vec::with_capacity(KDD_FEATURE_COUNT - 3);
        let mut symbols: [String; 3] = Default::default();
        for (col, field) in rec.iter().take(KDD_FEATURE_COUNT).enumerate() {
            if let Some(slot) = KDD_CATEGORICAL_COLUMNS.iter().position(|&c| c == col) {
                symbols[slot] = field.trim().to_string();
            } else {
                let v: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
                    line,
                    message: format!("column {} (`{}`) is not numeric: `{field}`", col, KDD_COLUMN_NAMES[col]),
                })?;
                numeric.push(v);
            }
        }
        let raw = rec[KDD_FEATURE_COUNT].trim();
        let label = raw.strip_suffix('.').unwrap_or(raw).to_string();
        if label.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty label".into(),
            });
        }
        rows.push(Row {
            numeric,
            symbols,
            label,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let vocab: Vec<Vec<String>> = (0..3)
        .map(|slot| {
            rows.iter()
                .map(|r| r.symbols[slot].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();

    let mut feature_names: Vec<String> = KDD_COLUMN_NAMES
        .iter()
        .enumerate()
        .filter(|(c, _)| !KDD_CATEGORICAL_COLUMNS.contains(c))
        .map(|(_, n)| n.to_string())
        .collect();
    let numeric_width = feature_names.len();
    for (slot, &col) in KDD_CATEGORICAL_COLUMNS.iter().enumerate() {
        for sym in &vocab[slot] {
            feature_names.push(format!("{}={}", KDD_COLUMN_NAMES[col], sym));
        }
    }

    let mut numeric: Vec<Vec<f64>> = rows.iter().map(|r| r.numeric.clone()).collect();
    standardize(&mut numeric);

    let mut classes = ClassRegistry::default();
    let samples = rows
        .iter()
        .zip(numeric)
        .enumerate()
        .map(|(i, (row, mut features))| {
            features.reserve(feature_names.len() - numeric_width);
            for slot in 0..3 {
                for sym in &vocab[slot] {
                    features.push(if *sym == row.symbols[slot] { 1.0 } else { 0.0 });
                }
            }
            Sample {
                id: i as u64,
                features,
                label: Some(classes.intern(&row.label)),
            }
        })
        .collect();

    Ok(Dataset {
        samples,
        classes,
        feature_names,
    })
}

/// Parses a headed CSV with a `label` column; every other column is real.
/// An empty label cell yields an unlabeled sample.
pub fn read_generic<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedRow {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| Error::MalformedRow {
            line: 1,
            message: "header has no `label` column".into(),
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_col)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut classes = ClassRegistry::default();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(i + 2, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if rec.len() != headers.len() {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (col, field) in rec.iter().enumerate() {
            if col == label_col {
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
                line,
                message: format!("column `{}` is not numeric: `{field}`", &headers[col]),
            })?;
            row.push(v);
        }
        let raw = rec[label_col].trim();
        labels.push(if raw.is_empty() {
            None
        } else {
            Some(classes.intern(raw))
        });
        features.push(row);
    }
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    standardize(&mut features);

    let samples = features
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (features, label))| Sample {
            id: i as u64,
            features,
            label,
        })
        .collect();
    Ok(Dataset {
        samples,
        classes,
        feature_names,
    })
}

/// In-place z-score per column with population statistics. Constant
/// columns are centered only.
fn standardize(rows: &mut [Vec<f64>]) {
    let Some(width) = rows.first().map(Vec::len) else {
        return;
    };
    let n = rows.len() as f64;
    for c in 0..width {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        for r in rows.iter_mut() {
            r[c] = (r[c] - mean) / scale;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
    C,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::A, Group::B, Group::C];
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::A => "A",
            Group::B => "B",
            Group::C => "C",
        })
    }
}

/// Class names per group. Order within a group is preserved and becomes the
/// classifier's output order for group `A`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAssignment {
    pub c_a: Vec<String>,
    pub c_b: Vec<String>,
    pub c_c: Vec<String>,
}

impl ClassAssignment {
    pub fn new<S: Into<String>>(
        c_a: impl IntoIterator<Item = S>,
        c_b: impl IntoIterator<Item = S>,
        c_c: impl IntoIterator<Item = S>,
    ) -> Self {
        ClassAssignment {
            c_a: c_a.into_iter().map(Into::into).collect(),
            c_b: c_b.into_iter().map(Into::into).collect(),
            c_c: c_c.into_iter().map(Into::into).collect(),
        }
    }

    /// KDD Cup 99 assignment using the dataset's own label spellings.
    pub fn kdd() -> Self {
        ClassAssignment::new(
            ["back", "land", "pod", "smurf", "teardrop"],
            [
                "buffer_overflow",
                "ftp_write",
                "guess_passwd",
                "imap",
                "ipsweep",
                "perl",
                "portsweep",
                "rootkit",
                "satan",
                "warezclient",
            ],
            ["loadmodule", "multihop", "neptune", "nmap", "phf", "spy", "warezmaster"],
        )
    }

    /// Digit assignment for MNIST-style exports labelled `0`..`9`.
    pub fn mnist() -> Self {
        ClassAssignment::new(["0", "2", "4", "6", "8"], ["1", "3", "5"], ["7", "9"])
    }

    pub fn group(&self, g: Group) -> &[String] {
        match g {
            Group::A => &self.c_a,
            Group::B => &self.c_b,
            Group::C => &self.c_c,
        }
    }

    /// Names listed in more than one group (or twice within one).
    pub fn overlaps(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut dup = BTreeSet::new();
        for name in self.c_a.iter().chain(&self.c_b).chain(&self.c_c) {
            if !seen.insert(name.as_str()) {
                dup.insert(name.clone());
            }
        }
        dup.into_iter().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let dup = self.overlaps();
        if dup.is_empty() {
            Ok(())
        } else {
            Err(Error::OverlappingAssignment(dup))
        }
    }

    /// Maps the names onto `registry` ids.
    pub fn resolve(&self, registry: &ClassRegistry) -> Result<ResolvedAssignment> {
        self.validate()?;
        let missing: Vec<String> = self
            .c_a
            .iter()
            .chain(&self.c_b)
            .chain(&self.c_c)
            .filter(|n| registry.id_of(n).is_none())
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingClasses(missing));
        }
        let ids = |names: &[String]| -> Vec<usize> {
            names.iter().filter_map(|n| registry.id_of(n)).collect()
        };
        Ok(ResolvedAssignment {
            c_a: ids(&self.c_a),
            c_b: ids(&self.c_b),
            c_c: ids(&self.c_c),
        })
    }
}

/// Class ids per group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedAssignment {
    pub c_a: Vec<usize>,
    pub c_b: Vec<usize>,
    pub c_c: Vec<usize>,
}

impl ResolvedAssignment {
    pub fn group_of(&self, class: usize) -> Option<Group> {
        if self.c_a.contains(&class) {
            Some(Group::A)
        } else if self.c_b.contains(&class) {
            Some(Group::B)
        } else if self.c_c.contains(&class) {
            Some(Group::C)
        } else {
            None
        }
    }

    pub fn group(&self, g: Group) -> &[usize] {
        match g {
            Group::A => &self.c_a,
            Group::B => &self.c_b,
            Group::C => &self.c_c,
        }
    }
}

/// Per-class sample caps. A per-class entry overrides the group-wide cap.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    #[serde(default)]
    pub per_group: BTreeMap<Group, usize>,
    #[serde(default)]
    pub per_class: BTreeMap<String, usize>,
}

impl Caps {
    pub fn uniform(cap: usize) -> Self {
        Caps {
            per_group: Group::ALL.iter().map(|&g| (g, cap)).collect(),
            per_class: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.per_group.is_empty() && self.per_class.is_empty()
    }

    fn cap_for(&self, group: Group, class: &str) -> Option<usize> {
        self.per_class
            .get(class)
            .or_else(|| self.per_group.get(&group))
            .copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartitionOptions {
    pub caps: Option<Caps>,
    pub seed: u64,
    /// Route this class into a side pool instead of dropping it.
    pub keep_aside: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPartition {
    pub d_a: Vec<Sample>,
    pub d_b: Vec<Sample>,
    pub d_c: Vec<Sample>,
    /// Samples of the class named in `PartitionOptions::keep_aside`.
    pub aside: Vec<Sample>,
    pub assignment: ClassAssignment,
    pub resolved: ResolvedAssignment,
    pub classes: ClassRegistry,
    pub dimension: usize,
    pub a_train: Vec<usize>,
    pub a_test: Vec<usize>,
    pub seed: u64,
    pub caps: Option<Caps>,
    pub split: Option<SplitInfo>,
    /// Samples of classes absent from the assignment, by class name.
    pub dropped: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitInfo {
    pub ratio: f64,
    pub seed: u64,
}

pub fn partition_dataset(
    dataset: &Dataset,
    assignment: &ClassAssignment,
    options: &PartitionOptions,
) -> Result<DatasetPartition> {
    let resolved = assignment.resolve(&dataset.classes)?;
    let aside_id = options
        .keep_aside
        .as_deref()
        .and_then(|n| dataset.classes.id_of(n))
        .filter(|id| resolved.group_of(*id).is_none());

    let mut by_class: BTreeMap<usize, Vec<&Sample>> = BTreeMap::new();
    let mut dropped: BTreeMap<String, usize> = BTreeMap::new();
    let mut aside = Vec::new();
    for s in &dataset.samples {
        let Some(label) = s.label else { continue };
        if resolved.group_of(label).is_some() {
            by_class.entry(label).or_default().push(s);
        } else if Some(label) == aside_id {
            aside.push(s.clone());
        } else {
            let name = dataset.classes.name(label).unwrap_or("?").to_string();
            *dropped.entry(name).or_insert(0) += 1;
        }
    }
    if !dropped.is_empty() {
        log::info!(
            "dropped {} sample(s) of {} unassigned class(es)",
            dropped.values().sum::<usize>(),
            dropped.len()
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut out: BTreeMap<Group, Vec<Sample>> = BTreeMap::new();
    for (&class, members) in &by_class {
        let group = resolved.group_of(class).expect("routed above");
        let name = dataset.classes.name(class).unwrap_or("?");
        let cap = options.caps.as_ref().and_then(|c| c.cap_for(group, name));
        let chosen: Vec<&Sample> = match cap {
            Some(cap) if members.len() > cap => {
                let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, members.len(), cap).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| members[i]).collect()
            }
            _ => members.clone(),
        };
        out.entry(group).or_default().extend(chosen.into_iter().cloned());
    }
    let mut take = |g: Group| {
        let mut v = out.remove(&g).unwrap_or_default();
        v.sort_by_key(|s| s.id);
        v
    };

    Ok(DatasetPartition {
        d_a: take(Group::A),
        d_b: take(Group::B),
        d_c: take(Group::C),
        aside,
        assignment: assignment.clone(),
        resolved,
        classes: dataset.classes.clone(),
        dimension: dataset.dimension(),
        a_train: Vec::new(),
        a_test: Vec::new(),
        seed: options.seed,
        caps: options.caps.clone(),
        split: None,
        dropped,
    })
}

/// Stratified train/test split of group `A`.
///
/// The train total is `round(ratio * |A|)`, apportioned across classes by
/// largest remainder; every class keeps at least one sample on each side.
pub fn split_known(mut partition: DatasetPartition, ratio: f64, seed: u64) -> Result<DatasetPartition> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    if partition.d_a.is_empty() {
        return Err(Error::Empty("group A has no samples to split"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in partition.d_a.iter().enumerate() {
        by_class.entry(s.label()?).or_default().push(i);
    }
    for (&class, idx) in &by_class {
        if idx.len() < 2 {
            return Err(Error::CannotStratify {
                class: partition.classes.name(class).unwrap_or("?").to_string(),
                count: idx.len(),
            });
        }
    }

    let total = partition.d_a.len();
    let target = (ratio * total as f64).round() as usize;
    let mut quotas: Vec<(usize, usize, f64)> = by_class
        .iter()
        .map(|(&c, idx)| {
            let exact = ratio * idx.len() as f64;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(quotas[a].0.cmp(&quotas[b].0)));
    for &k in order.iter().take(target.saturating_sub(assigned)) {
        quotas[k].1 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(total - target);
    for (class, quota, _) in quotas {
        let mut idx = by_class[&class].clone();
        idx.shuffle(&mut rng);
        let quota = quota.clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..quota]);
        test.extend_from_slice(&idx[quota..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    partition.a_train = train;
    partition.a_test = test;
    partition.split = Some(SplitInfo { ratio, seed });
    Ok(partition)
}

impl DatasetPartition {
    pub fn group(&self, g: Group) -> &[Sample] {
        match g {
            Group::A => &self.d_a,
            Group::B => &self.d_b,
            Group::C => &self.d_c,
        }
    }

    pub fn train_samples(&self) -> Vec<&Sample> {
        self.a_train.iter().map(|&i| &self.d_a[i]).collect()
    }

    pub fn test_samples(&self) -> Vec<&Sample> {
        self.a_test.iter().map(|&i| &self.d_a[i]).collect()
    }

    /// Evaluation set: held-out `A` plus all of `B` and `C`, sorted by id.
    pub fn evaluation_set(&self) -> Vec<&Sample> {
        let mut v: Vec<&Sample> = self
            .test_samples()
            .into_iter()
            .chain(self.d_b.iter())
            .chain(self.d_c.iter())
            .collect();
        v.sort_by_key(|s| s.id);
        v
    }

    pub fn group_of_sample(&self, s: &Sample) -> Option<Group> {
        s.label.and_then(|l| self.resolved.group_of(l))
    }

    pub fn class_label(&self, id: usize) -> Option<ClassLabel> {
        self.classes.label(id)
    }

    /// Ordered class labels of group `A`.
    pub fn known_classes(&self) -> Vec<ClassLabel> {
        self.resolved
            .c_a
            .iter()
            .filter_map(|&id| self.classes.label(id))
            .collect()
    }

    pub fn class_counts(&self, g: Group) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> = self
            .assignment
            .group(g)
            .iter()
            .map(|n| (n.clone(), 0))
            .collect();
        for s in self.group(g) {
            if let Some(name) = s.label.and_then(|l| self.classes.name(l)) {
                *counts.entry(name.to_string()).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Canonical text manifest: seeds, caps, per-group per-class counts and
    /// sample-id ranges. Keys are sorted and lines end in LF.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# a2c partition manifest");
        let _ = writeln!(out, "seed = {}", self.seed);
        match &self.caps {
            None => {
                let _ = writeln!(out, "caps = none");
            }
            Some(caps) => {
                let groups: Vec<String> = caps.per_group.iter().map(|(g, n)| format!("{g}:{n}")).collect();
                let classes: Vec<String> = caps.per_class.iter().map(|(c, n)| format!("{c}:{n}")).collect();
                let _ = writeln!(out, "caps.group = {}", groups.join(","));
                let _ = writeln!(out, "caps.class = {}", classes.join(","));
            }
        }
        match self.split {
            Some(s) => {
                let _ = writeln!(out, "split.ratio = {}", s.ratio);
                let _ = writeln!(out, "split.seed = {}", s.seed);
            }
            None => {
                let _ = writeln!(out, "split = none");
            }
        }
        for g in Group::ALL {
            let samples = self.group(g);
            let _ = writeln!(out, "\n[{g}]");
            let _ = writeln!(out, "total = {}", samples.len());
            let mut ids_by_class: BTreeMap<String, Vec<u64>> = self
                .assignment
                .group(g)
                .iter()
                .map(|n| (n.clone(), Vec::new()))
                .collect();
            for s in samples {
                let name = s.label.and_then(|l| self.classes.name(l)).unwrap_or("?");
                ids_by_class.entry(name.to_string()).or_default().push(s.id);
            }
            for (name, ids) in ids_by_class {
                let _ = writeln!(out, "class.{name} = {} ids {}", ids.len(), format_ranges(&ids));
            }
        }
        if !self.a_train.is_empty() || !self.a_test.is_empty() {
            let as_u64 = |v: &[usize]| v.iter().map(|&i| i as u64).collect::<Vec<_>>();
            let _ = writeln!(out, "\n[A.split]");
            let _ = writeln!(out, "test = {} idx {}", self.a_test.len(), format_ranges(&as_u64(&self.a_test)));
            let _ = writeln!(out, "train = {} idx {}", self.a_train.len(), format_ranges(&as_u64(&self.a_train)));
        }
        if !self.aside.is_empty() {
            let ids: Vec<u64> = self.aside.iter().map(|s| s.id).collect();
            let _ = writeln!(out, "\n[aside]");
            let _ = writeln!(out, "total = {} ids {}", ids.len(), format_ranges(&ids));
        }
        let _ = writeln!(out, "\n[dropped]");
        for (name, n) in &self.dropped {
            let _ = writeln!(out, "class.{name} = {n}");
        }
        out
    }
}

/// `[0,1,2,5,7,8]` → `0-2,5,7-8`. Input must be sorted.
pub fn format_ranges(ids: &[u64]) -> String {
    let mut parts = Vec::new();
    let mut iter = ids.iter().copied().peekable();
    while let Some(start) = iter.next() {
        let mut end = start;
        while iter.peek() == Some(&(end + 1)) {
            end = iter.next().unwrap();
        }
        parts.push(if start == end {
            start.to_string()
        } else {
            format!("{start}-{end}")
        });
    }
    if parts.is_empty() {
        "-".into()
    } else {
        parts.join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kdd_row(protocol: &str, service: &str, flag: &str, src_bytes: f64, label: &str) -> String {
        let mut fields = vec!["0".to_string(), protocol.into(), service.into(), flag.into()];
        fields.push(src_bytes.to_string());
        for _ in 5..KDD_FEATURE_COUNT {
            fields.push("0".into());
        }
        fields.push(label.into());
        fields.join(",")
    }

    fn synthetic(classes: &[(&str, usize)]) -> Dataset {
        let mut reg = ClassRegistry::default();
        let mut samples = Vec::new();
        for (name, n) in classes {
            let id = reg.intern(name);
            for _ in 0..*n {
                samples.push(Sample {
                    id: samples.len() as u64,
                    features: vec![id as f64, 0.0],
                    label: Some(id),
                });
            }
        }
        Dataset {
            samples,
            classes: reg,
            feature_names: vec!["x".into(), "y".into()],
        }
    }

    #[test]
    fn kdd_label_dot_is_stripped() {
        let text = kdd_row("icmp", "ecr_i", "SF", 1032.0, "smurf.");
        let ds = read_kdd(text.as_bytes()).unwrap();
        assert_eq!(ds.classes.name(ds.samples[0].label.unwrap()), Some("smurf"));
    }

    #[test]
    fn kdd_one_hot_width_counts_observed_symbols() {
        let text = [
            kdd_row("icmp", "ecr_i", "SF", 1032.0, "smurf."),
            kdd_row("tcp", "private", "S0", 0.0, "neptune."),
            kdd_row("tcp", "http", "SF", 230.0, "normal."),
        ]
        .join("\n");
        let ds = read_kdd(text.as_bytes()).unwrap();
        // 38 numeric + 2 protocols + 3 services + 2 flags
        assert_eq!(ds.dimension(), 38 + 2 + 3 + 2);
        assert!(ds.samples.iter().all(|s| s.features.len() == ds.dimension()));
        assert_eq!(ds.classes.len(), 3);
        let ids: Vec<u64> = ds.samples.iter().map(|s| s.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn kdd_malformed_row_names_line() {
        let text = [kdd_row("tcp", "http", "SF", 1.0, "normal."), "0,tcp,http".to_string()].join("\n");
        match read_kdd(text.as_bytes()) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let bad_number = kdd_row("tcp", "http", "SF", 1.0, "normal.").replacen("0,", "x,", 1);
        assert!(matches!(
            read_kdd(bad_number.as_bytes()),
            Err(Error::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(matches!(read_kdd("".as_bytes()), Err(Error::EmptyDataset)));
        assert!(matches!(read_generic("a,b,label\n".as_bytes()), Err(Error::EmptyDataset)));
        assert!(matches!("parquet".parse::<DatasetFormat>(), Err(Error::UnknownFormat(_))));
    }

    #[test]
    fn generic_csv_numeric_only() {
        let text = "f1,f2,label,f3\n1,2,x,3\n2,3,y,4\n3,4,x,5\n4,5,z,6\n";
        let ds = read_generic(text.as_bytes()).unwrap();
        assert_eq!(ds.samples.len(), 4);
        assert_eq!(ds.dimension(), 3);
        assert_eq!(ds.feature_names, vec!["f1", "f2", "f3"]);
        assert_eq!(ds.classes.names(), &["x", "y", "z"]);
        // z-scored columns have zero mean
        for c in 0..3 {
            let m: f64 = ds.samples.iter().map(|s| s.features[c]).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn generic_csv_missing_label_column() {
        assert!(matches!(
            read_generic("a,b\n1,2\n".as_bytes()),
            Err(Error::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn partition_routes_by_label() {
        let ds = synthetic(&[("a", 100), ("b", 100), ("c", 100)]);
        let p = partition_dataset(&ds, &ClassAssignment::new(["a"], ["b"], ["c"]), &PartitionOptions::default()).unwrap();
        assert_eq!((p.d_a.len(), p.d_b.len(), p.d_c.len()), (100, 100, 100));
    }

    #[test]
    fn partition_with_empty_group_b() {
        let ds = synthetic(&[("a", 10), ("c", 10)]);
        let p = partition_dataset(
            &ds,
            &ClassAssignment::new(vec!["a"], Vec::<&str>::new(), vec!["c"]),
            &PartitionOptions::default(),
        )
        .unwrap();
        assert!(p.d_b.is_empty());
    }

    #[test]
    fn partition_errors() {
        let ds = synthetic(&[("a", 10), ("b", 10)]);
        match partition_dataset(&ds, &ClassAssignment::new(["a"], ["b"], ["zz"]), &PartitionOptions::default()) {
            Err(Error::MissingClasses(m)) => assert_eq!(m, vec!["zz"]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            partition_dataset(&ds, &ClassAssignment::new(["a"], ["a"], ["b"]), &PartitionOptions::default()),
            Err(Error::OverlappingAssignment(_))
        ));
    }

    #[test]
    fn partition_drops_unlisted_and_keeps_aside() {
        let ds = synthetic(&[("a", 5), ("b", 5), ("c", 5), ("normal", 7), ("other", 3)]);
        let opts = PartitionOptions {
            keep_aside: Some("normal".into()),
            ..Default::default()
        };
        let p = partition_dataset(&ds, &ClassAssignment::new(["a"], ["b"], ["c"]), &opts).unwrap();
        assert_eq!(p.aside.len(), 7);
        assert_eq!(p.dropped.get("other"), Some(&3));
        assert!(!p.dropped.contains_key("normal"));
    }

    #[test]
    fn caps_subsample_reproducibly() {
        let ds = synthetic(&[("a", 50), ("b", 50), ("c", 50)]);
        let opts = PartitionOptions {
            caps: Some(Caps::uniform(20)),
            seed: 9,
            keep_aside: None,
        };
        let asg = ClassAssignment::new(["a"], ["b"], ["c"]);
        let p1 = partition_dataset(&ds, &asg, &opts).unwrap();
        let p2 = partition_dataset(&ds, &asg, &opts).unwrap();
        assert_eq!(p1.d_a.len(), 20);
        assert_eq!(p1.manifest(), p2.manifest());
    }

    #[test]
    fn stratified_split_counts() {
        let names: Vec<String> = (0..5).map(|i| format!("k{i}")).collect();
        let spec: Vec<(&str, usize)> = names.iter().map(|n| (n.as_str(), 200)).collect();
        let ds = synthetic(&spec);
        let asg = ClassAssignment::new(names.clone(), Vec::<String>::new(), Vec::<String>::new());
        let p = partition_dataset(&ds, &asg, &PartitionOptions::default()).unwrap();
        let p = split_known(p, 0.8, 3).unwrap();
        assert_eq!((p.a_train.len(), p.a_test.len()), (800, 200));
        for class in 0..5 {
            let n = p.a_train.iter().filter(|&&i| p.d_a[i].label == Some(class)).count();
            assert_eq!(n, 160);
        }
        let again = split_known(partition_dataset(&ds, &asg, &PartitionOptions::default()).unwrap(), 0.8, 3).unwrap();
        assert_eq!(p.a_train, again.a_train);
        assert_eq!(p.a_test, again.a_test);
    }

    #[test]
    fn split_half_and_small_class_error() {
        let ds = synthetic(&[("a", 10)]);
        let asg = ClassAssignment::new(vec!["a"], Vec::<&str>::new(), Vec::<&str>::new());
        let p = split_known(partition_dataset(&ds, &asg, &PartitionOptions::default()).unwrap(), 0.5, 0).unwrap();
        assert_eq!((p.a_train.len(), p.a_test.len()), (5, 5));

        let ds = synthetic(&[("a", 10), ("b", 1)]);
        let asg = ClassAssignment::new(vec!["a", "b"], Vec::<&str>::new(), Vec::<&str>::new());
        let p = partition_dataset(&ds, &asg, &PartitionOptions::default()).unwrap();
        assert!(matches!(split_known(p, 0.8, 0), Err(Error::CannotStratify { .. })));
    }

    #[test]
    fn ranges_format() {
        assert_eq!(format_ranges(&[0, 1, 2, 5, 7, 8]), "0-2,5,7-8");
        assert_eq!(format_ranges(&[]), "-");
    }
}
