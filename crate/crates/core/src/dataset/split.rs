//! Patient-disjoint train/validation/test partitioning.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::PatientScoped;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Val,
    Test,
}

impl SplitRole {
    pub const ALL: [SplitRole; 3] = [SplitRole::Train, SplitRole::Val, SplitRole::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Val => "val",
            SplitRole::Test => "test",
        }
    }
}

/// Target image counts per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// Counts in the 120 / 20 / 22 proportion, scaled to `total` images.
    pub fn scaled(total: usize, seed: u64) -> Self {
        let train_count = (total as f64 * 120.0 / 162.0).round() as usize;
        let val_count = ((total as f64 * 20.0 / 162.0).round() as usize).min(total - train_count);
        Self {
            train_count,
            val_count,
            test_count: total - train_count - val_count,
            seed,
        }
    }

    fn target(&self, role: SplitRole) -> usize {
        match role {
            SplitRole::Train => self.train_count,
            SplitRole::Val => self.val_count,
            SplitRole::Test => self.test_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
    /// Patients assigned to a split. Patients left over once every target
    /// is met are absent.
    pub assignment: BTreeMap<String, SplitRole>,
}

impl<T> CorpusSplit<T> {
    pub fn get(&self, role: SplitRole) -> &[T] {
        match role {
            SplitRole::Train => &self.train,
            SplitRole::Val => &self.val,
            SplitRole::Test => &self.test,
        }
    }
}

/// Greedy largest-patient-first assignment: each patient goes to the split
/// with the largest remaining deficit. Equal-sized patients are ordered by a
/// seeded shuffle.
pub fn split_corpus<T: Clone + PatientScoped>(corpus: &[T], spec: &SplitSpec) -> Result<CorpusSplit<T>> {
    let requested = spec.train_count + spec.val_count + spec.test_count;
    if requested > corpus.len() {
        return Err(Error::InfeasibleSplit(format!(
            "requested {requested} images but the corpus holds {} (shortfall {})",
            corpus.len(),
            requested - corpus.len()
        )));
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (idx, item) in corpus.iter().enumerate() {
        groups.entry(item.patient_id()).or_default().push(idx);
    }
    let mut order: Vec<(&str, Vec<usize>)> = groups.into_iter().collect();
    order.shuffle(&mut rng::stream(spec.seed, "split"));
    order.sort_by_key(|g| std::cmp::Reverse(g.1.len()));

    let mut filled = [0usize; 3];
    let mut out = CorpusSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        assignment: BTreeMap::new(),
    };
    for (patient, members) in order {
        let deficit = |r: SplitRole| spec.target(r) as i64 - filled[r as usize] as i64;
        let role = SplitRole::ALL
            .into_iter()
            .max_by(|&a, &b| deficit(a).cmp(&deficit(b)).then((b as usize).cmp(&(a as usize))))
            .expect("three roles");
        if deficit(role) <= 0 {
            break;
        }
        filled[role as usize] += members.len();
        out.assignment.insert(patient.to_string(), role);
        let bucket = match role {
            SplitRole::Train => &mut out.train,
            SplitRole::Val => &mut out.val,
            SplitRole::Test => &mut out.test,
        };
        bucket.extend(members.into_iter().map(|i| corpus[i].clone()));
    }

    for role in SplitRole::ALL {
        let want = spec.target(role);
        if want > 0 && filled[role as usize] == 0 {
            return Err(Error::InfeasibleSplit(format!(
                "{} split received 0 of {want} requested images (shortfall {want}); patient groups are too large",
                role.name()
            )));
        }
    }
    Ok(out)
}
