use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, TripletSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn is_valid(&self) -> bool {
        let parts = [self.train, self.validation, self.test];
        parts.iter().all(|r| r.is_finite() && *r >= 0.0) && (parts.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<TripletSample>,
    pub validation: Vec<TripletSample>,
    pub test: Vec<TripletSample>,
    pub project_assignment: BTreeMap<String, Partition>,
}

impl DatasetSplit {
    pub fn partition(&self, p: Partition) -> &[TripletSample] {
        match p {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }

    pub fn projects(&self, p: Partition) -> BTreeSet<&str> {
        self.project_assignment
            .iter()
            .filter(|(_, part)| **part == p)
            .map(|(name, _)| name.as_str())
            .collect()
    }
}

/// Shuffles projects with `seed` and cuts them by ratio. Validation and test
/// always get at least one project; every triplet of a project lands in the
/// partition of its project.
pub fn split_by_project(
    triplets: Vec<TripletSample>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit, DatasetError> {
    let mut projects: Vec<String> = triplets
        .iter()
        .map(|t| t.project.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = projects.len();
    if n < 3 {
        return Err(DatasetError::TooFewProjects(n));
    }
    projects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * ratios.validation).round() as usize).max(1);
    let n_test = ((n as f64 * ratios.test).round() as usize).max(1);
    let n_train = n.saturating_sub(n_val + n_test).max(1);
    let n_val = n_val.min(n - n_train - 1);

    let mut split = DatasetSplit::default();
    for (i, project) in projects.into_iter().enumerate() {
        let part = if i < n_train {
            Partition::Train
        } else if i < n_train + n_val {
            Partition::Validation
        } else {
            Partition::Test
        };
        split.project_assignment.insert(project, part);
    }
    for t in triplets {
        match split.project_assignment[&t.project] {
            Partition::Train => split.train.push(t),
            Partition::Validation => split.validation.push(t),
            Partition::Test => split.test.push(t),
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BlockOrigin, CodeBlock};

    pub(crate) fn triplet(project: &str) -> TripletSample {
        let block = CodeBlock {
            todo_text: "TODO: a b".into(),
            centrepiece: "x = 1".into(),
            context: vec![],
            origin: BlockOrigin {
                project: project.into(),
                file: "f.py".into(),
                commit: String::new(),
                method: "m".into(),
                centre_line: 1,
                todo_line: None,
            },
        };
        TripletSample {
            group_id: "g".into(),
            project: project.into(),
            anchor: block.clone(),
            positive: block.clone(),
            negative: block,
        }
    }

    #[test]
    fn ten_projects_split_eight_one_one() {
        let triplets = (0..10).map(|i| triplet(&format!("p{i}"))).collect();
        let split = split_by_project(triplets, SplitRatios::default(), 5).unwrap();
        assert_eq!(split.projects(Partition::Train).len(), 8);
        assert_eq!(split.projects(Partition::Validation).len(), 1);
        assert_eq!(split.projects(Partition::Test).len(), 1);
    }

    #[test]
    fn one_project_is_too_few() {
        assert!(matches!(
            split_by_project(vec![triplet("a"), triplet("a")], SplitRatios::default(), 1),
            Err(DatasetError::TooFewProjects(1))
        ));
    }

    #[test]
    fn three_projects_one_each() {
        let split = split_by_project(vec![triplet("a"), triplet("b"), triplet("c")], SplitRatios::default(), 9).unwrap();
        for p in [Partition::Train, Partition::Validation, Partition::Test] {
            assert_eq!(split.projects(p).len(), 1);
        }
    }

    #[test]
    fn same_seed_same_assignment() {
        let make = || (0..12).map(|i| triplet(&format!("p{i}"))).collect::<Vec<_>>();
        let a = split_by_project(make(), SplitRatios::default(), 77).unwrap();
        let b = split_by_project(make(), SplitRatios::default(), 77).unwrap();
        assert_eq!(a.project_assignment, b.project_assignment);
    }

    #[test]
    fn ratio_validation() {
        assert!(SplitRatios::default().is_valid());
        assert!(!SplitRatios { train: 0.8, validation: 0.1, test: 0.2 }.is_valid());
    }
}
