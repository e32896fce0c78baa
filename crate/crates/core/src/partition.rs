use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partition of source indices `0..k` into non-empty disjoint subsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    subsets: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(subsets: Vec<Vec<usize>>, k: usize) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (m, subset) in subsets.iter().enumerate() {
            if subset.is_empty() {
                return Err(Error::config(format!("partition subset {m} is empty")));
            }
            for &i in subset {
                if i >= k {
                    return Err(Error::config(format!(
                        "partition index {i} out of range for {k} sources"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::config(format!(
                        "source {i} appears in more than one partition subset"
                    )));
                }
            }
        }
        if seen.len() != k {
            let missing: Vec<_> = (0..k).filter(|i| !seen.contains(i)).collect();
            return Err(Error::config(format!(
                "partition does not cover sources {missing:?}"
            )));
        }
        Ok(Self { subsets })
    }

    pub fn singletons(k: usize) -> Self {
        Self {
            subsets: (0..k).map(|i| vec![i]).collect(),
        }
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn n_sources(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_cover_and_disjointness() {
        assert!(Partition::new(vec![vec![0, 2], vec![1]], 3).is_ok());
        assert!(Partition::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(Partition::new(vec![vec![0], vec![]], 1).is_err());
        assert!(Partition::new(vec![vec![0]], 2).is_err());
        assert!(Partition::new(vec![vec![0, 3]], 2).is_err());
        assert_eq!(Partition::singletons(4).len(), 4);
    }
}
