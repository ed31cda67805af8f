use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchCoord {
    pub image_id: String,
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

/// Frozen record of image-level splits, patch coordinates and the LR seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub fractions: (f64, f64, f64),
    pub split_seed: u64,
    pub assignments: BTreeMap<String, Split>,
    pub lr_seed: u64,
    pub patches: Vec<PatchCoord>,
}

/// Floor each share, then hand the leftover images to the largest
/// fractional remainders (ties go to the earlier split).
pub fn split_counts(n: usize, fractions: (f64, f64, f64)) -> [usize; 3] {
    let f = [fractions.0, fractions.1, fractions.2];
    let exact: Vec<f64> = f.iter().map(|p| p * n as f64).collect();
    let mut counts: [usize; 3] = [0; 3];
    for i in 0..3 {
        counts[i] = (exact[i] + 1e-9).floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>().min(n);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if f[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

pub fn split_scanlines(
    image_ids: &[String],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|p| !(*p >= 0.0 && p.is_finite())) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(
            "split.fractions",
            format!("fractions must be nonnegative and sum to 1, got {fractions:?}"),
        ));
    }
    let wanted = f.iter().filter(|p| **p > 0.0).count();
    if image_ids.len() < wanted {
        return Err(Error::Contract(format!(
            "{} images cannot fill {wanted} splits",
            image_ids.len()
        )));
    }
    let mut unique = image_ids.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() != image_ids.len() {
        return Err(Error::Contract("duplicate image ids".into()));
    }
    let mut order = image_ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let counts = split_counts(order.len(), fractions);
    let mut assignments = BTreeMap::new();
    let mut it = order.into_iter();
    for (split, n) in Split::ALL.into_iter().zip(counts) {
        for id in it.by_ref().take(n) {
            assignments.insert(id, split);
        }
    }
    Ok(DatasetManifest {
        fractions,
        split_seed: seed,
        assignments,
        lr_seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1),
        patches: Vec::new(),
    })
}

impl DatasetManifest {
    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.assignments.get(id).copied()
    }

    pub fn ids_in(&self, split: Split) -> Vec<String> {
        self.assignments
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn patches_in(&self, split: Split) -> Vec<(usize, &PatchCoord)> {
        self.patches
            .iter()
            .enumerate()
            .filter(|(_, p)| self.split_of(&p.image_id) == Some(split))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("orbit{i:03}")).collect()
    }

    #[test]
    fn twenty_images() {
        assert_eq!(split_counts(20, (0.65, 0.2, 0.15)), [13, 4, 3]);
        let m = split_scanlines(&ids(20), (0.65, 0.2, 0.15), 3).unwrap();
        assert_eq!(m.ids_in(Split::Train).len(), 13);
        assert_eq!(m.ids_in(Split::Val).len(), 4);
        assert_eq!(m.ids_in(Split::Test).len(), 3);
    }

    #[test]
    fn deterministic_by_seed() {
        let a = split_scanlines(&ids(20), (0.65, 0.2, 0.15), 11).unwrap();
        let b = split_scanlines(&ids(20), (0.65, 0.2, 0.15), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn all_train() {
        let m = split_scanlines(&ids(5), (1.0, 0.0, 0.0), 0).unwrap();
        assert_eq!(m.ids_in(Split::Train).len(), 5);
    }

    #[test]
    fn too_few_images() {
        assert!(split_scanlines(&ids(2), (0.65, 0.2, 0.15), 0).is_err());
        assert!(split_scanlines(&ids(5), (0.5, 0.2, 0.2), 0).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_and_exhaustive(n in 3usize..60, seed in 0u64..1000, a in 0.1f64..0.8, b in 0.05f64..0.5) {
            prop_assume!(a + b < 0.95);
            let f = (a, b, 1.0 - a - b);
            let m = split_scanlines(&ids(n), f, seed).unwrap();
            prop_assert_eq!(m.assignments.len(), n);
            let total: usize = Split::ALL.iter().map(|s| m.ids_in(*s).len()).sum();
            prop_assert_eq!(total, n);
            let counts = split_counts(n, f);
            for (i, s) in Split::ALL.iter().enumerate() {
                prop_assert_eq!(m.ids_in(*s).len(), counts[i]);
                let exact = [f.0, f.1, f.2][i] * n as f64;
                prop_assert!((counts[i] as f64 - exact).abs() < 1.0 + 1e-9);
            }
        }
    }
}
