use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::data::io::{load_frame_likes, load_pairs, write_pairs};
use crate::data::{items_by_user, Dataset};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub seed: u64,
    /// Split each user's ratings separately instead of one global shuffle.
    pub per_user: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            train_frac: 0.7,
            valid_frac: 0.1,
            seed: 0,
            per_user: false,
        }
    }
}

/// Disjoint train / validation / test partition of a dataset's ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub base: Dataset,
    pub train: Vec<(usize, usize)>,
    pub valid: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    /// `(user, frame)` likes whose parent `(user, item)` is in `test`.
    pub frame_test: Vec<(usize, usize)>,
    /// Users that appear in validation or test but have no training rating.
    pub cold_users: Vec<usize>,
}

impl SplitDataset {
    /// Assembles a split from explicit parts and checks that it partitions the
    /// base ratings and that every frame like sits under a test pair.
    pub fn from_parts(
        base: Dataset,
        mut train: Vec<(usize, usize)>,
        mut valid: Vec<(usize, usize)>,
        mut test: Vec<(usize, usize)>,
        mut frame_test: Vec<(usize, usize)>,
    ) -> Result<Self> {
        for part in [&mut train, &mut valid, &mut test, &mut frame_test] {
            part.sort_unstable();
            part.dedup();
        }
        let mut all: Vec<(usize, usize)> =
            train.iter().chain(&valid).chain(&test).copied().collect();
        all.sort_unstable();
        let total = all.len();
        all.dedup();
        if all.len() != total {
            return Err(Error::Integrity(
                "train, validation and test overlap".into(),
            ));
        }
        if all != base.ratings() {
            return Err(Error::Integrity(
                "train, validation and test do not cover the dataset ratings".into(),
            ));
        }
        let test_set: HashSet<(usize, usize)> = test.iter().copied().collect();
        for &(a, k) in &frame_test {
            if k >= base.num_frames() || !test_set.contains(&(a, base.item_of_frame(k))) {
                return Err(Error::Integrity(format!(
                    "frame like ({a}, {k}) has no matching test pair"
                )));
            }
        }
        let cold_users = cold_users(base.num_users(), &train, valid.iter().chain(&test));
        Ok(SplitDataset {
            base,
            train,
            valid,
            test,
            frame_test,
            cold_users,
        })
    }

    /// Every rated item per user across all three splits.
    pub fn rated_by_user(&self) -> Vec<Vec<usize>> {
        self.base.items_by_user()
    }

    pub fn train_by_user(&self) -> Vec<Vec<usize>> {
        items_by_user(self.base.num_users(), &self.train)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.cold_users
            .iter()
            .map(|&a| {
                format!(
                    "user '{}' has no training ratings and is evaluated cold",
                    self.base.users().original(a)
                )
            })
            .collect()
    }
}

fn cold_users<'a>(
    num_users: usize,
    train: &[(usize, usize)],
    held_out: impl Iterator<Item = &'a (usize, usize)>,
) -> Vec<usize> {
    let mut has_train = vec![false; num_users];
    for &(a, _) in train {
        has_train[a] = true;
    }
    let mut cold: Vec<usize> = held_out
        .map(|&(a, _)| a)
        .filter(|&a| !has_train[a])
        .collect();
    cold.sort_unstable();
    cold.dedup();
    cold
}

fn counts(total: usize, train_frac: f64, valid_frac: f64) -> (usize, usize) {
    // The epsilon keeps products like 0.7 · 100 from flooring to 69.
    let n_train = (total as f64 * train_frac + 1e-9).floor() as usize;
    let n_valid = (total as f64 * valid_frac + 1e-9).floor() as usize;
    (n_train.min(total), n_valid.min(total - n_train.min(total)))
}

/// Randomly partitions the ratings: ⌊|R|·train_frac⌋ to train, ⌊|R|·valid_frac⌋
/// to validation and the remainder to test.
pub fn split_ratings(d: &Dataset, opts: SplitOptions) -> Result<SplitDataset> {
    let ok = |f: f64| f.is_finite() && f > 0.0;
    if !ok(opts.train_frac) || !ok(opts.valid_frac) || opts.train_frac + opts.valid_frac >= 1.0 {
        return Err(Error::Argument(format!(
            "need 0 < train_frac, valid_frac and train_frac + valid_frac < 1, got {} and {}",
            opts.train_frac, opts.valid_frac
        )));
    }
    let mut rng = seed::rng(seed::derive(opts.seed, "split"));
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    let mut assign = |mut pairs: Vec<(usize, usize)>, rng: &mut rand_chacha::ChaCha8Rng| {
        pairs.shuffle(rng);
        let (n_train, n_valid) = counts(pairs.len(), opts.train_frac, opts.valid_frac);
        train.extend_from_slice(&pairs[..n_train]);
        valid.extend_from_slice(&pairs[n_train..n_train + n_valid]);
        test.extend_from_slice(&pairs[n_train + n_valid..]);
    };
    if opts.per_user {
        for (a, items) in d.items_by_user().into_iter().enumerate() {
            assign(items.into_iter().map(|i| (a, i)).collect(), &mut rng);
        }
    } else {
        assign(d.ratings().to_vec(), &mut rng);
    }
    let test_set: HashSet<(usize, usize)> = test.iter().copied().collect();
    let frame_test = d
        .frame_likes()
        .iter()
        .copied()
        .filter(|&(a, k)| test_set.contains(&(a, d.item_of_frame(k))))
        .collect();
    SplitDataset::from_parts(d.clone(), train, valid, test, frame_test)
}

/// Writes `train.tsv`, `valid.tsv`, `test.tsv` and `frame_test.tsv` into `dir`.
pub fn write_split(dir: &Path, s: &SplitDataset) -> Result<()> {
    let d = &s.base;
    write_pairs(&dir.join("train.tsv"), &s.train, d.users(), d.items())?;
    write_pairs(&dir.join("valid.tsv"), &s.valid, d.users(), d.items())?;
    write_pairs(&dir.join("test.tsv"), &s.test, d.users(), d.items())?;
    write_pairs(
        &dir.join("frame_test.tsv"),
        &s.frame_test,
        d.users(),
        d.frames(),
    )
}

pub fn load_split(dir: &Path, base: Dataset) -> Result<SplitDataset> {
    let train = load_pairs(&dir.join("train.tsv"), &base)?;
    let valid = load_pairs(&dir.join("valid.tsv"), &base)?;
    let test = load_pairs(&dir.join("test.tsv"), &base)?;
    let frame_test = load_frame_likes(&dir.join("frame_test.tsv"), &base)?;
    SplitDataset::from_parts(base, train, valid, test, frame_test)
}
