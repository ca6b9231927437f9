//! Users, items, frames and their interactions.
//!
//! Ids are dense (`0..M`, `0..N`, `0..L`) and follow the sorted order of the
//! original string ids, which are kept in an [`IdMap`] for output.

mod io;
mod split;
pub mod synth;

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use io::{
    load_dataset, load_frame_likes, load_pairs, write_dataset, write_pairs,
    write_text as write_text_file,
};
pub use split::{load_split, split_ratings, write_split, SplitDataset, SplitOptions};
pub use synth::{generate_synthetic, PlantedParams, SynthConfig};

/// Bijection between original string ids and dense indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    /// Sorts and deduplicates `ids`; dense index = sorted position.
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        ids.sort();
        ids.dedup();
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        IdMap { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dense(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn original(&self, dense: usize) -> &str {
        &self.ids[dense]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    users: IdMap,
    items: IdMap,
    frames: IdMap,
    /// Sorted, unique `(user, item)` positives.
    ratings: Vec<(usize, usize)>,
    item_frames: Vec<Vec<usize>>,
    frame_item: Vec<usize>,
    /// L × F, row k is `c_k`.
    features: Matrix,
    /// Sorted, unique `(user, frame)` likes. Evaluation ground truth only.
    frame_likes: Vec<(usize, usize)>,
}

impl Dataset {
    /// Builds a dataset from dense parts and checks every invariant.
    pub fn new(
        users: IdMap,
        items: IdMap,
        frames: IdMap,
        mut ratings: Vec<(usize, usize)>,
        frame_item: Vec<usize>,
        features: Matrix,
        mut frame_likes: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let (m, n, l) = (users.len(), items.len(), frames.len());
        if frame_item.len() != l {
            return Err(Error::Integrity(format!(
                "{} frames but {} frame-item links",
                l,
                frame_item.len()
            )));
        }
        if features.rows() != l {
            return Err(Error::Integrity(format!(
                "{} frames but {} feature rows",
                l,
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Integrity("non-finite frame feature".into()));
        }
        let mut item_frames = vec![Vec::new(); n];
        for (k, &i) in frame_item.iter().enumerate() {
            if i >= n {
                return Err(Error::Integrity(format!(
                    "frame {k} links to item {i} out of range"
                )));
            }
            item_frames[i].push(k);
        }
        ratings.sort_unstable();
        ratings.dedup();
        for &(a, i) in &ratings {
            if a >= m || i >= n {
                return Err(Error::Integrity(format!("rating ({a}, {i}) out of range")));
            }
            if item_frames[i].is_empty() {
                return Err(Error::Integrity(format!(
                    "rated item '{}' has no frames",
                    items.original(i)
                )));
            }
        }
        frame_likes.sort_unstable();
        frame_likes.dedup();
        for &(a, k) in &frame_likes {
            if a >= m || k >= l {
                return Err(Error::Integrity(format!(
                    "frame like ({a}, {k}) out of range"
                )));
            }
        }
        Ok(Dataset {
            users,
            items,
            frames,
            ratings,
            item_frames,
            frame_item,
            features,
            frame_likes,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn frames(&self) -> &IdMap {
        &self.frames
    }

    pub fn ratings(&self) -> &[(usize, usize)] {
        &self.ratings
    }

    pub fn frame_likes(&self) -> &[(usize, usize)] {
        &self.frame_likes
    }

    /// Frames of `item` in ascending dense id order.
    pub fn frames_of(&self, item: usize) -> &[usize] {
        &self.item_frames[item]
    }

    pub fn item_of_frame(&self, frame: usize) -> usize {
        self.frame_item[frame]
    }

    pub fn features(&self, frame: usize) -> &[f64] {
        self.features.row(frame)
    }

    pub fn feature_matrix(&self) -> &Matrix {
        &self.features
    }

    /// Positives per user, each list sorted.
    pub fn items_by_user(&self) -> Vec<Vec<usize>> {
        items_by_user(self.num_users(), &self.ratings)
    }

    /// SHA-256 over the three id maps; ties checkpoints to a dataset.
    pub fn id_digest(&self) -> String {
        let mut h = Sha256::new();
        for (tag, map) in [
            ("users", &self.users),
            ("items", &self.items),
            ("frames", &self.frames),
        ] {
            h.update(tag.as_bytes());
            h.update((map.len() as u64).to_le_bytes());
            for id in map.ids() {
                h.update((id.len() as u64).to_le_bytes());
                h.update(id.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Keeps only the flagged users and items (and the frames of kept items),
    /// re-indexing densely in the original order.
    fn restrict(&self, keep_user: &[bool], keep_item: &[bool]) -> Result<Dataset> {
        let remap = |keep: &[bool]| -> Vec<Option<usize>> {
            let mut next = 0;
            keep.iter()
                .map(|&k| {
                    k.then(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        let user_map = remap(keep_user);
        let item_map = remap(keep_item);
        let keep_frame: Vec<bool> = self.frame_item.iter().map(|&i| keep_item[i]).collect();
        let frame_map = remap(&keep_frame);

        let pick = |map: &IdMap, keep: &[bool]| {
            IdMap::from_ids(
                map.ids()
                    .iter()
                    .zip(keep)
                    .filter(|(_, &k)| k)
                    .map(|(s, _)| s.clone()),
            )
        };
        let users = pick(&self.users, keep_user);
        let items = pick(&self.items, keep_item);
        let frames = pick(&self.frames, &keep_frame);

        let ratings = self
            .ratings
            .iter()
            .filter_map(|&(a, i)| Some((user_map[a]?, item_map[i]?)))
            .collect();
        let mut frame_item = Vec::with_capacity(frames.len());
        let mut feats = Vec::with_capacity(frames.len() * self.feature_dim());
        for (k, &i) in self.frame_item.iter().enumerate() {
            if let Some(ni) = item_map[i] {
                frame_item.push(ni);
                feats.extend_from_slice(self.features.row(k));
            }
        }
        let features = Matrix::from_vec(frame_item.len(), self.feature_dim(), feats)
            .expect("feature rows match kept frames");
        let frame_likes = self
            .frame_likes
            .iter()
            .filter_map(|&(a, k)| Some((user_map[a]?, frame_map[k]?)))
            .collect();
        Dataset::new(
            users,
            items,
            frames,
            ratings,
            frame_item,
            features,
            frame_likes,
        )
    }
}

pub(crate) fn items_by_user(num_users: usize, pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); num_users];
    for &(a, i) in pairs {
        out[a].push(i);
    }
    for list in &mut out {
        list.sort_unstable();
    }
    out
}

/// Repeatedly drops users and items with fewer than `min_count` ratings until
/// nothing changes. Frames of dropped items go with them.
pub fn prune_dataset(d: &Dataset, min_count: usize) -> Result<Dataset> {
    if min_count == 0 {
        return Err(Error::Argument("min_count must be at least 1".into()));
    }
    let mut keep_user = vec![true; d.num_users()];
    let mut keep_item = vec![true; d.num_items()];
    loop {
        let mut user_count = vec![0usize; d.num_users()];
        let mut item_count = vec![0usize; d.num_items()];
        for &(a, i) in d.ratings() {
            if keep_user[a] && keep_item[i] {
                user_count[a] += 1;
                item_count[i] += 1;
            }
        }
        let mut changed = false;
        for (k, c) in keep_user.iter_mut().zip(&user_count) {
            if *k && *c < min_count {
                *k = false;
                changed = true;
            }
        }
        for (k, c) in keep_item.iter_mut().zip(&item_count) {
            if *k && *c < min_count {
                *k = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let out = d.restrict(&keep_user, &keep_item)?;
    if out.ratings().is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no ratings survive pruning at min_count = {min_count}"
        )));
    }
    Ok(out)
}
