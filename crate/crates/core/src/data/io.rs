//! Tab-separated dataset files.
//!
//! - ratings: `<user_id>\t<item_id>`
//! - frames: `<frame_id>\t<item_id>`
//! - features: `<frame_id>\t<v1> <v2> ... <vF>`
//! - frame likes: `<user_id>\t<frame_id>`
//!
//! Blank lines and lines starting with `#` are skipped.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{Dataset, IdMap};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

struct Record<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn records<'a>(path: &'a Path, text: &'a str) -> impl Iterator<Item = Result<Record<'a>>> + 'a {
    text.lines().enumerate().filter_map(move |(n, raw)| {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            return None;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg,
        };
        let Some((key, value)) = line.split_once('\t') else {
            return Some(Err(parse_err("expected two tab-separated fields".into())));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Some(Err(parse_err(format!("bad id '{key}'"))));
        }
        if value.is_empty() {
            return Some(Err(parse_err("empty second field".into())));
        }
        Some(Ok(Record {
            line: n + 1,
            key,
            value,
        }))
    })
}

fn pair_records(path: &Path) -> Result<Vec<(String, String)>> {
    let text = read(path)?;
    records(path, &text)
        .map(|r| {
            let r = r?;
            if r.value.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: r.line,
                    msg: format!("bad id '{}'", r.value),
                });
            }
            Ok((r.key.to_string(), r.value.to_string()))
        })
        .collect()
}

/// Loads the three dataset files plus an optional frame-likes file.
///
/// Items are the union of rated items and items named by the frames file, so
/// an item with frames but no ratings is kept as an unrated item.
pub fn load_dataset(
    ratings_path: &Path,
    frames_path: &Path,
    features_path: &Path,
    frame_likes_path: Option<&Path>,
) -> Result<Dataset> {
    let ratings = pair_records(ratings_path)?;
    let frame_links = pair_records(frames_path)?;

    let mut frame_to_item: BTreeMap<String, String> = BTreeMap::new();
    for (frame, item) in &frame_links {
        if let Some(prev) = frame_to_item.insert(frame.clone(), item.clone()) {
            if &prev != item {
                return Err(Error::Integrity(format!(
                    "frame '{frame}' belongs to both '{prev}' and '{item}'"
                )));
            }
        }
    }

    let text = read(features_path)?;
    let mut features: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut dim = None;
    for r in records(features_path, &text) {
        let r = r?;
        let values = r
            .value
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        path: features_path.to_path_buf(),
                        line: r.line,
                        msg: format!("bad feature value '{t}'"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let f = *dim.get_or_insert(values.len());
        if values.len() != f {
            return Err(Error::Integrity(format!(
                "{}:{}: feature dimension {} differs from {}",
                features_path.display(),
                r.line,
                values.len(),
                f
            )));
        }
        if !frame_to_item.contains_key(r.key) {
            return Err(Error::Integrity(format!(
                "features given for frame '{}' that is not in the frames file",
                r.key
            )));
        }
        if features.insert(r.key.to_string(), values).is_some() {
            return Err(Error::Integrity(format!(
                "duplicate features for frame '{}'",
                r.key
            )));
        }
    }

    let users = IdMap::from_ids(ratings.iter().map(|(u, _)| u.as_str()));
    let items = IdMap::from_ids(
        ratings
            .iter()
            .map(|(_, i)| i.as_str())
            .chain(frame_to_item.values().map(String::as_str)),
    );
    let frames = IdMap::from_ids(frame_to_item.keys().map(String::as_str));

    let f = dim.unwrap_or(0);
    let mut feats = Vec::with_capacity(frames.len() * f);
    let mut frame_item = Vec::with_capacity(frames.len());
    for id in frames.ids() {
        let row = features
            .get(id)
            .ok_or_else(|| Error::Integrity(format!("frame '{id}' has no features")))?;
        feats.extend_from_slice(row);
        frame_item.push(
            items
                .dense(&frame_to_item[id])
                .expect("item collected above"),
        );
    }
    let features = Matrix::from_vec(frames.len(), f, feats).expect("rows checked");

    let dense_ratings = ratings
        .iter()
        .map(|(u, i)| (users.dense(u).unwrap(), items.dense(i).unwrap()))
        .collect();

    let likes = match frame_likes_path {
        Some(p) => pair_records(p)?
            .into_iter()
            .map(|(u, k)| {
                let a = users.dense(&u).ok_or_else(|| {
                    Error::Integrity(format!("frame like for unknown user '{u}'"))
                })?;
                let k = frames.dense(&k).ok_or_else(|| {
                    Error::Integrity(format!("frame like for unknown frame '{k}'"))
                })?;
                Ok((a, k))
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };

    Dataset::new(
        users,
        items,
        frames,
        dense_ratings,
        frame_item,
        features,
        likes,
    )
}

/// Reads `(user, item)` pairs named by original ids and maps them onto `d`.
pub fn load_pairs(path: &Path, d: &Dataset) -> Result<Vec<(usize, usize)>> {
    pair_records(path)?
        .into_iter()
        .map(|(u, i)| match (d.users().dense(&u), d.items().dense(&i)) {
            (Some(a), Some(i)) => Ok((a, i)),
            _ => Err(Error::Integrity(format!(
                "{}: pair ({u}, {i}) not in dataset",
                path.display()
            ))),
        })
        .collect()
}

/// Reads `(user, frame)` likes named by original ids.
pub fn load_frame_likes(path: &Path, d: &Dataset) -> Result<Vec<(usize, usize)>> {
    pair_records(path)?
        .into_iter()
        .map(|(u, k)| match (d.users().dense(&u), d.frames().dense(&k)) {
            (Some(a), Some(k)) => Ok((a, k)),
            _ => Err(Error::Integrity(format!(
                "{}: frame like ({u}, {k}) not in dataset",
                path.display()
            ))),
        })
        .collect()
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes pairs as `<left>\t<right>` using the given id maps.
pub fn write_pairs(
    path: &Path,
    pairs: &[(usize, usize)],
    left: &IdMap,
    right: &IdMap,
) -> Result<()> {
    let mut text = String::new();
    for &(a, b) in pairs {
        text.push_str(left.original(a));
        text.push('\t');
        text.push_str(right.original(b));
        text.push('\n');
    }
    write_text(path, &text)
}

/// Writes `ratings.tsv`, `frames.tsv`, `features.tsv` and `frame_likes.tsv` into `dir`.
pub fn write_dataset(dir: &Path, d: &Dataset) -> Result<()> {
    write_pairs(&dir.join("ratings.tsv"), d.ratings(), d.users(), d.items())?;
    let links: Vec<(usize, usize)> = (0..d.num_frames())
        .map(|k| (k, d.item_of_frame(k)))
        .collect();
    write_pairs(&dir.join("frames.tsv"), &links, d.frames(), d.items())?;
    let mut text = String::new();
    for k in 0..d.num_frames() {
        text.push_str(d.frames().original(k));
        text.push('\t');
        let row: Vec<String> = d.features(k).iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    write_text(&dir.join("features.tsv"), &text)?;
    write_pairs(
        &dir.join("frame_likes.tsv"),
        d.frame_likes(),
        d.users(),
        d.frames(),
    )
}
