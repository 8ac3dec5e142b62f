//! Canonical text layout.
//!
//! A split directory holds `train.tsv`, `valid.tsv` and `test.tsv`
//! (`user_id<TAB>item_id`, LF, no header), `users.txt` / `items.txt` with one
//! external id per line in index order, and `meta.txt` with `key=value` lines.
//! A plain interaction directory uses `interactions.tsv` instead of the three
//! parts.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DatasetSplit, InteractionSet};
use crate::error::{Error, Result};

pub const SPLIT_FORMAT_VERSION: u32 = 1;
const SPLIT_FORMAT: &str = "agtm-split";
const SET_FORMAT: &str = "agtm-interactions";

pub fn write_split(split: &DatasetSplit, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_ids(&dir.join("users.txt"), split.user_ids())?;
    write_ids(&dir.join("items.txt"), split.item_ids())?;
    write_pairs(&dir.join("train.tsv"), &split.train)?;
    write_pairs(&dir.join("valid.tsv"), &split.validation)?;
    write_pairs(&dir.join("test.tsv"), &split.test)?;
    let meta = [
        ("format", SPLIT_FORMAT.to_string()),
        ("version", SPLIT_FORMAT_VERSION.to_string()),
        ("seed", split.seed.to_string()),
        ("ratios", split.ratios.to_string()),
        ("dropped_validation", split.dropped_validation.to_string()),
        ("dropped_test", split.dropped_test.to_string()),
        ("n_users", split.n_users().to_string()),
        ("n_items", split.n_items().to_string()),
        ("n_train", split.train.len().to_string()),
        ("n_valid", split.validation.len().to_string()),
        ("n_test", split.test.len().to_string()),
    ];
    write_meta(&dir.join("meta.txt"), &meta)
}

pub fn read_split(dir: &Path) -> Result<DatasetSplit> {
    let meta = read_meta(&dir.join("meta.txt"), SPLIT_FORMAT)?;
    let user_ids = read_ids(&dir.join("users.txt"))?;
    let item_ids = read_ids(&dir.join("items.txt"))?;
    check_count(&meta, "n_users", user_ids.len())?;
    check_count(&meta, "n_items", item_ids.len())?;
    let train = read_pairs(&dir.join("train.tsv"), &user_ids, &item_ids)?;
    let validation = read_pairs(&dir.join("valid.tsv"), &user_ids, &item_ids)?;
    let test = read_pairs(&dir.join("test.tsv"), &user_ids, &item_ids)?;
    check_count(&meta, "n_train", train.len())?;
    check_count(&meta, "n_valid", validation.len())?;
    check_count(&meta, "n_test", test.len())?;
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed: meta_value(&meta, "seed")?,
        ratios: meta_value(&meta, "ratios")?,
        dropped_validation: meta_value(&meta, "dropped_validation")?,
        dropped_test: meta_value(&meta, "dropped_test")?,
    })
}

pub fn write_interaction_dir(set: &InteractionSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_ids(&dir.join("users.txt"), set.user_ids())?;
    write_ids(&dir.join("items.txt"), set.item_ids())?;
    write_pairs(&dir.join("interactions.tsv"), set)?;
    let meta = [
        ("format", SET_FORMAT.to_string()),
        ("version", SPLIT_FORMAT_VERSION.to_string()),
        ("n_users", set.n_users().to_string()),
        ("n_items", set.n_items().to_string()),
        ("n_interactions", set.len().to_string()),
    ];
    write_meta(&dir.join("meta.txt"), &meta)
}

pub fn read_interaction_dir(dir: &Path) -> Result<InteractionSet> {
    let meta = read_meta(&dir.join("meta.txt"), SET_FORMAT)?;
    let user_ids = read_ids(&dir.join("users.txt"))?;
    let item_ids = read_ids(&dir.join("items.txt"))?;
    let set = read_pairs(&dir.join("interactions.tsv"), &user_ids, &item_ids)?;
    check_count(&meta, "n_interactions", set.len())?;
    Ok(set)
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) {
        return Err(Error::Invalid(format!("id {id:?} cannot be stored in TSV")));
    }
    Ok(())
}

fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut out = String::new();
    for id in ids {
        check_id(id)?;
        out.push_str(id);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn write_pairs(path: &Path, set: &InteractionSet) -> Result<()> {
    let mut out = Vec::with_capacity(set.len() * 16);
    for &(u, i) in set.pairs() {
        writeln!(out, "{}\t{}", set.user_ids()[u], set.item_ids()[i]).expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_pairs(path: &Path, user_ids: &[String], item_ids: &[String]) -> Result<InteractionSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let users: HashMap<&str, usize> = user_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let items: HashMap<&str, usize> = item_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let (u, i) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected user<TAB>item".into()))?;
        let u = *users.get(u).ok_or_else(|| bad(format!("unknown user {u:?}")))?;
        let i = *items.get(i).ok_or_else(|| bad(format!("unknown item {i:?}")))?;
        pairs.push((u, i));
    }
    InteractionSet::new(user_ids.to_vec(), item_ids.to_vec(), pairs)
}

fn write_meta(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(&format!("{k}={v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_meta(path: &Path, expected_format: &str) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut meta = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: "expected key=value".into(),
        })?;
        meta.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    match meta.get("format") {
        Some(f) if f == expected_format => {}
        other => {
            return Err(Error::Format(format!(
                "{}: expected format {expected_format}, found {other:?}",
                path.display()
            )))
        }
    }
    let version: u32 = meta_value(&meta, "version")?;
    if version != SPLIT_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    Ok(meta)
}

fn meta_value<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    meta.get(key)
        .ok_or_else(|| Error::Format(format!("meta.txt missing {key}")))?
        .parse()
        .map_err(|_| Error::Format(format!("meta.txt: bad value for {key}")))
}

fn check_count(meta: &BTreeMap<String, String>, key: &str, actual: usize) -> Result<()> {
    let expected: usize = meta_value(meta, key)?;
    if expected != actual {
        return Err(Error::Format(format!(
            "meta.txt says {key}={expected} but found {actual}"
        )));
    }
    Ok(())
}
