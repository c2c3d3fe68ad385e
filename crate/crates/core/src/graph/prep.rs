//! Preparation of raw interaction logs into dense-id train/test splits.
//!
//! Raw logs (e.g. MovieLens rating files) carry arbitrary ids. They are
//! remapped to dense 0-based ids here, and the mapping is kept in [`IdMap`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Dense id -> raw id, for users and items.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    pub users: Vec<u64>,
    pub items: Vec<u64>,
}

impl IdMap {
    /// Writes `kind raw_id dense_id` lines.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (dense, raw) in self.users.iter().enumerate() {
            writeln!(w, "user {raw} {dense}")?;
        }
        for (dense, raw) in self.items.iter().enumerate() {
            writeln!(w, "item {raw} {dense}")?;
        }
        Ok(())
    }
}

/// Reads `(user, item)` pairs from a delimited interaction log.
///
/// The first two whitespace-separated columns are taken as user and item ids;
/// further columns (ratings, timestamps) are ignored. A non-numeric first line
/// is treated as a header.
pub fn read_interaction_log(path: &Path) -> Result<Vec<(u64, u64)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let mut cols = line.split_whitespace();
        let (Some(u), Some(i)) = (cols.next(), cols.next()) else {
            continue;
        };
        match (u.parse::<u64>(), i.parse::<u64>()) {
            (Ok(u), Ok(i)) => pairs.push((u, i)),
            _ if idx == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("expected integer user and item ids, found {line:?}"),
                })
            }
        }
    }
    Ok(pairs)
}

/// Keeps the `max_items` highest-degree items, then the `max_users`
/// highest-degree users among the remaining interactions, and remaps both to
/// dense ids ordered by raw id. Degree ties go to the smaller raw id.
pub fn subsample_top_degree(
    pairs: &[(u64, u64)],
    max_users: usize,
    max_items: usize,
) -> (Vec<(u32, u32)>, IdMap) {
    let mut pairs = pairs.to_vec();
    pairs.sort_unstable();
    pairs.dedup();

    let keep_items = top_by_degree(pairs.iter().map(|p| p.1), max_items);
    pairs.retain(|p| keep_items.contains_key(&p.1));
    let keep_users = top_by_degree(pairs.iter().map(|p| p.0), max_users);
    pairs.retain(|p| keep_users.contains_key(&p.0));

    let users = dense_ids(pairs.iter().map(|p| p.0));
    let items = dense_ids(pairs.iter().map(|p| p.1));
    let remapped = pairs
        .iter()
        .map(|(u, i)| (users[u], items[i]))
        .collect();
    (remapped, IdMap { users: sorted_keys(&users), items: sorted_keys(&items) })
}

fn top_by_degree(ids: impl Iterator<Item = u64>, keep: usize) -> HashMap<u64, usize> {
    let mut degree: HashMap<u64, usize> = HashMap::new();
    for id in ids {
        *degree.entry(id).or_default() += 1;
    }
    let mut ranked: Vec<(u64, usize)> = degree.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(keep);
    ranked.into_iter().collect()
}

fn dense_ids(ids: impl Iterator<Item = u64>) -> HashMap<u64, u32> {
    let mut raw: Vec<u64> = ids.collect();
    raw.sort_unstable();
    raw.dedup();
    raw.into_iter().enumerate().map(|(d, r)| (r, d as u32)).collect()
}

fn sorted_keys(map: &HashMap<u64, u32>) -> Vec<u64> {
    let mut out = vec![0; map.len()];
    for (&raw, &dense) in map {
        out[dense as usize] = raw;
    }
    out
}

/// Random per-user holdout: each user's items are shuffled and
/// `round(test_fraction * n)` of them go to test, always leaving at least one
/// train item.
pub fn split_per_user(
    pairs: &[(u32, u32)],
    num_users: usize,
    num_items: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Contract(format!(
            "test fraction {test_fraction} outside [0, 1)"
        )));
    }
    let mut lists = vec![Vec::new(); num_users];
    for &(u, i) in pairs {
        lists[u as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = vec![Vec::new(); num_users];
    for (items, held) in lists.iter_mut().zip(test.iter_mut()) {
        items.sort_unstable();
        items.dedup();
        items.shuffle(&mut rng);
        let n_test = ((items.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.min(items.len().saturating_sub(1));
        *held = items.split_off(items.len() - n_test);
    }
    Dataset::new(num_users, num_items, lists, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_keeps_top_degree_and_remaps() {
        // item 10 has degree 3, item 20 degree 2, item 30 degree 1
        let pairs = [(5, 10), (6, 10), (7, 10), (5, 20), (6, 20), (7, 30)];
        let (dense, map) = subsample_top_degree(&pairs, 2, 2);
        assert_eq!(map.items, vec![10, 20]);
        assert_eq!(map.users, vec![5, 6]);
        assert_eq!(dense, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn split_holds_out_fraction_and_keeps_one_train_item() {
        let pairs: Vec<(u32, u32)> = (0..10).map(|i| (0, i)).chain([(1, 3)]).collect();
        let ds = split_per_user(&pairs, 2, 10, 0.2, 1).unwrap();
        assert_eq!(ds.train_items(0).len(), 8);
        assert_eq!(ds.test_items(0).len(), 2);
        assert_eq!(ds.train_items(1), &[3]);
        assert!(ds.test_items(1).is_empty());
        // deterministic for a fixed seed
        assert_eq!(split_per_user(&pairs, 2, 10, 0.2, 1).unwrap(), ds);
    }

    #[test]
    fn header_line_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.inter");
        std::fs::write(&p, "user_id:token\titem_id:token\n1\t2\t5\n3\t4\t1\n").unwrap();
        assert_eq!(read_interaction_log(&p).unwrap(), vec![(1, 2), (3, 4)]);
    }
}
