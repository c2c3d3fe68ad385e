use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"BGDS";
pub const DATASET_VERSION: u16 = 1;

/// Parsed adjacency-list file: one `user item item ...` line per user.
struct ListFile {
    lists: Vec<Vec<u32>>,
    max_item: Option<u32>,
}

fn parse_list_file(path: &Path) -> Result<ListFile> {
    let reader = BufReader::new(File::open(path)?);
    let mut lists: Vec<Vec<u32>> = Vec::new();
    let mut max_item = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else { continue };
        let parse = |tok: &str| -> Result<u32> {
            tok.parse::<u32>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("expected a non-negative integer id, found {tok:?}"),
            })
        };
        let user = parse(first)? as usize;
        if user >= lists.len() {
            lists.resize(user + 1, Vec::new());
        }
        for tok in tokens {
            let item = parse(tok)?;
            max_item = max_item.max(Some(item));
            lists[user].push(item);
        }
    }
    Ok(ListFile { lists, max_item })
}

/// Loads a train/test split given as adjacency-list text files.
///
/// `M` and `N` are one past the largest user and item ids seen in either file.
pub fn load_dataset(train_path: &Path, test_path: &Path) -> Result<Dataset> {
    let train = parse_list_file(train_path)?;
    let test = parse_list_file(test_path)?;
    if train.max_item.is_none() {
        return Err(Error::InvalidDataset(format!(
            "{} contains no interactions",
            train_path.display()
        )));
    }
    let num_users = train.lists.len().max(test.lists.len());
    let num_items = train.max_item.max(test.max_item).map_or(0, |m| m as usize + 1);
    Dataset::new(num_users, num_items, train.lists, test.lists)
}

impl Dataset {
    /// Writes the split back as adjacency-list text; users with no items are
    /// written as a bare id so the universe size survives a reload.
    pub fn write_text(&self, train_path: &Path, test_path: &Path) -> Result<()> {
        write_lists(train_path, &self.train)?;
        write_lists(test_path, &self.test)
    }
}

fn write_lists(path: &Path, lists: &[Vec<u32>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (u, items) in lists.iter().enumerate() {
        write!(w, "{u}")?;
        for i in items {
            write!(w, " {i}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Binary dataset cache.
///
/// Layout (little-endian): magic `BGDS`, version `u16`, `M: u32`, `N: u32`,
/// train edge count `u64`, test edge count `u64`, then the train and test
/// `(user: u32, item: u32)` pairs in (user, item) order.
pub fn write_dataset_cache<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(ds.num_users as u32).to_le_bytes())?;
    w.write_all(&(ds.num_items as u32).to_le_bytes())?;
    w.write_all(&(ds.num_train() as u64).to_le_bytes())?;
    w.write_all(&(ds.num_test() as u64).to_le_bytes())?;
    for lists in [&ds.train, &ds.test] {
        for (u, items) in lists.iter().enumerate() {
            for &i in items {
                w.write_all(&(u as u32).to_le_bytes())?;
                w.write_all(&i.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_cache<R: Read>(r: R) -> Result<Dataset> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format(format!("bad dataset magic {magic:?}")));
    }
    let version = read_u16(&mut r)?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let num_users = read_u32(&mut r)? as usize;
    let num_items = read_u32(&mut r)? as usize;
    let n_train = read_u64(&mut r)?;
    let n_test = read_u64(&mut r)?;
    let mut read_lists = |count: u64| -> Result<Vec<Vec<u32>>> {
        let mut lists = vec![Vec::new(); num_users];
        for _ in 0..count {
            let u = read_u32(&mut r)? as usize;
            let i = read_u32(&mut r)?;
            let list = lists
                .get_mut(u)
                .ok_or_else(|| Error::Format(format!("user {u} out of range")))?;
            list.push(i);
        }
        Ok(lists)
    };
    let train = read_lists(n_train)?;
    let test = read_lists(n_test)?;
    Dataset::new(num_users, num_items, train, test)
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
