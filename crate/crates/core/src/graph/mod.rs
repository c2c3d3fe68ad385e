//! Interaction datasets and the symmetric-normalized bipartite adjacency.
//!
//! Node ids are unified: users occupy `0..M`, items occupy `M..M+N`.

mod io;
pub mod prep;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Real};

pub use io::{load_dataset, read_dataset_cache, write_dataset_cache, DATASET_MAGIC, DATASET_VERSION};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    num_users: usize,
    num_items: usize,
    train: Vec<Vec<u32>>,
    test: Vec<Vec<u32>>,
    item_users: Vec<Vec<u32>>,
    duplicates_dropped: usize,
}

impl Dataset {
    /// Builds a dataset from per-user train and test lists.
    ///
    /// Lists are sorted and deduplicated; the number of dropped duplicates is
    /// available from [`Dataset::duplicates_dropped`]. Missing trailing users
    /// in either list are treated as empty.
    pub fn new(
        num_users: usize,
        num_items: usize,
        mut train: Vec<Vec<u32>>,
        mut test: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if train.len() > num_users || test.len() > num_users {
            return Err(Error::InvalidDataset(format!(
                "{} train / {} test user lists for {num_users} users",
                train.len(),
                test.len()
            )));
        }
        train.resize(num_users, Vec::new());
        test.resize(num_users, Vec::new());

        let mut duplicates_dropped = 0;
        for list in train.iter_mut().chain(test.iter_mut()) {
            duplicates_dropped += sort_dedup(list);
            if let Some(&last) = list.last() {
                if last as usize >= num_items {
                    return Err(Error::InvalidDataset(format!(
                        "item id {last} out of range for {num_items} items"
                    )));
                }
            }
        }
        if train.iter().all(Vec::is_empty) {
            return Err(Error::InvalidDataset("no train interactions".into()));
        }

        let mut offenders = Vec::new();
        for (u, (tr, te)) in train.iter().zip(&test).enumerate() {
            for &i in te {
                if tr.binary_search(&i).is_ok() {
                    offenders.push((u as u32, i));
                }
            }
        }
        if !offenders.is_empty() {
            return Err(Error::TrainTestOverlap { offenders });
        }

        let item_users = transpose(&train, num_items);
        Ok(Self {
            num_users,
            num_items,
            train,
            test,
            item_users,
            duplicates_dropped,
        })
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    #[inline]
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Sorted train items of user `u`, i.e. N(u).
    #[inline]
    pub fn train_items(&self, u: u32) -> &[u32] {
        &self.train[u as usize]
    }

    #[inline]
    pub fn test_items(&self, u: u32) -> &[u32] {
        &self.test[u as usize]
    }

    /// Sorted train users of item `i`, i.e. N(i).
    #[inline]
    pub fn item_users(&self, i: u32) -> &[u32] {
        &self.item_users[i as usize]
    }

    pub fn train_lists(&self) -> &[Vec<u32>] {
        &self.train
    }

    pub fn test_lists(&self) -> &[Vec<u32>] {
        &self.test
    }

    pub fn num_train(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn num_test(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    /// Degree of a unified node id in the train graph.
    pub fn degree(&self, node: usize) -> usize {
        if node < self.num_users {
            self.train[node].len()
        } else {
            self.item_users[node - self.num_users].len()
        }
    }

    /// Train neighbours of a unified node id, as unified node ids.
    pub fn neighbours(&self, node: usize) -> Vec<usize> {
        if node < self.num_users {
            self.train[node]
                .iter()
                .map(|&i| self.num_users + i as usize)
                .collect()
        } else {
            self.item_users[node - self.num_users]
                .iter()
                .map(|&u| u as usize)
                .collect()
        }
    }

    pub fn train_edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.train
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u as u32, i)))
    }

    /// Same universe with the train lists replaced; test lists are kept.
    pub fn with_train(&self, train: Vec<Vec<u32>>) -> Result<Self> {
        Self::new(self.num_users, self.num_items, train, self.test.clone())
    }
}

fn sort_dedup(list: &mut Vec<u32>) -> usize {
    list.sort_unstable();
    let before = list.len();
    list.dedup();
    before - list.len()
}

fn transpose(lists: &[Vec<u32>], num_cols: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); num_cols];
    for (r, cols) in lists.iter().enumerate() {
        for &c in cols {
            out[c as usize].push(r as u32);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub num_users: usize,
    pub num_items: usize,
    pub train_interactions: usize,
    pub test_interactions: usize,
    pub density: f64,
    pub isolated_users: usize,
    pub isolated_items: usize,
    pub users_without_test: usize,
    pub duplicates_dropped: usize,
}

impl ValidationReport {
    pub fn interactions(&self) -> usize {
        self.train_interactions + self.test_interactions
    }

    pub fn evaluable(&self) -> bool {
        self.users_without_test < self.num_users
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "users               {}", self.num_users)?;
        writeln!(f, "items               {}", self.num_items)?;
        writeln!(f, "train interactions  {}", self.train_interactions)?;
        writeln!(f, "test interactions   {}", self.test_interactions)?;
        writeln!(f, "density             {:.6}", self.density)?;
        writeln!(f, "isolated users      {}", self.isolated_users)?;
        writeln!(f, "isolated items      {}", self.isolated_items)?;
        writeln!(f, "users without test  {}", self.users_without_test)?;
        write!(f, "duplicates dropped  {}", self.duplicates_dropped)?;
        if !self.evaluable() {
            write!(f, "\nno evaluation possible: every test list is empty")?;
        }
        Ok(())
    }
}

pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let train_interactions = ds.num_train();
    let test_interactions = ds.num_test();
    let cells = ds.num_users as f64 * ds.num_items as f64;
    ValidationReport {
        num_users: ds.num_users,
        num_items: ds.num_items,
        train_interactions,
        test_interactions,
        density: (train_interactions + test_interactions) as f64 / cells,
        isolated_users: ds.train.iter().filter(|l| l.is_empty()).count(),
        isolated_items: ds.item_users.iter().filter(|l| l.is_empty()).count(),
        users_without_test: ds.test.iter().filter(|l| l.is_empty()).count(),
        duplicates_dropped: ds.duplicates_dropped,
    }
}

/// Sparse `D^{-1/2} A D^{-1/2}` over the bipartite train graph, in CSR form.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency {
    num_users: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    degree: Vec<usize>,
}

pub fn build_normalized_adjacency(ds: &Dataset) -> Result<NormalizedAdjacency> {
    let n = ds.num_nodes();
    let nnz = 2 * ds.num_train();
    if n > u32::MAX as usize || nnz > u32::MAX as usize {
        return Err(Error::Capacity(format!(
            "{n} nodes / {nnz} adjacency entries exceed 32-bit index width"
        )));
    }
    let degree: Vec<usize> = (0..n).map(|x| ds.degree(x)).collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    row_ptr.push(0);
    for x in 0..n {
        for y in ds.neighbours(x) {
            col_idx.push(y as u32);
            values.push(1.0 / ((degree[x] * degree[y]) as f64).sqrt());
        }
        row_ptr.push(col_idx.len());
    }
    Ok(NormalizedAdjacency {
        num_users: ds.num_users,
        row_ptr,
        col_idx,
        values,
        degree,
    })
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn degree(&self) -> &[usize] {
        &self.degree
    }

    /// Column ids and values of one row.
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Stored value at `(r, c)`, or 0 when the entry is structurally absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&(c as u32)).map_or(0.0, |k| vals[k])
    }

    /// Writes `self * input` into `out`. The matrix is symmetric, so this is
    /// also the transpose product used by backpropagation.
    pub fn spmm<T: Real>(&self, input: &Matrix<T>, out: &mut Matrix<T>) {
        let n = self.num_nodes();
        assert_eq!(input.rows(), n);
        assert_eq!((out.rows(), out.cols()), (n, input.cols()));
        let d = input.cols();
        if d == 0 {
            return;
        }
        out.as_mut_slice()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(r, dst)| {
                dst.iter_mut().for_each(|x| *x = T::zero());
                let (cols, vals) = self.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    let v = T::from_f64(v);
                    for (o, &s) in dst.iter_mut().zip(input.row(c as usize)) {
                        *o = *o + v * s;
                    }
                }
            });
    }

    /// Dense copy, for tests and small-graph analysis.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.num_nodes();
        let mut dense = vec![vec![0.0; n]; n];
        for (r, row) in dense.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c as usize] = v;
            }
        }
        dense
    }
}
