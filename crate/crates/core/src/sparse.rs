//! Row-sparse linear maps used to compose layer segments into projections.

use std::collections::BTreeMap;

/// Linear map `y = M x` stored row by row; each row lists `(column, value)`
/// with strictly increasing columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMap {
    cols: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

impl SparseMap {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            cols,
            rows: vec![Vec::new(); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            cols: n,
            rows: (0..n).map(|i| vec![(i as u32, 1.0)]).collect(),
        }
    }

    /// Builds from unordered triplets, summing duplicates and dropping exact zeros.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut acc: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); rows];
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of {rows}x{cols}");
            *acc[r].entry(c as u32).or_insert(0.0) += v;
        }
        Self {
            cols,
            rows: acc
                .into_iter()
                .map(|m| m.into_iter().filter(|&(_, v)| v != 0.0).collect())
                .collect(),
        }
    }

    /// Builds from rows whose columns are already strictly increasing;
    /// exact zeros are dropped.
    pub fn from_sorted_rows(cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|row| {
                debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
                debug_assert!(row.iter().all(|&(c, _)| (c as usize) < cols));
                row.into_iter().filter(|&(_, v)| v != 0.0).collect()
            })
            .collect();
        Self { cols, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[(u32, f64)] {
        &self.rows[r]
    }

    pub fn rows(&self) -> &[Vec<(u32, f64)>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &SparseMap) -> SparseMap {
        assert_eq!(
            self.cols,
            first.n_rows(),
            "composition dimension mismatch"
        );
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
                for &(k, a) in row {
                    for &(j, b) in first.row(k as usize) {
                        *acc.entry(j).or_insert(0.0) += a * b;
                    }
                }
                acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
            })
            .collect();
        SparseMap {
            cols: first.cols,
            rows,
        }
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; self.cols];
                for &(c, v) in row {
                    dense[c as usize] = v;
                }
                dense
            })
            .collect()
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> SparseMap {
        SparseMap {
            cols: self.cols,
            rows: self
                .rows
                .iter()
                .map(|row| row.iter().map(|&(c, v)| (c, f(v))).filter(|&(_, v)| v != 0.0).collect())
                .collect(),
        }
    }
}
