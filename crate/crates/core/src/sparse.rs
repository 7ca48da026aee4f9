//! Compressed sparse row storage for assembled operators.
//!
//! Most operators act identically on the three deformation components, so
//! they are assembled once on scalar degrees of freedom. `mul_vec3` applies
//! such a scalar matrix to a component-interleaved vector (`3 * i + c`),
//! i.e. it applies `A ⊗ I₃`.

use faer::sparse::{SparseColMat, Triplet};

#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// Adds a dense row-major block at the given row/column index sets.
    pub fn push_block(&mut self, rows: &[usize], cols: &[usize], block: &[f64]) {
        debug_assert_eq!(block.len(), rows.len() * cols.len());
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                self.push(r, c, block[i * cols.len() + j]);
            }
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; self.n_rows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n_rows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { n_rows: self.n_rows, n_cols: self.n_cols, indptr, indices, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        TripletBuilder::new(n_rows, n_cols).build()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[r]..self.indptr[r + 1];
        self.indices[range.clone()].iter().copied().zip(self.data[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.indptr[r]..self.indptr[r + 1];
        match self.indices[range.clone()].binary_search(&c) {
            Ok(k) => self.data[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `(A ⊗ I₃) x` for component-interleaved `x`.
    pub fn mul_vec3(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), 3 * self.n_cols);
        let mut y = vec![0.0; 3 * self.n_rows];
        for r in 0..self.n_rows {
            let mut acc = [0.0; 3];
            for (c, v) in self.row(r) {
                for k in 0..3 {
                    acc[k] += v * x[3 * c + k];
                }
            }
            y[3 * r..3 * r + 3].copy_from_slice(&acc);
        }
        y
    }

    /// `xᵀ (A ⊗ I₃) x`.
    pub fn quad_form3(&self, x: &[f64]) -> f64 {
        self.mul_vec3(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a·self + b·other`.
    pub fn linear_combination(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut t = TripletBuilder::new(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            t.push(r, c, a * v);
        }
        for (r, c, v) in other.iter() {
            t.push(r, c, b * v);
        }
        t.build()
    }

    /// Expands a scalar matrix to `A ⊗ I₃` on interleaved indices.
    pub fn kron_identity3(&self) -> CsrMatrix {
        let mut t = TripletBuilder::new(3 * self.n_rows, 3 * self.n_cols);
        for (r, c, v) in self.iter() {
            for k in 0..3 {
                t.push(3 * r + k, 3 * c + k, v);
            }
        }
        t.build()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuilder::new(self.n_cols, self.n_rows);
        for (r, c, v) in self.iter() {
            t.push(c, r, v);
        }
        t.build()
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.iter().map(|(r, c, v)| (v - self.get(c, r)).abs()).fold(0.0, f64::max)
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let triplets: Vec<Triplet<usize, usize, f64>> =
            self.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &triplets)
            .expect("valid triplets")
    }
}
