use nalgebra::DMatrix;

/// Compressed sparse row copy of a dense matrix, used for the inner ADMM products.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let (nrows, ncols) = m.shape();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = m[(i, j)];
                if v != 0.0 {
                    col.push(j);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        Self { nrows, ncols, row_ptr, col, val }
    }

    /// `out = self * x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.nrows) {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.val[idx] * x[self.col[idx]];
            }
            *o = acc;
        }
    }

    /// `out = self^T * y`
    pub fn mul_t_vec(&self, y: &[f64], out: &mut [f64]) {
        out[..self.ncols].fill(0.0);
        for (i, &yi) in y.iter().enumerate().take(self.nrows) {
            if yi == 0.0 {
                continue;
            }
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col[idx]] += self.val[idx] * yi;
            }
        }
    }

    /// `out += sum_i w_i a_i a_i'` over the rows `a_i` with `w_i != 0`.
    pub fn add_weighted_gram(&self, w: &[f64], out: &mut DMatrix<f64>) {
        for (i, &wi) in w.iter().enumerate().take(self.nrows) {
            if wi == 0.0 {
                continue;
            }
            let row = self.row_ptr[i]..self.row_ptr[i + 1];
            for a in row.clone() {
                let va = wi * self.val[a];
                for b in row.clone() {
                    out[(self.col[a], self.col[b])] += va * self.val[b];
                }
            }
        }
    }
}
