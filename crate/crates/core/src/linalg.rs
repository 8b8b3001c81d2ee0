//! Dense matrix helpers shared by the alignment modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin SVD `m = U diag(s) V^T` with singular values sorted in decreasing
/// order. Each left singular vector is sign-flipped (together with its right
/// partner) so that its largest-magnitude entry is positive, which makes the
/// factors reproducible across platforms.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let raw = m.clone().svd(true, true);
    let u = raw.u.expect("requested U");
    let v_t = raw.v_t.expect("requested V^T");
    let k = raw.singular_values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        raw.singular_values[b]
            .partial_cmp(&raw.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut su = DMatrix::zeros(u.nrows(), k);
    let mut sv = DMatrix::zeros(v_t.ncols(), k);
    let mut ss = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        let ucol = u.column(src);
        let mut pivot = 0;
        for i in 1..ucol.len() {
            if ucol[i].abs() > ucol[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if !ucol.is_empty() && ucol[pivot] < 0.0 { -1.0 } else { 1.0 };
        su.set_column(dst, &(ucol * sign));
        sv.set_column(dst, &(v_t.row(src).transpose() * sign));
        ss[dst] = raw.singular_values[src];
    }
    Svd { u: su, s: ss, v: sv }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in decreasing
/// order; eigenvector signs follow the same largest-entry-positive rule as
/// [`svd`].
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vals = DVector::zeros(n);
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col.iamax();
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        vecs.set_column(dst, &(col * sign));
        vals[dst] = eig.eigenvalues[src];
    }
    (vals, vecs)
}

/// Scales every row to unit Euclidean norm. Fails on an all-zero row.
pub fn length_normalize(m: &mut DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        let norm = m.row(i).norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroRow { row: i });
        }
        m.row_mut(i).unscale_mut(norm);
    }
    Ok(())
}

/// Subtracts the column means.
pub fn mean_center(m: &mut DMatrix<f64>) {
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
}

/// Row-normalized copy; zero rows stay zero.
pub fn unit_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        let norm = out.row(i).norm();
        if norm > 0.0 {
            out.row_mut(i).unscale_mut(norm);
        }
    }
    out
}

/// Cosine similarity of every row of `a` with every row of `b`.
pub fn cosine_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    unit_rows(a) * unit_rows(b).transpose()
}

/// Largest absolute entry of `W^T W - I`.
pub fn orthogonality_error(w: &DMatrix<f64>) -> f64 {
    let gram = w.transpose() * w;
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

pub(crate) fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
