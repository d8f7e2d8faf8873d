//! Principal component analysis over amplitude rows: covariance
//! eigendecomposition with a deterministic sign convention, plus projection
//! onto a chosen subset of components.

use nalgebra::{DMatrix, DVector};

use super::DspError;

/// A fitted PCA basis: per-column mean, orthonormal components (columns,
/// ordered by descending eigenvalue), and the eigenvalues themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean_row: DVector<f64>,
    pub components: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

impl PcaBasis {
    /// Dimensionality of the rows this basis was fitted on.
    #[must_use]
    pub fn input_dim(&self) -> usize {
        self.mean_row.len()
    }

    #[must_use]
    pub fn component_count(&self) -> usize {
        self.components.ncols()
    }
}

/// Fit a PCA basis on `amplitudes` (rows = samples, columns = streams).
///
/// Eigenvalues are sorted descending and clamped at zero; each component is
/// oriented so its largest-magnitude entry is positive, which makes repeated
/// fits reproducible.
pub fn pca_fit(amplitudes: &DMatrix<f64>) -> Result<PcaBasis, DspError> {
    let n = amplitudes.nrows();
    let p = amplitudes.ncols();
    if n < 2 {
        return Err(DspError::DegenerateData(format!(
            "need at least two sample rows to fit, got {n}"
        )));
    }
    if p == 0 {
        return Err(DspError::DegenerateData("no input columns".into()));
    }

    let mean_row = DVector::from_fn(p, |j, _| amplitudes.column(j).sum() / n as f64);
    let mut centered = amplitudes.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean_row.transpose();
    }
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);

    let total_var = cov.trace();
    let scale = amplitudes.amax();
    if total_var <= scale * scale * 1e-26 {
        return Err(DspError::DegenerateData(
            "zero variance in all columns (all rows identical)".into(),
        ));
    }

    let eigen = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let mut components = DMatrix::zeros(p, p);
    let mut eigenvalues = DVector::zeros(p);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = eigen.eigenvalues[src].max(0.0);
        let mut col = eigen.eigenvectors.column(src).clone_owned();
        // Orient: the entry of largest magnitude must be positive.
        let mut dominant = 0;
        for i in 1..p {
            if col[i].abs() > col[dominant].abs() {
                dominant = i;
            }
        }
        if col[dominant] < 0.0 {
            col.neg_mut();
        }
        components.set_column(dst, &col);
    }

    Ok(PcaBasis {
        mean_row,
        components,
        eigenvalues,
    })
}

/// Project one row onto the components selected by `keep` (1-indexed, in
/// `keep` order): entry `k` yields `(row - mean) . component_{k}`.
pub fn pca_project(basis: &PcaBasis, row: &[f64], keep: &[usize]) -> Result<Vec<f64>, DspError> {
    if row.len() != basis.input_dim() {
        return Err(DspError::Geometry(format!(
            "row has {} entries, basis expects {}",
            row.len(),
            basis.input_dim()
        )));
    }
    let centered = DVector::from_row_slice(row) - &basis.mean_row;
    let mut out = Vec::with_capacity(keep.len());
    for &k in keep {
        if k == 0 || k > basis.component_count() {
            return Err(DspError::Index {
                index: k,
                available: basis.component_count(),
            });
        }
        out.push(basis.components.column(k - 1).dot(&centered));
    }
    Ok(out)
}

/// Project every row of a matrix at once; returns `n_rows x keep.len()`.
pub fn project_rows(
    basis: &PcaBasis,
    rows: &DMatrix<f64>,
    keep: &[usize],
) -> Result<DMatrix<f64>, DspError> {
    if rows.ncols() != basis.input_dim() {
        return Err(DspError::Geometry(format!(
            "matrix has {} columns, basis expects {}",
            rows.ncols(),
            basis.input_dim()
        )));
    }
    for &k in keep {
        if k == 0 || k > basis.component_count() {
            return Err(DspError::Index {
                index: k,
                available: basis.component_count(),
            });
        }
    }
    let mut selected = DMatrix::zeros(basis.input_dim(), keep.len());
    for (dst, &k) in keep.iter().enumerate() {
        selected.set_column(dst, &basis.components.column(k - 1));
    }
    let mut centered = rows.clone();
    for mut row in centered.row_iter_mut() {
        row -= basis.mean_row.transpose();
    }
    Ok(centered * selected)
}
