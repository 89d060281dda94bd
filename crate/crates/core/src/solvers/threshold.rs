use nalgebra::DVector;

use crate::error::{QsvmError, Result};

/// Indices of the `k` largest-magnitude entries of `z`, in ascending order.
///
/// Equal magnitudes keep the lower index.
pub fn top_k_support(z: &DVector<f64>, k: usize) -> Result<Vec<usize>> {
    let d = z.len();
    if k == 0 || k > d {
        return Err(QsvmError::InvalidArgument(format!(
            "sparsity level {k} outside 1..={d}"
        )));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

/// Euclidean projection onto `{u : ‖u‖₀ ≤ k}`.
pub fn hard_threshold(z: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
    let support = top_k_support(z, k)?;
    let mut u = DVector::zeros(z.len());
    for j in support {
        u[j] = z[j];
    }
    Ok(u)
}
