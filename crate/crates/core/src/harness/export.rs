//! Delimited-text tables for plotting.

use std::io::Write;

use crate::classifier::QuadraticSurfaceModel;
use crate::error::{QsvmError, Result};

use super::Dataset;

/// `f` sampled on a regular grid over two or three raw features, with every
/// other feature held at its training mean.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub axes: Vec<usize>,
    pub axis_names: Vec<String>,
    /// `(coordinates…, f)`
    pub rows: Vec<Vec<f64>>,
}

impl BoundaryGrid {
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}\tf", self.axis_names.join("\t"))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", cells.join("\t"))?;
        }
        Ok(())
    }
}

/// Per-feature `(min, max)` of `data`, widened by `pad` of the range.
pub fn feature_box(data: &Dataset, pad: f64) -> Vec<(f64, f64)> {
    data.x
        .column_iter()
        .map(|col| {
            let lo = col.min();
            let hi = col.max();
            let extra = pad * (hi - lo).max(1e-12);
            (lo - extra, hi + extra)
        })
        .collect()
}

/// Samples `f` on `resolution^dims` points.
///
/// The plotted axes are the model's active features, padded with the
/// lowest-indexed inactive ones. A model with more than `dims` active
/// features cannot be drawn faithfully and yields a dimension error.
/// `bounds` gives the raw-scale range of every feature.
pub fn boundary_grid(
    model: &QuadraticSurfaceModel,
    bounds: &[(f64, f64)],
    resolution: usize,
    dims: usize,
    names: &[String],
) -> Result<BoundaryGrid> {
    if !(2..=3).contains(&dims) {
        return Err(QsvmError::InvalidArgument(format!(
            "grid must be 2-D or 3-D, got {dims}"
        )));
    }
    if resolution < 2 {
        return Err(QsvmError::InvalidArgument(
            "grid resolution must be at least 2".into(),
        ));
    }
    let n = model.n();
    if bounds.len() != n || names.len() != n {
        return Err(QsvmError::InvalidArgument(format!(
            "{} bounds and {} names for {n} features",
            bounds.len(),
            names.len()
        )));
    }
    let active = model.active_features();
    if active.len() > dims {
        let listed: Vec<&str> = active.iter().map(|&j| names[j].as_str()).collect();
        return Err(QsvmError::Dimension(format!(
            "model has {} active features ({}); a {dims}-D boundary cannot show them",
            active.len(),
            listed.join(", ")
        )));
    }
    if n < dims {
        return Err(QsvmError::Dimension(format!(
            "model has only {n} features, cannot draw {dims}-D"
        )));
    }
    let mut axes = active;
    for j in 0..n {
        if axes.len() == dims {
            break;
        }
        if !axes.contains(&j) {
            axes.push(j);
        }
    }
    axes.sort_unstable();

    let ticks: Vec<Vec<f64>> = axes
        .iter()
        .map(|&j| {
            let (lo, hi) = bounds[j];
            (0..resolution)
                .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
                .collect()
        })
        .collect();
    let mut point = model.standardizer().mean.clone();
    let total = resolution.pow(dims as u32);
    let mut rows = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rest = flat;
        let mut row = Vec::with_capacity(dims + 1);
        for (a, &j) in axes.iter().enumerate() {
            let v = ticks[a][rest % resolution];
            rest /= resolution;
            point[j] = v;
            row.push(v);
        }
        row.push(model.decision_value(&point)?);
        rows.push(row);
    }
    Ok(BoundaryGrid {
        axis_names: axes.iter().map(|&j| names[j].clone()).collect(),
        axes,
        rows,
    })
}

/// `|W_ij|` over the lower triangle, one row per entry.
pub fn write_w_magnitudes<W: Write>(
    model: &QuadraticSurfaceModel,
    names: &[String],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "row\tcol\trow_feature\tcol_feature\tmagnitude")?;
    let w = model.w();
    for i in 0..model.n() {
        for j in 0..=i {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                i + 1,
                j + 1,
                names[i],
                names[j],
                w[(i, j)].abs()
            )?;
        }
    }
    Ok(())
}

/// `|b_j|`, one row per feature.
pub fn write_b_magnitudes<W: Write>(
    model: &QuadraticSurfaceModel,
    names: &[String],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "feature\tname\tmagnitude")?;
    for (j, v) in model.b().iter().enumerate() {
        writeln!(out, "{}\t{}\t{}", j + 1, names[j], v.abs())?;
    }
    Ok(())
}
