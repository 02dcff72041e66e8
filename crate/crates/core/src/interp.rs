//! Transfer of nodal values (POD mode samples) to arbitrary query points.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::linalg::DenseMatrix;

/// Number of neighbours used by inverse-distance weighting.
pub const IDW_NEIGHBOURS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeInterp {
    Nearest,
    /// Inverse squared-distance weighting over the nearest [`IDW_NEIGHBOURS`]
    /// nodes; a query that coincides with a node takes its value exactly.
    #[default]
    Idw,
}

/// Interpolates the rows of `values` (one per node of `nodes`) at `queries`.
pub fn interpolate_nodal(
    nodes: &DenseMatrix,
    values: &DenseMatrix,
    queries: &DenseMatrix,
    method: ModeInterp,
) -> Result<DenseMatrix> {
    if nodes.rows() != values.rows() {
        return Err(invalid!("{} nodes but {} value rows", nodes.rows(), values.rows()));
    }
    if nodes.rows() == 0 {
        return Err(invalid!("no nodes to interpolate from"));
    }
    if nodes.cols() != queries.cols() {
        return Err(invalid!("query dimension {} vs node dimension {}", queries.cols(), nodes.cols()));
    }
    let width = values.cols();
    let k = match method {
        ModeInterp::Nearest => 1,
        ModeInterp::Idw => IDW_NEIGHBOURS.min(nodes.rows()),
    };
    let mut out = DenseMatrix::zeros(queries.rows(), width);
    let mut nearest: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for q in 0..queries.rows() {
        let x = queries.row(q);
        nearest.clear();
        for i in 0..nodes.rows() {
            let d2: f64 = nodes.row(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if nearest.len() < k || d2 < nearest[nearest.len() - 1].0 {
                let pos = nearest.partition_point(|&(d, _)| d <= d2);
                nearest.insert(pos, (d2, i));
                nearest.truncate(k);
            }
        }
        let row = out.row_mut(q);
        if nearest[0].0 == 0.0 || k == 1 {
            row.copy_from_slice(values.row(nearest[0].1));
            continue;
        }
        let mut wsum = 0.0;
        let mut acc = vec![0.0; width];
        for &(d2, i) in &nearest {
            let w = 1.0 / d2;
            wsum += w;
            for (a, v) in acc.iter_mut().zip(values.row(i)) {
                *a += w * v;
            }
        }
        for (o, a) in row.iter_mut().zip(&acc) {
            *o = a / wsum;
        }
    }
    Ok(out)
}
