use crate::congraph::NormAdj;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::GcnParams;

#[derive(Debug, Clone)]
pub struct GcnTape {
    /// `Â X`
    pub ax: Matrix,
    /// `Â X W0`, before the ReLU.
    pub pre: Matrix,
    /// `ReLU(pre)`
    pub hidden: Matrix,
}

fn check_dims(adj: &NormAdj, x: &Matrix, p: &GcnParams) -> Result<()> {
    if x.rows() != adj.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for a {}-node adjacency",
            x.rows(),
            adj.n()
        )));
    }
    if x.cols() != p.w0.rows() {
        return Err(Error::DimensionMismatch(format!(
            "feature dim {} but W0 is {}x{}",
            x.cols(),
            p.w0.rows(),
            p.w0.cols()
        )));
    }
    if p.w0.cols() != p.w1.rows() {
        return Err(Error::DimensionMismatch(format!(
            "W0 is {:?} but W1 is {:?}",
            p.w0.shape(),
            p.w1.shape()
        )));
    }
    Ok(())
}

/// `Â · ReLU(Â X W0) · W1`.
pub fn gcn_forward(adj: &NormAdj, x: &Matrix, params: &GcnParams) -> Result<(Matrix, GcnTape)> {
    check_dims(adj, x, params)?;
    let ax = adj.spmm(x);
    let pre = ax.matmul(&params.w0);
    let hidden = pre.map(|v| v.max(0.0));
    let logits = adj.spmm(&hidden.matmul(&params.w1));
    Ok((logits, GcnTape { ax, pre, hidden }))
}

pub fn gcn_backward(tape: &GcnTape, adj: &NormAdj, params: &GcnParams, dlogits: &Matrix) -> Result<GcnParams> {
    if dlogits.shape() != (adj.n(), params.w1.cols()) {
        return Err(Error::DimensionMismatch(format!(
            "dlogits {:?}, expected {:?}",
            dlogits.shape(),
            (adj.n(), params.w1.cols())
        )));
    }
    if tape.pre.shape() != (adj.n(), params.w0.cols()) || tape.ax.cols() != params.w0.rows() {
        return Err(Error::DimensionMismatch("tape does not match parameters".into()));
    }
    // logits = Â (H W1)
    let g = adj.spmm_t(dlogits);
    let dw1 = tape.hidden.t_matmul(&g);
    let mut dpre = g.matmul_t(&params.w1);
    for (d, &p) in dpre.as_mut_slice().iter_mut().zip(tape.pre.as_slice()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    // pre = (Â X) W0
    let dw0 = tape.ax.t_matmul(&dpre);
    Ok(GcnParams { w0: dw0, w1: dw1 })
}
