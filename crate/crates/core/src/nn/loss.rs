use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Mean cross-entropy of `softmax(logits_i)` against `labels[i]` over the
/// masked rows. The gradient is `(softmax − onehot) / |mask|` on masked rows
/// and zero elsewhere.
pub fn masked_softmax_cross_entropy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<(f64, Matrix)> {
    let (m, t) = logits.shape();
    if labels.len() != m || mask.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{m} logit rows, {} labels, {} mask entries",
            labels.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::EmptyMask("loss"));
    }
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(m, t);
    for i in (0..m).filter(|&i| mask[i]) {
        let label = labels[i];
        if label >= t {
            return Err(Error::DimensionMismatch(format!("label {label} at node {i} with {t} classes")));
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        let g = grad.row_mut(i);
        for (gc, &v) in g.iter_mut().zip(row) {
            *gc = (v - log_z).exp() * inv;
        }
        g[label] -= inv;
    }
    Ok((loss * inv, grad))
}
