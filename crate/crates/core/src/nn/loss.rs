use super::{Matrix, NnError};

/// Mean softmax cross-entropy over the batch, with gradient `(softmax − one_hot) / n`.
///
/// Log-sum-exp is stabilized by subtracting the row maximum.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix), NnError> {
    let (n, c) = logits.shape();
    if c < 2 {
        return Err(NnError::InvalidConfig(format!("cross-entropy needs at least 2 classes, got {c}")));
    }
    if labels.len() != n || n == 0 {
        return Err(NnError::DimensionMismatch {
            context: "cross-entropy labels".into(),
            expected: n,
            actual: labels.len(),
        });
    }
    if !logits.is_finite() {
        return Err(NnError::NonFinite("logits".into()));
    }
    let mut grad = Matrix::zeros(n, c);
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for (r, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(NnError::InvalidLabel { label, classes: c });
        }
        let row = logits.row(r);
        let (arg, max) =
            row.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
        // log Σ exp(v − max) = ln(1 + Σ_{j≠arg} exp(v_j − max)), exact for confident rows
        let rest: f64 = row.iter().enumerate().filter(|&(i, _)| i != arg).map(|(_, &v)| (v - max).exp()).sum();
        let log_z_shifted = rest.ln_1p();
        let log_z = max + log_z_shifted;
        loss += log_z_shifted - (row[label] - max);
        let g = grad.row_mut(r);
        for (gv, &v) in g.iter_mut().zip(row) {
            *gv = (v - log_z).exp() * inv_n;
        }
        g[label] -= inv_n;
    }
    Ok((loss * inv_n, grad))
}

/// Mean absolute error over all entries, gradient `sign(pred − target) / count`.
pub fn l1_loss(predicted: &Matrix, target: &Matrix) -> Result<(f64, Matrix), NnError> {
    if predicted.shape() != target.shape() {
        return Err(NnError::DimensionMismatch {
            context: "l1 loss operands".into(),
            expected: target.rows() * target.cols(),
            actual: predicted.rows() * predicted.cols(),
        });
    }
    let count = predicted.as_slice().len();
    if count == 0 {
        return Ok((0.0, predicted.clone()));
    }
    let inv = 1.0 / count as f64;
    let mut grad = Matrix::zeros(predicted.rows(), predicted.cols());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad.as_mut_slice().iter_mut().zip(predicted.as_slice()).zip(target.as_slice()) {
        let d = p - t;
        loss += d.abs();
        *g = if d > 0.0 {
            inv
        } else if d < 0.0 {
            -inv
        } else {
            0.0
        };
    }
    Ok((loss * inv, grad))
}

/// Index of the largest entry in each row (first wins on ties).
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.row_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}
