//! Scaled dot-product attention with an additive mask, outside the tape.

use thiserror::Error;

use crate::mat::{masked_softmax_rows, Mat};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AttentionError {
    #[error("query {0} has every key masked")]
    AllMasked(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Returns `(outputs, weights)` where `weights = softmax(q·kᵀ/√d + mask)` row
/// by row and `outputs = weights · v`. `d` is the query width.
pub fn masked_attention(q: &Mat, k: &Mat, v: &Mat, mask: &Mat) -> Result<(Mat, Mat), AttentionError> {
    if q.cols != k.cols || k.rows != v.rows || mask.shape() != (q.rows, k.rows) {
        return Err(AttentionError::Shape(format!(
            "q {:?}, k {:?}, v {:?}, mask {:?}",
            q.shape(),
            k.shape(),
            v.shape(),
            mask.shape()
        )));
    }
    if let Some(r) = (0..mask.rows).find(|&r| mask.row(r).iter().all(|x| *x == f64::NEG_INFINITY)) {
        return Err(AttentionError::AllMasked(r));
    }
    let mut scores = q.matmul_t(k);
    scores.scale(1.0 / (q.cols as f64).sqrt());
    let weights = masked_softmax_rows(&scores, Some(mask)).expect("every row has a visible key");
    Ok((weights.matmul(v), weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEG: f64 = f64::NEG_INFINITY;

    #[test]
    fn single_visible_key() {
        let q = Mat::from_rows(&[vec![0.3, -0.2]]);
        let k = Mat::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 3.0]]);
        let v = Mat::from_rows(&[vec![1.0, 0.0], vec![7.0, 8.0], vec![0.0, 1.0]]);
        let mask = Mat::from_rows(&[vec![NEG, 0.0, NEG]]);
        let (out, w) = masked_attention(&q, &k, &v, &mask).unwrap();
        assert_eq!(w.row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(out.row(0), v.row(1));
    }

    #[test]
    fn identical_keys_are_uniform() {
        let q = Mat::from_rows(&[vec![0.5, 1.5], vec![-2.0, 0.1]]);
        let k = Mat::filled(4, 2, 0.7);
        let v = Mat::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let (out, w) = masked_attention(&q, &k, &v, &Mat::zeros(2, 4)).unwrap();
        for x in &w.data {
            assert!((x - 0.25).abs() < 1e-15);
        }
        assert!((out.get(1, 0) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        let q = Mat::zeros(1, 2);
        let k = Mat::zeros(2, 2);
        assert_eq!(
            masked_attention(&q, &k, &k, &Mat::filled(1, 2, NEG)),
            Err(AttentionError::AllMasked(0))
        );
        assert!(matches!(
            masked_attention(&q, &k, &k, &Mat::zeros(2, 2)),
            Err(AttentionError::Shape(_))
        ));
    }
}
