use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Softmax of one row, shifted by its maximum.
pub fn softmax(row: ArrayView1<f64>) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(row)[target]`, via log-sum-exp.
pub fn sample_loss(row: ArrayView1<f64>, target: usize) -> Result<f64> {
    if target >= row.len() {
        return Err(Error::InvalidTarget {
            target,
            classes: row.len(),
        });
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    Ok(lse - row[target])
}

fn check(logits: ArrayView2<f64>, targets: &[usize]) -> Result<()> {
    if logits.nrows() != targets.len() {
        return Err(Error::LengthMismatch {
            left: logits.nrows(),
            right: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(())
}

/// Mean cross-entropy over the batch.
pub fn cross_entropy(logits: ArrayView2<f64>, targets: &[usize]) -> Result<f64> {
    check(logits, targets)?;
    let mut total = 0.0;
    for (row, &t) in logits.rows().into_iter().zip(targets) {
        total += sample_loss(row, t)?;
    }
    Ok(total / targets.len() as f64)
}

/// Mean cross-entropy and its gradient `(softmax - onehot) / B`.
pub fn cross_entropy_grad(logits: ArrayView2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    let loss = cross_entropy(logits, targets)?;
    let b = targets.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    for ((row, mut g), &t) in logits.rows().into_iter().zip(grad.rows_mut()).zip(targets) {
        for (gj, pj) in g.iter_mut().zip(softmax(row)) {
            *gj = pj / b;
        }
        g[t] -= 1.0 / b;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};

    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let l = cross_entropy(Array2::zeros((1, 7)).view(), &[3]).unwrap();
        assert!((l - 1.9459101490553132).abs() < 1e-12);
    }

    #[test]
    fn one_hot_logit() {
        let logits = array![[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
        let l = cross_entropy(logits.view(), &[0]).unwrap();
        let e = std::f64::consts::E;
        assert!((l + (e / (e + 6.0)).ln()).abs() < 1e-12);
        assert!((l - 1.1654221804855953).abs() < 1e-12);
    }

    #[test]
    fn large_logits_stay_finite() {
        let logits = array![[1000.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
        assert!(cross_entropy(logits.view(), &[0]).unwrap().abs() < 1e-12);
        let l = cross_entropy(logits.view(), &[1]).unwrap();
        assert!((l - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let z = Array2::zeros((1, 7));
        assert!(matches!(
            cross_entropy(z.view(), &[7]),
            Err(Error::InvalidTarget { .. })
        ));
        assert!(matches!(
            cross_entropy(z.view(), &[0, 1]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = array![
            [0.3, -1.2, 2.0, 0.0, 0.5, -0.1, 1.1],
            [1.0, 1.0, -2.0, 0.4, 0.0, 0.2, 0.3]
        ];
        let targets = [2, 5];
        let (_, g) = cross_entropy_grad(logits.view(), &targets).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..7 {
                let mut p = logits.clone();
                p[[i, j]] += h;
                let mut m = logits.clone();
                m[[i, j]] -= h;
                let fd = (cross_entropy(p.view(), &targets).unwrap() - cross_entropy(m.view(), &targets).unwrap())
                    / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-8);
            }
        }
        for row in g.rows() {
            assert!(row.sum().abs() < 1e-15);
        }
    }
}
