//! Orthogonal Procrustes alignment: min over orthogonal W of ||X - Y W||_F.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Returns the attained minimum distance and the minimizing orthogonal W
/// (k x k), computed from the singular factors of Y^T X.
pub fn procrustes_distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    if x.shape() != y.shape() {
        return Err(Error::parameter(format!(
            "shape mismatch: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let m = y.transpose() * x;
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v_t requested");
    let w = u * v_t;
    let dist = (x - y * &w).norm();
    Ok((dist, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_u01;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |i, j| {
            stream_u01(seed, (i * cols + j) as u64) - 0.5
        })
    }

    fn random_orthogonal(k: usize, seed: u64) -> DMatrix<f64> {
        let qr = random_matrix(k, k, seed).qr();
        qr.q()
    }

    fn is_orthogonal(w: &DMatrix<f64>) -> bool {
        let k = w.nrows();
        let g = w.transpose() * w;
        (0..k).all(|i| {
            (0..k).all(|j| {
                let want = if i == j { 1.0 } else { 0.0 };
                (g[(i, j)] - want).abs() < 1e-10
            })
        })
    }

    #[test]
    fn identity_when_equal() {
        let x = random_matrix(12, 3, 1);
        let (d, w) = procrustes_distance(&x, &x).unwrap();
        assert!(d < 1e-10);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((w[(i, j)] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_alignment_recovered() {
        let x = random_matrix(15, 4, 2);
        let w0 = random_orthogonal(4, 3);
        let y = &x * w0.transpose();
        let (d, w) = procrustes_distance(&x, &y).unwrap();
        assert!(d <= 1e-9, "distance {d}");
        assert!(is_orthogonal(&w));
    }

    #[test]
    fn random_probe_minimality() {
        let x = random_matrix(20, 3, 4);
        let y = random_matrix(20, 3, 5);
        let (d, w) = procrustes_distance(&x, &y).unwrap();
        assert!(is_orthogonal(&w));
        for s in 0..1000 {
            let wp = random_orthogonal(3, 1000 + s);
            let alt = (&x - &y * &wp).norm();
            assert!(d <= alt + 1e-10, "probe {s}: {d} > {alt}");
            // Reflections too.
            let mut refl = wp.clone();
            for i in 0..3 {
                refl[(i, 0)] = -refl[(i, 0)];
            }
            let alt = (&x - &y * &refl).norm();
            assert!(d <= alt + 1e-10);
        }
    }

    #[test]
    fn symmetric_in_arguments() {
        let x = random_matrix(10, 3, 6);
        let y = random_matrix(10, 3, 7);
        let (dxy, _) = procrustes_distance(&x, &y).unwrap();
        let (dyx, _) = procrustes_distance(&y, &x).unwrap();
        assert!((dxy - dyx).abs() < 1e-9);
    }

    #[test]
    fn degenerate_cross_product() {
        let x = random_matrix(8, 2, 8);
        let y = DMatrix::zeros(8, 2);
        let (d, w) = procrustes_distance(&x, &y).unwrap();
        assert!((d - x.norm()).abs() < 1e-10);
        assert!(is_orthogonal(&w));
    }

    #[test]
    fn shape_mismatch_is_error() {
        let x = random_matrix(5, 2, 9);
        let y = random_matrix(5, 3, 10);
        assert!(procrustes_distance(&x, &y).is_err());
    }
}
