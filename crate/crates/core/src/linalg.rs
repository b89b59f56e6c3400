//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SVD};

/// Tolerance on `max |RᵀR - I|` for a matrix to count as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
/// Tolerance on `|det R - 1|` for a proper rotation.
pub const DETERMINANT_TOL: f64 = 1e-8;

/// Nearest proper rotation to `m` in Frobenius norm, i.e. the maximizer
/// of `tr(Rᵀ m)` over SO(k). Returns the rotation and the singular values
/// of `m` in descending order.
pub fn nearest_rotation(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let k = m.nrows();
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let mut rotation = &u * &v_t;
    if rotation.determinant() < 0.0 {
        // flip the direction paired with the smallest singular value
        let weakest = *order.last().expect("k > 0");
        let mut d = DVector::from_element(k, 1.0);
        d[weakest] = -1.0;
        rotation = &u * DMatrix::from_diagonal(&d) * &v_t;
    }
    (rotation, singular)
}

/// `max_ij |(RᵀR - I)_ij|`.
pub fn orthogonality_error(r: &DMatrix<f64>) -> f64 {
    let k = r.nrows();
    (r.transpose() * r - DMatrix::identity(k, k)).amax()
}

pub fn is_proper_rotation(r: &DMatrix<f64>) -> bool {
    r.is_square()
        && orthogonality_error(r) < ORTHOGONALITY_TOL
        && (r.determinant() - 1.0).abs() <= DETERMINANT_TOL
}

/// Skew-symmetric part `(a - aᵀ)/2`.
pub fn skew(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a - a.transpose()) * 0.5
}

/// Matrix exponential of a skew-symmetric generator, re-projected onto
/// SO(k) to remove rounding drift.
pub fn rotation_from_generator(generator: &DMatrix<f64>) -> DMatrix<f64> {
    let r = generator.clone().exp();
    if orthogonality_error(&r) < 1e-14 {
        r
    } else {
        nearest_rotation(&r).0
    }
}

/// Largest rotation angle of `exp(a)` for skew-symmetric `a`: its
/// spectral norm.
pub fn generator_angle(a: &DMatrix<f64>) -> f64 {
    let s = SVD::new(a.clone(), false, false);
    s.singular_values.max()
}
