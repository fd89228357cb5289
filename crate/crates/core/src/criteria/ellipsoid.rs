use nalgebra::DMatrix;

use crate::error::{invalid_input, Error, Result};
use crate::linalg::{inverse, CMat};

/// `{x : x^T Q x < radius^2}` with `x^T Q x = |V^-1 x|^2` for real `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub q: DMatrix<f64>,
    pub radius: f64,
}

pub fn ellipsoid_region(v_t0: &CMat, radius: f64) -> Result<Ellipsoid> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return invalid_input("ellipsoid radius must be finite and nonnegative");
    }
    let n = v_t0.nrows();
    if n == 0 || v_t0.ncols() != n {
        return invalid_input("transform must be square");
    }
    let vi = inverse(v_t0).map_err(|_| Error::InvalidInput("transform at t0 is singular".into()))?;
    let h = vi.adjoint() * &vi;
    // the imaginary part is antisymmetric and drops out of x^T H x
    let q = DMatrix::from_fn(n, n, |i, j| 0.5 * (h[(i, j)].re + h[(j, i)].re));
    Ok(Ellipsoid { q, radius })
}

/// Projected boundary on axes `(i, j)` together with the lifted full-space
/// point for every boundary sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub axes: (usize, usize),
    pub q_proj: [[f64; 2]; 2],
    pub boundary: Vec<[f64; 2]>,
    pub lifted: Vec<Vec<f64>>,
}

/// Shadow of the ellipsoid on the `(i, j)` plane via the Schur complement of
/// the eliminated coordinates.
pub fn project(e: &Ellipsoid, i: usize, j: usize, points: usize) -> Result<Projection> {
    let n = e.q.nrows();
    if i >= n || j >= n || i == j {
        return invalid_input(format!("axes ({i}, {j}) are not two distinct coordinates below {n}"));
    }
    if points < 3 {
        return invalid_input("boundary needs at least 3 points");
    }
    let s = [i, j];
    let r: Vec<usize> = (0..n).filter(|k| *k != i && *k != j).collect();
    let q_ss = DMatrix::from_fn(2, 2, |a, b| e.q[(s[a], s[b])]);
    let (q_proj, lift) = if r.is_empty() {
        (q_ss, DMatrix::zeros(0, 2))
    } else {
        let q_rr = DMatrix::from_fn(r.len(), r.len(), |a, b| e.q[(r[a], r[b])]);
        let q_rs = DMatrix::from_fn(r.len(), 2, |a, b| e.q[(r[a], s[b])]);
        let scale = q_rr.abs().max().max(f64::MIN_POSITIVE);
        let chol = nalgebra::Cholesky::new(q_rr.clone())
            .filter(|c| c.l().diagonal().iter().all(|d| *d > 1e-10 * scale.sqrt()))
            .ok_or(Error::DegenerateProjection)?;
        let lift = -chol.solve(&q_rs);
        (&q_ss + q_rs.transpose() * &lift, lift)
    };
    let qp = 0.5 * (&q_proj + q_proj.transpose());
    let l = nalgebra::Cholesky::new(qp.clone()).ok_or(Error::DegenerateProjection)?.l();
    let lt_inv = l.transpose().try_inverse().ok_or(Error::DegenerateProjection)?;
    let mut boundary = Vec::with_capacity(points);
    let mut lifted = Vec::with_capacity(points);
    for k in 0..points {
        let th = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
        let p = &lt_inv * nalgebra::Vector2::new(th.cos(), th.sin()) * e.radius;
        let xr = &lift * &p;
        let mut x = vec![0.0; n];
        x[i] = p[0];
        x[j] = p[1];
        for (a, &idx) in r.iter().enumerate() {
            x[idx] = xr[a];
        }
        boundary.push([p[0], p[1]]);
        lifted.push(x);
    }
    Ok(Projection {
        axes: (i, j),
        q_proj: [[qp[(0, 0)], qp[(0, 1)]], [qp[(1, 0)], qp[(1, 1)]]],
        boundary,
        lifted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_complex;

    #[test]
    fn identity_gives_unit_circle() {
        let e = ellipsoid_region(&CMat::identity(4, 4), 1.0).unwrap();
        let p = project(&e, 0, 2, 64).unwrap();
        for b in &p.boundary {
            assert!(((b[0] * b[0] + b[1] * b[1]).sqrt() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_semi_axes() {
        let v = to_complex(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0, 1.0, 1.0])));
        let e = ellipsoid_region(&v, 1.0).unwrap();
        let p = project(&e, 0, 1, 256).unwrap();
        let max0 = p.boundary.iter().map(|b| b[0].abs()).fold(0.0, f64::max);
        let max1 = p.boundary.iter().map(|b| b[1].abs()).fold(0.0, f64::max);
        assert!((max0 - 2.0).abs() < 1e-12 && (max1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_transform_rejected() {
        let v = CMat::zeros(3, 3);
        assert!(ellipsoid_region(&v, 1.0).is_err());
    }

    #[test]
    fn complex_transform_gives_real_form() {
        let mut v = CMat::identity(2, 2);
        v[(0, 1)] = num_complex::Complex64::new(0.0, 0.5);
        let e = ellipsoid_region(&v, 1.0).unwrap();
        let vi = inverse(&v).unwrap();
        let x = nalgebra::DVector::from_vec(vec![0.3, -0.7]);
        let direct = (&vi * x.map(|r| num_complex::Complex64::new(r, 0.0))).norm_squared();
        assert!(((x.transpose() * &e.q * &x)[0] - direct).abs() < 1e-14);
    }
}
