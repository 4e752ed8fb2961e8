//! Reference-to-physical maps and transformed differential operators.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Plate displacement and slopes at an interface point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateGeometryEval<T> {
    pub omega: T,
    pub dx: T,
    pub dy: T,
}

impl<T: Real> PlateGeometryEval<T> {
    pub fn flat() -> Self {
        Self { omega: T::zero(), dx: T::zero(), dy: T::zero() }
    }
}

pub fn jacobian_fluid<T: Real>(r: T, omega: T) -> T {
    T::one() + omega / r
}

fn check_fluid<T: Real>(r: T, omega: T, floor: T) -> Result<T> {
    let j = jacobian_fluid(r, omega);
    if !(j > T::zero()) || j < floor {
        return Err(Error::Geometry(format!(
            "fluid jacobian 1 + omega/R = {j} (omega = {omega}, R = {r}) below floor {floor}"
        )));
    }
    Ok(j)
}

/// z -> z + (1 + z/R) omega, horizontal coordinates unchanged.
pub fn ale_fluid_map<T: Real>(r: T, w: &PlateGeometryEval<T>, p: [T; 3]) -> [T; 3] {
    [p[0], p[1], p[2] + (T::one() + p[2] / r) * w.omega]
}

pub fn ale_fluid_inverse<T: Real>(r: T, w: &PlateGeometryEval<T>, p: [T; 3], floor: T) -> Result<[T; 3]> {
    check_fluid(r, w.omega, floor)?;
    Ok([p[0], p[1], -r + r / (r + w.omega) * (r + p[2])])
}

/// Rows of the matrix taking reference partials to transformed fluid partials.
pub fn fluid_gradient_matrix<T: Real>(r: T, w: &PlateGeometryEval<T>, zhat: T) -> [[T; 3]; 3] {
    let denom = r + w.omega;
    // (R + z) R / (R + omega)^2 with z the mapped coordinate equals (R + zhat) / (R + omega).
    let lever = (r + zhat) / denom;
    let s = r / denom;
    [
        [T::one(), T::zero(), -lever * w.dx],
        [T::zero(), T::one(), -lever * w.dy],
        [T::zero(), T::zero(), s],
    ]
}

pub fn transformed_fluid_gradient<T: Real>(
    r: T,
    w: &PlateGeometryEval<T>,
    zhat: T,
    partials: [T; 3],
    floor: T,
) -> Result<[T; 3]> {
    check_fluid(r, w.omega, floor)?;
    Ok(mat_vec(&fluid_gradient_matrix(r, w, zhat), partials))
}

/// Domain velocity (R + zhat)/R * zeta * e3.
pub fn domain_velocity<T: Real>(r: T, zeta: T, zhat: T) -> [T; 3] {
    [T::zero(), T::zero(), (r + zhat) / r * zeta]
}

/// Scaled normal, unit tangents and area factor of the graph of the plate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceFrame<T> {
    pub normal: [T; 3],
    pub tau1: [T; 3],
    pub tau2: [T; 3],
    pub jacobian: T,
}

pub fn interface_frame<T: Real>(dx: T, dy: T) -> InterfaceFrame<T> {
    let one = T::one();
    let s1 = (one + dx * dx).sqrt();
    let s2 = (one + dy * dy).sqrt();
    InterfaceFrame {
        normal: [-dx, -dy, one],
        tau1: [one / s1, T::zero(), dx / s1],
        tau2: [T::zero(), one / s2, dy / s2],
        jacobian: (one + dx * dx + dy * dy).sqrt(),
    }
}

/// Lagrangian-map data at a point of the Biot domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiotGeometryEval<T> {
    pub eta: [T; 3],
    pub grad: [[T; 3]; 3],
    /// det(I + grad eta).
    pub det: T,
    /// Cofactor matrix of I + grad eta, so that det * inverse^T = cof.
    pub cof: [[T; 3]; 3],
    pub inv: [[T; 3]; 3],
    pub norm: T,
    pub norm_inv: T,
}

pub fn biot_geometry<T: Real>(eta: [T; 3], grad: [[T; 3]; 3]) -> Result<BiotGeometryEval<T>> {
    let mut f = grad;
    for (i, row) in f.iter_mut().enumerate() {
        row[i] = row[i] + T::one();
    }
    let cof = cofactor3(&f);
    let det = f[0][0] * cof[0][0] + f[0][1] * cof[0][1] + f[0][2] * cof[0][2];
    if det == T::zero() || !det.is_finite() {
        return Err(Error::Geometry(format!("singular deformation gradient, det = {det}")));
    }
    let mut inv = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = cof[j][i] / det;
        }
    }
    let (norm, norm_inv) = operator_norms(&f);
    Ok(BiotGeometryEval { eta, grad, det, cof, inv, norm, norm_inv })
}

/// Row vector of partials times (I + grad eta)^-1.
pub fn transformed_biot_gradient<T: Real>(geo: &BiotGeometryEval<T>, partials: [T; 3]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for j in 0..3 {
        out[j] = (0..3).map(|i| partials[i] * geo.inv[i][j]).sum();
    }
    out
}

pub fn mat_vec<T: Real>(m: &[[T; 3]; 3], v: [T; 3]) -> [T; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn cofactor3<T: Real>(a: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    [
        [
            a[1][1] * a[2][2] - a[1][2] * a[2][1],
            a[1][2] * a[2][0] - a[1][0] * a[2][2],
            a[1][0] * a[2][1] - a[1][1] * a[2][0],
        ],
        [
            a[0][2] * a[2][1] - a[0][1] * a[2][2],
            a[0][0] * a[2][2] - a[0][2] * a[2][0],
            a[0][1] * a[2][0] - a[0][0] * a[2][1],
        ],
        [
            a[0][1] * a[1][2] - a[0][2] * a[1][1],
            a[0][2] * a[1][0] - a[0][0] * a[1][2],
            a[0][0] * a[1][1] - a[0][1] * a[1][0],
        ],
    ]
}

pub fn det3<T: Real>(a: &[[T; 3]; 3]) -> T {
    let c = cofactor3(a);
    a[0][0] * c[0][0] + a[0][1] * c[0][1] + a[0][2] * c[0][2]
}

/// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues3<T: Real>(m: &[[T; 3]; 3]) -> [T; 3] {
    let mut a = *m;
    let tiny = T::epsilon() * T::epsilon();
    for _ in 0..50 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= tiny * diag || off == T::zero() {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == T::zero() {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (T::lit(2.0) * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
            let c = T::one() / (t * t + T::one()).sqrt();
            let s = t * c;
            let mut b = a;
            for k in 0..3 {
                b[k][p] = c * a[k][p] - s * a[k][q];
                b[k][q] = s * a[k][p] + c * a[k][q];
            }
            let mut d = b;
            for k in 0..3 {
                d[p][k] = c * b[p][k] - s * b[q][k];
                d[q][k] = s * b[p][k] + c * b[q][k];
            }
            a = d;
        }
    }
    let mut e = [a[0][0], a[1][1], a[2][2]];
    e.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    e
}

/// Spectral norms of F and of F^-1.
pub fn operator_norms<T: Real>(f: &[[T; 3]; 3]) -> (T, T) {
    let mut ftf = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ftf[i][j] = (0..3).map(|k| f[k][i] * f[k][j]).sum();
        }
    }
    let e = sym_eigenvalues3(&ftf);
    let lo = e[0].max(T::zero()).sqrt();
    let hi = e[2].max(T::zero()).sqrt();
    let inv = if lo > T::zero() { T::one() / lo } else { T::infinity() };
    (hi, inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(o: f64, dx: f64, dy: f64) -> PlateGeometryEval<f64> {
        PlateGeometryEval { omega: o, dx, dy }
    }

    #[test]
    fn fluid_map_values() {
        assert_eq!(ale_fluid_map(1.0, &w(0.5, 0.0, 0.0), [0.2, 0.3, 0.0]), [0.2, 0.3, 0.5]);
        assert_eq!(ale_fluid_map(1.0, &w(0.7, 0.0, 0.0), [0.2, 0.3, -1.0])[2], -1.0);
        let back = ale_fluid_inverse(1.0, &w(0.5, 0.0, 0.0), [0.0, 0.0, 0.5], 0.0).unwrap();
        assert_eq!(back[2], 0.0);
        assert!(ale_fluid_inverse(1.0, &w(-1.0, 0.0, 0.0), [0.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn jacobians() {
        assert_eq!(jacobian_fluid(1.0, 0.0), 1.0);
        assert_eq!(jacobian_fluid(1.0, 0.5), 1.5);
        assert_eq!(jacobian_fluid(2.0, -1.0), 0.5);
        let f = interface_frame(1.0, 0.0);
        assert!((f.jacobian - 2f64.sqrt()).abs() < 1e-14);
        assert!((f.tau1[0] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((interface_frame(3.0, 4.0).jacobian - 26f64.sqrt()).abs() < 1e-14);
        let flat = interface_frame(0.0, 0.0);
        assert_eq!(flat.normal, [0.0, 0.0, 1.0]);
        assert_eq!(flat.tau1, [1.0, 0.0, 0.0]);
        assert_eq!(flat.tau2, [0.0, 1.0, 0.0]);
        assert_eq!(flat.jacobian, 1.0);
    }

    #[test]
    fn gradient_specializations() {
        let p = [0.3, -1.2, 2.5];
        assert_eq!(transformed_fluid_gradient(1.0, &w(0.0, 0.0, 0.0), -0.4, p, 0.0).unwrap(), p);
        let g = transformed_fluid_gradient(2.0, &w(0.5, 0.0, 0.0), -0.4, [1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(g[0], 1.0);
        assert_eq!(g[1], 2.0);
        assert!((g[2] - 3.0 * 2.0 / 2.5).abs() < 1e-15);
        let geo = biot_geometry([0.0; 3], [[0.0; 3]; 3]).unwrap();
        assert_eq!(transformed_biot_gradient(&geo, p), p);
        let c: f64 = 0.25;
        let geo = biot_geometry([0.0; 3], [[0.0; 3], [0.0; 3], [0.0, 0.0, c]]).unwrap();
        let g = transformed_biot_gradient(&geo, [0.0, 0.0, 1.0]);
        assert!((g[2] - 1.0 / (1.0 + c)).abs() < 1e-15);
        assert_eq!(geo.det, 1.25);
    }

    #[test]
    fn domain_velocity_values() {
        assert_eq!(domain_velocity(1.0, 0.0, -0.3), [0.0; 3]);
        assert_eq!(domain_velocity(1.0, 3.0, -1.0), [0.0; 3]);
        assert_eq!(domain_velocity(1.0, 2.0, 0.0), [0.0, 0.0, 2.0]);
    }

    #[test]
    fn eigen_and_norms() {
        let m: [[f64; 3]; 3] = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]];
        let e = sym_eigenvalues3(&m);
        assert!((e[0] - 1.0).abs() < 1e-13 && (e[1] - 3.0).abs() < 1e-13 && (e[2] - 5.0).abs() < 1e-13);
        let (n, ni) = operator_norms::<f64>(&[[2.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 1.0]]);
        assert!((n - 2.0).abs() < 1e-14 && (ni - 2.0).abs() < 1e-14);
    }

    #[test]
    fn works_in_single_precision() {
        let g = transformed_fluid_gradient(1.0f32, &PlateGeometryEval { omega: 0.5, dx: 0.0, dy: 0.0 }, 0.0, [0.0, 0.0, 1.5], 0.0).unwrap();
        assert!((g[2] - 1.0).abs() < 1e-6);
    }
}
