//! One-dimensional shape functions on the unit interval and their tensor products.
//!
//! Local node numbering for tensor elements runs x fastest, then y, then z.

use crate::scalar::Real;

#[inline]
pub fn lin<T: Real>(t: T) -> ([T; 2], [T; 2]) {
    ([T::one() - t, t], [-T::one(), T::one()])
}

/// Quadratic Lagrange functions with nodes 0, 1/2, 1.
#[inline]
pub fn quad<T: Real>(t: T) -> ([T; 3], [T; 3]) {
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    (
        [(one - t) * (one - two * t), four * t * (one - t), t * (two * t - one)],
        [four * t - three, four - T::lit(8.0) * t, four * t - one],
    )
}

/// Cubic Hermite functions on an interval of length `h`, returned as
/// (values, first derivatives, second derivatives) in physical units.
/// Order: value at 0, slope at 0, value at 1, slope at 1.
#[inline]
pub fn hermite<T: Real>(t: T, h: T) -> ([T; 4], [T; 4], [T; 4]) {
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let six = T::lit(6.0);
    let t2 = t * t;
    let t3 = t2 * t;
    let v = [
        one - three * t2 + two * t3,
        h * (t - two * t2 + t3),
        three * t2 - two * t3,
        h * (t3 - t2),
    ];
    let d = [
        (six * t2 - six * t) / h,
        one - T::lit(4.0) * t + three * t2,
        (six * t - six * t2) / h,
        three * t2 - two * t,
    ];
    let dd = [
        (T::lit(12.0) * t - six) / (h * h),
        (six * t - T::lit(4.0)) / h,
        (six - T::lit(12.0) * t) / (h * h),
        (six * t - two) / h,
    ];
    (v, d, dd)
}

/// Trilinear shape functions: values and gradients with respect to unit coordinates.
pub fn q1_3d<T: Real>(p: [T; 3]) -> ([T; 8], [[T; 3]; 8]) {
    let (a, da) = lin(p[0]);
    let (b, db) = lin(p[1]);
    let (c, dc) = lin(p[2]);
    let mut v = [T::zero(); 8];
    let mut g = [[T::zero(); 3]; 8];
    for k in 0..2 {
        for j in 0..2 {
            for i in 0..2 {
                let n = i + 2 * j + 4 * k;
                v[n] = a[i] * b[j] * c[k];
                g[n] = [da[i] * b[j] * c[k], a[i] * db[j] * c[k], a[i] * b[j] * dc[k]];
            }
        }
    }
    (v, g)
}

/// Triquadratic shape functions: values and gradients with respect to unit coordinates.
pub fn q2_3d<T: Real>(p: [T; 3]) -> ([T; 27], [[T; 3]; 27]) {
    let (a, da) = quad(p[0]);
    let (b, db) = quad(p[1]);
    let (c, dc) = quad(p[2]);
    let mut v = [T::zero(); 27];
    let mut g = [[T::zero(); 3]; 27];
    for k in 0..3 {
        for j in 0..3 {
            for i in 0..3 {
                let n = i + 3 * j + 9 * k;
                v[n] = a[i] * b[j] * c[k];
                g[n] = [da[i] * b[j] * c[k], a[i] * db[j] * c[k], a[i] * b[j] * dc[k]];
            }
        }
    }
    (v, g)
}

pub fn q1_2d<T: Real>(s: T, t: T) -> ([T; 4], [[T; 2]; 4]) {
    let (a, da) = lin(s);
    let (b, db) = lin(t);
    let mut v = [T::zero(); 4];
    let mut g = [[T::zero(); 2]; 4];
    for j in 0..2 {
        for i in 0..2 {
            v[i + 2 * j] = a[i] * b[j];
            g[i + 2 * j] = [da[i] * b[j], a[i] * db[j]];
        }
    }
    (v, g)
}

pub fn q2_2d<T: Real>(s: T, t: T) -> [T; 9] {
    let (a, _) = quad(s);
    let (b, _) = quad(t);
    let mut v = [T::zero(); 9];
    for j in 0..3 {
        for i in 0..3 {
            v[i + 3 * j] = a[i] * b[j];
        }
    }
    v
}

/// Bogner-Fox-Schmit element data at a point of a plate cell.
///
/// Local dof `4 * corner + d` with corners ordered (0,0), (1,0), (0,1), (1,1)
/// and `d` = value, d/dx, d/dy, d2/dxdy.
pub struct BfsEval<T> {
    pub v: [T; 16],
    pub dx: [T; 16],
    pub dy: [T; 16],
    pub dxx: [T; 16],
    pub dyy: [T; 16],
}

pub fn bfs<T: Real>(s: T, t: T, hx: T, hy: T) -> BfsEval<T> {
    let (hxv, hxd, hxdd) = hermite(s, hx);
    let (hyv, hyd, hydd) = hermite(t, hy);
    let z = [T::zero(); 16];
    let mut out = BfsEval { v: z, dx: z, dy: z, dxx: z, dyy: z };
    for cj in 0..2 {
        for ci in 0..2 {
            let corner = ci + 2 * cj;
            for d in 0..4 {
                // x factor: value (0) or slope (1); y likewise.
                let ax = 2 * ci + (d & 1);
                let ay = 2 * cj + (d >> 1);
                let n = 4 * corner + d;
                out.v[n] = hxv[ax] * hyv[ay];
                out.dx[n] = hxd[ax] * hyv[ay];
                out.dy[n] = hxv[ax] * hyd[ay];
                out.dxx[n] = hxdd[ax] * hyv[ay];
                out.dyy[n] = hxv[ax] * hydd[ay];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let p = [0.3, 0.71, 0.12];
        let (v1, g1) = q1_3d::<f64>(p);
        let (v2, g2) = q2_3d::<f64>(p);
        assert!((v1.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((v2.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for c in 0..3 {
            assert!(g1.iter().map(|g| g[c]).sum::<f64>().abs() < 1e-14);
            assert!(g2.iter().map(|g| g[c]).sum::<f64>().abs() < 1e-13);
        }
    }

    #[test]
    fn hermite_interpolates_cubic() {
        // f(x) = x^3 - x on [0.5, 0.75]
        let (a, h) = (0.5, 0.25);
        let f = |x: f64| x * x * x - x;
        let df = |x: f64| 3.0 * x * x - 1.0;
        let coef = [f(a), df(a), f(a + h), df(a + h)];
        for &t in &[0.0, 0.2, 0.5, 0.9, 1.0] {
            let (v, d, dd) = hermite(t, h);
            let x = a + t * h;
            let fv: f64 = (0..4).map(|i| coef[i] * v[i]).sum();
            let fd: f64 = (0..4).map(|i| coef[i] * d[i]).sum();
            let fdd: f64 = (0..4).map(|i| coef[i] * dd[i]).sum();
            assert!((fv - f(x)).abs() < 1e-14);
            assert!((fd - df(x)).abs() < 1e-13);
            assert!((fdd - 6.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn bfs_reproduces_bicubic() {
        let f = |x: f64, y: f64| x * x * x * y + 2.0 * x * y * y - y * y * y;
        let fx = |x: f64, y: f64| 3.0 * x * x * y + 2.0 * y * y;
        let fy = |x: f64, y: f64| x * x * x + 4.0 * x * y - 3.0 * y * y;
        let fxy = |x: f64, y: f64| 3.0 * x * x + 4.0 * y;
        let (x0, y0, hx, hy) = (0.2, 0.4, 0.3, 0.2);
        let mut c = [0.0; 16];
        for cj in 0..2 {
            for ci in 0..2 {
                let (x, y) = (x0 + ci as f64 * hx, y0 + cj as f64 * hy);
                let k = 4 * (ci + 2 * cj);
                c[k] = f(x, y);
                c[k + 1] = fx(x, y);
                c[k + 2] = fy(x, y);
                c[k + 3] = fxy(x, y);
            }
        }
        let e = bfs(0.37, 0.81, hx, hy);
        let (x, y) = (x0 + 0.37 * hx, y0 + 0.81 * hy);
        let val: f64 = (0..16).map(|i| c[i] * e.v[i]).sum();
        let lap: f64 = (0..16).map(|i| c[i] * (e.dxx[i] + e.dyy[i])).sum();
        assert!((val - f(x, y)).abs() < 1e-13);
        assert!((lap - (6.0 * x * y + 4.0 * x - 6.0 * y)).abs() < 1e-11);
    }
}
