//! Odd extension, mollification and the regularized Lagrangian geometry.

use crate::basis;
use crate::error::{check_len, Error, Result};
use crate::kinematics::{biot_geometry, BiotGeometryEval};
use crate::mesh::BoxGrid;
use crate::quadrature::{gauss_cube, gauss_square, gauss_unit};
use crate::scalar::Real;

/// Nodal vector field on the extended box [-L,2L]^2 x [-R,2R] with the Biot spacing.
#[derive(Clone, Debug)]
pub struct ExtendedField<T> {
    /// Cell counts of the original Biot grid.
    pub base: [usize; 3],
    pub values: Vec<[T; 3]>,
}

impl<T: Real> ExtendedField<T> {
    pub fn dims(&self) -> [usize; 3] {
        [3 * self.base[0] + 1, 3 * self.base[1] + 1, 3 * self.base[2] + 1]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let d = self.dims();
        i + d[0] * (j + d[1] * k)
    }

    /// Value at extended lattice index; the original box starts at `base`.
    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> [T; 3] {
        self.values[self.index(i, j, k)]
    }
}

/// Tolerance on the nodal mismatch between the Biot interface trace and the plate values.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Odd extension of a Biot displacement (3 per node) given interface values `omega`
/// (one per interface node, x fastest).
pub fn odd_extend<T: Real>(grid: &BoxGrid<T>, eta: &[T], omega: &[T]) -> Result<ExtendedField<T>> {
    let [nx, ny, nz] = grid.cells;
    check_len(3 * grid.n_nodes(), eta.len())?;
    check_len((nx + 1) * (ny + 1), omega.len())?;
    let tol = T::lit(COMPATIBILITY_TOL);
    for id in 0..grid.n_nodes() {
        let [i, j, k] = grid.node_ijk(id);
        let v = &eta[3 * id..3 * id + 3];
        let outer = i == 0 || j == 0 || i == nx || j == ny || k == nz;
        if outer && v.iter().any(|c| c.abs() > tol) {
            return Err(Error::Compatibility(format!("displacement not zero on outer boundary at node {id}")));
        }
        if k == 0 {
            let w = omega[i + (nx + 1) * j];
            if v[0].abs() > tol || v[1].abs() > tol || (v[2] - w).abs() > tol {
                return Err(Error::Compatibility(format!(
                    "interface trace ({}, {}, {}) differs from plate value {} at node {id}",
                    v[0], v[1], v[2], w
                )));
            }
        }
    }

    let mut ext = ExtendedField { base: grid.cells, values: vec![[T::zero(); 3]; (3 * nx + 1) * (3 * ny + 1) * (3 * nz + 1)] };
    let get = |i: usize, j: usize, k: usize| -> [T; 3] {
        let q = 3 * grid.node(i, j, k);
        [eta[q], eta[q + 1], eta[q + 2]]
    };
    // original block and its reflections in z, over the original horizontal range
    for j in 0..=ny {
        for i in 0..=nx {
            let (ei, ej) = (i + nx, j + ny);
            let two_w = T::lit(2.0) * omega[i + (nx + 1) * j];
            for kk in 0..=3 * nz {
                let v = if kk < nz {
                    let e = get(i, j, nz - kk);
                    [-e[0], -e[1], two_w - e[2]]
                } else if kk <= 2 * nz {
                    get(i, j, kk - nz)
                } else {
                    let e = get(i, j, 3 * nz - kk);
                    [-e[0], -e[1], -e[2]]
                };
                let q = ext.index(ei, ej, kk);
                ext.values[q] = v;
            }
        }
    }
    // reflections in x over the full z range
    for kk in 0..=3 * nz {
        for j in ny..=2 * ny {
            for ii in 0..=3 * nx {
                let src = if ii < nx {
                    2 * nx - ii
                } else if ii > 2 * nx {
                    4 * nx - ii
                } else {
                    continue;
                };
                let v = ext.at(src, j, kk);
                let q = ext.index(ii, j, kk);
                ext.values[q] = [-v[0], -v[1], -v[2]];
            }
        }
    }
    // reflections in y over the full x and z range
    for kk in 0..=3 * nz {
        for jj in 0..=3 * ny {
            let src = if jj < ny {
                2 * ny - jj
            } else if jj > 2 * ny {
                4 * ny - jj
            } else {
                continue;
            };
            for ii in 0..=3 * nx {
                let v = ext.at(ii, src, kk);
                let q = ext.index(ii, jj, kk);
                ext.values[q] = [-v[0], -v[1], -v[2]];
            }
        }
    }
    Ok(ext)
}

/// Discrete mollifier on the lattice of offsets strictly inside the radius.
#[derive(Clone, Debug)]
pub struct MollifierKernel<T> {
    pub delta: T,
    pub spacing: [T; 3],
    pub offsets: Vec<([isize; 3], T)>,
    /// Sum of the raw integrated weights before renormalization.
    pub normalization: T,
}

impl<T: Real> MollifierKernel<T> {
    pub fn reach(&self) -> [usize; 3] {
        let mut r = [0usize; 3];
        for (o, _) in &self.offsets {
            for a in 0..3 {
                r[a] = r[a].max(o[a].unsigned_abs());
            }
        }
        r
    }

    pub fn mass(&self) -> T {
        self.offsets.iter().map(|o| o.1).sum()
    }
}

fn bump<T: Real>(r2: T) -> T {
    if r2 >= T::one() {
        T::zero()
    } else {
        (T::one() / (r2 - T::one())).exp()
    }
}

/// Build the mollifier weights. `limit` is min(L, R); `resolution` is the minimal
/// ratio delta / max spacing; `order` the Gauss order per axis on each dual cell.
pub fn build_kernel<T: Real>(delta: T, spacing: [T; 3], limit: T, resolution: T, order: usize) -> Result<MollifierKernel<T>> {
    if !(delta > T::zero()) || delta >= limit {
        return Err(Error::Config(format!("mollifier radius {delta} must lie in (0, {limit})")));
    }
    let hmax = spacing[0].max(spacing[1]).max(spacing[2]);
    if delta < resolution * hmax {
        return Err(Error::Config(format!(
            "mollifier radius {delta} does not resolve the grid (needs at least {} x spacing {hmax})",
            resolution
        )));
    }
    let (gx, gw) = gauss_unit::<T>(order);
    let half = T::lit(0.5);
    let mut reach = [0isize; 3];
    for a in 0..3 {
        reach[a] = (delta / spacing[a]).floor().to_isize().unwrap_or(0);
        if T::idx(reach[a] as usize) * spacing[a] >= delta {
            reach[a] -= 1;
        }
    }
    // weights on the closed nonnegative octant, mirrored afterwards
    let mut octant = Vec::new();
    for k in 0..=reach[2] {
        for j in 0..=reach[1] {
            for i in 0..=reach[0] {
                let c = [i, j, k];
                let mut d2 = T::zero();
                for a in 0..3 {
                    let x = T::idx(c[a] as usize) * spacing[a];
                    d2 = d2 + x * x;
                }
                if d2 >= delta * delta {
                    continue;
                }
                let mut w = T::zero();
                for (qa, wa) in gx.iter().zip(&gw) {
                    let x = (T::idx(i as usize) + *qa - half) * spacing[0] / delta;
                    for (qb, wb) in gx.iter().zip(&gw) {
                        let y = (T::idx(j as usize) + *qb - half) * spacing[1] / delta;
                        for (qc, wc) in gx.iter().zip(&gw) {
                            let z = (T::idx(k as usize) + *qc - half) * spacing[2] / delta;
                            w = w + *wa * *wb * *wc * bump(x * x + y * y + z * z);
                        }
                    }
                }
                octant.push((c, w));
            }
        }
    }
    let mut offsets = Vec::new();
    for (c, w) in &octant {
        for sk in [1isize, -1] {
            if c[2] == 0 && sk < 0 {
                continue;
            }
            for sj in [1isize, -1] {
                if c[1] == 0 && sj < 0 {
                    continue;
                }
                for si in [1isize, -1] {
                    if c[0] == 0 && si < 0 {
                        continue;
                    }
                    offsets.push(([si * c[0], sj * c[1], sk * c[2]], *w));
                }
            }
        }
    }
    offsets.sort_by_key(|(o, _)| (o[2], o[1], o[0]));
    let total: T = offsets.iter().map(|o| o.1).sum();
    if !(total > T::zero()) {
        return Err(Error::Config("mollifier has no mass on the grid".into()));
    }
    for o in offsets.iter_mut() {
        o.1 = o.1 / total;
    }
    Ok(MollifierKernel { delta, spacing, offsets, normalization: total })
}

/// Regularized displacement on the Biot grid and its per-quadrature-point geometry.
#[derive(Clone, Debug)]
pub struct RegularizedGeometry<T> {
    pub grid: BoxGrid<T>,
    pub nodal: Vec<[T; 3]>,
    /// Gauss order per axis used for `qp`.
    pub order: usize,
    /// Geometry at every volume quadrature point, cell-major.
    pub qp: Vec<BiotGeometryEval<T>>,
}

/// Convolve the extended field with the kernel at every Biot node.
pub fn mollify_nodal<T: Real>(grid: &BoxGrid<T>, ext: &ExtendedField<T>, kernel: &MollifierKernel<T>) -> Vec<[T; 3]> {
    let [nx, ny, nz] = grid.cells;
    let mut out = vec![[T::zero(); 3]; grid.n_nodes()];
    for id in 0..grid.n_nodes() {
        let [i, j, k] = grid.node_ijk(id);
        let (ci, cj, ck) = ((i + nx) as isize, (j + ny) as isize, (k + nz) as isize);
        let mut acc = [T::zero(); 3];
        for (o, w) in &kernel.offsets {
            let v = ext.at((ci + o[0]) as usize, (cj + o[1]) as usize, (ck + o[2]) as usize);
            for c in 0..3 {
                acc[c] = acc[c] + *w * v[c];
            }
        }
        out[id] = acc;
    }
    out
}

pub fn mollify<T: Real>(grid: &BoxGrid<T>, ext: &ExtendedField<T>, kernel: &MollifierKernel<T>, order: usize) -> Result<RegularizedGeometry<T>> {
    let r = kernel.reach();
    if (0..3).any(|a| r[a] > ext.base[a]) {
        return Err(Error::Config("mollifier support exceeds the extension margin".into()));
    }
    let nodal = mollify_nodal(grid, ext, kernel);
    from_nodal(grid, nodal, order)
}

/// Interpolated value and gradient of a trilinear nodal vector field inside a cell.
pub fn trilinear_eval<T: Real>(grid: &BoxGrid<T>, nodal: &[[T; 3]], e: usize, loc: [T; 3]) -> ([T; 3], [[T; 3]; 3]) {
    let h = grid.spacing();
    let nodes = grid.cell_nodes(e);
    let (v, g) = basis::q1_3d(loc);
    let mut val = [T::zero(); 3];
    let mut grad = [[T::zero(); 3]; 3];
    for a in 0..8 {
        let f = nodal[nodes[a]];
        for c in 0..3 {
            val[c] = val[c] + v[a] * f[c];
            for d in 0..3 {
                grad[c][d] = grad[c][d] + f[c] * g[a][d] / h[d];
            }
        }
    }
    (val, grad)
}

pub fn from_nodal<T: Real>(grid: &BoxGrid<T>, nodal: Vec<[T; 3]>, order: usize) -> Result<RegularizedGeometry<T>> {
    let rule = gauss_cube::<T>(order);
    let mut qp = Vec::with_capacity(grid.n_cells() * rule.len());
    for e in 0..grid.n_cells() {
        for (p, _) in &rule {
            let (val, grad) = trilinear_eval(grid, &nodal, e, *p);
            qp.push(biot_geometry(val, grad)?);
        }
    }
    Ok(RegularizedGeometry { grid: grid.clone(), nodal, order, qp })
}

/// Regularized interface data at interface quadrature points, cell-major.
#[derive(Clone, Debug)]
pub struct InterfaceTrace<T> {
    pub normal: Vec<[T; 3]>,
    /// Vertical trace of the regularized displacement.
    pub height: Vec<T>,
    /// Horizontal trace components; not forced to vanish.
    pub tangential: Vec<[T; 2]>,
}

pub fn regularized_interface_normal<T: Real>(geo: &RegularizedGeometry<T>, order: usize) -> InterfaceTrace<T> {
    let g = &geo.grid;
    let h = g.spacing();
    let rule = gauss_square::<T>(order);
    let (nx, ny) = (g.cells[0], g.cells[1]);
    let mut out = InterfaceTrace { normal: Vec::new(), height: Vec::new(), tangential: Vec::new() };
    for cj in 0..ny {
        for ci in 0..nx {
            let nodes = [g.node(ci, cj, 0), g.node(ci + 1, cj, 0), g.node(ci, cj + 1, 0), g.node(ci + 1, cj + 1, 0)];
            for (s, t, _) in &rule {
                let (v, d) = basis::q1_2d(*s, *t);
                let mut hz = T::zero();
                let mut sx = T::zero();
                let mut sy = T::zero();
                let mut tx = T::zero();
                let mut ty = T::zero();
                for a in 0..4 {
                    let f = geo.nodal[nodes[a]];
                    hz = hz + v[a] * f[2];
                    sx = sx + d[a][0] / h[0] * f[2];
                    sy = sy + d[a][1] / h[1] * f[2];
                    tx = tx + v[a] * f[0];
                    ty = ty + v[a] * f[1];
                }
                out.normal.push([-sx, -sy, T::one()]);
                out.height.push(hz);
                out.tangential.push([tx, ty]);
            }
        }
    }
    out
}

/// Full pipeline: extend with the interface trace of `eta` itself, mollify, evaluate.
pub fn regularize<T: Real>(grid: &BoxGrid<T>, eta: &[T], kernel: &MollifierKernel<T>, order: usize) -> Result<RegularizedGeometry<T>> {
    let [nx, ny, _] = grid.cells;
    let mut omega = vec![T::zero(); (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            omega[i + (nx + 1) * j] = eta[3 * grid.node(i, j, 0) + 2];
        }
    }
    let ext = odd_extend(grid, eta, &omega)?;
    mollify(grid, &ext, kernel, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> BoxGrid<f64> {
        BoxGrid::new(1.0, 1.0, 0.0, 1.0, [n, n, n]).unwrap()
    }

    #[test]
    fn zero_extends_to_zero() {
        let g = grid(3);
        let ext = odd_extend(&g, &vec![0.0; 3 * g.n_nodes()], &[0.0; 16]).unwrap();
        assert!(ext.values.iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn first_reflection_value() {
        // eta = (0,0,0.2) at height a, omega = 0.3 on the interface.
        let g = grid(4);
        let mut eta = vec![0.0; 3 * g.n_nodes()];
        let mut omega = vec![0.0; 25];
        let (i, j, ka) = (2, 2, 1);
        eta[3 * g.node(i, j, ka) + 2] = 0.2;
        eta[3 * g.node(i, j, 0) + 2] = 0.3;
        omega[i + 5 * j] = 0.3;
        let ext = odd_extend(&g, &eta, &omega).unwrap();
        let v = ext.at(i + 4, j + 4, 4 - ka);
        assert!(v[0] == 0.0 && v[1] == 0.0 && (v[2] - 0.4).abs() < 1e-15);
        // x reflection about 0: value at (-a) is minus value at (a)
        let v = ext.at(4 + 1, j + 4, 4 + ka);
        let w = ext.at(4 - 1, j + 4, 4 + ka);
        assert_eq!(w, [-v[0], -v[1], -v[2]]);
    }

    #[test]
    fn incompatible_rejected() {
        let g = grid(2);
        let mut eta = vec![0.0; 3 * g.n_nodes()];
        eta[3 * g.node(1, 1, 0) + 2] = 0.1;
        assert!(odd_extend(&g, &eta, &[0.0; 9]).is_err());
    }

    #[test]
    fn kernel_mass_and_symmetry() {
        let k = build_kernel::<f64>(0.5, [0.25, 0.2, 0.125], 1.0, 2.0, 3).unwrap();
        assert!((k.mass() - 1.0).abs() < 1e-12);
        for (o, w) in &k.offsets {
            let m = k.offsets.iter().find(|(p, _)| *p == [-o[0], o[1], -o[2]]).unwrap();
            assert_eq!(m.1, *w);
            let d2: f64 = (0..3).map(|a| (o[a] as f64 * k.spacing[a]).powi(2)).sum();
            assert!(d2 < 0.25);
        }
        assert!(build_kernel(1.0, [0.25; 3], 1.0, 2.0, 3).is_err());
        assert!(build_kernel(0.3, [0.25; 3], 1.0, 2.0, 3).is_err());
    }

    #[test]
    fn constant_field_is_preserved() {
        let g = grid(4);
        let k = build_kernel(0.5, g.spacing(), 1.0, 2.0, 3).unwrap();
        let ext = ExtendedField { base: g.cells, values: vec![[0.3, -1.0, 2.0]; 13 * 13 * 13] };
        for v in mollify_nodal(&g, &ext, &k) {
            for c in 0..3 {
                assert!((v[c] - [0.3, -1.0, 2.0][c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tilted_trace_normal() {
        let g = grid(4);
        let nodal: Vec<[f64; 3]> = (0..g.n_nodes()).map(|id| [0.0, 0.0, 0.3 * g.node_coord(id)[0]]).collect();
        let geo = from_nodal(&g, nodal, 2).unwrap();
        for n in regularized_interface_normal(&geo, 2).normal {
            assert!((n[0] + 0.3).abs() < 1e-14 && n[1].abs() < 1e-14 && n[2] == 1.0);
        }
    }
}
