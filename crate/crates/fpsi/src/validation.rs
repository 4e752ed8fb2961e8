//! Oracle suites. Nothing here calls the assembly, basis or quadrature modules used by
//! the solver: Gauss rules, shape functions and geometric maps are rebuilt locally.

use crate::config::{bump_profile, preset_state, Preset, RunConfig};
use crate::coupled::{assemble_system, Lagged};
use crate::driver::{run, Problem};
use crate::error::Result;
use crate::geometry::build_geometry_cache;
use crate::plate::{plate_step, smallest_eigenvalue, PlateState};
use crate::sparse::Factorization;
use crate::coupled::{CoupledSystem, Physics};
use crate::driver::{Snapshot, Trajectory};
use crate::kinematics::{biot_geometry, transformed_fluid_gradient, PlateGeometryEval};
use crate::mesh::{BoxGrid, DofKind, Grids};
use crate::plate::PlateOperators;
use crate::sparse::{Csr, Triplets};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub seed: u64,
    pub korn_samples: usize,
    pub korn_cells: [usize; 3],
    pub korn_tol: f64,
    pub replay_tol: f64,
    pub fd_min_order: f64,
    pub fd_steps: [f64; 3],
    pub replay_steps: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            korn_samples: 1000,
            korn_cells: [4, 4, 4],
            korn_tol: 1e-12,
            replay_tol: 1e-8,
            fd_min_order: 1.8,
            fd_steps: [2e-2, 1e-2, 5e-3],
            replay_steps: 3,
        }
    }
}

// ---------------------------------------------------------------------------------
// local quadrature and shape functions

/// Gauss-Legendre nodes and weights on [0, 1] by Newton iteration on P_n.
pub fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[n - 1 - i] = 0.5 * (z + 1.0);
        w[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn lagrange(nodes: &[f64], i: usize, t: f64) -> (f64, f64) {
    let mut v = 1.0;
    let mut d = 0.0;
    for (j, &tj) in nodes.iter().enumerate() {
        if j == i {
            continue;
        }
        let den = nodes[i] - tj;
        let mut term = 1.0 / den;
        for (k, &tk) in nodes.iter().enumerate() {
            if k != i && k != j {
                term *= (t - tk) / (nodes[i] - tk);
            }
        }
        d += term;
        v *= (t - tj) / den;
    }
    (v, d)
}

const LIN: [f64; 2] = [0.0, 1.0];
const QUAD: [f64; 3] = [0.0, 0.5, 1.0];

/// Value and physical gradient of a tensor Lagrange field in a box cell.
/// `fetch(a, b, c)` returns the coefficients at local node (a, b, c).
fn lagrange_field<const C: usize>(nodes: &[f64], t: [f64; 3], h: [f64; 3], fetch: impl Fn(usize, usize, usize) -> [f64; C]) -> ([f64; C], [[f64; 3]; C]) {
    let m = nodes.len();
    let l: Vec<[(f64, f64); 3]> = (0..m).map(|i| [lagrange(nodes, i, t[0]), lagrange(nodes, i, t[1]), lagrange(nodes, i, t[2])]).collect();
    let mut val = [0.0; C];
    let mut grad = [[0.0; 3]; C];
    for c in 0..m {
        for b in 0..m {
            for a in 0..m {
                let (vx, dx) = l[a][0];
                let (vy, dy) = l[b][1];
                let (vz, dz) = l[c][2];
                let f = fetch(a, b, c);
                let phi = vx * vy * vz;
                let g = [dx * vy * vz / h[0], vx * dy * vz / h[1], vx * vy * dz / h[2]];
                for k in 0..C {
                    val[k] += phi * f[k];
                    for d in 0..3 {
                        grad[k][d] += g[d] * f[k];
                    }
                }
            }
        }
    }
    (val, grad)
}

/// Cubic Hermite shape functions on a cell of length h: values, first and second
/// derivatives in the physical variable, for [value at 0, slope at 0, value at 1, slope at 1].
fn hermite(t: f64, h: f64) -> [[f64; 3]; 4] {
    let (t2, t3) = (t * t, t * t * t);
    [
        [2.0 * t3 - 3.0 * t2 + 1.0, (6.0 * t2 - 6.0 * t) / h, (12.0 * t - 6.0) / (h * h)],
        [(t3 - 2.0 * t2 + t) * h, 3.0 * t2 - 4.0 * t + 1.0, (6.0 * t - 4.0) / h],
        [-2.0 * t3 + 3.0 * t2, (-6.0 * t2 + 6.0 * t) / h, (-12.0 * t + 6.0) / (h * h)],
        [(t3 - t2) * h, 3.0 * t2 - 2.0 * t, (6.0 * t - 2.0) / h],
    ]
}

#[derive(Clone, Copy, Debug, Default)]
struct PlatePoint {
    w: f64,
    wx: f64,
    wy: f64,
    lap: f64,
}

fn plate_point(grids: &Grids<f64>, coef: &[f64], ci: usize, cj: usize, s: f64, t: f64) -> PlatePoint {
    let pg = &grids.plate;
    let hx = pg.extent_x / pg.cells[0] as f64;
    let hy = pg.extent_y / pg.cells[1] as f64;
    let fx = hermite(s, hx);
    let fy = hermite(t, hy);
    let mut out = PlatePoint::default();
    for b in 0..2 {
        for a in 0..2 {
            let node = (ci + a) + (pg.cells[0] + 1) * (cj + b);
            for d in 0..4 {
                let c = coef[4 * node + d];
                if c == 0.0 {
                    continue;
                }
                let x = fx[2 * a + (d & 1)];
                let y = fy[2 * b + (d >> 1)];
                out.w += c * x[0] * y[0];
                out.wx += c * x[1] * y[0];
                out.wy += c * x[0] * y[1];
                out.lap += c * (x[2] * y[0] + x[0] * y[2]);
            }
        }
    }
    out
}

fn dims(g: &BoxGrid<f64>) -> [usize; 3] {
    [g.cells[0] + 1, g.cells[1] + 1, g.cells[2] + 1]
}

fn box_h(g: &BoxGrid<f64>) -> [f64; 3] {
    [g.extent_x / g.cells[0] as f64, g.extent_y / g.cells[1] as f64, (g.z_hi - g.z_lo) / g.cells[2] as f64]
}

fn fluid_point(grids: &Grids<f64>, u: &[f64], c: [usize; 3], t: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let d = dims(&grids.fluid_q2);
    let h = box_h(&grids.fluid);
    lagrange_field::<3>(&QUAD, t, h, |a, b, k| {
        let id = (2 * c[0] + a) + d[0] * ((2 * c[1] + b) + d[1] * (2 * c[2] + k));
        [u[3 * id], u[3 * id + 1], u[3 * id + 2]]
    })
}

fn biot_vec_point(g: &BoxGrid<f64>, v: &[f64], c: [usize; 3], t: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let d = dims(g);
    lagrange_field::<3>(&LIN, t, box_h(g), |a, b, k| {
        let id = (c[0] + a) + d[0] * ((c[1] + b) + d[1] * (c[2] + k));
        [v[3 * id], v[3 * id + 1], v[3 * id + 2]]
    })
}

fn biot_scalar_point(g: &BoxGrid<f64>, v: &[f64], c: [usize; 3], t: [f64; 3]) -> (f64, [f64; 3]) {
    let d = dims(g);
    let (val, grad) = lagrange_field::<1>(&LIN, t, box_h(g), |a, b, k| [v[(c[0] + a) + d[0] * ((c[1] + b) + d[1] * (c[2] + k))]]);
    (val[0], grad[0])
}

fn sym_sq(g: &[[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = 0.5 * (g[i][j] + g[j][i]);
            s += d * d;
        }
    }
    s
}

fn trace(g: &[[f64; 3]; 3]) -> f64 {
    g[0][0] + g[1][1] + g[2][2]
}

fn sq(v: [f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

// ---------------------------------------------------------------------------------
// Korn

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KornReport {
    pub samples: usize,
    /// min over samples of (int |D eta|^2 - 1/2 int |grad eta|^2) / |coefficients|^2.
    pub min_margin: f64,
    /// The same quantity for eta = (y, 0, 0), which should be zero.
    pub equality_margin: f64,
    /// For eta = (x, 0, 0): |D|^2 - 1/2 |grad|^2 integrated, equal to half the volume.
    pub stretch_margin: f64,
    pub pass: bool,
}

/// Assembled quadratic forms int |D v|^2 and int |grad v|^2 for trilinear vector fields.
pub fn korn_forms(g: &BoxGrid<f64>) -> (Csr, Csr) {
    let (x, w) = legendre_rule(2);
    let h = box_h(g);
    let vol = h[0] * h[1] * h[2];
    let d = dims(g);
    let mut sym = [[0.0; 24]; 24];
    let mut full = [[0.0; 24]; 24];
    for (k, wz) in x.iter().zip(&w) {
        for (j, wy) in x.iter().zip(&w) {
            for (i, wx) in x.iter().zip(&w) {
                let t = [*i, *j, *k];
                let mut grads = [[0.0; 3]; 8];
                for c in 0..2 {
                    for b in 0..2 {
                        for a in 0..2 {
                            let l = [lagrange(&LIN, a, t[0]), lagrange(&LIN, b, t[1]), lagrange(&LIN, c, t[2])];
                            grads[a + 2 * b + 4 * c] = [l[0].1 * l[1].0 * l[2].0 / h[0], l[0].0 * l[1].1 * l[2].0 / h[1], l[0].0 * l[1].0 * l[2].1 / h[2]];
                        }
                    }
                }
                let wq = wx * wy * wz * vol;
                for p in 0..24 {
                    for q in 0..24 {
                        let (a, ci) = (p / 3, p % 3);
                        let (b, cj) = (q / 3, q % 3);
                        // D(phi_a e_ci) : D(phi_b e_cj)
                        let mut s = 0.5 * grads[a][cj] * grads[b][ci];
                        if ci == cj {
                            s += 0.5 * (0..3).map(|m| grads[a][m] * grads[b][m]).sum::<f64>();
                            full[p][q] += wq * (0..3).map(|m| grads[a][m] * grads[b][m]).sum::<f64>();
                        }
                        sym[p][q] += wq * s;
                    }
                }
            }
        }
    }
    let mut ts = Triplets::new(3 * g.n_nodes());
    let mut tf = Triplets::new(3 * g.n_nodes());
    for ck in 0..g.cells[2] {
        for cj in 0..g.cells[1] {
            for ci in 0..g.cells[0] {
                let mut gl = [0usize; 24];
                for c in 0..2 {
                    for b in 0..2 {
                        for a in 0..2 {
                            let id = (ci + a) + d[0] * ((cj + b) + d[1] * (ck + c));
                            for m in 0..3 {
                                gl[3 * (a + 2 * b + 4 * c) + m] = 3 * id + m;
                            }
                        }
                    }
                }
                for p in 0..24 {
                    for q in 0..24 {
                        ts.push(gl[p], gl[q], sym[p][q]);
                        tf.push(gl[p], gl[q], full[p][q]);
                    }
                }
            }
        }
    }
    (ts.to_csr(), tf.to_csr())
}

fn korn_margin(sym: &Csr, full: &Csr, v: &[f64]) -> f64 {
    sym.form(v, v) - 0.5 * full.form(v, v)
}

/// Random fields obeying the displacement constraints of the Biot grid (vertical
/// interface values unconstrained).
pub fn korn_suite(grids: &Grids<f64>, samples: usize, seed: u64, tol: f64) -> KornReport {
    let g = &grids.biot;
    let (sym, full) = korn_forms(g);
    let layout = &grids.layout.biot_disp;
    let margins: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let v: Vec<f64> = layout.iter().map(|k| if *k == DofKind::Fixed { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
            let n2: f64 = v.iter().map(|x| x * x).sum();
            korn_margin(&sym, &full, &v) / n2.max(f64::MIN_POSITIVE)
        })
        .collect();
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let nodal = |f: &dyn Fn([f64; 3]) -> [f64; 3]| -> Vec<f64> { (0..g.n_nodes()).flat_map(|i| f(g.node_coord(i))).collect() };
    let shear = nodal(&|x| [x[1], 0.0, 0.0]);
    let stretch = nodal(&|x| [x[0], 0.0, 0.0]);
    let n2: f64 = shear.iter().map(|x| x * x).sum();
    let equality_margin = korn_margin(&sym, &full, &shear) / n2;
    let stretch_margin = korn_margin(&sym, &full, &stretch);
    KornReport {
        samples,
        min_margin,
        equality_margin,
        stretch_margin,
        pass: min_margin >= -tol && equality_margin.abs() <= tol,
    }
}

// ---------------------------------------------------------------------------------
// energy identity replay

/// Raw data of one committed step.
#[derive(Clone, Copy, Debug)]
pub struct StepData<'a> {
    pub before: &'a Snapshot,
    pub after: &'a Snapshot,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub plate_lhs: f64,
    pub plate_rhs: f64,
    pub plate_residual: f64,
    pub coupled_lhs: f64,
    pub coupled_rhs: f64,
    pub coupled_residual: f64,
    pub viscoelastic_dissipation: f64,
}

fn rel_residual(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-30)
}

fn plate_integrals(grids: &Grids<f64>, fields: &[&[f64]]) -> Vec<(f64, f64)> {
    // (int w^2, int (lap w)^2) for each field
    let (x, w) = legendre_rule(4);
    let pg = &grids.plate;
    let area = pg.extent_x / pg.cells[0] as f64 * pg.extent_y / pg.cells[1] as f64;
    let mut out = vec![(0.0, 0.0); fields.len()];
    for cj in 0..pg.cells[1] {
        for ci in 0..pg.cells[0] {
            for (t, wt) in x.iter().zip(&w) {
                for (s, ws) in x.iter().zip(&w) {
                    let q = ws * wt * area;
                    for (f, o) in fields.iter().zip(out.iter_mut()) {
                        let p = plate_point(grids, f, ci, cj, *s, *t);
                        o.0 += q * p.w * p.w;
                        o.1 += q * p.lap * p.lap;
                    }
                }
            }
        }
    }
    out
}

/// Physical gradient rows of a reference vector field under the fluid map.
fn fluid_physical_gradient(r: f64, p: &PlatePoint, zhat: f64, gref: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let lever = 1.0 + zhat / r;
    let a = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, lever * p.wx, lever * p.wy, 1.0 + p.w / r);
    let ait = a.try_inverse().expect("fluid map invertible").transpose();
    let mut out = [[0.0; 3]; 3];
    for c in 0..3 {
        let g = ait * Vector3::new(gref[c][0], gref[c][1], gref[c][2]);
        out[c] = [g[0], g[1], g[2]];
    }
    out
}

#[derive(Default)]
struct FluidSums {
    ke_before: f64,
    ke_after: f64,
    viscous: f64,
    jump: f64,
}

fn fluid_sums(grids: &Grids<f64>, r: f64, d: StepData) -> FluidSums {
    let (x, w) = legendre_rule(4);
    let f = &grids.fluid;
    let h = box_h(f);
    let vol = h[0] * h[1] * h[2];
    let du = sub(&d.after.u, &d.before.u);
    let mut s = FluidSums::default();
    for ck in 0..f.cells[2] {
        for cj in 0..f.cells[1] {
            for ci in 0..f.cells[0] {
                for (tz, wz) in x.iter().zip(&w) {
                    for (ty, wy) in x.iter().zip(&w) {
                        for (tx, wx) in x.iter().zip(&w) {
                            let q = wx * wy * wz * vol;
                            let t = [*tx, *ty, *tz];
                            let zhat = f.z_lo + (ck as f64 + tz) * h[2];
                            let old = plate_point(grids, &d.before.omega, ci, cj, *tx, *ty);
                            let new = plate_point(grids, &d.after.omega, ci, cj, *tx, *ty);
                            let (j_old, j_new) = (1.0 + old.w / r, 1.0 + new.w / r);
                            let (u0, _) = fluid_point(grids, &d.before.u, [ci, cj, ck], t);
                            let (u1, g1) = fluid_point(grids, &d.after.u, [ci, cj, ck], t);
                            let (dv, _) = fluid_point(grids, &du, [ci, cj, ck], t);
                            let gp = fluid_physical_gradient(r, &old, zhat, &g1);
                            s.ke_before += 0.5 * q * j_old * sq(u0);
                            s.ke_after += 0.5 * q * j_new * sq(u1);
                            s.viscous += q * j_old * sym_sq(&gp);
                            s.jump += 0.5 * q * j_old * sq(dv);
                        }
                    }
                }
            }
        }
    }
    s
}

#[derive(Default)]
struct BiotSums {
    ke: [f64; 2],
    storage: [f64; 2],
    sym: [f64; 2],
    div: [f64; 2],
    visc_sym: f64,
    visc_div: f64,
    darcy: f64,
    d_xi: f64,
    d_p: f64,
    d_sym: f64,
    d_div: f64,
}

fn biot_sums(grids: &Grids<f64>, d: StepData) -> BiotSums {
    let (x, w) = legendre_rule(3);
    let g = &grids.biot;
    let h = box_h(g);
    let vol = h[0] * h[1] * h[2];
    let dxi = sub(&d.after.xi, &d.before.xi);
    let dp = sub(&d.after.p, &d.before.p);
    let deta = sub(&d.after.eta, &d.before.eta);
    let reg: Vec<f64> = d.before.eta_delta.iter().flat_map(|v| *v).collect();
    let mut s = BiotSums::default();
    for ck in 0..g.cells[2] {
        for cj in 0..g.cells[1] {
            for ci in 0..g.cells[0] {
                let c = [ci, cj, ck];
                for (tz, wz) in x.iter().zip(&w) {
                    for (ty, wy) in x.iter().zip(&w) {
                        for (tx, wx) in x.iter().zip(&w) {
                            let q = wx * wy * wz * vol;
                            let t = [*tx, *ty, *tz];
                            for (k, snap) in [d.before, d.after].iter().enumerate() {
                                let (xi, _) = biot_vec_point(g, &snap.xi, c, t);
                                let (p, _) = biot_scalar_point(g, &snap.p, c, t);
                                let (_, ge) = biot_vec_point(g, &snap.eta, c, t);
                                s.ke[k] += q * sq(xi);
                                s.storage[k] += q * p * p;
                                s.sym[k] += q * sym_sq(&ge);
                                s.div[k] += q * trace(&ge).powi(2);
                            }
                            let (_, gx) = biot_vec_point(g, &d.after.xi, c, t);
                            s.visc_sym += q * sym_sq(&gx);
                            s.visc_div += q * trace(&gx).powi(2);
                            let (_, gp) = biot_scalar_point(g, &d.after.p, c, t);
                            let (_, gr) = biot_vec_point(g, &reg, c, t);
                            let f = Matrix3::new(
                                1.0 + gr[0][0], gr[0][1], gr[0][2],
                                gr[1][0], 1.0 + gr[1][1], gr[1][2],
                                gr[2][0], gr[2][1], 1.0 + gr[2][2],
                            );
                            let jb = f.determinant();
                            let fit = f.try_inverse().expect("regularized map invertible").transpose();
                            let pg = fit * Vector3::new(gp[0], gp[1], gp[2]);
                            s.darcy += q * jb * pg.norm_squared();
                            let (v, _) = biot_vec_point(g, &dxi, c, t);
                            let (pv, _) = biot_scalar_point(g, &dp, c, t);
                            let (_, ge) = biot_vec_point(g, &deta, c, t);
                            s.d_xi += q * sq(v);
                            s.d_p += q * pv * pv;
                            s.d_sym += q * sym_sq(&ge);
                            s.d_div += q * trace(&ge).powi(2);
                        }
                    }
                }
            }
        }
    }
    s
}

fn slip_sum(grids: &Grids<f64>, d: StepData) -> f64 {
    let (x, w) = legendre_rule(4);
    let pg = &grids.plate;
    let area = pg.extent_x / pg.cells[0] as f64 * pg.extent_y / pg.cells[1] as f64;
    let top = grids.fluid.cells[2] - 1;
    let mut total = 0.0;
    for cj in 0..pg.cells[1] {
        for ci in 0..pg.cells[0] {
            for (t, wt) in x.iter().zip(&w) {
                for (s, ws) in x.iter().zip(&w) {
                    let p = plate_point(grids, &d.before.omega, ci, cj, *s, *t);
                    let (u, _) = fluid_point(grids, &d.after.u, [ci, cj, top], [*s, *t, 1.0]);
                    let (xi, _) = biot_vec_point(&grids.biot, &d.after.xi, [ci, cj, 0], [*s, *t, 0.0]);
                    let jg = (1.0 + p.wx * p.wx + p.wy * p.wy).sqrt();
                    let t1 = [1.0, 0.0, p.wx];
                    let t2 = [0.0, 1.0, p.wy];
                    let rel = [xi[0] - u[0], xi[1] - u[1], xi[2] - u[2]];
                    let a = (rel[0] * t1[0] + rel[2] * t1[2]).powi(2) / sq(t1);
                    let b = (rel[1] * t2[1] + rel[2] * t2[2]).powi(2) / sq(t2);
                    total += ws * wt * area * jg * (a + b);
                }
            }
        }
    }
    total
}

/// Recompute both energy identities of one step from raw states.
pub fn identity_replay(grids: &Grids<f64>, phys: &Physics, depth: f64, dt: f64, d: StepData) -> ReplayReport {
    let a = d.after;
    let b = d.before;
    // plate substep: (omega^{n-1/2}, zeta^n) -> (omega^{n+1/2}, zeta^{n+1/2})
    let dz_p = sub(&a.zeta_half, &b.zeta);
    let dw_p = sub(&a.omega, &b.omega);
    let dz_c = sub(&a.zeta, &a.zeta_half);
    let pl = plate_integrals(grids, &[&a.zeta_half, &b.zeta, &dz_p, &dz_c, &a.zeta]);
    let pk = plate_integrals(grids, &[&a.omega, &b.omega, &dw_p]);
    let rp = phys.rho_p;
    let plate_lhs = 0.5 * rp * pl[0].0 + 0.5 * pk[0].1 + 0.5 * rp * pl[2].0 + 0.5 * pk[2].1;
    let plate_rhs = 0.5 * rp * pl[1].0 + 0.5 * pk[1].1;

    let fl = fluid_sums(grids, depth, d);
    let bi = biot_sums(grids, d);
    let slip = slip_sum(grids, d);
    let bending = 0.5 * pk[0].1;
    let e_half = fl.ke_before
        + 0.5 * phys.rho_b * bi.ke[0]
        + 0.5 * rp * pl[0].0
        + 0.5 * phys.c0 * bi.storage[0]
        + phys.mu_e * bi.sym[0]
        + 0.5 * phys.lambda_e * bi.div[0]
        + bending;
    let e_new = fl.ke_after
        + 0.5 * phys.rho_b * bi.ke[1]
        + 0.5 * rp * pl[4].0
        + 0.5 * phys.c0 * bi.storage[1]
        + phys.mu_e * bi.sym[1]
        + 0.5 * phys.lambda_e * bi.div[1]
        + bending;
    let visco = 2.0 * phys.mu_v * dt * bi.visc_sym + phys.lambda_v * dt * bi.visc_div;
    let diss = 2.0 * phys.nu * dt * fl.viscous + visco + phys.kappa * dt * bi.darcy + phys.beta * dt * slip;
    let numerical = fl.jump
        + 0.5 * phys.rho_b * bi.d_xi
        + 0.5 * rp * pl[3].0
        + 0.5 * phys.c0 * bi.d_p
        + phys.mu_e * bi.d_sym
        + 0.5 * phys.lambda_e * bi.d_div;
    let coupled_lhs = e_new + diss + numerical;
    ReplayReport {
        plate_lhs,
        plate_rhs,
        plate_residual: rel_residual(plate_lhs, plate_rhs),
        coupled_lhs,
        coupled_rhs: e_half,
        // the bending energy of omega^{n+1/2} sits on both sides unchanged; keeping it out
        // of the scale stops a stiff plate from masking errors in the other terms
        coupled_residual: (coupled_lhs - e_half).abs() / (coupled_lhs - bending).abs().max((e_half - bending).abs()).max(1e-30),
        viscoelastic_dissipation: visco,
    }
}

/// Replay every committed step of a trajectory.
pub fn replay_trajectory(grids: &Grids<f64>, phys: &Physics, depth: f64, traj: &Trajectory) -> Vec<ReplayReport> {
    traj.snapshots
        .windows(2)
        .map(|w| identity_replay(grids, phys, depth, traj.dt, StepData { before: &w[0], after: &w[1] }))
        .collect()
}

// ---------------------------------------------------------------------------------
// finite-difference checks of the transformed gradients

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub steps: Vec<f64>,
    pub fluid_errors: Vec<f64>,
    pub fluid_orders: Vec<f64>,
    pub biot_errors: Vec<f64>,
    pub biot_orders: Vec<f64>,
    /// max deviation from the raw partials when omega = 0.
    pub flat_error: f64,
    pub pass: bool,
}

fn g_ref(p: [f64; 3]) -> f64 {
    let [x, y, z] = p;
    x * x * y - 0.3 * z * z * z + x * z + 0.5 * y * y * z
}

fn g_ref_grad(p: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = p;
    [2.0 * x * y + z, x * x + y * z, -0.9 * z * z + x + 0.5 * y * y]
}

fn plate_bump(l: f64, amp: f64, x: f64, y: f64) -> PlateGeometryEval<f64> {
    let (sx, dx) = bump_profile(x, l);
    let (sy, dy) = bump_profile(y, l);
    PlateGeometryEval { omega: amp * sx * sy, dx: amp * dx * sy, dy: amp * sx * dy }
}

fn eta_bump(l: f64, r: f64, p: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let (sx, dx) = bump_profile(p[0], l);
    let (sy, dy) = bump_profile(p[1], l);
    let (sz, dz) = bump_profile(p[2], r);
    let b = sx * sy * sz;
    let gb = [dx * sy * sz, sx * dy * sz, sx * sy * dz];
    let amp = [0.05, -0.03, 0.05];
    let mut grad = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            grad[i][j] = amp[i] * gb[j];
        }
    }
    ([amp[0] * b, amp[1] * b, amp[2] * b], grad)
}

/// Reference point of a physical point under x -> x + eta(x), by Newton's method.
fn biot_inverse(l: f64, r: f64, y: [f64; 3]) -> [f64; 3] {
    let mut x = y;
    for _ in 0..50 {
        let (e, g) = eta_bump(l, r, x);
        let res = Vector3::new(x[0] + e[0] - y[0], x[1] + e[1] - y[1], x[2] + e[2] - y[2]);
        let jac = Matrix3::new(1.0 + g[0][0], g[0][1], g[0][2], g[1][0], 1.0 + g[1][1], g[1][2], g[2][0], g[2][1], 1.0 + g[2][2]);
        let dx = jac.lu().solve(&res).expect("nonsingular");
        for a in 0..3 {
            x[a] -= dx[a];
        }
        if dx.norm() < 1e-15 {
            break;
        }
    }
    x
}

/// Reference point of a physical fluid point, by Newton's method on the vertical map.
fn fluid_inverse(l: f64, r: f64, amp: f64, y: [f64; 3]) -> [f64; 3] {
    let w = plate_bump(l, amp, y[0], y[1]).omega;
    let mut z = y[2];
    for _ in 0..50 {
        let f = z + (1.0 + z / r) * w - y[2];
        let dz = f / (1.0 + w / r);
        z -= dz;
        if dz.abs() < 1e-16 {
            break;
        }
    }
    [y[0], y[1], z]
}

fn orders(errors: &[f64], steps: &[f64]) -> Vec<f64> {
    errors.windows(2).zip(steps.windows(2)).map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect()
}

pub fn operator_fd_suite(length: f64, depth: f64, steps: &[f64], min_order: f64) -> FdReport {
    let (l, r) = (length, depth);
    let amp = 0.1 * r;
    let n = 4;
    let pts = |z0: f64, z1: f64| -> Vec<[f64; 3]> {
        let mut v = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let c = |m: usize| (m as f64 + 0.5) / n as f64;
                    v.push([c(i) * l, c(j) * l, z0 + c(k) * (z1 - z0)]);
                }
            }
        }
        v
    };
    let fluid_pts = pts(-r, 0.0);
    let biot_pts = pts(0.0, r);
    let mut flat_error = 0.0f64;
    for p in &fluid_pts {
        let g = g_ref_grad(*p);
        let t = transformed_fluid_gradient(r, &PlateGeometryEval::flat(), p[2], g, 1e-12).unwrap();
        for a in 0..3 {
            flat_error = flat_error.max((t[a] - g[a]).abs());
        }
    }
    let mut fluid_errors = Vec::new();
    let mut biot_errors = Vec::new();
    for &h in steps {
        let mut ef = 0.0f64;
        for p in &fluid_pts {
            let w = plate_bump(l, amp, p[0], p[1]);
            let t = transformed_fluid_gradient(r, &w, p[2], g_ref_grad(*p), 1e-12).unwrap();
            let y = [p[0], p[1], p[2] + (1.0 + p[2] / r) * w.omega];
            for a in 0..3 {
                let mut yp = y;
                let mut ym = y;
                yp[a] += h;
                ym[a] -= h;
                let fd = (g_ref(fluid_inverse(l, r, amp, yp)) - g_ref(fluid_inverse(l, r, amp, ym))) / (2.0 * h);
                ef = ef.max((fd - t[a]).abs());
            }
        }
        fluid_errors.push(ef);
        let mut eb = 0.0f64;
        for p in &biot_pts {
            let (e, grad) = eta_bump(l, r, *p);
            let geo = biot_geometry(e, grad).unwrap();
            let t = crate::kinematics::transformed_biot_gradient(&geo, g_ref_grad(*p));
            let y = [p[0] + e[0], p[1] + e[1], p[2] + e[2]];
            for a in 0..3 {
                let mut yp = y;
                let mut ym = y;
                yp[a] += h;
                ym[a] -= h;
                let fd = (g_ref(biot_inverse(l, r, yp)) - g_ref(biot_inverse(l, r, ym))) / (2.0 * h);
                eb = eb.max((fd - t[a]).abs());
            }
        }
        biot_errors.push(eb);
    }
    let fluid_orders = orders(&fluid_errors, steps);
    let biot_orders = orders(&biot_errors, steps);
    let pass = flat_error <= 1e-12 && fluid_orders.iter().chain(&biot_orders).all(|o| *o >= min_order);
    FdReport { steps: steps.to_vec(), fluid_errors, fluid_orders, biot_errors, biot_orders, flat_error, pass }
}

// ---------------------------------------------------------------------------------
// dense oracles

fn dense(a: &Csr) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.n, a.n);
    for r in 0..a.n {
        for q in a.indptr[r]..a.indptr[r + 1] {
            m[(r, a.indices[q])] += a.data[q];
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseSolveCheck {
    /// max |x_sparse - x_dense| / max |x_dense|.
    pub difference: f64,
    /// 2-norm condition number from a dense SVD.
    pub condition: f64,
    /// |A x - b| / (|A| |x| + |b|) for the sparse solution, in dense arithmetic.
    pub backward_error: f64,
}

impl DenseSolveCheck {
    /// Forward agreement within what the conditioning allows, and a backward-stable solve.
    pub fn pass(&self) -> bool {
        self.difference <= 1e-13 * self.condition.max(1.0) && self.backward_error <= 1e-12
    }
}

pub fn dense_solve_check(sys: &CoupledSystem, x: &[f64]) -> DenseSolveCheck {
    let m = dense(&sys.matrix);
    let b = DVector::from_column_slice(&sys.rhs);
    let y = m.clone().lu().solve(&b).expect("dense system nonsingular");
    let scale = y.amax().max(1e-300);
    let difference = x.iter().zip(y.iter()).fold(0.0f64, |e, (a, b)| e.max((a - b).abs())) / scale;
    let sv = m.clone().svd(false, false).singular_values;
    let condition = sv.max() / sv.min();
    let xs = DVector::from_column_slice(x);
    let backward_error = (&m * &xs - &b).norm() / (m.norm() * xs.norm() + b.norm()).max(1e-300);
    DenseSolveCheck { difference, condition, backward_error }
}

/// Smallest eigenvalue of the symmetric part of the system matrix on the constrained
/// space, i.e. with the multiplier unknowns removed.
pub fn symmetric_part_min_eigenvalue(sys: &CoupledSystem) -> f64 {
    let c = &sys.constraint;
    let mut keep: Vec<usize> = (0..c.off.total)
        .filter(|&i| i < c.off.pi || i >= c.off.xi)
        .filter_map(|i| c.map[i])
        .collect();
    keep.sort_unstable();
    keep.dedup();
    let m = restrict_dense(&sys.matrix, &keep);
    let s = (&m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

fn restrict_dense(a: &Csr, free: &[usize]) -> DMatrix<f64> {
    let full = dense(a);
    DMatrix::from_fn(free.len(), free.len(), |i, j| full[(free[i], free[j])])
}

/// Smallest generalized eigenvalue of (K, M) on the clamped space by a dense solve.
pub fn plate_min_eigenvalue_dense(ops: &PlateOperators) -> f64 {
    let k = restrict_dense(&ops.bending, &ops.free);
    let m = restrict_dense(&ops.mass, &ops.free);
    let l = m.cholesky().expect("mass matrix positive definite").l();
    let li = l.clone().try_inverse().expect("invertible factor");
    let c = &li * k * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    c.symmetric_eigenvalues().min()
}

/// Plate recursion advanced with dense algebra: returns (omega, zeta) after `steps`.
pub fn plate_dense_trajectory(ops: &PlateOperators, omega: &[f64], zeta: &[f64], dt: f64, rho: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let k = restrict_dense(&ops.bending, &ops.free);
    let m = restrict_dense(&ops.mass, &ops.free);
    let a = &m * (rho / dt) + &k * dt;
    let lu = a.lu();
    let pick = |v: &[f64]| DVector::from_iterator(ops.free.len(), ops.free.iter().map(|&i| v[i]));
    let mut w = pick(omega);
    let mut z = pick(zeta);
    for _ in 0..steps {
        let rhs = &m * &z * (rho / dt) - &k * &w;
        z = lu.solve(&rhs).expect("nonsingular");
        w += &z * dt;
    }
    let mut wo = vec![0.0; omega.len()];
    let mut zo = vec![0.0; zeta.len()];
    for (i, &f) in ops.free.iter().enumerate() {
        wo[f] = w[i];
        zo[f] = z[i];
    }
    (wo, zo)
}

// ---------------------------------------------------------------------------------
// combined report

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: OracleConfig,
    pub korn: KornReport,
    pub replay: Vec<ReplayReport>,
    pub replay_max_residual: f64,
    pub replay_corrupted_residual: f64,
    pub fd: FdReport,
    pub dense_solve: DenseSolveCheck,
    pub symmetric_part_min_eigenvalue: f64,
    pub plate_eigenvalue_sparse: f64,
    pub plate_eigenvalue_dense: f64,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Replay residual of the first committed step after adding 1e-3 to the horizontal
/// velocity coefficient nearest the center of the fluid box.
pub fn corruption_probe(pb: &Problem, init: &crate::config::InitialState) -> Result<f64> {
    let mut cfg = pb.config.clone();
    cfg.time.steps = 1;
    cfg.time.t_final = pb.dt();
    let one = Problem::new(&cfg)?;
    let out = run(&one, init)?;
    let snaps = &out.trajectory.snapshots;
    let q2 = &one.grids.fluid_q2;
    let g = &cfg.geometry;
    let center = [0.5 * g.length, 0.5 * g.length, -0.5 * g.depth];
    let node = (0..q2.n_nodes())
        .min_by(|&a, &b| {
            let d = |i: usize| {
                let x = q2.node_coord(i);
                (0..3).map(|k| (x[k] - center[k]).powi(2)).sum::<f64>()
            };
            d(a).total_cmp(&d(b))
        })
        .unwrap_or(0);
    let mut bad = snaps[1].clone();
    bad.u[3 * node] += 1e-3;
    Ok(identity_replay(&one.grids, &cfg.physics, one.depth(), one.dt(), StepData { before: &snaps[0], after: &bad }).coupled_residual)
}

/// A 2x2x2 copy of `cfg` with a kernel that resolves the coarse grid.
pub fn tiny_config(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.geometry.cells_x = 2;
    c.geometry.cells_y = 2;
    c.geometry.cells_fluid_z = 2;
    c.geometry.cells_biot_z = 2;
    c.regularization.delta = 0.75 * c.geometry.length.min(c.geometry.depth);
    c.regularization.min_cells_per_radius = 1.0;
    c
}

/// Every oracle suite on the geometry of `cfg`; dense checks on its 2x2x2 copy.
pub fn run_validation(cfg: &RunConfig, oc: &OracleConfig) -> Result<ValidationReport> {
    let mut failures = Vec::new();

    let mut kc = cfg.clone();
    kc.geometry.cells_x = oc.korn_cells[0];
    kc.geometry.cells_y = oc.korn_cells[1];
    kc.geometry.cells_biot_z = oc.korn_cells[2];
    let kgrids = crate::mesh::build_grids(&kc.geometry.spec())?;
    let korn = korn_suite(&kgrids, oc.korn_samples, oc.seed, oc.korn_tol);
    if !korn.pass {
        failures.push(format!("korn: min margin {:e}, equality margin {:e}", korn.min_margin, korn.equality_margin));
    }

    let mut rc = cfg.clone();
    rc.time.steps = oc.replay_steps.min(cfg.time.steps).max(1);
    rc.time.t_final = cfg.time.dt() * rc.time.steps as f64;
    let pb = Problem::new(&rc)?;
    let init = preset_state(&pb.grids, Preset::Random, oc.seed);
    let out = run(&pb, &init)?;
    let replay = replay_trajectory(&pb.grids, &rc.physics, pb.depth(), &out.trajectory);
    let mut replay_max_residual = 0.0f64;
    for (k, r) in replay.iter().enumerate() {
        replay_max_residual = replay_max_residual.max(r.plate_residual).max(r.coupled_residual);
        if r.plate_residual > oc.replay_tol || r.coupled_residual > oc.replay_tol {
            failures.push(format!("replay step {k}: plate {:e}, coupled {:e}", r.plate_residual, r.coupled_residual));
        }
    }

    let fd = operator_fd_suite(cfg.geometry.length, cfg.geometry.depth, &oc.fd_steps, oc.fd_min_order);
    if !fd.pass {
        failures.push(format!("finite differences: fluid orders {:?}, biot orders {:?}, flat {:e}", fd.fluid_orders, fd.biot_orders, fd.flat_error));
    }

    let tc = tiny_config(cfg);
    let tp = Problem::new(&tc)?;
    let ti = preset_state(&tp.grids, Preset::Random, oc.seed);
    let replay_corrupted_residual = corruption_probe(&tp, &ti)?;
    if replay_corrupted_residual <= 1e-6 {
        failures.push(format!("replay missed a corrupted coefficient: {replay_corrupted_residual:e}"));
    }
    let phys = tc.physics;
    let dt = tp.dt();
    let (plate_new, _) = plate_step(&tp.plate, &PlateState { omega: ti.omega.clone(), zeta: ti.zeta.clone() }, dt, phys.rho_p, tc.solver.linear_tol)?;
    let cache = build_geometry_cache(&tp.grids, &ti.omega, &plate_new.zeta, tp.regularize(&ti.eta)?, tp.depth(), 0.0)?;
    let lag = Lagged { u: &ti.u, xi: &ti.xi, eta: &ti.eta, p: &ti.p, zeta_half: &plate_new.zeta };
    let sys = assemble_system(&tp.grids, &cache, &tp.plate, &lag, &phys, dt);
    let (x, _) = Factorization::new(&sys.matrix)?.solve(&sys.rhs, tc.solver.linear_tol)?;
    let dense_solve = dense_solve_check(&sys, &x);
    if !dense_solve.pass() {
        failures.push(format!(
            "sparse and dense solves differ by {:e} (condition {:e}, backward error {:e})",
            dense_solve.difference, dense_solve.condition, dense_solve.backward_error
        ));
    }
    let symmetric_part_min_eigenvalue = symmetric_part_min_eigenvalue(&sys);
    if !(symmetric_part_min_eigenvalue > 0.0) {
        failures.push(format!("symmetric part not positive definite: {symmetric_part_min_eigenvalue:e}"));
    }

    let plate_eigenvalue_sparse = smallest_eigenvalue(&pb.plate, 500)?;
    let plate_eigenvalue_dense = plate_min_eigenvalue_dense(&pb.plate);
    if (plate_eigenvalue_sparse - plate_eigenvalue_dense).abs() > 1e-8 * plate_eigenvalue_dense {
        failures.push(format!("plate eigenvalue: sparse {plate_eigenvalue_sparse} vs dense {plate_eigenvalue_dense}"));
    }

    Ok(ValidationReport {
        config: oc.clone(),
        korn,
        replay,
        replay_max_residual,
        replay_corrupted_residual,
        fd,
        dense_solve,
        symmetric_part_min_eigenvalue,
        plate_eigenvalue_sparse,
        plate_eigenvalue_dense,
        failures,
    })
}
