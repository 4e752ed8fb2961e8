//! Fluid-Biot substep: one linear saddle-point solve on the fixed reference boxes with
//! lagged geometry, and its energy audit.

use crate::basis;
use crate::energy::{self, Dissipation, EnergyComponents, NumericalCoupled};
use crate::error::{check_len, Result};
use crate::fields;
use crate::geometry::{GeometryCache, BIOT_ORDER};
use crate::mesh::{DofKind, Grids};
use crate::plate::PlateOperators;
use crate::quadrature::gauss_cube;
use crate::sparse::{Csr, Factorization, Triplets};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Material coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub rho_b: f64,
    pub c0: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub mu_e: f64,
    pub lambda_e: f64,
    pub mu_v: f64,
    pub lambda_v: f64,
    pub rho_p: f64,
    pub nu: f64,
    pub beta: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            rho_b: 1.0,
            c0: 1.0,
            alpha: 1.0,
            kappa: 1.0,
            mu_e: 1.0,
            lambda_e: 1.0,
            mu_v: 0.1,
            lambda_v: 0.1,
            rho_p: 1.0,
            nu: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    pub u: Vec<f64>,
    pub pi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiotState {
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    pub p: Vec<f64>,
}

/// Offsets of each field in the full (unconstrained) unknown vector.
#[derive(Clone, Copy, Debug)]
pub struct Offsets {
    pub u: usize,
    pub pi: usize,
    pub xi: usize,
    pub p: usize,
    pub z: usize,
    pub total: usize,
}

impl Offsets {
    pub fn new(grids: &Grids<f64>) -> Self {
        let l = &grids.layout;
        let u = 0;
        let pi = u + l.n_fluid_u();
        let xi = pi + l.fluid_pi;
        let p = xi + l.n_biot_disp();
        let z = p + l.n_biot_p();
        Self { u, pi, xi, p, z, total: z + l.n_plate() }
    }
}

/// Full-to-reduced index map realizing the Dirichlet masks and the interface tie.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub off: Offsets,
    pub map: Vec<Option<usize>>,
    pub n: usize,
}

impl Constraint {
    pub fn new(grids: &Grids<f64>) -> Self {
        let off = Offsets::new(grids);
        let l = &grids.layout;
        let mut map = vec![None; off.total];
        let mut n = 0;
        let mut take = |slot: &mut Option<usize>| {
            *slot = Some(n);
            n += 1;
        };
        for (i, free) in l.fluid_u.iter().enumerate() {
            if *free {
                take(&mut map[off.u + i]);
            }
        }
        for i in 0..l.fluid_pi {
            take(&mut map[off.pi + i]);
        }
        for (i, kind) in l.biot_disp.iter().enumerate() {
            if *kind == DofKind::Free {
                take(&mut map[off.xi + i]);
            }
        }
        for (i, free) in l.biot_p.iter().enumerate() {
            if *free {
                take(&mut map[off.p + i]);
            }
        }
        for (i, free) in l.plate.iter().enumerate() {
            if *free {
                take(&mut map[off.z + i]);
            }
        }
        for (i, kind) in l.biot_disp.iter().enumerate() {
            if let DofKind::Tied(node) = kind {
                map[off.xi + i] = map[off.z + 4 * node];
            }
        }
        Self { off, map, n }
    }

    /// Row scaling: fluid, multiplier and pore-pressure test functions carry dt.
    pub fn row_scale(&self, row: usize, dt: f64) -> f64 {
        if row < self.off.xi || (row >= self.off.p && row < self.off.z) {
            dt
        } else {
            1.0
        }
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.map.iter().map(|m| m.map_or(0.0, |i| x[i])).collect()
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, m) in self.map.iter().enumerate() {
            if let Some(r) = m {
                out[*r] += full[i];
            }
        }
        out
    }
}

/// Unscaled bilinear-form entries and load vector in full numbering.
#[derive(Clone, Debug, Default)]
pub struct Blocks {
    pub entries: Vec<(usize, usize, f64)>,
    pub rhs: Vec<(usize, f64)>,
}

impl Blocks {
    fn extend(&mut self, other: Blocks) {
        self.entries.extend(other.entries);
        self.rhs.extend(other.rhs);
    }

    /// Sum duplicate entries into a full-size dense map (small problems only).
    pub fn to_csr(&self, n: usize) -> Csr {
        let mut t = Triplets::new(n);
        for &(r, c, v) in &self.entries {
            t.push(r, c, v);
        }
        t.to_csr()
    }

    pub fn rhs_vector(&self, n: usize) -> Vec<f64> {
        let mut b = vec![0.0; n];
        for &(r, v) in &self.rhs {
            b[r] += v;
        }
        b
    }
}

/// Lagged data entering one fluid-Biot solve.
#[derive(Clone, Copy, Debug)]
pub struct Lagged<'a> {
    pub u: &'a [f64],
    pub xi: &'a [f64],
    pub eta: &'a [f64],
    pub p: &'a [f64],
    /// Plate velocity after the plate substep.
    pub zeta_half: &'a [f64],
}

/// Volume fluid forms: weighted mass, viscous, skew convection, reaction and the
/// divergence constraint with its transpose.
pub fn assemble_fluid_forms(grids: &Grids<f64>, cache: &GeometryCache, off: &Offsets, u_n: &[f64], phys: &Physics, dt: f64) -> Blocks {
    let f = &grids.fluid;
    let h = f.spacing();
    let r = cache.depth;
    let nq = cache.fluid_rule;
    let parts: Vec<Blocks> = (0..f.n_cells())
        .into_par_iter()
        .map(|e| {
            let q2 = f.cell_nodes_q2(e);
            let q1 = f.cell_nodes(e);
            let mut uu = vec![0.0; 81 * 81];
            let mut up = vec![0.0; 81 * 8];
            let mut rhs = vec![0.0; 81];
            for qp in &cache.fluid[e * nq..(e + 1) * nq] {
                let (phi, dref) = basis::q2_3d(qp.loc);
                let (psi, _) = basis::q1_3d(qp.loc);
                let mut g = [[0.0; 3]; 27];
                for a in 0..27 {
                    let d = [dref[a][0] / h[0], dref[a][1] / h[1], dref[a][2] / h[2]];
                    g[a] = crate::kinematics::mat_vec(&qp.g, d);
                }
                let mut un = [0.0; 3];
                for a in 0..27 {
                    for c in 0..3 {
                        un[c] += phi[a] * u_n[3 * q2[a] + c];
                    }
                }
                let wvel = [un[0], un[1], un[2] - qp.zeta * (r + qp.zhat) / r];
                let wg: Vec<f64> = (0..27).map(|a| wvel[0] * g[a][0] + wvel[1] * g[a][1] + wvel[2] * g[a][2]).collect();
                let w = qp.weight;
                let jw = qp.jac * w;
                for a in 0..27 {
                    for b in 0..27 {
                        let pp = phi[a] * phi[b];
                        let gg = g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2];
                        let diag = jw / dt * pp
                            + w * qp.zeta / (2.0 * r) * pp
                            + 0.5 * jw * (wg[b] * phi[a] - wg[a] * phi[b])
                            + phys.nu * jw * gg;
                        for i in 0..3 {
                            for j in 0..3 {
                                let mut v = phys.nu * jw * g[a][j] * g[b][i];
                                if i == j {
                                    v += diag;
                                }
                                uu[(3 * a + i) * 81 + 3 * b + j] += v;
                            }
                        }
                    }
                    for i in 0..3 {
                        for c in 0..8 {
                            up[(3 * a + i) * 8 + c] += -jw * psi[c] * g[a][i];
                        }
                        rhs[3 * a + i] += jw / dt * phi[a] * un[i];
                    }
                }
            }
            let mut out = Blocks::default();
            for a in 0..81 {
                let ra = off.u + 3 * q2[a / 3] + a % 3;
                for b in 0..81 {
                    let cb = off.u + 3 * q2[b / 3] + b % 3;
                    out.entries.push((ra, cb, uu[a * 81 + b]));
                }
                for c in 0..8 {
                    let v = up[a * 8 + c];
                    out.entries.push((ra, off.pi + q1[c], v));
                    out.entries.push((off.pi + q1[c], ra, v));
                }
                out.rhs.push((ra, rhs[a]));
            }
            out
        })
        .collect();
    let mut all = Blocks::default();
    for p in parts {
        all.extend(p);
    }
    all
}

/// Interface coupling: Bernoulli pressure term, normal transport, slip friction and
/// the two pore-pressure flux terms.
pub fn assemble_interface_forms(grids: &Grids<f64>, cache: &GeometryCache, off: &Offsets, u_n: &[f64], phys: &Physics) -> Blocks {
    let f = &grids.fluid;
    let b = &grids.biot;
    let nz = f.cells[2];
    let nq = cache.gamma_rule;
    let nxc = grids.plate.cells[0];
    let parts: Vec<Blocks> = (0..grids.plate.n_cells())
        .into_par_iter()
        .map(|e| {
            let (ci, cj) = (e % nxc, e / nxc);
            let fe = ci + f.cells[0] * (cj + f.cells[1] * (nz - 1));
            let q2 = f.cell_nodes_q2(fe);
            let fl: Vec<usize> = (0..9).map(|m| q2[18 + m]).collect();
            let be = ci + b.cells[0] * cj;
            let bn = b.cell_nodes(be);
            let bl = &bn[0..4];
            // local unknowns: fluid 27 (9 nodes x 3), xi 12 (4 x 3), p 4
            let mut mat = vec![0.0; 43 * 43];
            let fu = |m: usize, i: usize| 3 * m + i;
            let bx = |k: usize, i: usize| 27 + 3 * k + i;
            let bp = |k: usize| 39 + k;
            for qp in &cache.gamma[e * nq..(e + 1) * nq] {
                let chi = basis::q2_2d(qp.s, qp.t);
                let (psi, _) = basis::q1_2d(qp.s, qp.t);
                let mut un = [0.0; 3];
                for m in 0..9 {
                    for c in 0..3 {
                        un[c] += chi[m] * u_n[3 * fl[m] + c];
                    }
                }
                let n = qp.frame.normal;
                let nd = qp.normal_delta;
                let w = qp.weight;
                let mut tt = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        tt[i][j] = phys.beta * qp.frame.jacobian * (qp.frame.tau1[i] * qp.frame.tau1[j] + qp.frame.tau2[i] * qp.frame.tau2[j]);
                    }
                }
                let mut add = |r: usize, c: usize, v: f64| mat[r * 43 + c] += w * v;
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..4 {
                            // Bernoulli term tested with psi
                            for m in 0..9 {
                                add(bx(k, i), fu(m, j), 0.5 * un[j] * chi[m] * psi[k] * n[i]);
                            }
                            for l in 0..4 {
                                add(bx(k, i), bx(l, j), tt[i][j] * psi[k] * psi[l]);
                            }
                            for m in 0..9 {
                                add(bx(k, i), fu(m, j), -tt[i][j] * psi[k] * chi[m]);
                                add(fu(m, i), bx(k, j), -tt[i][j] * chi[m] * psi[k]);
                                // transport term, xi part
                                add(fu(m, i), bx(k, j), -0.5 * psi[k] * n[j] * un[i] * chi[m]);
                            }
                        }
                        for mr in 0..9 {
                            for mc in 0..9 {
                                add(fu(mr, i), fu(mc, j), -0.5 * un[j] * chi[mc] * chi[mr] * n[i] + 0.5 * chi[mc] * n[j] * un[i] * chi[mr] + tt[i][j] * chi[mr] * chi[mc]);
                            }
                        }
                    }
                    for l in 0..4 {
                        for k in 0..4 {
                            add(bx(k, i), bp(l), -psi[l] * psi[k] * n[i]);
                            add(bp(l), bx(k, i), -phys.alpha * nd[i] * psi[k] * psi[l] + n[i] * psi[k] * psi[l]);
                        }
                        for m in 0..9 {
                            add(fu(m, i), bp(l), psi[l] * chi[m] * n[i]);
                            add(bp(l), fu(m, i), -n[i] * chi[m] * psi[l]);
                        }
                    }
                }
            }
            let glob = |a: usize| -> usize {
                if a < 27 {
                    off.u + 3 * fl[a / 3] + a % 3
                } else if a < 39 {
                    off.xi + 3 * bl[(a - 27) / 3] + (a - 27) % 3
                } else {
                    off.p + bl[a - 39]
                }
            };
            let mut out = Blocks::default();
            for r in 0..43 {
                for c in 0..43 {
                    let v = mat[r * 43 + c];
                    if v != 0.0 {
                        out.entries.push((glob(r), glob(c), v));
                    }
                }
            }
            out
        })
        .collect();
    let mut all = Blocks::default();
    for p in parts {
        all.extend(p);
    }
    all
}

/// Biot volume forms with eta^{n+1} = eta^n + dt xi substituted.
pub fn assemble_biot_forms(grids: &Grids<f64>, cache: &GeometryCache, off: &Offsets, lag: &Lagged, phys: &Physics, dt: f64) -> Blocks {
    let b = &grids.biot;
    let h = b.spacing();
    let vol = h[0] * h[1] * h[2];
    let rule = gauss_cube::<f64>(BIOT_ORDER);
    let nq = rule.len();
    let ke = 2.0 * phys.mu_e * dt + 2.0 * phys.mu_v;
    let le = phys.lambda_e * dt + phys.lambda_v;
    let parts: Vec<Blocks> = (0..b.n_cells())
        .into_par_iter()
        .map(|e| {
            let nodes = b.cell_nodes(e);
            let mut xx = [[0.0; 24]; 24];
            let mut xp = [[0.0; 8]; 24];
            let mut px = [[0.0; 24]; 8];
            let mut pp = [[0.0; 8]; 8];
            let mut rx = [0.0; 24];
            let mut rp = [0.0; 8];
            for (q, (loc, wq)) in rule.iter().enumerate() {
                let geo = &cache.biot.qp[e * nq + q];
                let w = wq * vol;
                let (psi, dref) = basis::q1_3d(*loc);
                let d: Vec<[f64; 3]> = (0..8).map(|a| [dref[a][0] / h[0], dref[a][1] / h[1], dref[a][2] / h[2]]).collect();
                let (_, ge) = fields::q1_vector_cell(b, lag.eta, e, *loc);
                let (xin, _) = fields::q1_vector_cell(b, lag.xi, e, *loc);
                let (pn, _) = fields::q1_scalar_cell(b, lag.p, e, *loc);
                let mut sym = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        sym[i][j] = 0.5 * (ge[i][j] + ge[j][i]);
                    }
                }
                let div = ge[0][0] + ge[1][1] + ge[2][2];
                let cof = geo.cof;
                let cg: Vec<[f64; 3]> = (0..8).map(|a| crate::kinematics::mat_vec(&cof, d[a])).collect();
                for k in 0..8 {
                    for l in 0..8 {
                        let gg = d[k][0] * d[l][0] + d[k][1] * d[l][1] + d[k][2] * d[l][2];
                        let mass = psi[k] * psi[l];
                        for i in 0..3 {
                            for j in 0..3 {
                                let mut v = 0.5 * ke * d[k][j] * d[l][i] + le * d[k][i] * d[l][j];
                                if i == j {
                                    v += phys.rho_b / dt * mass + 0.5 * ke * gg;
                                }
                                xx[3 * k + i][3 * l + j] += w * v;
                            }
                        }
                        let cc = cg[k][0] * cg[l][0] + cg[k][1] * cg[l][1] + cg[k][2] * cg[l][2];
                        pp[k][l] += w * (phys.c0 / dt * mass + phys.kappa * cc / geo.det);
                    }
                    for i in 0..3 {
                        // -alpha p cof : grad(psi_k e_i), row xi, column p
                        for l in 0..8 {
                            xp[3 * k + i][l] += -w * phys.alpha * psi[l] * cg[k][i];
                            // -alpha xi . cof grad r, row p = l, column xi (k, i)
                            px[l][3 * k + i] += -w * phys.alpha * psi[k] * cg[l][i];
                        }
                        let dsym: f64 = (0..3).map(|j| sym[i][j] * d[k][j]).sum();
                        rx[3 * k + i] += w * (phys.rho_b / dt * xin[i] * psi[k] - 2.0 * phys.mu_e * dsym - phys.lambda_e * div * d[k][i]);
                    }
                    rp[k] += w * phys.c0 / dt * pn * psi[k];
                }
            }
            let gx = |a: usize| off.xi + 3 * nodes[a / 3] + a % 3;
            let gp = |a: usize| off.p + nodes[a];
            let mut out = Blocks::default();
            for a in 0..24 {
                for c in 0..24 {
                    out.entries.push((gx(a), gx(c), xx[a][c]));
                }
                for c in 0..8 {
                    out.entries.push((gx(a), gp(c), xp[a][c]));
                    out.entries.push((gp(c), gx(a), px[c][a]));
                }
                out.rhs.push((gx(a), rx[a]));
            }
            for a in 0..8 {
                for c in 0..8 {
                    out.entries.push((gp(a), gp(c), pp[a][c]));
                }
                out.rhs.push((gp(a), rp[a]));
            }
            out
        })
        .collect();
    let mut all = Blocks::default();
    for p in parts {
        all.extend(p);
    }
    all
}

/// Plate inertia row of the fluid-Biot substep.
pub fn assemble_plate_row(plate: &PlateOperators, off: &Offsets, zeta_half: &[f64], phys: &Physics, dt: f64) -> Blocks {
    let m = &plate.mass;
    let mut out = Blocks::default();
    let mz = m.matvec(zeta_half);
    for r in 0..m.n {
        for q in m.indptr[r]..m.indptr[r + 1] {
            out.entries.push((off.z + r, off.z + m.indices[q], phys.rho_p / dt * m.data[q]));
        }
        out.rhs.push((off.z + r, phys.rho_p / dt * mz[r]));
    }
    out
}

/// Reduced, rescaled linear system.
pub struct CoupledSystem {
    pub constraint: Constraint,
    pub matrix: Csr,
    pub rhs: Vec<f64>,
}

pub fn assemble_system(grids: &Grids<f64>, cache: &GeometryCache, plate: &PlateOperators, lag: &Lagged, phys: &Physics, dt: f64) -> CoupledSystem {
    let con = Constraint::new(grids);
    let off = con.off;
    let mut blocks = assemble_fluid_forms(grids, cache, &off, lag.u, phys, dt);
    blocks.extend(assemble_interface_forms(grids, cache, &off, lag.u, phys));
    blocks.extend(assemble_biot_forms(grids, cache, &off, lag, phys, dt));
    blocks.extend(assemble_plate_row(plate, &off, lag.zeta_half, phys, dt));
    let mut t = Triplets::new(con.n);
    for &(r, c, v) in &blocks.entries {
        if let (Some(rr), Some(cc)) = (con.map[r], con.map[c]) {
            t.push(rr, cc, con.row_scale(r, dt) * v);
        }
    }
    let mut rhs = vec![0.0; con.n];
    for &(r, v) in &blocks.rhs {
        if let Some(rr) = con.map[r] {
            rhs[rr] += con.row_scale(r, dt) * v;
        }
    }
    CoupledSystem { matrix: t.to_csr(), rhs, constraint: con }
}

/// Energy audit of one fluid-Biot substep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoupledEnergyReport {
    /// E^{n+1/2}, the energy before the substep.
    pub before: EnergyComponents,
    /// E^{n+1}.
    pub after: EnergyComponents,
    pub dissipation: Dissipation,
    pub numerical: NumericalCoupled,
    pub residual: f64,
    pub solve_residual: f64,
    /// Weak divergence residual of the new velocity, max over multiplier rows.
    pub divergence_residual: f64,
}

impl CoupledEnergyReport {
    pub fn lhs(&self) -> f64 {
        self.after.total() + self.dissipation.total() + self.numerical.total()
    }
    pub fn rhs(&self) -> f64 {
        self.before.total()
    }
}

pub struct CoupledOutcome {
    pub fluid: FluidState,
    pub biot: BiotState,
    pub zeta: Vec<f64>,
    pub report: CoupledEnergyReport,
}

/// One fluid-Biot solve. `omega_n` is the lagged plate displacement used for the fluid
/// geometry and `omega_next` the (unchanged) displacement after the plate substep.
#[allow(clippy::too_many_arguments)]
pub fn fluid_biot_step(
    grids: &Grids<f64>,
    cache: &GeometryCache,
    plate: &PlateOperators,
    lag: &Lagged,
    omega_n: &[f64],
    omega_next: &[f64],
    phys: &Physics,
    dt: f64,
    tol: f64,
) -> Result<CoupledOutcome> {
    let off = Offsets::new(grids);
    check_len(grids.layout.n_fluid_u(), lag.u.len())?;
    check_len(grids.layout.n_biot_disp(), lag.xi.len())?;
    check_len(grids.layout.n_biot_disp(), lag.eta.len())?;
    check_len(grids.layout.n_biot_p(), lag.p.len())?;
    check_len(grids.layout.n_plate(), lag.zeta_half.len())?;
    let sys = assemble_system(grids, cache, plate, lag, phys, dt);
    let (x, solve_residual) = Factorization::new(&sys.matrix)?.solve(&sys.rhs, tol)?;
    let full = sys.constraint.expand(&x);
    let u = full[off.u..off.pi].to_vec();
    let pi = full[off.pi..off.xi].to_vec();
    let xi = full[off.xi..off.p].to_vec();
    let p = full[off.p..off.z].to_vec();
    let zeta = full[off.z..off.total].to_vec();
    let eta: Vec<f64> = lag.eta.iter().zip(&xi).map(|(a, b)| a + dt * b).collect();
    let fluid = FluidState { u, pi };
    let biot = BiotState { eta, xi, p };

    let divergence_residual = divergence_residual(grids, cache, &fluid.u);
    let before = energy::energy(grids, cache, plate, phys, lag.u, omega_n, lag.xi, lag.zeta_half, lag.p, lag.eta, omega_next);
    let after = energy::energy(grids, cache, plate, phys, &fluid.u, omega_next, &biot.xi, &zeta, &biot.p, &biot.eta, omega_next);
    let dissipation = energy::dissipation(grids, cache, phys, dt, &fluid.u, &biot.xi, &biot.p);
    let numerical = energy::numerical_coupled(grids, cache, plate, phys, lag, &fluid.u, &biot, &zeta);
    let mut report = CoupledEnergyReport { before, after, dissipation, numerical, residual: 0.0, solve_residual, divergence_residual };
    let scale = report.lhs().max(report.rhs()).max(1e-30);
    report.residual = (report.lhs() - report.rhs()).abs() / scale;
    Ok(CoupledOutcome { fluid, biot, zeta, report })
}

/// max_q |int J (div_f u) q| over multiplier basis functions.
pub fn divergence_residual(grids: &Grids<f64>, cache: &GeometryCache, u: &[f64]) -> f64 {
    let f = &grids.fluid;
    let h = f.spacing();
    let nq = cache.fluid_rule;
    let mut acc = vec![0.0; f.n_nodes()];
    for e in 0..f.n_cells() {
        let q1 = f.cell_nodes(e);
        for qp in &cache.fluid[e * nq..(e + 1) * nq] {
            let (_, gref) = fields::q2_cell(f, u, e, qp.loc);
            let mut div = 0.0;
            for c in 0..3 {
                let d = [gref[c][0] / h[0], gref[c][1] / h[1], gref[c][2] / h[2]];
                div += crate::kinematics::mat_vec(&qp.g, d)[c];
            }
            let (psi, _) = basis::q1_3d(qp.loc);
            for a in 0..8 {
                acc[q1[a]] += qp.weight * qp.jac * div * psi[a];
            }
        }
    }
    acc.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Skew convection form c(w; a, b) for the lagged advecting field.
pub fn convection_form(grids: &Grids<f64>, cache: &GeometryCache, u_n: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let f = &grids.fluid;
    let h = f.spacing();
    let r = cache.depth;
    let nq = cache.fluid_rule;
    let mut total = 0.0;
    for e in 0..f.n_cells() {
        for qp in &cache.fluid[e * nq..(e + 1) * nq] {
            let (un, _) = fields::q2_cell(f, u_n, e, qp.loc);
            let wv = [un[0], un[1], un[2] - qp.zeta * (r + qp.zhat) / r];
            let (av, ag) = fields::q2_cell(f, a, e, qp.loc);
            let (bv, bg) = fields::q2_cell(f, b, e, qp.loc);
            let mut s = 0.0;
            for c in 0..3 {
                let da = crate::kinematics::mat_vec(&qp.g, [ag[c][0] / h[0], ag[c][1] / h[1], ag[c][2] / h[2]]);
                let db = crate::kinematics::mat_vec(&qp.g, [bg[c][0] / h[0], bg[c][1] / h[1], bg[c][2] / h[2]]);
                let wa: f64 = (0..3).map(|k| wv[k] * da[k]).sum();
                let wb: f64 = (0..3).map(|k| wv[k] * db[k]).sum();
                s += wa * bv[c] - wb * av[c];
            }
            total += 0.5 * qp.weight * qp.jac * s;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_geometry_cache;
    use crate::mesh::{build_grids, GridSpec};
    use crate::plate::assemble_plate_operators;
    use crate::regularize::from_nodal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Case {
        grids: Grids<f64>,
        plate: PlateOperators,
        u: Vec<f64>,
        xi: Vec<f64>,
        eta: Vec<f64>,
        p: Vec<f64>,
        zeta: Vec<f64>,
        omega: Vec<f64>,
        omega_next: Vec<f64>,
    }

    fn case(seed: u64, amp: f64) -> Case {
        let grids = build_grids(&GridSpec { length: 1.0, depth: 1.0, cells_x: 2, cells_y: 2, cells_fluid_z: 2, cells_biot_z: 2 }).unwrap();
        let plate = assemble_plate_operators(&grids.plate, &grids.layout.plate);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rv = |n: usize| -> Vec<f64> { (0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect() };
        let mut u = rv(grids.layout.n_fluid_u());
        grids.mask_fluid(&mut u);
        let mut zeta = rv(grids.layout.n_plate());
        grids.mask_plate(&mut zeta);
        let mut omega = rv(grids.layout.n_plate());
        grids.mask_plate(&mut omega);
        let mut xi = rv(grids.layout.n_biot_disp());
        grids.impose_biot(&mut xi, &zeta);
        let mut eta = rv(grids.layout.n_biot_disp());
        let w_eta = rv(grids.layout.n_plate());
        grids.impose_biot(&mut eta, &w_eta);
        let mut p = rv(grids.layout.n_biot_p());
        grids.mask_pressure(&mut p);
        let dt = 0.05;
        let omega_next = omega.iter().zip(&zeta).map(|(w, z)| w + dt * z).collect();
        Case { grids, plate, u, xi, eta, p, zeta, omega, omega_next }
    }

    fn run(c: &Case, phys: &Physics, dt: f64) -> CoupledOutcome {
        let nodal: Vec<[f64; 3]> = c.eta.chunks(3).map(|v| [v[0], v[1], v[2]]).collect();
        let geo = from_nodal(&c.grids.biot, nodal, BIOT_ORDER).unwrap();
        let cache = build_geometry_cache(&c.grids, &c.omega, &c.zeta, geo, 1.0, 1e-8).unwrap();
        let lag = Lagged { u: &c.u, xi: &c.xi, eta: &c.eta, p: &c.p, zeta_half: &c.zeta };
        fluid_biot_step(&c.grids, &cache, &c.plate, &lag, &c.omega, &c.omega_next, phys, dt, 1e-13).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let c = case(1, 0.0);
        let out = run(&c, &Physics::default(), 0.05);
        assert!(out.fluid.u.iter().chain(&out.biot.xi).chain(&out.biot.p).chain(&out.zeta).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn energy_identity_random_state() {
        let c = case(7, 0.1);
        let out = run(&c, &Physics::default(), 0.05);
        let r = &out.report;
        assert!(r.residual < 1e-8, "lhs {} rhs {} residual {}", r.lhs(), r.rhs(), r.residual);
        assert!(r.divergence_residual < 1e-10);
    }

    #[test]
    fn convection_is_skew() {
        let c = case(3, 0.2);
        let nodal: Vec<[f64; 3]> = c.eta.chunks(3).map(|v| [v[0], v[1], v[2]]).collect();
        let geo = from_nodal(&c.grids.biot, nodal, BIOT_ORDER).unwrap();
        let cache = build_geometry_cache(&c.grids, &c.omega, &c.zeta, geo, 1.0, 1e-8).unwrap();
        let d = case(4, 0.3);
        let ab = convection_form(&c.grids, &cache, &c.u, &d.u, &c.u);
        let ba = convection_form(&c.grids, &cache, &c.u, &c.u, &d.u);
        assert!((ab + ba).abs() < 1e-14);
        assert!(convection_form(&c.grids, &cache, &c.u, &d.u, &d.u).abs() < 1e-14);
    }
}
