//! Discrete energy, physical dissipation and numerical dissipation of the split scheme.

use crate::basis;
use crate::coupled::{BiotState, Lagged, Physics};
use crate::fields;
use crate::geometry::{GeometryCache, BIOT_ORDER};
use crate::kinematics::{jacobian_fluid, mat_vec};
use crate::mesh::Grids;
use crate::plate::PlateOperators;
use crate::quadrature::gauss_cube;
use crate::sparse::dot;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyComponents {
    pub fluid_kinetic: f64,
    pub biot_kinetic: f64,
    pub plate_kinetic: f64,
    pub storage: f64,
    pub elastic_mu: f64,
    pub elastic_lambda: f64,
    pub plate_bending: f64,
}

impl EnergyComponents {
    pub fn total(&self) -> f64 {
        self.fluid_kinetic + self.biot_kinetic + self.plate_kinetic + self.storage + self.elastic_mu + self.elastic_lambda + self.plate_bending
    }
}

/// Physical dissipation over one step (already multiplied by dt).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dissipation {
    pub viscous: f64,
    pub visco_mu: f64,
    pub visco_lambda: f64,
    pub darcy: f64,
    pub bjs: f64,
}

impl Dissipation {
    pub fn total(&self) -> f64 {
        self.viscous + self.visco_mu + self.visco_lambda + self.darcy + self.bjs
    }
}

/// Numerical dissipation of the fluid-Biot substep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NumericalCoupled {
    pub fluid_velocity: f64,
    pub biot_velocity: f64,
    pub plate_velocity: f64,
    pub pressure: f64,
    pub elastic_mu: f64,
    pub elastic_lambda: f64,
}

impl NumericalCoupled {
    pub fn total(&self) -> f64 {
        self.fluid_velocity + self.biot_velocity + self.plate_velocity + self.pressure + self.elastic_mu + self.elastic_lambda
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// 1/2 int (1 + omega/R) |u|^2 on the reference fluid box.
pub fn fluid_kinetic(grids: &Grids<f64>, cache: &GeometryCache, u: &[f64], omega: &[f64]) -> f64 {
    let f = &grids.fluid;
    let nq = cache.fluid_rule;
    let mut total = 0.0;
    for e in 0..f.n_cells() {
        let [ci, cj, _] = f.cell_ijk(e);
        let pe = ci + grids.plate.cells[0] * cj;
        for qp in &cache.fluid[e * nq..(e + 1) * nq] {
            let (pg, _) = fields::plate_cell(&grids.plate, omega, pe, qp.loc[0], qp.loc[1]);
            let (v, _) = fields::q2_cell(f, u, e, qp.loc);
            total += 0.5 * qp.weight * jacobian_fluid(cache.depth, pg.omega) * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        }
    }
    total
}

/// 1/2 int J^n |u|^2 with the lagged jacobian held in the cache.
pub fn fluid_kinetic_lagged(grids: &Grids<f64>, cache: &GeometryCache, u: &[f64]) -> f64 {
    let f = &grids.fluid;
    let nq = cache.fluid_rule;
    let mut total = 0.0;
    for e in 0..f.n_cells() {
        for qp in &cache.fluid[e * nq..(e + 1) * nq] {
            let (v, _) = fields::q2_cell(f, u, e, qp.loc);
            total += 0.5 * qp.weight * qp.jac * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        }
    }
    total
}

/// Biot volume quadratic quantities at order-3 Gauss points.
#[derive(Clone, Copy, Debug, Default)]
pub struct BiotQuadratics {
    /// int |v|^2
    pub mass_vec: f64,
    /// int |D v|^2
    pub sym: f64,
    /// int (div v)^2
    pub div: f64,
    /// int q^2
    pub mass_scalar: f64,
}

pub fn biot_quadratics(grids: &Grids<f64>, v: &[f64], q: &[f64]) -> BiotQuadratics {
    let b = &grids.biot;
    let h = b.spacing();
    let vol = h[0] * h[1] * h[2];
    let rule = gauss_cube::<f64>(BIOT_ORDER);
    let mut out = BiotQuadratics::default();
    for e in 0..b.n_cells() {
        for (loc, w) in &rule {
            let w = w * vol;
            let (val, g) = fields::q1_vector_cell(b, v, e, *loc);
            let (s, _) = fields::q1_scalar_cell(b, q, e, *loc);
            let mut sym = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let d = 0.5 * (g[i][j] + g[j][i]);
                    sym += d * d;
                }
            }
            let div = g[0][0] + g[1][1] + g[2][2];
            out.mass_vec += w * (val[0] * val[0] + val[1] * val[1] + val[2] * val[2]);
            out.sym += w * sym;
            out.div += w * div * div;
            out.mass_scalar += w * s * s;
        }
    }
    out
}

/// Energy with the fluid kinetic term weighted by the geometry of `omega_fluid`.
#[allow(clippy::too_many_arguments)]
pub fn energy(
    grids: &Grids<f64>,
    cache: &GeometryCache,
    plate: &PlateOperators,
    phys: &Physics,
    u: &[f64],
    omega_fluid: &[f64],
    xi: &[f64],
    zeta: &[f64],
    p: &[f64],
    eta: &[f64],
    omega_plate: &[f64],
) -> EnergyComponents {
    let bx = biot_quadratics(grids, xi, p);
    let be = biot_quadratics(grids, eta, p);
    EnergyComponents {
        fluid_kinetic: fluid_kinetic(grids, cache, u, omega_fluid),
        biot_kinetic: 0.5 * phys.rho_b * bx.mass_vec,
        plate_kinetic: 0.5 * phys.rho_p * dot(zeta, &plate.mass.matvec(zeta)),
        storage: 0.5 * phys.c0 * bx.mass_scalar,
        elastic_mu: phys.mu_e * be.sym,
        elastic_lambda: 0.5 * phys.lambda_e * be.div,
        plate_bending: 0.5 * dot(omega_plate, &plate.bending.matvec(omega_plate)),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn dissipation(grids: &Grids<f64>, cache: &GeometryCache, phys: &Physics, dt: f64, u: &[f64], xi: &[f64], p: &[f64]) -> Dissipation {
    let f = &grids.fluid;
    let hf = f.spacing();
    let nq = cache.fluid_rule;
    let mut viscous = 0.0;
    for e in 0..f.n_cells() {
        for qp in &cache.fluid[e * nq..(e + 1) * nq] {
            let (_, gref) = fields::q2_cell(f, u, e, qp.loc);
            let mut grad = [[0.0; 3]; 3];
            for c in 0..3 {
                grad[c] = mat_vec(&qp.g, [gref[c][0] / hf[0], gref[c][1] / hf[1], gref[c][2] / hf[2]]);
            }
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let d = 0.5 * (grad[i][j] + grad[j][i]);
                    s += d * d;
                }
            }
            viscous += qp.weight * qp.jac * s;
        }
    }
    let bq = biot_quadratics(grids, xi, p);
    let b = &grids.biot;
    let h = b.spacing();
    let vol = h[0] * h[1] * h[2];
    let rule = gauss_cube::<f64>(BIOT_ORDER);
    let mut darcy = 0.0;
    for e in 0..b.n_cells() {
        for (q, (loc, w)) in rule.iter().enumerate() {
            let geo = &cache.biot.qp[e * rule.len() + q];
            let (_, gp) = fields::q1_scalar_cell(b, p, e, *loc);
            let c = mat_vec(&geo.cof, gp);
            darcy += w * vol * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]) / geo.det;
        }
    }
    Dissipation {
        viscous: 2.0 * phys.nu * dt * viscous,
        visco_mu: 2.0 * phys.mu_v * dt * bq.sym,
        visco_lambda: phys.lambda_v * dt * bq.div,
        darcy: phys.kappa * dt * darcy,
        bjs: phys.beta * dt * slip_integral(grids, cache, u, xi),
    }
}

/// sum over Gamma quadrature of J_Gamma |(xi - u) . tau|^2 over both tangents.
pub fn slip_integral(grids: &Grids<f64>, cache: &GeometryCache, u: &[f64], xi: &[f64]) -> f64 {
    let f = &grids.fluid;
    let b = &grids.biot;
    let nz = f.cells[2];
    let nxc = grids.plate.cells[0];
    let nq = cache.gamma_rule;
    let mut total = 0.0;
    for e in 0..grids.plate.n_cells() {
        let (ci, cj) = (e % nxc, e / nxc);
        let q2 = f.cell_nodes_q2(ci + f.cells[0] * (cj + f.cells[1] * (nz - 1)));
        let bn = b.cell_nodes(ci + b.cells[0] * cj);
        for qp in &cache.gamma[e * nq..(e + 1) * nq] {
            let chi = basis::q2_2d(qp.s, qp.t);
            let (psi, _) = basis::q1_2d(qp.s, qp.t);
            let mut rel = [0.0; 3];
            for c in 0..3 {
                for m in 0..9 {
                    rel[c] -= chi[m] * u[3 * q2[18 + m] + c];
                }
                for k in 0..4 {
                    rel[c] += psi[k] * xi[3 * bn[k] + c];
                }
            }
            let t1: f64 = (0..3).map(|c| rel[c] * qp.frame.tau1[c]).sum();
            let t2: f64 = (0..3).map(|c| rel[c] * qp.frame.tau2[c]).sum();
            total += qp.weight * qp.frame.jacobian * (t1 * t1 + t2 * t2);
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
pub fn numerical_coupled(
    grids: &Grids<f64>,
    cache: &GeometryCache,
    plate: &PlateOperators,
    phys: &Physics,
    lag: &Lagged,
    u: &[f64],
    biot: &BiotState,
    zeta: &[f64],
) -> NumericalCoupled {
    let du = diff(u, lag.u);
    let dxi = diff(&biot.xi, lag.xi);
    let dp = diff(&biot.p, lag.p);
    let deta = diff(&biot.eta, lag.eta);
    let dz = diff(zeta, lag.zeta_half);
    let a = biot_quadratics(grids, &dxi, &dp);
    let c = biot_quadratics(grids, &deta, &dp);
    NumericalCoupled {
        fluid_velocity: fluid_kinetic_lagged(grids, cache, &du),
        biot_velocity: 0.5 * phys.rho_b * a.mass_vec,
        plate_velocity: 0.5 * phys.rho_p * dot(&dz, &plate.mass.matvec(&dz)),
        pressure: 0.5 * phys.c0 * a.mass_scalar,
        elastic_mu: phys.mu_e * c.sym,
        elastic_lambda: 0.5 * phys.lambda_e * c.div,
    }
}
