//! Per-quadrature-point geometry for one fluid-Biot solve.

use crate::error::{Error, Result};
use crate::fields;
use crate::kinematics::{fluid_gradient_matrix, interface_frame, jacobian_fluid, InterfaceFrame, PlateGeometryEval};
use crate::mesh::Grids;
use crate::quadrature::{gauss_cube, gauss_square};
use crate::regularize::regularized_interface_normal;

pub const FLUID_ORDER: usize = 4;
pub const GAMMA_ORDER: usize = 4;
pub const BIOT_ORDER: usize = 3;

#[derive(Clone, Copy, Debug)]
pub struct FluidQp {
    /// Quadrature weight times cell volume.
    pub weight: f64,
    pub loc: [f64; 3],
    pub zhat: f64,
    pub plate: PlateGeometryEval<f64>,
    pub zeta: f64,
    pub jac: f64,
    /// Reference partials to transformed partials.
    pub g: [[f64; 3]; 3],
}

#[derive(Clone, Copy, Debug)]
pub struct InterfaceQp {
    pub weight: f64,
    pub s: f64,
    pub t: f64,
    pub frame: InterfaceFrame<f64>,
    pub normal_delta: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct GeometryCache {
    pub depth: f64,
    pub fluid: Vec<FluidQp>,
    pub gamma: Vec<InterfaceQp>,
    pub biot: RegularizedGeometry,
    pub fluid_rule: usize,
    pub gamma_rule: usize,
}

type RegularizedGeometry = crate::regularize::RegularizedGeometry<f64>;

/// Fluid geometry from the lagged plate displacement `omega`, domain velocity from
/// `zeta`, Biot geometry from the regularized displacement.
pub fn build_geometry_cache(
    grids: &Grids<f64>,
    omega: &[f64],
    zeta: &[f64],
    biot: RegularizedGeometry,
    depth: f64,
    floor: f64,
) -> Result<GeometryCache> {
    if biot.order != BIOT_ORDER {
        return Err(Error::Config(format!("regularized geometry must use a {BIOT_ORDER}-point rule")));
    }
    let f = &grids.fluid;
    let h = f.spacing();
    let vol = h[0] * h[1] * h[2];
    let rule = gauss_cube::<f64>(FLUID_ORDER);
    let mut fluid = Vec::with_capacity(f.n_cells() * rule.len());
    for e in 0..f.n_cells() {
        let [ci, cj, _] = f.cell_ijk(e);
        let o = f.cell_origin(e);
        let pe = ci + grids.plate.cells[0] * cj;
        for (p, w) in &rule {
            let (plate, _) = fields::plate_cell(&grids.plate, omega, pe, p[0], p[1]);
            let (zp, _) = fields::plate_cell(&grids.plate, zeta, pe, p[0], p[1]);
            let jac = jacobian_fluid(depth, plate.omega);
            if !(jac > floor) {
                return Err(Error::Geometry(format!("fluid jacobian {jac} at or below floor {floor}")));
            }
            let zhat = o[2] + p[2] * h[2];
            fluid.push(FluidQp {
                weight: w * vol,
                loc: *p,
                zhat,
                plate,
                zeta: zp.omega,
                jac,
                g: fluid_gradient_matrix(depth, &plate, zhat),
            });
        }
    }
    let ph = grids.plate.spacing();
    let area = ph[0] * ph[1];
    let trace = regularized_interface_normal(&biot, GAMMA_ORDER);
    let rule2 = gauss_square::<f64>(GAMMA_ORDER);
    let mut gamma = Vec::with_capacity(grids.plate.n_cells() * rule2.len());
    let mut q = 0;
    for e in 0..grids.plate.n_cells() {
        for (s, t, w) in &rule2 {
            let (pg, _) = fields::plate_cell(&grids.plate, omega, e, *s, *t);
            gamma.push(InterfaceQp {
                weight: w * area,
                s: *s,
                t: *t,
                frame: interface_frame(pg.dx, pg.dy),
                normal_delta: trace.normal[q],
            });
            q += 1;
        }
    }
    Ok(GeometryCache { depth, fluid, gamma, biot, fluid_rule: rule.len(), gamma_rule: rule2.len() })
}
