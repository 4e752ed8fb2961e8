//! Point evaluation of the discrete fields.

use crate::basis;
use crate::kinematics::PlateGeometryEval;
use crate::mesh::{BoxGrid, PlateGrid};

/// Plate field value, slopes and Laplacian at unit coordinates of a cell.
pub fn plate_cell(grid: &PlateGrid<f64>, coef: &[f64], e: usize, s: f64, t: f64) -> (PlateGeometryEval<f64>, f64) {
    let h = grid.spacing();
    let b = basis::bfs(s, t, h[0], h[1]);
    let dofs = grid.cell_dofs(e);
    let mut out = PlateGeometryEval::flat();
    let mut lap = 0.0;
    for a in 0..16 {
        let c = coef[dofs[a]];
        out.omega += c * b.v[a];
        out.dx += c * b.dx[a];
        out.dy += c * b.dy[a];
        lap += c * (b.dxx[a] + b.dyy[a]);
    }
    (out, lap)
}

pub fn plate_at(grid: &PlateGrid<f64>, coef: &[f64], x: f64, y: f64) -> (PlateGeometryEval<f64>, f64) {
    let (e, s, t) = grid.locate(x, y);
    plate_cell(grid, coef, e, s, t)
}

/// Triquadratic vector field: value and reference-unit gradient (d/ds etc.) in a cell
/// of the vertex grid `fluid`.
pub fn q2_cell(fluid: &BoxGrid<f64>, u: &[f64], e: usize, loc: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let nodes = fluid.cell_nodes_q2(e);
    let (v, g) = basis::q2_3d(loc);
    let mut val = [0.0; 3];
    let mut grad = [[0.0; 3]; 3];
    for a in 0..27 {
        for c in 0..3 {
            let f = u[3 * nodes[a] + c];
            val[c] += v[a] * f;
            for d in 0..3 {
                grad[c][d] += f * g[a][d];
            }
        }
    }
    (val, grad)
}

/// Trilinear scalar field: value and physical gradient in a cell.
pub fn q1_scalar_cell(grid: &BoxGrid<f64>, p: &[f64], e: usize, loc: [f64; 3]) -> (f64, [f64; 3]) {
    let h = grid.spacing();
    let nodes = grid.cell_nodes(e);
    let (v, g) = basis::q1_3d(loc);
    let mut val = 0.0;
    let mut grad = [0.0; 3];
    for a in 0..8 {
        let f = p[nodes[a]];
        val += v[a] * f;
        for d in 0..3 {
            grad[d] += f * g[a][d] / h[d];
        }
    }
    (val, grad)
}

/// Trilinear vector field (3 per node): value and physical gradient `grad[c][d]`.
pub fn q1_vector_cell(grid: &BoxGrid<f64>, u: &[f64], e: usize, loc: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let h = grid.spacing();
    let nodes = grid.cell_nodes(e);
    let (v, g) = basis::q1_3d(loc);
    let mut val = [0.0; 3];
    let mut grad = [[0.0; 3]; 3];
    for a in 0..8 {
        for c in 0..3 {
            let f = u[3 * nodes[a] + c];
            val[c] += v[a] * f;
            for d in 0..3 {
                grad[c][d] += f * g[a][d] / h[d];
            }
        }
    }
    (val, grad)
}
