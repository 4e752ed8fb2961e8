//! Plate substep: clamped bending plate with backward Euler in velocity form.

use crate::basis;
use crate::error::{check_len, Result};
use crate::mesh::PlateGrid;
use crate::quadrature::gauss_square;
use crate::sparse::{dot, Csr, Factorization, Triplets};

/// Displacement and velocity coefficients (4 per node, clamped dofs zero).
#[derive(Clone, Debug, PartialEq)]
pub struct PlateState {
    pub omega: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl PlateState {
    pub fn zeros(n_dofs: usize) -> Self {
        Self { omega: vec![0.0; n_dofs], zeta: vec![0.0; n_dofs] }
    }
}

/// Mass and bending matrices on the full plate dof space.
#[derive(Clone, Debug)]
pub struct PlateOperators {
    pub mass: Csr,
    pub bending: Csr,
    /// Free (unclamped) dofs in increasing order.
    pub free: Vec<usize>,
}

pub fn assemble_plate_operators(grid: &PlateGrid<f64>, mask: &[bool]) -> PlateOperators {
    let n = 4 * grid.n_nodes();
    let h = grid.spacing();
    let area = h[0] * h[1];
    let rule = gauss_square::<f64>(4);
    let mut m_loc = [[0.0; 16]; 16];
    let mut k_loc = [[0.0; 16]; 16];
    // every cell has the same shape
    for (s, t, w) in &rule {
        let b = basis::bfs(*s, *t, h[0], h[1]);
        for a in 0..16 {
            let la = b.dxx[a] + b.dyy[a];
            for c in 0..16 {
                m_loc[a][c] += w * area * b.v[a] * b.v[c];
                k_loc[a][c] += w * area * la * (b.dxx[c] + b.dyy[c]);
            }
        }
    }
    let mut mt = Triplets::new(n);
    let mut kt = Triplets::new(n);
    for e in 0..grid.n_cells() {
        let d = grid.cell_dofs(e);
        for a in 0..16 {
            for c in 0..16 {
                mt.push(d[a], d[c], m_loc[a][c]);
                kt.push(d[a], d[c], k_loc[a][c]);
            }
        }
    }
    let free = (0..n).filter(|&i| mask[i]).collect();
    PlateOperators { mass: mt.to_csr(), bending: kt.to_csr(), free }
}

/// Both sides of the plate substep energy equality.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlateEnergyReport {
    pub kinetic_new: f64,
    pub kinetic_jump: f64,
    pub bending_new: f64,
    pub bending_jump: f64,
    pub kinetic_old: f64,
    pub bending_old: f64,
    pub residual: f64,
    pub solve_residual: f64,
}

impl PlateEnergyReport {
    pub fn lhs(&self) -> f64 {
        self.kinetic_new + self.kinetic_jump + self.bending_new + self.bending_jump
    }
    pub fn rhs(&self) -> f64 {
        self.kinetic_old + self.bending_old
    }
}

fn restrict(a: &Csr, free: &[usize]) -> (Csr, Vec<usize>) {
    let mut pos = vec![usize::MAX; a.n];
    for (i, &f) in free.iter().enumerate() {
        pos[f] = i;
    }
    let mut t = Triplets::new(free.len());
    for (i, &r) in free.iter().enumerate() {
        for q in a.indptr[r]..a.indptr[r + 1] {
            let c = pos[a.indices[q]];
            if c != usize::MAX {
                t.push(i, c, a.data[q]);
            }
        }
    }
    (t.to_csr(), pos)
}

/// Advance (omega^{n-1/2}, zeta^n) to (omega^{n+1/2}, zeta^{n+1/2}).
pub fn plate_step(ops: &PlateOperators, state: &PlateState, dt: f64, rho_p: f64, tol: f64) -> Result<(PlateState, PlateEnergyReport)> {
    let n = ops.mass.n;
    check_len(n, state.omega.len())?;
    check_len(n, state.zeta.len())?;
    let mz = ops.mass.matvec(&state.zeta);
    let kw = ops.bending.matvec(&state.omega);
    let rhs: Vec<f64> = ops.free.iter().map(|&i| rho_p / dt * mz[i] - kw[i]).collect();
    let mut sys = Triplets::new(n);
    for r in 0..n {
        for q in ops.mass.indptr[r]..ops.mass.indptr[r + 1] {
            sys.push(r, ops.mass.indices[q], rho_p / dt * ops.mass.data[q]);
        }
        for q in ops.bending.indptr[r]..ops.bending.indptr[r + 1] {
            sys.push(r, ops.bending.indices[q], dt * ops.bending.data[q]);
        }
    }
    let (a, _) = restrict(&sys.to_csr(), &ops.free);
    let (x, solve_residual) = if ops.free.is_empty() {
        (Vec::new(), 0.0)
    } else {
        Factorization::new(&a)?.solve(&rhs, tol)?
    };
    let mut zeta = vec![0.0; n];
    for (i, &f) in ops.free.iter().enumerate() {
        zeta[f] = x[i];
    }
    let omega: Vec<f64> = state.omega.iter().zip(&zeta).map(|(w, z)| w + dt * z).collect();
    let next = PlateState { omega, zeta };
    let report = plate_energy(ops, state, &next, rho_p, solve_residual);
    Ok((next, report))
}

pub fn plate_energy(ops: &PlateOperators, old: &PlateState, new: &PlateState, rho_p: f64, solve_residual: f64) -> PlateEnergyReport {
    let dz: Vec<f64> = new.zeta.iter().zip(&old.zeta).map(|(a, b)| a - b).collect();
    let dw: Vec<f64> = new.omega.iter().zip(&old.omega).map(|(a, b)| a - b).collect();
    let m = |x: &[f64]| dot(x, &ops.mass.matvec(x));
    let k = |x: &[f64]| dot(x, &ops.bending.matvec(x));
    let mut r = PlateEnergyReport {
        kinetic_new: 0.5 * rho_p * m(&new.zeta),
        kinetic_jump: 0.5 * rho_p * m(&dz),
        bending_new: 0.5 * k(&new.omega),
        bending_jump: 0.5 * k(&dw),
        kinetic_old: 0.5 * rho_p * m(&old.zeta),
        bending_old: 0.5 * k(&old.omega),
        residual: 0.0,
        solve_residual,
    };
    let scale = r.lhs().max(r.rhs()).max(1e-30);
    r.residual = (r.lhs() - r.rhs()).abs() / scale;
    r
}

/// Smallest eigenvalue of K x = lambda M x on the clamped space by inverse iteration.
pub fn smallest_eigenvalue(ops: &PlateOperators, iterations: usize) -> Result<f64> {
    let (k, _) = restrict(&ops.bending, &ops.free);
    let (m, _) = restrict(&ops.mass, &ops.free);
    let lu = Factorization::new(&k)?;
    let nf = ops.free.len();
    let mut x: Vec<f64> = (0..nf).map(|i| 1.0 + 0.01 * (i % 7) as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let (y, _) = lu.solve(&m.matvec(&x), 1e-13)?;
        let my = m.matvec(&y);
        let nrm = dot(&y, &my).sqrt();
        x = y.iter().map(|v| v / nrm).collect();
        let next = dot(&x, &k.matvec(&x));
        if (next - lambda).abs() <= 1e-15 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> PlateGrid<f64> {
        PlateGrid { extent_x: 1.0, extent_y: 1.0, cells: [n, n] }
    }

    fn mask(g: &PlateGrid<f64>) -> Vec<bool> {
        (0..4 * g.n_nodes()).map(|i| !g.on_boundary(i / 4)).collect()
    }

    #[test]
    fn constants_have_no_bending_and_unit_mass() {
        let g = grid(3);
        let ops = assemble_plate_operators(&g, &mask(&g));
        let one: Vec<f64> = (0..4 * g.n_nodes()).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        assert!(ops.bending.matvec(&one).iter().all(|v| v.abs() < 1e-10));
        assert!((ops.mass.form(&one, &one) - 1.0).abs() < 1e-13);
        assert!(ops.mass.asymmetry() < 1e-15 && ops.bending.asymmetry() < 1e-9);
    }

    #[test]
    fn zero_state_persists() {
        let g = grid(4);
        let ops = assemble_plate_operators(&g, &mask(&g));
        let s = PlateState::zeros(4 * g.n_nodes());
        let (next, rep) = plate_step(&ops, &s, 0.1, 1.0, 1e-12).unwrap();
        assert_eq!(next, s);
        assert_eq!(rep.residual, 0.0);
    }

    #[test]
    fn clamped_eigenvalue_near_continuum() {
        // first clamped-square bending eigenvalue, lambda = 35.9852^2 / L^4
        let g = grid(8);
        let ops = assemble_plate_operators(&g, &mask(&g));
        let l = smallest_eigenvalue(&ops, 200).unwrap();
        assert!((l.sqrt() - 35.985).abs() / 35.985 < 5e-3, "{l}");
    }
}
