//! Structured box grids, degree-of-freedom layout and the plate/Biot interface transfer.

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

/// Coordinate of node `i` on an axis from `a` to `b` split into `n` cells.
/// End points are returned verbatim so that shared faces agree bit-for-bit.
#[inline]
pub fn axis_coord<T: Real>(a: T, b: T, n: usize, i: usize) -> T {
    if i == 0 {
        a
    } else if i == n {
        b
    } else {
        a + T::idx(i) * ((b - a) / T::idx(n))
    }
}

/// Tensor grid of hexahedral cells on (0,Lx) x (0,Ly) x (z_lo,z_hi).
#[derive(Clone, Debug, PartialEq)]
pub struct BoxGrid<T> {
    pub extent_x: T,
    pub extent_y: T,
    pub z_lo: T,
    pub z_hi: T,
    pub cells: [usize; 3],
}

impl<T: Real> BoxGrid<T> {
    pub fn new(extent_x: T, extent_y: T, z_lo: T, z_hi: T, cells: [usize; 3]) -> Result<Self> {
        if !(extent_x > T::zero() && extent_y > T::zero() && z_hi > z_lo) {
            return Err(Error::Config("grid extents must be positive".into()));
        }
        if cells.contains(&0) {
            return Err(Error::Config(format!("cell counts must be positive, got {cells:?}")));
        }
        Ok(Self { extent_x, extent_y, z_lo, z_hi, cells })
    }

    pub fn spacing(&self) -> [T; 3] {
        [
            self.extent_x / T::idx(self.cells[0]),
            self.extent_y / T::idx(self.cells[1]),
            (self.z_hi - self.z_lo) / T::idx(self.cells[2]),
        ]
    }

    pub fn max_spacing(&self) -> T {
        let h = self.spacing();
        h[0].max(h[1]).max(h[2])
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.cells[0] + 1, self.cells[1] + 1, self.cells[2] + 1]
    }

    pub fn n_nodes(&self) -> usize {
        let d = self.dims();
        d[0] * d[1] * d[2]
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1] * self.cells[2]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> usize {
        let d = self.dims();
        i + d[0] * (j + d[1] * k)
    }

    #[inline]
    pub fn node_ijk(&self, id: usize) -> [usize; 3] {
        let d = self.dims();
        [id % d[0], (id / d[0]) % d[1], id / (d[0] * d[1])]
    }

    pub fn coord(&self, i: usize, j: usize, k: usize) -> [T; 3] {
        [
            axis_coord(T::zero(), self.extent_x, self.cells[0], i),
            axis_coord(T::zero(), self.extent_y, self.cells[1], j),
            axis_coord(self.z_lo, self.z_hi, self.cells[2], k),
        ]
    }

    pub fn node_coord(&self, id: usize) -> [T; 3] {
        let [i, j, k] = self.node_ijk(id);
        self.coord(i, j, k)
    }

    #[inline]
    pub fn cell_ijk(&self, e: usize) -> [usize; 3] {
        let c = self.cells;
        [e % c[0], (e / c[0]) % c[1], e / (c[0] * c[1])]
    }

    /// Lower corner of a cell.
    pub fn cell_origin(&self, e: usize) -> [T; 3] {
        let [i, j, k] = self.cell_ijk(e);
        self.coord(i, j, k)
    }

    /// Corner nodes of a cell in tensor order.
    pub fn cell_nodes(&self, e: usize) -> [usize; 8] {
        let [i, j, k] = self.cell_ijk(e);
        let mut out = [0; 8];
        for c in 0..8 {
            out[c] = self.node(i + (c & 1), j + ((c >> 1) & 1), k + (c >> 2));
        }
        out
    }

    /// Same box with every cell split in two along each axis; the node lattice of
    /// the triquadratic space on this grid.
    pub fn refined(&self) -> Self {
        Self { cells: [2 * self.cells[0], 2 * self.cells[1], 2 * self.cells[2]], ..self.clone() }
    }

    /// The 27 lattice nodes of the refined grid lying in cell `e` of this grid.
    pub fn cell_nodes_q2(&self, e: usize) -> [usize; 27] {
        let fine = self.refined();
        let [i, j, k] = self.cell_ijk(e);
        let mut out = [0; 27];
        for c in 0..27 {
            out[c] = fine.node(2 * i + c % 3, 2 * j + (c / 3) % 3, 2 * k + c / 9);
        }
        out
    }

    /// Locate the cell containing a point and the unit coordinates inside it.
    pub fn locate(&self, p: [T; 3]) -> (usize, [T; 3]) {
        let h = self.spacing();
        let lo = [T::zero(), T::zero(), self.z_lo];
        let mut ijk = [0usize; 3];
        let mut loc = [T::zero(); 3];
        for a in 0..3 {
            let s = (p[a] - lo[a]) / h[a];
            let mut c = s.floor().to_usize().unwrap_or(0);
            if s < T::zero() {
                c = 0;
            }
            c = c.min(self.cells[a] - 1);
            ijk[a] = c;
            loc[a] = s - T::idx(c);
        }
        let e = ijk[0] + self.cells[0] * (ijk[1] + self.cells[1] * ijk[2]);
        (e, loc)
    }
}

/// Tensor grid of rectangles on (0,Lx) x (0,Ly) carrying the plate space.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateGrid<T> {
    pub extent_x: T,
    pub extent_y: T,
    pub cells: [usize; 2],
}

impl<T: Real> PlateGrid<T> {
    pub fn spacing(&self) -> [T; 2] {
        [self.extent_x / T::idx(self.cells[0]), self.extent_y / T::idx(self.cells[1])]
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.cells[0] + 1, self.cells[1] + 1]
    }

    pub fn n_nodes(&self) -> usize {
        let d = self.dims();
        d[0] * d[1]
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i + self.dims()[0] * j
    }

    pub fn node_ij(&self, id: usize) -> [usize; 2] {
        let d = self.dims();
        [id % d[0], id / d[0]]
    }

    pub fn coord(&self, i: usize, j: usize) -> [T; 2] {
        [
            axis_coord(T::zero(), self.extent_x, self.cells[0], i),
            axis_coord(T::zero(), self.extent_y, self.cells[1], j),
        ]
    }

    pub fn cell_ij(&self, e: usize) -> [usize; 2] {
        [e % self.cells[0], e / self.cells[0]]
    }

    pub fn cell_nodes(&self, e: usize) -> [usize; 4] {
        let [i, j] = self.cell_ij(e);
        [self.node(i, j), self.node(i + 1, j), self.node(i, j + 1), self.node(i + 1, j + 1)]
    }

    /// Global plate dofs of a cell in the local Bogner-Fox-Schmit order.
    pub fn cell_dofs(&self, e: usize) -> [usize; 16] {
        let n = self.cell_nodes(e);
        let mut out = [0; 16];
        for c in 0..4 {
            for d in 0..4 {
                out[4 * c + d] = 4 * n[c] + d;
            }
        }
        out
    }

    pub fn on_boundary(&self, id: usize) -> bool {
        let [i, j] = self.node_ij(id);
        i == 0 || j == 0 || i == self.cells[0] || j == self.cells[1]
    }

    pub fn locate(&self, x: T, y: T) -> (usize, T, T) {
        let h = self.spacing();
        let f = |v: T, h: T, n: usize| {
            let s = v / h;
            let c = if s < T::zero() { 0 } else { s.floor().to_usize().unwrap_or(0).min(n - 1) };
            (c, s - T::idx(c))
        };
        let (i, s) = f(x, h[0], self.cells[0]);
        let (j, t) = f(y, h[1], self.cells[1]);
        (i + self.cells[0] * j, s, t)
    }
}

/// How a Biot displacement component at a node enters the solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofKind {
    Free,
    Fixed,
    /// Vertical component on the interface, identified with the value dof of a plate node.
    Tied(usize),
}

/// Dirichlet masks and index maps for all fields.
#[derive(Clone, Debug)]
pub struct DofLayout {
    /// Fluid velocity, 3 per triquadratic lattice node; `true` means free.
    pub fluid_u: Vec<bool>,
    /// Multiplier, one per fluid vertex; never constrained.
    pub fluid_pi: usize,
    /// Biot displacement / velocity, 3 per Biot node.
    pub biot_disp: Vec<DofKind>,
    /// Pore pressure, one per Biot node.
    pub biot_p: Vec<bool>,
    /// Plate, 4 per interface node.
    pub plate: Vec<bool>,
}

impl DofLayout {
    pub fn n_fluid_u(&self) -> usize {
        self.fluid_u.len()
    }
    pub fn n_biot_disp(&self) -> usize {
        self.biot_disp.len()
    }
    pub fn n_biot_p(&self) -> usize {
        self.biot_p.len()
    }
    pub fn n_plate(&self) -> usize {
        self.plate.len()
    }
}

/// All grids of one run.
#[derive(Clone, Debug)]
pub struct Grids<T> {
    pub fluid: BoxGrid<T>,
    pub fluid_q2: BoxGrid<T>,
    pub biot: BoxGrid<T>,
    pub plate: PlateGrid<T>,
    pub layout: DofLayout,
}

/// Geometry inputs for grid construction.
#[derive(Clone, Copy, Debug)]
pub struct GridSpec<T> {
    pub length: T,
    pub depth: T,
    pub cells_x: usize,
    pub cells_y: usize,
    pub cells_fluid_z: usize,
    pub cells_biot_z: usize,
}

pub fn build_grids<T: Real>(spec: &GridSpec<T>) -> Result<Grids<T>> {
    if !(spec.length > T::zero()) || !(spec.depth > T::zero()) {
        return Err(Error::Config(format!(
            "domain length and depth must be positive (L={}, R={})",
            spec.length, spec.depth
        )));
    }
    for (name, c) in [
        ("cells_x", spec.cells_x),
        ("cells_y", spec.cells_y),
        ("cells_fluid_z", spec.cells_fluid_z),
        ("cells_biot_z", spec.cells_biot_z),
    ] {
        if c < 2 {
            return Err(Error::Config(format!("{name} must be at least 2, got {c}")));
        }
    }
    let (l, r) = (spec.length, spec.depth);
    let fluid = BoxGrid::new(l, l, -r, T::zero(), [spec.cells_x, spec.cells_y, spec.cells_fluid_z])?;
    let biot = BoxGrid::new(l, l, T::zero(), r, [spec.cells_x, spec.cells_y, spec.cells_biot_z])?;
    let plate = PlateGrid { extent_x: l, extent_y: l, cells: [spec.cells_x, spec.cells_y] };
    let fluid_q2 = fluid.refined();
    let layout = build_layout(&fluid, &biot, &plate);
    Ok(Grids { fluid, fluid_q2, biot, plate, layout })
}

fn build_layout<T: Real>(fluid: &BoxGrid<T>, biot: &BoxGrid<T>, plate: &PlateGrid<T>) -> DofLayout {
    let fine = fluid.refined();
    let fc = fine.cells;
    let mut fluid_u = vec![true; 3 * fine.n_nodes()];
    for id in 0..fine.n_nodes() {
        let [i, j, k] = fine.node_ijk(id);
        let wall = i == 0 || j == 0 || i == fc[0] || j == fc[1] || k == 0;
        if wall {
            for c in 0..3 {
                fluid_u[3 * id + c] = false;
            }
        }
    }

    let bc = biot.cells;
    let mut biot_disp = vec![DofKind::Free; 3 * biot.n_nodes()];
    let mut biot_p = vec![true; biot.n_nodes()];
    for id in 0..biot.n_nodes() {
        let [i, j, k] = biot.node_ijk(id);
        let outer = i == 0 || j == 0 || i == bc[0] || j == bc[1] || k == bc[2];
        if outer {
            biot_p[id] = false;
            for c in 0..3 {
                biot_disp[3 * id + c] = DofKind::Fixed;
            }
        } else if k == 0 {
            biot_disp[3 * id] = DofKind::Fixed;
            biot_disp[3 * id + 1] = DofKind::Fixed;
            biot_disp[3 * id + 2] = DofKind::Tied(plate.node(i, j));
        }
    }

    let mut plate_mask = vec![true; 4 * plate.n_nodes()];
    for id in 0..plate.n_nodes() {
        if plate.on_boundary(id) {
            for d in 0..4 {
                plate_mask[4 * id + d] = false;
            }
        }
    }

    DofLayout { fluid_u, fluid_pi: fluid.n_nodes(), biot_disp, biot_p, plate: plate_mask }
}

impl<T: Real> Grids<T> {
    /// Interface value of the Biot z-component at each plate node.
    pub fn trace_z(&self, disp: &[T]) -> Result<Vec<T>> {
        check_len(3 * self.biot.n_nodes(), disp.len())?;
        let d = self.plate.dims();
        let mut out = vec![T::zero(); self.plate.n_nodes()];
        for j in 0..d[1] {
            for i in 0..d[0] {
                out[self.plate.node(i, j)] = disp[3 * self.biot.node(i, j, 0) + 2];
            }
        }
        Ok(out)
    }

    /// Plate coefficients to interface nodal values (z-component of the Biot trace).
    pub fn transfer(&self, plate: &[T]) -> Result<Vec<T>> {
        check_len(4 * self.plate.n_nodes(), plate.len())?;
        Ok((0..self.plate.n_nodes()).map(|n| plate[4 * n]).collect())
    }

    /// Transpose of [`Grids::transfer`]: nodal loads to plate coefficient loads.
    pub fn transfer_transpose(&self, nodal: &[T]) -> Result<Vec<T>> {
        check_len(self.plate.n_nodes(), nodal.len())?;
        let mut out = vec![T::zero(); 4 * self.plate.n_nodes()];
        for (n, v) in nodal.iter().enumerate() {
            out[4 * n] = *v;
        }
        Ok(out)
    }

    /// Zero every constrained entry of a Biot displacement vector, then write
    /// the tied vertical interface values from the plate coefficients.
    pub fn impose_biot(&self, disp: &mut [T], plate: &[T]) {
        for (q, kind) in self.layout.biot_disp.iter().enumerate() {
            match kind {
                DofKind::Free => {}
                DofKind::Fixed => disp[q] = T::zero(),
                DofKind::Tied(n) => disp[q] = plate[4 * n],
            }
        }
    }

    pub fn mask_fluid(&self, u: &mut [T]) {
        for (v, free) in u.iter_mut().zip(&self.layout.fluid_u) {
            if !free {
                *v = T::zero();
            }
        }
    }

    pub fn mask_pressure(&self, p: &mut [T]) {
        for (v, free) in p.iter_mut().zip(&self.layout.biot_p) {
            if !free {
                *v = T::zero();
            }
        }
    }

    pub fn mask_plate(&self, w: &mut [T]) {
        for (v, free) in w.iter_mut().zip(&self.layout.plate) {
            if !free {
                *v = T::zero();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(c: usize) -> GridSpec<f64> {
        GridSpec { length: 1.0, depth: 1.0, cells_x: c, cells_y: c, cells_fluid_z: c, cells_biot_z: c }
    }

    #[test]
    fn counts() {
        let g = build_grids(&spec(2)).unwrap();
        assert_eq!(g.biot.n_nodes(), 27);
        assert_eq!(g.plate.n_nodes(), 9);
        assert_eq!(g.fluid_q2.n_nodes(), 125);
    }

    #[test]
    fn interface_nodes_shared() {
        let s = GridSpec { length: 0.7, depth: 0.3, cells_x: 3, cells_y: 5, cells_fluid_z: 7, cells_biot_z: 4 };
        let g = build_grids(&s).unwrap();
        for j in 0..=5 {
            for i in 0..=3 {
                let a = g.fluid.coord(i, j, g.fluid.cells[2]);
                let b = g.biot.coord(i, j, 0);
                let p = g.plate.coord(i, j);
                assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
                assert_eq!([a[0].to_bits(), a[1].to_bits()], [p[0].to_bits(), p[1].to_bits()]);
            }
        }
    }

    #[test]
    fn degenerate_rejected() {
        let mut s = spec(2);
        s.cells_biot_z = 0;
        assert!(build_grids(&s).is_err());
        let mut s = spec(2);
        s.length = 0.0;
        assert!(build_grids(&s).is_err());
    }

    #[test]
    fn trace_of_linear_profile() {
        let g = build_grids(&spec(3)).unwrap();
        let c = 0.37;
        let mut eta = vec![0.0; 3 * g.biot.n_nodes()];
        for id in 0..g.biot.n_nodes() {
            let z = g.biot.node_coord(id)[2];
            eta[3 * id + 2] = c * (z - 1.0);
        }
        for v in g.trace_z(&eta).unwrap() {
            assert_eq!(v, -c);
        }
        assert!(g.trace_z(&eta[1..]).is_err());
    }

    #[test]
    fn masks_match_boundary_sets() {
        let g = build_grids(&spec(3)).unwrap();
        let l = &g.layout;
        let fine = &g.fluid_q2;
        for id in 0..fine.n_nodes() {
            let [x, y, z] = fine.node_coord(id);
            let wall = x == 0.0 || y == 0.0 || x == 1.0 || y == 1.0 || z == -1.0;
            assert_eq!(l.fluid_u[3 * id], !wall);
        }
        for id in 0..g.biot.n_nodes() {
            let [x, y, z] = g.biot.node_coord(id);
            let outer = x == 0.0 || y == 0.0 || x == 1.0 || y == 1.0 || z == 1.0;
            assert_eq!(l.biot_p[id], !outer);
            if outer {
                assert!(l.biot_disp[3 * id..3 * id + 3].iter().all(|k| *k == DofKind::Fixed));
            } else if z == 0.0 {
                assert_eq!(l.biot_disp[3 * id], DofKind::Fixed);
                assert!(matches!(l.biot_disp[3 * id + 2], DofKind::Tied(_)));
            } else {
                assert!(l.biot_disp[3 * id..3 * id + 3].iter().all(|k| *k == DofKind::Free));
            }
        }
        let free_plate = l.plate.iter().filter(|f| **f).count();
        assert_eq!(free_plate, 4 * 4);
    }

    #[test]
    fn transfer_zero_and_nodal() {
        let g = build_grids(&spec(2)).unwrap();
        let z = vec![0.0; 4 * g.plate.n_nodes()];
        assert!(g.transfer(&z).unwrap().iter().all(|v| *v == 0.0));
        let mut w = z.clone();
        w[4 * 4] = 0.25;
        w[4 * 4 + 1] = 3.0;
        let t = g.transfer(&w).unwrap();
        assert_eq!(t[4], 0.25);
        assert_eq!(g.transfer_transpose(&t).unwrap()[16], 0.25);
    }
}
