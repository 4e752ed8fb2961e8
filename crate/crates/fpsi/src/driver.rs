//! Lie-splitting time loop: plate substep, fluid-Biot substep, monitors, ledger.

use crate::basis;
use crate::config::{InitialState, RunConfig};
use crate::coupled::{fluid_biot_step, Lagged};
use crate::energy::{self, Dissipation, EnergyComponents, NumericalCoupled};
use crate::error::{Error, Result};
use crate::fields;
use crate::geometry::{build_geometry_cache, BIOT_ORDER, FLUID_ORDER, GAMMA_ORDER};
use crate::mesh::{build_grids, Grids};
use crate::plate::{assemble_plate_operators, plate_step, PlateOperators, PlateState};
use crate::quadrature::{gauss_cube, gauss_square};
use crate::regularize::{build_kernel, regularize, regularized_interface_normal, MollifierKernel, RegularizedGeometry};
use crate::sparse::{Csr, Triplets};
use serde::{Deserialize, Serialize};

/// Grids, operators and kernel shared by every step of a run.
pub struct Problem {
    pub config: RunConfig,
    pub grids: Grids<f64>,
    pub plate: PlateOperators,
    pub kernel: MollifierKernel<f64>,
}

impl Problem {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let grids = build_grids(&config.geometry.spec())?;
        let plate = assemble_plate_operators(&grids.plate, &grids.layout.plate);
        let g = &config.geometry;
        let r = &config.regularization;
        let kernel = build_kernel(r.delta, grids.biot.spacing(), g.length.min(g.depth), r.min_cells_per_radius, r.kernel_quadrature)?;
        Ok(Self { config: config.clone(), grids, plate, kernel })
    }

    pub fn depth(&self) -> f64 {
        self.config.geometry.depth
    }

    pub fn dt(&self) -> f64 {
        self.config.time.dt()
    }

    pub fn bounds(&self) -> MonitorBounds {
        let m = &self.config.monitors;
        MonitorBounds { depth: self.depth(), r_max: self.config.r_max(), c0_floor: m.c0_floor, c1: m.c1, c2: m.c2 }
    }

    pub fn regularize(&self, eta: &[f64]) -> Result<RegularizedGeometry<f64>> {
        regularize(&self.grids.biot, eta, &self.kernel, BIOT_ORDER)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorBounds {
    pub depth: f64,
    pub r_max: f64,
    pub c0_floor: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorKind {
    DisplacementBound,
    JacobianFloor,
    DeformationNorm,
    InverseNorm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: MonitorKind,
    pub value: f64,
    pub bound: f64,
    /// Reference coordinates of the offending quadrature point.
    pub location: [f64; 3],
    /// Nearest plate node for interface checks, nearest Biot node otherwise.
    pub node: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub step: usize,
    pub time: f64,
    /// min over interface points of R - |omega|.
    pub min_plate_margin: f64,
    /// min over interface points of R - |vertical trace of the regularized displacement|.
    pub min_trace_margin: f64,
    pub min_jacobian: f64,
    pub max_deformation_norm: f64,
    pub max_inverse_norm: f64,
    pub injective: bool,
    pub violation: Option<Violation>,
}

impl MonitorReport {
    pub fn tripped(&self) -> bool {
        self.violation.is_some()
    }
}

fn nearest(coord: f64, h: f64, n: usize) -> usize {
    ((coord / h).round().max(0.0) as usize).min(n)
}

/// Evaluate all geometric bounds at quadrature points. The first violation in the order
/// displacement, jacobian, deformation norm, inverse norm is reported.
pub fn monitors(grids: &Grids<f64>, omega: &[f64], geo: &RegularizedGeometry<f64>, bounds: &MonitorBounds) -> MonitorReport {
    let pg = &grids.plate;
    let ph = pg.spacing();
    let rule2 = gauss_square::<f64>(GAMMA_ORDER);
    let trace = regularized_interface_normal(geo, GAMMA_ORDER);
    let mut min_plate = f64::INFINITY;
    let mut min_trace = f64::INFINITY;
    let mut worst_disp: Option<(f64, [f64; 3])> = None;
    let mut max_trace = 0.0f64;
    let mut q = 0;
    for e in 0..pg.n_cells() {
        let [ci, cj] = pg.cell_ij(e);
        for (s, t, _) in &rule2 {
            let (w, _) = fields::plate_cell(pg, omega, e, *s, *t);
            let hz = trace.height[q];
            q += 1;
            let loc = [(ci as f64 + s) * ph[0], (cj as f64 + t) * ph[1], 0.0];
            min_plate = min_plate.min(bounds.depth - w.omega.abs());
            min_trace = min_trace.min(bounds.depth - hz.abs());
            max_trace = max_trace.max(hz.abs());
            let m = w.omega.abs().max(hz.abs());
            if m > bounds.r_max && worst_disp.is_none_or(|(v, _)| m > v) {
                worst_disp = Some((m, loc));
            }
        }
    }
    let b = &grids.biot;
    let h = b.spacing();
    let rule = gauss_cube::<f64>(geo.order);
    let mut min_j = f64::INFINITY;
    let mut max_n = 0.0f64;
    let mut max_ni = 0.0f64;
    let (mut at_j, mut at_n, mut at_ni) = ([0.0; 3], [0.0; 3], [0.0; 3]);
    for e in 0..b.n_cells() {
        let o = b.cell_origin(e);
        for (k, (loc, _)) in rule.iter().enumerate() {
            let g = &geo.qp[e * rule.len() + k];
            let x = [o[0] + loc[0] * h[0], o[1] + loc[1] * h[1], o[2] + loc[2] * h[2]];
            if g.det < min_j {
                min_j = g.det;
                at_j = x;
            }
            if g.norm > max_n {
                max_n = g.norm;
                at_n = x;
            }
            if !(g.norm_inv <= max_ni) {
                max_ni = g.norm_inv;
                at_ni = x;
            }
        }
    }
    let biot_node = |x: [f64; 3]| b.node(nearest(x[0], h[0], b.cells[0]), nearest(x[1], h[1], b.cells[1]), nearest(x[2], h[2], b.cells[2]));
    let violation = if let Some((v, loc)) = worst_disp {
        Some(Violation {
            kind: MonitorKind::DisplacementBound,
            value: v,
            bound: bounds.r_max,
            location: loc,
            node: pg.node(nearest(loc[0], ph[0], pg.cells[0]), nearest(loc[1], ph[1], pg.cells[1])),
        })
    } else if !(min_j >= bounds.c0_floor) {
        Some(Violation { kind: MonitorKind::JacobianFloor, value: min_j, bound: bounds.c0_floor, location: at_j, node: biot_node(at_j) })
    } else if !(max_n <= bounds.c1) {
        Some(Violation { kind: MonitorKind::DeformationNorm, value: max_n, bound: bounds.c1, location: at_n, node: biot_node(at_n) })
    } else if !(max_ni <= bounds.c2) {
        Some(Violation { kind: MonitorKind::InverseNorm, value: max_ni, bound: bounds.c2, location: at_ni, node: biot_node(at_ni) })
    } else {
        None
    };
    MonitorReport {
        step: 0,
        time: 0.0,
        min_plate_margin: min_plate,
        min_trace_margin: min_trace,
        min_jacobian: min_j,
        max_deformation_norm: max_n,
        max_inverse_norm: max_ni,
        injective: min_j >= bounds.c0_floor && max_trace <= bounds.r_max,
        violation,
    }
}

/// Committed state at time index n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub u: Vec<f64>,
    pub pi: Vec<f64>,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    pub p: Vec<f64>,
    /// omega^{n-1/2}
    pub omega: Vec<f64>,
    /// zeta^{n-1/2}
    pub zeta_half: Vec<f64>,
    /// zeta^n
    pub zeta: Vec<f64>,
    /// Nodal regularized displacement built from eta^n.
    pub eta_delta: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub snapshots: Vec<Snapshot>,
}

/// Piecewise-constant values on ((n-1) dt, n dt].
#[derive(Clone, Copy, Debug)]
pub struct PiecewiseConstant<'a> {
    pub index: usize,
    pub u: &'a [f64],
    pub eta: &'a [f64],
    pub p: &'a [f64],
    pub omega: &'a [f64],
    pub zeta: &'a [f64],
    pub zeta_star: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    pub u: Vec<f64>,
    pub eta: Vec<f64>,
    pub p: Vec<f64>,
    pub omega: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.snapshots.len() - 1
    }

    pub fn end_time(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t > 0.0 && t <= self.end_time() * (1.0 + 1e-14) && self.steps() > 0 {
            Ok(())
        } else {
            Err(Error::Config(format!("time {t} outside (0, {}]", self.end_time())))
        }
    }

    /// Index n with t in ((n-1) dt, n dt].
    pub fn interval_index(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        let n = (t / self.dt).ceil() as usize;
        Ok(n.clamp(1, self.steps()))
    }

    pub fn piecewise_constant(&self, t: f64) -> Result<PiecewiseConstant<'_>> {
        let n = self.interval_index(t)?;
        let s = &self.snapshots[n];
        Ok(PiecewiseConstant { index: n, u: &s.u, eta: &s.eta, p: &s.p, omega: &s.omega, zeta: &s.zeta_half, zeta_star: &s.zeta })
    }

    /// Linear interpolants through the node values at n dt.
    pub fn piecewise_linear(&self, t: f64) -> Result<PiecewiseLinear> {
        let n = self.interval_index(t)?;
        let theta = t / self.dt - (n - 1) as f64;
        let (a, b) = (&self.snapshots[n - 1], &self.snapshots[n]);
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| (1.0 - theta) * p + theta * q).collect() };
        Ok(PiecewiseLinear { u: mix(&a.u, &b.u), eta: mix(&a.eta, &b.eta), p: mix(&a.p, &b.p), omega: mix(&a.omega, &b.omega) })
    }

    /// Time derivatives of the plate and Biot displacement interpolants on ((n-1) dt, n dt].
    pub fn linear_slopes(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.interval_index(t)?;
        let (a, b) = (&self.snapshots[n - 1], &self.snapshots[n]);
        let d = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| (q - p) / self.dt).collect() };
        Ok((d(&a.omega, &b.omega), d(&a.eta, &b.eta)))
    }
}

/// One CSV row: an energy state after a half or full step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub step: usize,
    /// true for the state after the plate substep.
    pub half: bool,
    pub time: f64,
    pub energy: EnergyComponents,
    pub dissipation: Dissipation,
    pub d_cumulative: f64,
    pub n_plate_velocity: f64,
    pub n_plate_bending: f64,
    pub numerical: NumericalCoupled,
    pub identity_residual: f64,
    /// E0 - E - sum D.
    pub bound_slack: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub e0: f64,
    pub rows: Vec<LedgerRow>,
    pub identity_failures: Vec<usize>,
    pub bound_failures: Vec<usize>,
    pub monotone_failures: Vec<usize>,
}

impl EnergyLedger {
    pub fn ok(&self) -> bool {
        self.identity_failures.is_empty() && self.bound_failures.is_empty() && self.monotone_failures.is_empty()
    }
}

pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub ledger: EnergyLedger,
    pub monitors: Vec<MonitorReport>,
    pub trip: Option<MonitorReport>,
    pub t_max: f64,
}

fn max_mismatch(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Validate compatibility and masks of initial data.
pub fn check_initial(grids: &Grids<f64>, init: &InitialState) -> Result<()> {
    let l = &grids.layout;
    crate::error::check_len(l.n_fluid_u(), init.u.len())?;
    crate::error::check_len(l.fluid_pi, init.pi.len())?;
    crate::error::check_len(l.n_biot_disp(), init.eta.len())?;
    crate::error::check_len(l.n_biot_disp(), init.xi.len())?;
    crate::error::check_len(l.n_biot_p(), init.p.len())?;
    crate::error::check_len(l.n_plate(), init.omega.len())?;
    crate::error::check_len(l.n_plate(), init.zeta.len())?;
    let tol = crate::regularize::COMPATIBILITY_TOL;
    let d = max_mismatch(&grids.trace_z(&init.eta)?, &grids.transfer(&init.omega)?);
    if d > tol {
        return Err(Error::Compatibility(format!("initial displacement trace differs from plate displacement by {d:e}")));
    }
    let d = max_mismatch(&grids.trace_z(&init.xi)?, &grids.transfer(&init.zeta)?);
    if d > tol {
        return Err(Error::Compatibility(format!("initial velocity trace differs from plate velocity by {d:e}")));
    }
    let masked = |v: &[f64], free: &dyn Fn(usize) -> bool| v.iter().enumerate().all(|(i, x)| free(i) || x.abs() <= tol);
    let lay = &grids.layout;
    if !masked(&init.u, &|i| lay.fluid_u[i])
        || !masked(&init.p, &|i| lay.biot_p[i])
        || !masked(&init.omega, &|i| lay.plate[i])
        || !masked(&init.zeta, &|i| lay.plate[i])
        || !masked(&init.eta, &|i| lay.biot_disp[i] != crate::mesh::DofKind::Fixed)
        || !masked(&init.xi, &|i| lay.biot_disp[i] != crate::mesh::DofKind::Fixed)
    {
        return Err(Error::Compatibility("initial data violate the boundary conditions".into()));
    }
    Ok(())
}

/// Energy of a full-step state (fluid weighted by the plate displacement `omega`).
#[allow(clippy::too_many_arguments)]
fn state_energy(pb: &Problem, geo: &RegularizedGeometry<f64>, u: &[f64], xi: &[f64], zeta: &[f64], p: &[f64], eta: &[f64], omega: &[f64]) -> Result<EnergyComponents> {
    let cache = build_geometry_cache(&pb.grids, omega, zeta, geo.clone(), pb.depth(), 0.0)?;
    Ok(energy::energy(&pb.grids, &cache, &pb.plate, &pb.config.physics, u, omega, xi, zeta, p, eta, omega))
}

pub fn run(pb: &Problem, init: &InitialState) -> Result<RunOutcome> {
    let cfg = &pb.config;
    let grids = &pb.grids;
    let phys = cfg.physics;
    let dt = pb.dt();
    let n_steps = cfg.time.steps;
    let tol = cfg.solver.linear_tol;
    let bounds = pb.bounds();
    check_initial(grids, init)?;
    let mut geo = pb.regularize(&init.eta)?;
    let mut report0 = monitors(grids, &init.omega, &geo, &bounds);
    if let Some(v) = &report0.violation {
        return Err(Error::Config(format!("initial data violate the {:?} bound: value {} vs {}", v.kind, v.value, v.bound)));
    }
    let e0c = state_energy(pb, &geo, &init.u, &init.xi, &init.zeta, &init.p, &init.eta, &init.omega)?;
    let e0 = e0c.total();
    let mut ledger = EnergyLedger { e0, ..Default::default() };
    ledger.rows.push(LedgerRow {
        step: 0,
        half: false,
        time: 0.0,
        energy: e0c,
        dissipation: Dissipation::default(),
        d_cumulative: 0.0,
        n_plate_velocity: 0.0,
        n_plate_bending: 0.0,
        numerical: NumericalCoupled::default(),
        identity_residual: 0.0,
        bound_slack: 0.0,
    });
    report0.step = 0;
    let mut reports = vec![report0];
    let mut snaps = vec![Snapshot {
        u: init.u.clone(),
        pi: init.pi.clone(),
        eta: init.eta.clone(),
        xi: init.xi.clone(),
        p: init.p.clone(),
        omega: init.omega.clone(),
        zeta_half: init.zeta.clone(),
        zeta: init.zeta.clone(),
        eta_delta: geo.nodal.clone(),
    }];
    let mut d_cum = 0.0;
    let mut e_prev = e0;
    let mut trip = None;
    let slack_tol = cfg.solver.bound_tol * e0.max(f64::MIN_POSITIVE);

    for n in 0..n_steps {
        let cur = snaps.last().unwrap();
        let (plate_new, prep) = plate_step(&pb.plate, &PlateState { omega: cur.omega.clone(), zeta: cur.zeta.clone() }, dt, phys.rho_p, tol)?;
        let cache = build_geometry_cache(grids, &cur.omega, &plate_new.zeta, geo.clone(), pb.depth(), 0.0)?;
        let lag = Lagged { u: &cur.u, xi: &cur.xi, eta: &cur.eta, p: &cur.p, zeta_half: &plate_new.zeta };
        let out = fluid_biot_step(grids, &cache, &pb.plate, &lag, &cur.omega, &plate_new.omega, &phys, dt, tol)?;
        let time = (n + 1) as f64 * dt;
        let candidate = pb.regularize(&out.biot.eta);
        let mut rep = match &candidate {
            Ok(g) => monitors(grids, &plate_new.omega, g, &bounds),
            Err(_) => MonitorReport {
                step: n + 1,
                time,
                min_plate_margin: f64::NAN,
                min_trace_margin: f64::NAN,
                min_jacobian: 0.0,
                max_deformation_norm: f64::INFINITY,
                max_inverse_norm: f64::INFINITY,
                injective: false,
                violation: Some(Violation { kind: MonitorKind::JacobianFloor, value: 0.0, bound: bounds.c0_floor, location: [0.0; 3], node: 0 }),
            },
        };
        rep.step = n + 1;
        rep.time = time;
        if rep.tripped() {
            trip = Some(rep.clone());
            reports.push(rep);
            break;
        }
        reports.push(rep);
        geo = candidate?;

        let r = &out.report;
        let e_half = r.before;
        let half_row = LedgerRow {
            step: n,
            half: true,
            time: (n as f64 + 0.5) * dt,
            energy: e_half,
            dissipation: Dissipation::default(),
            d_cumulative: d_cum,
            n_plate_velocity: prep.kinetic_jump,
            n_plate_bending: prep.bending_jump,
            numerical: NumericalCoupled::default(),
            identity_residual: prep.residual,
            bound_slack: e0 - e_half.total() - d_cum,
        };
        d_cum += r.dissipation.total();
        let full_row = LedgerRow {
            step: n + 1,
            half: false,
            time,
            energy: r.after,
            dissipation: r.dissipation,
            d_cumulative: d_cum,
            n_plate_velocity: 0.0,
            n_plate_bending: 0.0,
            numerical: r.numerical,
            identity_residual: r.residual,
            bound_slack: e0 - r.after.total() - d_cum,
        };
        let idx = ledger.rows.len();
        if prep.residual > cfg.solver.plate_identity_tol {
            ledger.identity_failures.push(idx);
        }
        if r.residual > cfg.solver.coupled_identity_tol {
            ledger.identity_failures.push(idx + 1);
        }
        for (k, row) in [&half_row, &full_row].into_iter().enumerate() {
            if row.bound_slack < -slack_tol {
                ledger.bound_failures.push(idx + k);
            }
        }
        let mono = slack_tol.max(1e-14 * e_prev.abs());
        if e_half.total() > e_prev + mono {
            ledger.monotone_failures.push(idx);
        }
        if r.after.total() > e_half.total() + mono {
            ledger.monotone_failures.push(idx + 1);
        }
        e_prev = r.after.total();
        ledger.rows.push(half_row);
        ledger.rows.push(full_row);
        snaps.push(Snapshot {
            u: out.fluid.u,
            pi: out.fluid.pi,
            eta: out.biot.eta,
            xi: out.biot.xi,
            p: out.biot.p,
            omega: plate_new.omega,
            zeta_half: plate_new.zeta,
            zeta: out.zeta,
            eta_delta: geo.nodal.clone(),
        });
    }
    let trajectory = Trajectory { dt, snapshots: snaps };
    let t_max = trajectory.end_time();
    Ok(RunOutcome { trajectory, ledger, monitors: reports, trip, t_max })
}

/// Scalar triquadratic mass matrix on the fluid box.
pub fn fluid_mass(grids: &Grids<f64>) -> Csr {
    let f = &grids.fluid;
    let h = f.spacing();
    let vol = h[0] * h[1] * h[2];
    let rule = gauss_cube::<f64>(FLUID_ORDER);
    let mut local = [[0.0; 27]; 27];
    for (loc, w) in &rule {
        let (phi, _) = basis::q2_3d(*loc);
        for a in 0..27 {
            for b in 0..27 {
                local[a][b] += w * vol * phi[a] * phi[b];
            }
        }
    }
    let mut t = Triplets::new(grids.fluid_q2.n_nodes());
    for e in 0..f.n_cells() {
        let nodes = f.cell_nodes_q2(e);
        for a in 0..27 {
            for b in 0..27 {
                t.push(nodes[a], nodes[b], local[a][b]);
            }
        }
    }
    t.to_csr()
}

fn vector_mass_norm2(m: &Csr, d: &[f64]) -> f64 {
    let mut s = 0.0;
    for c in 0..3 {
        let comp: Vec<f64> = d.iter().skip(c).step_by(3).copied().collect();
        s += m.form(&comp, &comp);
    }
    s
}

fn linear_at(traj: &Trajectory, s: f64) -> Vec<f64> {
    // s is a fractional snapshot index
    let n = traj.steps();
    let i = (s.floor() as usize).min(n.saturating_sub(1));
    let th = s - i as f64;
    let (a, b) = (&traj.snapshots[i].u, &traj.snapshots[i + 1].u);
    a.iter().zip(b).map(|(x, y)| (1.0 - th) * x + th * y).collect()
}

/// Root-mean-square over (0, T) of the spatial L2 distance between the piecewise-linear
/// fluid velocities of a coarse and a twice finer run. Simpson's rule on each fine
/// interval is exact because the difference is linear in time there.
pub fn cauchy_distance(mass: &Csr, coarse: &Trajectory, fine: &Trajectory) -> Result<f64> {
    if fine.steps() != 2 * coarse.steps() {
        return Err(Error::Config(format!("refinement pair needs N and 2N steps, got {} and {}", coarse.steps(), fine.steps())));
    }
    let dtf = fine.dt;
    let mut total = 0.0;
    for k in 0..fine.steps() {
        let mut acc = 0.0;
        for (frac, w) in [(0.0, 1.0), (0.5, 4.0), (1.0, 1.0)] {
            let uf = linear_at(fine, k as f64 + frac);
            let uc = linear_at(coarse, (k as f64 + frac) / 2.0);
            let d: Vec<f64> = uf.iter().zip(&uc).map(|(a, b)| a - b).collect();
            acc += w * vector_mass_norm2(mass, &d);
        }
        total += dtf / 6.0 * acc;
    }
    let t = fine.end_time();
    Ok((total / t).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub steps: Vec<usize>,
    pub norms: Vec<f64>,
    pub ratios: Vec<f64>,
    pub decreasing: bool,
}

/// Runs with N, 2N, 4N, ... steps (`levels` runs) and the distances between successive ones.
pub fn refine_study(config: &RunConfig, init: &InitialState, levels: usize) -> Result<RefineReport> {
    if levels < 2 {
        return Err(Error::Config("refinement study needs at least two levels".into()));
    }
    let mut trajs = Vec::new();
    let mut steps = Vec::new();
    let mut mass = None;
    for l in 0..levels {
        let mut cfg = config.clone();
        cfg.time.steps = config.time.steps << l;
        let pb = Problem::new(&cfg)?;
        let out = run(&pb, init)?;
        if let Some(t) = out.trip {
            return Err(Error::Geometry(format!("refinement run with N={} tripped at step {}", cfg.time.steps, t.step)));
        }
        if mass.is_none() {
            mass = Some(fluid_mass(&pb.grids));
        }
        steps.push(cfg.time.steps);
        trajs.push(out.trajectory);
    }
    let mass = mass.unwrap();
    let norms: Vec<f64> = trajs.windows(2).map(|w| cauchy_distance(&mass, &w[0], &w[1])).collect::<Result<_>>()?;
    let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
    let decreasing = ratios.iter().all(|r| *r < 1.0);
    Ok(RefineReport { steps, norms, ratios, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{preset_state, Preset};

    fn small(preset: Preset, steps: usize) -> (Problem, InitialState) {
        let mut cfg = RunConfig::default();
        cfg.geometry.cells_fluid_z = 2;
        cfg.time.steps = steps;
        let pb = Problem::new(&cfg).unwrap();
        let init = preset_state(&pb.grids, preset, 1);
        (pb, init)
    }

    #[test]
    fn zero_data_stays_zero() {
        let (pb, init) = small(Preset::Zero, 4);
        let out = run(&pb, &init).unwrap();
        assert!(out.trip.is_none());
        assert_eq!(out.trajectory.steps(), 4);
        assert!(out.ledger.rows.iter().all(|r| r.energy.total() == 0.0 && r.d_cumulative == 0.0));
        assert!(out.trajectory.snapshots.iter().all(|s| s.u.iter().chain(&s.eta).chain(&s.omega).all(|v| *v == 0.0)));
    }

    #[test]
    fn smooth_run_is_stable() {
        let (pb, init) = small(Preset::Smooth, 4);
        let out = run(&pb, &init).unwrap();
        assert!(out.trip.is_none());
        assert!(out.ledger.ok(), "{:?} {:?} {:?}", out.ledger.identity_failures, out.ledger.bound_failures, out.ledger.monotone_failures);
    }

    #[test]
    fn interpolant_conventions() {
        let (pb, init) = small(Preset::Smooth, 2);
        let out = run(&pb, &init).unwrap();
        let tr = &out.trajectory;
        let dt = tr.dt;
        assert_eq!(tr.piecewise_constant(dt).unwrap().index, 1);
        assert_eq!(tr.piecewise_constant(1.5 * dt).unwrap().index, 2);
        assert!(tr.piecewise_constant(0.0).is_err());
        assert!(tr.piecewise_constant(3.0 * dt).is_err());
        let mid = tr.piecewise_linear(1.5 * dt).unwrap();
        let (a, b) = (&tr.snapshots[1].u, &tr.snapshots[2].u);
        assert!(mid.u.iter().zip(a.iter().zip(b)).all(|(m, (x, y))| (m - 0.5 * (x + y)).abs() <= 1e-15 * (1.0 + x.abs() + y.abs())));
        let (dw, _) = tr.linear_slopes(1.5 * dt).unwrap();
        let zeta = &tr.snapshots[2].zeta_half;
        assert!(dw.iter().zip(zeta).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs())));
    }
}
