//! Run configuration (TOML) and analytic initial data.

use crate::coupled::Physics;
use crate::error::{Error, Result};
use crate::mesh::{GridSpec, Grids};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub length: f64,
    pub depth: f64,
    pub cells_x: usize,
    pub cells_y: usize,
    pub cells_fluid_z: usize,
    pub cells_biot_z: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { length: 1.0, depth: 1.0, cells_x: 4, cells_y: 4, cells_fluid_z: 4, cells_biot_z: 4 }
    }
}

impl GeometryConfig {
    pub fn spec(&self) -> GridSpec<f64> {
        GridSpec {
            length: self.length,
            depth: self.depth,
            cells_x: self.cells_x,
            cells_y: self.cells_y,
            cells_fluid_z: self.cells_fluid_z,
            cells_biot_z: self.cells_biot_z,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "N")]
    pub steps: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t_final: 0.1, steps: 16 }
    }
}

impl TimeConfig {
    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizationConfig {
    pub delta: f64,
    /// Gauss points per axis when integrating the bump over a stencil cell.
    pub kernel_quadrature: usize,
    /// Smallest admissible delta in units of the largest Biot spacing.
    pub min_cells_per_radius: f64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self { delta: 0.5, kernel_quadrature: 2, min_cells_per_radius: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// Displacement bound; 0.9 R when absent.
    pub r_max: Option<f64>,
    pub c0_floor: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { r_max: None, c0_floor: 0.1, c1: 50.0, c2: 50.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Zero,
    Smooth,
    NearDegenerate,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub preset: Preset,
    /// Directory of field dumps to start from instead of the preset.
    pub dump_dir: Option<PathBuf>,
    pub dump_step: usize,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { preset: Preset::Smooth, dump_dir: None, dump_step: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write field dumps every this many committed steps (0: initial and final only).
    pub dump_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), dump_every: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub linear_tol: f64,
    pub plate_identity_tol: f64,
    pub coupled_identity_tol: f64,
    pub bound_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { linear_tol: 1e-12, plate_identity_tol: 1e-10, coupled_identity_tol: 1e-8, bound_tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub physics: Physics,
    pub time: TimeConfig,
    pub regularization: RegularizationConfig,
    pub monitors: MonitorConfig,
    pub initial: InitialConfig,
    pub output: OutputConfig,
    pub solver: SolverConfig,
    pub seed: u64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be nonnegative, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn r_max(&self) -> f64 {
        self.monitors.r_max.unwrap_or(0.9 * self.geometry.depth)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        positive("geometry.length", g.length)?;
        positive("geometry.depth", g.depth)?;
        for (name, c) in [
            ("geometry.cells_x", g.cells_x),
            ("geometry.cells_y", g.cells_y),
            ("geometry.cells_fluid_z", g.cells_fluid_z),
            ("geometry.cells_biot_z", g.cells_biot_z),
        ] {
            if c < 2 {
                return Err(Error::Config(format!("{name} must be at least 2, got {c}")));
            }
        }
        let p = &self.physics;
        for (name, v) in [
            ("physics.rho_b", p.rho_b),
            ("physics.mu_e", p.mu_e),
            ("physics.lambda_e", p.lambda_e),
            ("physics.alpha", p.alpha),
            ("physics.rho_p", p.rho_p),
            ("physics.nu", p.nu),
            ("physics.kappa", p.kappa),
        ] {
            positive(name, v)?;
        }
        for (name, v) in [("physics.mu_v", p.mu_v), ("physics.lambda_v", p.lambda_v), ("physics.c0", p.c0), ("physics.beta", p.beta)] {
            nonnegative(name, v)?;
        }
        positive("time.T", self.time.t_final)?;
        if self.time.steps < 1 {
            return Err(Error::Config("time.N must be at least 1".into()));
        }
        let r = &self.regularization;
        let limit = g.length.min(g.depth);
        if !(r.delta > 0.0 && r.delta < limit) {
            return Err(Error::Config(format!("regularization.delta must lie in (0, min(L, R) = {limit}), got {}", r.delta)));
        }
        if !(1..=5).contains(&r.kernel_quadrature) {
            return Err(Error::Config(format!("regularization.kernel_quadrature must be in 1..=5, got {}", r.kernel_quadrature)));
        }
        positive("regularization.min_cells_per_radius", r.min_cells_per_radius)?;
        let m = &self.monitors;
        let rmax = self.r_max();
        if !(rmax > 0.0 && rmax < g.depth) {
            return Err(Error::Config(format!("monitors.r_max must lie in (0, R = {}), got {rmax}", g.depth)));
        }
        if !(m.c0_floor > 0.0 && m.c0_floor <= 1.0) {
            return Err(Error::Config(format!("monitors.c0_floor must lie in (0, 1], got {}", m.c0_floor)));
        }
        if !(m.c1 >= 1.0) || !(m.c2 >= 1.0) {
            return Err(Error::Config(format!("monitors.c1 and monitors.c2 must be at least 1, got {} and {}", m.c1, m.c2)));
        }
        let s = &self.solver;
        for (name, v) in [
            ("solver.linear_tol", s.linear_tol),
            ("solver.plate_identity_tol", s.plate_identity_tol),
            ("solver.coupled_identity_tol", s.coupled_identity_tol),
            ("solver.bound_tol", s.bound_tol),
        ] {
            positive(name, v)?;
        }
        Ok(())
    }
}

/// Coefficient vectors of a full initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub u: Vec<f64>,
    pub pi: Vec<f64>,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    pub p: Vec<f64>,
    pub omega: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl InitialState {
    pub fn zeros(grids: &Grids<f64>) -> Self {
        let l = &grids.layout;
        Self {
            u: vec![0.0; l.n_fluid_u()],
            pi: vec![0.0; l.fluid_pi],
            eta: vec![0.0; l.n_biot_disp()],
            xi: vec![0.0; l.n_biot_disp()],
            p: vec![0.0; l.n_biot_p()],
            omega: vec![0.0; l.n_plate()],
            zeta: vec![0.0; l.n_plate()],
        }
    }
}

/// s(x) = 16 (x (L - x))^2 / L^4 and its derivative.
pub fn bump_profile(x: f64, l: f64) -> (f64, f64) {
    let q = x * (l - x);
    let l4 = l * l * l * l;
    (16.0 * q * q / l4, 32.0 * q * (l - 2.0 * x) / l4)
}

/// Plate coefficients (value, d/dx, d/dy, d2/dxdy) of a * s(x) s(y).
pub fn bump_plate(grids: &Grids<f64>, a: f64) -> Vec<f64> {
    let pg = &grids.plate;
    let l = pg.extent_x;
    let mut out = vec![0.0; 4 * pg.n_nodes()];
    for id in 0..pg.n_nodes() {
        let [i, j] = pg.node_ij(id);
        let [x, y] = pg.coord(i, j);
        let (sx, dx) = bump_profile(x, l);
        let (sy, dy) = bump_profile(y, pg.extent_y);
        out[4 * id] = a * sx * sy;
        out[4 * id + 1] = a * dx * sy;
        out[4 * id + 2] = a * sx * dy;
        out[4 * id + 3] = a * dx * dy;
    }
    grids.mask_plate(&mut out);
    out
}

/// Biot field w(x, y) (1 - z/R) e3 from a plate field, using nodal plate values.
fn linear_lift(grids: &Grids<f64>, plate: &[f64]) -> Vec<f64> {
    let b = &grids.biot;
    let r = b.z_hi;
    let mut out = vec![0.0; 3 * b.n_nodes()];
    for id in 0..b.n_nodes() {
        let [i, j, k] = b.node_ijk(id);
        let z = b.coord(i, j, k)[2];
        out[3 * id + 2] = plate[4 * grids.plate.node(i, j)] * (1.0 - z / r);
    }
    grids.impose_biot(&mut out, plate);
    out
}

/// Initial data for a preset. The random preset draws from `seed`.
pub fn preset_state(grids: &Grids<f64>, preset: Preset, seed: u64) -> InitialState {
    let r = grids.biot.z_hi;
    let mut s = InitialState::zeros(grids);
    match preset {
        Preset::Zero => {}
        Preset::Smooth => {
            s.omega = bump_plate(grids, 0.1 * r);
            s.zeta = bump_plate(grids, -0.5 * r);
            s.eta = linear_lift(grids, &s.omega);
            s.xi = linear_lift(grids, &s.zeta);
            let b = &grids.biot;
            let l = b.extent_x;
            for id in 0..b.n_nodes() {
                let [x, y, z] = b.node_coord(id);
                s.p[id] = 0.1 * bump_profile(x, l).0 * bump_profile(y, b.extent_y).0 * (1.0 - z / r);
            }
            grids.mask_pressure(&mut s.p);
        }
        Preset::NearDegenerate => {
            s.omega = bump_plate(grids, -0.5 * r);
            s.zeta = bump_plate(grids, -40.0 * r);
            s.eta = linear_lift(grids, &s.omega);
            s.xi = linear_lift(grids, &s.zeta);
        }
        Preset::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amp = 0.01 * r;
            let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect() };
            let l = &grids.layout;
            s.u = draw(l.n_fluid_u());
            grids.mask_fluid(&mut s.u);
            s.omega = draw(l.n_plate());
            grids.mask_plate(&mut s.omega);
            s.zeta = draw(l.n_plate());
            grids.mask_plate(&mut s.zeta);
            s.eta = draw(l.n_biot_disp());
            grids.impose_biot(&mut s.eta, &s.omega);
            s.xi = draw(l.n_biot_disp());
            grids.impose_biot(&mut s.xi, &s.zeta);
            s.p = draw(l.n_biot_p());
            grids.mask_pressure(&mut s.p);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grids;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!((cfg.r_max() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn negative_shear_modulus_rejected() {
        let err = RunConfig::from_toml("[physics]\nmu_e = -1.0\n").unwrap_err().to_string();
        assert!(err.contains("physics.mu_e") && err.contains("positive"), "{err}");
    }

    #[test]
    fn delta_equal_to_length_rejected() {
        let err = RunConfig::from_toml("[regularization]\ndelta = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("regularization.delta"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::from_toml("[physics]\nmu = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("mu"), "{err}");
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.time.steps = 7;
        cfg.initial.preset = Preset::NearDegenerate;
        cfg.monitors.r_max = Some(0.8);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn presets_are_compatible() {
        let grids = build_grids(&GridSpec { length: 1.0, depth: 1.0, cells_x: 4, cells_y: 4, cells_fluid_z: 2, cells_biot_z: 2 }).unwrap();
        for preset in [Preset::Zero, Preset::Smooth, Preset::NearDegenerate, Preset::Random] {
            let s = preset_state(&grids, preset, 3);
            let tr = grids.trace_z(&s.eta).unwrap();
            let w = grids.transfer(&s.omega).unwrap();
            assert!(tr.iter().zip(&w).all(|(a, b)| (a - b).abs() <= 1e-10));
            let tr = grids.trace_z(&s.xi).unwrap();
            let z = grids.transfer(&s.zeta).unwrap();
            assert!(tr.iter().zip(&z).all(|(a, b)| (a - b).abs() <= 1e-10));
        }
        let s = preset_state(&grids, Preset::Smooth, 0);
        let centre = grids.plate.node(2, 2);
        assert!((s.omega[4 * centre] - 0.1).abs() < 1e-15);
    }
}
