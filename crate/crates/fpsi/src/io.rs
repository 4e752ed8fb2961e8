//! Text outputs: energy ledger CSV, field dumps, monitor log, manifest.

use crate::config::{InitialState, RunConfig};
use crate::driver::{EnergyLedger, LedgerRow, MonitorReport, RunOutcome, Snapshot};
use crate::error::{Error, Result};
use crate::fields;
use crate::geometry::build_geometry_cache;
use crate::kinematics::{biot_geometry, interface_frame, jacobian_fluid};
use crate::mesh::{BoxGrid, Grids};
use crate::regularize::{trilinear_eval, RegularizedGeometry};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Frozen column order of the energy ledger.
pub const CSV_HEADER: &str = "step,half,time,E_total,E_fluid_kinetic,E_biot_kinetic,E_plate_kinetic,E_storage,E_elastic_mu,E_elastic_lambda,E_plate_bending,D_viscous,D_visco_mu,D_visco_lambda,D_darcy,D_bjs,D_cumulative,N_plate_velocity,N_plate_bending,N_fluid_velocity,N_biot_velocity,N_plate_velocity_coupled,N_pressure,N_elastic_mu,N_elastic_lambda,identity_residual,bound_slack";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), msg: msg.into() }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn row_values(r: &LedgerRow) -> Vec<f64> {
    let e = &r.energy;
    let d = &r.dissipation;
    let n = &r.numerical;
    vec![
        r.time,
        e.total(),
        e.fluid_kinetic,
        e.biot_kinetic,
        e.plate_kinetic,
        e.storage,
        e.elastic_mu,
        e.elastic_lambda,
        e.plate_bending,
        d.viscous,
        d.visco_mu,
        d.visco_lambda,
        d.darcy,
        d.bjs,
        r.d_cumulative,
        r.n_plate_velocity,
        r.n_plate_bending,
        n.fluid_velocity,
        n.biot_velocity,
        n.plate_velocity,
        n.pressure,
        n.elastic_mu,
        n.elastic_lambda,
        r.identity_residual,
        r.bound_slack,
    ]
}

pub fn ledger_csv(ledger: &EnergyLedger) -> String {
    let mut s = String::new();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in &ledger.rows {
        write!(s, "{},{}", r.step, u8::from(r.half)).unwrap();
        for v in row_values(r) {
            write!(s, ",{v:.17e}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Parsed CSV: header names and numeric rows (step and half included as numbers).
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().ok_or_else(|| format_err(path, "empty file"))?.split(',').map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let row = row.map_err(|e| format_err(path, format!("line {}: {e}", i + 2)))?;
        if row.len() != header.len() {
            return Err(format_err(path, format!("line {}: {} fields, expected {}", i + 2, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub components: usize,
    pub units: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub grid: String,
    pub step: usize,
    pub time: f64,
    pub nodes: usize,
    pub fields: Vec<FieldSpec>,
}

fn spec(name: &str, components: usize, units: &str) -> FieldSpec {
    FieldSpec { name: name.into(), components, units: units.into() }
}

fn dump_text(header: &DumpHeader, coords: impl Fn(usize) -> [f64; 3], data: &[(&[f64], usize)]) -> String {
    let mut s = serde_json::to_string(header).unwrap();
    s.push('\n');
    for id in 0..header.nodes {
        let x = coords(id);
        write!(s, "{id} {:.17e} {:.17e} {:.17e}", x[0], x[1], x[2]).unwrap();
        for (v, c) in data {
            for k in 0..*c {
                write!(s, " {:.17e}", v[c * id + k]).unwrap();
            }
        }
        s.push('\n');
    }
    s
}

pub fn dump_name(step: usize, grid: &str) -> String {
    format!("step_{step:05}_{grid}.txt")
}

/// Write the four per-grid dump files of a snapshot into `dir`.
pub fn write_snapshot(dir: &Path, grids: &Grids<f64>, step: usize, time: f64, s: &Snapshot) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |grid: &str, text: String| -> Result<()> {
        let path = dir.join(dump_name(step, grid));
        write_text(&path, &text)?;
        written.push(path);
        Ok(())
    };
    let fq = &grids.fluid_q2;
    let h = DumpHeader { grid: "fluid_q2".into(), step, time, nodes: fq.n_nodes(), fields: vec![spec("u", 3, "m/s")] };
    put("fluid_q2", dump_text(&h, |i| fq.node_coord(i), &[(&s.u, 3)]))?;
    let f = &grids.fluid;
    let h = DumpHeader { grid: "fluid_q1".into(), step, time, nodes: f.n_nodes(), fields: vec![spec("pi", 1, "Pa")] };
    put("fluid_q1", dump_text(&h, |i| f.node_coord(i), &[(&s.pi, 1)]))?;
    let b = &grids.biot;
    let h = DumpHeader {
        grid: "biot".into(),
        step,
        time,
        nodes: b.n_nodes(),
        fields: vec![spec("eta", 3, "m"), spec("xi", 3, "m/s"), spec("p", 1, "Pa")],
    };
    put("biot", dump_text(&h, |i| b.node_coord(i), &[(&s.eta, 3), (&s.xi, 3), (&s.p, 1)]))?;
    let pg = &grids.plate;
    let h = DumpHeader {
        grid: "plate".into(),
        step,
        time,
        nodes: pg.n_nodes(),
        fields: vec![spec("omega", 4, "m, -, -, 1/m"), spec("zeta_half", 4, "m/s, 1/s, 1/s, 1/(m s)"), spec("zeta", 4, "m/s, 1/s, 1/s, 1/(m s)")],
    };
    let coords = |i: usize| {
        let [a, c] = pg.node_ij(i);
        let [x, y] = pg.coord(a, c);
        [x, y, 0.0]
    };
    put("plate", dump_text(&h, coords, &[(&s.omega, 4), (&s.zeta_half, 4), (&s.zeta, 4)]))?;
    Ok(written)
}

fn read_dump(path: &Path, grid: &str, nodes: usize) -> Result<(DumpHeader, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header: DumpHeader = serde_json::from_str(lines.next().ok_or_else(|| format_err(path, "empty dump"))?)
        .map_err(|e| format_err(path, format!("header: {e}")))?;
    if header.grid != grid || header.nodes != nodes {
        return Err(format_err(path, format!("expected grid {grid} with {nodes} nodes, found {} with {}", header.grid, header.nodes)));
    }
    let width: usize = header.fields.iter().map(|f| f.components).sum();
    let mut cols = vec![Vec::with_capacity(nodes); header.fields.len()];
    for (i, line) in lines.enumerate() {
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != 4 + width {
            return Err(format_err(path, format!("record {}: {} fields, expected {}", i, vals.len(), 4 + width)));
        }
        let id: usize = vals[0].parse().map_err(|e| format_err(path, format!("record {i}: {e}")))?;
        if id != i {
            return Err(format_err(path, format!("record {i} carries node id {id}")));
        }
        let mut k = 4;
        for (f, col) in header.fields.iter().zip(cols.iter_mut()) {
            for _ in 0..f.components {
                col.push(vals[k].parse::<f64>().map_err(|e| format_err(path, format!("record {i}: {e}")))?);
                k += 1;
            }
        }
    }
    if cols.first().map_or(0, |c| c.len()) != nodes * header.fields.first().map_or(0, |f| f.components) {
        return Err(format_err(path, "truncated dump"));
    }
    Ok((header, cols))
}

/// Loaded snapshot fields (the regularized geometry is not stored).
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedSnapshot {
    pub step: usize,
    pub time: f64,
    pub u: Vec<f64>,
    pub pi: Vec<f64>,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    pub p: Vec<f64>,
    pub omega: Vec<f64>,
    pub zeta_half: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl LoadedSnapshot {
    pub fn initial_state(&self) -> InitialState {
        InitialState {
            u: self.u.clone(),
            pi: self.pi.clone(),
            eta: self.eta.clone(),
            xi: self.xi.clone(),
            p: self.p.clone(),
            omega: self.omega.clone(),
            zeta: self.zeta.clone(),
        }
    }
}

pub fn load_snapshot(dir: &Path, grids: &Grids<f64>, step: usize) -> Result<LoadedSnapshot> {
    let (h, mut u) = read_dump(&dir.join(dump_name(step, "fluid_q2")), "fluid_q2", grids.fluid_q2.n_nodes())?;
    let (_, mut pi) = read_dump(&dir.join(dump_name(step, "fluid_q1")), "fluid_q1", grids.fluid.n_nodes())?;
    let (_, mut b) = read_dump(&dir.join(dump_name(step, "biot")), "biot", grids.biot.n_nodes())?;
    let (_, mut pl) = read_dump(&dir.join(dump_name(step, "plate")), "plate", grids.plate.n_nodes())?;
    if b.len() != 3 || pl.len() != 3 {
        return Err(format_err(dir, "unexpected field list in dump"));
    }
    let p = b.pop().unwrap();
    let xi = b.pop().unwrap();
    let eta = b.pop().unwrap();
    let zeta = pl.pop().unwrap();
    let zeta_half = pl.pop().unwrap();
    let omega = pl.pop().unwrap();
    Ok(LoadedSnapshot { step: h.step, time: h.time, u: u.remove(0), pi: pi.remove(0), eta, xi, p, omega, zeta_half, zeta })
}

/// One JSON object per monitor evaluation, then a closing record.
pub fn monitor_log(reports: &[MonitorReport], trip: Option<&MonitorReport>, t_max: f64) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&serde_json::to_string(&json!({ "event": "monitor", "report": r })).unwrap());
        s.push('\n');
    }
    let last = match trip.and_then(|t| t.violation.as_ref().map(|v| (t, v))) {
        Some((t, v)) => json!({
            "event": "trip",
            "kind": v.kind,
            "step": t.step,
            "value": v.value,
            "bound": v.bound,
            "location": v.location,
            "node": v.node,
            "t_max": t_max,
        }),
        None => json!({ "event": "complete", "t_max": t_max }),
    };
    s.push_str(&serde_json::to_string(&last).unwrap());
    s.push('\n');
    s
}

fn unix_seconds() -> f64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub program: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub elapsed_seconds: f64,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, threads: usize) -> Self {
        Self {
            program: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            threads,
            started_unix: unix_seconds(),
            finished_unix: 0.0,
            elapsed_seconds: 0.0,
            files: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    /// Stamp the end time, then write manifest.json and config.toml into `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_unix = unix_seconds();
        self.elapsed_seconds = self.finished_unix - self.started_unix;
        write_text(&dir.join("config.toml"), &self.config.to_toml())?;
        self.files.push("config.toml".into());
        self.files.sort();
        write_text(&dir.join("manifest.json"), &serde_json::to_string_pretty(&self).unwrap())
    }
}

fn rel(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).display().to_string()
}

/// Ledger, monitor log and field dumps of a run. Returns the written paths relative to `dir`.
pub fn write_outputs(dir: &Path, grids: &Grids<f64>, cfg: &RunConfig, out: &RunOutcome) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let csv = dir.join("energy.csv");
    write_text(&csv, &ledger_csv(&out.ledger))?;
    files.push(rel(dir, &csv));
    let log = dir.join("monitors.jsonl");
    write_text(&log, &monitor_log(&out.monitors, out.trip.as_ref(), out.t_max))?;
    files.push(rel(dir, &log));
    let fields_dir = dir.join("fields");
    let tr = &out.trajectory;
    let last = tr.steps();
    for (n, s) in tr.snapshots.iter().enumerate() {
        let every = cfg.output.dump_every;
        if n == 0 || n == last || (every > 0 && n % every == 0) {
            for p in write_snapshot(&fields_dir, grids, n, n as f64 * tr.dt, s)? {
                files.push(rel(dir, &p));
            }
        }
    }
    Ok(files)
}

/// Energy components of a full-step state recomputed from dumped fields.
pub fn recompute_energy(grids: &Grids<f64>, cfg: &RunConfig, s: &LoadedSnapshot, eta_delta: RegularizedGeometry<f64>) -> Result<crate::energy::EnergyComponents> {
    let plate = crate::plate::assemble_plate_operators(&grids.plate, &grids.layout.plate);
    let cache = build_geometry_cache(grids, &s.omega, &s.zeta, eta_delta, cfg.geometry.depth, 0.0)?;
    Ok(crate::energy::energy(grids, &cache, &plate, &cfg.physics, &s.u, &s.omega, &s.xi, &s.zeta, &s.p, &s.eta, &s.omega))
}

fn biot_node_geometry(b: &BoxGrid<f64>, nodal: &[[f64; 3]], id: usize) -> (f64, [f64; 3]) {
    let x = b.node_coord(id);
    let (e, loc) = b.locate(x);
    let (val, grad) = trilinear_eval(b, nodal, e, loc);
    let det = biot_geometry(val, grad).map(|g| g.det).unwrap_or(0.0);
    (det, val)
}

/// Jacobian and normal fields of a state: fluid vertices, interface nodes, Biot nodes.
pub fn write_geometry(dir: &Path, grids: &Grids<f64>, cfg: &RunConfig, omega: &[f64], eta_delta: &RegularizedGeometry<f64>) -> Result<Vec<String>> {
    let r = cfg.geometry.depth;
    let pg = &grids.plate;
    let f = &grids.fluid;
    let mut files = Vec::new();

    let mut s = serde_json::to_string(&json!({
        "grid": "fluid_q1", "nodes": f.n_nodes(),
        "fields": [{"name": "jacobian_fluid", "components": 1, "units": "-"}]
    }))
    .unwrap();
    s.push('\n');
    for id in 0..f.n_nodes() {
        let x = f.node_coord(id);
        let (w, _) = fields::plate_at(pg, omega, x[0], x[1]);
        writeln!(s, "{id} {:.17e} {:.17e} {:.17e} {:.17e}", x[0], x[1], x[2], jacobian_fluid(r, w.omega)).unwrap();
    }
    let p = dir.join("geometry_fluid.txt");
    write_text(&p, &s)?;
    files.push(rel(dir, &p));

    let mut s = serde_json::to_string(&json!({
        "grid": "plate", "nodes": pg.n_nodes(),
        "fields": [
            {"name": "omega", "components": 1, "units": "m"},
            {"name": "normal", "components": 3, "units": "-"},
            {"name": "jacobian_interface", "components": 1, "units": "-"},
            {"name": "normal_regularized", "components": 3, "units": "-"}
        ]
    }))
    .unwrap();
    s.push('\n');
    for id in 0..pg.n_nodes() {
        let [i, j] = pg.node_ij(id);
        let [x, y] = pg.coord(i, j);
        let (w, _) = fields::plate_at(pg, omega, x, y);
        let fr = interface_frame(w.dx, w.dy);
        let (e, loc) = eta_delta.grid.locate([x, y, 0.0]);
        let (_, g) = trilinear_eval(&eta_delta.grid, &eta_delta.nodal, e, loc);
        writeln!(
            s,
            "{id} {x:.17e} {y:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
            0.0, w.omega, fr.normal[0], fr.normal[1], fr.normal[2], fr.jacobian, -g[2][0], -g[2][1], 1.0
        )
        .unwrap();
    }
    let p = dir.join("geometry_interface.txt");
    write_text(&p, &s)?;
    files.push(rel(dir, &p));

    let b = &grids.biot;
    let mut s = serde_json::to_string(&json!({
        "grid": "biot", "nodes": b.n_nodes(),
        "fields": [
            {"name": "eta_delta", "components": 3, "units": "m"},
            {"name": "jacobian_biot", "components": 1, "units": "-"}
        ]
    }))
    .unwrap();
    s.push('\n');
    for id in 0..b.n_nodes() {
        let x = b.node_coord(id);
        let (det, v) = biot_node_geometry(b, &eta_delta.nodal, id);
        writeln!(s, "{id} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}", x[0], x[1], x[2], v[0], v[1], v[2], det).unwrap();
    }
    let p = dir.join("geometry_biot.txt");
    write_text(&p, &s)?;
    files.push(rel(dir, &p));
    Ok(files)
}

/// Initial state named by the config: a dumped step if `initial.dump_dir` is set,
/// otherwise the preset (seeded by `seed`).
pub fn initial_state(grids: &Grids<f64>, cfg: &RunConfig) -> Result<InitialState> {
    match &cfg.initial.dump_dir {
        Some(dir) => Ok(load_snapshot(dir, grids, cfg.initial.dump_step)?.initial_state()),
        None => Ok(crate::config::preset_state(grids, cfg.initial.preset, cfg.seed)),
    }
}
