//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use fpsi::config::{preset_state, Preset, RunConfig};
use fpsi::driver::{refine_study, run, MonitorKind, Problem};
use fpsi::io::ledger_csv;
use fpsi::kinematics::{ale_fluid_inverse, ale_fluid_map, interface_frame, jacobian_fluid, PlateGeometryEval};
use fpsi::mesh::{build_grids, DofKind};
use fpsi::plate::{plate_step, PlateState};
use fpsi::regularize::{build_kernel, regularize};
use fpsi::validation::{korn_suite, operator_fd_suite, replay_trajectory, tiny_config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::Command;
use std::time::Instant;

type Outcome = Result<String, String>;

fn plate_energy() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.geometry.cells_x = 8;
    cfg.geometry.cells_y = 8;
    let pb = Problem::new(&cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = pb.grids.layout.n_plate();
    let mut draw = || -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        pb.grids.mask_plate(&mut v);
        v
    };
    let mut state = PlateState { omega: draw(), zeta: draw() };
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (next, rep) = plate_step(&pb.plate, &state, 1e-3, 1.0, 1e-12).map_err(|e| e.to_string())?;
        worst = worst.max(rep.residual);
        state = next;
    }
    let secs = t0.elapsed().as_secs_f64();
    let msg = format!("max residual {worst:.2e}, 100 steps in {secs:.2} s");
    if worst <= 1e-10 && secs < 5.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn coupled_replay(elastic: bool) -> Outcome {
    let mut cfg = tiny_config(&RunConfig::default());
    cfg.time.steps = 20;
    cfg.time.t_final = 0.1;
    if elastic {
        cfg.physics.mu_v = 0.0;
        cfg.physics.lambda_v = 0.0;
    }
    let pb = Problem::new(&cfg).map_err(|e| e.to_string())?;
    let init = preset_state(&pb.grids, Preset::Random, 5);
    let t0 = Instant::now();
    let out = run(&pb, &init).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    if out.trip.is_some() || out.trajectory.steps() != 20 {
        return Err(format!("run stopped after {} steps", out.trajectory.steps()));
    }
    let replay = replay_trajectory(&pb.grids, &cfg.physics, pb.depth(), &out.trajectory);
    let worst = replay.iter().fold(0.0f64, |m, r| m.max(r.coupled_residual).max(r.plate_residual));
    let solver = out.ledger.rows.iter().fold(0.0f64, |m, r| m.max(r.identity_residual));
    let mut msg = format!("replay max residual {worst:.2e}, solver ledger {solver:.2e}, 20 steps in {secs:.2} s");
    let mut ok = worst <= 1e-8 && solver <= 1e-8 && secs < 60.0;
    if elastic {
        let visco_ledger = out.ledger.rows.iter().all(|r| r.dissipation.visco_mu == 0.0 && r.dissipation.visco_lambda == 0.0);
        let visco_replay = replay.iter().all(|r| r.viscoelastic_dissipation == 0.0);
        ok &= visco_ledger && visco_replay;
        msg += &format!(", viscoelastic terms zero: ledger {visco_ledger}, replay {visco_replay}");
    }
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn uniform_bound(elastic: bool) -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.time.steps = 32;
    if elastic {
        cfg.physics.mu_v = 0.0;
        cfg.physics.lambda_v = 0.0;
    }
    let pb = Problem::new(&cfg).map_err(|e| e.to_string())?;
    let init = preset_state(&pb.grids, Preset::Smooth, 0);
    let out = run(&pb, &init).map_err(|e| e.to_string())?;
    let l = &out.ledger;
    let min_slack = l.rows.iter().fold(f64::INFINITY, |m, r| m.min(r.bound_slack));
    let mut rising = 0;
    for w in l.rows.windows(2) {
        if w[1].energy.total() > w[0].energy.total() {
            rising += 1;
        }
    }
    let mut msg = format!("E0 {:.4e}, min slack {min_slack:.3e}, increasing half-steps {rising}", l.e0);
    let mut ok = out.trip.is_none() && out.trajectory.steps() == 32 && min_slack >= -1e-8 * l.e0 && rising == 0;
    if elastic {
        let zero = l.rows.iter().all(|r| r.dissipation.visco_mu == 0.0 && r.dissipation.visco_lambda == 0.0);
        ok &= zero;
        msg += &format!(", viscoelastic terms zero: {zero}");
    }
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn korn() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.geometry.cells_biot_z = 4;
    let grids = build_grids(&cfg.geometry.spec()).map_err(|e| e.to_string())?;
    let r = korn_suite(&grids, 1000, 7, 1e-12);
    let msg = format!("{} samples, min normalized margin {:.3e}, equality case {:.1e}", r.samples, r.min_margin, r.equality_margin);
    if r.pass {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn geometry_kernels() -> Outcome {
    let r = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut round_trip = 0.0f64;
    let mut bit_exact = true;
    for _ in 0..1000 {
        let w = PlateGeometryEval { omega: rng.random_range(-0.9..0.9), dx: rng.random_range(-1.0..1.0), dy: rng.random_range(-1.0..1.0) };
        let p: [f64; 3] = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(-1.0..0.0)];
        let q = ale_fluid_inverse(r, &w, ale_fluid_map(r, &w, p), 1e-12).map_err(|e| e.to_string())?;
        round_trip = (0..3).fold(round_trip, |m, a| m.max((q[a] - p[a]).abs()));
        bit_exact &= jacobian_fluid(r, w.omega) == 1.0 + w.omega / r;
    }
    let jg = (interface_frame(1.0, 0.0).jacobian - 2f64.sqrt()).abs();
    let fd = operator_fd_suite(1.0, 1.0, &[2e-2, 1e-2, 5e-3], 1.8);
    let msg = format!(
        "round trip {round_trip:.1e}, J_f bit-exact {bit_exact}, |J_Gamma - sqrt 2| {jg:.1e}, fluid orders {:.3?}, biot orders {:.3?}",
        fd.fluid_orders, fd.biot_orders
    );
    if round_trip <= 1e-12 && bit_exact && jg <= 1e-14 && fd.pass {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn regularization() -> Outcome {
    let cfg = RunConfig::default();
    let pb = Problem::new(&cfg).map_err(|e| e.to_string())?;
    let g = &pb.grids.biot;
    let mass_err = (pb.kernel.mass() - 1.0).abs();
    let mut small = cfg.clone();
    small.geometry.cells_x = 3;
    small.geometry.cells_y = 5;
    small.geometry.cells_biot_z = 4;
    small.regularization.delta = 0.4;
    small.regularization.min_cells_per_radius = 1.0;
    let sg = build_grids(&small.geometry.spec()).map_err(|e| e.to_string())?;
    let sk = build_kernel(0.4, sg.biot.spacing(), 1.0, 1.0, 2).map_err(|e| e.to_string())?;
    let mass_err = mass_err.max((sk.mass() - 1.0).abs());
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (k, grids) in [&pb.grids, &sg].into_iter().enumerate() {
        let kernel = if k == 0 { &pb.kernel } else { &sk };
        let b = &grids.biot;
        for _ in 0..25 {
            let mut omega: Vec<f64> = (0..grids.layout.n_plate()).map(|_| rng.random_range(-0.1..0.1)).collect();
            grids.mask_plate(&mut omega);
            let mut eta: Vec<f64> = grids.layout.biot_disp.iter().map(|d| if *d == DofKind::Fixed { 0.0 } else { rng.random_range(-0.1..0.1) }).collect();
            grids.impose_biot(&mut eta, &omega);
            let geo = regularize(b, &eta, kernel, 3).map_err(|e| e.to_string())?;
            for id in 0..b.n_nodes() {
                let [i, j, kk] = b.node_ijk(id);
                let outer = i == 0 || j == 0 || i == b.cells[0] || j == b.cells[1] || kk == b.cells[2];
                if outer {
                    worst = geo.nodal[id].iter().fold(worst, |m, v| m.max(v.abs()));
                }
            }
        }
    }
    let _ = g;
    let msg = format!("kernel mass error {mass_err:.1e}, max |eta_delta| off the interface {worst:.1e} over 50 pairs");
    if mass_err <= 1e-12 && worst <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn near_degenerate_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.initial.preset = Preset::NearDegenerate;
    cfg.time.t_final = 0.05;
    cfg.time.steps = 32;
    cfg
}

fn degeneracy() -> Outcome {
    let cfg = near_degenerate_config();
    let pb = Problem::new(&cfg).map_err(|e| e.to_string())?;
    let init = preset_state(&pb.grids, Preset::NearDegenerate, 0);
    let out = run(&pb, &init).map_err(|e| e.to_string())?;
    let Some(trip) = &out.trip else { return Err("no monitor tripped".into()) };
    let v = trip.violation.as_ref().unwrap();
    let r = cfg.geometry.depth;
    let below_r = v.value < r && trip.min_plate_margin > 0.0;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("c.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| e.to_string())?;
    let status = Command::new(env!("CARGO_BIN_EXE_fpsi"))
        .args(["run", "--threads", "1", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .map_err(|e| e.to_string())?;
    let log = std::fs::read_to_string(dir.path().join("out/monitors.jsonl")).map_err(|e| e.to_string())?;
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap_or("{}")).map_err(|e| e.to_string())?;
    let logged = last["event"] == "trip" && last["kind"] == "displacement_bound" && last["node"].is_u64() && last["t_max"].is_f64();
    let code = status.status.code();
    let msg = format!(
        "{:?} at step {} node {} value {:.4} (R = {r}), t_max {:.4} < T {}, exit {:?}, trip record {logged}",
        v.kind, trip.step, v.node, v.value, out.t_max, cfg.time.t_final, code
    );
    if v.kind == MonitorKind::DisplacementBound && below_r && out.t_max < cfg.time.t_final && code == Some(3) && logged {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn cauchy() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.time.steps = 8;
    let grids = build_grids(&cfg.geometry.spec()).map_err(|e| e.to_string())?;
    let init = preset_state(&grids, Preset::Smooth, 0);
    let rep = refine_study(&cfg, &init, 3).map_err(|e| e.to_string())?;
    let norms: Vec<String> = rep.norms.iter().map(|n| format!("{n:.4e}")).collect();
    let msg = format!("N {:?}, norms {norms:?}, ratios {:.3?}", rep.steps, rep.ratios);
    if rep.decreasing && rep.ratios.iter().all(|r| *r < 1.0) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.initial.preset = Preset::Random;
    cfg.time.steps = 4;
    cfg.seed = 42;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("c.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("out{k}"));
        let st = Command::new(env!("CARGO_BIN_EXE_fpsi"))
            .args(["run", "--threads", "1", "--seed", "42", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !st.success() {
            return Err(format!("run {k} exited with {st}"));
        }
        csv.push(std::fs::read(out.join("energy.csv")).map_err(|e| e.to_string())?);
    }
    fpsi::set_threads(1);
    let pb = Problem::new(&cfg).map_err(|e| e.to_string())?;
    let init = preset_state(&pb.grids, Preset::Random, 42);
    let in_process = ledger_csv(&run(&pb, &init).map_err(|e| e.to_string())?.ledger);
    let same = csv[0] == csv[1] && csv[0] == in_process.as_bytes();
    let msg = format!("{} bytes, identical across two CLI runs and an in-process run: {same}", csv[0].len());
    if same {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: Vec<Criterion> = vec![
        ("1 plate substep energy equality", plate_energy),
        ("2 fluid-Biot energy equality by replay", || coupled_replay(false)),
        ("3 uniform energy bound, smooth preset", || uniform_bound(false)),
        ("4 Korn inequality", korn),
        ("5 geometry kernels", geometry_kernels),
        ("6 regularization", regularization),
        ("7 degeneracy detection", degeneracy),
        ("8 time-step refinement", cauchy),
        ("9 purely elastic case", || {
            let a = coupled_replay(true)?;
            let b = uniform_bound(true)?;
            Ok(format!("{a}; {b}"))
        }),
        ("10 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t0 = Instant::now();
        match f() {
            Ok(msg) => println!("PASS  criterion {name}: {msg} [{:.1} s]", t0.elapsed().as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL  criterion {name}: {msg} [{:.1} s]", t0.elapsed().as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
