use fpsi::config::{preset_state, Preset, RunConfig};
use fpsi::coupled::convection_form;
use fpsi::driver::{run, Problem};
use fpsi::geometry::build_geometry_cache;
use fpsi::kinematics::{ale_fluid_inverse, ale_fluid_map, biot_geometry, interface_frame, transformed_biot_gradient, PlateGeometryEval};
use fpsi::mesh::{build_grids, DofKind, GridSpec};
use fpsi::plate::{assemble_plate_operators, plate_step, PlateState};
use fpsi::regularize::{odd_extend, regularize, trilinear_eval};
use fpsi::validation::tiny_config;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(l: f64, r: f64, c: [usize; 4]) -> GridSpec<f64> {
    GridSpec { length: l, depth: r, cells_x: c[0], cells_y: c[1], cells_fluid_z: c[2], cells_biot_z: c[3] }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, a: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-a..a)).collect()
}

// ---- mesh

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn node_coordinates_are_index_times_spacing(l in 0.1f64..10.0, r in 0.1f64..10.0, nx in 2usize..9, nz in 2usize..9) {
        let g = build_grids(&spec(l, r, [nx, nx + 1, nz, nz + 1])).unwrap();
        let n = [nx, nx + 1, nz + 1];
        let ext = [l, l, r];
        let expect = |a: usize, i: usize| if i == n[a] { ext[a] } else { i as f64 * (ext[a] / n[a] as f64) };
        for id in 0..g.biot.n_nodes() {
            let [i, j, k] = g.biot.node_ijk(id);
            let x = g.biot.node_coord(id);
            prop_assert_eq!(x[0], expect(0, i));
            prop_assert_eq!(x[1], expect(1, j));
            prop_assert_eq!(x[2], expect(2, k));
        }
    }

    #[test]
    fn masks_hit_exactly_the_outer_boundaries(nx in 2usize..6, ny in 2usize..6, nz in 2usize..5) {
        let g = build_grids(&spec(1.0, 1.0, [nx, ny, nz, nz])).unwrap();
        let q2 = &g.fluid_q2;
        for id in 0..q2.n_nodes() {
            let [i, j, k] = q2.node_ijk(id);
            let wall = i == 0 || j == 0 || i == 2 * nx || j == 2 * ny || k == 0;
            for c in 0..3 {
                prop_assert_eq!(g.layout.fluid_u[3 * id + c], !wall);
            }
        }
        let b = &g.biot;
        for id in 0..b.n_nodes() {
            let [i, j, k] = b.node_ijk(id);
            let outer = i == 0 || j == 0 || i == nx || j == ny || k == nz;
            prop_assert_eq!(g.layout.biot_p[id], !outer);
            let kinds = &g.layout.biot_disp[3 * id..3 * id + 3];
            if outer {
                prop_assert!(kinds.iter().all(|d| *d == DofKind::Fixed));
            } else if k == 0 {
                prop_assert_eq!(kinds, &[DofKind::Fixed, DofKind::Fixed, DofKind::Tied(g.plate.node(i, j))][..]);
            } else {
                prop_assert!(kinds.iter().all(|d| *d == DofKind::Free));
            }
        }
        let zero = vec![0.0; g.layout.n_plate()];
        prop_assert!(g.transfer(&zero).unwrap().iter().all(|v| *v == 0.0));
    }
}

// ---- kinematics

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fluid_map_round_trip(r in 0.2f64..5.0, frac in -0.95f64..3.0, dx in -2.0f64..2.0, dy in -2.0f64..2.0,
                            x in 0.0f64..1.0, y in 0.0f64..1.0, zf in 0.0f64..1.0) {
        let w = PlateGeometryEval { omega: frac * r, dx, dy };
        let p = [x, y, -zf * r];
        let q = ale_fluid_inverse(r, &w, ale_fluid_map(r, &w, p), 0.05).unwrap();
        for a in 0..3 {
            prop_assert!((q[a] - p[a]).abs() <= 1e-12 * r.max(1.0));
        }
    }

    #[test]
    fn interface_area_factor_is_at_least_one(dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
        let f = interface_frame(dx, dy);
        prop_assert!(f.jacobian >= 1.0);
        prop_assert_eq!(f.jacobian == 1.0, dx == 0.0 && dy == 0.0);
        prop_assert_eq!(interface_frame(0.0, 0.0).jacobian, 1.0);
    }

    #[test]
    fn undeformed_biot_gradient_is_identity(e in prop::array::uniform3(-1.0f64..1.0), g in prop::array::uniform3(-1e3f64..1e3)) {
        let geo = biot_geometry(e, [[0.0; 3]; 3]).unwrap();
        prop_assert_eq!(transformed_biot_gradient(&geo, g), g);
        prop_assert_eq!(geo.det, 1.0);
    }
}

// ---- regularization

fn admissible(g: &fpsi::Grids, rng: &mut ChaCha8Rng, a: f64) -> Vec<f64> {
    let mut omega = uniform(rng, g.layout.n_plate(), a);
    g.mask_plate(&mut omega);
    let mut eta: Vec<f64> = g.layout.biot_disp.iter().map(|d| if *d == DofKind::Fixed { 0.0 } else { rng.random_range(-a..a) }).collect();
    g.impose_biot(&mut eta, &omega);
    eta
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mollification_is_linear_and_vanishes_off_the_interface(seed in any::<u64>(), s in -3.0f64..3.0) {
        let pb = Problem::new(&RunConfig::default()).unwrap();
        let g = &pb.grids;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = admissible(g, &mut rng, 0.1);
        let b = admissible(g, &mut rng, 0.1);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + y).collect();
        let (ga, gb, gm) = (pb.regularize(&a).unwrap(), pb.regularize(&b).unwrap(), pb.regularize(&mix).unwrap());
        for id in 0..g.biot.n_nodes() {
            for c in 0..3 {
                prop_assert!((gm.nodal[id][c] - s * ga.nodal[id][c] - gb.nodal[id][c]).abs() <= 1e-12);
            }
        }
        // boundary faces away from the interface, sampled at random points
        let bg = &g.biot;
        for _ in 0..50 {
            let face = rng.random_range(0..5);
            let mut p = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            match face {
                0 => p[0] = 0.0,
                1 => p[0] = 1.0,
                2 => p[1] = 0.0,
                3 => p[1] = 1.0,
                _ => p[2] = 1.0,
            }
            let (e, loc) = bg.locate(p);
            let (v, _) = trilinear_eval(bg, &gm.nodal, e, loc);
            prop_assert!(v.iter().all(|x| x.abs() <= 1e-12));
        }
    }

    #[test]
    fn mollification_does_not_steepen(seed in any::<u64>()) {
        let pb = Problem::new(&RunConfig::default()).unwrap();
        let g = &pb.grids;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eta = admissible(g, &mut rng, 0.1);
        let omega = g.trace_z(&eta).unwrap();
        let ext = odd_extend(&g.biot, &eta, &omega).unwrap();
        let geo = regularize(&g.biot, &eta, &pb.kernel, 3).unwrap();
        let d = ext.dims();
        let mut ext_max = [[0.0f64; 3]; 3];
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let v = ext.at(i, j, k);
                    for (a, nb) in [(0, [i + 1, j, k]), (1, [i, j + 1, k]), (2, [i, j, k + 1])] {
                        if nb[0] < d[0] && nb[1] < d[1] && nb[2] < d[2] {
                            let w = ext.at(nb[0], nb[1], nb[2]);
                            for c in 0..3 {
                                ext_max[a][c] = ext_max[a][c].max((w[c] - v[c]).abs());
                            }
                        }
                    }
                }
            }
        }
        let b = &g.biot;
        let bd = b.dims();
        for id in 0..b.n_nodes() {
            let [i, j, k] = b.node_ijk(id);
            for (a, nb) in [(0, [i + 1, j, k]), (1, [i, j + 1, k]), (2, [i, j, k + 1])] {
                if nb[0] < bd[0] && nb[1] < bd[1] && nb[2] < bd[2] {
                    let w = geo.nodal[b.node(nb[0], nb[1], nb[2])];
                    for c in 0..3 {
                        prop_assert!((w[c] - geo.nodal[id][c]).abs() <= ext_max[a][c] + 1e-12);
                    }
                }
            }
        }
    }
}

// ---- plate

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn plate_step_is_unconditionally_stable(seed in any::<u64>(), log_dt in -6.0f64..1.0, rho in 0.1f64..10.0) {
        let grids = build_grids(&spec(1.0, 1.0, [5, 3, 2, 2])).unwrap();
        let ops = assemble_plate_operators(&grids.plate, &grids.layout.plate);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grids.layout.n_plate();
        let mut omega = uniform(&mut rng, n, 1.0);
        let mut zeta = uniform(&mut rng, n, 1.0);
        grids.mask_plate(&mut omega);
        grids.mask_plate(&mut zeta);
        let dt = 10f64.powf(log_dt);
        let old = PlateState { omega, zeta };
        let (new, rep) = plate_step(&ops, &old, dt, rho, 1e-12).unwrap();
        prop_assert!(rep.kinetic_new + rep.bending_new <= rep.rhs() * (1.0 + 1e-12));
        prop_assert!(rep.residual <= 1e-10);
        for i in 0..n {
            prop_assert_eq!(new.omega[i], old.omega[i] + dt * new.zeta[i]);
        }
        // the substep matrix is positive definite on the clamped space
        let x = {
            let mut x = uniform(&mut rng, n, 1.0);
            grids.mask_plate(&mut x);
            x
        };
        let q = rho / dt * ops.mass.form(&x, &x) + dt * ops.bending.form(&x, &x);
        prop_assert!(q > 0.0);
    }
}

// ---- coupled substep and driver

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn committed_steps_respect_structure(seed in any::<u64>(), elastic in any::<bool>()) {
        let mut cfg = tiny_config(&RunConfig::default());
        cfg.time.steps = 3;
        if elastic {
            cfg.physics.mu_v = 0.0;
            cfg.physics.lambda_v = 0.0;
        }
        let pb = Problem::new(&cfg).unwrap();
        let init = preset_state(&pb.grids, Preset::Random, seed);
        let out = run(&pb, &init).unwrap();
        prop_assert!(out.ledger.ok());
        let dt = pb.dt();
        let l = &pb.grids.layout;
        for w in out.trajectory.snapshots.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            for i in 0..a.eta.len() {
                prop_assert_eq!(b.eta[i], a.eta[i] + dt * b.xi[i]);
                match l.biot_disp[i] {
                    DofKind::Fixed => prop_assert_eq!(b.xi[i], 0.0),
                    DofKind::Tied(n) => prop_assert_eq!(b.xi[i], b.zeta[4 * n]),
                    DofKind::Free => {}
                }
            }
            for i in 0..a.omega.len() {
                prop_assert_eq!(b.omega[i], a.omega[i] + dt * b.zeta_half[i]);
            }
        }
        for r in &out.ledger.rows {
            let d = &r.dissipation;
            prop_assert!(d.viscous >= 0.0 && d.visco_mu >= 0.0 && d.visco_lambda >= 0.0 && d.darcy >= 0.0 && d.bjs >= 0.0);
            prop_assert!(r.identity_residual <= 1e-8);
        }
        for w in out.ledger.rows.windows(2) {
            prop_assert!(w[1].energy.total() <= w[0].energy.total() * (1.0 + 1e-14));
        }
    }

    #[test]
    fn convection_is_energy_neutral(seed in any::<u64>()) {
        let cfg = tiny_config(&RunConfig::default());
        let pb = Problem::new(&cfg).unwrap();
        let s = preset_state(&pb.grids, Preset::Random, seed);
        let geo = pb.regularize(&s.eta).unwrap();
        let cache = build_geometry_cache(&pb.grids, &s.omega, &s.zeta, geo, pb.depth(), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
        let mut u = uniform(&mut rng, pb.grids.layout.n_fluid_u(), 1.0);
        pb.grids.mask_fluid(&mut u);
        let n2: f64 = u.iter().map(|x| x * x).sum();
        let c = convection_form(&pb.grids, &cache, &s.u, &u, &u);
        prop_assert!(c.abs() <= 1e-13 * n2, "{c}");
    }
}
