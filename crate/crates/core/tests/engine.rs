use lossy_condensate::engine::{
    run_ensemble, run_trajectory, trajectory_stream, Accumulator, DrainSpec, Engine, EngineConfig,
    EnsembleSpec, Schedule, Scheme, Snapshot, SnapshotCounter, TrajectoryOptions,
};
use lossy_condensate::lattice::{make_grid, Boundary, ComplexField, GridSpec, Units};
use lossy_condensate::observables::FieldMoments;
use lossy_condensate::vacuum::VacuumSampler;
use num_complex::Complex64;

fn grid(n: usize) -> GridSpec {
    make_grid(n, 0.5, Boundary::Periodic).unwrap()
}

fn units() -> Units {
    Units::new(10.0).unwrap()
}

fn evolve(engine: &Engine, field: ComplexField, t: f64) -> ComplexField {
    let mut rng = trajectory_stream(3, 0);
    let mut last = None;
    run_trajectory(
        engine,
        field,
        &Schedule::new(vec![t]),
        TrajectoryOptions::default(),
        &mut rng,
        |_, f| last = Some(f.clone()),
    )
    .unwrap();
    last.unwrap()
}

/// Condensate carrying a few long-wavelength sound waves.
fn smooth_state(g: GridSpec, n0: f64) -> ComplexField {
    let l = g.length();
    let values = g
        .positions()
        .iter()
        .map(|&x| {
            let k = 2.0 * std::f64::consts::PI / l;
            let amp = 1.0 + 0.05 * (3.0 * k * x).cos() + 0.025 * (7.0 * k * x).sin();
            Complex64::from_polar(n0.sqrt() * amp, 0.1 * (5.0 * k * x).sin())
        })
        .collect();
    ComplexField::new(values, g, 0.0).unwrap()
}

#[test]
fn lossless_run_conserves_norm_and_energy() {
    let g = grid(512);
    let u = units();
    let engine = Engine::new(g, EngineConfig::new(&u).with_noise(false)).unwrap();
    let field = smooth_state(g, u.n0);
    let (n0, e0) = (field.weyl_norm(), field.energy(u.coupling()));
    let f = evolve(&engine, field, 100.0);
    assert!(((f.weyl_norm() - n0) / n0).abs() < 1e-8);
    let de = ((f.energy(u.coupling()) - e0) / e0).abs();
    assert!(de < 1e-8, "relative energy change {de:.3e}");
}

#[test]
fn rough_fields_keep_energy_up_to_splitting_error() {
    // a vacuum sample populates every lattice mode; the split step then
    // conserves a modified energy, off by O(dt^2) but without drift
    let g = grid(512);
    let u = units();
    let sampler = VacuumSampler::new(g, u, None).unwrap();
    let field = sampler.sample(&mut trajectory_stream(3, 0)).field;
    let n0 = field.weyl_norm();
    let e0 = field.energy(u.coupling());
    let drift = |dt: f64| {
        let engine = Engine::new(g, EngineConfig::new(&u).with_dt(dt).with_noise(false)).unwrap();
        let f = evolve(&engine, field.clone(), 20.0);
        assert!(((f.weyl_norm() - n0) / n0).abs() < 1e-10);
        ((f.energy(u.coupling()) - e0) / e0).abs()
    };
    let (a, b) = (drift(0.01), drift(0.005));
    assert!(a < 1e-4, "energy error {a}");
    assert!(
        (a / b - 4.0).abs() < 0.8,
        "error ratio {} is not second order",
        a / b
    );
}

/// Accumulates `|psi_j|^2` per site at every output time.
#[derive(Clone)]
struct SiteMoments {
    sum: Vec<f64>,
    sum2: Vec<f64>,
    count: u64,
}

impl Accumulator for SiteMoments {
    fn observe(&mut self, s: &Snapshot<'_>) {
        for (j, z) in s.field.values.iter().enumerate() {
            let n = z.norm_sqr();
            self.sum[j] += n;
            self.sum2[j] += n * n;
        }
        self.count += 1;
    }
    fn merge(&mut self, o: &Self) {
        self.sum.iter_mut().zip(&o.sum).for_each(|(a, b)| *a += b);
        self.sum2.iter_mut().zip(&o.sum2).for_each(|(a, b)| *a += b);
        self.count += o.count;
    }
}

fn vacuum_z_scores(gamma: f64, n_traj: usize) -> (Vec<f64>, usize) {
    let g = grid(128);
    let u = units();
    let cfg = EngineConfig::new(&u)
        .with_coupling(0.0)
        .with_drain(DrainSpec::centered(gamma));
    let engine = Engine::new(g, cfg).unwrap();
    let sampler = VacuumSampler::with_density(g, u, 0.0, None).unwrap();
    // 10^3 steps
    let schedule = Schedule::new(vec![10.0]);
    let proto = SiteMoments {
        sum: vec![0.0; 128],
        sum2: vec![0.0; 128],
        count: 0,
    };
    let spec = EnsembleSpec {
        engine: &engine,
        sampler: &sampler,
        schedule: &schedule,
        n_traj,
        base_seed: 11,
        workers: None,
    };
    let m = run_ensemble(&spec, &proto).unwrap().accumulator;
    let c = m.count as f64;
    let target = 0.5 / g.dx;
    let z = m
        .sum
        .iter()
        .zip(&m.sum2)
        .map(|(s, s2)| {
            let mean = s / c;
            let se = ((s2 / c - mean * mean) / (c - 1.0)).sqrt();
            (mean - target) / se
        })
        .collect();
    (z, g.origin_index)
}

#[test]
fn lossy_free_lattice_keeps_the_wigner_vacuum() {
    for gamma in [0.1, 2.0] {
        let (z, drain) = vacuum_z_scores(gamma, 4000);
        for j in drain - 2..=drain + 2 {
            assert!(
                z[j].abs() < 3.0,
                "gamma {gamma}: site {j} off by {:.2} sigma",
                z[j]
            );
        }
        // 128 sites: a 4.5 sigma excursion anywhere is a 1e-3 event
        let worst = z.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(
            worst < 4.5,
            "gamma {gamma}: worst site off by {worst:.2} sigma"
        );
        let mean_z = z.iter().sum::<f64>() / (z.len() as f64).sqrt();
        assert!(mean_z.abs() < 3.0 * 3.0, "collective offset {mean_z:.2}");
    }
}

#[test]
fn deterministic_loss_obeys_continuity() {
    let g = grid(1024);
    let u = units();
    let gamma = 0.1;
    let cfg = EngineConfig::new(&u)
        .with_noise(false)
        .with_drain(DrainSpec::centered(gamma));
    let engine = Engine::new(g, cfg).unwrap();
    let field = ComplexField::uniform(g, Complex64::new(u.n0.sqrt(), 0.0));
    let mut rng = trajectory_stream(0, 0);
    let rec = run_trajectory(
        &engine,
        field,
        &Schedule::until(40.0),
        TrajectoryOptions { norm_stride: 1 },
        &mut rng,
        |_, _| {},
    )
    .unwrap();
    let h = &rec.norm_history;
    let dt = engine.dt();
    let mut worst: f64 = 0.0;
    for i in (1..h.len() - 1).step_by(97) {
        let dn = (h[i + 1].norm - h[i - 1].norm) / (2.0 * dt);
        let sink = -2.0 * gamma * h[i].drain_density[0];
        worst = worst.max(((dn - sink) / sink).abs());
    }
    assert!(worst < 0.01, "relative continuity error {worst}");
}

fn moments_for(workers: Option<usize>, n_traj: usize) -> (FieldMoments, SnapshotCounter) {
    let g = grid(128);
    let u = units();
    let engine = Engine::new(
        g,
        EngineConfig::new(&u).with_drain(DrainSpec::centered(0.3)),
    )
    .unwrap();
    let sampler = VacuumSampler::new(g, u, None).unwrap();
    let schedule = Schedule::new(vec![0.0, 2.0, 5.0]);
    let spec = EnsembleSpec {
        engine: &engine,
        sampler: &sampler,
        schedule: &schedule,
        n_traj,
        base_seed: 99,
        workers,
    };
    run_ensemble(
        &spec,
        &(FieldMoments::new(g, 3), SnapshotCounter::default()),
    )
    .unwrap()
    .accumulator
}

#[test]
fn ensemble_is_independent_of_worker_count() {
    let reference = moments_for(Some(1), 70);
    for w in [2, 3, 5] {
        assert_eq!(moments_for(Some(w), 70), reference, "{w} workers");
    }
    assert_eq!(reference.1.counts, vec![70, 70, 70]);
}

#[test]
fn single_member_ensemble_is_one_trajectory() {
    let g = grid(128);
    let u = units();
    let engine = Engine::new(
        g,
        EngineConfig::new(&u).with_drain(DrainSpec::centered(0.3)),
    )
    .unwrap();
    let sampler = VacuumSampler::new(g, u, None).unwrap();
    let schedule = Schedule::new(vec![0.0, 2.0, 5.0]);
    let spec = EnsembleSpec {
        engine: &engine,
        sampler: &sampler,
        schedule: &schedule,
        n_traj: 1,
        base_seed: 99,
        workers: None,
    };
    let ens = run_ensemble(&spec, &FieldMoments::new(g, 3))
        .unwrap()
        .accumulator;

    let mut direct = FieldMoments::new(g, 3);
    let mut rng = trajectory_stream(99, 0);
    let field = sampler.sample(&mut rng).field;
    run_trajectory(
        &engine,
        field,
        &schedule,
        TrajectoryOptions::default(),
        &mut rng,
        |i, f| {
            direct.observe(&Snapshot {
                traj_index: 0,
                time_index: i,
                time: f.time,
                field: f,
            })
        },
    )
    .unwrap();
    assert_eq!(ens, direct);
}

#[test]
fn symmetric_data_stay_mirror_symmetric() {
    let g = grid(512);
    let u = units();
    let cfg = EngineConfig::new(&u)
        .with_noise(false)
        .with_drain(DrainSpec::centered(1.0));
    let engine = Engine::new(g, cfg).unwrap();
    let field = ComplexField::uniform(g, Complex64::new(u.n0.sqrt(), 0.0));
    let mut rng = trajectory_stream(0, 0);
    let mut last = None;
    run_trajectory(
        &engine,
        field,
        &Schedule::new(vec![30.0]),
        TrajectoryOptions::default(),
        &mut rng,
        |_, f| last = Some(f.clone()),
    )
    .unwrap();
    let f = last.unwrap();
    let n = g.n_sites;
    let o = g.origin_index;
    for d in 1..n / 2 {
        let (a, b) = (f.values[o + d], f.values[(o + n - d) % n]);
        assert!(
            (a - b).norm() < 1e-9 * a.norm().max(1.0),
            "offset {d}: {a} vs {b}"
        );
    }
}

#[test]
fn finite_difference_scheme_agrees_with_spectral() {
    let u = units();
    let run = |scheme: Scheme, dx: f64| -> (Vec<f64>, f64) {
        let n = (128.0 / dx) as usize;
        let g = make_grid(n, dx, Boundary::Periodic).unwrap();
        let dt = EngineConfig::stability_bound(dx).min(0.01);
        let cfg = EngineConfig::new(&u)
            .with_dt(dt)
            .with_noise(false)
            .with_scheme(scheme)
            .with_drain(DrainSpec::centered(0.1));
        let engine = Engine::new(g, cfg).unwrap();
        let field = ComplexField::uniform(g, Complex64::new(u.n0.sqrt(), 0.0));
        let mut rng = trajectory_stream(0, 0);
        let mut out = Vec::new();
        run_trajectory(
            &engine,
            field,
            &Schedule::new(vec![10.0]),
            TrajectoryOptions::default(),
            &mut rng,
            |_, f| {
                // density sampled every healing length
                let step = (1.0 / dx) as usize;
                out = (0..n)
                    .step_by(step)
                    .map(|j| f.values[j].norm_sqr())
                    .collect();
            },
        )
        .unwrap();
        (out, dx)
    };
    let err = |dx: f64| {
        let (a, _) = run(Scheme::SplitStepSpectral, dx);
        let (b, _) = run(Scheme::SemiImplicitFd, dx);
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
            / u.n0
    };
    let (coarse, fine) = (err(0.5), err(0.25));
    assert!(coarse < 0.05, "schemes differ by {coarse}");
    assert!(fine < 0.5 * coarse, "no convergence: {coarse} -> {fine}");
}

#[test]
fn hard_wall_needs_finite_differences() {
    let g = make_grid(64, 0.5, Boundary::HardWall).unwrap();
    let u = units();
    assert!(Engine::new(g, EngineConfig::new(&u)).is_err());
    assert!(Engine::new(g, EngineConfig::new(&u).with_scheme(Scheme::SemiImplicitFd)).is_ok());
}
