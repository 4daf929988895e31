//! Stochastic Gross-Pitaevskii integrator with delta-localized loss.
//!
//! Each trajectory solves
//! `i dpsi/dt = (-1/2 d^2/dx^2 + g|psi|^2 - i gamma delta(x)) psi + eta(t) delta(x)`
//! with complex white noise `<eta^*(t) eta(s)> = gamma delta(t - s)`. On the
//! lattice the delta becomes `1/dx` on a single site.
//!
//! One step is a Strang split: half kinetic, full interaction plus loss, noise
//! kick at the drain sites, half kinetic. Loss is the exact decay
//! `exp(-gamma dt / dx)` and the kick is the matching Ornstein-Uhlenbeck
//! increment, so the Wigner vacuum `<|psi_j|^2> = 1/(2 dx)` is a fixed point of
//! the lossy free lattice for any step size.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{momentum_grid, Boundary, ComplexField, GridSpec, Units};
use crate::vacuum::VacuumSampler;

/// Localized loss `gamma delta(x - position)`; `gamma` has units of velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrainSpec {
    pub position: f64,
    pub gamma: f64,
}

impl DrainSpec {
    pub fn centered(gamma: f64) -> Self {
        Self {
            position: 0.0,
            gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SplitStepSpectral,
    SemiImplicitFd,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::SplitStepSpectral => "split_step_spectral",
            Scheme::SemiImplicitFd => "semi_implicit_fd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub dt: f64,
    pub drains: Vec<DrainSpec>,
    pub noise_enabled: bool,
    /// Contact coupling `g`; `1/n0` in the crate's units.
    pub interaction_g: f64,
    pub scheme: Scheme,
}

impl EngineConfig {
    /// Defaults: `dt = 0.01`, no drains, noise on, spectral scheme.
    pub fn new(units: &Units) -> Self {
        Self {
            dt: 0.01,
            drains: Vec::new(),
            noise_enabled: true,
            interaction_g: units.coupling(),
            scheme: Scheme::SplitStepSpectral,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_drain(mut self, drain: DrainSpec) -> Self {
        self.drains.push(drain);
        self
    }

    pub fn with_noise(mut self, enabled: bool) -> Self {
        self.noise_enabled = enabled;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_coupling(mut self, g: f64) -> Self {
        self.interaction_g = g;
        self
    }

    /// `0.1 * min(dx^2, 1)`.
    pub fn stability_bound(dx: f64) -> f64 {
        0.1 * (dx * dx).min(1.0)
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let bound = Self::stability_bound(grid.dx);
        if !(self.dt > 0.0) || self.dt > bound * (1.0 + 1e-12) {
            return Err(Error::StabilityBound { dt: self.dt, bound });
        }
        if !(self.interaction_g >= 0.0 && self.interaction_g.is_finite()) {
            return Err(invalid("interaction_g", "must be finite and non-negative"));
        }
        for d in &self.drains {
            if !(d.gamma >= 0.0 && d.gamma.is_finite()) {
                return Err(invalid(
                    "gamma",
                    format!("must be non-negative, got {}", d.gamma),
                ));
            }
            if grid.site_of(d.position).is_none() {
                return Err(Error::OffSiteDrain {
                    position: d.position,
                });
            }
        }
        if self.scheme == Scheme::SplitStepSpectral && grid.boundary != Boundary::Periodic {
            return Err(Error::UnsupportedBoundary {
                scheme: self.scheme.name(),
                boundary: grid.boundary.name(),
            });
        }
        Ok(())
    }
}

/// Per-step noise statistics at a drain site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDraw {
    /// Multiplicative decay of the drain-site amplitude over one step.
    pub decay: f64,
    /// `E|increment|^2` of the complex Gaussian kick added after the decay.
    pub variance: f64,
}

impl NoiseDraw {
    /// Exact discretization of `d psi = -(gamma/dx) psi dt + dW`, `E|dW|^2 = gamma dt / dx^2`.
    ///
    /// For small `gamma dt / dx` the variance reduces to `gamma dt / dx^2`.
    pub fn for_drain(gamma: f64, dt: f64, dx: f64) -> Self {
        let rate = gamma / dx;
        let decay = (-rate * dt).exp();
        let variance = -(-2.0 * rate * dt).exp_m1() / (2.0 * dx);
        Self { decay, variance }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let s = (0.5 * self.variance).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    }
}

#[derive(Debug, Clone, Copy)]
struct PreparedDrain {
    site: usize,
    noise: NoiseDraw,
}

enum Kernel {
    Spectral {
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
        /// `exp(-i k^2 dt / 4) / n`
        half: Vec<Complex64>,
        /// `exp(-i k^2 dt / 2) / n`
        full: Vec<Complex64>,
        scratch_len: usize,
    },
    FiniteDifference {
        /// Off-diagonal coefficient `-i (dt/2) / (4 dx^2)` of the implicit half step.
        off: Complex64,
        diag: Complex64,
        periodic: bool,
    },
}

/// Prepared integrator for one grid and configuration; shareable across threads.
pub struct Engine {
    grid: GridSpec,
    cfg: EngineConfig,
    drains: Vec<PreparedDrain>,
    kernel: Kernel,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("grid", &self.grid)
            .field("cfg", &self.cfg)
            .field("drain_sites", &self.drain_sites())
            .finish()
    }
}

/// Per-worker scratch memory.
#[derive(Debug, Default)]
pub struct Workspace {
    scratch: Vec<Complex64>,
    fd: Vec<Complex64>,
}

impl Engine {
    pub fn new(grid: GridSpec, cfg: EngineConfig) -> Result<Self> {
        cfg.validate(&grid)?;
        let drains = cfg
            .drains
            .iter()
            .map(|d| PreparedDrain {
                site: grid.site_of(d.position).expect("validated"),
                noise: NoiseDraw::for_drain(d.gamma, cfg.dt, grid.dx),
            })
            .collect();
        let n = grid.n_sites;
        let kernel = match cfg.scheme {
            Scheme::SplitStepSpectral => {
                let mut planner = FftPlanner::new();
                let forward = planner.plan_fft_forward(n);
                let inverse = planner.plan_fft_inverse(n);
                let scratch_len = forward
                    .get_inplace_scratch_len()
                    .max(inverse.get_inplace_scratch_len());
                let norm = 1.0 / n as f64;
                let ks = momentum_grid(&grid);
                let phase = |tau: f64| -> Vec<Complex64> {
                    ks.iter()
                        .map(|k| Complex64::from_polar(norm, -0.5 * k * k * tau))
                        .collect()
                };
                Kernel::Spectral {
                    forward,
                    inverse,
                    half: phase(0.5 * cfg.dt),
                    full: phase(cfg.dt),
                    scratch_len,
                }
            }
            Scheme::SemiImplicitFd => {
                let tau = 0.5 * cfg.dt;
                let r = Complex64::new(0.0, 0.5 * tau);
                let inv_dx2 = 1.0 / (grid.dx * grid.dx);
                Kernel::FiniteDifference {
                    off: -r * 0.5 * inv_dx2,
                    diag: r * inv_dx2,
                    periodic: grid.boundary == Boundary::Periodic,
                }
            }
        };
        Ok(Self {
            grid,
            cfg,
            drains,
            kernel,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    pub fn drain_sites(&self) -> Vec<usize> {
        self.drains.iter().map(|d| d.site).collect()
    }

    pub fn workspace(&self) -> Workspace {
        let scratch_len = match &self.kernel {
            Kernel::Spectral { scratch_len, .. } => *scratch_len,
            Kernel::FiniteDifference { .. } => 0,
        };
        Workspace {
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            fd: vec![Complex64::new(0.0, 0.0); 3 * self.grid.n_sites],
        }
    }

    /// Advances by one step of `dt`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        field: &mut ComplexField,
        rng: &mut R,
        ws: &mut Workspace,
    ) -> Result<()> {
        self.advance(field, 1, rng, ws)
    }

    /// Advances by `n_steps` steps. Consecutive kinetic half steps are fused,
    /// which is algebraically identical to repeated [`Engine::step`] calls.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        field: &mut ComplexField,
        n_steps: usize,
        rng: &mut R,
        ws: &mut Workspace,
    ) -> Result<()> {
        if field.grid != self.grid {
            return Err(invalid("field", "grid does not match the engine grid"));
        }
        if n_steps == 0 {
            return Ok(());
        }
        match &self.kernel {
            Kernel::Spectral { .. } => {
                self.kinetic_spectral(&mut field.values, true, ws);
                for s in 0..n_steps {
                    self.local_substeps(&mut field.values, rng);
                    self.kinetic_spectral(&mut field.values, s + 1 == n_steps, ws);
                }
            }
            Kernel::FiniteDifference { .. } => {
                for _ in 0..n_steps {
                    self.kinetic_fd(&mut field.values, ws);
                    self.local_substeps(&mut field.values, rng);
                    self.kinetic_fd(&mut field.values, ws);
                }
            }
        }
        field.time += n_steps as f64 * self.cfg.dt;
        if !field.is_finite() {
            return Err(Error::TrajectoryAborted {
                time: field.time,
                reason: "non-finite field value".into(),
            });
        }
        Ok(())
    }

    fn local_substeps<R: Rng + ?Sized>(&self, values: &mut [Complex64], rng: &mut R) {
        let gdt = self.cfg.interaction_g * self.cfg.dt;
        for z in values.iter_mut() {
            let (s, c) = (gdt * z.norm_sqr()).sin_cos();
            *z *= Complex64::new(c, -s);
        }
        for d in &self.drains {
            values[d.site] *= d.noise.decay;
        }
        if self.cfg.noise_enabled {
            for d in &self.drains {
                if d.noise.variance > 0.0 {
                    values[d.site] += d.noise.sample(rng);
                }
            }
        }
    }

    fn kinetic_spectral(&self, values: &mut [Complex64], half: bool, ws: &mut Workspace) {
        let Kernel::Spectral {
            forward,
            inverse,
            half: half_phase,
            full,
            ..
        } = &self.kernel
        else {
            unreachable!()
        };
        let phase = if half { half_phase } else { full };
        forward.process_with_scratch(values, &mut ws.scratch);
        for (z, p) in values.iter_mut().zip(phase) {
            *z *= p;
        }
        inverse.process_with_scratch(values, &mut ws.scratch);
    }

    /// Crank-Nicolson half step `(1 + i H tau/2) psi' = (1 - i H tau/2) psi`, `tau = dt/2`.
    fn kinetic_fd(&self, values: &mut [Complex64], ws: &mut Workspace) {
        let Kernel::FiniteDifference {
            off,
            diag,
            periodic,
        } = self.kernel
        else {
            unreachable!()
        };
        let n = values.len();
        let (rhs, rest) = ws.fd.split_at_mut(n);
        let (c_prime, tmp) = rest.split_at_mut(n);
        let one = Complex64::new(1.0, 0.0);
        let at = |j: isize| -> Complex64 {
            if j < 0 {
                if periodic {
                    values[n - 1]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            } else if j as usize >= n {
                if periodic {
                    values[0]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            } else {
                values[j as usize]
            }
        };
        for j in 0..n {
            let jj = j as isize;
            rhs[j] = (one - diag) * values[j] - off * (at(jj - 1) + at(jj + 1));
        }
        let a = one + diag;
        if !periodic {
            thomas(a, off, rhs, c_prime, values);
        } else {
            // Sherman-Morrison for the cyclic corners
            let gamma = -a;
            let mut b_mod = vec![a; n];
            b_mod[0] = a - gamma;
            b_mod[n - 1] = a - off * off / gamma;
            thomas_general(&b_mod, off, rhs, c_prime, values);
            let mut u = vec![Complex64::new(0.0, 0.0); n];
            u[0] = gamma;
            u[n - 1] = off;
            thomas_general(&b_mod, off, &u, c_prime, tmp);
            let fact = (values[0] + off * values[n - 1] / gamma)
                / (one + tmp[0] + off * tmp[n - 1] / gamma);
            for j in 0..n {
                values[j] -= fact * tmp[j];
            }
        }
    }
}

/// Constant-coefficient tridiagonal solve.
fn thomas(
    diag: Complex64,
    off: Complex64,
    rhs: &[Complex64],
    c_prime: &mut [Complex64],
    out: &mut [Complex64],
) {
    let n = rhs.len();
    c_prime[0] = off / diag;
    out[0] = rhs[0] / diag;
    for j in 1..n {
        let m = diag - off * c_prime[j - 1];
        c_prime[j] = off / m;
        out[j] = (rhs[j] - off * out[j - 1]) / m;
    }
    for j in (0..n - 1).rev() {
        out[j] -= c_prime[j] * out[j + 1];
    }
}

fn thomas_general(
    diag: &[Complex64],
    off: Complex64,
    rhs: &[Complex64],
    c_prime: &mut [Complex64],
    out: &mut [Complex64],
) {
    let n = rhs.len();
    c_prime[0] = off / diag[0];
    out[0] = rhs[0] / diag[0];
    for j in 1..n {
        let m = diag[j] - off * c_prime[j - 1];
        c_prime[j] = off / m;
        out[j] = (rhs[j] - off * out[j - 1]) / m;
    }
    for j in (0..n - 1).rev() {
        out[j] -= c_prime[j] * out[j + 1];
    }
}

/// Output times plus the final integration time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub output_times: Vec<f64>,
    pub t_end: f64,
}

impl Schedule {
    pub fn new(output_times: Vec<f64>) -> Self {
        let t_end = output_times.last().copied().unwrap_or(0.0);
        Self {
            output_times,
            t_end,
        }
    }

    pub fn until(t_end: f64) -> Self {
        Self {
            output_times: Vec::new(),
            t_end,
        }
    }

    pub fn with_end(mut self, t_end: f64) -> Self {
        self.t_end = self.t_end.max(t_end);
        self
    }

    /// Converts times to step counts, rejecting decreasing or off-step times.
    pub fn step_indices(&self, dt: f64) -> Result<(Vec<usize>, usize)> {
        let to_steps = |t: f64| -> Result<usize> {
            let s = t / dt;
            let r = s.round();
            if t < 0.0 || (s - r).abs() > 1e-6 * r.max(1.0) {
                return Err(invalid(
                    "schedule",
                    format!("time {t} is not a multiple of dt = {dt}"),
                ));
            }
            Ok(r as usize)
        };
        let mut steps = Vec::with_capacity(self.output_times.len());
        for &t in &self.output_times {
            let s = to_steps(t)?;
            if let Some(&prev) = steps.last() {
                if s <= prev {
                    return Err(invalid(
                        "schedule",
                        "output times must be strictly increasing",
                    ));
                }
            }
            steps.push(s);
        }
        let end = to_steps(self.t_end)?.max(steps.last().copied().unwrap_or(0));
        Ok((steps, end))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryStatus {
    Completed,
    Aborted { time: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormSample {
    pub time: f64,
    pub norm: f64,
    /// `|psi|^2` at each drain site.
    pub drain_density: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub final_hash: String,
    pub final_time: f64,
    pub norm_history: Vec<NormSample>,
    pub status: TrajectoryStatus,
}

impl TrajectoryRecord {
    pub fn is_complete(&self) -> bool {
        self.status == TrajectoryStatus::Completed
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrajectoryOptions {
    /// Record the Weyl norm every this many steps (0 = only at output times).
    pub norm_stride: usize,
}

/// Evolves one trajectory, handing a snapshot to `sink` at every output time.
///
/// Failures (non-finite values, norm above 10x its initial value) end the
/// run early and are reported in the record's status rather than as an error.
pub fn run_trajectory<R, F>(
    engine: &Engine,
    mut field: ComplexField,
    schedule: &Schedule,
    options: TrajectoryOptions,
    rng: &mut R,
    mut sink: F,
) -> Result<TrajectoryRecord>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &ComplexField),
{
    let dt = engine.dt();
    let (out_steps, end_step) = schedule.step_indices(dt)?;
    let mut ws = engine.workspace();
    let initial_norm = field.weyl_norm();
    let mut history = Vec::new();
    let drains = engine.drain_sites();
    let record = |f: &ComplexField, h: &mut Vec<NormSample>| {
        h.push(NormSample {
            time: f.time,
            norm: f.weyl_norm(),
            drain_density: drains.iter().map(|&s| f.values[s].norm_sqr()).collect(),
        });
    };

    // event steps: outputs and norm samples
    let mut events: Vec<usize> = out_steps.clone();
    if options.norm_stride > 0 {
        events.extend((0..=end_step).step_by(options.norm_stride));
    }
    events.push(end_step);
    events.sort_unstable();
    events.dedup();

    let start_time = field.time;
    let mut current = 0usize;
    let mut next_out = 0usize;
    let mut status = TrajectoryStatus::Completed;
    for &ev in &events {
        if ev > current {
            if let Err(e) = engine.advance(&mut field, ev - current, rng, &mut ws) {
                status = TrajectoryStatus::Aborted {
                    time: field.time,
                    reason: e.to_string(),
                };
                break;
            }
            current = ev;
            // keep the accumulated time exact
            field.time = start_time + current as f64 * dt;
            let norm = field.weyl_norm();
            if norm > 10.0 * initial_norm.max(f64::MIN_POSITIVE) {
                status = TrajectoryStatus::Aborted {
                    time: field.time,
                    reason: format!("norm explosion: {norm} > 10 x {initial_norm}"),
                };
                break;
            }
        }
        let on_stride = options.norm_stride > 0 && ev % options.norm_stride == 0;
        if on_stride || (options.norm_stride == 0 && out_steps.binary_search(&ev).is_ok()) {
            record(&field, &mut history);
        }
        while next_out < out_steps.len() && out_steps[next_out] == ev {
            sink(next_out, &field);
            next_out += 1;
        }
    }
    Ok(TrajectoryRecord {
        final_hash: field.content_hash(),
        final_time: field.time,
        norm_history: history,
        status,
    })
}

/// Random stream of trajectory `index` under `base_seed`.
pub fn trajectory_stream(base_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index as u64);
    rng
}

/// One field snapshot handed to ensemble accumulators.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub traj_index: usize,
    pub time_index: usize,
    pub time: f64,
    pub field: &'a ComplexField,
}

/// Mergeable ensemble reduction. `merge` must be associative; the ensemble
/// runner always merges partials in trajectory order.
pub trait Accumulator: Clone + Send + Sync {
    fn observe(&mut self, snapshot: &Snapshot<'_>);
    fn merge(&mut self, other: &Self);
}

impl<A: Accumulator, B: Accumulator> Accumulator for (A, B) {
    fn observe(&mut self, s: &Snapshot<'_>) {
        self.0.observe(s);
        self.1.observe(s);
    }
    fn merge(&mut self, other: &Self) {
        self.0.merge(&other.0);
        self.1.merge(&other.1);
    }
}

impl<A: Accumulator, B: Accumulator, C: Accumulator> Accumulator for (A, B, C) {
    fn observe(&mut self, s: &Snapshot<'_>) {
        self.0.observe(s);
        self.1.observe(s);
        self.2.observe(s);
    }
    fn merge(&mut self, other: &Self) {
        self.0.merge(&other.0);
        self.1.merge(&other.1);
        self.2.merge(&other.2);
    }
}

/// An absent accumulator ignores snapshots, so optional reductions can share a tuple.
impl<A: Accumulator> Accumulator for Option<A> {
    fn observe(&mut self, s: &Snapshot<'_>) {
        if let Some(a) = self {
            a.observe(s);
        }
    }
    fn merge(&mut self, other: &Self) {
        if let (Some(a), Some(b)) = (self, other) {
            a.merge(b);
        }
    }
}

/// Counts completed snapshots per output time; integer-exact.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnapshotCounter {
    pub counts: Vec<u64>,
}

impl Accumulator for SnapshotCounter {
    fn observe(&mut self, s: &Snapshot<'_>) {
        if self.counts.len() <= s.time_index {
            self.counts.resize(s.time_index + 1, 0);
        }
        self.counts[s.time_index] += 1;
    }
    fn merge(&mut self, other: &Self) {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec<'a> {
    pub engine: &'a Engine,
    pub sampler: &'a VacuumSampler,
    pub schedule: &'a Schedule,
    pub n_traj: usize,
    pub base_seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct EnsembleStats<A> {
    pub accumulator: A,
    pub n_completed: usize,
    pub n_aborted: usize,
    pub aborted: Vec<(usize, String)>,
}

/// Trajectories per reduction block. Fixed so that the merge tree, and hence
/// every floating-point sum, does not depend on the number of workers.
const BLOCK: usize = 16;

struct BlockResult<A> {
    acc: A,
    completed: usize,
    aborted: Vec<(usize, String)>,
}

/// Runs `n_traj` independent trajectories and reduces their snapshots.
///
/// Trajectory `i` draws its initial state and noise from
/// [`trajectory_stream`]`(base_seed, i)`. Aborted trajectories contribute
/// nothing; more than 1% aborted is an error.
pub fn run_ensemble<A: Accumulator>(
    spec: &EnsembleSpec<'_>,
    prototype: &A,
) -> Result<EnsembleStats<A>> {
    if spec.n_traj == 0 {
        return Err(invalid("n_traj", "need at least one trajectory"));
    }
    if spec.sampler.grid() != spec.engine.grid() {
        return Err(invalid("sampler", "grid does not match the engine grid"));
    }
    spec.schedule.step_indices(spec.engine.dt())?;

    let run_block = |block: usize| -> BlockResult<A> {
        let mut acc = prototype.clone();
        let mut completed = 0;
        let mut aborted = Vec::new();
        let start = block * BLOCK;
        let stop = (start + BLOCK).min(spec.n_traj);
        for traj in start..stop {
            let mut rng = trajectory_stream(spec.base_seed, traj);
            let init = spec.sampler.sample(&mut rng).field;
            let mut snaps: Vec<(usize, ComplexField)> = Vec::new();
            let record = run_trajectory(
                spec.engine,
                init,
                spec.schedule,
                TrajectoryOptions::default(),
                &mut rng,
                |i, f| snaps.push((i, f.clone())),
            );
            match record {
                Ok(r) if r.is_complete() => {
                    for (i, f) in &snaps {
                        acc.observe(&Snapshot {
                            traj_index: traj,
                            time_index: *i,
                            time: f.time,
                            field: f,
                        });
                    }
                    completed += 1;
                }
                Ok(r) => {
                    if let TrajectoryStatus::Aborted { reason, .. } = r.status {
                        aborted.push((traj, reason));
                    }
                }
                Err(e) => aborted.push((traj, e.to_string())),
            }
        }
        BlockResult {
            acc,
            completed,
            aborted,
        }
    };

    let n_blocks = spec.n_traj.div_ceil(BLOCK);
    let mut total = prototype.clone();
    let mut completed = 0;
    let mut aborted = Vec::new();
    let mut absorb = |res: BlockResult<A>| {
        total.merge(&res.acc);
        completed += res.completed;
        aborted.extend(res.aborted);
    };

    let pool = match spec.workers {
        Some(w) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| invalid("workers", e.to_string()))?,
        ),
        None => None,
    };
    let width = pool
        .as_ref()
        .map_or_else(rayon::current_num_threads, |p| p.current_num_threads());
    // bounded waves keep at most a few partial accumulators alive
    let wave = (2 * width).max(1);
    let mut first = 0;
    while first < n_blocks {
        let last = (first + wave).min(n_blocks);
        let results: Vec<BlockResult<A>> = match &pool {
            Some(p) => p.install(|| (first..last).into_par_iter().map(run_block).collect()),
            None => (first..last).into_par_iter().map(run_block).collect(),
        };
        results.into_iter().for_each(&mut absorb);
        first = last;
    }

    let n_aborted = aborted.len();
    if n_aborted * 100 > spec.n_traj {
        return Err(Error::TooManyAborts {
            aborted: n_aborted,
            total: spec.n_traj,
        });
    }
    Ok(EnsembleStats {
        accumulator: total,
        n_completed: completed,
        n_aborted,
        aborted,
    })
}

/// Phase accumulated by a free plane wave of wavenumber `k` over `dt`.
pub fn free_phase(k: f64, dt: f64) -> f64 {
    (0.5 * k * k * dt).rem_euclid(2.0 * PI)
}
