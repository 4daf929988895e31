//! Ensemble reductions for density, phase, flow, condensate fluctuations and
//! density-density correlations.
//!
//! Wigner averages give symmetrically ordered moments. Single-site densities
//! are corrected by the half quantum `1/(2 dx)` per site; correlation maps use
//! the exact ordering corrections for disjoint site bins and are then
//! referenced to a baseline ensemble drawn with the same seeds at `t = 0`.

use num_complex::Complex64;

use crate::engine::{Accumulator, Snapshot};
use crate::error::{Error, Result};
use crate::lattice::{ComplexField, GridSpec};

/// Sites whose summed field fixes the global phase of each trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReference {
    pub sites: Vec<usize>,
}

impl PhaseReference {
    /// Sites with `|x| >= (1 - fraction) L/2`, i.e. the outer edge of the box.
    pub fn outer(grid: &GridSpec, fraction: f64) -> Self {
        let cut = (1.0 - fraction) * grid.half_length();
        let sites = (0..grid.n_sites)
            .filter(|&j| grid.position(j).abs() >= cut)
            .collect();
        Self { sites }
    }

    pub fn angle(&self, field: &ComplexField) -> f64 {
        self.sites
            .iter()
            .map(|&j| field.values[j])
            .sum::<Complex64>()
            .arg()
    }
}

/// First and second moments of `|psi|^2` and the phase-referenced field per site.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMoments {
    pub grid: GridSpec,
    pub n_times: usize,
    pub reference: PhaseReference,
    pub count: Vec<u64>,
    /// Symmetric-ordering offset per site, `1/(2 dx)`; zero for classical fields.
    pub half_quantum: f64,
    sum_n: Vec<f64>,
    sum_n2: Vec<f64>,
    sum_psi: Vec<Complex64>,
}

impl FieldMoments {
    pub fn new(grid: GridSpec, n_times: usize) -> Self {
        Self::with_reference(grid, n_times, PhaseReference::outer(&grid, 0.05))
    }

    pub fn with_reference(grid: GridSpec, n_times: usize, reference: PhaseReference) -> Self {
        let len = n_times * grid.n_sites;
        Self {
            grid,
            n_times,
            reference,
            count: vec![0; n_times],
            half_quantum: 0.5 / grid.dx,
            sum_n: vec![0.0; len],
            sum_n2: vec![0.0; len],
            sum_psi: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Moments of noise-free fields: no ordering offset, and a single
    /// trajectory is a complete ensemble.
    pub fn classical(mut self) -> Self {
        self.half_quantum = 0.0;
        self
    }

    fn slice(&self, t: usize) -> std::ops::Range<usize> {
        t * self.grid.n_sites..(t + 1) * self.grid.n_sites
    }

    /// Raw Wigner average `<|psi_j|^2>` at output `t`.
    pub fn weyl_density(&self, t: usize) -> Vec<f64> {
        let c = self.count[t] as f64;
        self.sum_n[self.slice(t)].iter().map(|s| s / c).collect()
    }

    /// `|<psi_j e^{-i theta_ref}>|^2`, the phase-coherent part of the density.
    pub fn coherent_density(&self, t: usize) -> Vec<f64> {
        let c = self.count[t] as f64;
        self.sum_psi[self.slice(t)]
            .iter()
            .map(|s| (s / c).norm_sqr())
            .collect()
    }
}

impl Accumulator for FieldMoments {
    fn observe(&mut self, s: &Snapshot<'_>) {
        if s.time_index >= self.n_times {
            return;
        }
        let r = self.slice(s.time_index);
        let rot = Complex64::from_polar(1.0, -self.reference.angle(s.field));
        for (j, z) in s.field.values.iter().enumerate() {
            let n = z.norm_sqr();
            let k = r.start + j;
            self.sum_n[k] += n;
            self.sum_n2[k] += n * n;
            self.sum_psi[k] += z * rot;
        }
        self.count[s.time_index] += 1;
    }

    fn merge(&mut self, o: &Self) {
        for (a, b) in self.count.iter_mut().zip(&o.count) {
            *a += b;
        }
        for (a, b) in self.sum_n.iter_mut().zip(&o.sum_n) {
            *a += b;
        }
        for (a, b) in self.sum_n2.iter_mut().zip(&o.sum_n2) {
            *a += b;
        }
        for (a, b) in self.sum_psi.iter_mut().zip(&o.sum_psi) {
            *a += b;
        }
    }
}

/// Mean and standard error per site.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Condensate density `<|psi_j|^2> - 1/(2 dx)` with standard errors.
pub fn density_profile(moments: &FieldMoments, t: usize) -> Result<Profile> {
    let c = moments.count[t];
    let needed = if moments.half_quantum == 0.0 { 1 } else { 2 };
    if c < needed {
        return Err(Error::InsufficientStatistics(format!(
            "density needs at least {needed} trajectories, have {c}"
        )));
    }
    let cf = c as f64;
    let half_quantum = moments.half_quantum;
    let r = moments.slice(t);
    let (mean, stderr) = moments.sum_n[r.clone()]
        .iter()
        .zip(&moments.sum_n2[r])
        .map(|(s, s2)| {
            let m = s / cf;
            let var = if c > 1 {
                ((s2 / cf - m * m) * cf / (cf - 1.0)).max(0.0)
            } else {
                0.0
            };
            (m - half_quantum, (var / cf).sqrt())
        })
        .unzip();
    Ok(Profile { mean, stderr })
}

/// Unwraps the phase of one field from both box edges toward the origin.
///
/// The phase is measured relative to `theta_ref`; sites with density below
/// `threshold` are flagged unreliable (their phase step is still accumulated).
pub fn unwrap_phase(field: &ComplexField, theta_ref: f64, threshold: f64) -> (Vec<f64>, Vec<bool>) {
    let n = field.values.len();
    let origin = field.grid.origin_index;
    let rot = Complex64::from_polar(1.0, -theta_ref);
    let mut phase = vec![0.0; n];
    let unreliable: Vec<bool> = field
        .values
        .iter()
        .map(|z| z.norm_sqr() < threshold)
        .collect();
    let wrap =
        |d: f64| d - (2.0 * std::f64::consts::PI) * (d / (2.0 * std::f64::consts::PI)).round();

    phase[0] = (field.values[0] * rot).arg();
    for j in 1..=origin {
        let step = (field.values[j] * field.values[j - 1].conj()).arg();
        phase[j] = phase[j - 1] + wrap(step);
    }
    phase[n - 1] = (field.values[n - 1] * rot).arg();
    for j in (origin + 1..n - 1).rev() {
        let step = (field.values[j] * field.values[j + 1].conj()).arg();
        phase[j] = phase[j + 1] + wrap(step);
    }
    (phase, unreliable)
}

/// Per-trajectory unwrapped phase moments.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMoments {
    pub grid: GridSpec,
    pub n_times: usize,
    pub reference: PhaseReference,
    /// Density below which a site's phase is flagged (default `1e-3 n0`).
    pub threshold: f64,
    pub count: Vec<u64>,
    sum: Vec<f64>,
    sum2: Vec<f64>,
    unreliable: Vec<u64>,
}

impl PhaseMoments {
    pub fn new(grid: GridSpec, n_times: usize, n0: f64) -> Self {
        let len = n_times * grid.n_sites;
        Self {
            grid,
            n_times,
            reference: PhaseReference::outer(&grid, 0.05),
            threshold: 1e-3 * n0,
            count: vec![0; n_times],
            sum: vec![0.0; len],
            sum2: vec![0.0; len],
            unreliable: vec![0; len],
        }
    }
}

impl Accumulator for PhaseMoments {
    fn observe(&mut self, s: &Snapshot<'_>) {
        if s.time_index >= self.n_times {
            return;
        }
        let (phase, bad) = unwrap_phase(s.field, self.reference.angle(s.field), self.threshold);
        let off = s.time_index * self.grid.n_sites;
        for j in 0..self.grid.n_sites {
            self.sum[off + j] += phase[j];
            self.sum2[off + j] += phase[j] * phase[j];
            self.unreliable[off + j] += bad[j] as u64;
        }
        self.count[s.time_index] += 1;
    }

    fn merge(&mut self, o: &Self) {
        for (a, b) in self.count.iter_mut().zip(&o.count) {
            *a += b;
        }
        for (a, b) in self.sum.iter_mut().zip(&o.sum) {
            *a += b;
        }
        for (a, b) in self.sum2.iter_mut().zip(&o.sum2) {
            *a += b;
        }
        for (a, b) in self.unreliable.iter_mut().zip(&o.unreliable) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    /// Ensemble phase with the outer-edge site (index 0) fixed to zero.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Fraction of trajectories in which each site was below the density threshold.
    pub unreliable_fraction: Vec<f64>,
}

pub fn phase_profile(moments: &PhaseMoments, t: usize) -> Result<PhaseProfile> {
    let c = moments.count[t];
    if c == 0 {
        return Err(Error::InsufficientStatistics(
            "no trajectories observed".into(),
        ));
    }
    let cf = c as f64;
    let off = t * moments.grid.n_sites;
    let r = off..off + moments.grid.n_sites;
    let edge = moments.sum[off] / cf;
    let mut mean = Vec::with_capacity(moments.grid.n_sites);
    let mut stderr = Vec::with_capacity(moments.grid.n_sites);
    for (s, s2) in moments.sum[r.clone()].iter().zip(&moments.sum2[r.clone()]) {
        let m = s / cf;
        let var = if c > 1 {
            ((s2 / cf - m * m) * cf / (cf - 1.0)).max(0.0)
        } else {
            0.0
        };
        mean.push(m - edge);
        stderr.push((var / cf).sqrt());
    }
    let unreliable_fraction = moments.unreliable[r]
        .iter()
        .map(|&u| u as f64 / cf)
        .collect();
    Ok(PhaseProfile {
        mean,
        stderr,
        unreliable_fraction,
    })
}

/// Centered-difference gradient `dS/dx` (one-sided at the ends).
pub fn flow_velocity(phase: &[f64], grid: &GridSpec) -> Vec<f64> {
    let n = phase.len();
    let dx = grid.dx;
    (0..n)
        .map(|j| match j {
            0 => (phase[1] - phase[0]) / dx,
            j if j == n - 1 => (phase[n - 1] - phase[n - 2]) / dx,
            j => (phase[j + 1] - phase[j - 1]) / (2.0 * dx),
        })
        .collect()
}

/// Density, phase and flow velocity at every output time.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSeries {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub density: Vec<Vec<f64>>,
    pub density_stderr: Vec<Vec<f64>>,
    pub phase: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
}

impl ProfileSeries {
    pub fn from_moments(
        fields: &FieldMoments,
        phases: &PhaseMoments,
        times: &[f64],
    ) -> Result<Self> {
        if fields.n_times != times.len() || phases.n_times != times.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                actual: fields.n_times,
            });
        }
        let mut out = ProfileSeries {
            grid: fields.grid,
            times: times.to_vec(),
            density: Vec::new(),
            density_stderr: Vec::new(),
            phase: Vec::new(),
            velocity: Vec::new(),
        };
        for t in 0..times.len() {
            let d = density_profile(fields, t)?;
            let p = phase_profile(phases, t)?;
            out.velocity.push(flow_velocity(&p.mean, &fields.grid));
            out.phase.push(p.mean);
            out.density.push(d.mean);
            out.density_stderr.push(d.stderr);
        }
        Ok(out)
    }
}

/// Growth of the incoherent density relative to the initial ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationWedge {
    pub positions: Vec<f64>,
    pub n_out: Vec<f64>,
    /// `<|psi|^2> - |<psi>|^2` of the baseline ensemble.
    pub reference: Vec<f64>,
}

/// `n_out = (<|psi|^2> - |<psi e^{-i theta_ref}>|^2)(t) - (same)(baseline)`.
pub fn fluctuation_wedge(
    moments: &FieldMoments,
    t: usize,
    baseline: &FieldMoments,
    t_base: usize,
) -> Result<FluctuationWedge> {
    if moments.grid != baseline.grid {
        return Err(Error::BaselineMismatch("grids differ".into()));
    }
    if moments.count[t] != baseline.count[t_base] {
        return Err(Error::BaselineMismatch(format!(
            "trajectory counts differ: {} vs {}",
            moments.count[t], baseline.count[t_base]
        )));
    }
    if moments.count[t] < 2 {
        return Err(Error::InsufficientStatistics(
            "need at least 2 trajectories".into(),
        ));
    }
    let incoherent = |m: &FieldMoments, i: usize| -> Vec<f64> {
        m.weyl_density(i)
            .iter()
            .zip(m.coherent_density(i))
            .map(|(a, b)| a - b)
            .collect()
    };
    let reference = incoherent(baseline, t_base);
    let n_out = incoherent(moments, t)
        .iter()
        .zip(&reference)
        .map(|(a, b)| a - b)
        .collect();
    Ok(FluctuationWedge {
        positions: moments.grid.positions(),
        n_out,
        reference,
    })
}

/// Parity-symmetric bin layout for correlation maps: bin `b` in `-half..=half`
/// is centered on site `origin + b * bin_sites` (`bin_sites` odd).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinLayout {
    pub half_bins: usize,
    pub bin_sites: usize,
}

impl BinLayout {
    pub fn n_bins(&self) -> usize {
        2 * self.half_bins + 1
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.bin_sites.is_multiple_of(2) {
            return Err(crate::error::invalid("bin_sites", "must be odd"));
        }
        let reach = self.half_bins * self.bin_sites + self.bin_sites / 2;
        if reach >= grid.origin_index {
            return Err(crate::error::invalid(
                "half_bins",
                "window exceeds the grid",
            ));
        }
        Ok(())
    }

    pub fn first_site(&self, grid: &GridSpec, bin: usize) -> usize {
        grid.origin_index + bin * self.bin_sites
            - self.half_bins * self.bin_sites
            - self.bin_sites / 2
    }

    pub fn centers(&self, grid: &GridSpec) -> Vec<f64> {
        (0..self.n_bins())
            .map(|b| grid.position(self.first_site(grid, b) + self.bin_sites / 2))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CorrelationSums {
    count: u64,
    sum: Vec<f64>,
    sum_pair: Vec<f64>,
}

/// Atom-number moments of site bins at one output time, split into batches
/// (trajectory index modulo `n_batches`) for error estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCorrelation {
    pub grid: GridSpec,
    pub layout: BinLayout,
    pub time_index: usize,
    batches: Vec<CorrelationSums>,
}

impl DensityCorrelation {
    pub fn new(
        grid: GridSpec,
        layout: BinLayout,
        time_index: usize,
        n_batches: usize,
    ) -> Result<Self> {
        layout.validate(&grid)?;
        let nb = layout.n_bins();
        let empty = CorrelationSums {
            count: 0,
            sum: vec![0.0; nb],
            sum_pair: vec![0.0; nb * nb],
        };
        Ok(Self {
            grid,
            layout,
            time_index,
            batches: vec![empty; n_batches.max(1)],
        })
    }

    /// Same layout observing a different output time (e.g. the baseline at index 0).
    pub fn at_time(&self, time_index: usize) -> Self {
        let mut c =
            Self::new(self.grid, self.layout, time_index, self.batches.len()).expect("validated");
        c.time_index = time_index;
        c
    }

    pub fn count(&self) -> u64 {
        self.batches.iter().map(|b| b.count).sum()
    }

    fn totals(&self) -> CorrelationSums {
        let mut t = self.batches[0].clone();
        for b in &self.batches[1..] {
            t.count += b.count;
            t.sum.iter_mut().zip(&b.sum).for_each(|(a, x)| *a += x);
            t.sum_pair
                .iter_mut()
                .zip(&b.sum_pair)
                .for_each(|(a, x)| *a += x);
        }
        t
    }

    /// `<:dN_a dN_b:> / (<N_a> <N_b>)` from a set of sums, with operator
    /// averages recovered from the symmetric-ordered ones.
    fn connected(&self, s: &CorrelationSums) -> Vec<f64> {
        let nb = self.layout.n_bins();
        let c = s.count as f64;
        let modes = self.layout.bin_sites as f64;
        let mean: Vec<f64> = s.sum.iter().map(|x| x / c).collect();
        let mut g = vec![0.0; nb * nb];
        for a in 0..nb {
            for b in a..nb {
                let mut v = s.sum_pair[a * nb + b] / c - mean[a] * mean[b];
                if a == b {
                    // Var_W(N) - M/4 - <N_hat>,  <N_hat> = <N_W> - M/2
                    v += modes / 4.0 - mean[a];
                }
                v /= (mean[a] - modes / 2.0) * (mean[b] - modes / 2.0);
                g[a * nb + b] = v;
                g[b * nb + a] = v;
            }
        }
        g
    }
}

impl Accumulator for DensityCorrelation {
    fn observe(&mut self, s: &Snapshot<'_>) {
        if s.time_index != self.time_index {
            return;
        }
        let nb = self.layout.n_bins();
        let dx = self.grid.dx;
        let numbers: Vec<f64> = (0..nb)
            .map(|b| {
                let first = self.layout.first_site(&self.grid, b);
                s.field.values[first..first + self.layout.bin_sites]
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum::<f64>()
                    * dx
            })
            .collect();
        let n_batches = self.batches.len();
        let batch = &mut self.batches[s.traj_index % n_batches];
        batch.count += 1;
        for a in 0..nb {
            batch.sum[a] += numbers[a];
            let row = &mut batch.sum_pair[a * nb..(a + 1) * nb];
            let na = numbers[a];
            for b in a..nb {
                row[b] += na * numbers[b];
            }
        }
    }

    fn merge(&mut self, o: &Self) {
        for (a, b) in self.batches.iter_mut().zip(&o.batches) {
            a.count += b.count;
            a.sum.iter_mut().zip(&b.sum).for_each(|(x, y)| *x += y);
            a.sum_pair
                .iter_mut()
                .zip(&b.sum_pair)
                .for_each(|(x, y)| *x += y);
        }
    }
}

/// Baseline-subtracted, normalized, symmetric `g2(x, x')` map.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    pub positions: Vec<f64>,
    /// Row-major `n x n`.
    pub g2: Vec<f64>,
    pub reference_subtracted: bool,
    /// `|mean_a g2(a, a)|` of the baseline.
    pub normalization: f64,
    pub n_traj: u64,
    batch_maps: Vec<Vec<f64>>,
    /// Typical batch-scatter error of one entry.
    pub shot_noise_estimate: f64,
    /// RMS of the off-diagonal map.
    pub signal_estimate: f64,
    pub warning: Option<String>,
}

/// Mean of a set of map entries with its batch standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStatistic {
    pub mean: f64,
    pub stderr: f64,
    pub n_points: usize,
}

impl BandStatistic {
    /// `|mean| / stderr`.
    pub fn significance(&self) -> f64 {
        self.mean.abs() / self.stderr
    }
}

pub fn g2_map(corr: &DensityCorrelation, baseline: &DensityCorrelation) -> Result<CorrelationMap> {
    if corr.grid != baseline.grid || corr.layout != baseline.layout {
        return Err(Error::BaselineMismatch("layouts differ".into()));
    }
    if corr.batches.len() != baseline.batches.len()
        || corr
            .batches
            .iter()
            .zip(&baseline.batches)
            .any(|(a, b)| a.count != b.count)
    {
        return Err(Error::BaselineMismatch("batch counts differ".into()));
    }
    let n_traj = corr.count();
    if n_traj < 2 {
        return Err(Error::InsufficientStatistics(
            "need at least 2 trajectories".into(),
        ));
    }
    let nb = corr.layout.n_bins();
    let base_total = baseline.connected(&baseline.totals());
    let normalization = ((0..nb).map(|a| base_total[a * nb + a]).sum::<f64>() / nb as f64).abs();
    let diff = |t: &[f64], b: &[f64]| -> Vec<f64> {
        t.iter()
            .zip(b)
            .map(|(x, y)| (x - y) / normalization)
            .collect()
    };
    let g2 = diff(&corr.connected(&corr.totals()), &base_total);
    let batch_maps: Vec<Vec<f64>> = corr
        .batches
        .iter()
        .zip(&baseline.batches)
        .filter(|(a, _)| a.count >= 2)
        .map(|(a, b)| diff(&corr.connected(a), &baseline.connected(b)))
        .collect();

    let mut map = CorrelationMap {
        positions: corr.layout.centers(&corr.grid),
        g2,
        reference_subtracted: true,
        normalization,
        n_traj,
        batch_maps,
        shot_noise_estimate: 0.0,
        signal_estimate: 0.0,
        warning: None,
    };
    let off_diag: Vec<usize> = (0..nb * nb).filter(|k| k / nb != k % nb).collect();
    map.signal_estimate =
        (off_diag.iter().map(|&k| map.g2[k].powi(2)).sum::<f64>() / off_diag.len() as f64).sqrt();
    if map.batch_maps.len() >= 2 {
        let mut errs: Vec<f64> = off_diag.iter().map(|&k| map.entry_stderr(k)).collect();
        errs.sort_by(f64::total_cmp);
        map.shot_noise_estimate = errs[errs.len() / 2];
        if map.shot_noise_estimate > map.signal_estimate {
            map.warning = Some(format!(
                "insufficient statistics: shot noise {:.3e} exceeds signal {:.3e}",
                map.shot_noise_estimate, map.signal_estimate
            ));
        }
    }
    Ok(map)
}

impl CorrelationMap {
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.g2[a * self.n() + b]
    }

    fn entry_stderr(&self, k: usize) -> f64 {
        let nbat = self.batch_maps.len() as f64;
        let m = self.batch_maps.iter().map(|b| b[k]).sum::<f64>() / nbat;
        let var = self
            .batch_maps
            .iter()
            .map(|b| (b[k] - m).powi(2))
            .sum::<f64>()
            / (nbat - 1.0);
        (var / nbat).sqrt()
    }

    /// Average over entries whose bin positions satisfy `mask`, with a batch-means error.
    pub fn band(&self, mask: impl Fn(f64, f64) -> bool) -> BandStatistic {
        let n = self.n();
        let idx: Vec<usize> = (0..n * n)
            .filter(|&k| mask(self.positions[k / n], self.positions[k % n]))
            .collect();
        if idx.is_empty() {
            return BandStatistic {
                mean: f64::NAN,
                stderr: f64::NAN,
                n_points: 0,
            };
        }
        let avg = |m: &[f64]| idx.iter().map(|&k| m[k]).sum::<f64>() / idx.len() as f64;
        let mean = avg(&self.g2);
        let per_batch: Vec<f64> = self.batch_maps.iter().map(|b| avg(b)).collect();
        let nbat = per_batch.len() as f64;
        let stderr = if per_batch.len() >= 2 {
            let m = per_batch.iter().sum::<f64>() / nbat;
            (per_batch.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nbat - 1.0) / nbat).sqrt()
        } else {
            f64::NAN
        };
        BandStatistic {
            mean,
            stderr,
            n_points: idx.len(),
        }
    }

    /// Largest `|g2(x,x') - g2(-x,-x')|` in units of its batch error.
    pub fn parity_deviation(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let (ra, rb) = (n - 1 - a, n - 1 - b);
                let d = self.get(a, b) - self.get(ra, rb);
                let e = (self.entry_stderr(a * n + b).powi(2)
                    + self.entry_stderr(ra * n + rb).powi(2))
                .sqrt();
                if e > 0.0 {
                    worst = worst.max(d.abs() / e);
                }
            }
        }
        worst
    }
}

/// Density and flow speed towards a drain, averaged over `r_min <= |x - x_d| <= r_max`
/// on both sides.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DrainFlow {
    pub density: f64,
    /// Mean of `v(x)` on the left and `-v(x)` on the right.
    pub speed: f64,
    /// Half the left-right difference of the speed.
    pub asymmetry: f64,
}

pub fn drain_flow(
    density: &[f64],
    velocity: &[f64],
    grid: &GridSpec,
    drain_x: f64,
    r_min: f64,
    r_max: f64,
) -> Result<DrainFlow> {
    if density.len() != grid.n_sites || velocity.len() != grid.n_sites {
        return Err(Error::LengthMismatch {
            expected: grid.n_sites,
            actual: density.len().min(velocity.len()),
        });
    }
    if !(0.0 <= r_min && r_min < r_max) {
        return Err(crate::error::invalid("window", "need 0 <= r_min < r_max"));
    }
    let (mut n, mut vl, mut vr) = ((0.0, 0usize), (0.0, 0usize), (0.0, 0usize));
    for j in 0..grid.n_sites {
        let d = grid.position(j) - drain_x;
        if d.abs() < r_min || d.abs() > r_max {
            continue;
        }
        n.0 += density[j];
        n.1 += 1;
        if d < 0.0 {
            vl.0 += velocity[j];
            vl.1 += 1;
        } else {
            vr.0 -= velocity[j];
            vr.1 += 1;
        }
    }
    if vl.1 == 0 || vr.1 == 0 {
        return Err(Error::InsufficientStatistics(
            "window holds no sites on one side".into(),
        ));
    }
    let (left, right) = (vl.0 / vl.1 as f64, vr.0 / vr.1 as f64);
    Ok(DrainFlow {
        density: n.0 / n.1 as f64,
        speed: 0.5 * (left + right),
        asymmetry: 0.5 * (left - right),
    })
}

/// A local density minimum that is deeper than a set fraction of its surroundings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DensityDip {
    pub position: f64,
    pub density: f64,
    /// Largest density within the comparison window around the minimum.
    pub background: f64,
}

impl DensityDip {
    pub fn depth(&self) -> f64 {
        1.0 - self.density / self.background
    }
}

/// Local minima inside `[x_lo, x_hi]` whose depth relative to the highest density
/// within `window` of them exceeds `min_depth`.
pub fn density_dips(
    density: &[f64],
    grid: &GridSpec,
    x_lo: f64,
    x_hi: f64,
    window: f64,
    min_depth: f64,
) -> Vec<DensityDip> {
    let n = density.len().min(grid.n_sites);
    let reach = (window / grid.dx).ceil() as usize;
    let mut dips: Vec<DensityDip> = Vec::new();
    for j in 1..n.saturating_sub(1) {
        let x = grid.position(j);
        if x < x_lo || x > x_hi {
            continue;
        }
        if !(density[j] < density[j - 1] && density[j] <= density[j + 1]) {
            continue;
        }
        let lo = j.saturating_sub(reach);
        let hi = (j + reach).min(n - 1);
        let background = density[lo..=hi].iter().cloned().fold(f64::MIN, f64::max);
        let dip = DensityDip {
            position: x,
            density: density[j],
            background,
        };
        if background > 0.0 && dip.depth() > min_depth {
            // a shallow ripple next to a deeper dip is the same soliton
            match dips.last_mut() {
                Some(prev) if x - prev.position < window => {
                    if dip.density < prev.density {
                        *prev = dip;
                    }
                }
                _ => dips.push(dip),
            }
        }
    }
    dips
}
