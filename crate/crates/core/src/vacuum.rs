//! Wigner sampling of the Bogoliubov ground state of the homogeneous condensate.
//!
//! A sample is `psi(x) = sqrt(n0) + L^{-1/2} sum_k (u_k a_k e^{ikx} - v_k a_k^* e^{-ikx})`
//! with `u_k, v_k > 0`, complex Gaussian `a_k` with `<a_k^* a_q> = delta_kq / 2`,
//! and the sum running over `0 < |k| <= cutoff_k`. The `k = 0` mode is not
//! sampled when a condensate is present; its global phase diffusion does not
//! affect the local observables.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::lattice::{momentum_grid, ComplexField, GridSpec, Units};

/// Positive-norm Bogoliubov coefficients of the homogeneous background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BogoliubovCoefficients {
    pub u: f64,
    pub v: f64,
    /// Quasiparticle energy.
    pub eps: f64,
}

/// Positive-norm eigenvector of the homogeneous BdG block
/// `[[k^2/2 + gn, gn], [-gn, -(k^2/2 + gn)]]`, normalized to `u^2 - v^2 = 1`.
///
/// `interaction_energy` is `g n` of the background (one for the unperturbed condensate).
/// The matrix eigenvector has a negative second component; `v` is returned as its modulus.
pub fn bogoliubov_uv(k: f64, interaction_energy: f64) -> Result<BogoliubovCoefficients> {
    if k == 0.0 || !k.is_finite() {
        return Err(invalid("k", "the zero mode has no Bogoliubov partner"));
    }
    if !(interaction_energy >= 0.0) {
        return Err(invalid("interaction_energy", "must be non-negative"));
    }
    let diag = 0.5 * k * k + interaction_energy;
    let off = interaction_energy;
    let eps = ((diag - off) * (diag + off)).sqrt();
    // u^2 = (diag/eps + 1)/2, v^2 = (diag/eps - 1)/2 with diag - eps written without cancellation
    let u = (0.5 * (diag / eps + 1.0)).sqrt();
    let v = (0.5 * off * off / ((diag + eps) * eps)).sqrt();
    Ok(BogoliubovCoefficients { u, v, eps })
}

/// Initial condition for one trajectory together with the amplitudes it was built from.
#[derive(Debug, Clone)]
pub struct VacuumSample {
    pub field: ComplexField,
    /// `(k, a_k)` in FFT ordering; modes outside the cutoff carry `a_k = 0`.
    pub mode_amplitudes: Vec<(f64, Complex64)>,
    pub cutoff_k: f64,
}

/// Reusable sampler for one grid, density and cutoff.
#[derive(Clone)]
pub struct VacuumSampler {
    grid: GridSpec,
    units: Units,
    condensate_density: f64,
    cutoff_k: f64,
    fluctuations: bool,
    wavenumbers: Vec<f64>,
    coefficients: Vec<Option<BogoliubovCoefficients>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for VacuumSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VacuumSampler")
            .field("grid", &self.grid)
            .field("units", &self.units)
            .field("condensate_density", &self.condensate_density)
            .field("cutoff_k", &self.cutoff_k)
            .field("fluctuations", &self.fluctuations)
            .finish()
    }
}

impl VacuumSampler {
    /// Sampler for a condensate of density `n0` (`units.n0`), `g n0 = 1`.
    pub fn new(grid: GridSpec, units: Units, cutoff_k: Option<f64>) -> Result<Self> {
        Self::with_density(grid, units, units.n0, cutoff_k)
    }

    /// Sampler for a background density `density` (zero gives the empty lattice vacuum).
    pub fn with_density(
        grid: GridSpec,
        units: Units,
        density: f64,
        cutoff_k: Option<f64>,
    ) -> Result<Self> {
        let cutoff_k = cutoff_k.unwrap_or_else(|| grid.k_max());
        if cutoff_k > grid.k_max() * (1.0 + 1e-12) {
            return Err(invalid(
                "cutoff_k",
                format!(
                    "{cutoff_k} exceeds the lattice Nyquist wavenumber {}",
                    grid.k_max()
                ),
            ));
        }
        if !(density >= 0.0) {
            return Err(invalid("density", "must be non-negative"));
        }
        let gn = units.coupling() * density;
        let wavenumbers = momentum_grid(&grid);
        let coefficients = wavenumbers
            .iter()
            .map(|&k| {
                if k.abs() > cutoff_k * (1.0 + 1e-12) {
                    Ok(None)
                } else if k == 0.0 {
                    // without a condensate the k = 0 mode is an ordinary vacuum mode
                    Ok((density == 0.0).then_some(BogoliubovCoefficients {
                        u: 1.0,
                        v: 0.0,
                        eps: 0.0,
                    }))
                } else {
                    bogoliubov_uv(k, gn).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            units,
            condensate_density: density,
            cutoff_k,
            fluctuations: true,
            wavenumbers,
            coefficients,
            inverse: FftPlanner::new().plan_fft_inverse(grid.n_sites),
        })
    }

    /// Drops the quantum noise: every sample is the bare condensate `sqrt(n0)`.
    pub fn mean_field(mut self) -> Self {
        self.fluctuations = false;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn units(&self) -> &Units {
        &self.units
    }

    pub fn cutoff_k(&self) -> f64 {
        self.cutoff_k
    }

    pub fn has_fluctuations(&self) -> bool {
        self.fluctuations
    }

    /// Exact ensemble value of `<|psi_j|^2>` implied by the sampled mode content.
    pub fn expected_weyl_density(&self) -> f64 {
        if !self.fluctuations {
            return self.condensate_density;
        }
        let modes: f64 = self
            .coefficients
            .iter()
            .flatten()
            .map(|c| 0.5 * (c.u * c.u + c.v * c.v))
            .sum();
        self.condensate_density + modes / self.grid.length()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> VacuumSample {
        let n = self.grid.n_sites;
        let background = Complex64::new(self.condensate_density.sqrt(), 0.0);
        if !self.fluctuations {
            return VacuumSample {
                field: ComplexField::uniform(self.grid, background),
                mode_amplitudes: self
                    .wavenumbers
                    .iter()
                    .map(|&k| (k, Complex64::new(0.0, 0.0)))
                    .collect(),
                cutoff_k: self.cutoff_k,
            };
        }
        // <|a|^2> = 1/2, so each quadrature has variance 1/4
        let amplitudes: Vec<Complex64> = self
            .coefficients
            .iter()
            .map(|c| match c {
                Some(_) => {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(0.5 * re, 0.5 * im)
                }
                None => Complex64::new(0.0, 0.0),
            })
            .collect();

        // Fourier coefficient of e^{ikx}: u_k a_k - v_k conj(a_{-k})
        let scale = self.grid.length().sqrt().recip();
        let mut spectrum: Vec<Complex64> = (0..n)
            .map(|m| {
                let Some(c) = self.coefficients[m] else {
                    return Complex64::new(0.0, 0.0);
                };
                let minus = (n - m) % n;
                let partner = amplitudes[minus].conj();
                // x_j = (j - n/2) dx contributes e^{-i pi m}
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                (amplitudes[m] * c.u - partner * c.v) * (sign * scale)
            })
            .collect();
        self.inverse.process(&mut spectrum);
        let values = spectrum.into_iter().map(|z| z + background).collect();
        VacuumSample {
            field: ComplexField {
                values,
                grid: self.grid,
                time: 0.0,
            },
            mode_amplitudes: self.wavenumbers.iter().copied().zip(amplitudes).collect(),
            cutoff_k: self.cutoff_k,
        }
    }
}

/// One-shot form of [`VacuumSampler::sample`].
pub fn sample_vacuum<R: Rng + ?Sized>(
    grid: &GridSpec,
    units: Units,
    cutoff_k: Option<f64>,
    rng: &mut R,
) -> Result<VacuumSample> {
    Ok(VacuumSampler::new(*grid, units, cutoff_k)?.sample(rng))
}

impl VacuumSample {
    /// Rebuilds the field from `mode_amplitudes` by direct summation (slow; for checks).
    pub fn resum(&self, units: &Units, density: f64) -> Result<Vec<Complex64>> {
        let grid = self.field.grid;
        let gn = units.coupling() * density;
        let scale = grid.length().sqrt().recip();
        let mut out = vec![Complex64::new(density.sqrt(), 0.0); grid.n_sites];
        for &(k, a) in &self.mode_amplitudes {
            if a == Complex64::new(0.0, 0.0) || k == 0.0 {
                continue;
            }
            let c = bogoliubov_uv(k, gn)?;
            for (j, slot) in out.iter_mut().enumerate() {
                let x = grid.position(j);
                *slot += (a * Complex64::from_polar(c.u, k * x)
                    - a.conj() * Complex64::from_polar(c.v, -k * x))
                    * scale;
            }
        }
        Ok(out)
    }
}
