//! Uniform 1-D grid, unit system and elementary field operations.
//!
//! Everything inside the crate works in units where `hbar = m = g n0 = 1`,
//! so the bare speed of sound `c0`, the healing length `xi` and the
//! chemical potential `mu0` are all one. The background line density `n0`
//! (equivalently the dilution `n0 * xi`) stays free and sets the size of the
//! quantum fluctuations relative to the condensate: the contact coupling is
//! `g = 1 / n0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Unit system with `hbar = m = g n0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Units {
    /// Background line density in units of `1/xi` (the dilution `n0 xi`).
    pub n0: f64,
}

impl Units {
    pub const HBAR: f64 = 1.0;
    pub const MASS: f64 = 1.0;
    pub const G_TIMES_N0: f64 = 1.0;

    pub fn new(n0: f64) -> Result<Self> {
        if !(n0.is_finite() && n0 > 0.0) {
            return Err(invalid(
                "n0",
                format!("dilution must be positive, got {n0}"),
            ));
        }
        Ok(Self { n0 })
    }

    /// Contact coupling `g = (g n0) / n0`.
    pub fn coupling(&self) -> f64 {
        Self::G_TIMES_N0 / self.n0
    }

    /// Bare speed of sound `sqrt(g n0 / m)`.
    pub fn c0(&self) -> f64 {
        (Self::G_TIMES_N0 / Self::MASS).sqrt()
    }

    /// Healing length `hbar / (m c0)`.
    pub fn xi(&self) -> f64 {
        Self::HBAR / (Self::MASS * self.c0())
    }

    /// Chemical potential of the homogeneous ground state, `g n0`.
    pub fn mu0(&self) -> f64 {
        Self::G_TIMES_N0
    }

    /// Local sound speed squared `g n / m` for a density `n`.
    pub fn sound_speed_sq(&self, density: f64) -> f64 {
        self.coupling() * density / Self::MASS
    }
}

impl Default for Units {
    fn default() -> Self {
        Self { n0: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    HardWall,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::HardWall => "hard_wall",
        }
    }
}

/// Uniform grid with `x = 0` exactly on site `origin_index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_sites: usize,
    pub dx: f64,
    pub origin_index: usize,
    pub boundary: Boundary,
}

/// Builds a grid whose positions are `x_j = (j - n_sites/2) dx`.
pub fn make_grid(n_sites: usize, dx: f64, boundary: Boundary) -> Result<GridSpec> {
    if n_sites < 8 || !n_sites.is_multiple_of(2) {
        return Err(Error::InvalidSiteCount(n_sites));
    }
    if !(dx.is_finite() && dx > 0.0) {
        return Err(Error::InvalidSpacing(dx));
    }
    Ok(GridSpec {
        n_sites,
        dx,
        origin_index: n_sites / 2,
        boundary,
    })
}

impl GridSpec {
    pub fn position(&self, index: usize) -> f64 {
        (index as f64 - self.origin_index as f64) * self.dx
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_sites).map(|j| self.position(j)).collect()
    }

    /// Box length `L = n_sites * dx`.
    pub fn length(&self) -> f64 {
        self.n_sites as f64 * self.dx
    }

    pub fn half_length(&self) -> f64 {
        0.5 * self.length()
    }

    /// Site index holding position `x`, if `x` lies on the grid to 1e-9 dx.
    pub fn site_of(&self, x: f64) -> Option<usize> {
        let s = x / self.dx + self.origin_index as f64;
        let j = s.round();
        if (s - j).abs() > 1e-9 || j < 0.0 || j >= self.n_sites as f64 {
            None
        } else {
            Some(j as usize)
        }
    }

    /// Nearest site to `x`, clamped to the grid.
    pub fn nearest_site(&self, x: f64) -> usize {
        let s = (x / self.dx + self.origin_index as f64).round();
        s.clamp(0.0, (self.n_sites - 1) as f64) as usize
    }

    /// Lattice Nyquist wavenumber `pi / dx`.
    pub fn k_max(&self) -> f64 {
        PI / self.dx
    }

    /// Checks that a sound cone of speed `c0` started at `x = 0` stays inside the box up to `t_max`.
    pub fn contains_cone(&self, c0: f64, t_max: f64) -> bool {
        self.half_length() > c0 * t_max
    }
}

/// Wavenumbers in FFT ordering: `k_j = 2 pi j / L` for `j < n/2`, then the
/// Nyquist value `-pi/dx`, then the remaining negative wavenumbers.
pub fn momentum_grid(grid: &GridSpec) -> Vec<f64> {
    let n = grid.n_sites as isize;
    let dk = 2.0 * PI / grid.length();
    (0..n)
        .map(|j| {
            if j < n / 2 {
                j as f64 * dk
            } else {
                (j - n) as f64 * dk
            }
        })
        .collect()
}

/// Riemann sum `sum_j f_j dx`.
pub fn spatial_integral(samples: &[f64], grid: &GridSpec) -> Result<f64> {
    if samples.len() != grid.n_sites {
        return Err(Error::LengthMismatch {
            expected: grid.n_sites,
            actual: samples.len(),
        });
    }
    Ok(samples.iter().sum::<f64>() * grid.dx)
}

/// Complex classical field on a grid, the state of one Wigner trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub values: Vec<Complex64>,
    pub grid: GridSpec,
    pub time: f64,
}

impl ComplexField {
    pub fn new(values: Vec<Complex64>, grid: GridSpec, time: f64) -> Result<Self> {
        if values.len() != grid.n_sites {
            return Err(Error::LengthMismatch {
                expected: grid.n_sites,
                actual: values.len(),
            });
        }
        Ok(Self { values, grid, time })
    }

    pub fn uniform(grid: GridSpec, amplitude: Complex64) -> Self {
        Self {
            values: vec![amplitude; grid.n_sites],
            grid,
            time: 0.0,
        }
    }

    pub fn densities(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Weyl norm `N_W = sum |psi_j|^2 dx`.
    pub fn weyl_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx
    }

    /// Gross-Pitaevskii energy `sum_j (|d psi/dx|^2 / 2 + g |psi_j|^4 / 2) dx`,
    /// with the kinetic term evaluated spectrally as the engine does.
    pub fn energy(&self, g: f64) -> f64 {
        let n = self.grid.n_sites;
        let mut spectrum = self.values.clone();
        rustfft::FftPlanner::new()
            .plan_fft_forward(n)
            .process(&mut spectrum);
        let kinetic: f64 = spectrum
            .iter()
            .zip(momentum_grid(&self.grid))
            .map(|(z, k)| 0.5 * k * k * z.norm_sqr())
            .sum::<f64>()
            / n as f64;
        let interaction: f64 = self
            .values
            .iter()
            .map(|z| 0.5 * g * z.norm_sqr().powi(2))
            .sum();
        (kinetic + interaction) * self.grid.dx
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Stable content hash of the field values and time.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.time.to_le_bytes());
        for z in &self.values {
            hasher.update(z.re.to_le_bytes());
            hasher.update(z.im.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    #[test]
    fn grid_spans_expected_range() {
        let g = make_grid(1024, 0.5, Boundary::Periodic).unwrap();
        assert_eq!(g.position(0), -256.0);
        assert_eq!(g.position(1023), 255.5);
        assert_eq!(g.position(g.origin_index), 0.0);
    }

    #[test]
    fn smallest_grid_positions() {
        let g = make_grid(8, 1.0, Boundary::HardWall).unwrap();
        assert_eq!(
            g.positions(),
            vec![-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(
            make_grid(1025, 0.5, Boundary::Periodic),
            Err(Error::InvalidSiteCount(1025))
        );
        assert_eq!(
            make_grid(6, 0.5, Boundary::Periodic),
            Err(Error::InvalidSiteCount(6))
        );
        assert!(matches!(
            make_grid(16, 0.0, Boundary::Periodic),
            Err(Error::InvalidSpacing(_))
        ));
        assert!(matches!(
            make_grid(16, -1.0, Boundary::Periodic),
            Err(Error::InvalidSpacing(_))
        ));
    }

    #[test]
    fn momentum_grid_small() {
        let g = GridSpec {
            n_sites: 4,
            dx: 1.0,
            origin_index: 2,
            boundary: Boundary::Periodic,
        };
        let k = momentum_grid(&g);
        let expected = [0.0, PI / 2.0, -PI, -PI / 2.0];
        for (a, b) in k.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn momentum_grid_nyquist_and_single_zero() {
        let g = make_grid(1024, 0.5, Boundary::Periodic).unwrap();
        let k = momentum_grid(&g);
        let kmax = k.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!((kmax - 2.0 * PI).abs() < 1e-12);
        assert_eq!(k.iter().filter(|&&v| v == 0.0).count(), 1);
    }

    #[test]
    fn plane_waves_sum_to_zero() {
        let g = make_grid(64, 0.5, Boundary::Periodic).unwrap();
        let xs = g.positions();
        for &k in momentum_grid(&g).iter().filter(|&&k| k != 0.0) {
            let s: Complex64 = xs.iter().map(|&x| Complex64::from_polar(1.0, k * x)).sum();
            assert!(s.norm() < 1e-10, "k = {k}: {s}");
        }
    }

    #[test]
    fn integral_of_constant() {
        let g = make_grid(100, 0.5, Boundary::Periodic).unwrap();
        assert_eq!(spatial_integral(&vec![1.0; 100], &g).unwrap(), 50.0);
        assert!(matches!(
            spatial_integral(&[1.0; 3], &g),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn odd_integrand_vanishes() {
        let g = make_grid(200, 0.1, Boundary::Periodic).unwrap();
        // drop the unpaired first site so the sample set is symmetric about 0
        let f: Vec<f64> = g
            .positions()
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                if j == 0 {
                    0.0
                } else {
                    x * (-x * x).exp() + x.powi(3)
                }
            })
            .collect();
        assert!(spatial_integral(&f, &g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn site_lookup() {
        let g = make_grid(16, 0.5, Boundary::Periodic).unwrap();
        assert_eq!(g.site_of(0.0), Some(8));
        assert_eq!(g.site_of(1.5), Some(11));
        assert_eq!(g.site_of(0.25), None);
        assert_eq!(g.site_of(100.0), None);
    }

    #[test]
    fn fft_round_trip_is_identity() {
        let g = make_grid(256, 0.5, Boundary::Periodic).unwrap();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(g.n_sites);
        let inv = planner.plan_fft_inverse(g.n_sites);
        let orig: Vec<Complex64> = (0..g.n_sites)
            .map(|j| Complex64::new((j as f64 * 0.37).sin(), (j as f64 * 1.3).cos()))
            .collect();
        let mut buf = orig.clone();
        fwd.process(&mut buf);
        inv.process(&mut buf);
        let scale = 1.0 / g.n_sites as f64;
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a * scale - b).norm() <= 1e-12 * b.norm().max(1.0));
        }
    }
}
