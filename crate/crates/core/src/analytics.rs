//! Closed-form stationary states of the lossy condensate, the critical loss
//! rate and its scaling profile, the acoustic metric, and thermal-emission
//! predictions.
//!
//! All functions use `hbar = m = 1`; the contact coupling comes from [`Units`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::Units;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

/// Stationary solution `psi(x) e^{-i mu t}` around a single drain at `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryProfile {
    pub regime: Regime,
    pub gamma: f64,
    /// Asymptotic density far from the drain.
    pub density: f64,
    pub coupling: f64,
    /// Magnitude of the asymptotic flow velocity (towards the drain).
    pub velocity: f64,
    pub mu: f64,
    /// `sqrt(1 - v^2/c^2)`; supercritical only.
    pub alpha: Option<f64>,
}

/// Flat density, phase `-gamma |x|`.
pub fn subcritical_state(gamma: f64, density: f64, units: &Units) -> Result<StationaryProfile> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(invalid("density", "must be positive"));
    }
    let g = units.coupling();
    let c = (g * density).sqrt();
    let gc = critical_gamma(c);
    if !(gamma >= 0.0 && gamma < gc) {
        return Err(invalid(
            "gamma",
            format!("subcritical branch needs 0 <= gamma < {gc} for this density, got {gamma}"),
        ));
    }
    Ok(StationaryProfile {
        regime: Regime::Subcritical,
        gamma,
        density,
        coupling: g,
        velocity: gamma,
        mu: 0.5 * gamma * gamma + g * density,
        alpha: None,
    })
}

/// Pair of counter-propagating grey solitons matched at the drain.
///
/// `psi = sqrt(n) (i v/c + alpha tanh(alpha c |x|)) e^{-i v |x|}` with `v = c^2/gamma`.
pub fn supercritical_state(gamma: f64, density: f64, units: &Units) -> Result<StationaryProfile> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(invalid("density", "must be positive"));
    }
    let g = units.coupling();
    let c2 = g * density;
    let v = c2 / gamma;
    if !(gamma.is_finite() && gamma > 0.0) || v * v >= c2 {
        return Err(invalid(
            "gamma",
            format!("flow v = c^2/gamma = {v} must stay below c = {}", c2.sqrt()),
        ));
    }
    let alpha = (1.0 - v * v / c2).sqrt();
    Ok(StationaryProfile {
        regime: Regime::Supercritical,
        gamma,
        density,
        coupling: g,
        velocity: v,
        mu: c2 * alpha * alpha + 1.5 * v * v,
        alpha: Some(alpha),
    })
}

impl StationaryProfile {
    pub fn sound_speed(&self) -> f64 {
        (self.coupling * self.density).sqrt()
    }

    /// Stationary field at `t = 0`.
    pub fn field(&self, x: f64) -> Complex64 {
        let amp = self.density.sqrt();
        let flow = Complex64::from_polar(1.0, -self.velocity * x.abs());
        match self.alpha {
            None => amp * flow,
            Some(a) => {
                let c = self.sound_speed();
                amp * Complex64::new(a * (a * c * x.abs()).tanh(), self.velocity / c) * flow
            }
        }
    }

    pub fn density_at(&self, x: f64) -> f64 {
        self.field(x).norm_sqr()
    }

    /// Continuous phase `S(x)` with `S(+-inf) ~ -v|x|`.
    pub fn phase_at(&self, x: f64) -> f64 {
        let base = -self.velocity * x.abs();
        match self.alpha {
            None => base,
            Some(a) => {
                let c = self.sound_speed();
                base + (self.velocity / c).atan2(a * (a * c * x.abs()).tanh())
            }
        }
    }

    /// `dS/dx = j / n` with current `j = -n_inf v sign(x)`.
    pub fn velocity_at(&self, x: f64) -> f64 {
        let j = self.density * self.velocity;
        -x.signum() * j / self.density_at(x)
    }

    /// Local sound speed `sqrt(g n(x))`.
    pub fn sound_speed_at(&self, x: f64) -> f64 {
        (self.coupling * self.density_at(x)).sqrt()
    }

    /// Speed of the flow entering the drain, `lim_{x -> 0} |v(x)|`.
    pub fn drain_velocity(&self) -> f64 {
        (self.velocity_at(1e-300)).abs()
    }

    /// `|mu psi - (-psi''/2 + g|psi|^2 psi)|` at `x != 0` using a fourth-order stencil of width `h`.
    pub fn gpe_residual(&self, x: f64, h: f64) -> f64 {
        let f = |y: f64| self.field(y);
        let d2 = (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h)
            - f(x - 2.0 * h))
            / (12.0 * h * h);
        let psi = f(x);
        (self.mu * psi - (-0.5 * d2 + self.coupling * psi.norm_sqr() * psi)).norm()
    }

    /// `|[psi'] + 2 i gamma psi(0)|` from fourth-order one-sided derivatives.
    pub fn jump_residual(&self, h: f64) -> f64 {
        let f = |y: f64| self.field(y);
        let one_sided = |s: f64| {
            (-25.0 * f(0.0) + 48.0 * f(s * h) - 36.0 * f(2.0 * s * h) + 16.0 * f(3.0 * s * h)
                - 3.0 * f(4.0 * s * h))
                / (12.0 * s * h)
        };
        let jump = one_sided(1.0) - one_sided(-1.0);
        (jump + Complex64::new(0.0, 2.0 * self.gamma) * f(0.0)).norm()
    }
}

/// Critical loss rate and the exponents reported for the transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub gamma_c: f64,
    pub nu: f64,
    pub z: f64,
}

impl CriticalPoint {
    pub const NU: f64 = 0.5;
    pub const Z: f64 = 1.0;

    pub fn for_sound_speed(c0: f64) -> Self {
        Self {
            gamma_c: critical_gamma(c0),
            nu: Self::NU,
            z: Self::Z,
        }
    }

    pub fn classify(&self, gamma: f64) -> Regime {
        let tol = 1e-12 * self.gamma_c;
        if (gamma - self.gamma_c).abs() <= tol {
            Regime::Critical
        } else if gamma < self.gamma_c {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }
}

/// `2 c0 / 3`.
pub fn critical_gamma(c0: f64) -> f64 {
    2.0 * c0 / 3.0
}

/// Self-similar Thomas-Fermi solution at the critical loss rate, valid for `|x| <= c0 t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalProfile {
    pub t: f64,
    pub n0: f64,
    pub c0: f64,
}

pub fn critical_profile(t: f64, n0: f64, c0: f64) -> Result<CriticalProfile> {
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    if !(n0 > 0.0 && c0 > 0.0) {
        return Err(invalid("n0", "density and sound speed must be positive"));
    }
    Ok(CriticalProfile { t, n0, c0 })
}

impl CriticalProfile {
    /// Scaled coordinate `|x| / (c0 t)`, saturated at 1 outside the cone.
    pub fn scaled(&self, x: f64) -> f64 {
        (x.abs() / (self.c0 * self.t)).min(1.0)
    }

    /// `(4 n0 / 9) (|x|/(2 c0 t) + 1)^2`; `n0` outside the cone.
    pub fn density(&self, x: f64) -> f64 {
        let s = self.scaled(x);
        4.0 * self.n0 / 9.0 * (0.5 * s + 1.0).powi(2)
    }

    /// `(c0^2 t / 3)(|x|/(c0 t) - 1)^2 - c0^2 t`; `-c0^2 t` outside the cone.
    pub fn phase(&self, x: f64) -> f64 {
        let s = self.scaled(x);
        let e = self.c0 * self.c0 * self.t;
        e / 3.0 * (s - 1.0).powi(2) - e
    }

    pub fn velocity(&self, x: f64) -> f64 {
        let s = self.scaled(x);
        2.0 * self.c0 / 3.0 * (s - 1.0) * x.signum()
    }

    /// Relative L2 distance of measured profiles from this solution over
    /// `|x| < fraction * c0 t`. `phase` must be referenced to a point outside
    /// the cone, where the solution's phase is `-c0^2 t`.
    pub fn deviation(
        &self,
        positions: &[f64],
        density: &[f64],
        phase: &[f64],
        fraction: f64,
    ) -> Result<CollapseDeviation> {
        if density.len() != positions.len() || phase.len() != positions.len() {
            return Err(Error::LengthMismatch {
                expected: positions.len(),
                actual: density.len().min(phase.len()),
            });
        }
        let outside = self.phase(f64::INFINITY);
        let (mut dn, mut nn, mut ds, mut ns) = (0.0, 0.0, 0.0, 0.0);
        let mut n_points = 0;
        for ((&x, &n), &p) in positions.iter().zip(density).zip(phase) {
            if x.abs() >= fraction * self.c0 * self.t {
                continue;
            }
            let a = self.density(x);
            let b = self.phase(x) - outside;
            dn += (n - a).powi(2);
            nn += a * a;
            ds += (p - b).powi(2);
            ns += b * b;
            n_points += 1;
        }
        if n_points == 0 {
            return Err(invalid("fraction", "no points inside the window"));
        }
        Ok(CollapseDeviation {
            density: (dn / nn).sqrt(),
            phase: (ds / ns).sqrt(),
            n_points,
        })
    }
}

/// Relative L2 deviations from the critical scaling solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseDeviation {
    pub density: f64,
    pub phase: f64,
    pub n_points: usize,
}

/// Inverse acoustic metric `g^{mu nu} = [[1, v], [v, v^2 - c^2]]` sampled on a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticMetric {
    pub positions: Vec<f64>,
    pub components: Vec<[[f64; 2]; 2]>,
    /// `det g^{mu nu} = -c^2`.
    pub determinant: Vec<f64>,
    pub horizon_positions: Vec<f64>,
}

pub fn acoustic_metric(profile: &StationaryProfile, positions: &[f64]) -> AcousticMetric {
    let excess = |x: f64| {
        let v = profile.velocity_at(x);
        let c = profile.sound_speed_at(x);
        v * v - c * c
    };
    let mut components = Vec::with_capacity(positions.len());
    let mut determinant = Vec::with_capacity(positions.len());
    for &x in positions {
        let v = profile.velocity_at(x);
        let c2 = profile.sound_speed_at(x).powi(2);
        components.push([[1.0, v], [v, v * v - c2]]);
        determinant.push(-c2);
    }
    let mut horizon_positions = Vec::new();
    if profile.regime == Regime::Supercritical {
        // v^2 - c^2 = n_inf^2 v^2 / n^2 - g n changes sign once per side
        let c = profile.sound_speed();
        let far = 50.0 / (profile.alpha.unwrap_or(1.0) * c);
        for side in [-1.0f64, 1.0] {
            let (mut lo, mut hi) = (1e-12, far);
            if excess(side * lo) <= 0.0 || excess(side * hi) >= 0.0 {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if excess(side * mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            horizon_positions.push(side * 0.5 * (lo + hi));
        }
    }
    AcousticMetric {
        positions: positions.to_vec(),
        components,
        determinant,
        horizon_positions,
    }
}

/// `k_B T = v/(1+v) mu` (velocities in units of `c0`).
pub fn hawking_temperature(v: f64, mu: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&v) {
        return Err(invalid("v", format!("needs 0 <= v < 1, got {v}")));
    }
    Ok(v / (1.0 + v) * mu)
}

/// Condensate fluctuations `n_out = (1/2) v/(1+v) | |x| - (1-v) t |` inside the
/// wedge `|x| < (1-v) t`, zero outside.
pub fn fluctuation_wedge_prediction(v: f64, x: f64, t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&v) {
        return Err(invalid("v", format!("needs 0 <= v < 1, got {v}")));
    }
    let edge = (1.0 - v) * t;
    Ok(if x.abs() < edge {
        0.5 * v / (1.0 + v) * (edge - x.abs())
    } else {
        0.0
    })
}

/// Slope `|d n_out / d|x||` inside the wedge.
pub fn wedge_slope(v: f64) -> f64 {
    0.5 * v / (1.0 + v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units() -> Units {
        Units::new(10.0).unwrap()
    }

    #[test]
    fn ground_state_limit() {
        let p = subcritical_state(0.0, 10.0, &units()).unwrap();
        assert_eq!(p.velocity, 0.0);
        assert!((p.mu - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weak_loss_values() {
        let u = Units::new(1.0).unwrap();
        let p = subcritical_state(0.1, 1.0, &u).unwrap();
        assert_eq!(p.velocity, 0.1);
        assert!((p.mu - 1.005).abs() < 1e-15);
        assert!(subcritical_state(0.7, 1.0, &u).is_err());
    }

    #[test]
    fn strong_loss_values() {
        let p = supercritical_state(3.0, 10.0, &units()).unwrap();
        assert!((p.velocity - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.alpha.unwrap() - 8f64.sqrt() / 3.0).abs() < 1e-15);
        assert!(supercritical_state(0.9, 10.0, &units()).is_err());
        assert!(supercritical_state(1.0, 10.0, &units()).is_err());
    }

    #[test]
    fn dark_soliton_limit() {
        let p = supercritical_state(1e8, 10.0, &units()).unwrap();
        assert!(p.velocity < 1e-7);
        assert!((p.alpha.unwrap() - 1.0).abs() < 1e-12);
        assert!(p.density_at(0.0) < 1e-12);
        assert!((p.density_at(3.0) - 10.0 * 3f64.tanh().powi(2)).abs() < 1e-9);
    }

    #[test]
    fn stationary_profiles_solve_gpe() {
        let u = units();
        let profiles = [
            subcritical_state(0.1, 10.0, &u).unwrap(),
            subcritical_state(0.5, 9.0, &u).unwrap(),
            supercritical_state(3.0, 10.0, &u).unwrap(),
            supercritical_state(10.0, 7.0, &u).unwrap(),
        ];
        for p in &profiles {
            for i in 1..200 {
                let x = -10.0 + 0.1 * i as f64;
                if x.abs() < 0.05 {
                    continue;
                }
                let r = p.gpe_residual(x, 2e-3);
                assert!(r < 1e-8, "{:?} x = {x}: residual {r}", p.regime);
            }
            assert!(p.jump_residual(1e-3) < 1e-8, "{:?}", p.regime);
            assert!((p.drain_velocity() - p.gamma).abs() < 1e-9);
        }
    }

    #[test]
    fn velocity_cusp_at_critical_point() {
        let u = Units::new(1.0).unwrap();
        let gc = critical_gamma(1.0);
        let h = 1e-6;
        let left = (subcritical_state(gc - h, 1.0, &u).unwrap().velocity
            - subcritical_state(gc - 2.0 * h, 1.0, &u).unwrap().velocity)
            / h;
        assert!((left - 1.0).abs() < 1e-6);
        // asymptotic density whose sound speed equals gamma_c
        let n = gc * gc;
        let a = supercritical_state(gc + h, n, &u).unwrap().velocity;
        let b = supercritical_state(gc + 2.0 * h, n, &u).unwrap().velocity;
        assert!(((b - a) / h + 1.0).abs() < 1e-4);
        assert!((a - gc).abs() < 1e-5);
    }

    #[test]
    fn critical_rate() {
        assert!((critical_gamma(1.0) - 0.6667).abs() < 1e-4);
        assert!((critical_gamma(2.0) - 1.3333).abs() < 1e-4);
        let cp = CriticalPoint::for_sound_speed(1.0);
        assert_eq!((cp.nu, cp.z), (0.5, 1.0));
        assert_eq!(cp.classify(0.1), Regime::Subcritical);
        assert_eq!(cp.classify(2.0 / 3.0), Regime::Critical);
        assert_eq!(cp.classify(3.0), Regime::Supercritical);
    }

    #[test]
    fn critical_profile_boundaries() {
        let cp = critical_profile(100.0, 10.0, 1.0).unwrap();
        assert_eq!(cp.density(100.0), 10.0);
        assert_eq!(cp.velocity(100.0), 0.0);
        assert!((cp.density(0.0) - 40.0 / 9.0).abs() < 1e-12);
        assert!((cp.velocity(1e-12).abs() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(cp.phase(150.0), -100.0);
        assert!(critical_profile(0.0, 10.0, 1.0).is_err());
        // numerical derivative of the phase reproduces the velocity
        let h = 1e-5;
        for x in [-80.0, -10.0, 5.0, 60.0] {
            let d = (cp.phase(x + h) - cp.phase(x - h)) / (2.0 * h);
            assert!((d - cp.velocity(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn metric_and_horizons() {
        let u = units();
        let xs: Vec<f64> = (0..101).map(|i| -5.0 + 0.1 * i as f64).collect();
        let sub = acoustic_metric(&subcritical_state(0.1, 10.0, &u).unwrap(), &xs);
        assert!(sub.horizon_positions.is_empty());
        assert!((sub.components[0][0][1] - 0.1).abs() < 1e-15);
        assert!((sub.determinant[0] + 1.0).abs() < 1e-12);
        let sup = supercritical_state(3.0, 10.0, &u).unwrap();
        let m = acoustic_metric(&sup, &xs);
        assert_eq!(m.horizon_positions.len(), 2);
        for x in &m.horizon_positions {
            assert!(x.abs() < 1.0, "horizon at {x}");
            assert!((sup.velocity_at(*x).powi(2) - sup.sound_speed_at(*x).powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn thermal_predictions() {
        assert_eq!(hawking_temperature(0.0, 1.0).unwrap(), 0.0);
        assert!((hawking_temperature(0.1, 1.005).unwrap() - 0.0914).abs() < 1e-4);
        assert!(hawking_temperature(1.0, 1.0).is_err());
        assert_eq!(fluctuation_wedge_prediction(0.0, 3.0, 10.0).unwrap(), 0.0);
        let n = fluctuation_wedge_prediction(0.1, 0.0, 200.0).unwrap();
        assert!((n - 8.1818).abs() < 1e-3);
        assert_eq!(
            fluctuation_wedge_prediction(0.1, 181.0, 200.0).unwrap(),
            0.0
        );
        assert!((wedge_slope(0.1) - 0.04545).abs() < 1e-5);
    }
}
