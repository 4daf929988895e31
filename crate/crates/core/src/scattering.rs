//! Bogoliubov-de Gennes scattering of phonons and reservoir noise at a drain.
//!
//! Fluctuations are written `delta psi = e^{-i mu t} (u e^{-i w t} + v^* e^{i w t})`.
//! Far from the drain the background is `sqrt(n) A e^{i w x}` with a local flow
//! `w` (`+v` on the left, `-v` on the right) and a constant phase `A`; the modes
//! there are `u = U A e^{i(k+w)x}`, `v = V A^* e^{i(k-w)x}` with `k` a root of
//!
//! `k^4 + 4(c^2 - w^2) k^2 + 8 omega w k - 4 omega^2 = 0`.
//!
//! Across the drain `u` and `v` are continuous and their derivatives jump by
//! `[u'] = -2i gamma u(0) + 2 eta` and `[v'] = 2i gamma v(0) + 2 eta'`, where
//! `eta`, `eta'` are the reservoir noise components at `+omega` and `-omega`.

use nalgebra::{DMatrix, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytics::{Regime, StationaryProfile};
use crate::error::{invalid, Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeClass {
    /// Propagating towards the drain.
    Incoming,
    /// Propagating away from the drain.
    Outgoing,
    /// Complex `k`, vanishing far from the drain.
    EvanescentDecaying,
    /// Complex `k`, diverging far from the drain; unphysical.
    EvanescentGrowing,
}

/// Plane-wave BdG solution on one side of the drain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdGMode {
    pub omega: f64,
    pub k: Complex64,
    pub u: Complex64,
    pub v: Complex64,
    /// Sign of `|u|^2 - |v|^2`.
    pub norm_sign: i8,
    pub side: Side,
    pub class: ModeClass,
    /// Signed local flow `w` of the background.
    pub flow: f64,
    /// Background phase `A` (one for a plain plane-wave background).
    pub phase: Complex64,
    /// Real part of `d omega / dk`.
    pub group_velocity: f64,
}

impl BdGMode {
    /// `(u, u', v, v')` at position `x` on this mode's side.
    pub fn values_at(&self, x: f64) -> [Complex64; 4] {
        let eu = (I * (self.k + self.flow) * x).exp();
        let ev = (I * (self.k - self.flow) * x).exp();
        let u = self.u * self.phase * eu;
        let v = self.v * self.phase.conj() * ev;
        [
            u,
            I * (self.k + self.flow) * u,
            v,
            I * (self.k - self.flow) * v,
        ]
    }

    pub fn is_propagating(&self) -> bool {
        matches!(self.class, ModeClass::Incoming | ModeClass::Outgoing)
    }
}

/// The four roots of `(omega - w k)^2 = (k^2/2 + gn)^2 - gn^2`.
///
/// Computed as eigenvalues of the companion matrix and polished by Newton steps.
pub fn dispersion_roots(omega: f64, flow: f64, gn: f64) -> Result<[Complex64; 4]> {
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(invalid("omega", "must be finite and non-negative"));
    }
    if !(gn > 0.0) {
        return Err(invalid("gn", "must be positive"));
    }
    // monic k^4 + a2 k^2 + a1 k + a0
    let a2 = 4.0 * (gn - flow * flow);
    let a1 = 8.0 * omega * flow;
    let a0 = -4.0 * omega * omega;
    let companion = Matrix4::new(
        0.0, 0.0, 0.0, -a0, //
        1.0, 0.0, 0.0, -a1, //
        0.0, 1.0, 0.0, -a2, //
        0.0, 0.0, 1.0, 0.0,
    );
    let eig = companion.complex_eigenvalues();
    let poly = |k: Complex64| ((k * k + a2) * k + a1) * k + a0;
    let dpoly = |k: Complex64| (4.0 * k * k + 2.0 * a2) * k + a1;
    let scale = 1.0 + a2.abs() + a1.abs() + a0.abs();
    let mut roots = [Complex64::new(0.0, 0.0); 4];
    for (r, e) in roots.iter_mut().zip(eig.iter()) {
        let mut k = *e;
        for _ in 0..8 {
            let d = dpoly(k);
            if d.norm() < 1e-14 * scale {
                break;
            }
            let next = k - poly(k) / d;
            if poly(next).norm() >= poly(k).norm() {
                break;
            }
            k = next;
        }
        if !(k.re.is_finite() && k.im.is_finite())
            || poly(k).norm() > 1e-8 * scale * (1.0 + k.norm().powi(4))
        {
            return Err(Error::RootFinding(format!(
                "omega = {omega}, flow = {flow}: residual {}",
                poly(k).norm()
            )));
        }
        *r = k;
    }
    Ok(roots)
}

/// Builds and classifies the four modes for one side; `flow` is the signed local flow.
///
/// Propagating modes get unit Bogoliubov norm with `U` real positive; evanescent
/// modes get `U = 1`. `omega = 0` is rejected because the two phonon roots merge.
pub fn classify_modes(
    roots: &[Complex64; 4],
    omega: f64,
    flow: f64,
    gn: f64,
    side: Side,
) -> Result<Vec<BdGMode>> {
    if !(omega > 0.0) {
        return Err(invalid(
            "omega",
            "classification needs omega > 0 (phonon roots merge at 0)",
        ));
    }
    let scale = roots.iter().map(|k| k.norm()).fold(1.0, f64::max);
    let mut modes = Vec::with_capacity(4);
    for &k0 in roots {
        let propagating = k0.im.abs() < 1e-9 * scale;
        let k = if propagating {
            Complex64::new(k0.re, 0.0)
        } else {
            k0
        };
        let big_omega = omega - flow * k;
        let e = 0.5 * k * k + gn;
        let ratio = (big_omega - e) / gn; // V / U
        let norm = 1.0 - ratio.norm_sqr();
        let norm_sign: i8 = if norm >= 0.0 { 1 } else { -1 };
        let group = flow + (e * k / big_omega).re;
        let (u, class) = if propagating {
            let class = if (group > 0.0) == (side == Side::Left) {
                ModeClass::Incoming
            } else {
                ModeClass::Outgoing
            };
            (Complex64::new(norm.abs().sqrt().recip(), 0.0), class)
        } else {
            let decays = match side {
                Side::Left => k.im < 0.0,
                Side::Right => k.im > 0.0,
            };
            let class = if decays {
                ModeClass::EvanescentDecaying
            } else {
                ModeClass::EvanescentGrowing
            };
            (Complex64::new(1.0, 0.0), class)
        };
        modes.push(BdGMode {
            omega,
            k,
            u,
            v: ratio * u,
            norm_sign,
            side,
            class,
            flow,
            phase: Complex64::new(1.0, 0.0),
            group_velocity: group,
        });
    }
    for class in [
        ModeClass::Incoming,
        ModeClass::Outgoing,
        ModeClass::EvanescentDecaying,
        ModeClass::EvanescentGrowing,
    ] {
        let count = modes.iter().filter(|m| m.class == class).count();
        if count != 1 {
            return Err(Error::RootFinding(format!(
                "expected one {class:?} mode on the {side:?} side at omega = {omega}, found {count}"
            )));
        }
    }
    Ok(modes)
}

/// Input channels of the scattering problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Input {
    AIn = 0,
    BIn = 1,
    Eta = 2,
    EtaConj = 3,
}

/// Output channels of the scattering problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Output {
    AOut = 0,
    BOut = 1,
    ALoc = 2,
    BLoc = 3,
}

/// Mode values `(u, u', v, v')` at `x = 0^+-` for the three physical modes of one side.
#[derive(Debug, Clone)]
struct SideBasis {
    incoming: [Complex64; 4],
    outgoing: [Complex64; 4],
    localized: [Complex64; 4],
}

/// Linear map from `{A_in, B_in, eta, eta'}` to `{A_out, B_out, A_loc, B_loc}`.
#[derive(Debug, Clone)]
pub struct ScatterMatrix {
    pub omega: f64,
    pub gamma: f64,
    /// `entries[out][in]`.
    pub entries: [[Complex64; 4]; 4],
    pub background: Regime,
    /// Asymptotic flow speed.
    pub flow: f64,
    /// Left-side modes followed by right-side modes (growing ones included for reference).
    pub modes: Vec<BdGMode>,
    /// `|U|^2 - |V|^2` of the far-field form of each localized mode (left, right),
    /// with the amplitude at the drain fixed to one. Negative.
    pub localized_norm: [f64; 2],
    solution: SolutionData,
}

#[derive(Debug, Clone)]
enum SolutionData {
    Homogeneous,
    Integrated {
        left: ModeTracks,
        right: ModeTracks,
        profile: StationaryProfile,
        step: f64,
        /// Incoming, outgoing and localized soliton modes, left side first.
        exact: Vec<SolitonMode>,
    },
}

/// Sampled `(u, u', v, v')` along `|x|` for the incoming, outgoing and localized modes.
#[derive(Debug, Clone)]
struct ModeTracks {
    x: Vec<f64>,
    incoming: Vec<[Complex64; 4]>,
    outgoing: Vec<[Complex64; 4]>,
    localized: Vec<[Complex64; 4]>,
}

impl ScatterMatrix {
    pub fn get(&self, out: Output, input: Input) -> Complex64 {
        self.entries[out as usize][input as usize]
    }

    /// Reflection amplitude for a phonon incident from the left.
    pub fn reflection(&self) -> Complex64 {
        self.get(Output::AOut, Input::AIn)
    }

    pub fn transmission(&self) -> Complex64 {
        self.get(Output::BOut, Input::AIn)
    }

    /// Bogoliubov-norm weighted intensity `|S|^2 |N|` carried into `out`, where `N`
    /// is the norm of the output mode. Unlike `|S|^2` for the localized channels
    /// this does not depend on how the localized mode is normalized.
    pub fn intensity(&self, out: Output, input: Input) -> f64 {
        let weight = match out {
            Output::AOut | Output::BOut => 1.0,
            Output::ALoc => self.localized_norm[0].abs(),
            Output::BLoc => self.localized_norm[1].abs(),
        };
        self.get(out, input).norm_sqr() * weight
    }

    /// Largest difference between entries related by left-right exchange.
    pub fn mirror_asymmetry(&self) -> f64 {
        let swap_out = [1, 0, 3, 2];
        let swap_in = [1, 0, 2, 3];
        let mut worst: f64 = 0.0;
        for o in 0..4 {
            for i in 0..4 {
                let d = (self.entries[o][i] - self.entries[swap_out[o]][swap_in[i]]).norm();
                worst = worst.max(d / self.entries[o][i].norm().max(1.0));
            }
        }
        worst
    }

    fn mode(&self, side: Side, class: ModeClass) -> &BdGMode {
        self.modes
            .iter()
            .find(|m| m.side == side && m.class == class)
            .expect("classified")
    }

    /// `(u, u', v, v')` of the full solution excited by `input` at position `x != 0`.
    pub fn solution_at(&self, input: Input, x: f64) -> Result<[Complex64; 4]> {
        let side = if x < 0.0 { Side::Left } else { Side::Right };
        let (loc, out) = match side {
            Side::Left => (Output::ALoc, Output::AOut),
            Side::Right => (Output::BLoc, Output::BOut),
        };
        let a_in = match (side, input) {
            (Side::Left, Input::AIn) | (Side::Right, Input::BIn) => 1.0,
            _ => 0.0,
        };
        let weights = [
            Complex64::new(a_in, 0.0),
            self.get(out, input),
            self.get(loc, input),
        ];
        let basis: [[Complex64; 4]; 3] = match &self.solution {
            SolutionData::Homogeneous => [
                self.mode(side, ModeClass::Incoming).values_at(x),
                self.mode(side, ModeClass::Outgoing).values_at(x),
                self.mode(side, ModeClass::EvanescentDecaying).values_at(x),
            ],
            SolutionData::Integrated {
                left,
                right,
                profile,
                step,
                exact,
            } => {
                let tracks = if side == Side::Left { left } else { right };
                if x.abs() > tracks.reach() {
                    // beyond the integration start the seeding modes are exact
                    let class = [
                        ModeClass::Incoming,
                        ModeClass::Outgoing,
                        ModeClass::EvanescentDecaying,
                    ];
                    class.map(|c| {
                        exact
                            .iter()
                            .find(|m| m.mode.side == side && m.mode.class == c)
                            .expect("three modes per side")
                            .values_at(x)
                    })
                } else {
                    tracks.evaluate(x.abs(), side, profile, self.omega, *step)?
                }
            }
        };
        let mut out_vals = [Complex64::new(0.0, 0.0); 4];
        for (w, b) in weights.iter().zip(basis) {
            for c in 0..4 {
                out_vals[c] += w * b[c];
            }
        }
        Ok(out_vals)
    }

    /// Exact soliton-background mode, if this matrix was built on a soliton.
    pub fn soliton_mode(&self, side: Side, class: ModeClass) -> Option<&SolitonMode> {
        match &self.solution {
            SolutionData::Integrated { exact, .. } => exact
                .iter()
                .find(|m| m.mode.side == side && m.mode.class == class),
            SolutionData::Homogeneous => None,
        }
    }

    /// Quasiparticle current `Im(u^* u' + v^* v')` of the solution excited by `input`.
    pub fn current_profile(&self, input: Input, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter()
            .map(|&x| {
                let [u, du, v, dv] = self.solution_at(input, x)?;
                Ok((u.conj() * du + v.conj() * dv).im)
            })
            .collect()
    }
}

impl ModeTracks {
    fn reach(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Integrates from the nearest stored sample to `r`, so the result carries
    /// only the RK4 error of the original sweep.
    fn evaluate(
        &self,
        r: f64,
        side: Side,
        profile: &StationaryProfile,
        omega: f64,
        step: f64,
    ) -> Result<[[Complex64; 4]; 3]> {
        let n = self.x.len();
        if r <= 0.0 || r > self.x[n - 1] {
            return Err(invalid(
                "x",
                format!("|x| = {r} outside the integrated range"),
            ));
        }
        let j = self.x.partition_point(|&p| p < r).min(n - 1);
        let j = if j > 0 && (r - self.x[j - 1]) < (self.x[j] - r) {
            j - 1
        } else {
            j
        };
        let r0 = self.x[j];
        let s = side.sign();
        let n_sub = ((r - r0).abs() / step).ceil().max(1.0) as usize;
        let h = (r - r0) / n_sub as f64;
        let carry = |start: &[Complex64; 4]| {
            let mut y = *start;
            for i in 0..n_sub {
                y = rk4_step(profile, omega, r0 + i as f64 * h, &y, h, s);
            }
            // tracks hold r-derivatives; convert back to x
            [y[0], s * y[1], y[2], s * y[3]]
        };
        Ok([
            carry(&self.incoming[j]),
            carry(&self.outgoing[j]),
            carry(&self.localized[j]),
        ])
    }
}

fn side_modes(omega: f64, flow_speed: f64, gn: f64, side: Side) -> Result<Vec<BdGMode>> {
    // the flow points towards the drain: +v on the left, -v on the right
    let w = -side.sign() * flow_speed;
    let roots = dispersion_roots(omega, w, gn)?;
    classify_modes(&roots, omega, w, gn, side)
}

fn pick(modes: &[BdGMode], side: Side, class: ModeClass) -> BdGMode {
    *modes
        .iter()
        .find(|m| m.side == side && m.class == class)
        .expect("classified")
}

/// Solves the four matching conditions at the drain for every input channel.
fn solve_matching(
    omega: f64,
    gamma: f64,
    left: &SideBasis,
    right: &SideBasis,
) -> Result<[[Complex64; 4]; 4]> {
    // column of a mode on side s: [s u, s v, s u' + i g u, s v' - i g v]
    let column = |vals: &[Complex64; 4], s: f64| -> Vector4<Complex64> {
        let [u, du, v, dv] = *vals;
        Vector4::new(s * u, s * v, s * du + I * gamma * u, s * dv - I * gamma * v)
    };
    let m = Matrix4::from_columns(&[
        column(&left.outgoing, -1.0),
        column(&right.outgoing, 1.0),
        column(&left.localized, -1.0),
        column(&right.localized, 1.0),
    ]);
    let lu = m.lu();
    let det = lu.determinant();
    let col_scale: f64 = (0..4).map(|c| m.column(c).norm()).product();
    if !(det.norm() > 1e-13 * col_scale) {
        return Err(Error::SingularMatching { omega, gamma });
    }
    let two = Complex64::new(2.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let rhs = [
        -column(&left.incoming, -1.0),
        -column(&right.incoming, 1.0),
        Vector4::new(zero, zero, two, zero),
        Vector4::new(zero, zero, zero, two),
    ];
    let mut entries = [[zero; 4]; 4];
    for (i, b) in rhs.iter().enumerate() {
        let x = lu
            .solve(b)
            .ok_or(Error::SingularMatching { omega, gamma })?;
        for o in 0..4 {
            entries[o][i] = x[o];
        }
    }
    Ok(entries)
}

/// S-matrix for the homogeneous subcritical background `sqrt(n) e^{-i gamma |x|}`.
pub fn build_smatrix_subcritical(omega: f64, profile: &StationaryProfile) -> Result<ScatterMatrix> {
    if profile.regime != Regime::Subcritical {
        return Err(invalid("profile", "expected a subcritical background"));
    }
    let gn = profile.coupling * profile.density;
    let v = profile.velocity;
    let mut modes = side_modes(omega, v, gn, Side::Left)?;
    modes.extend(side_modes(omega, v, gn, Side::Right)?);
    let basis = |side| SideBasis {
        incoming: pick(&modes, side, ModeClass::Incoming).values_at(0.0),
        outgoing: pick(&modes, side, ModeClass::Outgoing).values_at(0.0),
        localized: pick(&modes, side, ModeClass::EvanescentDecaying).values_at(0.0),
    };
    let entries = solve_matching(
        omega,
        profile.gamma,
        &basis(Side::Left),
        &basis(Side::Right),
    )?;
    Ok(ScatterMatrix {
        omega,
        gamma: profile.gamma,
        entries,
        background: Regime::Subcritical,
        flow: v,
        localized_norm: [Side::Left, Side::Right].map(|side| {
            let m = pick(&modes, side, ModeClass::EvanescentDecaying);
            m.u.norm_sqr() - m.v.norm_sqr()
        }),
        modes,
        solution: SolutionData::Homogeneous,
    })
}

/// Integration settings for the soliton background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    /// Start where `1 - tanh(alpha c |x|)` has fallen to this value.
    pub background_tolerance: f64,
    /// RK4 step in units of the local healing length `1/c`.
    pub step: f64,
    /// Keep every this many steps for current and solution evaluation.
    pub stride: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            background_tolerance: 1e-6,
            step: 2e-3,
            stride: 10,
        }
    }
}

/// Exact BdG mode on one half of the grey-soliton background.
///
/// On the soliton `u = e^{i(k+w)x} P(T)` and `v = e^{i(k-w)x} Q(T)` with
/// `T = tanh(alpha c |x|)` and `P`, `Q` quadratic. The coefficients span the null
/// space of the polynomial identity obtained by substituting into the BdG
/// equations; they are scaled so that `P(1) = U A` and `Q(1) = V A^*`, which
/// makes the mode coincide with the plane-wave mode far from the drain.
///
/// Plane-wave data at a finite distance is not enough: the background relaxes at
/// rate `2 alpha c`, the same rate at which the localized mode decays, so the
/// error does not shrink with distance and leaks into the localized amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonMode {
    pub mode: BdGMode,
    /// Signed `d T / d x` at `T = 0`: `+alpha c` on the right, `-alpha c` on the left.
    slope: f64,
    p: [Complex64; 3],
    q: [Complex64; 3],
}

impl SolitonMode {
    pub fn new(mode: BdGMode, profile: &StationaryProfile, omega: f64) -> Result<Self> {
        let alpha = profile
            .alpha
            .ok_or_else(|| invalid("profile", "expected a supercritical background"))?;
        let gn = profile.coupling * profile.density;
        let c = gn.sqrt();
        let beta = profile.velocity / c;
        let slope = mode.side.sign() * alpha * c;
        let s2 = slope * slope;
        let mu = profile.mu;
        let w = mode.flow;
        // rows: T^0..T^4 of the u equation, then of the v equation; columns p0..p2, q0..q2
        let mut m = DMatrix::<Complex64>::zeros(10, 6);
        let fields = [(mode.k + w, 1.0), (mode.k - w, -1.0)];
        // g psi^2 = gn (i beta + alpha T)^2 enters the u equation, its conjugate the v equation
        let coupling = |eq: usize| {
            let cross = if eq == 0 { 2.0 } else { -2.0 } * I * gn * alpha * beta;
            [
                Complex64::new(-gn * beta * beta, 0.0),
                cross,
                Complex64::new(gn * alpha * alpha, 0.0),
            ]
        };
        for (eq, &(wave, sign)) in fields.iter().enumerate() {
            let other = 1 - eq;
            for j in 0..3 {
                let jf = j as f64;
                let mut row = [Complex64::new(0.0, 0.0); 5];
                let second = jf * (jf - 1.0) * s2;
                // -u''/2 divided by the plane-wave factor, for P = T^j
                row[j] += 0.5 * wave * wave + second + s2 * jf;
                if j >= 1 {
                    row[j - 1] -= I * wave * slope * jf;
                }
                row[j + 1] += I * wave * slope * jf;
                if j >= 2 {
                    row[j - 2] -= 0.5 * second;
                }
                row[j + 2] -= 0.5 * second + s2 * jf;
                row[j] += 2.0 * gn * beta * beta - mu - sign * omega;
                row[j + 2] += 2.0 * gn * alpha * alpha;
                for d in 0..5 {
                    m[(eq * 5 + d, eq * 3 + j)] += row[d];
                }
                for (d, z) in coupling(other).iter().enumerate() {
                    m[(other * 5 + j + d, eq * 3 + j)] += z;
                }
            }
        }
        let svd = m.svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Integration("soliton mode decomposition failed".into()))?;
        let (idx, smallest) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, s)| (i, *s))
            .expect("non-empty");
        let largest = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        if !(smallest <= 1e-10 * largest) {
            return Err(Error::Integration(format!(
                "no polynomial soliton mode at omega = {omega} (residual {smallest:.3e})"
            )));
        }
        let null: Vec<Complex64> = v_t.row(idx).iter().map(|z| z.conj()).collect();
        let mut p = [null[0], null[1], null[2]];
        let mut q = [null[3], null[4], null[5]];
        let p1 = p[0] + p[1] + p[2];
        let target = mode.u * mode.phase;
        if p1.norm() < 1e-12 * (p[0].norm() + p[1].norm() + p[2].norm()) {
            return Err(Error::Integration(
                "soliton mode has no asymptotic amplitude".into(),
            ));
        }
        let scale = target / p1;
        for z in p.iter_mut().chain(q.iter_mut()) {
            *z *= scale;
        }
        Ok(Self { mode, slope, p, q })
    }

    fn rescale(&mut self, f: Complex64) {
        for z in self.p.iter_mut().chain(self.q.iter_mut()) {
            *z *= f;
        }
    }

    /// `(u, u', v, v')` at `x` on this mode's side.
    pub fn values_at(&self, x: f64) -> [Complex64; 4] {
        let t = (self.slope.abs() * x.abs()).tanh();
        let dt = self.slope * (1.0 - t * t);
        let poly =
            |c: &[Complex64; 3]| (c[0] + (c[1] + c[2] * t) * t, (c[1] + 2.0 * c[2] * t) * dt);
        let w = self.mode.flow;
        let (pu, dpu) = poly(&self.p);
        let (qv, dqv) = poly(&self.q);
        let ku = self.mode.k + w;
        let kv = self.mode.k - w;
        let eu = (I * ku * x).exp();
        let ev = (I * kv * x).exp();
        [
            eu * pu,
            eu * (I * ku * pu + dpu),
            ev * qv,
            ev * (I * kv * qv + dqv),
        ]
    }
}

/// S-matrix across the grey-soliton background, by RK4 integration of the BdG
/// equations from the asymptotic modes at `|x| = X` to the drain.
pub fn build_smatrix_supercritical(
    omega: f64,
    profile: &StationaryProfile,
) -> Result<ScatterMatrix> {
    build_smatrix_supercritical_with(omega, profile, IntegrationOptions::default())
}

pub fn build_smatrix_supercritical_with(
    omega: f64,
    profile: &StationaryProfile,
    opts: IntegrationOptions,
) -> Result<ScatterMatrix> {
    let alpha = match (profile.regime, profile.alpha) {
        (Regime::Supercritical, Some(a)) => a,
        _ => return Err(invalid("profile", "expected a supercritical background")),
    };
    if !(opts.step > 0.0
        && opts.background_tolerance > 0.0
        && opts.background_tolerance < 1.0
        && opts.stride > 0)
    {
        return Err(invalid(
            "options",
            "step, tolerance and stride must be positive",
        ));
    }
    let gn = profile.coupling * profile.density;
    let c = gn.sqrt();
    let v = profile.velocity;
    let phase_a = Complex64::new(alpha, v / c);
    let x_start = (1.0 - opts.background_tolerance).atanh() / (alpha * c);
    let n_steps = (x_start * c / opts.step).ceil() as usize;
    let h = x_start / n_steps as f64;

    let mut modes = Vec::new();
    let mut localized_norm = [0.0; 2];
    let mut exact = Vec::new();
    let mut tracks = Vec::new();
    let mut at_drain = Vec::new();
    for side in [Side::Left, Side::Right] {
        let s = side.sign();
        let mut side_set = side_modes(omega, v, gn, side)?;
        for m in side_set.iter_mut() {
            m.phase = phase_a;
        }
        let run = |m: &BdGMode| -> Result<(Vec<f64>, Vec<[Complex64; 4]>, SolitonMode)> {
            let seed = SolitonMode::new(*m, profile, omega)?;
            let vals = seed.values_at(s * x_start);
            let mut y = [vals[0], s * vals[1], vals[2], s * vals[3]];
            let mut xs = vec![x_start];
            let mut ys = vec![y];
            for step in 0..n_steps {
                let r = x_start - step as f64 * h;
                y = rk4_step(profile, omega, r, &y, -h, s);
                if y.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                    return Err(Error::Integration(format!(
                        "non-finite mode at |x| = {}",
                        r - h
                    )));
                }
                if (step + 1) % opts.stride == 0 || step + 1 == n_steps {
                    xs.push((r - h).max(0.0));
                    ys.push(y);
                }
            }
            xs.reverse();
            ys.reverse();
            Ok((xs, ys, seed))
        };
        let (xs, inc, e_inc) = run(&pick(&side_set, side, ModeClass::Incoming))?;
        let (_, out, e_out) = run(&pick(&side_set, side, ModeClass::Outgoing))?;
        let (_, mut loc, mut e_loc) = run(&pick(&side_set, side, ModeClass::EvanescentDecaying))?;
        // localized mode: unit u at the drain
        let scale = loc[0][0];
        if scale.norm() == 0.0 {
            return Err(Error::Integration(
                "localized mode vanishes at the drain".into(),
            ));
        }
        for y in loc.iter_mut() {
            for c in y.iter_mut() {
                *c /= scale;
            }
        }
        e_loc.rescale(scale.inv());
        let far = pick(&side_set, side, ModeClass::EvanescentDecaying);
        localized_norm[(s > 0.0) as usize] =
            (far.u.norm_sqr() - far.v.norm_sqr()) / scale.norm_sqr();
        let to_x = |y: &[Complex64; 4]| [y[0], s * y[1], y[2], s * y[3]];
        at_drain.push(SideBasis {
            incoming: to_x(&inc[0]),
            outgoing: to_x(&out[0]),
            localized: to_x(&loc[0]),
        });
        tracks.push(ModeTracks {
            x: xs,
            incoming: inc,
            outgoing: out,
            localized: loc,
        });
        exact.extend([e_inc, e_out, e_loc]);
        modes.append(&mut side_set);
    }
    let entries = solve_matching(omega, profile.gamma, &at_drain[0], &at_drain[1])?;
    let right = tracks.pop().expect("two sides");
    let left = tracks.pop().expect("two sides");
    Ok(ScatterMatrix {
        omega,
        gamma: profile.gamma,
        entries,
        background: Regime::Supercritical,
        flow: v,
        modes,
        localized_norm,
        solution: SolutionData::Integrated {
            left,
            right,
            profile: *profile,
            step: h,
            exact,
        },
    })
}

/// `d/dr (u, u', v, v')` with `r = |x|` on the side of sign `s` (derivatives in `r`).
fn bdg_rhs(
    profile: &StationaryProfile,
    omega: f64,
    r: f64,
    y: &[Complex64; 4],
    s: f64,
) -> [Complex64; 4] {
    let g = profile.coupling;
    let psi = profile.field(s * r);
    let rho = g * psi.norm_sqr();
    let psi2 = g * psi * psi;
    let mu = profile.mu;
    let [u, du, w, dw] = *y;
    [
        du,
        2.0 * ((2.0 * rho - mu - omega) * u + psi2 * w),
        dw,
        2.0 * ((2.0 * rho - mu + omega) * w + psi2.conj() * u),
    ]
}

/// One RK4 step from `r` to `r + h`; stages never sample `r < 0`, where the cusp is.
fn rk4_step(
    profile: &StationaryProfile,
    omega: f64,
    r: f64,
    y: &[Complex64; 4],
    h: f64,
    s: f64,
) -> [Complex64; 4] {
    let add = |a: &[Complex64; 4], b: &[Complex64; 4], f: f64| {
        [
            a[0] + f * b[0],
            a[1] + f * b[1],
            a[2] + f * b[2],
            a[3] + f * b[3],
        ]
    };
    let f = |r: f64, y: &[Complex64; 4]| bdg_rhs(profile, omega, r.max(0.0), y, s);
    let k1 = f(r, y);
    let k2 = f(r + 0.5 * h, &add(y, &k1, 0.5 * h));
    let k3 = f(r + 0.5 * h, &add(y, &k2, 0.5 * h));
    let k4 = f(r + h, &add(y, &k3, h));
    let mut out = *y;
    for c in 0..4 {
        out[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    }
    out
}

/// Dispatches on the background regime.
pub fn build_smatrix(omega: f64, profile: &StationaryProfile) -> Result<ScatterMatrix> {
    match profile.regime {
        Regime::Subcritical => build_smatrix_subcritical(omega, profile),
        Regime::Supercritical => build_smatrix_supercritical(omega, profile),
        Regime::Critical => Err(invalid(
            "profile",
            "no stationary scattering background at the critical point",
        )),
    }
}

/// Noise-averaged phonon occupation of the left outgoing channel,
/// `gamma (|S_{out,eta}|^2 + |S_{out,eta'}|^2)`.
pub fn phonon_flux(smat: &ScatterMatrix) -> f64 {
    smat.gamma
        * (smat.get(Output::AOut, Input::Eta).norm_sqr()
            + smat.get(Output::AOut, Input::EtaConj).norm_sqr())
}

/// `n` frequencies spaced logarithmically between `lo` and `hi` inclusive.
pub fn log_omega_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// One row of a frequency scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub omega: f64,
    /// `entries[out][in]` as `(re, im)`.
    pub entries: [[(f64, f64); 4]; 4],
    pub phonon_flux: f64,
}

impl From<&ScatterMatrix> for ScanRecord {
    fn from(s: &ScatterMatrix) -> Self {
        let mut entries = [[(0.0, 0.0); 4]; 4];
        for o in 0..4 {
            for i in 0..4 {
                entries[o][i] = (s.entries[o][i].re, s.entries[o][i].im);
            }
        }
        Self {
            omega: s.omega,
            entries,
            phonon_flux: phonon_flux(s),
        }
    }
}

/// S-matrices over a frequency grid, in parallel.
pub fn scan(omegas: &[f64], profile: &StationaryProfile) -> Result<Vec<ScatterMatrix>> {
    use rayon::prelude::*;
    omegas
        .par_iter()
        .map(|&w| build_smatrix(w, profile))
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{subcritical_state, supercritical_state};
    use crate::lattice::Units;

    #[test]
    fn zero_frequency_roots() {
        let r = dispersion_roots(0.0, 0.5, 1.0).unwrap();
        let mut im: Vec<f64> = r.iter().map(|k| k.im).collect();
        im.sort_by(f64::total_cmp);
        assert!((im[0] + 3f64.sqrt()).abs() < 1e-10);
        assert!((im[3] - 3f64.sqrt()).abs() < 1e-10);
        assert!(r.iter().filter(|k| k.norm() < 1e-6).count() == 2);
    }

    #[test]
    fn no_flow_roots_are_symmetric() {
        let r = dispersion_roots(0.3, 0.0, 1.0).unwrap();
        let real: Vec<f64> = r
            .iter()
            .filter(|k| k.im.abs() < 1e-12)
            .map(|k| k.re)
            .collect();
        assert_eq!(real.len(), 2);
        assert!((real[0] + real[1]).abs() < 1e-12);
        // Bogoliubov dispersion omega^2 = k^2 + k^4/4
        let k = real[0].abs();
        assert!((k * k + k.powi(4) / 4.0 - 0.09).abs() < 1e-12);
    }

    #[test]
    fn propagating_modes_have_unit_norm() {
        for &(w, flow) in &[(0.01, 0.7), (0.2, -0.3), (1.5, 0.0)] {
            let side = if flow > 0.0 { Side::Left } else { Side::Right };
            let roots = dispersion_roots(w, flow, 1.0).unwrap();
            let modes = classify_modes(&roots, w, flow, 1.0, side).unwrap();
            for m in modes.iter().filter(|m| m.is_propagating()) {
                assert!((m.u.norm_sqr() - m.v.norm_sqr() - m.norm_sign as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn evanescent_modes_have_negative_norm() {
        let roots = dispersion_roots(0.01, 0.7, 1.0).unwrap();
        let modes = classify_modes(&roots, 0.01, 0.7, 1.0, Side::Left).unwrap();
        for m in modes.iter().filter(|m| !m.is_propagating()) {
            assert_eq!(m.norm_sign, -1);
        }
    }

    #[test]
    fn no_loss_is_transparent() {
        let u = Units::new(10.0).unwrap();
        let p = subcritical_state(0.0, 10.0, &u).unwrap();
        let s = build_smatrix_subcritical(0.1, &p).unwrap();
        assert!((s.transmission().norm() - 1.0).abs() < 1e-10);
        assert!(s.reflection().norm() < 1e-10);
        assert!(s.get(Output::ALoc, Input::AIn).norm() < 1e-10);
        assert_eq!(phonon_flux(&s), 0.0);
    }

    #[test]
    fn subcritical_current_is_piecewise_constant() {
        let u = Units::new(10.0).unwrap();
        let p = subcritical_state(0.3, 10.0, &u).unwrap();
        let s = build_smatrix_subcritical(0.05, &p).unwrap();
        let xs: Vec<f64> = (1..40).map(|i| 0.25 * i as f64).collect();
        for input in [Input::AIn, Input::Eta] {
            let j = s.current_profile(input, &xs).unwrap();
            for w in j.windows(2) {
                assert!((w[0] - w[1]).abs() < 1e-9 * w[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn supercritical_builds() {
        let u = Units::new(10.0).unwrap();
        let p = supercritical_state(3.0, 8.0, &u).unwrap();
        let s = build_smatrix_supercritical(0.05, &p).unwrap();
        assert!(s.mirror_asymmetry() < 1e-8);
    }

    #[test]
    fn soliton_modes_solve_bdg() {
        let u = Units::new(10.0).unwrap();
        let p = supercritical_state(4.0, 9.0, &u).unwrap();
        let omega = 0.07;
        let s = build_smatrix_supercritical(omega, &p).unwrap();
        let g = p.coupling;
        for side in [Side::Left, Side::Right] {
            for class in [
                ModeClass::Incoming,
                ModeClass::Outgoing,
                ModeClass::EvanescentDecaying,
            ] {
                let m = s.soliton_mode(side, class).unwrap();
                let x = side.sign() * 0.83;
                let h = 1e-4;
                let [u0, du, v0, dv] = m.values_at(x);
                let up = m.values_at(x + h);
                let um = m.values_at(x - h);
                let d2u = (up[0] - 2.0 * u0 + um[0]) / (h * h);
                let d2v = (up[2] - 2.0 * v0 + um[2]) / (h * h);
                let psi = p.field(x);
                let rho = g * psi.norm_sqr();
                let r1 = -0.5 * d2u + (2.0 * rho - p.mu - omega) * u0 + g * psi * psi * v0;
                let r2 = -0.5 * d2v + (2.0 * rho - p.mu + omega) * v0 + g * (psi * psi).conj() * u0;
                let scale = u0.norm() + v0.norm();
                assert!(
                    r1.norm() < 1e-5 * scale && r2.norm() < 1e-5 * scale,
                    "{side:?} {class:?}"
                );
                // first derivative consistent with the values
                assert!(((up[0] - um[0]) / (2.0 * h) - du).norm() < 1e-6 * scale);
                assert!(((up[2] - um[2]) / (2.0 * h) - dv).norm() < 1e-6 * scale);
            }
        }
    }

    #[test]
    fn integrated_modes_track_exact_ones() {
        let u = Units::new(10.0).unwrap();
        let p = supercritical_state(4.0, 9.0, &u).unwrap();
        let s = build_smatrix_supercritical(0.02, &p).unwrap();
        let exact = s.soliton_mode(Side::Right, ModeClass::Outgoing).unwrap();
        // a pure B_in excitation contains the outgoing mode with weight S_{B_out, B_in}
        for &x in &[0.05, 0.4, 1.7] {
            let full = s.solution_at(Input::BIn, x).unwrap();
            let inc = s
                .soliton_mode(Side::Right, ModeClass::Incoming)
                .unwrap()
                .values_at(x);
            let loc = s
                .soliton_mode(Side::Right, ModeClass::EvanescentDecaying)
                .unwrap()
                .values_at(x);
            let out = exact.values_at(x);
            for c in 0..4 {
                let rebuilt = inc[c]
                    + s.get(Output::BOut, Input::BIn) * out[c]
                    + s.get(Output::BLoc, Input::BIn) * loc[c];
                assert!(
                    (rebuilt - full[c]).norm() < 1e-8 * (1.0 + full[c].norm()),
                    "x = {x}, c = {c}: {rebuilt} vs {}",
                    full[c]
                );
            }
        }
    }

    #[test]
    fn supercritical_current_is_piecewise_constant() {
        let u = Units::new(10.0).unwrap();
        let p = supercritical_state(10.0, 9.11, &u).unwrap();
        let s = build_smatrix_supercritical(0.003, &p).unwrap();
        let xs: Vec<f64> = (1..120).map(|i| 0.0731 * i as f64).collect();
        for input in [Input::AIn, Input::BIn, Input::Eta, Input::EtaConj] {
            for sign in [-1.0, 1.0] {
                let side: Vec<f64> = xs.iter().map(|x| sign * x).collect();
                let j = s.current_profile(input, &side).unwrap();
                let m = j.iter().map(|v| v.abs()).fold(0.0, f64::max);
                for w in j.windows(2) {
                    assert!((w[0] - w[1]).abs() < 1e-6 * m);
                }
            }
        }
    }

    #[test]
    fn localized_intensity_vanishes_quadratically_below_criticality() {
        let u = Units::new(10.0).unwrap();
        let p = subcritical_state(0.1, 10.0, &u).unwrap();
        let ws = log_omega_grid(1e-3, 1e-2, 5);
        let y: Vec<f64> = ws
            .iter()
            .map(|&w| {
                build_smatrix(w, &p)
                    .unwrap()
                    .intensity(Output::ALoc, Input::AIn)
            })
            .collect();
        assert!((log_log_slope(&ws, &y) - 2.0).abs() < 0.05);
    }

    #[test]
    fn log_grid_and_slope() {
        let g = log_omega_grid(1e-3, 1e-1, 5);
        assert!((g[2] - 1e-2).abs() < 1e-15);
        let y: Vec<f64> = g.iter().map(|w| 3.0 * w * w).collect();
        assert!((log_log_slope(&g, &y) - 2.0).abs() < 1e-12);
    }
}
