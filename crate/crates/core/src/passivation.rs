//! Passivation by a constant, invertible 2×2 input-output transformation.
//!
//! A finite-gain stable system `G: u → y` is embedded as
//!
//! ```text
//! [u0]   [m11 m12] [u]
//! [y0] = [m21 m22] [y]
//! ```
//!
//! so that the new map `Σ0: u0 → y0` has prescribed passivity levels. At run
//! time `u = (u0 − m12·y)/m11`, which closes an algebraic loop whenever `G`
//! has direct feedthrough; [`WrappedSystem`] solves that loop exactly using
//! the affine output map every [`StepSystem`] exposes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::lti::{l2_gain, FrequencyGrid, FrequencyResponse};
use crate::signal::SupplyRateSpec;
use crate::{Error, Result};

/// Slack for the strict inequalities of the sufficient conditions.
pub const STRICT_TOL: f64 = 1e-12;
/// Relative tolerance for the equality constraints of the passive case.
pub const EQUALITY_RTOL: f64 = 1e-9;
/// Multiplier applied to a swept L2 gain before checking conditions, since a
/// finite sweep can only under-estimate the supremum.
pub const GAMMA_SAFETY: f64 = 1.05;

/// A causal single-input single-output system advanced in fixed steps.
pub trait StepSystem {
    /// Output at the current sample as `free + feedthrough·u`, where `u` is
    /// the input about to be applied. Must not change observable state.
    fn output_map(&mut self, dt: f64) -> (f64, f64);

    /// Applies `u` for one step and returns the output at the current sample.
    fn step(&mut self, u: f64, dt: f64) -> f64;
}

impl<S: StepSystem + ?Sized> StepSystem for Box<S> {
    fn output_map(&mut self, dt: f64) -> (f64, f64) {
        (**self).output_map(dt)
    }

    fn step(&mut self, u: f64, dt: f64) -> f64 {
        (**self).step(u, dt)
    }
}

/// Memoryless gain, mostly useful in tests.
#[derive(Debug, Clone, Copy)]
pub struct StaticGain(pub f64);

impl StepSystem for StaticGain {
    fn output_map(&mut self, _dt: f64) -> (f64, f64) {
        (0.0, self.0)
    }

    fn step(&mut self, u: f64, _dt: f64) -> f64 {
        self.0 * u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassivationMatrix {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl PassivationMatrix {
    pub const IDENTITY: PassivationMatrix = PassivationMatrix {
        m11: 1.0,
        m12: 0.0,
        m21: 0.0,
        m22: 1.0,
    };

    pub fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Result<Self> {
        let m = Self { m11, m12, m21, m22 };
        m.validate()?;
        Ok(m)
    }

    pub fn from_array(theta: [f64; 4]) -> Result<Self> {
        Self::new(theta[0], theta[1], theta[2], theta[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.m11, self.m12, self.m21, self.m22]
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn validate(&self) -> Result<()> {
        let entries = self.to_array();
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateMatrix(format!("non-finite entry in {entries:?}")));
        }
        let scale = entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if self.det().abs() <= 1e-12 * scale * scale {
            return Err(Error::DegenerateMatrix(format!(
                "matrix {entries:?} is not invertible"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseKind {
    #[serde(rename = "Passive")]
    Passive,
    #[serde(rename = "OSP")]
    Osp,
    #[serde(rename = "ISP")]
    Isp,
    #[serde(rename = "VSP")]
    Vsp,
}

/// Which sufficient condition to certify. `a ∈ (0, 1)` only for VSP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassivationCase {
    #[serde(rename = "case")]
    pub kind: CaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

impl PassivationCase {
    pub const PASSIVE: Self = Self {
        kind: CaseKind::Passive,
        a: None,
    };
    pub const OSP: Self = Self {
        kind: CaseKind::Osp,
        a: None,
    };
    pub const ISP: Self = Self {
        kind: CaseKind::Isp,
        a: None,
    };

    pub fn vsp(a: f64) -> Self {
        Self {
            kind: CaseKind::Vsp,
            a: Some(a),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.a) {
            (CaseKind::Vsp, None) => Err(Error::Parameter("VSP case requires `a`".into())),
            (CaseKind::Vsp, Some(a)) if !(a > 0.0 && a < 1.0) => {
                Err(Error::Parameter(format!("VSP requires 0 < a < 1, got {a}")))
            }
            (CaseKind::Vsp, Some(_)) => Ok(()),
            (_, Some(_)) => Err(Error::Parameter(format!(
                "`a` is only meaningful for VSP, got it for {:?}",
                self.kind
            ))),
            (_, None) => Ok(()),
        }
    }
}

/// A matrix with the case it is meant to certify, as stored in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    #[serde(flatten)]
    pub matrix: PassivationMatrix,
    #[serde(flatten)]
    pub case: PassivationCase,
}

/// One inequality of a sufficient condition, as `lhs − rhs`, with its kind.
#[derive(Debug, Clone, Copy)]
enum Constraint {
    /// `value > 0`
    Strict(f64),
    /// `value ≥ 0`
    NonStrict(f64),
    /// `lhs = rhs`
    Equal(f64, f64),
}

impl Constraint {
    fn holds(self) -> bool {
        match self {
            Constraint::Strict(v) => v > STRICT_TOL,
            Constraint::NonStrict(v) => v >= -STRICT_TOL,
            Constraint::Equal(a, b) => (a - b).abs() <= EQUALITY_RTOL * a.abs().max(b.abs()).max(1.0),
        }
    }

    /// Hinge magnitude of the violation; zero when satisfied or on the boundary.
    fn violation(self) -> f64 {
        match self {
            Constraint::Strict(v) | Constraint::NonStrict(v) => (-v).max(0.0),
            Constraint::Equal(a, b) => (a - b).abs(),
        }
    }
}

fn constraints(m: &PassivationMatrix, gamma: f64, case: PassivationCase) -> Result<Vec<Constraint>> {
    case.validate()?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!("gain must be positive, got {gamma}")));
    }
    use Constraint::*;
    let PassivationMatrix { m11, m12, m21, m22 } = *m;
    Ok(match case.kind {
        CaseKind::Passive => vec![
            Equal(m11, m21),
            Equal(m22, -m12),
            NonStrict(m11 - m22 * gamma),
            Strict(m22 * gamma),
        ],
        CaseKind::Osp => vec![
            Strict(m11 * m22 - m12 * m21),
            Strict(m12 * m21),
            NonStrict(m21 - m22 * gamma),
            Strict(m22 * gamma),
        ],
        CaseKind::Isp => vec![
            Strict(m12 * m21 - m11 * m22),
            Strict(m11 * m22),
            NonStrict(m11 - m12 * gamma),
            Strict(m12 * gamma),
        ],
        CaseKind::Vsp => {
            let a = case.a.expect("validated");
            let bound = m22 * gamma / (1.0 - a).sqrt();
            vec![Strict(m11), Equal(m12, 0.0), NonStrict(m21 - bound), Strict(bound)]
        }
    })
}

/// Evaluates the sufficient condition for `case` against a system of L2 gain
/// `gamma`.
pub fn check_case(m: &PassivationMatrix, gamma: f64, case: PassivationCase) -> Result<bool> {
    Ok(constraints(m, gamma, case)?.into_iter().all(Constraint::holds))
}

/// Sum of hinge violations of the case's inequalities (zero when they hold).
pub fn constraint_violation(m: &PassivationMatrix, gamma: f64, case: PassivationCase) -> Result<f64> {
    Ok(constraints(m, gamma, case)?
        .into_iter()
        .map(Constraint::violation)
        .sum())
}

/// Passivity levels of `Σ0` guaranteed by the case, as IF-OFP(ε, δ).
pub fn achieved_levels(m: &PassivationMatrix, case: PassivationCase) -> Result<SupplyRateSpec> {
    case.validate()?;
    let ratio = |n: f64, d: f64, what: &str| {
        if d == 0.0 {
            Err(Error::DegenerateMatrix(format!("{what} is zero")))
        } else {
            Ok(n / d)
        }
    };
    let PassivationMatrix { m11, m12, m21, m22 } = *m;
    Ok(match case.kind {
        CaseKind::Passive => SupplyRateSpec::PASSIVE,
        CaseKind::Osp => {
            SupplyRateSpec::ofp(0.5 * (ratio(m11, m21, "m21")? + ratio(m12, m22, "m22")?))
        }
        CaseKind::Isp => {
            SupplyRateSpec::ifp(0.5 * (ratio(m21, m11, "m11")? + ratio(m22, m12, "m12")?))
        }
        CaseKind::Vsp => {
            let a = case.a.expect("validated");
            SupplyRateSpec::new(0.5 * a * ratio(m21, m11, "m11")?, 0.5 * ratio(m11, m21, "m21")?)
        }
    })
}

/// Swept L2 gain with [`GAMMA_SAFETY`] applied.
pub fn certified_gain<G: FrequencyResponse + ?Sized>(sys: &G, grid: &FrequencyGrid) -> Result<f64> {
    Ok(l2_gain(sys, grid)?.value * GAMMA_SAFETY)
}

/// Runtime realisation of `Σ0` around a stepped inner system.
#[derive(Debug, Clone)]
pub struct WrappedSystem<S> {
    inner: S,
    matrix: PassivationMatrix,
    last_inner_input: f64,
    last_inner_output: f64,
}

impl<S: StepSystem> WrappedSystem<S> {
    pub fn new(inner: S, matrix: PassivationMatrix) -> Self {
        Self {
            inner,
            matrix,
            last_inner_input: 0.0,
            last_inner_output: 0.0,
        }
    }

    pub fn matrix(&self) -> PassivationMatrix {
        self.matrix
    }

    /// Swaps in new parameters between steps; the inner state is kept.
    pub fn set_matrix(&mut self, matrix: PassivationMatrix) {
        self.matrix = matrix;
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut S {
        &mut self.inner
    }

    /// Inner input `u` and output `y` of the most recent step.
    pub fn last_inner(&self) -> (f64, f64) {
        (self.last_inner_input, self.last_inner_output)
    }

    /// One step of `Σ0`: returns `y0` for the external input `u0`.
    pub fn transform_step(&mut self, u0: f64, dt: f64) -> Result<f64> {
        let PassivationMatrix { m11, m12, m21, m22 } = self.matrix;
        if m11 == 0.0 {
            return Err(Error::Wiring("m11 = 0 leaves the inner input unreachable".into()));
        }
        let (free, feedthrough) = self.inner.output_map(dt);
        let loop_gain = m12 * feedthrough / m11;
        if loop_gain.abs() >= 1.0 {
            log::warn!("algebraic loop gain |m12·d/m11| = {} is not a contraction", loop_gain.abs());
        }
        let den = m11 + m12 * feedthrough;
        if den.abs() <= 1e-12 * m11.abs() {
            return Err(Error::Wiring(format!(
                "algebraic loop is singular: m11 + m12·d = {den}"
            )));
        }
        let u = (u0 - m12 * free) / den;
        let y = self.inner.step(u, dt);
        self.last_inner_input = u;
        self.last_inner_output = y;
        Ok(m21 * u + m22 * y)
    }
}

/// Frequency response of `Σ0`:
/// `G0(jω) = (m21 + m22·G(jω)) / (m11 + m12·G(jω))`.
#[derive(Debug, Clone, Copy)]
pub struct TransformedSystem<'a, G: ?Sized> {
    inner: &'a G,
    matrix: PassivationMatrix,
}

pub fn transformed_frequency_system<G: FrequencyResponse + ?Sized>(
    inner: &G,
    matrix: PassivationMatrix,
) -> TransformedSystem<'_, G> {
    TransformedSystem { inner, matrix }
}

impl<G: FrequencyResponse + ?Sized> FrequencyResponse for TransformedSystem<'_, G> {
    fn response(&self, omega: f64) -> Result<Complex64> {
        let g = self.inner.response(omega)?;
        let PassivationMatrix { m11, m12, m21, m22 } = self.matrix;
        let den = m11 + m12 * g;
        let scale = m11.abs().max((m12 * g).norm()).max(f64::MIN_POSITIVE);
        if den.norm() <= 1e-12 * scale {
            return Err(Error::SingularFrequency { omega });
        }
        Ok((m21 + m22 * g) / den)
    }

    /// Stable inner system plus the small-gain condition `|m12|·γ < |m11|`
    /// on the loop that maps `u0` to `u`. This is sufficient, not necessary.
    fn ensure_stable(&self) -> Result<()> {
        self.inner.ensure_stable()?;
        let PassivationMatrix { m11, m12, .. } = self.matrix;
        if m12 == 0.0 {
            return Ok(());
        }
        let gamma = l2_gain(self.inner, &FrequencyGrid::default())?.value;
        if (m12 * gamma).abs() < m11.abs() {
            Ok(())
        } else {
            Err(Error::Unstable(format!(
                "cannot certify the inner loop: |m12|·γ = {} ≥ |m11| = {}",
                (m12 * gamma).abs(),
                m11.abs()
            )))
        }
    }
}
