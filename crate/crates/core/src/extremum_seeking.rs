//! Perturbation-based extremum seeking for one to four parameters.
//!
//! Each parameter `θ_i` is probed with `a_i·sin(ω_i t)`. The measured cost
//! passes a washout `s/(s+ω_h)`, is demodulated by `sin(ω_i t)` in phase with
//! the dither, low-pass filtered by `ω_l/(s+ω_l)` and integrated with gain
//! `k`. Near a minimum of `J(θ) = J* + J''/2·(θ−θ*)²` the averaged estimate
//! error obeys `θ̃' ≈ −k·a·J''/2·θ̃`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Upper bound on `dt·ω` for the largest dither frequency.
pub const MAX_PHASE_STEP: f64 = 0.2;
/// Relative tolerance in the no-sum-resonance test.
pub const DITHER_RTOL: f64 = 1e-6;
pub const MAX_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    LowPass,
    Washout,
}

/// One step of a first-order filter with state equation `ẋ = ω_c(u − x)`,
/// discretised by exact pole mapping. Returns the new state and the output:
/// `x` after the update for the low-pass, `u − x` before it for the washout.
pub fn first_order_filter_step(
    state: f64,
    input: f64,
    cutoff: f64,
    dt: f64,
    kind: FilterKind,
) -> (f64, f64) {
    let pole = (-cutoff * dt).exp();
    let next = pole * state + (1.0 - pole) * input;
    match kind {
        FilterKind::LowPass => (next, next),
        FilterKind::Washout => (next, input - state),
    }
}

/// No dither frequency may equal the sum of two others (a frequency may be
/// paired with itself).
pub fn validate_dither(omegas: &[f64]) -> Result<bool> {
    if omegas.is_empty() || omegas.len() > MAX_CHANNELS {
        return Err(Error::Domain(format!(
            "expected 1 to {MAX_CHANNELS} dither frequencies, got {}",
            omegas.len()
        )));
    }
    for &p in omegas {
        for &q in omegas {
            for &r in omegas {
                if (p + q - r).abs() <= DITHER_RTOL * r.abs() {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Dither and initial estimate for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub a: f64,
    pub omega: f64,
    pub theta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsConfig {
    pub channels: Vec<ChannelConfig>,
    pub k: f64,
    #[serde(default = "default_omega_h")]
    pub omega_h: f64,
    #[serde(default = "default_omega_l")]
    pub omega_l: f64,
    /// Climb instead of descend.
    #[serde(default)]
    pub maximize: bool,
}

fn default_omega_h() -> f64 {
    3.0
}

fn default_omega_l() -> f64 {
    1.0
}

impl EsConfig {
    pub fn omegas(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.omega).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let omegas = self.omegas();
        if !validate_dither(&omegas)? {
            return Err(Error::Config(format!(
                "dither frequencies {omegas:?} contain a sum resonance"
            )));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if !(c.a > 0.0 && c.a.is_finite()) || !(c.omega > 0.0 && c.omega.is_finite()) {
                return Err(Error::Config(format!(
                    "channel {i}: amplitude and frequency must be positive"
                )));
            }
            if !c.theta0.is_finite() {
                return Err(Error::Config(format!("channel {i}: non-finite theta0")));
            }
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("gain k must be positive, got {}", self.k)));
        }
        let slowest = omegas.iter().copied().fold(f64::INFINITY, f64::min);
        if !(self.omega_h > 0.0 && self.omega_h < slowest) {
            return Err(Error::Config(format!(
                "washout cutoff {} must lie in (0, {slowest})",
                self.omega_h
            )));
        }
        if !(self.omega_l > 0.0 && self.omega_l < slowest) {
            return Err(Error::Config(format!(
                "low-pass cutoff {} must lie in (0, {slowest})",
                self.omega_l
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsChannel {
    pub a: f64,
    pub omega: f64,
    pub theta_hat: f64,
    pub lp_state: f64,
}

impl EsChannel {
    fn probe(&self, t: f64) -> f64 {
        self.theta_hat + self.a * (self.omega * t).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsLoopState {
    pub channels: Vec<EsChannel>,
    pub k: f64,
    pub omega_h: f64,
    pub omega_l: f64,
    pub maximize: bool,
    /// Washout state, shared since every channel sees the same cost.
    pub hp_state: f64,
    pub t: f64,
}

impl EsLoopState {
    pub fn new(config: &EsConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            channels: config
                .channels
                .iter()
                .map(|c| EsChannel {
                    a: c.a,
                    omega: c.omega,
                    theta_hat: c.theta0,
                    lp_state: 0.0,
                })
                .collect(),
            k: config.k,
            omega_h: config.omega_h,
            omega_l: config.omega_l,
            maximize: config.maximize,
            hp_state: 0.0,
            t: 0.0,
        })
    }

    /// Parameters currently applied to the plant: `θ̂_i + a_i·sin(ω_i t)`.
    pub fn probe(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.probe(self.t)).collect()
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.theta_hat).collect()
    }

    /// Consumes the cost measured under the current probe, advances by `dt`
    /// and returns the next probe. A non-finite measurement leaves the state
    /// untouched.
    pub fn es_step(&mut self, j_meas: f64, dt: f64) -> Result<Vec<f64>> {
        if !j_meas.is_finite() {
            return Err(Error::Measurement(j_meas));
        }
        let fastest = self.channels.iter().map(|c| c.omega).fold(0.0, f64::max);
        if !(dt > 0.0) || dt * fastest >= MAX_PHASE_STEP {
            return Err(Error::Domain(format!(
                "step {dt} s undersamples the {fastest} rad/s dither"
            )));
        }
        let (hp, h) = first_order_filter_step(self.hp_state, j_meas, self.omega_h, dt, FilterKind::Washout);
        self.hp_state = hp;
        let sign = if self.maximize { 1.0 } else { -1.0 };
        for ch in &mut self.channels {
            let psi = h * (ch.omega * self.t).sin();
            let (lp, g) = first_order_filter_step(ch.lp_state, psi, self.omega_l, dt, FilterKind::LowPass);
            ch.lp_state = lp;
            ch.theta_hat += sign * self.k * g * dt;
        }
        self.t += dt;
        Ok(self.probe())
    }
}
