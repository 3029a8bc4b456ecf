//! Adaptive cruise control testbed: a longitudinal vehicle surrogate, the
//! lead-vehicle speed profile, delayed PID controllers and the
//! velocity/spacing supervisor.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::lti::{l2_gain, FrequencyGrid, RationalDelaySystem};
use crate::passivation::StepSystem;
use crate::signal::SignalTrace;
use crate::{Error, Result};

const TIME_EPS: f64 = 1e-9;

pub fn kmh_to_ms(v: f64) -> f64 {
    v / 3.6
}

pub fn ms_to_kmh(v: f64) -> f64 {
    v * 3.6
}

/// The fourth piece of the published profile drops from 85 to 30 km/h at
/// `2T/3`; `Continuous` ramps 85 → 55 km/h over `[2T/3, 5T/6]` instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeadVariant {
    AsWritten,
    #[default]
    Continuous,
}

/// Lead-vehicle speed in km/h on a horizon `T`. Breakpoint `2T/3` belongs
/// to the fourth piece.
pub fn lead_velocity(t: f64, horizon: f64, variant: LeadVariant) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    let tt = horizon;
    let v = if t <= tt / 3.0 {
        60.0
    } else if t <= tt / 2.0 {
        60.0 + 150.0 / tt * (t - tt / 3.0)
    } else if t < 2.0 * tt / 3.0 {
        85.0
    } else if t <= 5.0 * tt / 6.0 {
        match variant {
            LeadVariant::AsWritten => 55.0 + 150.0 / tt * (t - 5.0 * tt / 6.0),
            LeadVariant::Continuous => 85.0 - 180.0 / tt * (t - 2.0 * tt / 3.0),
        }
    } else {
        55.0
    };
    Ok(v)
}

/// Surrogate longitudinal dynamics: first-order actuator lag with asymmetric
/// acceleration bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub lag_tau: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            lag_tau: 0.5,
            a_min: -8.0,
            a_max: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

/// One explicit-Euler step. Position uses the trapezoid of the old and new
/// speed, so `x` is exactly the trapezoidal integral of the recorded `v`.
pub fn vehicle_step(s: VehicleState, a_cmd: f64, dt: f64, p: &VehicleParams) -> VehicleState {
    let v = (s.v + s.a * dt).max(0.0);
    let a = (s.a + dt / p.lag_tau * (a_cmd - s.a)).clamp(p.a_min, p.a_max);
    let x = s.x + 0.5 * (s.v + v) * dt;
    VehicleState { x, v, a }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            kp: self.kp * factor,
            ki: self.ki * factor,
            kd: self.kd * factor,
        }
    }
}

/// Controller settings as written in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidConfig {
    pub gains: PidGains,
    /// Integrator leak rate λ in `ki/(s+λ)`.
    pub leak: f64,
    /// Derivative filter constant τ_f in `kd·s/(τ_f s+1)`; zero selects a raw
    /// backward difference.
    pub deriv_tau: f64,
    /// When set, gains are rescaled so the swept L2 gain equals this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_gain: Option<f64>,
}

impl PidConfig {
    pub fn velocity_default() -> Self {
        Self {
            gains: PidGains {
                kp: 0.3,
                ki: 0.05,
                kd: 0.01,
            },
            leak: 0.1,
            deriv_tau: 0.1,
            target_gain: Some(0.5),
        }
    }

    pub fn spacing_default() -> Self {
        Self {
            gains: PidGains {
                kp: 0.5,
                ki: 0.02,
                kd: 0.05,
            },
            leak: 0.1,
            deriv_tau: 0.1,
            target_gain: None,
        }
    }

    /// `kp + ki/(s+λ) + kd·s/(τ_f s+1)`, optionally with dead time.
    pub fn transfer_function(&self, delay: f64) -> Result<RationalDelaySystem> {
        let PidGains { kp, ki, kd } = self.gains;
        let (lam, tf) = (self.leak, self.deriv_tau);
        if !(lam > 0.0 && tf > 0.0) {
            return Err(Error::Parameter(
                "analysis form needs a leaky integrator and a filtered derivative".into(),
            ));
        }
        let num = vec![
            kp * tf + kd,
            kp * (1.0 + lam * tf) + ki * tf + kd * lam,
            kp * lam + ki,
        ];
        let den = vec![tf, 1.0 + lam * tf, lam];
        RationalDelaySystem::new(num, den, delay)
    }

    /// Gains after applying `target_gain`.
    pub fn resolved_gains(&self) -> Result<PidGains> {
        match self.target_gain {
            None => Ok(self.gains),
            Some(target) => {
                let g = l2_gain(&self.transfer_function(0.0)?, &FrequencyGrid::default())?.value;
                Ok(self.gains.scaled(target / g))
            }
        }
    }

    pub fn resolved(&self) -> Result<PidConfig> {
        Ok(PidConfig {
            gains: self.resolved_gains()?,
            target_gain: None,
            ..*self
        })
    }
}

/// PID law followed by a dead-time pipe.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedPid {
    pub gains: PidGains,
    pub leak: f64,
    pub deriv_tau: f64,
    pub integ: f64,
    pub prev_err: f64,
    deriv_state: f64,
    pub delay: f64,
    buffer: VecDeque<(f64, f64)>,
    delivered: f64,
    clock: f64,
}

impl DelayedPid {
    pub fn new(gains: PidGains, delay: f64) -> Self {
        Self {
            gains,
            leak: 0.0,
            deriv_tau: 0.0,
            integ: 0.0,
            prev_err: 0.0,
            deriv_state: 0.0,
            delay,
            buffer: VecDeque::new(),
            delivered: 0.0,
            clock: 0.0,
        }
    }

    /// Uses gains as given; apply [`PidConfig::resolved`] first to honour
    /// `target_gain`.
    pub fn from_config(cfg: &PidConfig, delay: f64) -> Self {
        Self {
            leak: cfg.leak,
            deriv_tau: cfg.deriv_tau,
            ..Self::new(cfg.gains, delay)
        }
    }

    fn raw(&self, err: f64, dt: f64) -> (f64, f64, f64) {
        let integ = self.integ + (err - self.leak * self.integ) * dt;
        let (deriv, filt) = if self.deriv_tau > 0.0 {
            let deriv = (err - self.deriv_state) / self.deriv_tau;
            let alpha = 1.0 - (-dt / self.deriv_tau).exp();
            (deriv, self.deriv_state + alpha * (err - self.deriv_state))
        } else {
            ((err - self.prev_err) / dt, 0.0)
        };
        let PidGains { kp, ki, kd } = self.gains;
        (kp * err + ki * integ + kd * deriv, integ, filt)
    }

    /// Computes the PID command for `err` at time `t`, queues it, and returns
    /// the newest queued command stamped at or before `t − delay` (zero until
    /// the pipe fills).
    pub fn pid_step(&mut self, err: f64, t: f64, dt: f64) -> f64 {
        let (raw, integ, filt) = self.raw(err, dt);
        self.integ = integ;
        self.deriv_state = filt;
        self.prev_err = err;
        self.buffer.push_back((t, raw));
        while let Some(&(stamp, cmd)) = self.buffer.front() {
            if stamp <= t - self.delay + TIME_EPS {
                self.delivered = cmd;
                self.buffer.pop_front();
            } else {
                break;
            }
        }
        self.delivered
    }

    /// Time of the next [`StepSystem::step`].
    pub fn clock(&self) -> f64 {
        self.clock
    }
}

impl StepSystem for DelayedPid {
    fn output_map(&mut self, dt: f64) -> (f64, f64) {
        let t = self.clock;
        if self.delay > TIME_EPS {
            let mut out = self.delivered;
            for &(stamp, cmd) in &self.buffer {
                if stamp <= t - self.delay + TIME_EPS {
                    out = cmd;
                } else {
                    break;
                }
            }
            return (out, 0.0);
        }
        let free = self.raw(0.0, dt).0;
        (free, self.raw(1.0, dt).0 - free)
    }

    fn step(&mut self, u: f64, dt: f64) -> f64 {
        let y = self.pid_step(u, self.clock, dt);
        self.clock += dt;
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Velocity,
    Spacing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pedal {
    Throttle,
    Brake,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccMode {
    pub mode: ControlMode,
    pub command: Pedal,
    pub magnitude: f64,
}

/// Spacing control below the safe distance (strictly), velocity control
/// otherwise; the sign of the selected acceleration picks the pedal.
pub fn acc_supervisor(gap: f64, safe_distance: f64, vel_cmd: f64, spc_cmd: f64) -> AccMode {
    let mode = if gap < safe_distance {
        ControlMode::Spacing
    } else {
        ControlMode::Velocity
    };
    let magnitude = match mode {
        ControlMode::Velocity => vel_cmd,
        ControlMode::Spacing => spc_cmd,
    };
    let command = if magnitude >= 0.0 {
        Pedal::Throttle
    } else {
        Pedal::Brake
    };
    AccMode {
        mode,
        command,
        magnitude,
    }
}

fn abs_error_integral(a: &SignalTrace, b: &SignalTrace, t: f64) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::Shape("cost traces must be scalar".into()));
    }
    if a.len() != b.len() || (a.dt() - b.dt()).abs() > 1e-12 || (a.t0() - b.t0()).abs() > 1e-12 {
        return Err(Error::Shape("cost traces are not aligned".into()));
    }
    let at = a.truncate(t)?;
    let err: Vec<f64> = at
        .samples()
        .zip(b.samples())
        .map(|(x, y)| (x[0] - y[0]).abs())
        .collect();
    Ok(err.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() * a.dt())
}

/// `∫₀ᵀ |v_h − v_des| dt` by the trapezoidal rule.
pub fn tracking_cost(v_h: &SignalTrace, v_des: &SignalTrace, t: f64) -> Result<f64> {
    abs_error_integral(v_h, v_des, t)
}

/// `∫₀ᵀ |x_h − x_des| dt`, with `x_des` the lead position minus the safe
/// distance.
pub fn spacing_cost(x_h: &SignalTrace, x_des: &SignalTrace, t: f64) -> Result<f64> {
    abs_error_integral(x_h, x_des, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lead_profile_examples() {
        let v = |t, var| lead_velocity(t, 120.0, var).unwrap();
        assert_eq!(v(0.0, LeadVariant::AsWritten), 60.0);
        assert!((v(60.0, LeadVariant::Continuous) - 85.0).abs() < 1e-12);
        assert!((v(80.0, LeadVariant::AsWritten) - 30.0).abs() < 1e-12);
        assert!((v(80.0, LeadVariant::Continuous) - 85.0).abs() < 1e-12);
        assert!((v(80.0 - 1e-9, LeadVariant::AsWritten) - 85.0).abs() < 1e-12);
        assert!(lead_velocity(-1.0, 120.0, LeadVariant::Continuous).is_err());
        assert!(lead_velocity(121.0, 120.0, LeadVariant::Continuous).is_err());
        assert!(lead_velocity(0.0, 0.0, LeadVariant::Continuous).is_err());
    }

    #[test]
    fn vehicle_at_rest_stays_at_rest() {
        let p = VehicleParams::default();
        let s = vehicle_step(VehicleState::default(), 0.0, 0.01, &p);
        assert_eq!(s, VehicleState::default());
    }

    #[test]
    fn vehicle_lag_response_matches_closed_form() {
        let p = VehicleParams::default();
        let dt = 1e-4;
        let mut s = VehicleState::default();
        for _ in 0..10_000 {
            s = vehicle_step(s, 1.0, dt, &p);
        }
        let tau = p.lag_tau;
        let v_exact = 1.0 - tau * (1.0 - (-1.0 / tau).exp());
        assert!((s.v - v_exact).abs() < 1e-3, "{} vs {v_exact}", s.v);
        assert!((s.a - (1.0 - (-1.0 / tau).exp())).abs() < 1e-3);
    }

    #[test]
    fn vehicle_acceleration_saturates() {
        let p = VehicleParams::default();
        let mut s = VehicleState {
            x: 0.0,
            v: 30.0,
            a: 0.0,
        };
        for _ in 0..300 {
            s = vehicle_step(s, -20.0, 0.01, &p);
            assert!(s.a >= -8.0);
        }
        assert_eq!(s.a, -8.0);
        for _ in 0..1000 {
            s = vehicle_step(s, -20.0, 0.01, &p);
            assert!(s.v >= 0.0);
        }
    }

    #[test]
    fn proportional_pid_without_delay() {
        let mut c = DelayedPid::new(
            PidGains {
                kp: 0.3,
                ki: 0.0,
                kd: 0.0,
            },
            0.0,
        );
        assert!((c.pid_step(2.0, 0.0, 0.01) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn pid_output_is_zero_until_pipe_fills() {
        let mut c = DelayedPid::new(
            PidGains {
                kp: 1.0,
                ki: 0.5,
                kd: 0.1,
            },
            0.5,
        );
        let dt = 0.01;
        let mut first = None;
        for k in 0..100 {
            let t = k as f64 * dt;
            let y = c.pid_step(1.0, t, dt);
            if t < 0.5 - 1e-9 {
                assert_eq!(y, 0.0);
            } else if first.is_none() && y != 0.0 {
                first = Some(t);
            }
        }
        assert!((first.unwrap() - 0.5).abs() <= dt);
    }

    #[test]
    fn output_map_predicts_step() {
        let cfg = PidConfig::velocity_default();
        for delay in [0.0, 0.3] {
            let mut c = DelayedPid::from_config(&cfg, delay);
            for k in 0..200 {
                let u = (k as f64 * 0.07).sin();
                let (free, d) = c.output_map(0.01);
                let y = c.step(u, 0.01);
                assert!((free + d * u - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pid_transfer_function_matches_parallel_form() {
        let cfg = PidConfig::spacing_default();
        let g = cfg.transfer_function(0.0).unwrap();
        for w in [0.01, 0.3, 2.0, 40.0] {
            let s = num_complex::Complex64::new(0.0, w);
            let PidGains { kp, ki, kd } = cfg.gains;
            let direct = kp + ki / (s + cfg.leak) + kd * s / (cfg.deriv_tau * s + 1.0);
            assert!((g.freq_response(w).unwrap() - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn velocity_gains_are_rescaled_to_target() {
        let cfg = PidConfig::velocity_default().resolved().unwrap();
        let g = l2_gain(&cfg.transfer_function(0.5).unwrap(), &FrequencyGrid::default()).unwrap();
        assert!((g.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn supervisor_examples() {
        let m = acc_supervisor(15.0, 10.0, 0.5, -2.0);
        assert_eq!((m.mode, m.command), (ControlMode::Velocity, Pedal::Throttle));
        let m = acc_supervisor(5.0, 10.0, 0.5, -1.0);
        assert_eq!((m.mode, m.command, m.magnitude), (ControlMode::Spacing, Pedal::Brake, -1.0));
        assert_eq!(acc_supervisor(10.0, 10.0, 0.1, -3.0).mode, ControlMode::Velocity);
    }

    #[test]
    fn cost_examples() {
        let a = SignalTrace::scalar(0.0, 0.1, vec![3.0; 101]).unwrap();
        assert_eq!(tracking_cost(&a, &a, 10.0).unwrap(), 0.0);
        let b = SignalTrace::scalar(0.0, 0.1, vec![2.0; 101]).unwrap();
        assert!((tracking_cost(&a, &b, 10.0).unwrap() - 10.0).abs() < 1e-12);
        let x = SignalTrace::scalar(0.0, 0.1, vec![5.0; 51]).unwrap();
        let xd = SignalTrace::scalar(0.0, 0.1, vec![3.0; 51]).unwrap();
        assert!((spacing_cost(&x, &xd, 5.0).unwrap() - 10.0).abs() < 1e-12);
        let short = SignalTrace::scalar(0.0, 0.1, vec![2.0; 50]).unwrap();
        assert!(matches!(tracking_cost(&a, &short, 5.0), Err(Error::Shape(_))));
    }
}
