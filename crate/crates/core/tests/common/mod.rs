#![allow(dead_code)]

use passivate::lti::{LtiSimulator, RationalDelaySystem};
use passivate::passivation::{CaseKind, PassivationCase, PassivationMatrix, WrappedSystem};
use passivate::signal::SignalTrace;
use rand::Rng;

/// Draws a matrix built to satisfy the sufficient condition of `case` for a
/// system of gain `gamma`. Callers still run `check_case` on the result.
pub fn matrix_for_case(rng: &mut impl Rng, case: PassivationCase, gamma: f64) -> PassivationMatrix {
    let pos = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| rng.gen_range(lo..hi);
    match case.kind {
        CaseKind::Passive => {
            let m22 = pos(rng, 0.1, 5.0);
            let m11 = m22 * gamma * pos(rng, 1.01, 4.0);
            PassivationMatrix {
                m11,
                m12: -m22,
                m21: m11,
                m22,
            }
        }
        CaseKind::Osp => {
            let m22 = pos(rng, 0.1, 5.0);
            let m21 = m22 * gamma * pos(rng, 1.01, 4.0);
            let m11 = pos(rng, 0.1, 10.0);
            let m12 = pos(rng, 0.05, 0.95) * m11 * m22 / m21;
            PassivationMatrix { m11, m12, m21, m22 }
        }
        CaseKind::Isp => {
            let m12 = pos(rng, 0.1, 5.0);
            let m11 = m12 * gamma * pos(rng, 1.01, 4.0);
            let m22 = pos(rng, 0.1, 5.0);
            let m21 = m11 * m22 / m12 * pos(rng, 1.05, 4.0);
            PassivationMatrix { m11, m12, m21, m22 }
        }
        CaseKind::Vsp => {
            let a = case.a.expect("vsp carries a");
            let m11 = pos(rng, 0.1, 10.0);
            let m22 = pos(rng, 0.1, 5.0);
            let m21 = m22 * gamma / (1.0 - a).sqrt() * pos(rng, 1.01, 4.0);
            PassivationMatrix {
                m11,
                m12: 0.0,
                m21,
                m22,
            }
        }
    }
}

/// Sum of `count` sinusoids with frequencies in `[w_lo, w_hi]` rad/s and
/// random phases, sampled at `dt` for `n` samples.
pub fn band_limited(rng: &mut impl Rng, count: usize, w_lo: f64, w_hi: f64, dt: f64, n: usize) -> Vec<f64> {
    let tones: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.gen_range(0.2..1.0),
                rng.gen_range(w_lo..w_hi),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            tones.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum()
        })
        .collect()
}

/// Runs `Σ0` around a simulated inner system and returns `(u0, y0)`.
pub fn wrapped_traces(
    sys: &RationalDelaySystem,
    m: PassivationMatrix,
    u0: &[f64],
    dt: f64,
) -> (SignalTrace, SignalTrace) {
    let mut w = WrappedSystem::new(LtiSimulator::new(sys), m);
    let y0: Vec<f64> = u0.iter().map(|&u| w.transform_step(u, dt).unwrap()).collect();
    (
        SignalTrace::scalar(0.0, dt, u0.to_vec()).unwrap(),
        SignalTrace::scalar(0.0, dt, y0).unwrap(),
    )
}

/// Single-channel extremum seeking on `J = J'' /2·(θ − θ*)²`; returns the
/// estimate at every step.
pub fn es_on_quadratic(k: f64, a: f64, omega: f64, j2: f64, theta_star: f64, theta0: f64, dt: f64, horizon: f64) -> Vec<f64> {
    use passivate::extremum_seeking::{ChannelConfig, EsConfig, EsLoopState};
    let mut es = EsLoopState::new(&EsConfig {
        channels: vec![ChannelConfig { a, omega, theta0 }],
        k,
        omega_h: 3.0,
        omega_l: 1.0,
        maximize: false,
    })
    .unwrap();
    let n = (horizon / dt).round() as usize;
    let mut probe = es.probe();
    let mut out = Vec::with_capacity(n + 1);
    out.push(es.estimates()[0]);
    for _ in 0..n {
        let j = 0.5 * j2 * (probe[0] - theta_star).powi(2);
        probe = es.es_step(j, dt).unwrap();
        out.push(es.estimates()[0]);
    }
    out
}

/// Least-squares slope of `ln|θ̂ − θ*|` while the error falls from `hi` to
/// `lo`, returned as a positive decay rate.
pub fn fitted_decay_rate(theta: &[f64], theta_star: f64, dt: f64, hi: f64, lo: f64) -> f64 {
    let pts: Vec<(f64, f64)> = theta
        .iter()
        .enumerate()
        .map(|(k, th)| (k as f64 * dt, (th - theta_star).abs()))
        .skip_while(|(_, e)| *e > hi)
        .take_while(|(_, e)| *e > lo)
        .map(|(t, e)| (t, e.ln()))
        .collect();
    assert!(pts.len() > 10, "no decay window between {hi} and {lo}");
    let n = pts.len() as f64;
    let (mt, me) = pts.iter().fold((0.0, 0.0), |(a, b), (t, e)| (a + t / n, b + e / n));
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, e)| (a + (t - mt) * (e - me), b + (t - mt).powi(2)));
    -num / den
}
