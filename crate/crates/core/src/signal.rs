//! Uniformly sampled signals and the energy functionals built on them.
//!
//! All integrals use the trapezoidal rule on the sample grid. A trace
//! truncated at `T` simply ends at the last sample not later than `T`, which is
//! all the truncated inner products ever read.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slack used when mapping a time onto the sample grid.
const GRID_EPS: f64 = 1e-9;

/// A uniformly sampled, possibly vector-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    t0: f64,
    dt: f64,
    dim: usize,
    data: Vec<f64>,
}

/// Levels of the supply rate `w(u, y) = uᵀy − δ·yᵀy − ε·uᵀu`.
///
/// Negative levels express a shortage of passivity. `delta = 0` gives an IFP
/// level, `epsilon = 0` an OFP level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SupplyRateSpec {
    pub epsilon: f64,
    pub delta: f64,
}

impl SupplyRateSpec {
    pub const PASSIVE: SupplyRateSpec = SupplyRateSpec {
        epsilon: 0.0,
        delta: 0.0,
    };

    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self { epsilon, delta }
    }

    /// Input feed-forward level only.
    pub fn ifp(nu: f64) -> Self {
        Self::new(nu, 0.0)
    }

    /// Output feedback level only.
    pub fn ofp(rho: f64) -> Self {
        Self::new(0.0, rho)
    }

    pub fn rate(&self, uy: f64, uu: f64, yy: f64) -> f64 {
        uy - self.delta * yy - self.epsilon * uu
    }
}

impl SignalTrace {
    /// Builds a trace from per-sample vectors. Every sample must have the same
    /// non-zero dimension.
    pub fn new(t0: f64, dt: f64, samples: Vec<Vec<f64>>) -> Result<Self> {
        check_step(t0, dt)?;
        let dim = samples.first().map(Vec::len).unwrap_or(1);
        if dim == 0 {
            return Err(Error::Shape("samples must have dimension >= 1".into()));
        }
        let mut data = Vec::with_capacity(samples.len() * dim);
        for (k, s) in samples.into_iter().enumerate() {
            if s.len() != dim {
                return Err(Error::Shape(format!(
                    "sample {k} has dimension {}, expected {dim}",
                    s.len()
                )));
            }
            data.extend(s);
        }
        Ok(Self { t0, dt, dim, data })
    }

    pub fn scalar(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        check_step(t0, dt)?;
        Ok(Self {
            t0,
            dt,
            dim: 1,
            data: values,
        })
    }

    /// Samples `f` at `t0 + k·dt` for `k = 0..n`.
    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::scalar(t0, dt, (0..n).map(|k| f(t0 + k as f64 * dt)).collect())
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Time of the last sample; equal to `t0` for an empty trace.
    pub fn end_time(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// One channel across all samples.
    pub fn channel(&self, ch: usize) -> Vec<f64> {
        self.samples().map(|s| s[ch]).collect()
    }

    /// Index of the last sample at or before `t`.
    fn index_at(&self, t: f64) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::Domain("empty trace".into()));
        }
        if t < self.t0 - GRID_EPS * self.dt {
            return Err(Error::Domain(format!(
                "time {t} precedes trace start {}",
                self.t0
            )));
        }
        let k = ((t - self.t0) / self.dt + GRID_EPS).floor() as usize;
        if k >= self.len() {
            if t <= self.end_time() + self.dt * 1e-6 {
                return Ok(self.len() - 1);
            }
            return Err(Error::Domain(format!(
                "time {t} beyond trace end {}",
                self.end_time()
            )));
        }
        Ok(k)
    }

    /// The truncation `x_T`: samples at times `≤ T`. Times past the end of
    /// the trace return the whole trace.
    pub fn truncate(&self, t: f64) -> Result<SignalTrace> {
        if t < self.t0 {
            return Err(Error::Domain(format!(
                "truncation time {t} precedes trace start {}",
                self.t0
            )));
        }
        let n = if self.is_empty() {
            0
        } else {
            (((t - self.t0) / self.dt + GRID_EPS).floor() as usize + 1).min(self.len())
        };
        Ok(SignalTrace {
            t0: self.t0,
            dt: self.dt,
            dim: self.dim,
            data: self.data[..n * self.dim].to_vec(),
        })
    }

    fn check_aligned(&self, other: &SignalTrace) -> Result<()> {
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        if !rel(self.dt, other.dt) || (self.t0 - other.t0).abs() > GRID_EPS * self.dt {
            return Err(Error::Shape(format!(
                "grids differ: (t0={}, dt={}) vs (t0={}, dt={})",
                self.t0, self.dt, other.t0, other.dt
            )));
        }
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "dimensions differ: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    /// Writes the trace as CSV with header `t,<ch0>,<ch1>,...`.
    pub fn write_csv<W: Write>(&self, out: W, channels: &[&str]) -> Result<()> {
        if channels.len() != self.dim {
            return Err(Error::Shape(format!(
                "{} channel names for a {}-dimensional trace",
                channels.len(),
                self.dim
            )));
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t"];
        header.extend_from_slice(channels);
        w.write_record(&header)?;
        for (k, s) in self.samples().enumerate() {
            let mut row = Vec::with_capacity(self.dim + 1);
            row.push(self.time(k).to_string());
            row.extend(s.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, channels: &[&str]) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), channels)
    }

    /// Reads a trace written by [`SignalTrace::write_csv`], returning the
    /// channel names alongside it. Sample times must be uniformly spaced.
    pub fn read_csv<R: Read>(input: R) -> Result<(SignalTrace, Vec<String>)> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("t") || header.len() < 2 {
            return Err(Error::Shape("expected header `t,<ch0>,...`".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Shape(format!("bad number {s:?}: {e}")))
            };
            times.push(parse(&rec[0])?);
            samples.push(rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?);
        }
        if times.len() < 2 {
            return Err(Error::Shape("need at least two samples to infer dt".into()));
        }
        let t0 = times[0];
        let dt = times[1] - t0;
        for (k, &t) in times.iter().enumerate() {
            let expected = t0 + k as f64 * dt;
            if (t - expected).abs() > 1e-6 * dt {
                return Err(Error::Shape(format!(
                    "non-uniform sampling at row {k}: t={t}, expected {expected}"
                )));
            }
        }
        Ok((SignalTrace::new(t0, dt, samples)?, names))
    }
}

fn check_step(t0: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
        return Err(Error::Domain(format!("invalid grid t0={t0}, dt={dt}")));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trapezoidal `∫_{t0}^{T} yᵀ(t) x(t) dt`.
pub fn inner_product(x: &SignalTrace, y: &SignalTrace, t: f64) -> Result<f64> {
    x.check_aligned(y)?;
    let n = x.index_at(t)?.min(y.index_at(t)?);
    let mut acc = 0.0;
    for k in 0..n {
        acc += 0.5 * (dot(x.sample(k), y.sample(k)) + dot(x.sample(k + 1), y.sample(k + 1)));
    }
    Ok(acc * x.dt)
}

/// Truncated energy `‖x‖²_T`.
pub fn l2_norm_sq(x: &SignalTrace, t: f64) -> Result<f64> {
    inner_product(x, x, t)
}

/// Running trapezoidal integral of the supply rate, one entry per sample.
pub fn cumulative_supply(u: &SignalTrace, y: &SignalTrace, spec: SupplyRateSpec) -> Result<Vec<f64>> {
    u.check_aligned(y)?;
    let n = u.len().min(y.len());
    let rate = |k: usize| {
        let (us, ys) = (u.sample(k), y.sample(k));
        spec.rate(dot(us, ys), dot(us, us), dot(ys, ys))
    };
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut prev = if n > 0 { rate(0) } else { 0.0 };
    if n > 0 {
        out.push(0.0);
    }
    for k in 1..n {
        let cur = rate(k);
        acc += 0.5 * (prev + cur) * u.dt;
        out.push(acc);
        prev = cur;
    }
    Ok(out)
}

/// Minimum over the truncation times in `grid` of
/// `⟨u, y⟩_T − δ‖y‖²_T − ε‖u‖²_T`.
///
/// A nonnegative result certifies IF-OFP(ε, δ) on the recorded run.
pub fn dissipation_margin(
    u: &SignalTrace,
    y: &SignalTrace,
    spec: SupplyRateSpec,
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Domain("empty truncation grid".into()));
    }
    let cum = cumulative_supply(u, y, spec)?;
    let mut min = f64::INFINITY;
    for &t in grid {
        let k = u.index_at(t)?.min(y.index_at(t)?);
        min = min.min(cum[k]);
    }
    Ok(min)
}

/// [`dissipation_margin`] over every sample time of the shorter trace.
pub fn dissipation_margin_all(u: &SignalTrace, y: &SignalTrace, spec: SupplyRateSpec) -> Result<f64> {
    let cum = cumulative_supply(u, y, spec)?;
    cum.into_iter()
        .reduce(f64::min)
        .ok_or_else(|| Error::Domain("empty traces".into()))
}
