//! Frequency-domain analysis of SISO rational systems with dead time.
//!
//! The infimum over all frequencies in the passivity-index definitions is
//! approximated by a logarithmic sweep followed by a golden-section search in
//! `log ω` around the best grid point. Dead time enters exactly as
//! `e^{-jωτ}`; no rational approximation is made.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::passivation::StepSystem;
use crate::signal::SupplyRateSpec;
use crate::{Error, Result};

/// Real parts above `-STABILITY_TOL` count as not strictly stable.
pub const STABILITY_TOL: f64 = 1e-9;

/// `num(s)/den(s) · e^{-τ s}` with coefficients in descending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalDelaySystem {
    num: Vec<f64>,
    den: Vec<f64>,
    #[serde(default)]
    tau: f64,
}

impl RationalDelaySystem {
    pub fn new(num: Vec<f64>, den: Vec<f64>, tau: f64) -> Result<Self> {
        let num = strip_leading_zeros(num);
        let den = strip_leading_zeros(den);
        if den.is_empty() {
            return Err(Error::Parameter("denominator is identically zero".into()));
        }
        if num.len() > den.len() {
            return Err(Error::Parameter(format!(
                "improper system: numerator degree {} exceeds denominator degree {}",
                num.len() - 1,
                den.len() - 1
            )));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::Parameter(format!("dead time must be >= 0, got {tau}")));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::Parameter("non-finite coefficient".into()));
        }
        Ok(Self { num, den, tau })
    }

    pub fn gain(k: f64) -> Self {
        Self {
            num: vec![k],
            den: vec![1.0],
            tau: 0.0,
        }
    }

    /// `b / (s + p)`.
    pub fn first_order(b: f64, p: f64) -> Self {
        Self {
            num: vec![b],
            den: vec![1.0, p],
            tau: 0.0,
        }
    }

    pub fn with_delay(mut self, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::Parameter(format!("dead time must be >= 0, got {tau}")));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Rational part at an arbitrary complex point (no delay factor).
    pub fn rational_at(&self, s: Complex64) -> Option<Complex64> {
        let d = polyval(&self.den, s);
        if d.norm() == 0.0 {
            return None;
        }
        Some(polyval(&self.num, s) / d)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        roots(&self.den)
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.re < -STABILITY_TOL)
    }

    /// `G(jω)`.
    pub fn freq_response(&self, omega: f64) -> Result<Complex64> {
        if !(omega >= 0.0) {
            return Err(Error::Domain(format!("frequency must be >= 0, got {omega}")));
        }
        let s = Complex64::new(0.0, omega);
        let d = polyval(&self.den, s);
        if d.norm() <= f64::EPSILON * coeff_scale(&self.den) {
            return Err(Error::PoleOnAxis { omega });
        }
        let delay = Complex64::from_polar(1.0, -omega * self.tau);
        Ok(polyval(&self.num, s) / d * delay)
    }

    /// Reciprocal system `den/num`, available when the degrees match.
    pub fn inverse(&self) -> Result<Self> {
        if self.tau != 0.0 {
            return Err(Error::Parameter("inverse of a dead-time system is not causal".into()));
        }
        Self::new(self.den.clone(), self.num.clone(), 0.0)
    }
}

fn strip_leading_zeros(mut c: Vec<f64>) -> Vec<f64> {
    let first = c.iter().position(|&x| x != 0.0).unwrap_or(c.len());
    c.drain(..first);
    c
}

fn coeff_scale(c: &[f64]) -> f64 {
    c.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn polyval(c: &[f64], s: Complex64) -> Complex64 {
    c.iter().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * s + a)
}

/// Roots of a polynomial through the eigenvalues of its companion matrix.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let c = strip_leading_zeros(coeffs.to_vec());
    if c.len() < 2 {
        return Vec::new();
    }
    let n = c.len() - 1;
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        companion[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    companion.complex_eigenvalues().iter().copied().collect()
}

/// Anything with a frequency response that can be swept.
pub trait FrequencyResponse {
    fn response(&self, omega: f64) -> Result<Complex64>;

    /// Fails unless the response describes a stable system.
    fn ensure_stable(&self) -> Result<()>;
}

impl FrequencyResponse for RationalDelaySystem {
    fn response(&self, omega: f64) -> Result<Complex64> {
        self.freq_response(omega)
    }

    fn ensure_stable(&self) -> Result<()> {
        let unstable: Vec<_> = self
            .poles()
            .into_iter()
            .filter(|p| p.re >= -STABILITY_TOL)
            .collect();
        if unstable.is_empty() {
            Ok(())
        } else {
            Err(Error::Unstable(format!("poles not in the open left half plane: {unstable:?}")))
        }
    }
}

/// Positive, strictly increasing analysis frequencies in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
    /// Golden-section refinement around the best grid point.
    pub refine: bool,
}

impl Default for FrequencyGrid {
    /// 2000 log-spaced points on `[1e-3, 1e4]` rad/s with refinement.
    fn default() -> Self {
        Self::logspace(1e-3, 1e4, 2000).expect("valid default grid")
    }
}

impl FrequencyGrid {
    pub fn new(omegas: Vec<f64>) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::Domain("empty frequency grid".into()));
        }
        if omegas.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Domain("grid frequencies must be positive and finite".into()));
        }
        if omegas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("grid must be strictly increasing".into()));
        }
        if omegas.len() > 1 && omegas[omegas.len() - 1] / omegas[0] < 1e3 {
            log::debug!("frequency grid spans less than three decades");
        }
        Ok(Self {
            omegas,
            refine: true,
        })
    }

    pub fn logspace(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min > 0.0 && max > min) || n < 2 {
            return Err(Error::Domain(format!("bad log grid [{min}, {max}] x {n}")));
        }
        let (a, b) = (min.ln(), max.ln());
        let step = (b - a) / (n - 1) as f64;
        Self::new((0..n).map(|i| (a + step * i as f64).exp()).collect())
    }

    pub fn without_refinement(mut self) -> Self {
        self.refine = false;
        self
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn describe(&self) -> GridSpec {
        GridSpec {
            min: self.omegas[0],
            max: self.omegas[self.omegas.len() - 1],
            points: self.omegas.len(),
            refine: self.refine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub refine: bool,
}

/// An extremal value over a frequency sweep and where it was attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    pub omega: f64,
}

/// Minimises `f` over the grid, then refines between the neighbours of the
/// best point. Both the grid value and the refined value are candidates, so
/// refinement never makes the result worse.
fn sweep_min(grid: &FrequencyGrid, f: impl Fn(f64) -> Result<f64>) -> Result<Extremum> {
    let w = grid.omegas();
    let mut best = Extremum {
        value: f64::INFINITY,
        omega: w[0],
    };
    let mut best_i = 0;
    for (i, &omega) in w.iter().enumerate() {
        let v = f(omega)?;
        if v < best.value {
            best = Extremum { value: v, omega };
            best_i = i;
        }
    }
    if grid.refine && w.len() > 1 {
        let lo = w[best_i.saturating_sub(1)].ln();
        let hi = w[(best_i + 1).min(w.len() - 1)].ln();
        let refined = golden_min(lo, hi, |x| f(x.exp()))?;
        if refined.value < best.value {
            best = refined;
        }
    }
    Ok(best)
}

fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> Result<f64>) -> Result<Extremum> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let (x, v) = if fc < fd { (c, fc) } else { (d, fd) };
    Ok(Extremum {
        value: v,
        omega: x.exp(),
    })
}

/// IFP index `ν = ½ min_ω λ_min(G + G*)`, which for SISO is `min_ω Re G(jω)`.
pub fn ifp_index<G: FrequencyResponse + ?Sized>(sys: &G, grid: &FrequencyGrid) -> Result<Extremum> {
    sys.ensure_stable()?;
    sweep_min(grid, |w| Ok(sys.response(w)?.re))
}

/// OFP index read off the inverse response: `min_ω Re(1/G(jω))`.
pub fn ofp_index<G: FrequencyResponse + ?Sized>(sys: &G, grid: &FrequencyGrid) -> Result<Extremum> {
    sys.ensure_stable()?;
    sweep_min(grid, |w| {
        let g = sys.response(w)?;
        if g.norm() == 0.0 {
            return Err(Error::ZeroResponse { omega: w });
        }
        Ok(g.inv().re)
    })
}

/// L2 gain `sup_ω |G(jω)|` estimated on the grid.
pub fn l2_gain<G: FrequencyResponse + ?Sized>(sys: &G, grid: &FrequencyGrid) -> Result<Extremum> {
    sys.ensure_stable()?;
    let m = sweep_min(grid, |w| Ok(-sys.response(w)?.norm()))?;
    Ok(Extremum {
        value: -m.value,
        omega: m.omega,
    })
}

/// One point of a Nyquist (or inverse Nyquist) curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NyquistPoint {
    pub omega: f64,
    pub value: Complex64,
}

pub fn nyquist_points<G: FrequencyResponse + ?Sized>(
    sys: &G,
    grid: &FrequencyGrid,
    inverse: bool,
) -> Result<Vec<NyquistPoint>> {
    sys.ensure_stable()?;
    grid.omegas()
        .iter()
        .map(|&omega| {
            let g = sys.response(omega)?;
            let value = if inverse {
                if g.norm() == 0.0 {
                    return Err(Error::ZeroResponse { omega });
                }
                g.inv()
            } else {
                g
            };
            Ok(NyquistPoint { omega, value })
        })
        .collect()
}

/// Writes `omega,re,im` rows.
pub fn write_nyquist_csv<W: Write>(points: &[NyquistPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["omega", "re", "im"])?;
    for p in points {
        w.write_record([p.omega.to_string(), p.value.re.to_string(), p.value.im.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_nyquist_csv(points: &[NyquistPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_nyquist_csv(points, std::io::BufWriter::new(file))
}

/// Summary written by `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub nu: f64,
    pub rho: Option<f64>,
    pub gamma: f64,
    pub argmin_omega: f64,
    pub grid_spec: GridSpec,
}

impl IndexReport {
    /// `rho` is left empty when the response vanishes somewhere on the grid.
    pub fn compute<G: FrequencyResponse + ?Sized>(sys: &G, grid: &FrequencyGrid) -> Result<Self> {
        let nu = ifp_index(sys, grid)?;
        let rho = match ofp_index(sys, grid) {
            Ok(r) => Some(r.value),
            Err(Error::ZeroResponse { .. }) => None,
            Err(e) => return Err(e),
        };
        let gamma = l2_gain(sys, grid)?;
        Ok(Self {
            nu: nu.value,
            rho,
            gamma: gamma.value,
            argmin_omega: nu.omega,
            grid_spec: grid.describe(),
        })
    }
}

/// Feedback interconnection of IF-OFP(ε₁, δ₁) and IF-OFP(ε₂, δ₂) systems is
/// finite-gain stable when `ε₁ + δ₂ > 0` and `ε₂ + δ₁ > 0`.
pub fn check_fgs_interconnection(lv1: SupplyRateSpec, lv2: SupplyRateSpec) -> bool {
    lv1.epsilon + lv2.delta > 0.0 && lv2.epsilon + lv1.delta > 0.0
}

/// Zero-order-hold time-domain realisation of a [`RationalDelaySystem`].
///
/// Dead time is rounded to a whole number of steps.
#[derive(Debug, Clone)]
pub struct LtiSimulator {
    sys: RationalDelaySystem,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: Vec<f64>,
    d: f64,
    dt: f64,
    phi: DMatrix<f64>,
    gamma: Vec<f64>,
    x: Vec<f64>,
    pipe: VecDeque<f64>,
}

impl LtiSimulator {
    pub fn new(sys: &RationalDelaySystem) -> Self {
        let a0 = sys.den[0];
        let n = sys.den.len() - 1;
        let den: Vec<f64> = sys.den.iter().map(|c| c / a0).collect();
        let mut num = vec![0.0; n + 1 - sys.num.len()];
        num.extend(sys.num.iter().map(|c| c / a0));
        let d = num[0];
        let c: Vec<f64> = (1..=n).map(|i| num[i] - d * den[i]).collect();
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            a[(0, j)] = -den[j + 1];
        }
        for i in 1..n {
            a[(i, i - 1)] = 1.0;
        }
        let mut b = DMatrix::zeros(n, 1);
        if n > 0 {
            b[(0, 0)] = 1.0;
        }
        Self {
            sys: sys.clone(),
            a,
            b,
            c,
            d,
            dt: f64::NAN,
            phi: DMatrix::zeros(n, n),
            gamma: vec![0.0; n],
            x: vec![0.0; n],
            pipe: VecDeque::new(),
        }
    }

    pub fn system(&self) -> &RationalDelaySystem {
        &self.sys
    }

    fn discretize(&mut self, dt: f64) {
        if self.dt == dt {
            return;
        }
        let n = self.x.len();
        if n > 0 {
            let mut aug = DMatrix::zeros(n + 1, n + 1);
            aug.view_mut((0, 0), (n, n)).copy_from(&(&self.a * dt));
            aug.view_mut((0, n), (n, 1)).copy_from(&(&self.b * dt));
            let e = aug.exp();
            self.phi = e.view((0, 0), (n, n)).into_owned();
            self.gamma = (0..n).map(|i| e[(i, n)]).collect();
        }
        let steps = (self.sys.tau / dt).round() as usize;
        self.pipe.resize(steps, 0.0);
        self.dt = dt;
    }

    fn state_output(&self) -> f64 {
        self.c.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }
}

impl StepSystem for LtiSimulator {
    fn output_map(&mut self, dt: f64) -> (f64, f64) {
        self.discretize(dt);
        match self.pipe.front() {
            Some(&delayed) => (self.state_output() + self.d * delayed, 0.0),
            None => (self.state_output(), self.d),
        }
    }

    fn step(&mut self, u: f64, dt: f64) -> f64 {
        self.discretize(dt);
        let applied = if self.pipe.is_empty() {
            u
        } else {
            self.pipe.push_back(u);
            self.pipe.pop_front().unwrap_or(0.0)
        };
        let y = self.state_output() + self.d * applied;
        let n = self.x.len();
        let next: Vec<f64> = (0..n)
            .map(|i| {
                (0..n).map(|j| self.phi[(i, j)] * self.x[j]).sum::<f64>() + self.gamma[i] * applied
            })
            .collect();
        self.x = next;
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn freq_response_examples() {
        let g = RationalDelaySystem::first_order(1.0, 1.0);
        assert!(close(g.freq_response(0.0).unwrap(), Complex64::new(1.0, 0.0), 1e-15));
        assert!(close(g.freq_response(1.0).unwrap(), Complex64::new(0.5, -0.5), 1e-15));
        let d = RationalDelaySystem::gain(1.0).with_delay(0.5).unwrap();
        assert!(close(d.freq_response(PI).unwrap(), Complex64::new(0.0, -1.0), 1e-12));
    }

    #[test]
    fn pole_on_axis_is_reported() {
        let osc = RationalDelaySystem::new(vec![1.0], vec![1.0, 0.0, 4.0], 0.0).unwrap();
        assert!(matches!(osc.freq_response(2.0), Err(Error::PoleOnAxis { .. })));
        assert!(matches!(osc.freq_response(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn constructor_rejects_improper_and_zero_den() {
        assert!(RationalDelaySystem::new(vec![1.0, 0.0], vec![1.0], 0.0).is_err());
        assert!(RationalDelaySystem::new(vec![1.0], vec![0.0, 0.0], 0.0).is_err());
        assert!(RationalDelaySystem::new(vec![1.0], vec![1.0], -0.1).is_err());
    }

    #[test]
    fn stability_from_roots() {
        assert!(RationalDelaySystem::first_order(1.0, 2.0).is_stable());
        assert!(!RationalDelaySystem::first_order(1.0, 0.0).is_stable());
        assert!(!RationalDelaySystem::first_order(1.0, -1.0).is_stable());
        let lightly_damped = RationalDelaySystem::new(vec![1.0], vec![1.0, 0.01, 1.0], 0.0).unwrap();
        assert!(lightly_damped.is_stable());
        let mut r = roots(&[1.0, -6.0, 11.0, -6.0]);
        r.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (z, want) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((z.re - want).abs() < 1e-9 && z.im.abs() < 1e-9);
        }
    }

    #[test]
    fn ifp_examples() {
        let grid = FrequencyGrid::default();
        assert!((ifp_index(&RationalDelaySystem::gain(1.0), &grid).unwrap().value - 1.0).abs() < 1e-15);
        let lag = RationalDelaySystem::first_order(1.0, 1.0);
        let nu = ifp_index(&lag, &grid).unwrap().value;
        // Re G = 1/(1+ω²) at the top of the grid.
        assert!(nu >= 0.0 && nu < 1e-7, "{nu}");
        let delayed = lag.clone().with_delay(0.5).unwrap();
        assert!(ifp_index(&delayed, &grid).unwrap().value < 0.0);
        let unstable = RationalDelaySystem::first_order(1.0, -1.0);
        assert!(matches!(ifp_index(&unstable, &grid), Err(Error::Unstable(_))));
    }

    #[test]
    fn ofp_examples() {
        let grid = FrequencyGrid::default();
        assert!((ofp_index(&RationalDelaySystem::gain(1.0), &grid).unwrap().value - 1.0).abs() < 1e-15);
        assert!((ofp_index(&RationalDelaySystem::gain(2.0), &grid).unwrap().value - 0.5).abs() < 1e-15);
        let lag = RationalDelaySystem::first_order(1.0, 1.0);
        assert!((ofp_index(&lag, &grid).unwrap().value - 1.0).abs() < 1e-9);
        assert!(matches!(
            ofp_index(&RationalDelaySystem::gain(0.0), &grid),
            Err(Error::ZeroResponse { .. })
        ));
    }

    #[test]
    fn l2_gain_examples() {
        let grid = FrequencyGrid::default();
        assert!((l2_gain(&RationalDelaySystem::gain(2.0), &grid).unwrap().value - 2.0).abs() < 1e-15);
        let lag = l2_gain(&RationalDelaySystem::first_order(1.0, 1.0), &grid).unwrap();
        assert!((lag.value - 1.0).abs() < 1e-6 && lag.omega <= 1e-3 * 1.01);
        let lead = RationalDelaySystem::new(vec![1.0, 2.0], vec![1.0, 1.0], 0.0).unwrap();
        assert!((l2_gain(&lead, &grid).unwrap().value - 2.0).abs() < 1e-5);
    }

    #[test]
    fn nyquist_examples() {
        let grid = FrequencyGrid::new(vec![0.5, 1.0, 2.0]).unwrap();
        let pts = nyquist_points(&RationalDelaySystem::gain(1.0), &grid, false).unwrap();
        assert!(pts.iter().all(|p| p.value == Complex64::new(1.0, 0.0)));
        let lag = RationalDelaySystem::first_order(1.0, 1.0);
        let pts = nyquist_points(&lag, &grid, false).unwrap();
        assert!(close(pts[1].value, Complex64::new(0.5, -0.5), 1e-15));
        let inv = nyquist_points(&lag, &grid, true).unwrap();
        assert!(close(inv[1].value, Complex64::new(1.0, 1.0), 1e-14));
        let mut buf = Vec::new();
        write_nyquist_csv(&pts, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("omega,re,im\n0.5,"));
    }

    #[test]
    fn fgs_interconnection_examples() {
        let s = SupplyRateSpec::new;
        assert!(check_fgs_interconnection(s(-0.2, -0.1), s(0.5, 0.5)));
        assert!(!check_fgs_interconnection(s(0.0, 0.0), s(0.0, 0.0)));
        assert!(!check_fgs_interconnection(s(1.0, 1.0), s(-2.0, 0.0)));
    }

    #[test]
    fn grid_validation() {
        assert!(FrequencyGrid::new(vec![]).is_err());
        assert!(FrequencyGrid::new(vec![1.0, 1.0]).is_err());
        assert!(FrequencyGrid::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn simulator_step_response_matches_closed_form() {
        // 2/(s+1): y(t) = 2(1 - e^{-t}) under a unit step, exact under ZOH.
        let mut sim = LtiSimulator::new(&RationalDelaySystem::first_order(2.0, 1.0));
        let dt = 0.01;
        let mut y = 0.0;
        for _ in 0..=100 {
            y = sim.step(1.0, dt);
        }
        assert!((y - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn simulator_handles_feedthrough_and_delay() {
        let sys = RationalDelaySystem::new(vec![1.0, 2.0], vec![1.0, 1.0], 0.05).unwrap();
        let mut sim = LtiSimulator::new(&sys);
        let dt = 0.01;
        let (free, d) = sim.output_map(dt);
        assert_eq!((free, d), (0.0, 0.0));
        let out: Vec<f64> = (0..7).map(|_| sim.step(1.0, dt)).collect();
        assert!(out[..5].iter().all(|&v| v == 0.0));
        assert!((out[5] - 1.0).abs() < 1e-12);

        let mut direct = LtiSimulator::new(&sys.clone().with_delay(0.0).unwrap());
        assert_eq!(direct.output_map(dt), (0.0, 1.0));
    }
}
