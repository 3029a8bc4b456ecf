//! Scenario-driven co-simulation: the adaptive cruise control loop with
//! passivated controllers whose transformation parameters are tuned online by
//! extremum seeking.
//!
//! A run is fully determined by its [`Scenario`]; the only random draws are
//! the controller dead times, taken from a ChaCha8 generator seeded with the
//! scenario seed (velocity controller first, then spacing) and logged in the
//! [`RunRecord`].

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::extremum_seeking::{EsConfig, EsLoopState, MAX_PHASE_STEP};
use crate::lti::{ifp_index, nyquist_points, save_nyquist_csv, FrequencyGrid, RationalDelaySystem};
use crate::passivation::{
    achieved_levels, certified_gain, check_case, constraint_violation, transformed_frequency_system,
    MatrixConfig, PassivationCase, PassivationMatrix, WrappedSystem,
};
use crate::plant::{
    acc_supervisor, kmh_to_ms, lead_velocity, spacing_cost, tracking_cost, vehicle_step, ControlMode,
    DelayedPid, LeadVariant, Pedal, PidConfig, VehicleParams, VehicleState,
};
use crate::signal::{cumulative_supply, SignalTrace, SupplyRateSpec};
use crate::{Error, Result};

/// Default hinge weight, about ten times the scale of the per-step cost.
pub const DEFAULT_PENALTY_WEIGHT: f64 = 10.0;

fn default_dt() -> f64 {
    0.01
}

fn default_safe_distance() -> f64 {
    10.0
}

fn default_delay_range() -> [f64; 2] {
    [0.4, 0.6]
}

fn default_penalty() -> f64 {
    DEFAULT_PENALTY_WEIGHT
}

fn default_initial_gap() -> f64 {
    40.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesiredSpeed {
    Constant {
        v_des_kmh: f64,
    },
    Sinusoid {
        mean_kmh: f64,
        amplitude_kmh: f64,
        period_s: f64,
    },
    /// Piecewise-constant setpoints `(from_s, v_kmh)`, sorted by time.
    Steps {
        steps: Vec<(f64, f64)>,
    },
}

impl DesiredSpeed {
    /// Desired speed in m/s.
    pub fn at(&self, t: f64) -> f64 {
        let kmh = match self {
            DesiredSpeed::Constant { v_des_kmh } => *v_des_kmh,
            DesiredSpeed::Sinusoid {
                mean_kmh,
                amplitude_kmh,
                period_s,
            } => mean_kmh + amplitude_kmh * (2.0 * std::f64::consts::PI * t / period_s).sin(),
            DesiredSpeed::Steps { steps } => steps
                .iter()
                .take_while(|(from, _)| *from <= t)
                .last()
                .or(steps.first())
                .map(|s| s.1)
                .unwrap_or(0.0),
        };
        kmh_to_ms(kmh)
    }

    fn validate(&self) -> Result<()> {
        match self {
            DesiredSpeed::Sinusoid { period_s, .. } if !(*period_s > 0.0) => {
                Err(Error::Config("sinusoid period must be positive".into()))
            }
            DesiredSpeed::Steps { steps } if steps.is_empty() => {
                Err(Error::Config("step profile needs at least one setpoint".into()))
            }
            DesiredSpeed::Steps { steps } if steps.windows(2).any(|w| w[1].0 < w[0].0) => {
                Err(Error::Config("step profile must be sorted by time".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadConfig {
    #[serde(default)]
    pub profile: LeadVariant,
    #[serde(default = "default_initial_gap")]
    pub initial_gap_m: f64,
}

/// How a controller is wrapped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Passivation {
    /// The bare delayed controller.
    #[default]
    Off,
    Fixed {
        #[serde(flatten)]
        matrix: MatrixConfig,
    },
    /// Four extremum-seeking channels over `[m11, m12, m21, m22]`.
    Tuned {
        #[serde(flatten)]
        case: PassivationCase,
        es: EsConfig,
    },
}

impl Passivation {
    fn case(&self) -> Option<PassivationCase> {
        match self {
            Passivation::Off => None,
            Passivation::Fixed { matrix } => Some(matrix.case),
            Passivation::Tuned { case, .. } => Some(*case),
        }
    }

    fn initial_matrix(&self) -> PassivationMatrix {
        match self {
            Passivation::Off => PassivationMatrix::IDENTITY,
            Passivation::Fixed { matrix } => matrix.matrix,
            Passivation::Tuned { es, .. } => {
                let t: Vec<f64> = es.channels.iter().map(|c| c.theta0).collect();
                PassivationMatrix {
                    m11: t[0],
                    m12: t[1],
                    m21: t[2],
                    m22: t[3],
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerSetup {
    /// Falls back to the role's default gains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pid: Option<PidConfig>,
    #[serde(default)]
    pub passivation: Passivation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerRole {
    Velocity,
    Spacing,
}

impl fmt::Display for ControllerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerRole::Velocity => "velocity",
            ControllerRole::Spacing => "spacing",
        })
    }
}

impl ControllerRole {
    fn default_pid(self) -> PidConfig {
        match self {
            ControllerRole::Velocity => PidConfig::velocity_default(),
            ControllerRole::Spacing => PidConfig::spacing_default(),
        }
    }
}

/// An experiment definition. Speeds are in km/h, everything else SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub horizon_s: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub v_init_kmh: f64,
    pub desired_speed: DesiredSpeed,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead: Option<LeadConfig>,
    #[serde(default = "default_safe_distance")]
    pub safe_distance_m: f64,
    #[serde(default = "default_delay_range")]
    pub delay_range_s: [f64; 2],
    pub seed: u64,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub velocity: ControllerSetup,
    /// Used only when a lead vehicle is present.
    #[serde(default)]
    pub spacing: ControllerSetup,
    #[serde(default = "default_penalty")]
    pub penalty_weight: f64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon_s / self.dt_s).round() as usize
    }

    fn roles(&self) -> Vec<ControllerRole> {
        if self.lead.is_some() {
            vec![ControllerRole::Velocity, ControllerRole::Spacing]
        } else {
            vec![ControllerRole::Velocity]
        }
    }

    pub fn setup(&self, role: ControllerRole) -> &ControllerSetup {
        match role {
            ControllerRole::Velocity => &self.velocity,
            ControllerRole::Spacing => &self.spacing,
        }
    }

    /// Controller settings with `target_gain` applied.
    pub fn pid(&self, role: ControllerRole) -> Result<PidConfig> {
        self.setup(role).pid.unwrap_or_else(|| role.default_pid()).resolved()
    }

    /// Structural checks; failures are configuration errors.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return cfg(format!("horizon must be positive, got {}", self.horizon_s));
        }
        if !(self.dt_s > 0.0 && self.dt_s < self.horizon_s) {
            return cfg(format!("step {} must lie in (0, horizon)", self.dt_s));
        }
        let [lo, hi] = self.delay_range_s;
        if !(0.0 <= lo && lo <= hi && hi <= self.horizon_s) {
            return cfg(format!("delay range [{lo}, {hi}] must lie within [0, horizon]"));
        }
        if !(self.safe_distance_m > 0.0) {
            return cfg("safe distance must be positive".into());
        }
        if !(self.v_init_kmh >= 0.0) {
            return cfg("initial speed must be nonnegative".into());
        }
        if !(self.penalty_weight >= 0.0) {
            return cfg("penalty weight must be nonnegative".into());
        }
        self.desired_speed.validate()?;
        for role in self.roles() {
            let setup = self.setup(role);
            let pid = setup.pid.unwrap_or_else(|| role.default_pid());
            if !(pid.leak > 0.0 && pid.deriv_tau > 0.0) {
                return cfg(format!("{role}: leak and deriv_tau must be positive"));
            }
            match &setup.passivation {
                Passivation::Off => {}
                Passivation::Fixed { matrix } => {
                    matrix.case.validate().map_err(|e| Error::Config(format!("{role}: {e}")))?;
                    matrix
                        .matrix
                        .validate()
                        .map_err(|e| Error::Config(format!("{role}: {e}")))?;
                }
                Passivation::Tuned { case, es } => {
                    case.validate().map_err(|e| Error::Config(format!("{role}: {e}")))?;
                    if es.channels.len() != 4 {
                        return cfg(format!(
                            "{role}: tuning needs four channels (m11, m12, m21, m22), got {}",
                            es.channels.len()
                        ));
                    }
                    es.validate().map_err(|e| Error::Config(format!("{role}: {e}")))?;
                    let fastest = es.omegas().into_iter().fold(0.0, f64::max);
                    if self.dt_s * fastest >= MAX_PHASE_STEP {
                        return cfg(format!("{role}: step {} undersamples dither {fastest}", self.dt_s));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks the initial or fixed matrices against the sufficient conditions.
    pub fn constraint_reports(&self) -> Result<Vec<ConstraintReport>> {
        self.validate()?;
        let mut out = Vec::new();
        for role in self.roles() {
            let passivation = &self.setup(role).passivation;
            let Some(case) = passivation.case() else {
                continue;
            };
            let sys = self.pid(role)?.transfer_function(self.delay_range_s[1])?;
            let gamma = certified_gain(&sys, &FrequencyGrid::default())?;
            let matrix = passivation.initial_matrix();
            let passed = matrix.validate().is_ok() && check_case(&matrix, gamma, case)?;
            out.push(ConstraintReport {
                controller: role,
                matrix,
                case,
                gamma,
                passed,
            });
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("scenario serialises")))
    }

    /// Hash with name, passivation and penalty blanked, so runs that differ
    /// only in passivation share it.
    pub fn base_hash(&self) -> String {
        let mut base = self.clone();
        base.name.clear();
        base.velocity.passivation = Passivation::Off;
        base.spacing.passivation = Passivation::Off;
        base.penalty_weight = 0.0;
        base.hash()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub controller: ControllerRole,
    pub matrix: PassivationMatrix,
    pub case: PassivationCase,
    pub gamma: f64,
    pub passed: bool,
}

/// `J + weight·(sum of hinge violations)`; equals `J` when the case holds.
pub fn penalized_cost(
    j: f64,
    m: &PassivationMatrix,
    gamma: f64,
    case: PassivationCase,
    weight: f64,
) -> Result<f64> {
    if !(weight >= 0.0) {
        return Err(Error::Parameter(format!("penalty weight must be >= 0, got {weight}")));
    }
    if weight == 0.0 {
        return Ok(j);
    }
    Ok(j + weight * constraint_violation(m, gamma, case)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub v_des: f64,
    pub v_h: f64,
    pub v_lead: Option<f64>,
    pub gap: Option<f64>,
    pub mode: ControlMode,
    pub command: Pedal,
    pub a_cmd: f64,
}

/// Signals recorded around one wrapped controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerTrace {
    pub controller: ControllerRole,
    pub u0: Vec<f64>,
    pub y0: Vec<f64>,
    /// Parameter estimates `[m11, m12, m21, m22]` at every sample.
    pub params: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTraces {
    pub dt: f64,
    pub rows: Vec<TraceRow>,
    pub x_h: Vec<f64>,
    pub x_des: Option<Vec<f64>>,
    pub controllers: Vec<ControllerTrace>,
}

impl RunTraces {
    fn scalar(&self, values: Vec<f64>) -> SignalTrace {
        SignalTrace::scalar(0.0, self.dt, values).expect("dt validated")
    }

    pub fn v_h(&self) -> SignalTrace {
        self.scalar(self.rows.iter().map(|r| r.v_h).collect())
    }

    pub fn v_des(&self) -> SignalTrace {
        self.scalar(self.rows.iter().map(|r| r.v_des).collect())
    }

    pub fn controller(&self, role: ControllerRole) -> Option<&ControllerTrace> {
        self.controllers.iter().find(|c| c.controller == role)
    }

    pub fn brake_events(&self) -> usize {
        count_brake_events(self.rows.iter().map(|r| r.command))
    }
}

/// Number of throttle-to-brake transitions (a run starting on the brake
/// counts once).
pub fn count_brake_events(commands: impl IntoIterator<Item = Pedal>) -> usize {
    let mut prev = Pedal::Throttle;
    let mut n = 0;
    for c in commands {
        if c == Pedal::Brake && prev == Pedal::Throttle {
            n += 1;
        }
        prev = c;
    }
    n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDraw {
    pub controller: ControllerRole,
    pub delay_s: f64,
}

/// Passivity evidence for one controller at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerVerdict {
    pub controller: ControllerRole,
    pub delay_s: f64,
    pub case: Option<PassivationCase>,
    pub final_matrix: PassivationMatrix,
    /// Swept L2 gain of the delayed controller.
    pub gamma: f64,
    /// IFP index of the bare delayed controller.
    pub inner_ifp_index: f64,
    pub check_passed: bool,
    pub achieved_levels: Option<SupplyRateSpec>,
    /// Minimum supply integral of the recorded `(u0, y0)` at the achieved
    /// levels (plain passivity when none were certified).
    pub dissipation_margin: f64,
    /// The same, divided by the input energy of the run.
    pub normalized_margin: f64,
    /// Minimum real part of the transformed response over the analysis grid.
    pub nyquist_min_re: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario_hash: String,
    pub base_hash: String,
    pub scenario: Scenario,
    pub delays: Vec<DelayDraw>,
    /// `∫|v_h − v_des| dt` in metres.
    pub tracking_cost: f64,
    /// `∫|x_h − x_des| dt` in metre-seconds, with a lead vehicle.
    pub spacing_cost: Option<f64>,
    pub brake_events: usize,
    pub collision: bool,
    pub min_gap_m: Option<f64>,
    pub verdicts: Vec<ControllerVerdict>,
    pub traces: RunTraces,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn verdict(&self, role: ControllerRole) -> Option<&ControllerVerdict> {
        self.verdicts.iter().find(|v| v.controller == role)
    }

    /// Everything except the traces.
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            name: self.scenario.name.clone(),
            scenario_hash: self.scenario_hash.clone(),
            base_hash: self.base_hash.clone(),
            seed: self.scenario.seed,
            delays: self.delays.clone(),
            tracking_cost: self.tracking_cost,
            spacing_cost: self.spacing_cost,
            brake_events: self.brake_events,
            collision: self.collision,
            min_gap_m: self.min_gap_m,
            verdicts: self.verdicts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub scenario_hash: String,
    pub base_hash: String,
    pub seed: u64,
    pub delays: Vec<DelayDraw>,
    pub tracking_cost: f64,
    pub spacing_cost: Option<f64>,
    pub brake_events: usize,
    pub collision: bool,
    pub min_gap_m: Option<f64>,
    pub verdicts: Vec<ControllerVerdict>,
}

/// One wrapped controller and, when tuned, its extremum-seeking loop.
struct ControlChannel {
    role: ControllerRole,
    delay: f64,
    analysis: RationalDelaySystem,
    gamma_cert: f64,
    case: Option<PassivationCase>,
    wrapped: WrappedSystem<DelayedPid>,
    es: Option<EsLoopState>,
    fixed: PassivationMatrix,
    trace: ControllerTrace,
}

impl ControlChannel {
    fn new(sc: &Scenario, role: ControllerRole, delay: f64) -> Result<Self> {
        let pid = sc.pid(role)?;
        let analysis = pid.transfer_function(delay)?;
        let gamma_cert = certified_gain(&analysis, &FrequencyGrid::default())?;
        let passivation = &sc.setup(role).passivation;
        let es = match passivation {
            Passivation::Tuned { es, .. } => Some(EsLoopState::new(es)?),
            _ => None,
        };
        let fixed = passivation.initial_matrix();
        let start = es.as_ref().map_or(Ok(fixed), |e| probe_matrix(&e.probe()))?;
        Ok(Self {
            role,
            delay,
            analysis,
            gamma_cert,
            case: passivation.case(),
            wrapped: WrappedSystem::new(DelayedPid::from_config(&pid, delay), start),
            es,
            fixed,
            trace: ControllerTrace {
                controller: role,
                u0: Vec::new(),
                y0: Vec::new(),
                params: Vec::new(),
            },
        })
    }

    fn estimate(&self) -> PassivationMatrix {
        match &self.es {
            Some(es) => {
                let t = es.estimates();
                PassivationMatrix {
                    m11: t[0],
                    m12: t[1],
                    m21: t[2],
                    m22: t[3],
                }
            }
            None => self.fixed,
        }
    }

    fn step(&mut self, u0: f64, dt: f64) -> Result<f64> {
        let y0 = self.wrapped.transform_step(u0, dt)?;
        self.trace.u0.push(u0);
        self.trace.y0.push(y0);
        Ok(y0)
    }

    fn record_params(&mut self) {
        self.trace.params.push(self.estimate().to_array());
    }

    /// Feeds the measured cost to the tuner and installs the next probe.
    fn adapt(&mut self, j: f64, weight: f64, dt: f64) -> Result<()> {
        let (Some(es), Some(case)) = (self.es.as_mut(), self.case) else {
            return Ok(());
        };
        let current = self.wrapped.matrix();
        let j = penalized_cost(j, &current, self.gamma_cert, case, weight)?;
        let next = es.es_step(j, dt)?;
        self.wrapped.set_matrix(probe_matrix(&next)?);
        Ok(())
    }

    fn verdict(&self, dt: f64) -> Result<ControllerVerdict> {
        let grid = FrequencyGrid::default();
        let final_matrix = self.estimate();
        let valid = final_matrix.validate().is_ok();
        let check_passed = match self.case {
            Some(case) if valid => check_case(&final_matrix, self.gamma_cert, case)?,
            _ => false,
        };
        let achieved = match self.case {
            Some(case) if check_passed => Some(achieved_levels(&final_matrix, case)?),
            _ => None,
        };
        let u0 = SignalTrace::scalar(0.0, dt, self.trace.u0.clone())?;
        let y0 = SignalTrace::scalar(0.0, dt, self.trace.y0.clone())?;
        let spec = achieved.unwrap_or(SupplyRateSpec::PASSIVE);
        let cum = cumulative_supply(&u0, &y0, spec)?;
        let margin = cum.iter().copied().fold(0.0, f64::min);
        let energy = cumulative_supply(&u0, &u0, SupplyRateSpec::PASSIVE)?
            .last()
            .copied()
            .unwrap_or(0.0);
        let nyquist_min_re = if valid {
            ifp_index(&transformed_frequency_system(&self.analysis, final_matrix), &grid)
                .ok()
                .map(|e| e.value)
        } else {
            None
        };
        Ok(ControllerVerdict {
            controller: self.role,
            delay_s: self.delay,
            case: self.case,
            final_matrix,
            gamma: self.gamma_cert / crate::passivation::GAMMA_SAFETY,
            inner_ifp_index: ifp_index(&self.analysis, &grid)?.value,
            check_passed,
            achieved_levels: achieved,
            dissipation_margin: margin,
            normalized_margin: if energy > 0.0 { margin / energy } else { margin },
            nyquist_min_re,
        })
    }
}

fn probe_matrix(theta: &[f64]) -> Result<PassivationMatrix> {
    PassivationMatrix {
        m11: theta[0],
        m12: theta[1],
        m21: theta[2],
        m22: theta[3],
    }
    .validate_probe()
}

impl PassivationMatrix {
    fn validate_probe(self) -> Result<Self> {
        if self.to_array().iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::DegenerateMatrix(format!("non-finite probe {:?}", self.to_array())))
        }
    }
}

/// Runs the closed loop for the scenario horizon.
///
/// Per step: lead update, gap, mode selection, the selected wrapped
/// controller, supervisor, one extremum-seeking step for that controller on
/// its instantaneous cost (`|v_h − v_des|` or `|x_h − x_des|`), then the
/// vehicle update. An unselected controller is paused: its state, dead-time
/// pipe and tuner all hold until it is selected again, so each controller
/// sees a contiguous signal on its own clock.
pub fn run_experiment(sc: &Scenario) -> Result<RunRecord> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let [lo, hi] = sc.delay_range_s;
    let mut draw = || if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let velocity_delay = draw();
    let spacing_delay = draw();

    let dt = sc.dt_s;
    let n = sc.steps();
    let safe = sc.safe_distance_m;
    let mut channels = vec![ControlChannel::new(sc, ControllerRole::Velocity, velocity_delay)?];
    if sc.lead.is_some() {
        channels.push(ControlChannel::new(sc, ControllerRole::Spacing, spacing_delay)?);
    }
    let delays = channels
        .iter()
        .map(|c| DelayDraw {
            controller: c.role,
            delay_s: c.delay,
        })
        .collect();

    let mut host = VehicleState {
        x: 0.0,
        v: kmh_to_ms(sc.v_init_kmh),
        a: 0.0,
    };
    let mut lead_x = sc.lead.map(|l| l.initial_gap_m);
    let lead_v = |t: f64| -> Result<Option<f64>> {
        sc.lead
            .map(|l| lead_velocity(t.min(sc.horizon_s), sc.horizon_s, l.profile).map(kmh_to_ms))
            .transpose()
    };

    let mut rows = Vec::with_capacity(n + 1);
    let mut x_h = Vec::with_capacity(n + 1);
    let mut x_des = sc.lead.map(|_| Vec::with_capacity(n + 1));
    let mut collision = false;
    let mut min_gap: Option<f64> = None;

    for k in 0..=n {
        let t = k as f64 * dt;
        let v_lead = lead_v(t)?;
        let gap = lead_x.map(|x| x - host.x);
        let v_des = sc.desired_speed.at(t);

        let gap_or_inf = gap.unwrap_or(f64::INFINITY);
        let active = if gap_or_inf < safe { 1 } else { 0 };
        let (y_vel, y_spc) = match (active, gap) {
            (1, Some(g)) => (0.0, channels[1].step(g - safe, dt)?),
            _ => (channels[0].step(v_des - host.v, dt)?, 0.0),
        };
        for ch in &mut channels {
            ch.record_params();
        }
        let mode = acc_supervisor(gap_or_inf, safe, y_vel, y_spc);
        if let Some(g) = gap {
            collision |= g < 0.0;
            min_gap = Some(min_gap.map_or(g, |m| m.min(g)));
        }

        rows.push(TraceRow {
            t,
            v_des,
            v_h: host.v,
            v_lead,
            gap,
            mode: mode.mode,
            command: mode.command,
            a_cmd: mode.magnitude,
        });
        x_h.push(host.x);
        if let (Some(xs), Some(xl)) = (x_des.as_mut(), lead_x) {
            xs.push(xl - safe);
        }

        if k == n {
            break;
        }
        let weight = sc.penalty_weight;
        match (active, lead_x) {
            (1, Some(xl)) => channels[1].adapt((host.x - (xl - safe)).abs(), weight, dt)?,
            _ => channels[0].adapt((host.v - v_des).abs(), weight, dt)?,
        }

        host = vehicle_step(host, mode.magnitude, dt, &sc.vehicle);
        if let (Some(x), Some(v0)) = (lead_x.as_mut(), v_lead) {
            let v1 = lead_v(t + dt)?.unwrap_or(v0);
            *x += 0.5 * (v0 + v1) * dt;
        }
    }

    let verdicts = channels
        .iter()
        .map(|c| c.verdict(dt))
        .collect::<Result<Vec<_>>>()?;
    let traces = RunTraces {
        dt,
        rows,
        x_h,
        x_des,
        controllers: channels.into_iter().map(|c| c.trace).collect(),
    };
    let tracking = tracking_cost(&traces.v_h(), &traces.v_des(), sc.horizon_s)?;
    let spacing = match &traces.x_des {
        Some(xd) => Some(spacing_cost(
            &traces.scalar(traces.x_h.clone()),
            &traces.scalar(xd.clone()),
            sc.horizon_s,
        )?),
        None => None,
    };
    Ok(RunRecord {
        scenario_hash: sc.hash(),
        base_hash: sc.base_hash(),
        scenario: sc.clone(),
        delays,
        tracking_cost: tracking,
        spacing_cost: spacing,
        brake_events: traces.brake_events(),
        collision,
        min_gap_m: min_gap,
        verdicts,
        traces,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub from_s: f64,
    pub to_s: f64,
    pub mean_abs_error_a: f64,
    pub mean_abs_error_b: f64,
    pub max_abs_error_a: f64,
    pub max_abs_error_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name_a: String,
    pub name_b: String,
    pub cost_a: f64,
    pub cost_b: f64,
    /// `cost_a − cost_b`.
    pub delta_cost: f64,
    pub brake_events_a: usize,
    pub brake_events_b: usize,
    pub segments: Vec<SegmentStats>,
}

/// Compares two runs of the same base scenario (they may differ only in
/// passivation and penalty). Segments follow the lead-profile breakpoints.
pub fn compare_runs(a: &RunRecord, b: &RunRecord) -> Result<Comparison> {
    if a.base_hash != b.base_hash {
        return Err(Error::Comparison(format!(
            "base scenarios differ ({} vs {})",
            &a.base_hash[..12.min(a.base_hash.len())],
            &b.base_hash[..12.min(b.base_hash.len())]
        )));
    }
    let horizon = a.scenario.horizon_s;
    let cuts = [0.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 5.0 / 6.0, 1.0].map(|f| f * horizon);
    let err = |r: &RunRecord| -> Vec<(f64, f64)> {
        r.traces.rows.iter().map(|row| (row.t, (row.v_h - row.v_des).abs())).collect()
    };
    let (ea, eb) = (err(a), err(b));
    let stats = |e: &[(f64, f64)], from: f64, to: f64| {
        let sel: Vec<f64> = e
            .iter()
            .filter(|(t, _)| *t >= from && (*t < to || to == horizon))
            .map(|(_, v)| *v)
            .collect();
        let mean = if sel.is_empty() {
            0.0
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        };
        (mean, sel.iter().copied().fold(0.0, f64::max))
    };
    let segments = cuts
        .windows(2)
        .map(|w| {
            let (ma, xa) = stats(&ea, w[0], w[1]);
            let (mb, xb) = stats(&eb, w[0], w[1]);
            SegmentStats {
                from_s: w[0],
                to_s: w[1],
                mean_abs_error_a: ma,
                mean_abs_error_b: mb,
                max_abs_error_a: xa,
                max_abs_error_b: xb,
            }
        })
        .collect();
    Ok(Comparison {
        name_a: a.scenario.name.clone(),
        name_b: b.scenario.name.clone(),
        cost_a: a.tracking_cost,
        cost_b: b.tracking_cost,
        delta_cost: a.tracking_cost - b.tracking_cost,
        brake_events_a: a.brake_events,
        brake_events_b: b.brake_events,
        segments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Traces,
    Nyquist,
    Params,
    Report,
}

impl ExportKind {
    pub const ALL: [ExportKind; 4] = [
        ExportKind::Traces,
        ExportKind::Nyquist,
        ExportKind::Params,
        ExportKind::Report,
    ];
}

/// Writes the requested artefacts into `dir` and returns the created paths:
/// `traces.csv`, `nyquist_<controller>.csv` (transformed response at the
/// final parameters), `params_<controller>.csv` and `report.json`.
pub fn export(record: &RunRecord, what: &[ExportKind], dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for kind in what {
        match kind {
            ExportKind::Traces => {
                let path = dir.join("traces.csv");
                write_run_csv(&record.traces.rows, &path)?;
                written.push(path);
            }
            ExportKind::Params => {
                for c in &record.traces.controllers {
                    let path = dir.join(format!("params_{}.csv", c.controller));
                    let trace = SignalTrace::new(
                        0.0,
                        record.traces.dt,
                        c.params.iter().map(|p| p.to_vec()).collect(),
                    )?;
                    trace.save_csv(&path, &["m11", "m12", "m21", "m22"])?;
                    written.push(path);
                }
            }
            ExportKind::Nyquist => {
                for v in &record.verdicts {
                    let pid = record.scenario.pid(v.controller)?;
                    let sys = pid.transfer_function(v.delay_s)?;
                    let grid = FrequencyGrid::default();
                    let points =
                        nyquist_points(&transformed_frequency_system(&sys, v.final_matrix), &grid, false)?;
                    let path = dir.join(format!("nyquist_{}.csv", v.controller));
                    save_nyquist_csv(&points, &path)?;
                    written.push(path);
                }
            }
            ExportKind::Report => {
                let path = dir.join("report.json");
                let text = serde_json::to_string_pretty(&record.summary())?;
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Run CSV: `t,v_des,v_h,v_lead,gap,mode,command,a_cmd` (speeds in m/s; lead
/// columns empty without a lead vehicle).
pub fn write_run_csv(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_run_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
