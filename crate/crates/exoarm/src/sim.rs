//! Fixed-step forward-dynamics scenario runner: hold tests, user-disturbance
//! injection, multi-pose schedules, and stability metrics.

use std::io::Write;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::controller::{
    clamp_torque, mobile_gravity_torque, static_gravity_torque, AngleMap, BodyPose, CompParams,
    PRESET_TORQUE_LIMITS,
};
use crate::dynamics::{forward_dynamics, grav_load, rotated_gravity, TorqueVector};
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::model::RobotModel;

/// Runaway guard: a joint speed beyond this aborts the run (rad/s).
pub const MAX_JOINT_VEL: f64 = 50.0;
/// Duration of the imposed minimum-jerk ramp between scheduled poses (s).
pub const RAMP_DURATION: f64 = 2.0;
/// A joint counts as settled below this speed (rad/s).
pub const SETTLE_VEL: f64 = 1e-3;
/// Settle must be sustained this long (s).
pub const SETTLE_SUSTAIN: f64 = 1.0;
/// Margin appended to disturbance/ramp windows before metrics resume (s).
pub const SETTLE_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    /// No command torque; the arm is passive.
    None,
    /// Closed-form static gravity equations through the calibrated map.
    Static,
    /// Gyro-stabilized equations reading the scenario's body pose.
    Mobile,
    /// Exact gravity load from the inverse-dynamics recursion.
    Oracle,
}

/// An external joint torque active on [start, end).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub start: f64,
    pub end: f64,
    /// 0-based joint index.
    pub joint: usize,
    pub torque: f64,
}

/// Piecewise-constant body pose: the segment starting at `start` holds until
/// the next segment begins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSegment {
    pub start: f64,
    pub pose: BodyPose,
}

/// One stop of a multi-pose schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseHold {
    pub q: DVector<f64>,
    pub hold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration: f64,
    pub dt: f64,
    pub initial_q: DVector<f64>,
    pub initial_qd: DVector<f64>,
    pub controller: ControllerKind,
    pub clamp: bool,
    /// Per-joint clamp limits; defaults to the preset motor limits on a
    /// 4-DoF chain.
    pub torque_limits: Option<Vec<f64>>,
    pub disturbances: Vec<Disturbance>,
    pub pose_profile: Vec<PoseSegment>,
    /// When non-empty the run is a pose schedule and `duration`,
    /// `initial_q`, `initial_qd` are ignored.
    pub pose_schedule: Vec<PoseHold>,
}

impl Scenario {
    /// A 60-second hold at `q` under the given controller.
    pub fn hold(q: DVector<f64>, controller: ControllerKind) -> Self {
        let n = q.len();
        Self {
            duration: 60.0,
            dt: 1e-3,
            initial_q: q,
            initial_qd: DVector::zeros(n),
            controller,
            clamp: true,
            torque_limits: None,
            disturbances: Vec::new(),
            pose_profile: Vec::new(),
            pose_schedule: Vec::new(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(Error::Validation(format!(
                "dt must lie in (0, 0.01] (got {})",
                self.dt
            )));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Validation(format!(
                "duration must be > 0 (got {})",
                self.duration
            )));
        }
        if self.initial_q.len() != n || self.initial_qd.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.initial_q.len() });
        }
        for v in self.initial_q.iter().chain(self.initial_qd.iter()) {
            if !v.is_finite() {
                return Err(Error::Validation("initial state must be finite".into()));
            }
        }
        let horizon = if self.pose_schedule.is_empty() { self.duration } else { f64::INFINITY };
        for d in &self.disturbances {
            if d.joint >= n {
                return Err(Error::Validation(format!(
                    "disturbance joint {} out of range 1..={n}",
                    d.joint + 1
                )));
            }
            if !(d.start >= 0.0 && d.start < d.end && d.end <= horizon) {
                return Err(Error::Validation(format!(
                    "disturbance window [{}, {}] must lie within [0, {}]",
                    d.start, d.end, self.duration
                )));
            }
            if !d.torque.is_finite() {
                return Err(Error::Validation("disturbance torque must be finite".into()));
            }
        }
        if let Some(limits) = &self.torque_limits {
            if limits.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: limits.len() });
            }
            if limits.iter().any(|&l| !(l > 0.0)) {
                return Err(Error::Validation("torque_limits must be > 0".into()));
            }
        } else if self.clamp && n != 4 {
            return Err(Error::Validation(
                "torque_limits required to clamp a chain that is not 4-DoF".into(),
            ));
        }
        let mut prev = f64::NEG_INFINITY;
        for seg in &self.pose_profile {
            if !(seg.start >= 0.0 && seg.start.is_finite()) || seg.start < prev {
                return Err(Error::Validation(
                    "pose profile segments must have non-decreasing start times >= 0".into(),
                ));
            }
            prev = seg.start;
            if !seg.pose.beta.is_finite() || !seg.pose.phi.is_finite() {
                return Err(Error::Validation("pose profile angles must be finite".into()));
            }
        }
        for (i, hold) in self.pose_schedule.iter().enumerate() {
            if hold.q.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: hold.q.len() });
            }
            if !(hold.hold > 0.0) {
                return Err(Error::Validation(format!(
                    "schedule entry {}: hold must be > 0 (got {})",
                    i + 1,
                    hold.hold
                )));
            }
        }
        Ok(())
    }
}

// Scenario file: TOML mirroring the Scenario type. Joint indices are
// 1-based in files, matching the CSV column names.

#[derive(Deserialize)]
struct ScenarioFile {
    duration: f64,
    dt: f64,
    initial_q: Vec<f64>,
    #[serde(default)]
    initial_qd: Option<Vec<f64>>,
    controller: ControllerKind,
    #[serde(default = "default_clamp")]
    clamp: bool,
    #[serde(default)]
    torque_limits: Option<Vec<f64>>,
    #[serde(default, rename = "disturbance")]
    disturbances: Vec<DisturbanceFile>,
    #[serde(default, rename = "pose")]
    pose_profile: Vec<PoseFile>,
    #[serde(default, rename = "schedule")]
    pose_schedule: Vec<ScheduleFile>,
}

fn default_clamp() -> bool {
    true
}

#[derive(Deserialize)]
struct DisturbanceFile {
    start: f64,
    end: f64,
    joint: usize,
    torque: f64,
}

#[derive(Deserialize)]
struct PoseFile {
    start: f64,
    #[serde(default)]
    beta: f64,
    #[serde(default)]
    phi: f64,
}

#[derive(Deserialize)]
struct ScheduleFile {
    q: Vec<f64>,
    hold: f64,
}

impl Scenario {
    /// Parses a scenario document. Validation against a chain happens in
    /// [`Scenario::validate`] once the model is known.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let n = file.initial_q.len();
        let disturbances = file
            .disturbances
            .into_iter()
            .map(|d| {
                if d.joint == 0 {
                    return Err(Error::Validation(
                        "disturbance joint indices are 1-based".into(),
                    ));
                }
                Ok(Disturbance { start: d.start, end: d.end, joint: d.joint - 1, torque: d.torque })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario {
            duration: file.duration,
            dt: file.dt,
            initial_q: DVector::from_vec(file.initial_q),
            initial_qd: file
                .initial_qd
                .map(DVector::from_vec)
                .unwrap_or_else(|| DVector::zeros(n)),
            controller: file.controller,
            clamp: file.clamp,
            torque_limits: file.torque_limits,
            disturbances,
            pose_profile: file
                .pose_profile
                .into_iter()
                .map(|p| PoseSegment { start: p.start, pose: BodyPose { beta: p.beta, phi: p.phi } })
                .collect(),
            pose_schedule: file
                .pose_schedule
                .into_iter()
                .map(|s| PoseHold { q: DVector::from_vec(s.q), hold: s.hold })
                .collect(),
        })
    }
}

/// One sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub tau_cmd: DVector<f64>,
    pub tau_ext: DVector<f64>,
}

/// Timestamped state/torque history at fixed step `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    pub fn end_time(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }

    /// CSV with header `t,q1..qN,qd1..qdN,tau_cmd1..N,tau_ext1..N`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.rows.first().map_or(0, |r| r.q.len());
        let mut header = String::from("t");
        for prefix in ["q", "qd", "tau_cmd", "tau_ext"] {
            for j in 1..=n {
                header.push_str(&format!(",{prefix}{j}"));
            }
        }
        writeln!(w, "{header}")?;
        for row in &self.rows {
            let mut line = g17(row.t);
            for vec in [&row.q, &row.qd, &row.tau_cmd, &row.tau_ext] {
                for v in vec.iter() {
                    line.push(',');
                    line.push_str(&g17(*v));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Drift observed over one quiet (hold) window.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldWindow {
    pub start: f64,
    pub end: f64,
    /// Per-joint max |q(t) - q(window start)|.
    pub max_drift: Vec<f64>,
}

/// Position/velocity stability over a trace, excluding disturbance and ramp
/// windows plus a settle margin after each.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Per-joint max drift over any quiet window, relative to that window's
    /// first sample.
    pub max_drift: Vec<f64>,
    pub mean_abs_vel: Vec<f64>,
    pub max_abs_vel: Vec<f64>,
    /// Per disturbance: seconds from window end until every joint speed
    /// stays below [`SETTLE_VEL`] for [`SETTLE_SUSTAIN`] seconds.
    pub settle_times: Vec<Option<f64>>,
    pub holds: Vec<HoldWindow>,
}

struct Engine<'a> {
    model: &'a RobotModel,
    params: Option<&'a CompParams>,
    map: Option<&'a AngleMap>,
    scenario: &'a Scenario,
    limits: Option<Vec<f64>>,
    /// Plant per pose-profile segment (gravity rotated by the trunk pose);
    /// index 0 is the default pose.
    plants: Vec<RobotModel>,
    rows: Vec<TraceRow>,
    step: usize,
}

impl<'a> Engine<'a> {
    fn new(
        model: &'a RobotModel,
        params: Option<&'a CompParams>,
        map: Option<&'a AngleMap>,
        scenario: &'a Scenario,
    ) -> Result<Self> {
        scenario.validate(model.dof())?;
        if matches!(scenario.controller, ControllerKind::Static | ControllerKind::Mobile)
            && (params.is_none() || map.is_none())
        {
            return Err(Error::Validation(
                "static/mobile controller requires CompParams and a calibrated AngleMap".into(),
            ));
        }
        let limits = if scenario.clamp {
            Some(
                scenario
                    .torque_limits
                    .clone()
                    .unwrap_or_else(|| PRESET_TORQUE_LIMITS.to_vec()),
            )
        } else {
            None
        };
        let mut plants = Vec::with_capacity(scenario.pose_profile.len() + 1);
        plants.push(model.clone());
        for seg in &scenario.pose_profile {
            plants.push(model.with_gravity(rotated_gravity(seg.pose.beta, seg.pose.phi))?);
        }
        Ok(Self { model, params, map, scenario, limits, plants, rows: Vec::new(), step: 0 })
    }

    fn t(&self) -> f64 {
        self.step as f64 * self.scenario.dt
    }

    /// Index into `plants`/pose for time `t`: the last profile segment that
    /// has started, or 0 for the default pose.
    fn pose_index(&self, t: f64) -> usize {
        let mut idx = 0;
        for (i, seg) in self.scenario.pose_profile.iter().enumerate() {
            if seg.start <= t {
                idx = i + 1;
            }
        }
        idx
    }

    fn pose_at(&self, idx: usize) -> BodyPose {
        if idx == 0 {
            BodyPose::default()
        } else {
            self.scenario.pose_profile[idx - 1].pose
        }
    }

    fn gravity_of(&self, idx: usize) -> Vector3<f64> {
        self.plants[idx].gravity()
    }

    fn command_torque(&self, q: &DVector<f64>, pose_idx: usize) -> Result<DVector<f64>> {
        let n = self.model.dof();
        let tau = match self.scenario.controller {
            ControllerKind::None => TorqueVector::zeros(n),
            ControllerKind::Static => {
                let theta = self.map.unwrap().map(q);
                static_gravity_torque(self.params.unwrap(), &theta)
            }
            ControllerKind::Mobile => {
                let theta = self.map.unwrap().map(q);
                mobile_gravity_torque(self.params.unwrap(), &theta, &self.pose_at(pose_idx))
            }
            ControllerKind::Oracle => grav_load(self.model, q, &self.gravity_of(pose_idx))?,
        };
        Ok(match &self.limits {
            Some(limits) => clamp_torque(&tau, limits).tau,
            None => tau.tau,
        })
    }

    fn external_torque(&self, t: f64) -> DVector<f64> {
        let mut tau = DVector::zeros(self.model.dof());
        for d in &self.scenario.disturbances {
            if d.start <= t && t < d.end {
                tau[d.joint] += d.torque;
            }
        }
        tau
    }

    fn record(&mut self, q: &DVector<f64>, qd: &DVector<f64>, tau_cmd: &DVector<f64>, tau_ext: &DVector<f64>) {
        self.rows.push(TraceRow {
            t: self.t(),
            q: q.clone(),
            qd: qd.clone(),
            tau_cmd: tau_cmd.clone(),
            tau_ext: tau_ext.clone(),
        });
    }

    fn check_divergence(&mut self, q: &DVector<f64>, qd: &DVector<f64>) -> Result<()> {
        if let Some((joint, &v)) = qd.iter().enumerate().find(|(_, v)| v.abs() > MAX_JOINT_VEL) {
            // Append the offending sample so the trace shows the blow-up.
            let n = self.model.dof();
            let zero = DVector::zeros(n);
            self.record(q, qd, &zero, &zero);
            let trace = SimTrace { dt: self.scenario.dt, rows: std::mem::take(&mut self.rows) };
            return Err(Error::Divergence { t: self.t(), joint, qd: v, trace: Box::new(trace) });
        }
        Ok(())
    }

    /// Integrates `steps` fixed steps of physics from (q, qd), recording one
    /// row per step. Command and external torques are held over each step.
    fn run_hold(&mut self, q: &mut DVector<f64>, qd: &mut DVector<f64>, steps: usize) -> Result<()> {
        for _ in 0..steps {
            let t = self.t();
            let pose_idx = self.pose_index(t);
            let tau_cmd = self.command_torque(q, pose_idx)?;
            let tau_ext = self.external_torque(t);
            self.record(q, qd, &tau_cmd, &tau_ext);

            let plant = &self.plants[pose_idx];
            let total = TorqueVector { tau: &tau_cmd + &tau_ext };
            let dt = self.scenario.dt;
            let f = |q: &DVector<f64>, qd: &DVector<f64>| -> Result<DVector<f64>> {
                forward_dynamics(plant, q, qd, &total)
            };
            let k1q = qd.clone();
            let k1v = f(q, qd)?;
            let q2 = &*q + &k1q * (dt / 2.0);
            let v2 = &*qd + &k1v * (dt / 2.0);
            let k2q = v2.clone();
            let k2v = f(&q2, &v2)?;
            let q3 = &*q + &k2q * (dt / 2.0);
            let v3 = &*qd + &k2v * (dt / 2.0);
            let k3q = v3.clone();
            let k3v = f(&q3, &v3)?;
            let q4 = &*q + &k3q * dt;
            let v4 = &*qd + &k3v * dt;
            let k4q = v4.clone();
            let k4v = f(&q4, &v4)?;
            *q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
            *qd += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
            self.step += 1;
            self.check_divergence(q, qd)?;
        }
        Ok(())
    }

    /// Minimum-jerk kinematic ramp from `from` to `to`; the state is imposed
    /// (the user repositions the arm) while the controller output is still
    /// recorded.
    fn run_ramp(
        &mut self,
        q: &mut DVector<f64>,
        qd: &mut DVector<f64>,
        from: &DVector<f64>,
        to: &DVector<f64>,
        steps: usize,
    ) -> Result<()> {
        let span = to - from;
        let total = steps as f64 * self.scenario.dt;
        for k in 0..steps {
            let t = self.t();
            let pose_idx = self.pose_index(t);
            let u = k as f64 / steps as f64;
            let s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
            let sdot = 30.0 * u * u * (1.0 - 2.0 * u + u * u) / total;
            *q = from + &span * s;
            *qd = &span * sdot;
            let tau_cmd = self.command_torque(q, pose_idx)?;
            let tau_ext = DVector::zeros(self.model.dof());
            self.record(q, qd, &tau_cmd, &tau_ext);
            self.step += 1;
        }
        *q = to.clone();
        *qd = DVector::zeros(self.model.dof());
        Ok(())
    }

    fn final_row(&mut self, q: &DVector<f64>, qd: &DVector<f64>) -> Result<()> {
        let pose_idx = self.pose_index(self.t());
        let tau_cmd = self.command_torque(q, pose_idx)?;
        let tau_ext = self.external_torque(self.t());
        self.record(q, qd, &tau_cmd, &tau_ext);
        Ok(())
    }

    fn finish(self) -> SimTrace {
        SimTrace { dt: self.scenario.dt, rows: self.rows }
    }
}

fn steps_for(duration: f64, dt: f64) -> usize {
    (duration / dt).round().max(1.0) as usize
}

/// Runs a scenario: RK4 at fixed `dt` with the selected controller's torque
/// recomputed from the current position each step and held over the step.
/// Dispatches to [`run_pose_schedule`] when the scenario carries one.
pub fn run_scenario(
    model: &RobotModel,
    params: Option<&CompParams>,
    map: Option<&AngleMap>,
    scenario: &Scenario,
) -> Result<SimTrace> {
    if !scenario.pose_schedule.is_empty() {
        return run_pose_schedule(model, params, map, scenario);
    }
    let mut engine = Engine::new(model, params, map, scenario)?;
    let mut q = scenario.initial_q.clone();
    let mut qd = scenario.initial_qd.clone();
    engine.run_hold(&mut q, &mut qd, steps_for(scenario.duration, scenario.dt))?;
    engine.final_row(&q, &qd)?;
    Ok(engine.finish())
}

/// Holds each scheduled pose in turn; between holds a 2-second imposed
/// minimum-jerk ramp emulates the user moving the arm to the next pose.
pub fn run_pose_schedule(
    model: &RobotModel,
    params: Option<&CompParams>,
    map: Option<&AngleMap>,
    scenario: &Scenario,
) -> Result<SimTrace> {
    if scenario.pose_schedule.is_empty() {
        return Err(Error::Validation("pose schedule must be non-empty".into()));
    }
    let mut engine = Engine::new(model, params, map, scenario)?;
    let mut q = scenario.pose_schedule[0].q.clone();
    let mut qd = DVector::zeros(model.dof());
    for (i, hold) in scenario.pose_schedule.iter().enumerate() {
        if i > 0 {
            let from = q.clone();
            let to = hold.q.clone();
            let steps = steps_for(RAMP_DURATION, scenario.dt);
            engine.run_ramp(&mut q, &mut qd, &from, &to, steps)?;
        }
        engine.run_hold(&mut q, &mut qd, steps_for(hold.hold, scenario.dt))?;
    }
    engine.final_row(&q, &qd)?;
    Ok(engine.finish())
}

/// Time windows the metrics exclude: disturbances and ramps, each extended
/// by [`SETTLE_MARGIN`].
fn excluded_windows(scenario: &Scenario) -> Vec<(f64, f64)> {
    let mut windows: Vec<(f64, f64)> = scenario
        .disturbances
        .iter()
        .map(|d| (d.start, d.end + SETTLE_MARGIN))
        .collect();
    if !scenario.pose_schedule.is_empty() {
        let mut t = scenario.pose_schedule[0].hold;
        for hold in &scenario.pose_schedule[1..] {
            windows.push((t, t + RAMP_DURATION + SETTLE_MARGIN));
            t += RAMP_DURATION + hold.hold;
        }
    }
    windows.sort_by(|a, b| a.0.total_cmp(&b.0));
    windows
}

/// Computes drift and velocity statistics over the quiet portions of a
/// trace, plus the settle time after each disturbance.
pub fn stability_metrics(trace: &SimTrace, scenario: &Scenario) -> StabilityReport {
    let n = trace.rows.first().map_or(0, |r| r.q.len());
    let excluded = excluded_windows(scenario);
    let in_excluded = |t: f64| excluded.iter().any(|&(s, e)| t >= s && t < e);

    let mut max_drift = vec![0.0_f64; n];
    let mut mean_abs_vel = vec![0.0_f64; n];
    let mut max_abs_vel = vec![0.0_f64; n];
    let mut holds: Vec<HoldWindow> = Vec::new();
    let mut included = 0usize;
    let mut reference: Option<(DVector<f64>, f64)> = None;
    let mut window_drift = vec![0.0_f64; n];
    let mut window_end = 0.0;

    for row in &trace.rows {
        if in_excluded(row.t) {
            if let Some((_, start)) = reference.take() {
                holds.push(HoldWindow { start, end: window_end, max_drift: window_drift.clone() });
            }
            continue;
        }
        let (q0, _) = reference.get_or_insert_with(|| {
            window_drift = vec![0.0; n];
            (row.q.clone(), row.t)
        });
        included += 1;
        window_end = row.t;
        for j in 0..n {
            let drift = (row.q[j] - q0[j]).abs();
            window_drift[j] = window_drift[j].max(drift);
            max_drift[j] = max_drift[j].max(drift);
            let v = row.qd[j].abs();
            mean_abs_vel[j] += v;
            max_abs_vel[j] = max_abs_vel[j].max(v);
        }
    }
    if let Some((_, start)) = reference {
        holds.push(HoldWindow { start, end: window_end, max_drift: window_drift });
    }
    if included > 0 {
        for v in &mut mean_abs_vel {
            *v /= included as f64;
        }
    }

    let settle_times = scenario
        .disturbances
        .iter()
        .map(|d| settle_after(trace, d.end))
        .collect();

    StabilityReport { max_drift, mean_abs_vel, max_abs_vel, settle_times, holds }
}

/// First instant after `t_end` at which every joint speed stays below
/// [`SETTLE_VEL`] for [`SETTLE_SUSTAIN`] seconds, as an offset from `t_end`.
fn settle_after(trace: &SimTrace, t_end: f64) -> Option<f64> {
    let sustain_steps = (SETTLE_SUSTAIN / trace.dt).round() as usize;
    let rows = &trace.rows;
    let first = rows.iter().position(|r| r.t >= t_end)?;
    let calm = |row: &TraceRow| row.qd.iter().all(|v| v.abs() < SETTLE_VEL);
    let mut run = 0usize;
    for (i, row) in rows.iter().enumerate().skip(first) {
        if calm(row) {
            run += 1;
            if run >= sustain_steps + 1 {
                let start = i + 1 - run;
                return Some(rows[start].t - t_end);
            }
        } else {
            run = 0;
        }
    }
    None
}
