//! Command implementations behind the binary: model loading, torque queries,
//! grid comparison, training, and simulation with CSV/SVG emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DVector, Vector3};

use crate::anfis::{generate_dataset, predict, rmse, save_net, train, Dataset, GridSpec, TrainConfig};
use crate::controller::{
    calibrate_angle_map, mobile_gravity_torque, static_gravity_torque, BodyPose, Calibration,
    CompParams,
};
use crate::dynamics::grav_load;
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::model::{exoskeleton_default, load_robot_config, RobotModel, PRESET_JOINT_RANGE};
use crate::plot::trace_svg;
use crate::sim::{run_scenario, stability_metrics, ControllerKind, Scenario, StabilityReport};

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Robot config file; the built-in exoskeleton when absent.
    pub robot: Option<PathBuf>,
    /// Directory for emitted files.
    pub out: PathBuf,
    /// Base-frame gravity override.
    pub gravity: Option<[f64; 3]>,
}

impl RunConfig {
    pub fn load_model(&self) -> Result<RobotModel> {
        let model = match &self.robot {
            Some(path) => load_robot_config(&fs::read_to_string(path)?)?,
            None => exoskeleton_default(),
        };
        match self.gravity {
            Some(g) => model.with_gravity(Vector3::from(g)),
            None => Ok(model),
        }
    }

    fn out_file(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }
}

/// Grid over joints 2-4 with the preset motion range and the given counts.
pub fn workspace_grid(counts: [usize; 3]) -> GridSpec {
    let (lo, hi) = PRESET_JOINT_RANGE;
    GridSpec { axes: [(lo, hi, counts[0]), (lo, hi, counts[1]), (lo, hi, counts[2])] }
}

/// Prints the gravity load at one pose.
pub fn cmd_gravload(cfg: &RunConfig, q: &[f64]) -> Result<()> {
    let model = cfg.load_model()?;
    let qv = DVector::from_vec(q.to_vec());
    let tau = grav_load(&model, &qv, &model.gravity())?;
    for (i, t) in tau.tau.iter().enumerate() {
        println!("tau{} = {:+.12e} N m", i + 1, t);
    }
    Ok(())
}

/// Prints the calibrated motor-to-equation angle map.
pub fn cmd_calibrate(cfg: &RunConfig) -> Result<()> {
    let model = cfg.load_model()?;
    let params = CompParams::from_model(&model)?;
    let cal = calibrate_angle_map(&model, &params)?;
    print_calibration(&cal);
    Ok(())
}

fn print_calibration(cal: &Calibration) {
    println!(
        "calibrated angle map: sign = [{}], offset = [{}] rad",
        cal.map.sign.map(|s| format!("{s:+.0}")).join(", "),
        cal.map.offset.map(|o| format!("{o:.6}")).join(", ")
    );
    println!("probe-grid residual = {:.3e} (N m)^2", cal.residual);
}

/// Everything `compare` measures, kept separate from the printing so tests
/// can assert on it directly.
#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub calibration: Calibration,
    pub grid_rows: usize,
    /// RMSE of the analytical equations vs the oracle, joints 2-4.
    pub analytical_rmse: [f64; 3],
    /// RMSE of the trained nets vs the oracle, joints 2-4.
    pub net_rmse: Option<[f64; 3]>,
    pub train_seconds: Option<[f64; 3]>,
    /// Largest |mobile - static| per joint (2-4) over the grid evaluated at
    /// motor q1 = pi/4 with zero body pose: the printed mobile equations
    /// carry a cos(theta1) factor the static ones lack.
    pub mobile_static_gap: [f64; 3],
}

/// Calibrates, sweeps the grid, and measures analytical (and optionally
/// trained-net) RMSE per joint against the oracle.
pub fn run_compare(
    model: &RobotModel,
    grid: &GridSpec,
    train_cfg: Option<&TrainConfig>,
) -> Result<(CompareOutcome, Dataset, Vec<Vec<f64>>)> {
    let params = CompParams::from_model(model)?;
    let calibration = calibrate_angle_map(model, &params)?;
    let dataset = generate_dataset(model, grid)?;

    let mut eq_residuals: Vec<Vec<f64>> = Vec::with_capacity(dataset.rows.len());
    let mut analytical_rmse = [0.0; 3];
    {
        let mut preds = [const { Vec::new() }; 3];
        let mut truth = [const { Vec::new() }; 3];
        for (q, tau) in &dataset.rows {
            let theta = calibration.map.map(&DVector::from_vec(q.to_vec()));
            let eq = static_gravity_torque(&params, &theta);
            let mut row = Vec::with_capacity(3);
            for j in 0..3 {
                preds[j].push(eq.tau[j + 1]);
                truth[j].push(tau[j + 1]);
                row.push(eq.tau[j + 1] - tau[j + 1]);
            }
            eq_residuals.push(row);
        }
        for j in 0..3 {
            analytical_rmse[j] = rmse(&preds[j], &truth[j])?;
        }
    }

    let (net_rmse, train_seconds) = match train_cfg {
        Some(cfg) => {
            let mut rmses = [0.0; 3];
            let mut secs = [0.0; 3];
            for j in 0..3 {
                let start = Instant::now();
                let outcome = train(&dataset, j + 1, cfg)?;
                secs[j] = start.elapsed().as_secs_f64();
                let preds: Vec<f64> = dataset
                    .rows
                    .iter()
                    .map(|(q, _)| predict(&outcome.net, q))
                    .collect::<Result<_>>()?;
                let truth: Vec<f64> = dataset.rows.iter().map(|(_, t)| t[j + 1]).collect();
                rmses[j] = rmse(&preds, &truth)?;
            }
            (Some(rmses), Some(secs))
        }
        None => (None, None),
    };

    let mut mobile_static_gap = [0.0_f64; 3];
    let pose = BodyPose::default();
    for (q, _) in &dataset.rows {
        let mut q1 = q.to_vec();
        q1[0] = std::f64::consts::FRAC_PI_4;
        let theta = calibration.map.map(&DVector::from_vec(q1));
        let st = static_gravity_torque(&params, &theta);
        let mo = mobile_gravity_torque(&params, &theta, &pose);
        for j in 0..3 {
            mobile_static_gap[j] = mobile_static_gap[j].max((mo.tau[j + 1] - st.tau[j + 1]).abs());
        }
    }

    let outcome = CompareOutcome {
        calibration,
        grid_rows: dataset.rows.len(),
        analytical_rmse,
        net_rmse,
        train_seconds,
        mobile_static_gap,
    };
    Ok((outcome, dataset, eq_residuals))
}

/// `compare` subcommand: prints the RMSE table and writes the per-pose
/// residual CSV.
pub fn cmd_compare(cfg: &RunConfig, counts: [usize; 3], train_cfg: Option<&TrainConfig>) -> Result<()> {
    let model = cfg.load_model()?;
    let grid = workspace_grid(counts);
    let (outcome, dataset, eq_residuals) = run_compare(&model, &grid, train_cfg)?;

    print_calibration(&outcome.calibration);
    println!("grid: {} poses over joints 2-4", outcome.grid_rows);
    println!("joint  analytical RMSE (N m)  anfis RMSE (N m)  train time (s)");
    for j in 0..3 {
        let net = outcome
            .net_rmse
            .map_or("-".to_string(), |r| format!("{:.3e}", r[j]));
        let secs = outcome
            .train_seconds
            .map_or("-".to_string(), |s| format!("{:.1}", s[j]));
        println!("{}      {:.3e}              {net:<16}  {secs}", j + 2, outcome.analytical_rmse[j]);
    }
    println!(
        "mobile vs static at motor q1 = pi/4, zero body pose: max gap per joint 2-4 = [{}] N m",
        outcome.mobile_static_gap.map(|v| format!("{v:.3e}")).join(", ")
    );
    println!("(the printed mobile law scales joints 2-4 by cos(theta1); the gap vanishes at theta1 = 0)");

    let path = cfg.out_file("compare_residuals.csv")?;
    let mut csv = String::from("q1,q2,q3,q4,eq_res2,eq_res3,eq_res4\n");
    for ((q, _), res) in dataset.rows.iter().zip(eq_residuals.iter()) {
        let fields: Vec<String> = q.iter().chain(res.iter()).map(|&v| g17(v)).collect();
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }
    fs::write(&path, csv)?;
    println!("residuals written to {}", path.display());
    Ok(())
}

/// Trains one net per joint 2-4 and writes `net_joint{2,3,4}.toml` plus a
/// training log with per-epoch RMSE and wall time.
pub fn cmd_train(cfg: &RunConfig, counts: [usize; 3], train_cfg: &TrainConfig) -> Result<()> {
    let model = cfg.load_model()?;
    let grid = workspace_grid(counts);
    let dataset = generate_dataset(&model, &grid)?;
    let mut log = String::new();
    for j in 0..3 {
        let start = Instant::now();
        let outcome = train(&dataset, j + 1, train_cfg)?;
        let secs = start.elapsed().as_secs_f64();
        let path = cfg.out_file(&format!("net_joint{}.toml", j + 2))?;
        fs::write(&path, save_net(&outcome.net))?;
        log.push_str(&format!("joint {}: {:.1} s wall\n", j + 2, secs));
        for (epoch, r) in outcome.epoch_rmse.iter().enumerate() {
            log.push_str(&format!("  epoch {epoch}: rmse {r:.6e}\n"));
        }
        println!(
            "joint {}: train rmse {:.3e} N m in {:.1} s -> {}",
            j + 2,
            outcome.net.train_rmse,
            secs,
            path.display()
        );
    }
    let log_path = cfg.out_file("train_log.txt")?;
    fs::write(&log_path, log)?;
    println!("log written to {}", log_path.display());
    Ok(())
}

/// Runs a scenario file: writes the trace CSV, prints the stability report,
/// and optionally renders SVG plots.
pub fn cmd_simulate(cfg: &RunConfig, scenario_path: &Path, plot: bool) -> Result<()> {
    let model = cfg.load_model()?;
    let scenario = Scenario::from_toml_str(&fs::read_to_string(scenario_path)?)?;
    let stem = scenario_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());

    let (params, map) = match scenario.controller {
        ControllerKind::Static | ControllerKind::Mobile => {
            let params = CompParams::from_model(&model)?;
            let cal = calibrate_angle_map(&model, &params)?;
            (Some(params), Some(cal.map))
        }
        _ => (None, None),
    };

    let trace = match run_scenario(&model, params.as_ref(), map.as_ref(), &scenario) {
        Ok(trace) => trace,
        Err(Error::Divergence { t, joint, qd, trace }) => {
            let path = cfg.out_file(&format!("{stem}_trace_diverged.csv"))?;
            fs::write(&path, trace.to_csv_string())?;
            eprintln!("diagnostic trace prefix written to {}", path.display());
            return Err(Error::Divergence { t, joint, qd, trace });
        }
        Err(e) => return Err(e),
    };

    let csv_path = cfg.out_file(&format!("{stem}_trace.csv"))?;
    fs::write(&csv_path, trace.to_csv_string())?;
    println!("trace written to {}", csv_path.display());
    if plot {
        let svg_path = cfg.out_file(&format!("{stem}_trace.svg"))?;
        fs::write(&svg_path, trace_svg(&trace))?;
        println!("plots written to {}", svg_path.display());
    }

    let report = stability_metrics(&trace, &scenario);
    print_report(&report);
    Ok(())
}

fn print_report(report: &StabilityReport) {
    let fmt_vec = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
    println!("stability report (disturbance/ramp windows excluded):");
    println!("  max |q - q0| per joint (rad):   [{}]", fmt_vec(&report.max_drift));
    println!("  mean |qd| per joint (rad/s):    [{}]", fmt_vec(&report.mean_abs_vel));
    println!("  max |qd| per joint (rad/s):     [{}]", fmt_vec(&report.max_abs_vel));
    for (i, settle) in report.settle_times.iter().enumerate() {
        match settle {
            Some(s) => println!("  settle after disturbance {}: {:.3} s", i + 1, s),
            None => println!("  settle after disturbance {}: not settled", i + 1),
        }
    }
    for (i, hold) in report.holds.iter().enumerate() {
        println!(
            "  hold {} [{:.3}, {:.3}] s: max drift [{}] rad",
            i + 1,
            hold.start,
            hold.end,
            fmt_vec(&hold.max_drift)
        );
    }
}
