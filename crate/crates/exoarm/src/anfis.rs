//! Data-driven baseline: workspace torque dataset, first-order
//! Takagi-Sugeno fuzzy regressors trained per joint with hybrid least
//! squares / gradient descent, and RMSE comparison helpers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::grav_load;
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::model::RobotModel;

/// Grid over motor joints 2-4; joint 1 stays at zero, where the analytical
/// torques of the compared joints do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// (min, max, count) per swept joint, in chain order 2, 3, 4.
    pub axes: [(f64, f64, usize); 3],
}

impl GridSpec {
    pub fn rows(&self) -> usize {
        self.axes.iter().map(|a| a.2).product()
    }

    fn validate(&self) -> Result<()> {
        for (i, &(lo, hi, count)) in self.axes.iter().enumerate() {
            let joint = i + 2;
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::Validation(format!(
                    "grid joint {joint}: empty range [{lo}, {hi}]"
                )));
            }
            if count < 2 {
                return Err(Error::Validation(format!(
                    "grid joint {joint}: count must be >= 2 (got {count})"
                )));
            }
        }
        Ok(())
    }

    fn axis_values(&self, i: usize) -> Vec<f64> {
        let (lo, hi, count) = self.axes[i];
        (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect()
    }
}

/// Joint poses paired with the oracle gravity torques at each pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<([f64; 4], [f64; 4])>,
    pub grid: GridSpec,
}

/// Sweeps the Cartesian grid in row-major order (joint 2 outermost) and
/// records the gravity load at every pose.
pub fn generate_dataset(model: &RobotModel, grid: &GridSpec) -> Result<Dataset> {
    if model.dof() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: model.dof() });
    }
    grid.validate()?;
    let (a2, a3, a4) = (grid.axis_values(0), grid.axis_values(1), grid.axis_values(2));
    let mut rows = Vec::with_capacity(grid.rows());
    for &q2 in &a2 {
        for &q3 in &a3 {
            for &q4 in &a4 {
                let q = DVector::from_vec(vec![0.0, q2, q3, q4]);
                let tau = grav_load(model, &q, &model.gravity())?;
                rows.push(([0.0, q2, q3, q4], [tau.tau[0], tau.tau[1], tau.tau[2], tau.tau[3]]));
            }
        }
    }
    Ok(Dataset { rows, grid: *grid })
}

impl Dataset {
    /// CSV with header `q1,q2,q3,q4,tau1,tau2,tau3,tau4`, 17-significant-digit
    /// floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q1,q2,q3,q4,tau1,tau2,tau3,tau4\n");
        for (q, tau) in &self.rows {
            let fields: Vec<String> = q.iter().chain(tau.iter()).map(|&v| g17(v)).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Gaussian membership function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub center: f64,
    pub width: f64,
}

impl Gaussian {
    fn eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        (-0.5 * z * z).exp()
    }
}

/// A trained MISO Takagi-Sugeno net: Gaussian memberships per input, one
/// rule per membership combination, and a first-order linear consequent per
/// rule (one coefficient per input plus a bias).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyNet {
    /// Indices of the joints used as inputs.
    pub inputs: Vec<usize>,
    /// Membership functions per input.
    pub mfs: Vec<Vec<Gaussian>>,
    /// Consequent coefficients per rule: inputs.len() slopes then the bias.
    pub consequents: Vec<Vec<f64>>,
    /// RMSE on the training set after the final epoch.
    pub train_rmse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub mfs_per_input: usize,
    pub epochs: usize,
    pub learn_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { mfs_per_input: 3, epochs: 60, learn_rate: 0.05 }
    }
}

/// A trained net together with the post-least-squares RMSE recorded at each
/// epoch. The sequence is non-increasing: a membership update is kept only
/// if it does not worsen the refit error.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub net: FuzzyNet,
    pub epoch_rmse: Vec<f64>,
}

impl FuzzyNet {
    pub fn rule_count(&self) -> usize {
        self.mfs.iter().map(|m| m.len()).product()
    }

    /// Decomposes a rule index into per-input membership indices (row-major).
    fn rule_indices(&self, rule: usize) -> Vec<usize> {
        let mut idx = vec![0; self.mfs.len()];
        let mut r = rule;
        for k in (0..self.mfs.len()).rev() {
            idx[k] = r % self.mfs[k].len();
            r /= self.mfs[k].len();
        }
        idx
    }

    fn input_values(&self, q: &[f64; 4]) -> Vec<f64> {
        self.inputs.iter().map(|&i| q[i]).collect()
    }

    /// Raw rule firing strengths (product of memberships).
    fn raw_strengths(&self, x: &[f64]) -> Vec<f64> {
        let mu: Vec<Vec<f64>> = self
            .mfs
            .iter()
            .zip(x.iter())
            .map(|(mfs, &xi)| mfs.iter().map(|m| m.eval(xi)).collect())
            .collect();
        (0..self.rule_count())
            .map(|r| {
                self.rule_indices(r)
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| mu[k][j])
                    .product()
            })
            .collect()
    }

    /// Normalized firing strengths; Err if no rule fires at all.
    pub fn firing_strengths(&self, q: &[f64; 4]) -> Result<Vec<f64>> {
        let w = self.raw_strengths(&self.input_values(q));
        let s: f64 = w.iter().sum();
        if s == 0.0 {
            return Err(Error::OutOfCoverage);
        }
        Ok(w.into_iter().map(|v| v / s).collect())
    }
}

/// Weighted average of the rule consequents at `q`.
pub fn predict(net: &FuzzyNet, q: &[f64; 4]) -> Result<f64> {
    let x = net.input_values(q);
    let wbar = net.firing_strengths(q)?;
    Ok(wbar
        .iter()
        .zip(net.consequents.iter())
        .map(|(&w, coef)| {
            let lin: f64 = coef[..x.len()].iter().zip(x.iter()).map(|(c, xi)| c * xi).sum();
            w * (lin + coef[x.len()])
        })
        .sum())
}

/// sqrt(mean((p - t)^2)).
pub fn rmse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: predictions.len() });
    }
    if predictions.is_empty() {
        return Err(Error::Validation("rmse: inputs must be non-empty".into()));
    }
    let sum_sq: f64 = predictions
        .iter()
        .zip(truth.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum_sq / predictions.len() as f64).sqrt())
}

struct LsFit {
    consequents: Vec<Vec<f64>>,
    rmse: f64,
}

/// Solves the consequents by linear least squares at fixed memberships.
fn solve_consequents(net: &FuzzyNet, xs: &[Vec<f64>], y: &DVector<f64>) -> Result<LsFit> {
    let rules = net.rule_count();
    let n_in = net.inputs.len();
    let cols = rules * (n_in + 1);
    let rows = xs.len();
    if rows < cols {
        return Err(Error::SingularLeastSquares { rules, rows });
    }
    let mut phi = DMatrix::zeros(rows, cols);
    for (row, x) in xs.iter().enumerate() {
        let w = net.raw_strengths(x);
        let s: f64 = w.iter().sum();
        if s == 0.0 {
            return Err(Error::OutOfCoverage);
        }
        for (r, &wr) in w.iter().enumerate() {
            let wbar = wr / s;
            for (k, &xk) in x.iter().enumerate() {
                phi[(row, r * (n_in + 1) + k)] = wbar * xk;
            }
            phi[(row, r * (n_in + 1) + n_in)] = wbar;
        }
    }
    let svd = phi.clone().svd(true, true);
    let sv_max = svd.singular_values.max();
    // Gaussian rule overlap makes the design matrix ill-conditioned; the
    // minimum-norm solution is fine there, so only a structural deficiency
    // (rows < cols, checked above) or a failed solve is an error.
    let tol = sv_max * rows.max(cols) as f64 * f64::EPSILON;
    let theta = svd
        .solve(y, tol)
        .map_err(|_| Error::SingularLeastSquares { rules, rows })?;
    let resid = (&phi * &theta - y).norm();
    let fit_rmse = resid / (rows as f64).sqrt();
    let consequents = (0..rules)
        .map(|r| theta.as_slice()[r * (n_in + 1)..(r + 1) * (n_in + 1)].to_vec())
        .collect();
    Ok(LsFit { consequents, rmse: fit_rmse })
}

/// Gradient of the summed squared error with respect to every membership
/// center and width, at fixed consequents.
fn membership_gradient(
    net: &FuzzyNet,
    xs: &[Vec<f64>],
    y: &DVector<f64>,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n_in = net.inputs.len();
    let mut grad_c: Vec<Vec<f64>> = net.mfs.iter().map(|m| vec![0.0; m.len()]).collect();
    let mut grad_w: Vec<Vec<f64>> = net.mfs.iter().map(|m| vec![0.0; m.len()]).collect();
    let rule_idx: Vec<Vec<usize>> = (0..net.rule_count()).map(|r| net.rule_indices(r)).collect();

    for (row, x) in xs.iter().enumerate() {
        let w = net.raw_strengths(x);
        let s: f64 = w.iter().sum();
        if s == 0.0 {
            continue;
        }
        let f: Vec<f64> = net
            .consequents
            .iter()
            .map(|coef| {
                let lin: f64 = coef[..n_in].iter().zip(x.iter()).map(|(c, xi)| c * xi).sum();
                lin + coef[n_in]
            })
            .collect();
        let y_hat: f64 = w.iter().zip(f.iter()).map(|(&wr, &fr)| wr * fr).sum::<f64>() / s;
        let err = y_hat - y[row];
        for (r, idx) in rule_idx.iter().enumerate() {
            if w[r] == 0.0 {
                continue;
            }
            // d y_hat / d w_r at fixed consequents.
            let dy_dw = (f[r] - y_hat) / s;
            let common = 2.0 * err * dy_dw * w[r];
            for (k, &j) in idx.iter().enumerate() {
                let mf = net.mfs[k][j];
                let dx = x[k] - mf.center;
                grad_c[k][j] += common * dx / (mf.width * mf.width);
                grad_w[k][j] += common * dx * dx / (mf.width * mf.width * mf.width);
            }
        }
    }
    (grad_c, grad_w)
}

/// Trains one MISO net for the torque of `joint` (0-based chain index) on
/// inputs (q2, q3, q4).
///
/// Each epoch solves the consequents by least squares, records the refit
/// RMSE, then takes a gradient step on the membership centers and widths.
/// The step is halved until the refit RMSE does not increase; if no step
/// length helps, the memberships are left unchanged for that epoch.
/// Initialization is deterministic: centers equally spaced over each input
/// range, widths = range / (2 (mfs - 1)).
pub fn train(dataset: &Dataset, joint: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    if dataset.rows.is_empty() {
        return Err(Error::Validation("train: dataset must be non-empty".into()));
    }
    if config.mfs_per_input < 2 {
        return Err(Error::Validation(format!(
            "train: mfs_per_input must be >= 2 (got {})",
            config.mfs_per_input
        )));
    }
    if joint >= 4 {
        return Err(Error::Validation(format!("train: joint index {joint} out of range")));
    }
    let inputs = vec![1usize, 2, 3];
    let xs: Vec<Vec<f64>> = dataset
        .rows
        .iter()
        .map(|(q, _)| inputs.iter().map(|&i| q[i]).collect())
        .collect();
    let y = DVector::from_iterator(dataset.rows.len(), dataset.rows.iter().map(|(_, t)| t[joint]));

    let mut mfs = Vec::with_capacity(inputs.len());
    let mut min_width = f64::INFINITY;
    for k in 0..inputs.len() {
        let lo = xs.iter().map(|x| x[k]).fold(f64::INFINITY, f64::min);
        let hi = xs.iter().map(|x| x[k]).fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if range <= 0.0 {
            return Err(Error::Validation(format!(
                "train: input {k} has zero range; the grid must sweep every input"
            )));
        }
        let m = config.mfs_per_input;
        let width = range / (2.0 * (m - 1) as f64);
        min_width = min_width.min(1e-3 * range);
        mfs.push(
            (0..m)
                .map(|j| Gaussian {
                    center: lo + range * j as f64 / (m - 1) as f64,
                    width,
                })
                .collect::<Vec<_>>(),
        );
    }

    let mut net = FuzzyNet { inputs, mfs, consequents: Vec::new(), train_rmse: f64::NAN };
    let fit = solve_consequents(&net, &xs, &y)?;
    net.consequents = fit.consequents;
    let mut current_rmse = fit.rmse;
    let mut history = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        history.push(current_rmse);
        let (grad_c, grad_w) = membership_gradient(&net, &xs, &y);
        let mut rate = config.learn_rate;
        let mut adopted = false;
        for _ in 0..6 {
            let mut candidate = net.clone();
            for k in 0..candidate.mfs.len() {
                for j in 0..candidate.mfs[k].len() {
                    candidate.mfs[k][j].center -= rate * grad_c[k][j];
                    candidate.mfs[k][j].width =
                        (candidate.mfs[k][j].width - rate * grad_w[k][j]).max(min_width);
                }
            }
            match solve_consequents(&candidate, &xs, &y) {
                Ok(fit) if fit.rmse <= current_rmse => {
                    candidate.consequents = fit.consequents;
                    current_rmse = fit.rmse;
                    net = candidate;
                    adopted = true;
                    break;
                }
                _ => rate *= 0.5,
            }
        }
        if !adopted {
            // No useful step this epoch; memberships stay put.
        }
    }
    history.push(current_rmse);
    net.train_rmse = current_rmse;
    Ok(TrainOutcome { net, epoch_rmse: history })
}

// --- net file format -------------------------------------------------------

const NET_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetFile {
    version: u32,
    #[serde(flatten)]
    net: FuzzyNet,
}

/// Serializes a net to versioned structured text.
pub fn save_net(net: &FuzzyNet) -> String {
    toml::to_string(&NetFile { version: NET_FORMAT_VERSION, net: net.clone() })
        .expect("net serialization cannot fail")
}

/// Parses and validates a serialized net.
pub fn load_net(text: &str) -> Result<FuzzyNet> {
    let file: NetFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.version != NET_FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "net file version {} unsupported (expected {NET_FORMAT_VERSION})",
            file.version
        )));
    }
    let net = file.net;
    if net.mfs.len() != net.inputs.len() {
        return Err(Error::Validation("net file: mfs/inputs length mismatch".into()));
    }
    if net.consequents.len() != net.rule_count() {
        return Err(Error::Validation("net file: consequents/rule count mismatch".into()));
    }
    for mfs in &net.mfs {
        for m in mfs {
            if m.width <= 0.0 {
                return Err(Error::Validation(format!(
                    "net file: width must be > 0 (got {})",
                    m.width
                )));
            }
        }
    }
    Ok(net)
}
