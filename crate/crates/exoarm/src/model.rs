//! Robot definition: Denavit-Hartenberg chain, per-link dynamic parameters,
//! config-file loading, and the built-in exoskeleton preset.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard (distal) DH parameters of one link. The joint variable is added
/// to `theta_offset`; the link frame origin sits at the distal end of the
/// link, on the axis of the next joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhLink {
    /// Link length along the common normal (m).
    pub a: f64,
    /// Link twist (rad).
    pub alpha: f64,
    /// Joint offset along z (m).
    pub d_offset: f64,
    /// Constant joint-angle offset (rad), in [-pi, pi].
    pub theta_offset: f64,
}

/// Dynamic parameters of one link. `com` is expressed in the link frame,
/// i.e. relative to the distal end of the link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkDynamics {
    /// Link mass (kg), >= 0.
    pub mass: f64,
    /// Centre of mass in the link frame (m).
    pub com: Vector3<f64>,
    /// Inertia tensor about the COM, link frame (kg m^2). Symmetric PSD.
    pub inertia: Matrix3<f64>,
    /// Motor rotor inertia (kg m^2).
    pub motor_inertia: f64,
    /// Gear ratio, > 0. Rotor inertia is reflected as gear_ratio^2 * motor_inertia.
    pub gear_ratio: f64,
    /// Viscous friction coefficient (N m s/rad), >= 0.
    pub viscous: f64,
    /// Coulomb friction magnitude (N m), >= 0.
    pub coulomb: f64,
}

/// One joint of the chain: geometry plus dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub dh: DhLink,
    pub dynamics: LinkDynamics,
}

/// A validated serial chain. Immutable after construction, so it can be
/// shared read-only across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    links: Vec<Link>,
    gravity: Vector3<f64>,
    link_lengths: Vec<f64>,
}

const INERTIA_SYM_TOL: f64 = 1e-9;

fn ensure_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} must be finite (got {value})")))
    }
}

impl RobotModel {
    /// Validates every link and derives `link_lengths` from the DH a-column.
    pub fn new(links: Vec<Link>, gravity: Vector3<f64>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::Validation("links: chain must have N >= 1 links".into()));
        }
        for (i, link) in links.iter().enumerate() {
            let n = i + 1;
            let dh = &link.dh;
            ensure_finite(dh.a, &format!("link {n}: a"))?;
            ensure_finite(dh.alpha, &format!("link {n}: alpha"))?;
            ensure_finite(dh.d_offset, &format!("link {n}: d"))?;
            ensure_finite(dh.theta_offset, &format!("link {n}: offset"))?;
            if !(-PI..=PI).contains(&dh.theta_offset) {
                return Err(Error::Validation(format!(
                    "link {n}: offset must lie in [-pi, pi] (got {})",
                    dh.theta_offset
                )));
            }
            let dy = &link.dynamics;
            if !dy.mass.is_finite() || dy.mass < 0.0 {
                return Err(Error::Validation(format!(
                    "link {n}: mass must be >= 0 (got {})",
                    dy.mass
                )));
            }
            for (label, v) in [("viscous", dy.viscous), ("coulomb", dy.coulomb)] {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Validation(format!(
                        "link {n}: {label} must be >= 0 (got {v})"
                    )));
                }
            }
            if !dy.gear_ratio.is_finite() || dy.gear_ratio <= 0.0 {
                return Err(Error::Validation(format!(
                    "link {n}: gear_ratio must be > 0 (got {})",
                    dy.gear_ratio
                )));
            }
            if !dy.motor_inertia.is_finite() || dy.motor_inertia < 0.0 {
                return Err(Error::Validation(format!(
                    "link {n}: motor_inertia must be >= 0 (got {})",
                    dy.motor_inertia
                )));
            }
            if !dy.com.iter().all(|c| c.is_finite()) {
                return Err(Error::Validation(format!("link {n}: com must be finite")));
            }
            validate_inertia(&dy.inertia, n)?;
        }
        if !gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::Validation("gravity must be finite".into()));
        }
        let link_lengths = links.iter().map(|l| l.dh.a).collect();
        Ok(Self { links, gravity, link_lengths })
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn gravity(&self) -> Vector3<f64> {
        self.gravity
    }

    /// Per-joint link lengths, taken from the DH a-column.
    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    /// Same chain under a different base-frame gravity vector.
    pub fn with_gravity(&self, gravity: Vector3<f64>) -> Result<Self> {
        if !gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::Validation("gravity must be finite".into()));
        }
        Ok(Self { gravity, ..self.clone() })
    }
}

fn validate_inertia(inertia: &Matrix3<f64>, n: usize) -> Result<()> {
    if !inertia.iter().all(|v| v.is_finite()) {
        return Err(Error::Validation(format!("link {n}: inertia must be finite")));
    }
    let asym = (inertia - inertia.transpose()).abs().max();
    if asym > INERTIA_SYM_TOL {
        return Err(Error::Validation(format!(
            "link {n}: inertia must be symmetric (asymmetry {asym:.3e})"
        )));
    }
    let eig = inertia.symmetric_eigenvalues();
    let min_eig = eig.min();
    if min_eig < -INERTIA_SYM_TOL {
        return Err(Error::Validation(format!(
            "link {n}: inertia must be positive semi-definite (min eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(())
}

/// Standard gravitational acceleration used throughout (m/s^2).
pub const GRAVITY_ACCEL: f64 = 9.8;

/// Motion range of the preset joints 2-4 used for workspace grids and
/// calibration probes (rad). The motor mounts allow about 3.3 rad of travel;
/// this range stays inside it.
pub const PRESET_JOINT_RANGE: (f64, f64) = (-FRAC_PI_2, FRAC_PI_2);

/// The 4-DoF upper-body exoskeleton.
///
/// DH rows (a, alpha, d, offset):
///   joint 1: (0.05, -pi/2, 0, 0)
///   joint 2: (0.13,  pi/2, 0, -pi/2)
///   joint 3: (0.30,  0,    0, 0)
///   joint 4: (0.30,  0,    0, 0)
///
/// The joint-1 axis is the base z-axis and is vertical, so gravity is
/// (0, 0, -9.8) in the base frame.
///
/// Dynamic parameters are a documented default set: the BLDC motor at the
/// far end of each link dominates its mass, so each link's COM sits at the
/// link-frame origin (the distal joint). Gear ratios follow the motor
/// designations (6:1 on joints 1, 3, 4; 9:1 on joint 2).
pub fn exoskeleton_default() -> RobotModel {
    let dh = [
        (0.05, -FRAC_PI_2, 0.0, 0.0),
        (0.13, FRAC_PI_2, 0.0, -FRAC_PI_2),
        (0.30, 0.0, 0.0, 0.0),
        (0.30, 0.0, 0.0, 0.0),
    ];
    let mass = [0.6, 0.8, 0.4, 0.3];
    let gear = [6.0, 9.0, 6.0, 6.0];
    // Gearbox drag dominates the smoothed Coulomb term. Keeping coulomb/
    // (smoothing velocity * min inertia) below RK4's real-axis stability
    // bound lets the default 1 ms step integrate the stiction model.
    let viscous = [0.3, 0.4, 0.15, 0.1];
    let coulomb = [0.005, 0.03, 0.03, 0.03];

    let links = (0..4)
        .map(|i| {
            let (a, alpha, d_offset, theta_offset) = dh[i];
            // Thin-rod transverse inertia about the COM, rod along link x.
            let rod = mass[i] * a * a / 12.0;
            Link {
                dh: DhLink { a, alpha, d_offset, theta_offset },
                dynamics: LinkDynamics {
                    mass: mass[i],
                    com: Vector3::zeros(),
                    inertia: Matrix3::from_diagonal(&Vector3::new(0.0, rod, rod)),
                    motor_inertia: 2.0e-5,
                    gear_ratio: gear[i],
                    viscous: viscous[i],
                    coulomb: coulomb[i],
                },
            }
        })
        .collect();

    RobotModel::new(links, Vector3::new(0.0, 0.0, -GRAVITY_ACCEL))
        .expect("preset parameters are valid")
}

// --- config file ----------------------------------------------------------
//
// UTF-8 TOML document, one `[link.N]` table per link (N = 1..len), keys
// `a, alpha, d, offset, mass, com, inertia, motor_inertia, gear_ratio,
// viscous, coulomb`, plus top-level `gravity`. SI units throughout.

#[derive(Debug, Serialize, Deserialize)]
struct RobotConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    gravity: Option<[f64; 3]>,
    link: BTreeMap<String, LinkConfig>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkConfig {
    a: Option<f64>,
    alpha: Option<f64>,
    d: Option<f64>,
    offset: Option<f64>,
    mass: Option<f64>,
    com: Option<[f64; 3]>,
    inertia: Option<[[f64; 3]; 3]>,
    motor_inertia: Option<f64>,
    gear_ratio: Option<f64>,
    viscous: Option<f64>,
    coulomb: Option<f64>,
}

/// Parses and validates a robot config document.
///
/// Missing numeric keys default to zero except `gear_ratio` (1) and the
/// top-level `gravity` ((0, 0, -9.8)).
pub fn load_robot_config(text: &str) -> Result<RobotModel> {
    let cfg: RobotConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let n = cfg.link.len();
    if n == 0 {
        return Err(Error::Validation("link: at least one [link.N] table required".into()));
    }
    let mut ordered: Vec<Option<&LinkConfig>> = vec![None; n];
    for (key, lc) in &cfg.link {
        let idx: usize = key.parse().map_err(|_| {
            Error::Validation(format!("link.{key}: link keys must be integers 1..{n}"))
        })?;
        if idx < 1 || idx > n {
            return Err(Error::Validation(format!(
                "link.{key}: link keys must be contiguous 1..{n}"
            )));
        }
        ordered[idx - 1] = Some(lc);
    }
    let links = ordered
        .into_iter()
        .map(|lc| {
            let lc = lc.expect("contiguity checked above");
            Link {
                dh: DhLink {
                    a: lc.a.unwrap_or(0.0),
                    alpha: lc.alpha.unwrap_or(0.0),
                    d_offset: lc.d.unwrap_or(0.0),
                    theta_offset: lc.offset.unwrap_or(0.0),
                },
                dynamics: LinkDynamics {
                    mass: lc.mass.unwrap_or(0.0),
                    com: Vector3::from(lc.com.unwrap_or([0.0; 3])),
                    inertia: inertia_from_rows(lc.inertia.unwrap_or([[0.0; 3]; 3])),
                    motor_inertia: lc.motor_inertia.unwrap_or(0.0),
                    gear_ratio: lc.gear_ratio.unwrap_or(1.0),
                    viscous: lc.viscous.unwrap_or(0.0),
                    coulomb: lc.coulomb.unwrap_or(0.0),
                },
            }
        })
        .collect();
    let gravity = Vector3::from(cfg.gravity.unwrap_or([0.0, 0.0, -GRAVITY_ACCEL]));
    RobotModel::new(links, gravity)
}

fn inertia_from_rows(rows: [[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| rows[r][c])
}

/// Serializes a model to config text that `load_robot_config` reparses to a
/// field-wise identical model.
pub fn serialize_robot_config(model: &RobotModel) -> String {
    let mut link = BTreeMap::new();
    for (i, l) in model.links().iter().enumerate() {
        let inertia = [
            [l.dynamics.inertia[(0, 0)], l.dynamics.inertia[(0, 1)], l.dynamics.inertia[(0, 2)]],
            [l.dynamics.inertia[(1, 0)], l.dynamics.inertia[(1, 1)], l.dynamics.inertia[(1, 2)]],
            [l.dynamics.inertia[(2, 0)], l.dynamics.inertia[(2, 1)], l.dynamics.inertia[(2, 2)]],
        ];
        link.insert(
            (i + 1).to_string(),
            LinkConfig {
                a: Some(l.dh.a),
                alpha: Some(l.dh.alpha),
                d: Some(l.dh.d_offset),
                offset: Some(l.dh.theta_offset),
                mass: Some(l.dynamics.mass),
                com: Some([l.dynamics.com.x, l.dynamics.com.y, l.dynamics.com.z]),
                inertia: Some(inertia),
                motor_inertia: Some(l.dynamics.motor_inertia),
                gear_ratio: Some(l.dynamics.gear_ratio),
                viscous: Some(l.dynamics.viscous),
                coulomb: Some(l.dynamics.coulomb),
            },
        );
    }
    let g = model.gravity();
    let cfg = RobotConfig { gravity: Some([g.x, g.y, g.z]), link };
    toml::to_string(&cfg).expect("config serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_one_link_config() {
        let model = load_robot_config("[link.1]\nmass = 1.0\na = 1.0\n").unwrap();
        assert_eq!(model.dof(), 1);
        assert_eq!(model.links()[0].dynamics.mass, 1.0);
        assert_eq!(model.link_lengths(), &[1.0]);
        assert_eq!(model.gravity(), Vector3::new(0.0, 0.0, -9.8));
        assert_eq!(model.links()[0].dynamics.gear_ratio, 1.0);
    }

    #[test]
    fn negative_mass_names_field() {
        let err = load_robot_config("[link.1]\nmass = -1.0\n").unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("mass"), "message: {msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(load_robot_config("[link.1\nmass=1"), Err(Error::Parse(_))));
    }

    #[test]
    fn non_psd_inertia_rejected() {
        let text = "[link.1]\nmass = 1.0\ninertia = [[-1.0,0,0],[0,1.0,0],[0,0,1.0]]\n";
        let err = load_robot_config(text).unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("inertia"), "message: {msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_inertia_rejected() {
        let text = "[link.1]\nmass = 1.0\ninertia = [[1.0,0.5,0],[0,1.0,0],[0,0,1.0]]\n";
        assert!(matches!(load_robot_config(text), Err(Error::Validation(_))));
    }

    #[test]
    fn preset_matches_table() {
        let m = exoskeleton_default();
        assert_eq!(m.dof(), 4);
        let dh: Vec<_> = m.links().iter().map(|l| l.dh).collect();
        assert_eq!(dh[0], DhLink { a: 0.05, alpha: -FRAC_PI_2, d_offset: 0.0, theta_offset: 0.0 });
        assert_eq!(
            dh[1],
            DhLink { a: 0.13, alpha: FRAC_PI_2, d_offset: 0.0, theta_offset: -FRAC_PI_2 }
        );
        assert_eq!(dh[2], DhLink { a: 0.30, alpha: 0.0, d_offset: 0.0, theta_offset: 0.0 });
        assert_eq!(dh[3], DhLink { a: 0.30, alpha: 0.0, d_offset: 0.0, theta_offset: 0.0 });
        assert_eq!(m.gravity(), Vector3::new(0.0, 0.0, -9.8));
        assert!((m.gravity().norm() - 9.8).abs() < 1e-9);
        assert_eq!(m.link_lengths(), &[0.05, 0.13, 0.30, 0.30]);
    }

    #[test]
    fn preset_is_deterministic() {
        assert_eq!(exoskeleton_default(), exoskeleton_default());
    }

    #[test]
    fn preset_round_trips_through_config() {
        let preset = exoskeleton_default();
        let text = serialize_robot_config(&preset);
        let reloaded = load_robot_config(&text).unwrap();
        assert_eq!(preset, reloaded);
    }

    #[test]
    fn round_trip_is_exact_for_awkward_floats() {
        let text = "gravity = [0.1, -0.2, -9.81]\n\
                    [link.1]\na = 0.30000000000000004\nalpha = 1.1\nmass = 0.1\n\
                    com = [0.123456789012345678, 0.0, -0.3]\nviscous = 1e-7\n";
        let model = load_robot_config(text).unwrap();
        let reloaded = load_robot_config(&serialize_robot_config(&model)).unwrap();
        assert_eq!(model, reloaded);
    }

    #[test]
    fn non_contiguous_link_keys_rejected() {
        let err = load_robot_config("[link.1]\nmass=1.0\n[link.3]\nmass=1.0\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn offset_out_of_range_rejected() {
        let err = load_robot_config("[link.1]\noffset = 4.0\n").unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("offset"), "message: {msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }
}
