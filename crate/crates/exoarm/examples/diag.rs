use exoarm::sim::{run_scenario, ControllerKind, Scenario};
use exoarm::*;
use nalgebra::DVector;

fn main() {
    let model = exoskeleton_default();
    let params = CompParams::from_model(&model).unwrap();
    let cal = calibrate_angle_map(&model, &params).unwrap();

    let q0 = DVector::from_vec(vec![0.0, 0.6, -0.3, 0.5]);
    let scenario = Scenario { duration: 2.0, ..Scenario::hold(q0.clone(), ControllerKind::Static) };
    let trace = run_scenario(&model, Some(&params), Some(&cal.map), &scenario).unwrap();
    for k in [0usize, 1, 2, 10, 100, 500, 1000, 2000] {
        let row = &trace.rows[k];
        let drift = (&row.q - &q0).amax();
        println!("t={:.3} drift={:.3e} qd_max={:.3e} tau_cmd={:?}", row.t, drift, row.qd.amax(), row.tau_cmd.as_slice());
    }

    // direct forward dynamics at the pose with the static torque
    let tau = static_gravity_torque(&params, &cal.map.map(&q0));
    let qdd = forward_dynamics(&model, &q0, &DVector::zeros(4), &tau).unwrap();
    println!("qdd at pose: {:?}", qdd.as_slice());
}
