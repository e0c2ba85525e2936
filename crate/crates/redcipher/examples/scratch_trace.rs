// temporary diagnostic - deleted before ship
use redcipher::sim::{run_f64_loop, SimConfig};

fn main() {
    let config = SimConfig { duration_s: 3.0, ..SimConfig::default() };
    match run_f64_loop(&config) {
        Ok(trace) => {
            for (k, row) in trace.rows.iter().enumerate() {
                if k % 10 == 0 || k < 20 {
                    println!(
                        "t={:5.2} th1={:+9.5} th2={:+9.5} dth1={:+9.4} dth2={:+9.4} T={:+10.4} u={:+10.5}",
                        row.t,
                        row.state.theta1,
                        row.state.theta2,
                        row.state.dtheta1,
                        row.state.dtheta2,
                        row.state.torque,
                        row.u_applied
                    );
                }
                if !row.state.theta1.is_finite() {
                    println!("diverged at k={k}");
                    break;
                }
            }
        }
        Err(e) => println!("error: {e}"),
    }
}
