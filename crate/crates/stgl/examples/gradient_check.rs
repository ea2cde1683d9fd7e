//! Finite-difference verification of every differentiable op plus the full
//! loss, printed as a table.

use stgl::gradcheck::{
    run_end_to_end_suite, run_op_suite, worst_of, DEFAULT_EPS, DEFAULT_TOLERANCE,
};

fn main() {
    let mut checks = run_op_suite(10, DEFAULT_EPS, 0).expect("suite runs");
    checks.extend(run_end_to_end_suite(3, DEFAULT_EPS, 0).expect("suite runs"));
    for c in &checks {
        let flag = if c.max_rel_error <= DEFAULT_TOLERANCE { "ok" } else { "FAIL" };
        println!("{:<32} {:>10.3e}  {}", c.name, c.max_rel_error, flag);
    }
    println!("worst: {:.3e} (tolerance {:.0e})", worst_of(&checks), DEFAULT_TOLERANCE);
}
