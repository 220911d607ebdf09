//! Maximum of K3 over Omega*tau for the precessing spin, j = 1/2 .. 5.
//!
//!     cargo run --release --example spin_scan -- 10

use std::f64::consts::PI;

use lgtc::spinmodel::{find_max_tau, SpinModel};

fn main() -> lgtc::Result<()> {
    let max_twice_j: u32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    println!("{:>5} {:>3} {:>14} {:>14}", "j", "N", "Omega*tau", "max K3");
    for twice_j in 1..=max_twice_j {
        let model = SpinModel::from_twice_j(twice_j)?;
        let (tau, k3) = find_max_tau(&model, (0.0, PI))?;
        println!("{:>5} {:>3} {tau:>14.10} {k3:>14.10}", twice_j as f64 / 2.0, twice_j + 1);
    }
    Ok(())
}
