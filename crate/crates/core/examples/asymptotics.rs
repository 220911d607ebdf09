//! K3 at Omega*tau = pi/2: closed form, simulation and the large-spin curve.
//!
//!     cargo run --release --example asymptotics -- 200

use lgtc::spinmodel::{fixed_tau_lgi, k3_asymptote, k3_special};

fn main() -> lgtc::Result<()> {
    let max_twice_j: u32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    println!("{:>6} {:>14} {:>14} {:>14} {:>10}", "j", "closed form", "simulated", "asymptote", "gap");
    for twice_j in 1..=max_twice_j {
        let j = twice_j as f64 / 2.0;
        let exact = k3_special(twice_j);
        // Dense simulation gets slow past a few hundred levels.
        let sim = if twice_j <= 40 { format!("{:14.10}", fixed_tau_lgi(twice_j)?.k3) } else { "-".into() };
        let asym = k3_asymptote(j);
        if twice_j <= 10 || twice_j % 20 == 0 {
            println!("{j:>6} {exact:>14.10} {sim:>14} {asym:>14.10} {:>10.2e}", exact - asym);
        }
    }
    Ok(())
}
