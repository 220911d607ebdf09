//! Dimension-independent K3 bounds from the moment relaxation.
//!
//!     cargo run --release --example sdp_bound -- 2 3 4

use std::time::Instant;

use lgtc::momentsdp::MomentProblem;

fn main() -> lgtc::Result<()> {
    let ms: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ms = if ms.is_empty() { vec![2, 3, 4] } else { ms };
    println!("{:>3} {:>5} {:>12} {:>10} {:>5} {:>10} {:>8}", "M", "dim", "bound", "gap", "iter", "residual", "secs");
    for m in ms {
        let start = Instant::now();
        let problem = MomentProblem::new(m)?;
        let sol = problem.solve(1e-9)?;
        println!(
            "{:>3} {:>5} {:>12.7} {:>10.2e} {:>5} {:>10.2e} {:>8.2}",
            m,
            problem.dim,
            sol.optimum,
            sol.duality_gap,
            sol.iterations,
            sol.max_residual,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
