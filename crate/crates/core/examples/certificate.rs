//! Builds the moment matrix of an explicit quantum strategy and checks it is a
//! feasible point of the relaxation, so its objective can never exceed the
//! bound.
//!
//!     cargo run --release --example certificate -- 5 3

use lgtc::maxviol::maximize_pair;
use lgtc::measure::canonical_labels;
use lgtc::momentsdp::MomentProblem;
use lgtc::MeasurementScheme;

fn main() -> lgtc::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (n, m) = (args.first().copied().unwrap_or(5), args.get(1).copied().unwrap_or(3));

    let (row, res) = maximize_pair(m, n, 20, 1)?;
    let scheme = MeasurementScheme::from_block_sizes(&row.block_sizes, canonical_labels(m))?;
    let problem = MomentProblem::new(m)?;
    let y = problem.certificate(&res.rho0, &res.u21, &res.u32, &scheme)?;
    let bound = problem.solve(1e-9)?.optimum;

    println!("strategy K3      {:.10}", res.k3_max);
    println!("moment objective {:.10}", problem.objective_value(&y));
    println!("max residual     {:.2e}", problem.max_residual(&y));
    println!("min eigenvalue   {:.2e}", y.symmetric_eigenvalues().min());
    println!("bound            {:.10}", bound);
    Ok(())
}
