//! Largest K3 for one (N, M) pair, searching over both unitaries, the
//! initial state and every block-size pattern.
//!
//!     cargo run --release --example maximize_violation -- 4 3 40 2013

use lgtc::maxviol::maximize_pair;
use lgtc::measure::lgi_k3;
use lgtc::qcore::CMatrix;

fn main() -> lgtc::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let arg = |i: usize, d: u64| args.get(i).copied().unwrap_or(d);
    let (n, m, restarts, seed) = (arg(0, 4) as usize, arg(1, 3) as usize, arg(2, 40) as usize, arg(3, 2013));

    let (row, res) = maximize_pair(m, n, restarts, seed)?;
    println!("N = {n}, M = {m}: K3 = {:.8} with blocks {:?}", res.k3_max, row.block_sizes);

    // The optimiser reports the state at the first measurement, so replay with
    // an identity first step.
    let scheme = lgtc::MeasurementScheme::from_block_sizes(&row.block_sizes, lgtc::measure::canonical_labels(m))?;
    let check = lgi_k3(&res.rho0, &CMatrix::identity(n, n), &res.u21, &res.u32, &scheme)?;
    println!("replay: C21 = {:.6}, C32 = {:.6}, C31 = {:.6}, K3 = {:.8}", check.c21, check.c32, check.c31, check.k3);
    println!("restarts {restarts}, seed {seed}, converged {}", res.converged);
    Ok(())
}
