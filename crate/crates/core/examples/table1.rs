//! Direct maximisation over unitaries for every (M, N) cell of the reference
//! table, with the deviation from the published value.
//!
//!     cargo run --release --example table1 -- [restarts] [seed]

use std::time::Instant;

use lgtc::maxviol::{default_restarts, maximize_pair};
use lgtc::reference::table1;

fn main() -> lgtc::Result<()> {
    let mut args = std::env::args().skip(1);
    let restarts: Option<usize> = args.next().and_then(|a| a.parse().ok());
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(2013);

    println!("{:>2} {:>2} {:>10} {:>8} {:>9} {:>14} {:>7}", "M", "N", "K3", "ref", "dev", "blocks", "secs");
    for cell in &table1().max {
        let start = Instant::now();
        let r = restarts.unwrap_or_else(|| default_restarts(cell.n));
        let (row, _) = maximize_pair(cell.m, cell.n, r, seed)?;
        println!(
            "{:>2} {:>2} {:>10.6} {:>8.4} {:>+9.5} {:>14} {:>7.1}",
            row.m,
            row.n,
            row.k3_max,
            cell.k3_max,
            row.k3_max - cell.k3_max,
            format!("{:?}", row.block_sizes),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
