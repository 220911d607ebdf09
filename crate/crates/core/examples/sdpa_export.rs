//! Writes the moment relaxation in SDPA sparse format for external solvers.
//!
//!     cargo run --release --example sdpa_export -- 3 /tmp/k3_m3.dat-s

use std::path::PathBuf;

use lgtc::momentsdp::MomentProblem;
use lgtc::sdpa::{export_sdpa, SdpaProblem};

fn main() -> lgtc::Result<()> {
    let mut args = std::env::args().skip(1);
    let m: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join(format!("k3_m{m}.dat-s")));

    let problem = MomentProblem::new(m)?;
    export_sdpa(&problem, &path)?;

    let back = SdpaProblem::parse(&std::fs::read_to_string(&path)?)?;
    println!("wrote {}", path.display());
    println!("  matrix dimension {}", back.block_sizes[0]);
    println!("  constraints      {}", back.num_constraints());
    println!("  nonzeros         {}", back.entries.len());
    Ok(())
}
