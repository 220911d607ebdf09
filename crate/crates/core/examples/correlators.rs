//! Two-time correlators and K3 for a random qutrit strategy, plus the spin
//! model at its qutrit optimum.
//!
//!     cargo run --release --example correlators -- 7

use lgtc::measure::{lgi_k3, DensityMatrix, MeasurementScheme};
use lgtc::qcore::{random_state_vector, random_unitary, CMatrix};
use lgtc::spinmodel::SpinModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lgtc::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let scheme = MeasurementScheme::from_block_sizes(&[2, 1], vec![1, -1])?;
    let rho = DensityMatrix::pure(&random_state_vector(3, &mut rng))?;
    let (u21, u32) = (random_unitary(3, &mut rng), random_unitary(3, &mut rng));
    let r = lgi_k3(&rho, &CMatrix::identity(3, 3), &u21, &u32, &scheme)?;
    println!("random:  C21 {:+.6}  C32 {:+.6}  C31 {:+.6}  K3 {:+.6}", r.c21, r.c32, r.c31, r.k3);

    let r = SpinModel::from_twice_j(2)?.lgi_at(1.3038754337)?;
    println!("spin-1:  C21 {:+.6}  C32 {:+.6}  C31 {:+.6}  K3 {:+.6}", r.c21, r.c32, r.c31, r.k3);
    Ok(())
}
