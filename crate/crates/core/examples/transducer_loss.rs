//! Scores a random joint-network output with the transducer loss, checks it
//! against path enumeration and prints the forward variables.

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnt_lab::loss::oracle::rnnt_brute_force;
use rnnt_lab::loss::{rnnt_lattice, rnnt_loss};
use rnnt_lab::numerics::Tensor;

fn main() -> Result<()> {
    let (frames, targets, blank) = (4, vec![0, 1, 0], 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let classes = blank + 1;
    let data = (0..frames * (targets.len() + 1) * classes).map(|_| rng.random_range(-2.0..2.0)).collect();
    let logits = Tensor::new(vec![frames, targets.len() + 1, classes], data)?;

    let out = rnnt_loss(&logits, &targets, blank)?;
    let enumerated = rnnt_brute_force(&logits, &targets, blank)?;
    println!("loss {:.12}  enumerated {:.12}", out.value, enumerated);

    let lattice = rnnt_lattice(&logits, &targets, blank)?;
    println!("log alpha (rows = frames, columns = tokens emitted):");
    for t in 0..frames {
        let row: Vec<String> = (0..=targets.len()).map(|u| format!("{:8.3}", lattice.alpha.at(&[t, u]))).collect();
        println!("  {}", row.join(" "));
    }
    for n in 0..lattice.num_diagonals() {
        println!("anti-diagonal {n}: log mass {:.6}", lattice.diagonal_log_mass(n));
    }
    let occupancy = lattice.occupancy(&targets, blank);
    println!(
        "expected steps {:.6} (frames + tokens = {})",
        occupancy.data().iter().sum::<f64>(),
        frames + targets.len()
    );
    Ok(())
}
