//! Learns a conceptor from random evidence, negates it and checks the
//! zero-aperture projector.

use conceptor_cam::conceptor::{conceptor_loss, learn_conceptor, negate, EvidenceMatrix};
use conceptor_cam::tensor::{self, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> conceptor_cam::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let z = EvidenceMatrix::from_matrix(Matrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0)))?;

    for alpha in [0.5, 1.0, 4.0] {
        let c = learn_conceptor(&z, alpha)?;
        let eig = tensor::sym_eigenvalues(c.matrix())?;
        println!(
            "alpha {alpha:>4}: loss {:.6}  spectrum [{:.4}, {:.4}]",
            conceptor_loss(&c, &z)?,
            eig[0],
            eig[eig.len() - 1]
        );
    }

    let c = learn_conceptor(&z, 1.0)?;
    let back = negate(&negate(&c));
    println!("NOT(NOT(C)) == C: {}", back == c);

    // Rank-3 evidence in 5 dimensions: the projector has three unit eigenvalues.
    let p = learn_conceptor(&z, 0.0)?;
    let eig = tensor::sym_eigenvalues(p.matrix())?;
    println!("projector spectrum {:?}", eig.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    Ok(())
}
