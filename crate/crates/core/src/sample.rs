//! Random parameter draws with independent uniform entries, rows renormalized.

use rand::Rng;

use crate::latent_class::LatentClassModel;
use crate::tensor::{Matrix, ProbabilityVector, StochasticMatrix};

/// Derives the seed of trial `index` from a master seed (splitmix64 of the
/// master seed mixed with the counter), independent of execution order.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// A probability vector with entries bounded away from zero.
pub fn probability_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ProbabilityVector {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    ProbabilityVector::new(v.into_iter().map(|x| x / s).collect()).expect("positive weights")
}

pub fn stochastic_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> StochasticMatrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let row = m.row_mut(i);
        row.iter_mut().for_each(|x| *x = rng.gen::<f64>());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    StochasticMatrix::new(m).expect("rows normalized")
}

pub fn latent_class<R: Rng + ?Sized>(rng: &mut R, r: usize, kappas: &[usize]) -> LatentClassModel {
    let pi = probability_vector(rng, r);
    let emissions = kappas.iter().map(|&k| stochastic_matrix(rng, r, k)).collect();
    LatentClassModel::new(pi, emissions).expect("valid random model")
}
