use latentid::hmm::{self, HiddenMarkovModel};
use latentid::latent_class::{self, tripartition_search};
use latentid::recovery::{self, DecomposeOptions};
use latentid::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn searched_tripartition_recovers_five_binary_variables() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = sample::latent_class(&mut rng, 3, &[2; 5]);
    let cert = tripartition_search(3, &model.kappas()).unwrap();
    assert!(cert.holds);
    let joint = latent_class::joint_distribution(&model).unwrap();
    let rec = recovery::recover_latent_class(&joint, 3, cert.witness.as_ref().unwrap(), &DecomposeOptions::default()).unwrap();
    assert!(rec.residual <= 1e-8);
    assert!(recovery::align_models(&rec.model, &model).unwrap().max_abs_error <= 1e-8);
}

#[test]
fn wider_hmm_window_recovers_four_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = HiddenMarkovModel::random(&mut rng, 4, 2);
    let k = hmm::min_window(4, 2);
    let t = hmm::window_tensor(&h, k).unwrap();
    let rec = hmm::recover_hmm(&t, 4, 2, k, &DecomposeOptions::default()).unwrap();
    assert!(hmm::align_hmm(&rec.model, &h).unwrap().max_abs_error <= 1e-6);
}
