//! Round trips over random models. Trial `i` draws everything from
//! `trial_seed(seed, i)`, so results do not depend on scheduling.

use latentid::hmm::{self, HiddenMarkovModel};
use latentid::latent_class;
use latentid::nonparametric::{self, NonparametricMixture};
use latentid::random_graph::GraphMixtureModel;
use latentid::recovery::{self, DecomposeOptions};
use latentid::sample::{self, trial_seed};
use latentid::{Error, Result, Tripartition};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::extract_hidden;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    LatentClass { kappas: Vec<usize> },
    Hmm { kappa: usize, k: Option<usize> },
    /// Two-state graph mixtures, checked on both weight branches per trial.
    Graph { n: usize },
    Nonparametric { block_dims: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub family: Family,
    pub r: usize,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    /// Max-abs parameter error after label alignment.
    pub error: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub trials: Vec<TrialResult>,
    pub max_error: f64,
    pub failures: usize,
}

/// Checks the configuration once, before any trial runs.
fn prepare(config: &SimulationConfig) -> Result<Option<Tripartition>> {
    let r = config.r;
    if r == 0 {
        return Err(Error::InvalidModel("need r >= 1".into()));
    }
    match &config.family {
        Family::LatentClass { kappas } => {
            let search = latent_class::tripartition_search(r, kappas)?;
            let tri = if kappas.len() == 3 { Tripartition::new([vec![0], vec![1], vec![2]], 3)? } else {
                search.witness.expect("witness")
            };
            Ok(Some(tri))
        }
        Family::Hmm { kappa, k } => {
            if *kappa < 2 || *k == Some(0) {
                return Err(Error::InvalidModel("need kappa >= 2 and k >= 1".into()));
            }
            Ok(None)
        }
        Family::Graph { n } => {
            if r != 2 || !(2..=20).contains(n) {
                return Err(Error::InvalidModel("graph trials need r = 2 and 2 <= n <= 20".into()));
            }
            Ok(None)
        }
        Family::Nonparametric { block_dims } => {
            if block_dims.len() < 3 {
                return Err(Error::TooFewVariables(block_dims.len()));
            }
            if block_dims.iter().any(|&b| b == 0 || b > 2) {
                return Err(Error::InvalidModel("block sizes must be 1 or 2".into()));
            }
            Ok(None)
        }
    }
}

fn one_trial(config: &SimulationConfig, tri: Option<&Tripartition>, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = DecomposeOptions { seed, tol: config.tol, ..DecomposeOptions::default() };
    let r = config.r;
    match &config.family {
        Family::LatentClass { kappas } => {
            let model = sample::latent_class(&mut rng, r, kappas);
            let joint = latent_class::joint_distribution(&model)?;
            let rec = recovery::recover_latent_class(&joint, r, tri.expect("prepared"), &opts)?;
            Ok(recovery::align_models(&rec.model, &model)?.max_abs_error)
        }
        Family::Hmm { kappa, k } => {
            let model = HiddenMarkovModel::random(&mut rng, r, *kappa);
            let k = k.unwrap_or_else(|| hmm::min_window(r, *kappa));
            let t = hmm::window_tensor(&model, k)?;
            let rec = hmm::recover_hmm(&t, r, *kappa, k, &opts)?;
            Ok(hmm::align_hmm(&rec.model, &model)?.max_abs_error)
        }
        Family::Graph { n } => {
            let (p11, p12, p22) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let w = rng.gen_range(0.1..0.9);
            let mut worst: f64 = 0.0;
            for pi in [[w, 1.0 - w], [0.5, 0.5]] {
                let model = GraphMixtureModel::two_state(pi, p11, p12, p22)?;
                let got = extract_hidden(&model, *n, seed, 1e-12)?;
                worst = worst.max(got.error_up_to_swap(pi, p11, p12, p22));
            }
            Ok(worst)
        }
        Family::Nonparametric { block_dims } => {
            let mix = NonparametricMixture::random(&mut rng, r, block_dims, 5);
            let q: Vec<Vec<Vec<f64>>> = block_dims
                .iter()
                .map(|&b| (0..20).map(|_| (0..b).map(|_| rng.gen_range(0.0..10.0)).collect()).collect())
                .collect();
            let rec = nonparametric::recover_mixture(&mix, &q, None, &opts)?;
            Ok(nonparametric::align_mixture(&rec, &mix, &q).1)
        }
    }
}

pub fn simulate(config: &SimulationConfig) -> Result<SimulationReport> {
    let tri = prepare(config)?;
    let trials: Vec<TrialResult> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(config.seed, i as u64);
            match one_trial(config, tri.as_ref(), seed) {
                Ok(e) => TrialResult { trial: i, seed, error: Some(e), failure: None },
                Err(e) => TrialResult { trial: i, seed, error: None, failure: Some(e.to_string()) },
            }
        })
        .collect();
    let max_error = trials.iter().filter_map(|t| t.error).fold(0.0, f64::max);
    let failures = trials.iter().filter(|t| t.failure.is_some()).count();
    Ok(SimulationReport { config: config.clone(), trials, max_error, failures })
}
