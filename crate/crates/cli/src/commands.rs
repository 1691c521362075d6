use std::fmt::Write as _;
use std::path::Path;

use latentid::hmm::{self, HiddenMarkovModel};
use latentid::latent_class::{self, Certificate, LatentClassModel, Verdict};
use latentid::model_file::{self, Model, ModelFile};
use latentid::nonparametric::{self, NonparametricMixture};
use latentid::random_graph::{self, GraphMixtureModel};
use latentid::recovery::{self, DecomposeOptions};
use latentid::sample::trial_seed;
use latentid::Tripartition;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::simulate::{self, Family, SimulationConfig};
use crate::{CliError, Command, Common, FamilyArg, ModelArgs, Outcome, EXIT_NEGATIVE, EXIT_OK};

const KRUSKAL_ANCHOR: &str = "Kruskal condition, I1+I2+I3 ≥ 2r+2";

pub(crate) fn dispatch(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::CertifyLc { args, tripartition } => certify_lc(args, tripartition.as_deref()),
        Command::SearchTripartition { r, kappas, model, .. } => search_tripartition(*r, kappas.as_deref(), model.as_deref()),
        Command::Bound { r, kappa, .. } => bound(*r, *kappa),
        Command::RecoverLc { args, tripartition } => recover_lc(args, tripartition.as_deref()),
        Command::HmmWindow { r, kappa, .. } => hmm_window(*r, *kappa),
        Command::HmmCertify { args, k } => hmm_certify(args, *k),
        Command::HmmRecover { args, k } => hmm_recover(args, *k),
        Command::GraphCertify { args, m } => graph_certify(args, *m),
        Command::GraphExtract { args, n } => graph_extract(args, *n),
        Command::NonparamCuts { args } => nonparam_cuts(args),
        Command::NonparamRecover { args, queries } => nonparam_recover(args, *queries),
        Command::Simulate { family, trials, r, kappas, kappa, k, n, block_dims, common } => {
            let family = match family {
                FamilyArg::LatentClass => Family::LatentClass {
                    kappas: kappas.clone().ok_or_else(|| CliError::Usage("--kappas is required".into()))?,
                },
                FamilyArg::Hmm => Family::Hmm { kappa: *kappa, k: *k },
                FamilyArg::Graph => Family::Graph { n: *n },
                FamilyArg::Nonparametric => {
                    Family::Nonparametric { block_dims: block_dims.clone().unwrap_or_else(|| vec![1, 1, 1]) }
                }
            };
            run_simulation(SimulationConfig { family, r: *r, trials: *trials, seed: common.seed, tol: common.tol })
        }
    }
}

fn load(path: &Path) -> Result<Model, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    Ok(model_file::parse_model(&text)?)
}

fn wrong_family(model: &Model, expected: &str) -> CliError {
    CliError::Usage(format!("expected a {expected} model file, found {}", model.kind()))
}

fn load_lc(path: &Path) -> Result<LatentClassModel, CliError> {
    match load(path)? {
        Model::LatentClass(m) => Ok(m),
        other => Err(wrong_family(&other, "latent_class")),
    }
}

fn load_hmm(path: &Path) -> Result<HiddenMarkovModel, CliError> {
    match load(path)? {
        Model::Hmm(m) => Ok(m),
        other => Err(wrong_family(&other, "hmm")),
    }
}

fn load_graph(path: &Path) -> Result<GraphMixtureModel, CliError> {
    match load(path)? {
        Model::GraphMixture(m) => Ok(m),
        other => Err(wrong_family(&other, "graph_mixture")),
    }
}

fn load_nonparametric(path: &Path) -> Result<NonparametricMixture, CliError> {
    match load(path)? {
        Model::Nonparametric(m) => Ok(m),
        other => Err(wrong_family(&other, "nonparametric")),
    }
}

fn decompose_options(c: &Common) -> DecomposeOptions {
    DecomposeOptions { seed: c.seed, tol: c.tol, ..DecomposeOptions::default() }
}

/// Parses a 1-based grouping such as `1,2/3/4,5`.
pub(crate) fn parse_tripartition(s: &str, p: usize) -> Result<Tripartition, CliError> {
    let parts: Vec<&str> = s.split('/').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("tripartition `{s}` needs three blocks separated by `/`")));
    }
    let mut blocks: [Vec<usize>; 3] = Default::default();
    for (block, part) in blocks.iter_mut().zip(parts) {
        for item in part.split(',').filter(|x| !x.trim().is_empty()) {
            let j: usize = item.trim().parse().map_err(|_| CliError::Usage(format!("bad variable index `{item}`")))?;
            if j == 0 {
                return Err(CliError::Usage("variable indices start at 1".into()));
            }
            block.push(j - 1);
        }
    }
    Ok(Tripartition::new(blocks, p)?)
}

fn certificate_text(cert: &Certificate, classes: &str) -> String {
    let mut s = String::new();
    writeln!(s, "{KRUSKAL_ANCHOR}").unwrap();
    if let Some(w) = &cert.witness {
        writeln!(s, "  tripartition: {w}").unwrap();
    }
    let [a, b, c] = cert.kruskal_ranks;
    writeln!(s, "  Kruskal ranks: ({a}, {b}, {c}), sum {} vs 2r+2 = {} ({classes})", cert.rank_sum(), cert.threshold).unwrap();
    let verdict = match cert.verdict() {
        Verdict::Certified => "certified",
        Verdict::NotCertified => "not certified",
        Verdict::Unknown => "unknown (heuristic search found no witness)",
    };
    writeln!(s, "  {verdict}").unwrap();
    s
}

fn certificate_outcome(cert: &Certificate, classes: &str, extra: Value) -> Outcome {
    let code = if cert.holds { EXIT_OK } else { EXIT_NEGATIVE };
    let mut result = json!({ "certificate": cert, "verdict": cert.verdict() });
    if let (Value::Object(map), Value::Object(more)) = (&mut result, extra) {
        map.extend(more);
    }
    Outcome::new(code, certificate_text(cert, classes), result)
}

/// Grouping used to reduce a model to three variables: the given one,
/// the identity for three variables, or the generic search witness.
fn choose_tripartition(model: &LatentClassModel, given: Option<&str>) -> Result<Tripartition, CliError> {
    let p = model.p();
    if let Some(s) = given {
        return parse_tripartition(s, p);
    }
    if p == 3 {
        return Ok(Tripartition::new([vec![0], vec![1], vec![2]], 3)?);
    }
    let search = latent_class::tripartition_search(model.r(), &model.kappas())?;
    Ok(search.witness.expect("search reports a witness"))
}

fn certify_lc(args: &ModelArgs, tripartition: Option<&str>) -> Result<Outcome, CliError> {
    let model = load_lc(&args.model)?;
    let tri = choose_tripartition(&model, tripartition)?;
    let mut cert = latent_class::kruskal_certificate(&model.clumped(&tri)?, args.common.rank_tol)?;
    cert.witness = Some(tri);
    Ok(certificate_outcome(&cert, &format!("r = {}", model.r()), json!({ "r": model.r(), "kappas": model.kappas() })))
}

fn search_tripartition(r: Option<usize>, kappas: Option<&[usize]>, model: Option<&Path>) -> Result<Outcome, CliError> {
    let (r, kappas) = match (r, kappas, model) {
        (Some(r), Some(k), None) => (r, k.to_vec()),
        (None, None, Some(path)) => {
            let m = load_lc(path)?;
            (m.r(), m.kappas())
        }
        _ => return Err(CliError::Usage("give either --r with --kappas, or --model".into())),
    };
    let cert = latent_class::tripartition_search(r, &kappas)?;
    let (free, cells) = latent_class::param_dimension(r, &kappas);
    let mut out = certificate_outcome(
        &cert,
        &format!("r = {r}"),
        json!({ "r": r, "kappas": kappas, "free_parameters": free, "cells": cells.to_string() }),
    );
    let head = match cert.verdict() {
        Verdict::Certified => format!("certificate found: {}", cert.witness.as_ref().expect("witness")),
        Verdict::NotCertified => format!("no certificate (max sum {} < {})", cert.rank_sum(), cert.threshold),
        Verdict::Unknown => format!("unknown (heuristic split reaches {} < {})", cert.rank_sum(), cert.threshold),
    };
    out.text = format!("{head}\n{}", out.text);
    Ok(out)
}

fn bound(r: usize, kappa: usize) -> Result<Outcome, CliError> {
    if r == 0 || kappa < 2 {
        return Err(CliError::Usage("need --r >= 1 and --kappa >= 2".into()));
    }
    let p = latent_class::min_variables_bound(r, kappa);
    Ok(Outcome::new(EXIT_OK, format!("{p}\n"), json!({ "r": r, "kappa": kappa, "min_variables": p })))
}

fn recover_lc(args: &ModelArgs, tripartition: Option<&str>) -> Result<Outcome, CliError> {
    let model = load_lc(&args.model)?;
    let tri = choose_tripartition(&model, tripartition)?;
    let joint = latent_class::joint_distribution(&model)?;
    let rec = recovery::recover_latent_class(&joint, model.r(), &tri, &decompose_options(&args.common))?;
    let align = recovery::align_models(&rec.model, &model)?;
    let aligned = rec.model.permuted(&align.permutation)?;
    let text = format!(
        "recovered r = {} classes via tripartition {tri}\n  residual {:.3e}, alignment error {:.3e}, retries {}\n",
        model.r(),
        rec.residual,
        align.max_abs_error,
        rec.retries_used
    );
    let result = json!({
        "tripartition": tri,
        "residual": rec.residual,
        "alignment_error": align.max_abs_error,
        "permutation": align.permutation,
        "retries_used": rec.retries_used,
        "model": ModelFile::from(&Model::LatentClass(aligned)),
    });
    Ok(Outcome::new(EXIT_OK, text, result))
}

fn hmm_window(r: usize, kappa: usize) -> Result<Outcome, CliError> {
    if r == 0 || kappa < 2 {
        return Err(CliError::Usage("need --r >= 1 and --kappa >= 2".into()));
    }
    let k = hmm::min_window(r, kappa);
    Ok(Outcome::new(
        EXIT_OK,
        format!("k={k}, window {}\n", 2 * k + 1),
        json!({ "r": r, "kappa": kappa, "k": k, "window": 2 * k + 1 }),
    ))
}

fn hmm_certify(args: &ModelArgs, k: Option<usize>) -> Result<Outcome, CliError> {
    let model = load_hmm(&args.model)?;
    let k = k.unwrap_or_else(|| hmm::min_window(model.r(), model.kappa()));
    let cert = hmm::hmm_certificate(&model, k, args.common.rank_tol)?;
    let mut out = certificate_outcome(&cert, &format!("r = {}", model.r()), json!({ "k": k, "window": 2 * k + 1 }));
    out.text = format!("window 2k+1 = {} (k = {k})\n{}", 2 * k + 1, out.text);
    Ok(out)
}

fn hmm_recover(args: &ModelArgs, k: Option<usize>) -> Result<Outcome, CliError> {
    let model = load_hmm(&args.model)?;
    let k = k.unwrap_or_else(|| hmm::min_window(model.r(), model.kappa()));
    let t = hmm::window_tensor(&model, k)?;
    let rec = hmm::recover_hmm(&t, model.r(), model.kappa(), k, &decompose_options(&args.common))?;
    let align = hmm::align_hmm(&rec.model, &model)?;
    let text = format!(
        "recovered HMM with r = {} from window 2k+1 = {}\n  residual {:.3e}, alignment error {:.3e}\n",
        model.r(),
        2 * k + 1,
        rec.residual,
        align.max_abs_error
    );
    let result = json!({
        "k": k,
        "residual": rec.residual,
        "alignment_error": align.max_abs_error,
        "permutation": align.permutation,
        "retries_used": rec.retries_used,
        "model": ModelFile::from(&Model::Hmm(rec.model)),
    });
    Ok(Outcome::new(EXIT_OK, text, result))
}

fn graph_certify(args: &ModelArgs, m: usize) -> Result<Outcome, CliError> {
    if m < 2 {
        return Err(CliError::Usage("need --m >= 2".into()));
    }
    let model = load_graph(&args.model)?;
    let cert = random_graph::graph_certificate(&model, m, args.common.rank_tol)?;
    let lattice = random_graph::lattice_partitions(m);
    let a = random_graph::conditional_graph_matrix(&model, m)?;
    let rank = latentid::tensor::numerical_rank(&a, args.common.rank_tol)?;
    let n = m * m;
    let mut out = certificate_outcome(
        &cert,
        &format!("r = {}^{n} joint node states", model.r()),
        json!({ "m": m, "nodes": n, "edge_disjoint": lattice.edge_disjoint(), "subgraph_rank": rank }),
    );
    out.text = format!(
        "{n} nodes on a {m}x{m} lattice, K_{m} conditional matrix {}x{} of rank {rank}\n{}",
        a.rows(),
        a.cols(),
        out.text
    );
    Ok(out)
}

fn graph_extract(args: &ModelArgs, n: usize) -> Result<Outcome, CliError> {
    let model = load_graph(&args.model)?;
    if model.r() != 2 {
        return Err(CliError::Usage(format!("extraction needs r = 2, model has r = {}", model.r())));
    }
    if !(2..=20).contains(&n) {
        return Err(CliError::Usage("need 2 <= --n <= 20".into()));
    }
    let truth = [model.pi[0], model.pi[1]];
    let (p11, p12, p22) = (model.p.get(0, 0), model.p.get(0, 1), model.p.get(1, 1));
    let params = extract_hidden(&model, n, args.common.seed, args.common.tol)?;
    let err = params.error_up_to_swap(truth, p11, p12, p22);
    let text = format!(
        "extracted pi = ({:.6}, {:.6}), p11 = {:.6}, p12 = {:.6}, p22 = {:.6} [{:?}]\n  error up to label swap {:.3e}\n",
        params.pi[0], params.pi[1], params.p11, params.p12, params.p22, params.branch, err
    );
    Ok(Outcome::new(EXIT_OK, text, json!({ "n": n, "parameters": params, "error": err })))
}

/// Runs extraction against a prior shuffled by `seed`.
pub(crate) fn extract_hidden(
    model: &GraphMixtureModel,
    n: usize,
    seed: u64,
    tol: f64,
) -> latentid::Result<random_graph::GraphParameters> {
    let v = random_graph::node_state_prior(&model.pi, n)?;
    let mut perm: Vec<usize> = (0..v.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(trial_seed(seed, 0)));
    let v_perm: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
    let radices = vec![2; n];
    random_graph::extract_parameters(
        &v_perm,
        |row, edge| {
            let states = latentid::tensor::digits_of(perm[row], &radices);
            random_graph::single_edge_marginal(model, &states, edge).expect("valid edge")
        },
        n,
        tol,
    )
}

fn nonparam_cuts(args: &ModelArgs) -> Result<Outcome, CliError> {
    let mix = load_nonparametric(&args.model)?;
    let mut text = String::new();
    let mut rows = Vec::new();
    let mut cut_sets = Vec::new();
    for j in 0..mix.p() {
        let comps = mix.variate(j);
        let cuts = nonparametric::select_cut_points(&comps, &[], &nonparametric::default_grid(&comps), args.common.tol)?;
        let m = nonparametric::binned_conditional_matrix(&comps, &cuts)?;
        let rank = latentid::tensor::numerical_rank(&m, args.common.rank_tol)?;
        writeln!(text, "variate {}: cuts {:?}, {} bins, rank {rank}", j + 1, cuts.cuts, cuts.kappa()).unwrap();
        rows.push(json!({ "variate": j + 1, "cuts": cuts, "bins": cuts.kappa(), "rank": rank }));
        cut_sets.push(cuts);
    }
    let mut pairs = Vec::new();
    for j in 1..mix.p() {
        let rank = nonparametric::bivariate_rank(
            &mix.pi,
            &mix.variate(0),
            &mix.variate(j),
            &cut_sets[0],
            &cut_sets[j],
            args.common.rank_tol,
        )?;
        writeln!(text, "bivariate rank of variates (1, {}): {rank}", j + 1).unwrap();
        pairs.push(json!({ "variates": [1, j + 1], "rank": rank }));
    }
    Ok(Outcome::new(EXIT_OK, text, json!({ "r": mix.r(), "variates": rows, "bivariate": pairs })))
}

/// `count` points per variate spread evenly over the knot range of each coordinate.
pub(crate) fn spread_queries(mix: &NonparametricMixture, count: usize) -> Vec<Vec<Vec<f64>>> {
    (0..mix.p())
        .map(|j| {
            let comps = mix.variate(j);
            let ranges: Vec<(f64, f64)> = (0..mix.block_dims[j])
                .map(|c| {
                    let all = comps.iter().flat_map(|comp| comp.knots()[c].iter().copied());
                    all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
                })
                .collect();
            (0..count)
                .map(|q| {
                    ranges
                        .iter()
                        .enumerate()
                        .map(|(c, &(lo, hi))| {
                            let frac = ((q as f64 + 0.5) / count as f64 + 0.37 * c as f64).fract();
                            lo + (hi - lo) * frac
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn nonparam_recover(args: &ModelArgs, queries: usize) -> Result<Outcome, CliError> {
    if queries == 0 {
        return Err(CliError::Usage("need --queries >= 1".into()));
    }
    let mix = load_nonparametric(&args.model)?;
    let q = spread_queries(&mix, queries);
    let rec = nonparametric::recover_mixture(&mix, &q, None, &decompose_options(&args.common))?;
    let (perm, err) = nonparametric::align_mixture(&rec, &mix, &q);
    let text = format!(
        "recovered r = {} weights {:?}\n  CDF values at {queries} query points per variate, alignment error {err:.3e}\n",
        mix.r(),
        rec.pi
    );
    let result = json!({
        "pi": rec.pi,
        "query_points": q,
        "values": rec.values,
        "chaining": rec.chaining,
        "permutation": perm,
        "alignment_error": err,
        "max_residual": rec.max_residual,
    });
    Ok(Outcome::new(EXIT_OK, text, result))
}

fn run_simulation(config: SimulationConfig) -> Result<Outcome, CliError> {
    if config.trials == 0 {
        return Err(CliError::Usage("need --trials >= 1".into()));
    }
    let report = simulate::simulate(&config)?;
    let code = if report.failures == 0 { EXIT_OK } else { EXIT_NEGATIVE };
    let text = format!(
        "{} trials, {} failures, max alignment error {:.3e}\n",
        report.trials.len(),
        report.failures,
        report.max_error
    );
    let mut out = Outcome::new(code, text, serde_json::to_value(&report).expect("report serializes"));
    out.errors = report.trials.iter().filter_map(|t| t.failure.as_ref().map(|f| format!("trial {}: {f}", t.trial))).collect();
    Ok(out)
}
