//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when
//! any criterion fails.

use std::time::Instant;

use latentid::hmm::{self, HiddenMarkovModel};
use latentid::latent_class::{self, LatentClassModel};
use latentid::nonparametric::{self, CdfComponent, CutPointSet, NonparametricMixture};
use latentid::random_graph::{self, ExtractionBranch, GraphMixtureModel};
use latentid::recovery::{self, DecomposeOptions};
use latentid::sample::{self, trial_seed};
use latentid::tensor::{
    digits_of, flat_index, khatri_rao, kruskal_rank, numerical_rank, triple_product, unclump, RANK_TOL,
};
use latentid::{Matrix, Tripartition};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MASTER_SEED: u64 = 20_240_601;

// Tolerances pinned from the criteria.
const LC_ROUND_TRIP_TOL: f64 = 1e-8;
const HMM_BLOCK_TOL: f64 = 1e-12;
const HMM_ROUND_TRIP_TOL: f64 = 1e-6;
const EXTRACTION_TOL: f64 = 1e-12;
const NONPARAMETRIC_TOL: f64 = 1e-6;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn rng_for(criterion: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(MASTER_SEED ^ criterion, trial))
}

fn three_way_round_trip() -> Verdict {
    let tri = Tripartition::new([vec![0], vec![1], vec![2]], 3).unwrap();
    let (mut ok, mut worst) = (0, 0.0f64);
    for trial in 0..100 {
        let mut rng = rng_for(1, trial);
        let model = sample::latent_class(&mut rng, 3, &[4, 4, 3]);
        let joint = latent_class::joint_distribution(&model).unwrap();
        let opts = DecomposeOptions::with_seed(trial);
        if let Ok(rec) = recovery::recover_latent_class(&joint, 3, &tri, &opts) {
            let e = recovery::align_models(&rec.model, &model).unwrap().max_abs_error;
            worst = worst.max(e);
            ok += usize::from(e <= LC_ROUND_TRIP_TOL);
        }
    }
    verdict(ok == 100, format!("{ok}/100 within {LC_ROUND_TRIP_TOL:e}, worst {worst:.2e}"))
}

fn smallest_certified_p(r: usize, kappa: usize) -> Option<usize> {
    (3..=latent_class::EXHAUSTIVE_SEARCH_MAX_P).find(|&p| latent_class::tripartition_search(r, &vec![kappa; p]).unwrap().holds)
}

fn bound_agreement() -> Verdict {
    let mut mismatches = Vec::new();
    for kappa in [2, 3] {
        for r in 2..=8 {
            let found = smallest_certified_p(r, kappa);
            let bound = latent_class::min_variables_bound(r, kappa);
            if found != Some(bound) {
                mismatches.push(format!("(r={r}, kappa={kappa}): search {found:?} vs bound {bound}"));
            }
        }
    }
    if mismatches.is_empty() {
        verdict(true, "smallest certified p equals the bound for all 14 cases")
    } else {
        verdict(false, format!("{} mismatches: {}", mismatches.len(), mismatches.join("; ")))
    }
}

/// Jacobian of the joint table with respect to the free parameters:
/// weights of classes `1..r-1` and all but the last state of every row.
fn joint_jacobian(model: &LatentClassModel) -> Matrix {
    let (r, kappas) = (model.r(), model.kappas());
    let pi = model.pi();
    let em = model.emissions();
    let cells: usize = kappas.iter().product();
    let free = (r - 1) + r * kappas.iter().map(|k| k - 1).sum::<usize>();
    let mut jac = Matrix::zeros(cells, free);
    for cell in 0..cells {
        let x = digits_of(cell, &kappas);
        let prod = |i: usize, skip: Option<usize>| -> f64 {
            (0..kappas.len()).filter(|&j| Some(j) != skip).map(|j| em[j].get(i, x[j])).product()
        };
        let mut col = 0;
        for i in 0..r - 1 {
            jac.set(cell, col, prod(i, None) - prod(r - 1, None));
            col += 1;
        }
        for (j, &k) in kappas.iter().enumerate() {
            for i in 0..r {
                for l in 0..k - 1 {
                    let sign = f64::from(u8::from(x[j] == l)) - f64::from(u8::from(x[j] == k - 1));
                    jac.set(cell, col, pi[i] * prod(i, Some(j)) * sign);
                    col += 1;
                }
            }
        }
    }
    jac
}

fn four_binary_negative_case() -> Verdict {
    let cert = latent_class::tripartition_search(3, &[2, 2, 2, 2]).unwrap();
    let (free, cells) = latent_class::param_dimension(3, &[2, 2, 2, 2]);
    let mut rng = rng_for(3, 0);
    let model = sample::latent_class(&mut rng, 3, &[2, 2, 2, 2]);
    let image_dim = numerical_rank(&joint_jacobian(&model), RANK_TOL).unwrap();
    let pass = !cert.holds && cert.rank_sum() == 7 && cert.threshold == 8 && image_dim == 13;
    verdict(
        pass,
        format!(
            "max sum {} vs {}, {free} parameters, {cells} cells, image dimension {image_dim}",
            cert.rank_sum(),
            cert.threshold
        ),
    )
}

fn path_probability(h: &HiddenMarkovModel, z: &[usize], xs: &[Option<usize>]) -> f64 {
    let mut p = h.pi[z[0]];
    for t in 0..z.len() {
        if t > 0 {
            p *= h.a.get(z[t - 1], z[t]);
        }
        if let Some(x) = xs[t] {
            p *= h.b.get(z[t], x);
        }
    }
    p
}

/// Sum over all hidden paths of the given length with `z[k] = state` when given.
fn enumerate(h: &HiddenMarkovModel, xs: &[Option<usize>], mark: Option<(usize, usize)>) -> f64 {
    let r = h.r();
    let n = xs.len();
    (0..r.pow(n as u32))
        .map(|idx| digits_of(idx, &vec![r; n]))
        .filter(|z| mark.map_or(true, |(t, s)| z[t] == s))
        .map(|z| path_probability(h, &z, xs))
        .sum()
}

fn hmm_block_oracle() -> Verdict {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for r in 1..=3 {
        for kappa in 2..=3 {
            for k in 1..=3 {
                let mut rng = rng_for(4, (r * 100 + kappa * 10 + k) as u64);
                let h = HiddenMarkovModel::random(&mut rng, r, kappa);
                let blocks = hmm::conditional_blocks(&h, k).unwrap();
                let t = hmm::window_tensor(&h, k).unwrap();
                let radix = vec![kappa; k];
                let n = 2 * k + 1;
                for col in 0..kappa.pow(k as u32) {
                    let d = digits_of(col, &radix);
                    // past block: X_{k-1} most significant, X_0 fastest
                    let mut past = vec![None; k + 1];
                    for (pos, &x) in d.iter().enumerate() {
                        past[k - 1 - pos] = Some(x);
                    }
                    // future block: X_{k+1} most significant
                    let mut future = vec![None; n];
                    for (pos, &x) in d.iter().enumerate() {
                        future[k + 1 + pos] = Some(x);
                    }
                    for i in 0..r {
                        let b1 = enumerate(&h, &past, Some((k, i))) / h.pi[i];
                        let b2 = enumerate(&h, &future, Some((k, i))) / h.pi[i];
                        worst = worst.max((b1 - blocks.b1.get(i, col)).abs());
                        worst = worst.max((b2 - blocks.b2.get(i, col)).abs());
                    }
                }
                for idx in 0..kappa.pow(n as u32) {
                    let xs = digits_of(idx, &vec![kappa; n]);
                    let p = enumerate(&h, &xs.iter().map(|&x| Some(x)).collect::<Vec<_>>(), None);
                    let past: Vec<usize> = (0..k).rev().map(|t| xs[t]).collect();
                    let future: Vec<usize> = (k + 1..n).map(|t| xs[t]).collect();
                    let got = t.get(flat_index(&past, &radix), flat_index(&future, &radix), xs[k]);
                    worst = worst.max((got - p).abs());
                }
                cases += 1;
            }
        }
    }
    verdict(worst <= HMM_BLOCK_TOL, format!("{cases} (r, kappa, k) cases, worst {worst:.2e} vs {HMM_BLOCK_TOL:e}"))
}

fn hmm_round_trip() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for (r, kappa) in [(2, 2), (3, 3)] {
        let (mut ok, mut worst) = (0, 0.0f64);
        let mut errors = Vec::new();
        for trial in 0..100 {
            let mut rng = rng_for(5, (r * 1000 + trial) as u64);
            let h = HiddenMarkovModel::random(&mut rng, r, kappa);
            let t = hmm::window_tensor(&h, 1).unwrap();
            match hmm::recover_hmm(&t, r, kappa, 1, &DecomposeOptions::with_seed(trial as u64)) {
                Ok(rec) => {
                    let e = hmm::align_hmm(&rec.model, &h).unwrap().max_abs_error;
                    worst = worst.max(e);
                    ok += usize::from(e <= HMM_ROUND_TRIP_TOL);
                }
                Err(e) => errors.push(format!("trial {trial}: {e}")),
            }
        }
        pass &= ok == 100;
        details.push(format!("(r={r}, kappa={kappa}) {ok}/100 worst {worst:.2e}"));
        if !errors.is_empty() {
            details.push(format!("errors [{}]", errors.join("; ")));
        }
    }
    let windows: Vec<usize> = (2..=6).map(|r| 2 * hmm::min_window(r, 2) + 1).collect();
    let expected: Vec<usize> = (2..=6).map(|r| 2 * r - 1).collect();
    pass &= windows == expected;
    details.push(format!("windows at kappa=2 for r=2..6: {windows:?}"));
    verdict(pass, details.join(", "))
}

fn graph_matrix_rank() -> Verdict {
    let rank = |p11, p12, p22| {
        let m = GraphMixtureModel::two_state([0.5, 0.5], p11, p12, p22).unwrap();
        let a = random_graph::conditional_graph_matrix(&m, 4).unwrap();
        assert_eq!((a.rows(), a.cols()), (16, 64));
        numerical_rank(&a, RANK_TOL).unwrap()
    };
    let fixed = rank(0.2, 0.5, 0.8);
    let mut full = 0;
    let mut rng = rng_for(6, 0);
    for _ in 0..50 {
        let (p11, p12, p22) = loop {
            let v: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
            if (v[0] - v[1]).abs() > 1e-3 && (v[0] - v[2]).abs() > 1e-3 && (v[1] - v[2]).abs() > 1e-3 {
                break (v[0], v[1], v[2]);
            }
        };
        full += usize::from(rank(p11, p12, p22) == 16);
    }
    let flat = rank(0.37, 0.37, 0.37);
    verdict(fixed == 16 && full == 50 && flat == 1, format!("rank {fixed} at (0.2, 0.5, 0.8), {full}/50 random full, flat rank {flat}"))
}

fn lattice_construction() -> Verdict {
    let mut pass = true;
    for m in 2..=5 {
        let fam = random_graph::lattice_partitions(m);
        pass &= fam.edge_disjoint();
        for f in 0..3 {
            pass &= fam.edges(f).len() == m * m * (m - 1) / 2;
        }
        for (f, g) in [(0, 1), (0, 2), (1, 2)] {
            for a in &fam.families[f] {
                for b in &fam.families[g] {
                    pass &= a.iter().filter(|x| b.contains(x)).count() == 1;
                }
            }
        }
    }
    verdict(pass, "m = 2..5: disjoint edges, m*C(m,2) per graph, unit cross intersections")
}

fn extraction_round_trip() -> Verdict {
    let n = 4;
    let mut details = Vec::new();
    let mut pass = true;
    for equal in [false, true] {
        let (mut ok, mut worst) = (0, 0.0f64);
        for trial in 0..50 {
            let mut rng = rng_for(8, trial + if equal { 1000 } else { 0 });
            let pi = if equal {
                [0.5, 0.5]
            } else {
                let w = loop {
                    let w: f64 = rng.gen_range(0.05..0.95);
                    if (w - 0.5).abs() > 0.02 {
                        break w;
                    }
                };
                [w, 1.0 - w]
            };
            let (p11, p12, p22) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let model = GraphMixtureModel::two_state(pi, p11, p12, p22).unwrap();
            let v = random_graph::node_state_prior(&model.pi, n).unwrap();
            let mut perm: Vec<usize> = (0..v.len()).collect();
            perm.shuffle(&mut rng);
            let v_perm: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
            let oracle = |row: usize, edge| {
                random_graph::single_edge_marginal(&model, &digits_of(perm[row], &[2; 4]), edge).unwrap()
            };
            if let Ok(got) = random_graph::extract_parameters(&v_perm, oracle, n, 1e-12) {
                let branch_ok = (got.branch == ExtractionBranch::EqualWeights) == equal;
                let e = got.error_up_to_swap(pi, p11, p12, p22);
                worst = worst.max(e);
                ok += usize::from(branch_ok && e <= EXTRACTION_TOL);
            }
        }
        pass &= ok == 50;
        let name = if equal { "pi1 = pi2" } else { "pi1 != pi2" };
        details.push(format!("{name}: {ok}/50 worst {worst:.2e}"));
    }
    verdict(pass, details.join(", "))
}

fn nonparametric_round_trip() -> Verdict {
    let configs: [(usize, &[usize]); 6] = [
        (2, &[1, 1, 1]),
        (3, &[1, 1, 1]),
        (2, &[1, 1, 1, 1, 1]),
        (3, &[1, 1, 1, 1, 1]),
        (2, &[1, 2, 1]),
        (3, &[1, 1, 2, 1, 2]),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (c, (r, dims)) in configs.iter().enumerate() {
        let (mut ok, mut worst) = (0, 0.0f64);
        let trials = 5;
        for trial in 0..trials {
            let mut rng = rng_for(9, (c * 100 + trial) as u64);
            let mix = NonparametricMixture::random(&mut rng, *r, dims, 5);
            let cuts_ok = (0..mix.p()).all(|j| {
                let comps = mix.variate(j);
                nonparametric::select_cut_points(&comps, &[], &nonparametric::default_grid(&comps), 1e-8).is_ok()
            });
            let q: Vec<Vec<Vec<f64>>> = dims
                .iter()
                .map(|&b| (0..20).map(|_| (0..b).map(|_| rng.gen_range(0.0..10.0)).collect()).collect())
                .collect();
            let Ok(rec) = nonparametric::recover_mixture(&mix, &q, None, &DecomposeOptions::with_seed(trial as u64)) else {
                continue;
            };
            let (_, e) = nonparametric::align_mixture(&rec, &mix, &q);
            let chained = rec.chaining.iter().all(|perm| {
                let mut s = perm.clone();
                s.sort_unstable();
                s == (0..*r).collect::<Vec<_>>()
            });
            worst = worst.max(e);
            ok += usize::from(cuts_ok && chained && e <= NONPARAMETRIC_TOL);
        }
        pass &= ok == trials;
        details.push(format!("r={r} dims={dims:?} {ok}/{trials}"));
    }
    verdict(pass, details.join(", "))
}

fn structural_invariants() -> Verdict {
    let mut failures = Vec::new();
    let mut rng = rng_for(10, 0);

    for _ in 0..20 {
        let m = sample::stochastic_matrix(&mut rng, 4, 3);
        let mut dup = m.to_rows();
        dup[2] = dup[0].clone();
        let dup = Matrix::from_rows(&dup).unwrap();
        let mut zero = m.to_rows();
        zero[1] = vec![0.0; 3];
        let zero = Matrix::from_rows(&zero).unwrap();
        if kruskal_rank(&dup, RANK_TOL).unwrap() != 1 || kruskal_rank(&zero, RANK_TOL).unwrap() != 0 {
            failures.push("kruskal rank of degenerate rows".to_string());
        }
        let wide = sample::stochastic_matrix(&mut rng, 5, 4);
        if kruskal_rank(&wide, RANK_TOL).unwrap() > numerical_rank(&wide, RANK_TOL).unwrap() {
            failures.push("kruskal rank exceeds rank".to_string());
        }
    }

    for _ in 0..20 {
        let dims = [2, 3, 2];
        let fs: Vec<_> = dims.iter().map(|&k| sample::stochastic_matrix(&mut rng, 3, k)).collect();
        let kr = khatri_rao(&fs).unwrap();
        let back = unclump(&kr, &dims).unwrap();
        if back.iter().zip(&fs).any(|(a, b)| a.max_abs_diff(b) > 1e-14) {
            failures.push("unclump of khatri_rao".to_string());
        }
    }

    for _ in 0..20 {
        let r = 3;
        let m: Vec<Matrix> = [3, 4, 2].iter().map(|&k| sample::stochastic_matrix(&mut rng, r, k).into_inner()).collect();
        let base = triple_product(&m[0], &m[1], &m[2]).unwrap();
        let perm = [2, 0, 1];
        let permuted = triple_product(&m[0].select_rows(&perm), &m[1].select_rows(&perm), &m[2].select_rows(&perm)).unwrap();
        let s = [0.3, 2.0, 5.0];
        let inv: Vec<f64> = s.iter().map(|x| 1.0 / x).collect();
        let moved = triple_product(&m[0].scale_rows(&s), &m[1].scale_rows(&inv), &m[2]).unwrap();
        if base.max_abs_diff(&permuted) > 1e-15 || base.max_abs_diff(&moved) > 1e-14 {
            failures.push("triple_product invariance".to_string());
        }
    }

    let mut generic = 0;
    for trial in 0..100 {
        let r = 2 + trial % 7;
        let dims: Vec<usize> = (0..2 + trial % 2).map(|_| rng.gen_range(2..4)).collect();
        let fs: Vec<_> = dims.iter().map(|&k| sample::stochastic_matrix(&mut rng, r, k)).collect();
        let expect = r.min(dims.iter().product());
        generic += usize::from(numerical_rank(&khatri_rao(&fs).unwrap(), RANK_TOL).unwrap() == expect);
    }
    if generic != 100 {
        failures.push(format!("generic khatri_rao rank {generic}/100"));
    }

    let u = |lo, hi| CdfComponent::uniform(lo, hi).unwrap();
    let cuts = CutPointSet::univariate(vec![0.5, 1.5]).unwrap();
    let product = [u(0.0, 1.0), u(0.0, 1.0)];
    let independent = [u(0.0, 1.0), u(0.0, 2.0)];
    let rank_product = nonparametric::bivariate_rank(&[0.4, 0.6], &product, &independent, &cuts, &cuts, RANK_TOL).unwrap();
    let rank_indep = nonparametric::bivariate_rank(&[0.4, 0.6], &independent, &independent, &cuts, &cuts, RANK_TOL).unwrap();
    let mix = NonparametricMixture::random(&mut rng, 3, &[1, 1], 6);
    let (c1, c2) = (mix.variate(0), mix.variate(1));
    let k1 = nonparametric::select_cut_points(&c1, &[], &nonparametric::default_grid(&c1), 1e-8).unwrap();
    let k2 = nonparametric::select_cut_points(&c2, &[], &nonparametric::default_grid(&c2), 1e-8).unwrap();
    let rank3 = nonparametric::bivariate_rank(&mix.pi, &c1, &c2, &k1, &k2, RANK_TOL).unwrap();
    if rank_product != 1 || rank_indep != 2 || rank3 != 3 {
        failures.push(format!("bivariate ranks {rank_product}, {rank_indep}, {rank3}"));
    }

    if failures.is_empty() {
        verdict(true, format!("kruskal, unclump, triple_product, generic rank {generic}/100, bivariate rank"))
    } else {
        failures.dedup();
        verdict(false, failures.join("; "))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("three-way round trip", three_way_round_trip),
        ("tripartition / bound agreement", bound_agreement),
        ("four binary variables, three classes", four_binary_negative_case),
        ("HMM block oracle", hmm_block_oracle),
        ("HMM round trip", hmm_round_trip),
        ("graph conditional matrix rank", graph_matrix_rank),
        ("lattice partition construction", lattice_construction),
        ("graph parameter extraction", extraction_round_trip),
        ("nonparametric round trip", nonparametric_round_trip),
        ("structural invariants", structural_invariants),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        failed += usize::from(!v.pass);
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status} {name}: {} [{:.2}s]", i + 1, v.detail, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed in {:.2}s", criteria.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
