use latentid::hmm::HiddenMarkovModel;
use latentid::model_file::{parse_model, to_json, Model};
use latentid::nonparametric::{self, CutPointSet, NonparametricMixture};
use latentid::random_graph::{self, GraphMixtureModel};
use latentid::sample;
use latentid::tensor::{khatri_rao, kruskal_rank, numerical_rank, triple_product, unclump, RANK_TOL};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn khatri_rao_rows_are_distributions(seed in any::<u64>(), r in 1usize..5, dims in prop::collection::vec(1usize..4, 1..4)) {
        let mut g = rng(seed);
        let fs: Vec<_> = dims.iter().map(|&k| sample::stochastic_matrix(&mut g, r, k)).collect();
        let kr = khatri_rao(&fs).unwrap();
        prop_assert_eq!(kr.cols(), dims.iter().product::<usize>());
        prop_assert!(kr.is_stochastic(1e-12));
        let back = unclump(&kr, &dims).unwrap();
        for (a, b) in back.iter().zip(&fs) {
            prop_assert!(a.max_abs_diff(b) <= 1e-13);
        }
    }

    #[test]
    fn rank_ordering(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let m = sample::stochastic_matrix(&mut rng(seed), rows, cols).into_inner();
        let kr = kruskal_rank(&m, RANK_TOL).unwrap();
        let rank = numerical_rank(&m, RANK_TOL).unwrap();
        prop_assert!(kr <= rank);
        prop_assert!(rank <= rows.min(cols));
    }

    #[test]
    fn triple_product_ignores_relabeling(seed in any::<u64>(), r in 1usize..5, shift in 0usize..5) {
        let mut g = rng(seed);
        let ms: Vec<_> = [2, 3, 4].iter().map(|&k| sample::stochastic_matrix(&mut g, r, k).into_inner()).collect();
        let perm: Vec<usize> = (0..r).map(|i| (i + shift) % r).collect();
        let base = triple_product(&ms[0], &ms[1], &ms[2]).unwrap();
        let moved = triple_product(&ms[0].select_rows(&perm), &ms[1].select_rows(&perm), &ms[2].select_rows(&perm)).unwrap();
        prop_assert!(base.max_abs_diff(&moved) <= 1e-15);
    }

    #[test]
    fn binned_rows_cumulate_to_cdf(seed in any::<u64>(), r in 1usize..4, cuts in prop::collection::btree_set(1u32..99, 1..5)) {
        let mix = NonparametricMixture::random(&mut rng(seed), r, &[1, 1, 1], 4);
        let cuts: Vec<f64> = cuts.into_iter().map(|c| f64::from(c) / 10.0).collect();
        let set = CutPointSet::univariate(cuts.clone()).unwrap();
        let comps = mix.variate(0);
        let binned = nonparametric::binned_conditional_matrix(&comps, &set).unwrap();
        prop_assert!(binned.as_matrix().is_stochastic(1e-12));
        for (i, comp) in comps.iter().enumerate() {
            let cum = nonparametric::cumulative_transform(binned.as_matrix().row(i), &set.bins());
            for (q, &u) in cuts.iter().enumerate() {
                prop_assert!((cum[q] - comp.eval(&[u])).abs() <= 1e-12);
            }
            prop_assert!((cum[cuts.len()] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn graph_matrix_rows_are_distributions(p11 in 0.0f64..1.0, p12 in 0.0f64..1.0, p22 in 0.0f64..1.0, m in 2usize..5) {
        let model = GraphMixtureModel::two_state([0.5, 0.5], p11, p12, p22).unwrap();
        let a = random_graph::conditional_graph_matrix(&model, m).unwrap();
        prop_assert!(a.is_stochastic(1e-12));
    }

    #[test]
    fn model_files_round_trip(seed in any::<u64>(), r in 1usize..4, kappa in 2usize..4) {
        let mut g = rng(seed);
        let models = [
            Model::LatentClass(sample::latent_class(&mut g, r, &[kappa, 2, 3])),
            Model::Hmm(HiddenMarkovModel::random(&mut g, r, kappa)),
            Model::Nonparametric(NonparametricMixture::random(&mut g, r, &[1, 2, 1], 3)),
        ];
        for m in models {
            prop_assert_eq!(parse_model(&to_json(&m)).unwrap(), m);
        }
    }
}
