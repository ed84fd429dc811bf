use medconf_core::models::{KnnModel, QuantileForest};
use medconf_core::rng::stream;
use medconf_core::{ConditionalModel, ForestConfig, LabeledDataset, SyntheticDistribution};
use proptest::prelude::*;
use rand::Rng;

fn brute_neighbors(data: &LabeledDataset, x: &[f64], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..data.len())
        .map(|i| {
            let d: f64 = data.row(i).iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
            (d, i)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|p| p.1).collect()
}

fn quantile_of(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    // smallest j with (j + 1) / n >= q
    let j = (0..n).find(|&j| (j + 1) as f64 >= q * n as f64 - 1e-9).unwrap_or(n - 1);
    values[j]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_matches_brute_force(
        n in 1usize..500,
        dim in 1usize..4,
        k_frac in 0.0f64..1.0,
        seed in any::<u64>(),
        grid in any::<bool>(),
    ) {
        let mut rng = stream(seed, &[]);
        // coarse grids force distance ties
        let draw = |rng: &mut medconf_core::rng::StreamRng| {
            if grid { rng.random_range(0..5) as f64 } else { rng.random_range(-1.0..1.0) }
        };
        let x: Vec<f64> = (0..n * dim).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let data = LabeledDataset::new(x, y, dim).unwrap();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let model = KnnModel::fit(&data, k).unwrap();
        for _ in 0..5 {
            let probe: Vec<f64> = (0..dim).map(|_| draw(&mut rng)).collect();
            let expected = brute_neighbors(&data, &probe, k);
            prop_assert_eq!(model.neighbors(&probe).unwrap(), expected.clone());
            let mut ys: Vec<f64> = expected.iter().map(|&i| data.response(i)).collect();
            for q in [0.0, 0.1, 0.5, 0.9, 1.0] {
                prop_assert_eq!(model.predict_quantile(&probe, q).unwrap(), quantile_of(&mut ys, q));
            }
            let mean = ys.iter().sum::<f64>() / k as f64;
            prop_assert!((model.predict_mean(&probe).unwrap() - mean).abs() < 1e-12);
        }
    }
}

fn forest_and_probes() -> (QuantileForest, Vec<Vec<f64>>) {
    let d = SyntheticDistribution::Dist1;
    let data = d.sample_dataset(1000, &mut stream(4, &[]));
    let forest = QuantileForest::fit(&data, &ForestConfig::default(), 17).unwrap();
    let mut rng = stream(4, &[1]);
    let probes = (0..40).map(|_| d.sample_covariate(&mut rng)).collect();
    (forest, probes)
}

#[test]
fn forest_quantiles_do_not_cross() {
    let (forest, probes) = forest_and_probes();
    for x in &probes {
        let mut last = f64::NEG_INFINITY;
        for i in 0..=100 {
            let q = forest.predict_quantile(x, i as f64 / 100.0).unwrap();
            assert!(q >= last);
            last = q;
        }
    }
}

#[test]
fn forest_cdf_is_consistent_with_quantiles() {
    let (forest, probes) = forest_and_probes();
    for x in &probes {
        let law = forest.conditional(x).unwrap();
        let granularity = law.max_atom_weight();
        let pooled = forest.leaf_sizes(x).unwrap().iter().sum::<usize>();
        assert!(granularity >= 1.0 / pooled as f64 - 1e-12);
        for i in 1..100 {
            let q = i as f64 / 100.0;
            let c = forest.predict_cdf(x, forest.predict_quantile(x, q).unwrap()).unwrap();
            assert!(c >= q - 1e-9 && c <= q + granularity + 1e-9, "{q}: {c}");
        }
        let mut last = 0.0;
        for i in 0..=200 {
            let y = -10.0 + i as f64 / 10.0;
            let c = forest.predict_cdf(x, y).unwrap();
            assert!((0.0..=1.0).contains(&c) && c >= last);
            last = c;
        }
    }
}

#[test]
fn forest_fit_is_reproducible() {
    let (a, probes) = forest_and_probes();
    let (b, _) = forest_and_probes();
    assert_eq!(a, b);
    for x in &probes {
        assert_eq!(a.predict_mean(x).unwrap(), b.predict_mean(x).unwrap());
    }
}
