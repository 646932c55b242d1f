mod common;

use common::{config, rel_close};
use ndarray::s;
use ndna_core::geometry::{path_length, step_lengths};
use ndna_core::prng::SplitMix64;
use ndna_core::report::to_json;
use ndna_core::score::{additive_score, assemble_profile, layer_weights, ndna_score, ScoreConfig, WeightScheme};
use ndna_core::Trajectory;
use ndna_testkit::{random_bundle, random_trajectory};
use proptest::prelude::*;

fn series(rng: &mut SplitMix64, n: usize, holes: bool) -> Vec<Option<f64>> {
    (0..n)
        .map(|_| {
            if holes && rng.next_f64() < 0.2 {
                None
            } else {
                Some(rng.next_f64() + 0.01)
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn total_is_linear_in_belief_norm(seed in any::<u64>(), n in 1usize..20, a in 0.01f64..100.0) {
        let mut rng = SplitMix64::new(seed);
        let (k, l) = (series(&mut rng, n, false), series(&mut rng, n, false));
        let v = series(&mut rng, n, true);
        prop_assume!(v.iter().any(Option::is_some));
        let w = layer_weights(WeightScheme::Ramp, n).unwrap();
        let base = ndna_score(&k, &l, &v, &w, true).unwrap().total;
        let scaled: Vec<Option<f64>> = v.iter().map(|x| x.map(|x| a * x)).collect();
        let t = ndna_score(&k, &l, &scaled, &w, true).unwrap().total;
        prop_assert!(rel_close(a * base, t, 1e-12));
        let doubled: Vec<Option<f64>> = v.iter().map(|x| x.map(|x| 2.0 * x)).collect();
        prop_assert_eq!(ndna_score(&k, &l, &doubled, &w, true).unwrap().total, 2.0 * base);
    }

    #[test]
    fn uniform_subrange_is_plain_mean(seed in any::<u64>(), n in 2usize..20) {
        let mut rng = SplitMix64::new(seed);
        let (k, l, v) = (series(&mut rng, n, false), series(&mut rng, n, true), series(&mut rng, n, false));
        let lo = rng.next_index(n - 1);
        let hi = lo + 1 + rng.next_index(n - lo - 1);
        let (ks, ls, vs) = (&k[lo..=hi], &l[lo..=hi], &v[lo..=hi]);
        prop_assume!(ls.iter().any(Option::is_some));
        let w = layer_weights(WeightScheme::Uniform, ks.len()).unwrap();
        let got = ndna_score(ks, ls, vs, &w, true).unwrap().total;
        let present: Vec<f64> = (0..ks.len())
            .filter_map(|i| Some(ks[i]? * ls[i]? * vs[i]?))
            .collect();
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        prop_assert!(rel_close(got, mean, 1e-12));
    }

    #[test]
    fn additive_length_only_is_path_length(seed in any::<u64>(), layers in 3usize..20, d in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let t = random_trajectory(&mut rng, layers, d);
        let steps = step_lengths(&t)[1..layers - 1].to_vec();
        let n = steps.len();
        let k = series(&mut rng, n, true);
        let got = additive_score(&k, &vec![Some(1.0); n], &vec![None; n], &steps, [0.0, 1.0, 0.0]).unwrap();
        let sub = Trajectory::new("s", t.layer_means().slice(s![1.., ..]).to_owned()).unwrap();
        prop_assert!(rel_close(got, path_length(&sub), 1e-12));
    }

    #[test]
    fn profile_is_deterministic(seed in any::<u64>(), n in 1usize..5, layers in 4usize..10, d in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let t = random_trajectory(&mut rng, layers, d);
        let g = random_bundle(&mut rng, n, layers, d);
        let cfg = ScoreConfig { weights: WeightScheme::LastK(2), ..ScoreConfig::default() };
        let a = assemble_profile(&t, Some(&g), &cfg).unwrap();
        let b = assemble_profile(&t, Some(&g), &cfg).unwrap();
        prop_assert_eq!(to_json(&a).unwrap(), to_json(&b).unwrap());
        prop_assert_eq!(a, b);
    }
}

#[test]
fn layer_table_products() {
    let (products, total) = ndna_testkit::layer_table_oracle();
    let k: Vec<Option<f64>> = ndna_testkit::LAYER_TABLE.iter().map(|r| Some(r.1)).collect();
    let l: Vec<Option<f64>> = ndna_testkit::LAYER_TABLE.iter().map(|r| Some(r.2)).collect();
    let v: Vec<Option<f64>> = ndna_testkit::LAYER_TABLE.iter().map(|r| Some(r.3)).collect();
    let w = layer_weights(WeightScheme::Unit, 11).unwrap();
    let s = ndna_score(&k, &l, &v, &w, false).unwrap();
    for (got, want) in s.per_layer.iter().zip(&products) {
        assert!((got.unwrap() - want).abs() < 1e-15);
    }
    assert!((s.total - total).abs() < 1e-6);
    assert!((s.total - 0.36642).abs() < 1e-5);
}
