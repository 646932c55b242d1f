mod common;

use common::{config, rel_close};
use ndarray::{s, Array1, Array3};
use ndna_core::fixtures::{synth_trajectory, SynthKind, SynthParams};
use ndna_core::geometry::{
    layer_laplacian_spectrum, path_length, second_diff_curvature, step_lengths, torsion_profile,
};
use ndna_core::linalg::{compensated_sum, jacobi_eigen};
use ndna_core::prng::SplitMix64;
use ndna_core::Trajectory;
use ndna_testkit::{bisection_eigenvalues, random_orthogonal, random_symmetric, random_trajectory, transform_rows};
use proptest::prelude::*;

proptest! {
    #![proptest_config(config())]

    #[test]
    fn rigid_motion_invariance(seed in any::<u64>(), l in 4usize..14, d in 1usize..7) {
        let mut rng = SplitMix64::new(seed);
        let t = random_trajectory(&mut rng, l, d);
        let r = random_orthogonal(&mut rng, d);
        let shift = Array1::from(rng.normals(d)) * 3.0;
        let moved = Trajectory::new("m", transform_rows(t.layer_means(), &r, 1.0, &shift)).unwrap();

        let (k0, k1) = (second_diff_curvature(&t).unwrap(), second_diff_curvature(&moved).unwrap());
        for (a, b) in k0.kappa.iter().zip(&k1.kappa) {
            prop_assert!(rel_close(*a, *b, 1e-10), "κ {a} vs {b}");
        }
        for (a, b) in step_lengths(&t).iter().zip(step_lengths(&moved)) {
            prop_assert!(rel_close(*a, b, 1e-10));
        }
        prop_assert!(rel_close(path_length(&t), path_length(&moved), 1e-10));
        let (t0, t1) = (torsion_profile(&t).unwrap(), torsion_profile(&moved).unwrap());
        for i in 0..t0.tau.len() {
            prop_assert_eq!(t0.degenerate[i], t1.degenerate[i]);
            prop_assert!(rel_close(t0.tau[i].abs(), t1.tau[i].abs(), 1e-10), "τ {} vs {}", t0.tau[i], t1.tau[i]);
        }
    }

    #[test]
    fn homogeneity(seed in any::<u64>(), l in 4usize..12, d in 3usize..6, a in 0.01f64..50.0) {
        let mut rng = SplitMix64::new(seed);
        let t = random_trajectory(&mut rng, l, d);
        let scaled = Trajectory::new("a", t.layer_means().mapv(|x| a * x)).unwrap();
        let (k0, k1) = (second_diff_curvature(&t).unwrap(), second_diff_curvature(&scaled).unwrap());
        for (x, y) in k0.kappa.iter().zip(&k1.kappa) {
            prop_assert!(rel_close(a * x, *y, 1e-12));
        }
        prop_assert!(rel_close(a * path_length(&t), path_length(&scaled), 1e-12));
        let (t0, t1) = (torsion_profile(&t).unwrap(), torsion_profile(&scaled).unwrap());
        for (x, y) in t0.tau.iter().zip(&t1.tau) {
            prop_assert!(rel_close(x / a, *y, 1e-9), "τ/a {} vs {}", x / a, y);
        }
    }

    #[test]
    fn laplacian_spectrum_bounds(seed in any::<u64>(), tokens in 2usize..10, d in 1usize..6) {
        let mut rng = SplitMix64::new(seed);
        // positive coordinates: every pair has positive cosine, so the graph is connected
        let pts = ndarray::Array2::from_shape_fn((tokens, d), |_| rng.next_normal().abs() + 1e-3);
        let ev = layer_laplacian_spectrum(pts.view()).unwrap();
        prop_assert!(ev[0].abs() <= 1e-10, "λ₁ = {}", ev[0]);
        for &x in &ev {
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&x));
        }
        let signed = ndarray::Array2::from_shape_fn((tokens, d), |_| rng.next_normal());
        for x in layer_laplacian_spectrum(signed.view()).unwrap() {
            prop_assert!((-1e-12..=2.0 + 1e-12).contains(&x));
        }
    }

    #[test]
    fn steps_sum_to_path_length(seed in any::<u64>(), l in 2usize..40, d in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let t = random_trajectory(&mut rng, l, d);
        let steps = step_lengths(&t);
        prop_assert_eq!(compensated_sum(steps.iter().copied()), path_length(&t));
        let naive: f64 = steps.iter().sum();
        prop_assert!(rel_close(naive, path_length(&t), 1e-13));
    }

    #[test]
    fn concatenation_adds_lengths(seed in any::<u64>(), l in 3usize..20, d in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let t = random_trajectory(&mut rng, l, d);
        let k = 1 + rng.next_index(l - 2);
        let h = t.layer_means();
        let a = Trajectory::new("a", h.slice(s![..=k, ..]).to_owned()).unwrap();
        let b = Trajectory::new("b", h.slice(s![k.., ..]).to_owned()).unwrap();
        prop_assert!(rel_close(path_length(&a) + path_length(&b), path_length(&t), 1e-12));
    }

    #[test]
    fn jacobi_matches_bisection(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = SplitMix64::new(seed);
        let a = random_symmetric(&mut rng, n);
        let jac = jacobi_eigen(a.view()).unwrap().values;
        let bis = bisection_eigenvalues(a.view());
        for (x, y) in jac.iter().zip(&bis) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn mirrored_helix_negates_torsion(seed in any::<u64>(), phi in 0.05f64..1.5, pitch in 0.01f64..2.0) {
        let p = SynthParams { dim: 3, phi, pitch, layers: 12, ..SynthParams::default() };
        let t = synth_trajectory(SynthKind::Helix, &p, seed).unwrap();
        let mirrored = Trajectory::new("m", &t.layer_means() * &Array1::from(vec![1.0, 1.0, -1.0])).unwrap();
        let (a, b) = (torsion_profile(&t).unwrap(), torsion_profile(&mirrored).unwrap());
        for (x, y) in a.tau.iter().zip(&b.tau) {
            prop_assert!(*x != 0.0);
            prop_assert!(rel_close(*x, -*y, 1e-12));
        }
    }
}

#[test]
fn circle_and_helix_closed_forms() {
    for (r, phi) in [(1.0, std::f64::consts::PI / 8.0), (2.5, 0.3), (0.5, 1.0)] {
        let p = SynthParams {
            radius: r,
            phi,
            ..SynthParams::default()
        };
        let c = synth_trajectory(SynthKind::Circle, &p, 0).unwrap();
        for k in second_diff_curvature(&c).unwrap().kappa {
            assert!((k - 2.0 * r * (1.0 - phi.cos())).abs() < 1e-12);
        }
        for s in step_lengths(&c) {
            assert!((s - 2.0 * r * (phi / 2.0).sin()).abs() < 1e-12);
        }
        let h = synth_trajectory(SynthKind::Helix, &p, 0).unwrap();
        let chord = ((2.0 * r * (phi / 2.0).sin()).powi(2) + (p.pitch * phi).powi(2)).sqrt();
        for s in step_lengths(&h) {
            assert!((s - chord).abs() < 1e-12);
        }
        for k in second_diff_curvature(&h).unwrap().kappa {
            assert!((k - 2.0 * r * (1.0 - phi.cos())).abs() < 1e-12);
        }
    }
}

#[test]
fn helix_torsion_matches_direct_evaluation() {
    // brute-force τ from the 3-D cross product written out by hand
    let p = SynthParams {
        dim: 3,
        phi: 0.05,
        pitch: 0.2,
        layers: 10,
        ..SynthParams::default()
    };
    let t = synth_trajectory(SynthKind::Helix, &p, 0).unwrap();
    let h = t.layer_means();
    let tau = torsion_profile(&t).unwrap().tau;
    for (i, got) in tau.iter().enumerate() {
        let d = |k: usize| {
            [
                h[[k + 1, 0]] - h[[k, 0]],
                h[[k + 1, 1]] - h[[k, 1]],
                h[[k + 1, 2]] - h[[k, 2]],
            ]
        };
        let (a, b, c) = (d(i), d(i + 1), d(i + 2));
        let x = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        let want = (x[0] * c[0] + x[1] * c[1] + x[2] * c[2]) / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        assert!((got - want).abs() <= 1e-9 * want.abs(), "{got} vs {want}");
    }
}

#[test]
fn complete_and_disconnected_token_graphs() {
    // identical tokens: complete graph with equal weights
    let mut tok = Array3::zeros((3, 5, 2));
    tok.slice_mut(s![.., .., 0]).fill(1.0);
    // layer 2: two orthogonal groups
    for i in 0..5 {
        tok[[2, i, 0]] = if i < 2 { 1.0 } else { 0.0 };
        tok[[2, i, 1]] = if i < 2 { 0.0 } else { 1.0 };
    }
    let t = Trajectory::new("g", ndarray::Array2::zeros((3, 2)))
        .unwrap()
        .with_token_states(tok)
        .unwrap();
    let lc = ndna_core::geometry::laplacian_spectral_curvature(&t, 1).unwrap();
    assert!((lc.ratio[0] - 1.0).abs() < 1e-9);
    assert!(lc.ratio[2].abs() < 1e-12);
}
