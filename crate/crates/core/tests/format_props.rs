mod common;

use common::{config, rel_close};
use ndarray::{Array1, Array2, Array3};
use ndna_core::format::{decode, encode, to_json_alternate};
use ndna_core::prng::SplitMix64;
use ndna_core::trajectory::{resample_trajectory, rms_scale};
use ndna_core::{GradientBundle, Trajectory};
use ndna_testkit::{normal_matrix, random_orthogonal, transform_rows};
use proptest::prelude::*;

/// Random trajectory with optional token states and an optional bundle
/// carrying either or both gradient sections.
fn random_pair(rng: &mut SplitMix64) -> (Trajectory, Option<GradientBundle>) {
    let l = 2 + rng.next_index(7);
    let d = 1 + rng.next_index(6);
    let t = rng.next_index(4);
    let mut traj = Trajectory::new(format!("m{}", rng.next_u64()), normal_matrix(rng, l, d)).unwrap();
    if t > 0 {
        let ts = Array3::from_shape_fn((l, t, d), |_| rng.next_normal());
        traj = traj.with_token_states(ts).unwrap();
    }
    if rng.next_f64() < 0.5 {
        traj = traj.with_provenance("pooling", "mean");
    }
    let n = rng.next_index(4);
    let grads = match (n, rng.next_index(3)) {
        (0, _) => None,
        (n, which) => {
            let hidden = (which != 1).then(|| Array3::from_shape_fn((n, l, d), |_| rng.next_normal()));
            let theta = (which != 0).then(|| Array2::from_shape_fn((n, l), |_| rng.next_f64() * 4.0));
            let ids = (0..n).map(|i| format!("s{i}")).collect();
            Some(GradientBundle::new(hidden, theta, ids).unwrap())
        }
    };
    (traj, grads)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn binary_roundtrip_is_byte_exact(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let (traj, grads) = random_pair(&mut rng);
        let bytes = encode(&traj, grads.as_ref()).unwrap();
        let (t2, g2) = decode(&bytes).unwrap();
        prop_assert_eq!(&t2, &traj);
        prop_assert_eq!(&g2, &grads);
        prop_assert_eq!(encode(&t2, g2.as_ref()).unwrap(), bytes);
    }

    #[test]
    fn json_alternate_roundtrip(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let (traj, grads) = random_pair(&mut rng);
        let text = serde_json::to_vec(&to_json_alternate(&traj, grads.as_ref())).unwrap();
        let (t2, g2) = decode(&text).unwrap();
        prop_assert_eq!(encode(&t2, g2.as_ref()).unwrap(), encode(&traj, grads.as_ref()).unwrap());
    }

    #[test]
    fn resample_is_rigid_motion_equivariant(seed in any::<u64>(), l in 2usize..12, m in 2usize..20, d in 1usize..6) {
        let mut rng = SplitMix64::new(seed);
        let x = normal_matrix(&mut rng, l, d);
        let r = random_orthogonal(&mut rng, d);
        let shift = Array1::from(rng.normals(d)) * 3.0;
        let moved = Trajectory::new("y", transform_rows(x.view(), &r, 1.0, &shift)).unwrap();
        let lhs = resample_trajectory(&moved, m).unwrap();
        let base = resample_trajectory(&Trajectory::new("x", x).unwrap(), m).unwrap();
        let rhs = transform_rows(base.layer_means(), &r, 1.0, &shift);
        for (a, b) in lhs.layer_means().iter().zip(rhs.iter()) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rms_scale_invariance(seed in any::<u64>(), l in 2usize..20, d in 1usize..6, a in -20.0f64..20.0) {
        let mut rng = SplitMix64::new(seed);
        let x = normal_matrix(&mut rng, l, d);
        let shift = Array1::from(rng.normals(d)) * 5.0;
        let base = rms_scale(&Trajectory::new("x", x.clone()).unwrap());
        let eye = Array2::eye(d);
        let moved = Trajectory::new("y", transform_rows(x.view(), &eye, a, &shift)).unwrap();
        prop_assert!(rel_close(rms_scale(&moved), a.abs() * base, 1e-12));

        // two-pass recomputation
        let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
        let var: f64 = x.rows().into_iter().map(|r| (&r - &mean).mapv(|v| v * v).sum()).sum::<f64>() / l as f64;
        prop_assert!(rel_close(base, var.sqrt(), 1e-12));
    }
}
