//! Structural properties that must hold for any input, checked across
//! random instances.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sixwheel::balance::KalmanFilter;
use sixwheel::geo::{offsets_from_path, Pose2D, ReferencePath};
use sixwheel::guard::dbscan;

proptest! {
    /// Mirroring a pose across a straight path negates both offsets.
    #[test]
    fn mirrored_pose_negates_offsets(
        x in -2.0f64..22.0,
        y in -3.0f64..3.0,
        heading in -179.0f64..179.0,
    ) {
        let path = ReferencePath::from_points(&[[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]], false)
            .unwrap();
        let off = offsets_from_path(&path, &Pose2D::new(x, y, heading));
        let mirrored = offsets_from_path(&path, &Pose2D::new(x, -y, -heading));
        prop_assert!((off.lateral + mirrored.lateral).abs() < 1e-12);
        prop_assert!((off.heading + mirrored.heading).abs() < 1e-9);
    }

    /// Cluster ids are contiguous from zero, noise points are never core,
    /// and core points within eps of each other share a cluster.
    #[test]
    fn dbscan_labels_are_consistent(
        pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 0..40),
        eps in 0.1f64..2.0,
        min_pts in 1usize..6,
    ) {
        let labels = dbscan(&pts, eps, min_pts);
        prop_assert_eq!(labels.len(), pts.len());

        let neighbors = |i: usize| -> Vec<usize> {
            (0..pts.len())
                .filter(|&j| {
                    let dx = pts[i].0 - pts[j].0;
                    let dy = pts[i].1 - pts[j].1;
                    dx * dx + dy * dy <= eps * eps
                })
                .collect()
        };
        let is_core = |i: usize| neighbors(i).len() >= min_pts;

        let max_label = labels.iter().flatten().copied().max();
        if let Some(m) = max_label {
            for want in 0..=m {
                prop_assert!(
                    labels.iter().any(|&l| l == Some(want)),
                    "cluster id {} skipped", want
                );
            }
        }
        for (i, label) in labels.iter().enumerate() {
            if label.is_none() {
                prop_assert!(!is_core(i), "core point {} labeled noise", i);
            }
        }
        for i in 0..pts.len() {
            if !is_core(i) {
                continue;
            }
            for j in neighbors(i) {
                if is_core(j) {
                    prop_assert_eq!(labels[i], labels[j],
                        "core points {} and {} within eps split clusters", i, j);
                }
                prop_assert!(labels[j].is_some(), "neighbor {} of a core point is noise", j);
            }
        }
    }

    /// The covariance stays symmetric positive semidefinite through any
    /// predict/correct sequence.
    #[test]
    fn covariance_stays_positive_semidefinite(
        seedling in proptest::collection::vec(-1.0f64..1.0, 16),
        q_scale in 1e-6f64..1.0,
        r_scale in 1e-3f64..4.0,
        zs in proptest::collection::vec(-10.0f64..10.0, 1..20),
    ) {
        let a = DMatrix::from_row_slice(4, 4, &seedling);
        let spd = &a * a.transpose() + DMatrix::identity(4, 4) * 1e-9;
        // Carve F, Q, P0 out of one random SPD seed so shapes stay valid.
        let f = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { a[(i, j)] * 0.1 });
        let q = &spd * q_scale;
        let h = DMatrix::from_row_slice(1, 4, &[1.0, 0.5, 0.0, 0.0]);
        let r = DMatrix::from_element(1, 1, r_scale);
        let mut kf = KalmanFilter::new(
            f,
            None,
            q,
            h,
            r,
            DVector::zeros(4),
            spd.clone(),
        )
        .unwrap();
        for &z in &zs {
            kf.predict(None).unwrap();
            kf.correct(&DVector::from_element(1, z)).unwrap();
            prop_assert_eq!(&kf.p, &kf.p.transpose());
            let eig = kf.p.clone().symmetric_eigen();
            let min = eig.eigenvalues.min();
            prop_assert!(min > -1e-9, "negative eigenvalue {}", min);
        }
    }
}
