mod common;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::random_connected;
use debridge::encodings::{emit_de, emit_rwse, walk_matrix};
use debridge::graph::{all_pairs_distances, generate_random_regular, is_connected, read_edge_list, write_edge_list};
use debridge::linkage::{collect_link_pairs, fit_isotonic, pava};
use debridge::nystrom::{nystrom_kernel, procrustes_align, reference_kernel};
use debridge::spectral::{
    diffusion_distance, heat_kernel, tail, truncated_distance, truncated_embedding, DistanceMethod,
};
use debridge::trilateration::{
    build_system, frobenius_bound_holds, frobenius_gap, node_anchor_diffusion, node_anchor_residuals,
    reconstruct_from_radii, AnchorSet, AnchorStrategy,
};
use debridge::{CrossMode, EigenSystem, LaplacianMode, NystromConfig, PairScope, RadialKind};

fn small_graph() -> impl Strategy<Value = (usize, usize, u64)> {
    (4usize..40, 0usize..30, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tail_decomposition_on_regular_graphs(half in 4usize..32, r in 3usize..6, seed in any::<u64>(), t in 0.2f64..3.0, m_frac in 0.0f64..1.0) {
        let n = 2 * half;
        let g = generate_random_regular(n, r, seed).unwrap();
        let eig = EigenSystem::from_graph(&g, LaplacianMode::Regular).unwrap();
        let m = 1 + ((n - 2) as f64 * m_frac) as usize;
        let emb = truncated_embedding(&eig, t, m).unwrap();
        for u in 0..n {
            for v in u + 1..n {
                let full = diffusion_distance(&eig, t, u, v, DistanceMethod::SpectralSum).unwrap();
                let trunc = truncated_distance(&emb, u, v);
                let rest = tail(&eig, t, m, u, v).unwrap();
                prop_assert!((full * full - trunc * trunc - rest * rest).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn tail_decomposition_with_trivial_mode((n, extra, seed) in small_graph(), t in 0.2f64..3.0, m_frac in 0.0f64..1.0) {
        // the degree-weighted ground state is not constant on irregular graphs
        let g = random_connected(n, extra, seed);
        let eig = EigenSystem::from_graph(&g, LaplacianMode::General).unwrap();
        let m = 1 + ((n - 2) as f64 * m_frac) as usize;
        let emb = truncated_embedding(&eig, t, m).unwrap();
        let phi = eig.eigenvectors();
        for u in 0..n {
            for v in u + 1..n {
                let full = diffusion_distance(&eig, t, u, v, DistanceMethod::SpectralSum).unwrap();
                let trunc = truncated_distance(&emb, u, v);
                let rest = tail(&eig, t, m, u, v).unwrap();
                let ground = eig.decay(t, 0).powi(2) * (phi[(u, 0)] - phi[(v, 0)]).powi(2);
                prop_assert!((full * full - trunc * trunc - rest * rest - ground).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn distance_routes_agree((n, extra, seed) in small_graph(), t in 0.1f64..4.0) {
        let g = random_connected(n, extra, seed);
        let eig = EigenSystem::from_graph(&g, LaplacianMode::for_graph(&g)).unwrap();
        for u in 0..n.min(6) {
            for v in 0..n {
                let a = diffusion_distance(&eig, t, u, v, DistanceMethod::SpectralSum).unwrap();
                let b = diffusion_distance(&eig, t, u, v, DistanceMethod::KernelIdentity).unwrap();
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn heat_kernel_semigroup((n, extra, seed) in small_graph(), s in 0.1f64..2.0, t in 0.1f64..2.0) {
        let g = random_connected(n, extra, seed);
        let eig = EigenSystem::from_graph(&g, LaplacianMode::for_graph(&g)).unwrap();
        let ks = heat_kernel(&eig, s).unwrap();
        let kt = heat_kernel(&eig, t).unwrap();
        let kst = heat_kernel(&eig, s + t).unwrap();
        prop_assert!((&ks * &kt - &kst).amax() <= 1e-10);
        prop_assert!((&ks - ks.transpose()).amax() == 0.0);
        let diag = eig.diagnostics(&debridge::spectral::laplacian(&g, LaplacianMode::for_graph(&g)).unwrap());
        prop_assert!(diag.max_residual <= 1e-8 * n as f64);
        prop_assert!(diag.max_gram_deviation <= 1e-10);
    }

    #[test]
    fn embedding_columns_have_decay_norms((n, extra, seed) in small_graph(), t in 0.1f64..3.0) {
        let g = random_connected(n, extra, seed);
        let eig = EigenSystem::from_graph(&g, LaplacianMode::for_graph(&g)).unwrap();
        let m = (n - 1).min(8);
        let emb = truncated_embedding(&eig, t, m).unwrap();
        for j in 0..m {
            let expected = (-t * eig.eigenvalues()[j + 1]).exp();
            prop_assert!((emb.coords().column(j).norm() - expected).abs() <= 1e-8);
        }
    }

    #[test]
    fn pava_is_monotone_and_mean_preserving(
        data in prop::collection::vec((-5.0f64..5.0, 0.1f64..10.0), 1..40)
    ) {
        let (y, w): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
        let fit = pava(&y, &w);
        prop_assert_eq!(fit.len(), y.len());
        prop_assert!(fit.windows(2).all(|p| p[0] <= p[1] + 1e-12));
        let total: f64 = w.iter().sum();
        let mean_in: f64 = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / total;
        let mean_out: f64 = fit.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / total;
        prop_assert!((mean_in - mean_out).abs() <= 1e-9);
        let again = pava(&fit, &w);
        prop_assert!(fit.iter().zip(&again).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn exact_radii_reconstruct((n, extra, seed) in (12usize..60, 0usize..40, any::<u64>()), m in 2usize..6) {
        let g = random_connected(n, extra, seed);
        let eig = EigenSystem::from_graph(&g, LaplacianMode::for_graph(&g)).unwrap();
        let emb = truncated_embedding(&eig, 1.0, m).unwrap();
        let anchors = AnchorSet::from_embedding((0..=m).collect(), &emb, AnchorStrategy::Explicit((0..=m).collect()))
            .unwrap()
            .jittered(1e-3, seed)
            .unwrap();
        let system = build_system(&anchors).unwrap();
        let scale = (0..anchors.len()).map(|i| anchors.position(i).norm()).fold(0.0, f64::max);
        for v in 0..n {
            let p = emb.point(v);
            let radii: Vec<f64> = (0..anchors.len()).map(|i| (&p - anchors.position(i)).norm()).collect();
            let x = reconstruct_from_radii(&system, &anchors, &radii).unwrap();
            let rel = (&x - &p).norm() / p.norm().max(scale);
            prop_assert!(rel <= 1e-10 * system.cond(), "rel {} cond {}", rel, system.cond());
        }
    }

    #[test]
    fn frobenius_inequality_always_holds((n, extra, seed) in (10usize..60, 0usize..40, any::<u64>())) {
        let g = random_connected(n, extra, seed);
        let eig = EigenSystem::from_graph(&g, LaplacianMode::for_graph(&g)).unwrap();
        let m = 3;
        let emb = truncated_embedding(&eig, 1.0, m).unwrap();
        let samples = collect_link_pairs(&g, &emb, 3, &PairScope::AllPairs).unwrap();
        let link = fit_isotonic(&samples).unwrap().with_origin();
        let anchors: Vec<usize> = (0..=m).collect();
        let spd = debridge::graph::node_anchor_distances(&g, &anchors).unwrap();
        let diff = node_anchor_diffusion(&emb, &anchors);
        let gap = frobenius_gap(&diff, &spd, &link).unwrap();
        let res = node_anchor_residuals(&diff, &spd, &link, 3).unwrap();
        prop_assert!(frobenius_bound_holds(&gap, res.max_all, n, m + 1));
        prop_assert!(res.max_in_radius <= res.max_all);
    }

    #[test]
    fn nystrom_is_symmetric_in_both_modes((n, extra, seed) in (10usize..50, 0usize..30, any::<u64>()), k in 2usize..10) {
        let g = random_connected(n, extra, seed);
        let eig = EigenSystem::from_graph(&g, LaplacianMode::for_graph(&g)).unwrap();
        let reference = reference_kernel(&eig, 1.0).unwrap();
        let link = debridge::nystrom::fit_kernel_link(&g, &reference, 3).unwrap();
        let anchors: Vec<usize> = (0..k.min(n)).collect();
        for mode in [CrossMode::ExactColumns, CrossMode::DistanceDriven] {
            let cfg = NystromConfig { k: anchors.len(), cross_mode: mode, ..Default::default() };
            let approx = nystrom_kernel(&reference, &g, &cfg, &anchors, Some(&link)).unwrap();
            prop_assert!((&approx.kernel - approx.kernel.transpose()).amax() <= 1e-10);
        }
    }

    #[test]
    fn full_rank_nystrom_is_exact((n, extra, seed) in (4usize..40, 0usize..30, any::<u64>())) {
        let g = random_connected(n, extra, seed);
        let eig = EigenSystem::from_graph(&g, LaplacianMode::for_graph(&g)).unwrap();
        let reference = reference_kernel(&eig, 1.0).unwrap();
        let anchors: Vec<usize> = (0..n).collect();
        let cfg = NystromConfig { k: n, lambda_reg: Some(0.0), cross_mode: CrossMode::ExactColumns, ..Default::default() };
        let approx = nystrom_kernel(&reference, &g, &cfg, &anchors, None).unwrap();
        prop_assert!((&approx.kernel - &reference).norm() / reference.norm() <= 1e-8);
    }

    #[test]
    fn procrustes_recovers_orthogonal_maps(rows in 5usize..30, cols in 1usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let q = DMatrix::from_fn(cols, cols, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let y = &x * &q;
        let fit = procrustes_align(&x, &y, false).unwrap();
        prop_assert!(fit.mse <= 1e-20 + 1e-12);
    }

    #[test]
    fn de_is_permutation_equivariant((n, extra, seed) in (6usize..40, 0usize..20, any::<u64>()), shift in 1usize..5) {
        let g = random_connected(n, extra, seed);
        let perm: Vec<usize> = (0..n).map(|v| (v + shift) % n).collect();
        let h = g.relabel(&perm).unwrap();
        let anchors = [0usize, n / 2, n - 1];
        let moved: Vec<usize> = anchors.iter().map(|&a| perm[a]).collect();
        for kind in RadialKind::ALL {
            let a = emit_de(&g, &anchors, kind, None).unwrap();
            let b = emit_de(&h, &moved, kind, None).unwrap();
            for v in 0..n {
                for i in 0..anchors.len() {
                    prop_assert!((a.data[(v, i)] - b.data[(perm[v], i)]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn rwse_is_probability((n, extra, seed) in small_graph()) {
        let g = random_connected(n, extra, seed);
        let p = walk_matrix(&g).unwrap();
        for row in p.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
        let t = emit_rwse(&g, &[1, 2, 3, 8]).unwrap();
        prop_assert!(t.data.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(t.data.column(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn edge_list_roundtrip((n, extra, seed) in small_graph()) {
        let g = random_connected(n, extra, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.edges");
        write_edge_list(&g, &path).unwrap();
        let back = read_edge_list(&path).unwrap().graph;
        prop_assert_eq!(back.node_count(), n);
        prop_assert!(back.edges().eq(g.edges()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn regular_generator_is_simple_regular_connected(half in 5usize..40, r in 3usize..7, seed in any::<u64>()) {
        let n = 2 * half;
        prop_assume!(r < n);
        let g = generate_random_regular(n, r, seed).unwrap();
        prop_assert_eq!(g.degree_regular(), Some(r));
        prop_assert_eq!(g.edge_count(), n * r / 2);
        prop_assert!(g.edges().all(|(u, v)| u < v));
        // simple r >= 3 regular graphs are connected with high probability;
        // all-pairs BFS must agree with the connectivity check either way
        let d = all_pairs_distances(&g).unwrap();
        prop_assert_eq!(!d.has_unreachable(), is_connected(&g));
    }
}

#[test]
fn regular_mode_rows_sum_to_one() {
    let g = common::cycle(9);
    let eig = EigenSystem::from_graph(&g, LaplacianMode::Regular).unwrap();
    let k = heat_kernel(&eig, 0.7).unwrap();
    for row in k.row_iter() {
        assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
    }
}
