use multiview_core::matrix::standardize_columns;
use multiview_core::pca::{concat_views, pca, pearson};
use multiview_core::svd::singular_values;
use multiview_core::synth::{generate, SynthSpec};
use nalgebra::DMatrix;

#[test]
fn large_view_dominates_concatenation() {
    for seed in 0..3 {
        let spec = SynthSpec::planted(383, vec![20, 1536], 2, vec![1, 1], 10.0, seed);
        let t = generate(&spec).unwrap();
        let a = standardize_columns(&t.views[0]).unwrap();
        let b = standardize_columns(&t.views[1]).unwrap();
        let joint = concat_views(&[("cdr", &a), ("img", &b)]).unwrap();
        let pc_joint = pca(&joint, 3).unwrap();
        let pc_big = pca(&b, 3).unwrap();
        for k in 0..3 {
            let c = pearson(pc_joint.scores.column(k), pc_big.scores.column(k)).abs();
            assert!(c > 0.99, "seed {seed} PC{}: {c}", k + 1);
        }
    }
}

#[test]
fn sigma_matches_full_svd_oracle() {
    let spec = SynthSpec::planted(60, vec![12], 0, vec![3], 5.0, 4);
    let t = generate(&spec).unwrap();
    let m = &t.views[0];
    let r = pca(m, 5).unwrap();
    let centered = m.values() - &m.values().mean_axis(ndarray::Axis(0)).unwrap();
    let d = DMatrix::from_fn(centered.nrows(), centered.ncols(), |i, j| centered[[i, j]]);
    let mut sv: Vec<f64> = d.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    for k in 0..5 {
        assert!((r.sigma[k] - sv[k]).abs() < 1e-8);
    }
    let total: f64 = singular_values(centered.view()).unwrap().iter().map(|s| s * s).sum();
    assert!((r.var_explained[0] - sv[0] * sv[0] / total).abs() < 1e-12);
    // uncorrelated scores
    let cov = r.scores.t().dot(&r.scores);
    for i in 0..5 {
        for j in 0..5 {
            if i != j {
                assert!(cov[[i, j]].abs() < 1e-8);
            }
        }
    }
}
