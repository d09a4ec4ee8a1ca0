//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test -p multiview-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use multiview_core::ajive::{ajive_decompose, rank_sweep, three_view_decompose, AjiveConfig, AjiveResult, JointRankRule};
use multiview_core::coop::{
    cross_validate, feature_sets_from_decompositions, fit, kkt_violation, lambda_path, smooth_gradient,
    smooth_objective, soft_threshold, standardize_views, ColumnScale, CoopProblem, CvGrid, FeatureSource, FitOptions,
};
use multiview_core::matrix::standardize_columns;
use multiview_core::pca::{concat_views, pca, pearson};
use multiview_core::svd::{frob2, orthonormality_error, orthonormalize, truncated_svd_array};
use multiview_core::synth::{generate, principal_angles, ResponseSpec, SynthSpec, SynthTruth};
use multiview_geo::polygon::{intersection_area, ConvexPolygon, Point, Polygon};
use multiview_geo::{voronoi, Site};
use nalgebra::{DMatrix, DVector};
use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

type Outcome = Result<String, String>;

struct Gate {
    failed: Vec<usize>,
}

impl Gate {
    fn check(&mut self, id: usize, name: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(&p))));
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS criterion {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                println!("FAIL criterion {id:>2} {name}: {detail} [{secs:.1}s]");
                self.failed.push(id);
            }
        }
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Run {
    seed: u64,
    truth: SynthTruth,
    res: AjiveResult,
    planted: (usize, Vec<usize>),
}

impl Run {
    fn recovered(&self) -> bool {
        self.res.ranks.joint_rank == self.planted.0 && self.res.ranks.individual_ranks == self.planted.1
    }

    fn max_angle_deg(&self) -> f64 {
        if self.res.joint_rank() != self.truth.joint_scores.ncols() {
            return 90.0;
        }
        principal_angles(&self.res.joint_scores, &self.truth.joint_scores)
            .map(|a| a.iter().fold(0.0_f64, |m, x| m.max(x.to_degrees())))
            .unwrap_or(90.0)
    }

    /// Largest entry of UᵀU − I, of every Uᵢᵀ U_J, and of the difference of
    /// the two joint projections.
    fn orthogonality(&self) -> f64 {
        let r = &self.res;
        let mut worst = orthonormality_error(r.joint_scores.view());
        for b in &r.individual {
            worst = worst.max(b.scores.t().dot(&r.joint_scores).iter().fold(0.0, |m, v| m.max(v.abs())));
        }
        let pb = r.joint_basis.dot(&r.joint_basis.t());
        let ps = r.joint_scores.dot(&r.joint_scores.t());
        worst.max((&pb - &ps).iter().fold(0.0, |m, v| m.max(v.abs())))
    }
}

fn decompose_seeds(p: &[usize], individual: &[usize], initial: &[usize]) -> Vec<Run> {
    (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let spec = SynthSpec::planted(383, p.to_vec(), 2, individual.to_vec(), 10.0, seed);
            let truth = generate(&spec).expect("synthetic data");
            let cfg = AjiveConfig::new(initial.to_vec(), seed);
            let res = if p.len() == 3 {
                three_view_decompose(&truth.views, &cfg)
            } else {
                ajive_decompose(&truth.views, &cfg)
            }
            .expect("decomposition");
            Run {
                seed,
                truth,
                res,
                planted: (2, individual.to_vec()),
            }
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

fn standardized(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    let raw = gaussian(rng, n, p);
    standardize_views(&[raw.view()]).remove(0)
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn tight() -> FitOptions {
    FitOptions {
        tol: 1e-12,
        max_sweeps: 500_000,
        ..Default::default()
    }
}

// criteria 1 to 5 --------------------------------------------------------

fn recovery(runs: &[Run], elapsed: Duration, budget: Duration) -> Outcome {
    let ok = runs.iter().filter(|r| r.recovered()).count();
    let missed: Vec<String> = runs
        .iter()
        .filter(|r| !r.recovered())
        .map(|r| format!("seed {}: {} {:?}", r.seed, r.res.ranks.joint_rank, r.res.ranks.individual_ranks))
        .collect();
    let detail = format!("{ok}/100 recovered in {:.1}s; misses {missed:?}", elapsed.as_secs_f64());
    ensure(ok >= 95, || detail.clone())?;
    ensure(elapsed < budget, || format!("{detail}; over the {}s budget", budget.as_secs()))?;
    Ok(detail)
}

fn orthogonality(sets: &[&[Run]]) -> Outcome {
    let (mut worst, mut count) = (0.0_f64, 0);
    for runs in sets {
        for r in runs.iter() {
            worst = worst.max(r.orthogonality());
            count += 1;
        }
    }
    let detail = format!("worst deviation {worst:.2e} over {count} decompositions");
    ensure(worst <= 1e-10, || detail.clone())?;
    Ok(detail)
}

fn angles(runs: &[Run]) -> Outcome {
    let a: Vec<f64> = runs.iter().map(Run::max_angle_deg).collect();
    let ok = a.iter().filter(|x| **x < 5.0).count();
    let worst = a.iter().fold(0.0_f64, |m, x| m.max(*x));
    let detail = format!("{ok}/100 below 5 degrees, worst {worst:.2}");
    ensure(ok >= 95, || detail.clone())?;
    Ok(detail)
}

fn individual_correlation(runs: &[Run]) -> Outcome {
    let corr = |r: &Run| {
        let b = &r.res.individual;
        if b[0].rank() == 0 || b[1].rank() == 0 {
            return f64::NAN;
        }
        pearson(b[0].scores.column(0), b[1].scores.column(0)).abs()
    };
    let c0 = corr(&runs[0]);
    let below = runs.iter().filter(|r| corr(r) < 0.1).count();
    let detail = format!("|corr| {c0:.4} on seed 0; below 0.1 on {below}/100 seeds");
    ensure(c0 < 0.1, || detail.clone())?;
    Ok(detail)
}

// criterion 6 --------------------------------------------------------------

fn concat_pca() -> Outcome {
    let mut worst = 1.0_f64;
    for seed in 0..10 {
        let spec = SynthSpec::planted(383, vec![20, 1536], 2, vec![1, 1], 10.0, 1000 + seed);
        let t = generate(&spec).map_err(|e| e.to_string())?;
        let a = standardize_columns(&t.views[0]).map_err(|e| e.to_string())?;
        let b = standardize_columns(&t.views[1]).map_err(|e| e.to_string())?;
        let joined = concat_views(&[("small", &a), ("large", &b)]).map_err(|e| e.to_string())?;
        let pj = pca(&joined, 3).map_err(|e| e.to_string())?;
        let pb = pca(&b, 3).map_err(|e| e.to_string())?;
        for k in 0..3 {
            worst = worst.min(pearson(pj.scores.column(k), pb.scores.column(k)).abs());
        }
    }
    let detail = format!("smallest |corr| of the top 3 PCs over 10 datasets {worst:.5}");
    ensure(worst > 0.99, || detail.clone())?;
    Ok(detail)
}

// criterion 7 --------------------------------------------------------------

fn eckart_young() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=50);
        let p = rng.random_range(1..=30);
        let a = gaussian(&mut rng, n, p);
        let mut sv: Vec<f64> = to_na(&a).singular_values().iter().copied().collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        let r = rng.random_range(1..=n.min(p));
        let f = truncated_svd_array(a.view(), r).map_err(|e| e.to_string())?;
        let err = frob2((&a - &f.reconstruct()).view()).sqrt();
        let tail = sv[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
        worst = worst.max((err - tail).abs());
    }
    let detail = format!("largest |error - oracle tail| {worst:.2e} on 100 matrices");
    ensure(worst <= 1e-8, || detail.clone())?;
    Ok(detail)
}

// criterion 8 --------------------------------------------------------------

fn star(rng: &mut ChaCha8Rng, cx: f64, cy: f64, n: usize) -> Polygon {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let ring = angles
        .iter()
        .map(|a| {
            let r = rng.random_range(0.4..1.0);
            Point::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    Polygon::new(vec![ring]).expect("star polygon")
}

fn convex(rng: &mut ChaCha8Rng, cx: f64, cy: f64, r: f64, n: usize) -> ConvexPolygon {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    ConvexPolygon::new(angles.iter().map(|a| Point::new(cx + r * a.cos(), cy + r * a.sin())).collect())
        .expect("convex polygon")
}

fn monte_carlo(seed: u64, n: usize, b: (f64, f64, f64, f64), inside: impl Fn(Point) -> bool + Sync) -> f64 {
    let chunks = 64;
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            (0..n / chunks)
                .filter(|_| inside(Point::new(rng.random_range(b.0..b.1), rng.random_range(b.2..b.3))))
                .count()
        })
        .sum();
    hits as f64 / (n / chunks * chunks) as f64 * (b.1 - b.0) * (b.3 - b.2)
}

fn outline() -> Polygon {
    Polygon::new(vec![vec![
        Point::new(0.5, 0.5),
        Point::new(9.5, 1.0),
        Point::new(9.0, 6.0),
        Point::new(6.0, 5.0),
        Point::new(7.0, 9.5),
        Point::new(1.0, 9.0),
        Point::new(2.0, 5.0),
    ]])
    .expect("outline")
}

fn sites_in(rng: &mut ChaCha8Rng, n: usize, boundary: &Polygon) -> Vec<Site> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        if boundary.contains(p) {
            out.push(Site::new(format!("s{}", out.len()), p.x, p.y));
        }
    }
    out
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let mut worst_area = 0.0_f64;
    for pair in 0..50 {
        let p = star(&mut rng, 0.0, 0.0, 14);
        let (cx, cy) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        let q = convex(&mut rng, cx, cy, 0.9, 9);
        let exact = intersection_area(&p, &q);
        let (pb, qb) = (p.bbox(), q.bbox());
        let b = (pb.min.x.max(qb.min.x), pb.max.x.min(qb.max.x), pb.min.y.max(qb.min.y), pb.max.y.min(qb.max.y));
        let mc = monte_carlo(10_000 + pair, 1_000_000, b, |x| p.contains(x) && q.contains(x));
        worst_area = worst_area.max((exact - mc).abs() / mc);
    }
    ensure(worst_area < 0.01, || format!("intersection area off by {:.3}% of Monte Carlo", 100.0 * worst_area))?;

    let mut worst_partition = 0.0_f64;
    for config in 0..10u64 {
        let boundary = if config % 2 == 0 {
            Polygon::rect(0.0, 0.0, 10.0, 10.0).expect("rect")
        } else {
            outline()
        };
        let n = [1, 3, 40, 200, 593][config as usize % 5];
        let sites = sites_in(&mut rng, n, &boundary);
        let cells = voronoi(&sites, &boundary).map_err(|e| e.to_string())?;
        let total: f64 = (0..cells.len()).map(|i| cells.area(i)).sum();
        worst_partition = worst_partition.max((total - boundary.area()).abs() / boundary.area());
    }
    ensure(worst_partition < 1e-6, || format!("cell areas miss the boundary area by {worst_partition:.2e}"))?;

    let boundary = outline();
    let sites = sites_in(&mut rng, 593, &boundary);
    let cells = voronoi(&sites, &boundary).map_err(|e| e.to_string())?;
    let mut checked = 0;
    while checked < 10_000 {
        let p = Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        if !boundary.contains(p) {
            continue;
        }
        let nearest = sites.iter().map(|s| s.at.dist2(p).sqrt()).fold(f64::INFINITY, f64::min);
        let owner = cells.locate(p).ok_or_else(|| format!("{p:?} lies in no cell"))?;
        let d = sites[owner].at.dist2(p).sqrt();
        ensure(d - nearest < 1e-9, || format!("{p:?} assigned to a site {d} away, nearest {nearest}"))?;
        checked += 1;
    }
    Ok(format!(
        "area error {:.3}% (max), partition error {worst_partition:.1e}, 10000 nearest-site checks",
        100.0 * worst_area
    ))
}

// criterion 9 --------------------------------------------------------------

fn kkt_instances() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9009);
    let mut worst = 0.0_f64;
    for inst in 0..200 {
        let n = rng.random_range(10..=100);
        let m = rng.random_range(1..=3);
        let views: Vec<Array2<f64>> = (0..m)
            .map(|_| {
                let p = rng.random_range(1..=30);
                standardized(&mut rng, n, p)
            })
            .collect();
        let noise = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let y = views[0].column(0).to_owned() * 2.0 + noise + 3.0;
        let zv: Vec<ArrayView2<f64>> = views.iter().map(|v| v.view()).collect();
        let prob = CoopProblem::new(&zv, y.view(), ColumnScale::SampleVariance).map_err(|e| e.to_string())?;
        let lmax = prob.lambda_max();
        let lambdas: Vec<f64> = (0..m).map(|_| lmax * rng.random_range(0.02..1.0)).collect();
        let rho = if inst % 3 == 0 { 0.0 } else { rng.random_range(0.0..3.0) };
        let model = prob.fit(&lambdas, rho, None, &tight()).map_err(|e| e.to_string())?;
        ensure(model.converged, || format!("instance {inst} did not converge"))?;
        worst = worst.max(kkt_violation(&zv, y.view(), &model).map_err(|e| e.to_string())?);
    }
    ensure(worst <= 1e-6, || format!("KKT violation {worst:.2e}"))?;
    Ok(worst)
}

/// Lasso solution on the solver's support and signs, `β_A = (Z_AᵀZ_A)⁻¹(Z_Aᵀy − λs)`,
/// certified by sign agreement and the inactive gradient bound.
fn active_set_lasso(z: &Array2<f64>, y: &Array1<f64>, lambda: f64, support: &[(usize, f64)]) -> Result<Array1<f64>, String> {
    let zn = to_na(z);
    let yn = DVector::from_iterator(y.len(), y.iter().copied());
    let cols: Vec<usize> = support.iter().map(|s| s.0).collect();
    let za = zn.select_columns(&cols);
    let s = DVector::from_iterator(cols.len(), support.iter().map(|s| s.1.signum()));
    let beta_a = (za.transpose() * &za)
        .lu()
        .solve(&(za.transpose() * &yn - s * lambda))
        .ok_or("singular active Gram matrix")?;
    let mut beta = Array1::zeros(z.ncols());
    for (k, &j) in cols.iter().enumerate() {
        ensure(beta_a[k].signum() == support[k].1.signum(), || "sign flip on the active set".into())?;
        beta[j] = beta_a[k];
    }
    let grad = zn.transpose() * (yn - &zn * DVector::from_iterator(beta.len(), beta.iter().copied()));
    for j in (0..z.ncols()).filter(|j| !cols.contains(j)) {
        ensure(grad[j].abs() <= lambda * (1.0 + 1e-9), || format!("inactive coordinate {j} violates the lasso KKT"))?;
    }
    Ok(beta)
}

fn lasso_agreement() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9010);
    let mut worst = 0.0_f64;
    for trial in 0..20 {
        let n = 60;
        let views: Vec<Array2<f64>> = [5, 8, 4].iter().map(|&p| standardized(&mut rng, n, p)).collect();
        let noise = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let y = views[1].column(2).to_owned() * 1.5 - views[0].column(0).to_owned() + noise;
        let zv: Vec<ArrayView2<f64>> = views.iter().map(|v| v.view()).collect();
        let prob = CoopProblem::new(&zv, y.view(), ColumnScale::SampleVariance).map_err(|e| e.to_string())?;
        let lam = prob.lambda_max() * (0.05 + 0.04 * trial as f64);
        let model = fit(&zv, y.view(), &[lam; 3], 0.0, &tight()).map_err(|e| e.to_string())?;
        let z = concatenate(Axis(1), &zv).map_err(|e| e.to_string())?;
        let yc = &y - y.mean().unwrap_or(0.0);
        let support: Vec<(usize, f64)> = model
            .betas
            .iter()
            .flat_map(|b| b.iter().copied())
            .enumerate()
            .filter(|(_, b)| *b != 0.0)
            .collect();
        let exact = active_set_lasso(&z, &yc, lam, &support)?;
        let r = &yc - &z.dot(&exact);
        let obj = 0.5 * r.dot(&r) + lam * exact.iter().map(|b| b.abs()).sum::<f64>();
        worst = worst.max((model.objective - obj).abs() / obj.max(1.0));
    }
    ensure(worst <= 1e-8, || format!("objective gap to the lasso oracle {worst:.2e}"))?;
    Ok(worst)
}

fn orthonormal_closed_form() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9011);
    let n = 40;
    let mut g = gaussian(&mut rng, n, 6);
    let means = g.mean_axis(Axis(0)).ok_or("empty")?;
    g -= &means.insert_axis(Axis(0));
    let z = orthonormalize(g.view());
    let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal)) * 2.0 + 1.0;
    let zty = z.t().dot(&y);
    let opts = FitOptions {
        column_scale: ColumnScale::UnitNorm,
        ..tight()
    };
    let mut worst = 0.0_f64;
    for lam in [0.0, 0.3, 1.0, 2.5] {
        let model = fit(&[z.view()], y.view(), &[lam], 0.0, &opts).map_err(|e| e.to_string())?;
        for j in 0..6 {
            worst = worst.max((model.betas[0][j] - soft_threshold(zty[j], lam)).abs());
        }
    }
    ensure(worst <= 1e-8, || format!("closed form mismatch {worst:.2e}"))?;
    Ok(worst)
}

fn finite_differences() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9012);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let n = 15;
        let views: Vec<Array2<f64>> = [3, 2, 4].iter().map(|&p| standardized(&mut rng, n, p)).collect();
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let betas: Vec<Array1<f64>> = views
            .iter()
            .map(|v| Array1::from_shape_fn(v.ncols(), |_| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let rho = rng.random_range(0.0..2.0);
        let zv: Vec<ArrayView2<f64>> = views.iter().map(|v| v.view()).collect();
        let g = smooth_gradient(&zv, y.view(), &betas, rho).map_err(|e| e.to_string())?;
        let h = 1e-6;
        for m in 0..betas.len() {
            for j in 0..betas[m].len() {
                let (mut up, mut down) = (betas.clone(), betas.clone());
                up[m][j] += h;
                down[m][j] -= h;
                let fd = (smooth_objective(&zv, y.view(), &up, rho).map_err(|e| e.to_string())?
                    - smooth_objective(&zv, y.view(), &down, rho).map_err(|e| e.to_string())?)
                    / (2.0 * h);
                worst = worst.max((fd - g[m][j]).abs() / g[m][j].abs().max(1.0));
            }
        }
    }
    ensure(worst <= 1e-4, || format!("gradient vs finite differences {worst:.2e}"))?;
    Ok(worst)
}

fn solver() -> Outcome {
    let kkt = kkt_instances()?;
    let lasso = lasso_agreement()?;
    let closed = orthonormal_closed_form()?;
    let fd = finite_differences()?;
    Ok(format!(
        "KKT {kkt:.1e} on 200 instances, lasso objective gap {lasso:.1e}, closed form {closed:.1e}, gradient {fd:.1e}"
    ))
}

// criterion 10 -------------------------------------------------------------

fn cooperative_penalty() -> Outcome {
    let mut spec = SynthSpec::planted(383, vec![20, 300], 2, vec![1, 1], 10.0, 1010);
    spec.response = Some(ResponseSpec {
        weights: vec![1.0, -0.6],
        noise_sd: 0.5,
    });
    let t = generate(&spec).map_err(|e| e.to_string())?;
    let y = t.response.clone().ok_or("no response")?;
    let views: Vec<_> = t.views.iter().map(|v| standardize_columns(v).expect("standardize")).collect();
    let res = ajive_decompose(&views, &AjiveConfig::new(vec![3, 3], 1010)).map_err(|e| e.to_string())?;
    let names = vec!["small".to_string(), "large".to_string()];
    let sets = feature_sets_from_decompositions(FeatureSource::Ajive(&res), &names, 30, true).map_err(|e| e.to_string())?;
    let raw: Vec<ArrayView2<f64>> = sets.iter().map(|s| s.1.values().view()).collect();
    let z = standardize_views(&raw);
    let zv: Vec<ArrayView2<f64>> = z.iter().map(|a| a.view()).collect();
    let path = lambda_path(&zv, y.view(), 50, 1e-3).map_err(|e| e.to_string())?;
    let rhos = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let grid = CvGrid::tied(&path, zv.len(), &rhos);
    let rep = cross_validate(&zv, y.view(), &grid, 20, 5, 1010, &FitOptions::default()).map_err(|e| e.to_string())?;
    let best_at = |rho: f64| {
        rep.points
            .iter()
            .filter(|p| p.rho == rho)
            .min_by(|a, b| a.mean_mse.total_cmp(&b.mean_mse))
            .expect("grid point")
    };
    let zero = best_at(0.0).mean_mse;
    let mut parts = vec![format!("rho=0 {zero:.4}")];
    for &rho in &rhos[1..] {
        let p = best_at(rho);
        parts.push(format!("rho={rho} {:.4}±{:.4}", p.mean_mse, p.se));
        ensure(zero <= p.mean_mse + p.se, || format!("rho={rho} beats rho=0 by more than one SE: {}", parts.join(", ")))?;
    }
    Ok(format!("CV MSE {}", parts.join(", ")))
}

// criterion 11 -------------------------------------------------------------

fn sweep_pattern() -> Outcome {
    let mut shapes = Vec::new();
    for seed in [1100, 1101, 1102] {
        let spec = SynthSpec::planted(383, vec![20, 1536], 2, vec![1, 1], 10.0, seed);
        let t = generate(&spec).map_err(|e| e.to_string())?;
        let rows = rank_sweep(&t.views, 1..=6, &JointRankRule::default(), seed).map_err(|e| e.to_string())?;
        let js: Vec<usize> = rows.iter().map(|r| r.joint_rank).collect();
        ensure(js[2] == 2 && js[..2].iter().all(|&j| j <= 2), || format!("seed {seed}: joint ranks {js:?}"))?;
        for r in &rows[..3] {
            ensure(r.individual_ranks.iter().all(|&k| k <= 1), || {
                format!("seed {seed}: initial rank {} keeps individual ranks {:?}", r.initial_rank, r.individual_ranks)
            })?;
        }
        ensure(rows[2].individual_ranks == vec![1, 1], || format!("seed {seed}: {:?}", rows[2].individual_ranks))?;
        shapes.push(format!("{js:?}"));
    }
    Ok(format!("joint rank by initial rank 1..6: {}", shapes.join(" ")))
}

// criterion 12 -------------------------------------------------------------

fn binary(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_multiview"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`multiview {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).expect("run directory").flatten() {
        let p = e.path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let s = |p: &Path| p.to_string_lossy().into_owned();
    binary(&["simulate", "--out", &s(&root.join("data")), "--seed", "12", "--response-weights", "1,-0.6"])?;
    let config = serde_json::json!({
        "views": [
            {"name": "small", "matrix": "data/view1.csv"},
            {"name": "large", "matrix": "data/view2.csv"}
        ],
        "preprocess": [{"op": "winsorize", "lower": 0.01, "upper": 0.99}, {"op": "standardize"}],
        "ranks": {"initial": [3, 3], "sweep": 4},
        "regression": {"response": "data/response.csv", "folds": 10, "repeats": 2, "n_lambda": 20},
        "external_scores": [{"name": "response", "path": "data/response.csv"}],
        "seed": 12
    });
    let cfg = root.join("config.json");
    std::fs::write(&cfg, serde_json::to_vec_pretty(&config).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    binary(&["run", "--config", &s(&cfg), "--out", &s(&root.join("a")), "--threads", "1"])?;
    binary(&["run", "--config", &s(&cfg), "--out", &s(&root.join("b")), "--threads", "4"])?;
    let (a, b) = (files(&root.join("a")), files(&root.join("b")));
    let rel = |d: &Path, v: &[std::path::PathBuf]| -> Vec<std::path::PathBuf> {
        v.iter().map(|p| p.strip_prefix(d).expect("inside").to_path_buf()).collect()
    };
    ensure(rel(&root.join("a"), &a) == rel(&root.join("b"), &b), || "runs wrote different file sets".into())?;
    let mut csvs = 0;
    for (x, y) in a.iter().zip(&b) {
        let same = std::fs::read(x).map_err(|e| e.to_string())? == std::fs::read(y).map_err(|e| e.to_string())?;
        ensure(same, || format!("{} differs between runs", x.display()))?;
        csvs += usize::from(x.extension().is_some_and(|e| e == "csv"));
    }
    ensure(csvs >= 20, || format!("only {csvs} CSV outputs"))?;
    Ok(format!("{} files ({csvs} CSV) identical across runs with 1 and 4 threads", a.len()))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut gate = Gate { failed: Vec::new() };

    let start = Instant::now();
    let two = decompose_seeds(&[20, 1536], &[1, 1], &[3, 3]);
    let t_two = start.elapsed();
    let start = Instant::now();
    let three = decompose_seeds(&[20, 1536, 40], &[1, 1, 1], &[3, 3, 2]);
    let t_three = start.elapsed();

    gate.check(1, "two-view rank recovery", || recovery(&two, t_two, Duration::from_secs(300)));
    gate.check(2, "three-view rank recovery", || recovery(&three, t_three, Duration::MAX));
    gate.check(3, "orthogonality", || orthogonality(&[&two, &three]));
    gate.check(4, "joint subspace accuracy", || angles(&two));
    gate.check(5, "individual decorrelation", || individual_correlation(&two));
    gate.check(6, "concatenated PCA dominance", concat_pca);
    gate.check(7, "Eckart-Young", eckart_young);
    gate.check(8, "geometry oracle", geometry);
    gate.check(9, "solver correctness", solver);
    let start = Instant::now();
    gate.check(10, "cooperative penalty", || {
        let out = cooperative_penalty()?;
        ensure(start.elapsed() < Duration::from_secs(600), || format!("{out}; over 10 min"))?;
        Ok(out)
    });
    gate.check(11, "rank sweep pattern", sweep_pattern);
    gate.check(12, "determinism", determinism);

    if gate.failed.is_empty() {
        println!("acceptance: all 12 criteria pass");
    } else {
        println!("acceptance: failed {:?}", gate.failed);
        std::process::exit(1);
    }
}
