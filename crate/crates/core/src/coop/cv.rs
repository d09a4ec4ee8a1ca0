use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict_rows, CoopProblem, FitOptions};
use crate::error::{Error, Result};
use crate::matrix::fmt_f64;
use crate::rng::substream;

/// Hyperparameter grid. Penalty vectors are visited in the given order for
/// warm starts, so they should run from large to small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub lambdas: Vec<Vec<f64>>,
    pub rhos: Vec<f64>,
}

impl CvGrid {
    /// One shared penalty for all views.
    pub fn tied(values: &[f64], n_views: usize, rhos: &[f64]) -> Self {
        let mut values = values.to_vec();
        values.sort_by(|a, b| b.total_cmp(a));
        Self {
            lambdas: values.iter().map(|&l| vec![l; n_views]).collect(),
            rhos: rhos.to_vec(),
        }
    }

    /// Every combination of per-view penalties.
    pub fn free(per_view: &[Vec<f64>], rhos: &[f64]) -> Self {
        let mut combos: Vec<Vec<f64>> = vec![vec![]];
        for values in per_view {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.push(v);
                        c
                    })
                })
                .collect();
        }
        combos.sort_by(|a, b| b.iter().sum::<f64>().total_cmp(&a.iter().sum::<f64>()));
        Self {
            lambdas: combos,
            rhos: rhos.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.rhos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `n` log-spaced penalties from `max_m ‖Z_mᵀ(y − ȳ)‖_∞` down to
/// `ratio` times that.
pub fn lambda_path(views: &[ArrayView2<f64>], y: ArrayView1<f64>, n: usize, ratio: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::GridEmpty);
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidInput(format!("path ratio {ratio} outside (0, 1]")));
    }
    let prob = CoopProblem::new(views, y, super::ColumnScale::Unchecked)?;
    let lmax = prob.lambda_max();
    if n == 1 {
        return Ok(vec![lmax]);
    }
    let step = ratio.ln() / (n - 1) as f64;
    Ok((0..n).map(|k| lmax * (step * k as f64).exp()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambdas: Vec<f64>,
    pub rho: f64,
    pub mean_mse: f64,
    /// Standard error of the fold MSEs.
    pub se: f64,
    /// Held-out MSE per (repeat, fold), repeat-major.
    pub fold_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub points: Vec<CvPoint>,
    pub chosen: usize,
    /// Fold label of every unit, one vector per repeat.
    pub folds: Vec<Vec<usize>>,
    /// Held-out MSE of predicting the training mean.
    pub null_mse: f64,
    pub n_folds: usize,
    pub n_repeats: usize,
    pub seed: u64,
}

impl CvReport {
    pub fn best(&self) -> &CvPoint {
        &self.points[self.chosen]
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n_views = self.points.first().map(|p| p.lambdas.len()).unwrap_or(0);
        let n_fold_cols = self.n_folds * self.n_repeats;
        let mut header = vec!["rho".to_string()];
        header.extend((1..=n_views).map(|m| format!("lambda_{m}")));
        header.extend(["mean_mse", "se_mse", "chosen"].map(String::from));
        header.extend((0..n_fold_cols).map(|k| {
            format!("mse_r{}_f{}", k / self.n_folds + 1, k % self.n_folds + 1)
        }));
        out.write_record(&header)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut row = vec![fmt_f64(p.rho)];
            row.extend(p.lambdas.iter().map(|&l| fmt_f64(l)));
            row.push(fmt_f64(p.mean_mse));
            row.push(fmt_f64(p.se));
            row.push(u8::from(i == self.chosen).to_string());
            row.extend(p.fold_mse.iter().map(|&v| fmt_f64(v)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sorts units by response and deals fold labels within each consecutive
/// block of `n_folds` in random order, so every fold spans the range of `y`.
pub fn assign_folds(y: ArrayView1<f64>, n_folds: usize, seed: u64, repeat: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut rng = substream(seed, "folds", repeat as u64);
    let mut labels = vec![0; y.len()];
    let mut deck: Vec<usize> = (0..n_folds).collect();
    for block in order.chunks(n_folds) {
        deck.shuffle(&mut rng);
        for (&unit, &label) in block.iter().zip(&deck) {
            labels[unit] = label;
        }
    }
    labels
}

/// Standardizes `train` columns to mean 0 and sample variance 1 and applies
/// the same shift and scale to `test`. Columns constant on `train` become 0.
pub(crate) fn standardize_pair(train: &Array2<f64>, test: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = train.nrows() as f64;
    let mut tr = train.clone();
    let mut te = test.clone();
    for j in 0..train.ncols() {
        let mean = train.column(j).sum() / n;
        let ss: f64 = train.column(j).iter().map(|v| (v - mean).powi(2)).sum();
        let sd = (ss / (n - 1.0)).sqrt();
        let ok = sd > 1e-12 * (1.0 + mean.abs());
        let f = |v: f64| if ok { (v - mean) / sd } else { 0.0 };
        tr.column_mut(j).mapv_inplace(f);
        te.column_mut(j).mapv_inplace(f);
    }
    (tr, te)
}

/// Standardizes every view on all units.
pub fn standardize_views(views: &[ArrayView2<f64>]) -> Vec<Array2<f64>> {
    views
        .iter()
        .map(|z| {
            let z = z.to_owned();
            let empty = Array2::zeros((0, z.ncols()));
            standardize_pair(&z, &empty).0
        })
        .collect()
}

fn mse(a: &Array1<f64>, b: ArrayView1<f64>) -> f64 {
    let d = a - &b;
    d.dot(&d) / d.len() as f64
}

/// Repeated k-fold cross-validation over the grid. Each training fold is
/// re-standardized and the held-out fold is scaled with the training
/// statistics.
pub fn cross_validate(
    views: &[ArrayView2<f64>],
    y: ArrayView1<f64>,
    grid: &CvGrid,
    n_folds: usize,
    n_repeats: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<CvReport> {
    if grid.is_empty() || n_repeats == 0 {
        return Err(Error::GridEmpty);
    }
    let n = y.len();
    if n_folds < 2 || n < n_folds {
        return Err(Error::InvalidInput(format!(
            "{n_folds} folds for {n} observations"
        )));
    }
    if views.iter().any(|z| z.nrows() != n) {
        return Err(Error::ShapeMismatch("views and response differ in length".into()));
    }
    if grid.lambdas.iter().any(|l| l.len() != views.len()) {
        return Err(Error::ShapeMismatch("penalty vectors must have one entry per view".into()));
    }
    let folds: Vec<Vec<usize>> = (0..n_repeats).map(|r| assign_folds(y, n_folds, seed, r)).collect();
    let tasks: Vec<(usize, usize)> = (0..n_repeats)
        .flat_map(|r| (0..n_folds).map(move |f| (r, f)))
        .collect();
    let fit_opts = FitOptions {
        column_scale: super::ColumnScale::SampleVariance,
        ..*opts
    };
    let per_task: Vec<Result<(Vec<f64>, f64)>> = tasks
        .par_iter()
        .map(|&(r, f)| {
            let test: Vec<usize> = (0..n).filter(|&i| folds[r][i] == f).collect();
            let train: Vec<usize> = (0..n).filter(|&i| folds[r][i] != f).collect();
            let (tr_views, te_views): (Vec<_>, Vec<_>) = views
                .iter()
                .map(|z| {
                    standardize_pair(&z.select(Axis(0), &train), &z.select(Axis(0), &test))
                })
                .unzip();
            let y_tr = y.select(Axis(0), &train);
            let y_te = y.select(Axis(0), &test);
            let tr: Vec<_> = tr_views.iter().map(|z| z.view()).collect();
            let te: Vec<_> = te_views.iter().map(|z| z.view()).collect();
            let prob = CoopProblem::new(&tr, y_tr.view(), fit_opts.column_scale)?;
            let null = mse(&Array1::from_elem(test.len(), prob.intercept), y_te.view());
            let mut out = Vec::with_capacity(grid.len());
            for &rho in &grid.rhos {
                let mut warm: Option<Vec<Array1<f64>>> = None;
                for lambdas in &grid.lambdas {
                    let model = prob.fit(lambdas, rho, warm.as_deref(), &fit_opts)?;
                    out.push(mse(&predict_rows(&model, &te)?, y_te.view()));
                    warm = Some(model.betas);
                }
            }
            Ok((out, null))
        })
        .collect();
    let per_task: Vec<(Vec<f64>, f64)> = per_task.into_iter().collect::<Result<_>>()?;
    let k = per_task.len() as f64;
    let null_mse = per_task.iter().map(|(_, n)| n).sum::<f64>() / k;
    let mut points = Vec::with_capacity(grid.len());
    for (ri, &rho) in grid.rhos.iter().enumerate() {
        for (li, lambdas) in grid.lambdas.iter().enumerate() {
            let idx = ri * grid.lambdas.len() + li;
            let fold_mse: Vec<f64> = per_task.iter().map(|(v, _)| v[idx]).collect();
            let mean = fold_mse.iter().sum::<f64>() / k;
            let se = if k > 1.0 {
                (fold_mse.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
            } else {
                0.0
            };
            points.push(CvPoint {
                lambdas: lambdas.clone(),
                rho,
                mean_mse: mean,
                se,
                fold_mse,
            });
        }
    }
    let chosen = choose(&points);
    Ok(CvReport {
        points,
        chosen,
        folds,
        null_mse,
        n_folds,
        n_repeats,
        seed,
    })
}

/// Minimum mean MSE; ties go to the largest total penalty, then the
/// smallest `ρ`.
fn choose(points: &[CvPoint]) -> usize {
    let min = points.iter().map(|p| p.mean_mse).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * min.abs().max(f64::MIN_POSITIVE);
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if p.mean_mse - min > tol {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let q = &points[b];
                let (ls, lq) = (p.lambdas.iter().sum::<f64>(), q.lambdas.iter().sum::<f64>());
                if ls > lq || (ls == lq && p.rho < q.rho) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn folds_are_balanced_and_deterministic() {
        let y = Array1::from_iter((0..103).map(|i| ((i * 37) % 101) as f64));
        let a = assign_folds(y.view(), 20, 9, 0);
        assert_eq!(a, assign_folds(y.view(), 20, 9, 0));
        assert_ne!(a, assign_folds(y.view(), 20, 9, 1));
        let mut counts = [0; 20];
        for &l in &a {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 5 || c == 6), "{counts:?}");
    }

    #[test]
    fn grids() {
        let g = CvGrid::tied(&[0.1, 1.0, 0.5], 2, &[0.0, 0.5]);
        assert_eq!(g.lambdas[0], vec![1.0, 1.0]);
        assert_eq!(g.len(), 6);
        let g = CvGrid::free(&[vec![1.0, 2.0], vec![3.0, 4.0, 5.0]], &[0.0]);
        assert_eq!(g.lambdas.len(), 6);
        assert_eq!(g.lambdas[0], vec![2.0, 5.0]);
        assert!(CvGrid::tied(&[], 2, &[0.0]).is_empty());
    }

    #[test]
    fn tie_break_prefers_heavier_penalty_then_smaller_rho() {
        let pt = |l: f64, rho: f64, m: f64| CvPoint {
            lambdas: vec![l],
            rho,
            mean_mse: m,
            se: 0.0,
            fold_mse: vec![],
        };
        let pts = vec![pt(0.1, 0.0, 1.0), pt(0.5, 0.5, 1.0), pt(0.5, 0.0, 1.0), pt(2.0, 0.0, 1.5)];
        assert_eq!(choose(&pts), 2);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let z = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![1.0, 2.0, 3.0, 4.0];
        let g = CvGrid::tied(&[], 1, &[0.0]);
        assert!(matches!(
            cross_validate(&[z.view()], y.view(), &g, 2, 1, 0, &FitOptions::default()),
            Err(Error::GridEmpty)
        ));
    }

    #[test]
    fn standardize_pair_uses_training_stats() {
        let tr = array![[1.0, 5.0], [3.0, 5.0]];
        let te = array![[5.0, 7.0]];
        let (a, b) = standardize_pair(&tr, &te);
        let sd = 2f64.sqrt();
        assert!((a[[0, 0]] + 1.0 / sd).abs() < 1e-12);
        assert!((b[[0, 0]] - 3.0 / sd).abs() < 1e-12);
        assert_eq!(a[[0, 1]], 0.0);
        assert_eq!(b[[0, 1]], 0.0);
    }
}
