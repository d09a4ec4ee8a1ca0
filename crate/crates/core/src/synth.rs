//! Synthetic multiview data with planted joint, individual and noise blocks.
//!
//! Views are generated as
//! `X_i = U_J diag(s_J) V_{J,i}ᵀ + U_i diag(s_i) V_iᵀ + noise_sd · G_i`
//! with `G_i` standard normal. All score matrices are orthonormal and
//! orthogonal to the all-ones vector, individual scores are orthogonal to the
//! joint scores, and `(V_{J,i}, V_i)` is jointly orthonormal, so the planted
//! singular values of each signal block are exactly the strengths.
//!
//! Signal-to-noise ratio is `min(s_J) / (noise_sd · sqrt(max(n, max_i p_i)))`.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::{substream, Rng as ChaCha};
use crate::svd::{orthonormality_error, orthonormalize, thin_svd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    /// One weight per joint component; `y = sqrt(n) U_J w + noise`.
    pub weights: Vec<f64>,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub p: Vec<usize>,
    /// Singular value of each joint component (length = joint rank).
    pub joint_strength: Vec<f64>,
    /// Per view, singular value of each individual component.
    pub individual_strength: Vec<Vec<f64>>,
    pub noise_sd: f64,
    pub response: Option<ResponseSpec>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn joint_rank(&self) -> usize {
        self.joint_strength.len()
    }

    pub fn individual_ranks(&self) -> Vec<usize> {
        self.individual_strength.iter().map(Vec::len).collect()
    }

    /// Noise scale that yields the given SNR for the weakest joint component.
    pub fn noise_for_snr(n: usize, p: &[usize], weakest_joint: f64, snr: f64) -> f64 {
        let m = p.iter().copied().max().unwrap_or(0).max(n) as f64;
        weakest_joint / (snr * m.sqrt())
    }

    pub fn snr(&self) -> f64 {
        let weakest = self.joint_strength.iter().copied().fold(f64::INFINITY, f64::min);
        let m = self.p.iter().copied().max().unwrap_or(0).max(self.n) as f64;
        weakest / (self.noise_sd * m.sqrt())
    }

    /// Planted layout used throughout the tests: joint strengths
    /// `(1.25, 1.0, …)`-scaled, individual components 1.6× the leading joint
    /// one, and noise set for the requested SNR. Making the individual
    /// components dominant reproduces the rank-sweep pattern in which the
    /// joint rank only emerges as the initial ranks grow.
    pub fn planted(
        n: usize,
        p: Vec<usize>,
        joint_rank: usize,
        individual_ranks: Vec<usize>,
        snr: f64,
        seed: u64,
    ) -> Self {
        let base = 100.0;
        let joint_strength: Vec<f64> = (0..joint_rank)
            .map(|k| base * (1.0 + 0.25 * (joint_rank - 1 - k) as f64))
            .collect();
        let lead = joint_strength.first().copied().unwrap_or(base);
        let individual_strength = individual_ranks
            .iter()
            .map(|&r| (0..r).map(|k| 1.6 * lead * (1.0 - 0.1 * k as f64)).collect())
            .collect();
        let weakest = joint_strength.last().copied().unwrap_or(base);
        let noise_sd = if snr.is_finite() && snr > 0.0 {
            Self::noise_for_snr(n, &p, weakest, snr)
        } else {
            0.0
        };
        Self {
            n,
            p,
            joint_strength,
            individual_strength,
            noise_sd,
            response: None,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let k = self.p.len();
        if k == 0 {
            return Err(Error::SpecInfeasible("no views".into()));
        }
        if self.individual_strength.len() != k {
            return Err(Error::SpecInfeasible(format!(
                "{} individual strength lists for {k} views",
                self.individual_strength.len()
            )));
        }
        if self.n < 2 {
            return Err(Error::SpecInfeasible("n must be at least 2".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::SpecInfeasible("noise_sd must be finite and >= 0".into()));
        }
        let all_strengths = self
            .joint_strength
            .iter()
            .chain(self.individual_strength.iter().flatten());
        if all_strengths.clone().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::SpecInfeasible("strengths must be positive".into()));
        }
        let rj = self.joint_rank();
        let max_ind = self.individual_ranks().into_iter().max().unwrap_or(0);
        // scores are orthogonal to the ones vector
        if rj + max_ind > self.n - 1 {
            return Err(Error::SpecInfeasible(format!(
                "joint + individual rank {} exceeds n - 1 = {}",
                rj + max_ind,
                self.n - 1
            )));
        }
        for (i, (&p, ri)) in self.p.iter().zip(self.individual_ranks()).enumerate() {
            if rj + ri > p {
                return Err(Error::SpecInfeasible(format!(
                    "view {i}: joint + individual rank {} exceeds p = {p}",
                    rj + ri
                )));
            }
        }
        if let Some(resp) = &self.response {
            if resp.weights.len() != rj {
                return Err(Error::SpecInfeasible(format!(
                    "{} response weights for joint rank {rj}",
                    resp.weights.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub joint_scores: Array2<f64>,
    pub individual_scores: Vec<Array2<f64>>,
    pub joint_loadings: Vec<Array2<f64>>,
    pub individual_loadings: Vec<Array2<f64>>,
    pub noise: Vec<Array2<f64>>,
    pub views: Vec<FeatureMatrix>,
    pub response: Option<Array1<f64>>,
}

fn gaussian(rng: &mut ChaCha, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

fn centered_orthonormal(mut g: Array2<f64>, against: Option<&Array2<f64>>) -> Array2<f64> {
    if g.ncols() == 0 {
        return g;
    }
    let means = g.mean_axis(Axis(0)).expect("rows");
    g -= &means.insert_axis(Axis(0));
    if let Some(q) = against {
        if q.ncols() > 0 {
            // two passes of Gram-Schmidt against q for numerical orthogonality
            for _ in 0..2 {
                let proj = q.dot(&q.t().dot(&g));
                g -= &proj;
            }
        }
    }
    orthonormalize(g.view())
}

pub fn generate(spec: &SynthSpec) -> Result<SynthTruth> {
    spec.validate()?;
    let n = spec.n;
    let rj = spec.joint_rank();
    let mut rng = substream(spec.seed, "synth", 0);

    let joint_scores = centered_orthonormal(gaussian(&mut rng, n, rj), None);
    let sj = Array1::from(spec.joint_strength.clone());

    let mut individual_scores = Vec::new();
    let mut joint_loadings = Vec::new();
    let mut individual_loadings = Vec::new();
    let mut noise = Vec::new();
    let mut views = Vec::new();
    for (i, (&p, strengths)) in spec.p.iter().zip(&spec.individual_strength).enumerate() {
        let mut vrng = substream(spec.seed, "synth", 1 + i as u64);
        let ri = strengths.len();
        let ui = centered_orthonormal(gaussian(&mut vrng, n, ri), Some(&joint_scores));
        let loads = orthonormalize(gaussian(&mut vrng, p, rj + ri).view());
        let vj = loads.slice(s![.., ..rj]).to_owned();
        let vi = loads.slice(s![.., rj..]).to_owned();
        let si = Array1::from(strengths.clone());
        let e = gaussian(&mut vrng, n, p) * spec.noise_sd;
        let x = (&joint_scores * &sj.view().insert_axis(Axis(0))).dot(&vj.t())
            + (&ui * &si.view().insert_axis(Axis(0))).dot(&vi.t())
            + &e;
        let ids = (0..n).map(|u| format!("u{u:04}")).collect();
        let names = (1..=p).map(|j| format!("v{}f{j}", i + 1)).collect();
        views.push(FeatureMatrix::new(ids, names, x)?);
        individual_scores.push(ui);
        joint_loadings.push(vj);
        individual_loadings.push(vi);
        noise.push(e);
    }

    let response = spec.response.as_ref().map(|r| {
        let mut yrng = substream(spec.seed, "synth-response", 0);
        let w = Array1::from(r.weights.clone());
        let signal = joint_scores.dot(&w) * (n as f64).sqrt();
        let eps = Array1::from_shape_fn(n, |_| yrng.sample::<f64, _>(StandardNormal) * r.noise_sd);
        signal + eps
    });

    Ok(SynthTruth {
        joint_scores,
        individual_scores,
        joint_loadings,
        individual_loadings,
        noise,
        views,
        response,
    })
}

/// Principal angles (radians, nondecreasing) between the column spaces of two
/// orthonormal bases.
pub fn principal_angles(a: &Array2<f64>, b: &Array2<f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "bases have {} and {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    for m in [a, b] {
        let err = orthonormality_error(m.view());
        if err > 1e-8 {
            return Err(Error::NotOrthonormal(err));
        }
    }
    if a.ncols() == 0 || b.ncols() == 0 {
        return Ok(Vec::new());
    }
    let c = a.t().dot(b);
    let f = thin_svd(c.view())?;
    let mut angles: Vec<f64> = f.sigma.iter().map(|&s| s.clamp(0.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Stacks joint and individual truth for one view, e.g. to check that the
/// generated truth satisfies the decomposition's orthogonality contract.
pub fn view_signal_scores(truth: &SynthTruth, view: usize) -> Array2<f64> {
    concatenate![Axis(1), truth.joint_scores, truth.individual_scores[view]]
}
