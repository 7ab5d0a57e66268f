//! Empirical verification of the analytical devices: persistency of
//! excitation of the lifted covariates, the Gaussian quadratic-form lower
//! bound, and orthogonal-transform-invariant error metrics.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqg_model::LqgModel;
use crate::matstat::{sym_eig, Mat, StreamRng};
use crate::simulate::{build_histories, rollout_excite};

/// Minimum eigenvalue of the lifted covariate Gram matrix at increasing
/// sample counts, all from one nested trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeCurve {
    pub ts: Vec<usize>,
    pub min_eigs: Vec<f64>,
    /// Least-squares slope of log λ_min against log T.
    pub slope: f64,
}

pub fn pe_curve(
    model: &LqgModel,
    h: usize,
    sigma_u: f64,
    ts: &[usize],
    rng: &mut StreamRng,
) -> Result<PeCurve> {
    if ts.is_empty() || ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("pe_curve: sample counts must be strictly increasing".into()));
    }
    let t_max = *ts.last().unwrap();
    let traj = rollout_excite(model, t_max, h, sigma_u, rng, false)?;
    // d_x = 1 exposes exactly the rows t = H..T+H−1
    let ds = build_histories(&traj, h, 1, &model.r)?;
    let p = ds.lifted_dim();
    let mut gram = Mat::zeros(p, p);
    let mut min_eigs = Vec::with_capacity(ts.len());
    let mut next = 0;
    for i in 0..ds.n {
        let f = ds.lifted_row(i);
        gram += &f * f.transpose();
        while next < ts.len() && i + 1 == ts[next] {
            min_eigs.push(sym_eig(&gram)?.values.min().max(0.0));
            next += 1;
        }
    }
    if min_eigs.len() != ts.len() {
        return Err(Error::InsufficientData("pe_curve: trajectory shorter than requested counts".into()));
    }
    let pairs: Vec<(f64, f64)> = ts
        .iter()
        .zip(&min_eigs)
        .filter(|(_, &l)| l > 0.0)
        .map(|(&t, &l)| ((t as f64).ln(), l.ln()))
        .collect();
    let slope = if pairs.len() >= 2 {
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok(PeCurve { ts: ts.to_vec(), min_eigs, slope })
}

/// One probed direction of the quadratic-form bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadformProbe {
    pub label: String,
    pub estimate: f64,
    pub se: f64,
}

/// Monte-Carlo check of inf over unit v of E|v_{d+1} + Σ v_i z_i²|
/// against the 0.8·d^{−3/2} lower bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadformReport {
    pub d: usize,
    pub trials: usize,
    pub mc_samples: usize,
    pub bound: f64,
    pub min_estimate: f64,
    pub min_se: f64,
    pub min_label: String,
    pub probes: Vec<QuadformProbe>,
}

/// Candidate directions from the proof's case split: the pure-constant
/// vector, the |v_{d+1}| = 2√(d/(4d+1)) boundary patterns, and the
/// mean-cancelling direction, plus `trials` random unit vectors.
fn quadform_candidates(d: usize, trials: usize, rng: &mut StreamRng) -> Vec<(String, DVector<f64>)> {
    let mut out = Vec::new();
    let mut e_last = DVector::zeros(d + 1);
    e_last[d] = 1.0;
    out.push(("e_{d+1}".to_string(), e_last));

    let boundary = 2.0 * (d as f64 / (4.0 * d as f64 + 1.0)).sqrt();
    let rest = (1.0 / (d as f64 * (4.0 * d as f64 + 1.0))).sqrt();
    for (sign_c, sc) in [(1.0, "+"), (-1.0, "-")] {
        for (pattern, pname) in [(0u8, "flat"), (1, "alternating")] {
            let mut v = DVector::zeros(d + 1);
            v[d] = sign_c * boundary;
            for i in 0..d {
                let s = if pattern == 1 && i % 2 == 1 { -1.0 } else { 1.0 };
                v[i] = s * rest;
            }
            out.push((format!("boundary{sc}/{pname}"), v));
        }
    }

    let c = (1.0 / (d as f64 + (d as f64).powi(2))).sqrt();
    let mut cancel = DVector::from_element(d + 1, c);
    cancel[d] = -c * d as f64;
    out.push(("mean-cancelling".to_string(), cancel));

    for k in 0..trials {
        let mut v = DVector::from_fn(d + 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        v /= v.norm();
        out.push((format!("random{k}"), v));
    }
    out
}

pub fn quadform_lb_mc(
    d: usize,
    trials: usize,
    mc_samples: usize,
    rng: &mut StreamRng,
) -> Result<QuadformReport> {
    if d == 0 || trials == 0 {
        return Err(Error::Argument("quadform_lb_mc: d and trials must be positive".into()));
    }
    if mc_samples < 10_000 {
        return Err(Error::Argument("quadform_lb_mc: need at least 10^4 samples".into()));
    }
    let candidates = quadform_candidates(d, trials, rng);
    let m = candidates.len();
    let mut sums = vec![0.0f64; m];
    let mut sumsqs = vec![0.0f64; m];
    let mut z2 = vec![0.0f64; d];
    // common random numbers across candidates
    for _ in 0..mc_samples {
        for z in z2.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *z = g * g;
        }
        for (j, (_, v)) in candidates.iter().enumerate() {
            let mut acc = v[d];
            for i in 0..d {
                acc += v[i] * z2[i];
            }
            let a = acc.abs();
            sums[j] += a;
            sumsqs[j] += a * a;
        }
    }
    let n = mc_samples as f64;
    let mut probes = Vec::with_capacity(m);
    let mut min_idx = 0;
    for (j, (label, _)) in candidates.iter().enumerate() {
        let mean = sums[j] / n;
        let var = (sumsqs[j] / n - mean * mean).max(0.0);
        let se = (var / n).sqrt();
        probes.push(QuadformProbe { label: label.clone(), estimate: mean, se });
        if mean < probes[min_idx].estimate {
            min_idx = j;
        }
    }
    Ok(QuadformReport {
        d,
        trials,
        mc_samples,
        bound: 0.8 * (d as f64).powf(-1.5),
        min_estimate: probes[min_idx].estimate,
        min_se: probes[min_idx].se,
        min_label: probes[min_idx].label.clone(),
        probes,
    })
}

/// Orthogonal Procrustes alignment: S = UVᵀ from the SVD of M̂M*ᵀ, and the
/// minimum of ‖M̂ − SM*‖_F over orthogonal S.
pub fn procrustes_align(m_hat: &Mat, m_star: &Mat) -> Result<(Mat, f64)> {
    if m_hat.shape() != m_star.shape() {
        return Err(Error::Argument(format!(
            "procrustes_align: shape mismatch {:?} vs {:?}",
            m_hat.shape(),
            m_star.shape()
        )));
    }
    let svd = (m_hat * m_star.transpose()).svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let s = u * v_t;
    let dist = (m_hat - &s * m_star).norm();
    Ok((s, dist))
}

/// Orthogonal-invariant error record of learned artifacts against the
/// normalized ground truth, with S the Procrustes match of M̂ to M*.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentErrors {
    pub m_err: f64,
    pub a_err: f64,
    pub b_err: f64,
    pub q_err: f64,
    pub k_err: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn latent_errors(
    m_hat: &Mat,
    a_hat: &Mat,
    b_hat: &Mat,
    q_hat: &Mat,
    k_hat: &Mat,
    m_star: &Mat,
    a_star: &Mat,
    b_star: &Mat,
    q_star: &Mat,
    k_star: &Mat,
) -> Result<LatentErrors> {
    let (s, m_err) = procrustes_align(m_hat, m_star)?;
    let norm2 = |m: Mat| m.svd(false, false).singular_values.max();
    Ok(LatentErrors {
        m_err,
        a_err: norm2(a_hat - &s * a_star * s.transpose()),
        b_err: norm2(b_hat - &s * b_star),
        q_err: norm2(q_hat - &s * q_star * s.transpose()),
        k_err: norm2(k_hat - k_star * s.transpose()),
    })
}
