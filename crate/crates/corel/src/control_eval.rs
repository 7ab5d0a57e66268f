//! Certainty-equivalent planning in the learned latent model and
//! exact/simulated evaluation of history-based policies.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent_id::LatentModel;
use crate::lqg_model::{lqr_gain, optimal_average_cost, solve_dare, LqgModel};
use crate::matstat::{
    frob_inner, solve_lyapunov, spectral_radius, GaussianSampler, Mat, StreamRng,
};
use crate::serde_mat;

/// History-based policy u_t = K·M·h_t over H-step histories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Policy {
    #[serde(with = "serde_mat")]
    pub m: Mat,
    #[serde(with = "serde_mat")]
    pub k: Mat,
    pub h: usize,
}

/// Excitation used for the warm-up steps before a history policy can act.
const WARMUP_SIGMA_U: f64 = 1.0;

/// Feedback gain K̂ by certainty equivalence: solve the control DARE in the
/// learned latent model.
pub fn plan(latent: &LatentModel) -> Result<Mat> {
    let p = solve_dare(&latent.a_hat, &latent.b_hat, &latent.q_hat, &latent.r)
        .map_err(|e| Error::Planning(format!("latent DARE: {e}")))?;
    let k = lqr_gain(&latent.a_hat, &latent.b_hat, &latent.r, &p);
    let rho = spectral_radius(&(&latent.a_hat + &latent.b_hat * &k))?;
    if rho >= 1.0 {
        return Err(Error::Planning(format!(
            "certainty-equivalent gain does not stabilize the latent model (rho {rho})"
        )));
    }
    Ok(k)
}

/// The augmented closed loop over s_t = [x_t; h_t], where the history block
/// is a shift register fed by y_{t+1} = C(Ax + Bu) + Cw + v and u_t = KMh_t.
/// Returns the transition matrix and the stationary noise covariance.
pub fn closed_loop(model: &LqgModel, policy: &Policy) -> Result<(Mat, Mat)> {
    let (d_x, d_y, d_u) = (model.d_x(), model.d_y(), model.d_u());
    let h = policy.h;
    let d_h = h * (d_y + d_u);
    if policy.m.ncols() != d_h {
        return Err(Error::Argument(format!(
            "policy map takes dimension {}, model histories have d_h {}",
            policy.m.ncols(),
            d_h
        )));
    }
    if policy.k.ncols() != policy.m.nrows() || policy.k.nrows() != d_u {
        return Err(Error::Argument("policy gain dimensions inconsistent".into()));
    }
    let f = &policy.k * &policy.m; // d_u × d_h
    let n_aug = d_x + d_h;
    let y_last = d_x + (h - 1) * d_y; // row where y_{t+1} enters
    let u_last = d_x + h * d_y + (h - 1) * d_u; // row where u_t enters

    let mut f_aug = Mat::zeros(n_aug, n_aug);
    let bf = &model.b * &f;
    f_aug.view_mut((0, 0), (d_x, d_x)).copy_from(&model.a);
    f_aug.view_mut((0, d_x), (d_x, d_h)).copy_from(&bf);
    // shift registers drop the oldest block
    for r in 0..(h - 1) * d_y {
        f_aug[(d_x + r, d_x + d_y + r)] = 1.0;
    }
    for r in 0..(h - 1) * d_u {
        f_aug[(d_x + h * d_y + r, d_x + h * d_y + d_u + r)] = 1.0;
    }
    let ca = &model.c * &model.a;
    let cbf = &model.c * &bf;
    f_aug.view_mut((y_last, 0), (d_y, d_x)).copy_from(&ca);
    let mut y_row_h = f_aug.view((y_last, d_x), (d_y, d_h)).into_owned();
    y_row_h += &cbf;
    f_aug.view_mut((y_last, d_x), (d_y, d_h)).copy_from(&y_row_h);
    let mut u_row_h = f_aug.view((u_last, d_x), (d_u, d_h)).into_owned();
    u_row_h += &f;
    f_aug.view_mut((u_last, d_x), (d_u, d_h)).copy_from(&u_row_h);

    // noise maps: w enters x and (through C) the new observation; v enters
    // the new observation directly
    let mut g_w = Mat::zeros(n_aug, d_x);
    g_w.view_mut((0, 0), (d_x, d_x)).copy_from(&Mat::identity(d_x, d_x));
    g_w.view_mut((y_last, 0), (d_y, d_x)).copy_from(&model.c);
    let mut g_v = Mat::zeros(n_aug, d_y);
    g_v.view_mut((y_last, 0), (d_y, d_y)).copy_from(&Mat::identity(d_y, d_y));
    let w_aug = &g_w * &model.sigma_w * g_w.transpose() + &g_v * &model.sigma_v * g_v.transpose();
    Ok((f_aug, w_aug))
}

/// Exact infinite-horizon average cost of a history policy, from the
/// stationary covariance of the augmented closed loop.
pub fn evaluate_analytic(model: &LqgModel, policy: &Policy) -> Result<f64> {
    let (f_aug, w_aug) = closed_loop(model, policy)?;
    let rho = spectral_radius(&f_aug)?;
    if rho >= 1.0 {
        return Err(Error::Instability { rho, context: "policy closed loop".into() });
    }
    let sigma = solve_lyapunov(&f_aug, &w_aug)?;
    let d_x = model.d_x();
    let d_h = policy.h * (model.d_y() + model.d_u());
    let sigma_xx = sigma.view((0, 0), (d_x, d_x)).into_owned();
    let sigma_hh = sigma.view((d_x, d_x), (d_h, d_h)).into_owned();
    let f = &policy.k * &policy.m;
    Ok(frob_inner(&model.q, &sigma_xx) + frob_inner(&model.r, &(&f * sigma_hh * f.transpose())))
}

/// Monte-Carlo average cost over [burn_in, t_eval) under the policy, with
/// Gaussian warm-up for the first H steps. Deterministic per seed.
pub fn evaluate_rollout(
    model: &LqgModel,
    policy: &Policy,
    t_eval: usize,
    burn_in: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    if t_eval < 10 * burn_in {
        return Err(Error::Argument(format!(
            "evaluate_rollout: t_eval {t_eval} below 10×burn_in {burn_in}"
        )));
    }
    let (d_y, d_u) = (model.d_y(), model.d_u());
    let h = policy.h;
    let zero_x = DVector::zeros(model.d_x());
    let zero_y = DVector::zeros(d_y);
    let init = GaussianSampler::new(&zero_x, &model.sigma_0)?;
    let proc_noise = GaussianSampler::new(&zero_x, &model.sigma_w)?;
    let obs_noise = GaussianSampler::new(&zero_y, &model.sigma_v)?;
    let f = &policy.k * &policy.m;

    let mut x = init.draw(rng);
    let mut ys: Vec<DVector<f64>> = Vec::with_capacity(h + 1);
    let mut us: Vec<DVector<f64>> = Vec::with_capacity(h);
    ys.push(&model.c * &x + obs_noise.draw(rng));
    let mut acc = 0.0;
    let mut count = 0usize;
    for t in 0..t_eval {
        let u = if t < h {
            DVector::from_iterator(
                d_u,
                (0..d_u).map(|_| WARMUP_SIGMA_U * rng.sample::<f64, _>(StandardNormal)),
            )
        } else {
            let mut hist = DVector::zeros(h * (d_y + d_u));
            for j in 0..h {
                hist.rows_mut(j * d_y, d_y).copy_from(&ys[ys.len() - h + j]);
                hist.rows_mut(h * d_y + j * d_u, d_u).copy_from(&us[us.len() - h + j]);
            }
            &f * hist
        };
        let cost = (&model.q * &x).dot(&x) + (&model.r * &u).dot(&u);
        if t >= burn_in {
            acc += cost;
            count += 1;
            if acc / count as f64 > 1e12 {
                return Err(Error::Instability {
                    rho: f64::NAN,
                    context: format!("rollout cost diverged at step {t}"),
                });
            }
        }
        x = &model.a * &x + &model.b * &u + proc_noise.draw(rng);
        ys.push(&model.c * &x + obs_noise.draw(rng));
        us.push(u);
        if ys.len() > h + 1 {
            ys.remove(0);
        }
        if us.len() > h {
            us.remove(0);
        }
    }
    Ok(acc / count as f64)
}

/// Monte-Carlo average cost of the exact (L*, K*) Kalman-filter policy.
pub fn evaluate_kalman_rollout(
    model: &LqgModel,
    t_eval: usize,
    burn_in: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    let gains = crate::lqg_model::DerivedGains::compute(model)?;
    let zero_x = DVector::zeros(model.d_x());
    let zero_y = DVector::zeros(model.d_y());
    let init = GaussianSampler::new(&zero_x, &model.sigma_0)?;
    let proc_noise = GaussianSampler::new(&zero_x, &model.sigma_w)?;
    let obs_noise = GaussianSampler::new(&zero_y, &model.sigma_v)?;

    let mut x = init.draw(rng);
    let y0 = &model.c * &x + obs_noise.draw(rng);
    let mut z = &gains.l_star * y0;
    let mut acc = 0.0;
    let mut count = 0usize;
    for t in 0..t_eval {
        let u = &gains.k_star * &z;
        if t >= burn_in {
            acc += (&model.q * &x).dot(&x) + (&model.r * &u).dot(&u);
            count += 1;
        }
        x = &model.a * &x + &model.b * &u + proc_noise.draw(rng);
        let y_next = &model.c * &x + obs_noise.draw(rng);
        z = &gains.a_bar * &z + &gains.b_bar * &u + &gains.l_star * y_next;
    }
    Ok(acc / count as f64)
}

/// J(π) − J(π*), nonnegative up to numerical tolerance.
pub fn suboptimality_gap(model: &LqgModel, policy: &Policy) -> Result<f64> {
    let j_hat = evaluate_analytic(model, policy)?;
    let j_star = optimal_average_cost(model)?;
    Ok(j_hat - j_star)
}
