//! Roll out the ground-truth system under Gaussian excitation, build H-step
//! history datasets with cumulative-cost targets, and compute oracle Kalman
//! states for tests.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lqg_model::{DerivedGains, LqgModel};
use crate::matstat::{frob_inner, spectral_radius, GaussianSampler, Mat, StreamRng};

/// One rollout of length T+H per the data-collection layout: observations
/// y_0..y_{T+H}, controls and costs for t = 0..T+H−1.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub ys: Vec<DVector<f64>>,
    pub us: Vec<DVector<f64>>,
    pub cs: Vec<f64>,
    /// True states x_0..x_{T+H}, retained for oracle tests only.
    pub xs: Option<Vec<DVector<f64>>>,
    /// Kalman states z*_0..z*_{T+H}, retained for oracle tests only.
    pub zs: Option<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn d_y(&self) -> usize {
        self.ys[0].len()
    }

    pub fn d_u(&self) -> usize {
        self.us[0].len()
    }

    /// Steps beyond the history prefix: us.len() = T + H.
    pub fn total_steps(&self) -> usize {
        self.us.len()
    }
}

/// Simulate T+H steps under u_t ~ N(0, σ_u²I) from x_0 ~ N(0, Σ0).
pub fn rollout_excite(
    model: &LqgModel,
    t_len: usize,
    h: usize,
    sigma_u: f64,
    rng: &mut StreamRng,
    keep_oracle: bool,
) -> Result<Trajectory> {
    if sigma_u < 0.0 || !sigma_u.is_finite() {
        return Err(Error::Argument(format!("rollout: sigma_u {sigma_u} invalid")));
    }
    if t_len == 0 || h == 0 {
        return Err(Error::Argument("rollout: T and H must be positive".into()));
    }
    let rho = spectral_radius(&model.a)?;
    if rho >= 1.0 {
        return Err(Error::Refusal(format!("rollout: unstable system, rho(A) = {rho}")));
    }
    let steps = t_len + h;
    let d_x = model.d_x();
    let d_u = model.d_u();
    let zero_x = DVector::zeros(d_x);
    let zero_y = DVector::zeros(model.d_y());
    let init = GaussianSampler::new(&zero_x, &model.sigma_0)?;
    let proc_noise = GaussianSampler::new(&zero_x, &model.sigma_w)?;
    let obs_noise = GaussianSampler::new(&zero_y, &model.sigma_v)?;

    let mut ys = Vec::with_capacity(steps + 1);
    let mut us = Vec::with_capacity(steps);
    let mut cs = Vec::with_capacity(steps);
    let mut xs = keep_oracle.then(|| Vec::with_capacity(steps + 1));

    let mut x = init.draw(rng);
    for _ in 0..steps {
        if let Some(xs) = xs.as_mut() {
            xs.push(x.clone());
        }
        ys.push(&model.c * &x + obs_noise.draw(rng));
        let u = DVector::from_iterator(d_u, (0..d_u).map(|_| sigma_u * rng.sample::<f64, _>(StandardNormal)));
        let cost = (&model.q * &x).dot(&x) + (&model.r * &u).dot(&u);
        cs.push(cost);
        x = &model.a * &x + &model.b * &u + proc_noise.draw(rng);
        us.push(u);
    }
    if let Some(xs) = xs.as_mut() {
        xs.push(x.clone());
    }
    ys.push(&model.c * &x + obs_noise.draw(rng));

    let mut traj = Trajectory { ys, us, cs, xs, zs: None };
    if keep_oracle {
        traj.zs = Some(kalman_states(model, &traj)?);
    }
    Ok(traj)
}

/// Kalman states in predictor form: z*_0 = L*y_0 and
/// z*_{t+1} = Ā z*_t + B̄ u_t + L* y_{t+1} with Ā = (I−L*C)A, B̄ = (I−L*C)B.
pub fn kalman_states(model: &LqgModel, traj: &Trajectory) -> Result<Vec<DVector<f64>>> {
    let g = DerivedGains::compute(model)?;
    Ok(kalman_states_with(&g.a_bar, &g.b_bar, &g.l_star, traj))
}

/// Same recursion with explicit predictor matrices (tests override L).
pub fn kalman_states_with(a_bar: &Mat, b_bar: &Mat, l: &Mat, traj: &Trajectory) -> Vec<DVector<f64>> {
    let mut zs = Vec::with_capacity(traj.ys.len());
    let mut z = l * &traj.ys[0];
    zs.push(z.clone());
    for t in 0..traj.us.len() {
        z = a_bar * &z + b_bar * &traj.us[t] + l * &traj.ys[t + 1];
        zs.push(z.clone());
    }
    zs
}

/// The optimal truncated-history representation
/// M* = [Ā^{H−1}L, …, L | Ā^{H−1}B̄, …, B̄], mapping
/// h_t = [y_{t−H+1..t}; u_{t−H..t−1}] (oldest first) to z*_t up to the
/// truncation error Ā^H z*_{t−H}.
pub fn true_repr(gains: &DerivedGains, h: usize) -> Mat {
    let d_x = gains.a_bar.nrows();
    let d_y = gains.l_star.ncols();
    let d_u = gains.b_bar.ncols();
    let mut m = Mat::zeros(d_x, h * (d_y + d_u));
    let mut power = Mat::identity(d_x, d_x);
    // newest blocks (j = H−1) get Ā⁰, oldest (j = 0) get Ā^{H−1}
    for j in (0..h).rev() {
        m.view_mut((0, j * d_y), (d_x, d_y)).copy_from(&(&power * &gains.l_star));
        m.view_mut((0, h * d_y + j * d_u), (d_x, d_u)).copy_from(&(&power * &gains.b_bar));
        power = &power * &gains.a_bar;
    }
    m
}

/// Default cap on the materialized lifted covariate matrix.
pub const LIFTED_BUDGET_BYTES: usize = 2 << 30;

/// Stacked H-step histories with cumulative-cost targets. Usable rows are
/// t = H..=T+H−d_x (the d_x-step cost lookahead truncates the tail), so
/// n = T − d_x + 1. The shifted target c̄_{t+1} loses one more row.
#[derive(Debug, Clone)]
pub struct HistoryDataset {
    pub h: usize,
    /// Lookahead window of the cumulative-cost target.
    pub d_x: usize,
    pub d_y: usize,
    pub d_u: usize,
    /// Number of usable rows, T − d_x + 1.
    pub n: usize,
    /// Histories h_t, one row per usable t.
    pub hs: Mat,
    /// [svec(h_t h_tᵀ); 1] rows; materialized only within the memory budget.
    pub lifted: Option<Mat>,
    /// Cumulative costs c̄_t = Σ_{τ=t}^{t+d_x−1} (c_τ − ‖u_τ‖²_R).
    pub cbar: DVector<f64>,
    /// c̄_{t+1}, aligned with the first n−1 rows.
    pub cbar_next: DVector<f64>,
    /// [h_t; u_t] rows.
    pub hu: Mat,
    /// h_{t+1} rows.
    pub h_next: Mat,
    pub u_now: Mat,
    pub c_now: DVector<f64>,
}

impl HistoryDataset {
    pub fn d_h(&self) -> usize {
        self.h * (self.d_y + self.d_u)
    }

    pub fn lifted_dim(&self) -> usize {
        let d_h = self.d_h();
        d_h * (d_h + 1) / 2 + 1
    }

    /// [svec(h_i h_iᵀ); 1] for row i, whether or not `lifted` is materialized.
    pub fn lifted_row(&self, i: usize) -> DVector<f64> {
        lift_history(&self.hs.row(i).transpose())
    }
}

/// [svec(h hᵀ); 1].
pub fn lift_history(h: &DVector<f64>) -> DVector<f64> {
    let d = h.len();
    let mut out = DVector::zeros(d * (d + 1) / 2 + 1);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut k = 0;
    for i in 0..d {
        out[k] = h[i] * h[i];
        k += 1;
        for j in (i + 1)..d {
            out[k] = sqrt2 * h[i] * h[j];
            k += 1;
        }
    }
    out[k] = 1.0;
    out
}

pub fn build_histories(traj: &Trajectory, h: usize, d_x: usize, r: &Mat) -> Result<HistoryDataset> {
    if h == 0 || d_x == 0 {
        return Err(Error::Argument("build_histories: H and d_x must be positive".into()));
    }
    let steps = traj.total_steps();
    if traj.ys.len() != steps + 1 || traj.cs.len() != steps {
        return Err(Error::Argument("build_histories: inconsistent trajectory lengths".into()));
    }
    if steps < h {
        return Err(Error::InsufficientData(format!(
            "trajectory has {steps} steps, need at least H = {h}"
        )));
    }
    let t_len = steps - h;
    if t_len <= d_x {
        return Err(Error::InsufficientData(format!(
            "T = {t_len} must exceed the lookahead d_x = {d_x}"
        )));
    }
    let (d_y, d_u) = (traj.d_y(), traj.d_u());
    let d_h = h * (d_y + d_u);
    let n = t_len - d_x + 1;

    let assemble = |t: usize| -> DVector<f64> {
        let mut row = DVector::zeros(d_h);
        for j in 0..h {
            let y = &traj.ys[t - h + 1 + j];
            row.rows_mut(j * d_y, d_y).copy_from(y);
            let u = &traj.us[t - h + j];
            row.rows_mut(h * d_y + j * d_u, d_u).copy_from(u);
        }
        row
    };

    let mut hs = Mat::zeros(n, d_h);
    let mut h_next = Mat::zeros(n, d_h);
    let mut hu = Mat::zeros(n, d_h + d_u);
    let mut u_now = Mat::zeros(n, d_u);
    let mut cbar = DVector::zeros(n);
    let mut c_now = DVector::zeros(n);
    for i in 0..n {
        let t = h + i;
        let row = assemble(t);
        hs.row_mut(i).copy_from(&row.transpose());
        h_next.row_mut(i).copy_from(&assemble(t + 1).transpose());
        hu.row_mut(i).columns_mut(0, d_h).copy_from(&row.transpose());
        hu.row_mut(i).columns_mut(d_h, d_u).copy_from(&traj.us[t].transpose());
        u_now.row_mut(i).copy_from(&traj.us[t].transpose());
        c_now[i] = traj.cs[t];
        let mut acc = 0.0;
        for tau in t..t + d_x {
            let u = &traj.us[tau];
            acc += traj.cs[tau] - (r * u).dot(u);
        }
        cbar[i] = acc;
    }
    let cbar_next = DVector::from_iterator(n - 1, (1..n).map(|i| cbar[i]));

    let lifted_dim = d_h * (d_h + 1) / 2 + 1;
    let lifted = if n * lifted_dim * std::mem::size_of::<f64>() <= LIFTED_BUDGET_BYTES {
        let mut m = Mat::zeros(n, lifted_dim);
        for i in 0..n {
            m.row_mut(i).copy_from(&lift_history(&hs.row(i).transpose()).transpose());
        }
        Some(m)
    } else {
        None
    };

    Ok(HistoryDataset {
        h,
        d_x,
        d_y,
        d_u,
        n,
        hs,
        lifted,
        cbar,
        cbar_next,
        hu,
        h_next,
        u_now,
        c_now,
    })
}

/// Residual statistics of the cumulative-cost identity
/// c̄_t = ‖z*_t‖² + b̄* + ē_t in the normalized parameterization.
#[derive(Debug, Clone)]
pub struct CostDecomposition {
    pub n: usize,
    /// mean(c̄_t − ‖z*_t‖²), the empirical offset.
    pub b_bar_empirical: f64,
    /// b̄* from the model: tr((I−LC)S) plus the control/noise window terms.
    pub b_bar_analytic: f64,
    /// mean(c̄_t − ‖z*_t‖² − b̄*_analytic); zero-mean if the identity holds.
    pub mean_residual: f64,
    pub stderr: f64,
}

/// Checks the simulation identity behind the cumulative-cost targets.
/// `model` must be in the normalized parameterization and `zs` must be the
/// Kalman states of the trajectory the dataset was built from.
pub fn verify_cost_decomposition(
    model: &LqgModel,
    dataset: &HistoryDataset,
    zs: &[DVector<f64>],
    sigma_u: f64,
) -> Result<CostDecomposition> {
    let g = DerivedGains::compute(model)?;
    let b_bar_analytic = analytic_cost_offset(model, &g, dataset.d_x, sigma_u);
    let n = dataset.n;
    let mut resid = Vec::with_capacity(n);
    for i in 0..n {
        let t = dataset.h + i;
        let z = &zs[t];
        resid.push(dataset.cbar[i] - z.dot(z));
    }
    let b_bar_empirical = resid.iter().sum::<f64>() / n as f64;
    let mean_residual = b_bar_empirical - b_bar_analytic;
    let var = resid.iter().map(|r| (r - b_bar_empirical).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    let stderr = (var / n as f64).sqrt();
    Ok(CostDecomposition { n, b_bar_empirical, b_bar_analytic, mean_residual, stderr })
}

/// b̄* = E‖x−z*‖² + Σ_{ℓ<d_x} (E‖Φ_{c,ℓ}u‖²_Q + E‖Σ A^{i−1}w‖²_Q)
/// for the normalized parameterization (identity weight on the filter term).
fn analytic_cost_offset(model: &LqgModel, g: &DerivedGains, d_x: usize, sigma_u: f64) -> f64 {
    // stationary filtered error covariance (I − LC)S
    let d = model.d_x();
    let s_red = (Mat::identity(d, d) - &g.l_star * &model.c) * &g.s_star;
    let mut total = s_red.trace();
    // Σ_{ℓ=0}^{d_x−1} Σ_{j=0}^{ℓ−1} (σ_u² tr(Bᵀ(Aʲ)ᵀQAʲB) + ⟨(Aʲ)ᵀQAʲ, Σw⟩)
    let mut aj = Mat::identity(d, d);
    for j in 0..d_x.saturating_sub(1) {
        let weight = aj.transpose() * &model.q * &aj;
        let per_step = sigma_u * sigma_u * (model.b.transpose() * &weight * &model.b).trace()
            + frob_inner(&weight, &model.sigma_w);
        // the j-th term appears in every window ℓ > j
        total += per_step * (d_x - 1 - j) as f64;
        aj = &aj * &model.a;
    }
    total
}

/// CSV dump with header t,y_0..y_{dy−1},u_0..u_{du−1},c.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let (d_y, d_u) = (traj.d_y(), traj.d_u());
    let mut out = String::from("t");
    for j in 0..d_y {
        out.push_str(&format!(",y_{j}"));
    }
    for j in 0..d_u {
        out.push_str(&format!(",u_{j}"));
    }
    out.push_str(",c\n");
    for t in 0..traj.total_steps() {
        out.push_str(&t.to_string());
        for j in 0..d_y {
            out.push_str(&format!(",{}", traj.ys[t][j]));
        }
        for j in 0..d_u {
            out.push_str(&format!(",{}", traj.us[t][j]));
        }
        out.push_str(&format!(",{}\n", traj.cs[t]));
    }
    out
}
