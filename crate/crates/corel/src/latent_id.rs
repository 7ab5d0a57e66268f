//! Latent dynamics identification: explicit least squares on encoded states,
//! or implicit cost-driven identification (CoSysId) with a coordinate
//! alignment matrix, plus latent cost learning.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matstat::{least_squares, pinv, sym_eig, Mat};
use crate::repr_learn::{factor_psd, quadratic_regress};
use crate::serde_mat;
use crate::simulate::HistoryDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdMethod {
    Explicit,
    Implicit,
}

impl std::fmt::Display for IdMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IdMethod::Explicit => write!(f, "explicit"),
            IdMethod::Implicit => write!(f, "implicit"),
        }
    }
}

impl std::str::FromStr for IdMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "explicit" => Ok(IdMethod::Explicit),
            "implicit" => Ok(IdMethod::Implicit),
            other => Err(format!("unknown method '{other}', expected explicit|implicit")),
        }
    }
}

/// Learned latent system (Â, B̂, Q̂, R, b̂) in a d_x-dimensional latent space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentModel {
    #[serde(rename = "A_hat", with = "serde_mat")]
    pub a_hat: Mat,
    #[serde(rename = "B_hat", with = "serde_mat")]
    pub b_hat: Mat,
    #[serde(rename = "Q_hat", with = "serde_mat")]
    pub q_hat: Mat,
    #[serde(rename = "R", with = "serde_mat")]
    pub r: Mat,
    /// Scalar cost offset b̂ from the cost regression.
    #[serde(rename = "b_hat")]
    pub cost_offset: f64,
    pub method: IdMethod,
}

/// Intermediate artifacts of CoSysId, kept for diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CosysidTrace {
    #[serde(with = "serde_mat")]
    pub n1_hat: Mat,
    pub b1_hat: f64,
    #[serde(with = "serde_mat")]
    pub m1_hat: Mat,
    #[serde(with = "serde_mat")]
    pub m_tilde: Mat,
    #[serde(with = "serde_mat")]
    pub b_tilde: Mat,
    #[serde(with = "serde_mat")]
    pub a_tilde: Mat,
    #[serde(with = "serde_mat")]
    pub s0_hat: Mat,
    /// ‖Ŝ₀ᵀŜ₀ − I‖_F; Ŝ₀ estimates an orthogonal matrix but is not projected.
    pub s0_orthogonality_defect: f64,
}

/// Ordinary least squares from [ẑ_t; u_t] to ẑ_{t+1}. `z_hats` has one more
/// row than `us`; row t of the target is ẑ_{t+1}. Returns (Â, B̂, rank flag).
pub fn sysid_explicit(z_hats: &Mat, us: &Mat) -> Result<(Mat, Mat, bool)> {
    let n = us.nrows();
    if z_hats.nrows() != n + 1 {
        return Err(Error::Argument(format!(
            "sysid_explicit: {} state rows must be controls + 1 ({})",
            z_hats.nrows(),
            n + 1
        )));
    }
    let d_x = z_hats.ncols();
    let d_u = us.ncols();
    let mut covs = Mat::zeros(n, d_x + d_u);
    covs.view_mut((0, 0), (n, d_x)).copy_from(&z_hats.rows(0, n));
    covs.view_mut((0, d_x), (n, d_u)).copy_from(us);
    let targets = z_hats.rows(1, n).into_owned();
    let ls = least_squares(&covs, &targets)?;
    let a_hat = ls.solution.rows(0, d_x).transpose();
    let b_hat = ls.solution.rows(d_x, d_u).transpose();
    Ok((a_hat, b_hat, ls.rank_deficient))
}

/// CoSysId: quadratic regression of next-step cumulative cost on [h_t; u_t],
/// PSD factorization, split, and alignment. Returns (Â, B̂, trace).
pub fn cosysid(dataset: &HistoryDataset, m_hat: &Mat, d_x: usize) -> Result<(Mat, Mat, CosysidTrace)> {
    if m_hat.nrows() != d_x {
        return Err(Error::Argument(format!(
            "cosysid: representation has rank {}, requested d_x {}",
            m_hat.nrows(),
            d_x
        )));
    }
    if m_hat.ncols() != dataset.d_h() {
        return Err(Error::Argument(format!(
            "cosysid: representation takes dimension {}, dataset has d_h {}",
            m_hat.ncols(),
            dataset.d_h()
        )));
    }
    // the shifted target c̄_{t+1} exists for the first n−1 rows
    let n1 = dataset.n - 1;
    let hu = dataset.hu.rows(0, n1).into_owned();
    let fit = quadratic_regress(&hu, &dataset.cbar_next)?;
    let rep1 = factor_psd(&fit.n_hat, d_x)?;
    let h_next = dataset.h_next.rows(0, n1).into_owned();
    let (a_hat, b_hat, mut trace) = align_factors(m_hat, &rep1.m_hat, &hu, &h_next)?;
    trace.n1_hat = fit.n_hat;
    trace.b1_hat = fit.b_hat;
    Ok((a_hat, b_hat, trace))
}

/// Lines 4–5 of CoSysId given the two factorizations: split M̂₁, set
/// Ã = M̃M̂†, fit the alignment Ŝ₀ from M̂₁[h_t; u_t] to M̂h_{t+1}, and
/// return (Ŝ₀Ã, Ŝ₀B̃, trace).
pub fn align_factors(
    m_hat: &Mat,
    m1_hat: &Mat,
    hu_rows: &Mat,
    h_next_rows: &Mat,
) -> Result<(Mat, Mat, CosysidTrace)> {
    let d_x = m_hat.nrows();
    let d_h = m_hat.ncols();
    if m1_hat.nrows() != d_x {
        return Err(Error::Argument(format!(
            "align_factors: M̂₁ rank {} vs M̂ rank {}",
            m1_hat.nrows(),
            d_x
        )));
    }
    let d_u = m1_hat.ncols() - d_h;
    let m_tilde = m1_hat.columns(0, d_h).into_owned();
    let b_tilde = m1_hat.columns(d_h, d_u).into_owned();
    // M̂ should be full row rank; the cutoff guards small-T runs
    let a_tilde = &m_tilde * pinv(m_hat, 1e-8)?;

    // regression covariates M̂₁[h_t; u_t], targets M̂h_{t+1}
    let covs = hu_rows * m1_hat.transpose();
    let targets = h_next_rows * m_hat.transpose();
    let ls = least_squares(&covs, &targets)?;
    let s0_hat = ls.solution.transpose();
    let defect = (s0_hat.transpose() * &s0_hat - Mat::identity(d_x, d_x)).norm();

    let a_hat = &s0_hat * &a_tilde;
    let b_hat = &s0_hat * &b_tilde;
    let trace = CosysidTrace {
        n1_hat: Mat::zeros(0, 0),
        b1_hat: 0.0,
        m1_hat: m1_hat.clone(),
        m_tilde,
        b_tilde,
        a_tilde,
        s0_hat,
        s0_orthogonality_defect: defect,
    };
    Ok((a_hat, b_hat, trace))
}

/// Eigenvalue truncation onto the PSD cone.
pub fn psd_truncate(m: &Mat) -> Result<Mat> {
    let eig = sym_eig(m)?;
    let mut scaled = eig.vectors.clone();
    for (j, lam) in eig.values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(lam.max(0.0));
    }
    Ok(&scaled * eig.vectors.transpose())
}

/// Latent cost learning: regress c_t − ‖u_t‖²_R on ẑ_t quadratically, then
/// truncate the estimate to the PSD cone. Returns (Q̂, b̂).
pub fn learn_cost(z_hats: &Mat, us: &Mat, cs: &DVector<f64>, r: &Mat) -> Result<(Mat, f64)> {
    let n = z_hats.nrows();
    if us.nrows() != n || cs.len() != n {
        return Err(Error::Argument(format!(
            "learn_cost: misaligned rows ({n} states, {} controls, {} costs)",
            us.nrows(),
            cs.len()
        )));
    }
    let targets = DVector::from_fn(n, |i, _| {
        let u = us.row(i).transpose();
        cs[i] - (r * &u).dot(&u)
    });
    let fit = quadratic_regress(z_hats, &targets)?;
    Ok((psd_truncate(&fit.n_hat)?, fit.b_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqg_model::{filter_riccati, DerivedGains, LqgModel};
    use crate::matstat::{rng_from_seed, spectral_radius, StreamRng};
    use crate::simulate::{build_histories, kalman_states, lift_history, rollout_excite};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_mat(r: usize, c: usize, rng: &mut StreamRng) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_orthogonal(d: usize, rng: &mut StreamRng) -> Mat {
        let qr = gaussian_mat(d, d, rng).qr();
        qr.q()
    }

    fn ref_model() -> LqgModel {
        LqgModel::new(
            Mat::from_row_slice(2, 2, &[0.8, 0.1, 0.0, 0.7]),
            Mat::from_row_slice(2, 1, &[1.0, 0.5]),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::from_element(1, 1, 1.0),
            Mat::identity(2, 2) * 0.05,
            Mat::identity(2, 2) * 0.05,
            Mat::identity(2, 2) * 0.1,
        )
        .unwrap()
    }

    #[test]
    fn sysid_explicit_recovers_noiseless() {
        let mut rng = rng_from_seed(201);
        let a0 = Mat::from_row_slice(2, 2, &[0.7, 0.2, -0.1, 0.5]);
        let b0 = Mat::from_row_slice(2, 1, &[1.0, -0.4]);
        let n = 100;
        let us = gaussian_mat(n, 1, &mut rng);
        let mut zs = Mat::zeros(n + 1, 2);
        let mut z = DVector::from_vec(vec![
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ]);
        for t in 0..=n {
            zs.row_mut(t).copy_from(&z.transpose());
            if t < n {
                z = &a0 * &z + &b0 * us.row(t).transpose();
            }
        }
        let (a, b, flag) = sysid_explicit(&zs, &us).unwrap();
        assert!((a - &a0).amax() <= 1e-9);
        assert!((b - &b0).amax() <= 1e-9);
        assert!(!flag);
    }

    #[test]
    fn sysid_explicit_zero_input_channel() {
        let _rng = rng_from_seed(202);
        let a0 = Mat::from_row_slice(2, 2, &[0.7, 0.3, -0.2, 0.6]);
        let n = 60;
        let us = Mat::zeros(n, 1);
        let mut zs = Mat::zeros(n + 1, 2);
        let mut z = DVector::from_vec(vec![1.0, -0.5]);
        for t in 0..=n {
            zs.row_mut(t).copy_from(&z.transpose());
            z = &a0 * &z;
        }
        let (a, b, flag) = sysid_explicit(&zs, &us).unwrap();
        assert!(flag, "unexcited input channel must set the rank flag");
        assert!((a - &a0).amax() <= 1e-7);
        assert!(b.amax() <= 1e-9, "minimum-norm B must be zero");
    }

    #[test]
    fn sysid_explicit_oracle_kalman_states() {
        let model = ref_model();
        let mut rng = rng_from_seed(203);
        let traj = rollout_excite(&model, 40_000, 1, 1.0, &mut rng, false).unwrap();
        let zs_vec = kalman_states(&model, &traj).unwrap();
        let n = traj.total_steps();
        let zs = Mat::from_fn(n + 1, 2, |i, j| zs_vec[i][j]);
        let us = Mat::from_fn(n, 1, |i, j| traj.us[i][j]);
        let (a, b, _) = sysid_explicit(&zs, &us).unwrap();
        let err_a = (a - &model.a).clone().svd(false, false).singular_values.max();
        let err_b = (b - &model.b).clone().svd(false, false).singular_values.max();
        assert!(err_a <= 0.05, "‖Â − A*‖₂ = {err_a}");
        assert!(err_b <= 0.05, "‖B̂ − B*‖₂ = {err_b}");
    }

    #[test]
    fn sysid_error_halves_when_t_quadruples_twice() {
        let model = ref_model();
        let err_at = |t_len: usize, seed: u64| -> f64 {
            let mut rng = rng_from_seed(seed);
            let traj = rollout_excite(&model, t_len, 1, 1.0, &mut rng, false).unwrap();
            let zs_vec = kalman_states(&model, &traj).unwrap();
            let n = traj.total_steps();
            let zs = Mat::from_fn(n + 1, 2, |i, j| zs_vec[i][j]);
            let us = Mat::from_fn(n, 1, |i, j| traj.us[i][j]);
            let (a, b, _) = sysid_explicit(&zs, &us).unwrap();
            let mut stacked = Mat::zeros(2, 3);
            stacked.view_mut((0, 0), (2, 2)).copy_from(&(a - &model.a));
            stacked.view_mut((0, 2), (2, 1)).copy_from(&(b - &model.b));
            stacked.svd(false, false).singular_values.max()
        };
        let mut small: Vec<f64> = (0..8).map(|s| err_at(2_500, 300 + s)).collect();
        let mut large: Vec<f64> = (0..8).map(|s| err_at(40_000, 300 + s)).collect();
        small.sort_by(|a, b| a.partial_cmp(b).unwrap());
        large.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            large[4] * 2.0 <= small[4],
            "median error {} at T=2500 vs {} at T=40000",
            small[4],
            large[4]
        );
    }

    /// Synthetic dataset whose targets follow the exact noiseless algebra:
    /// c̄_t = ‖M*h_t‖² + b₀, c̄_{t+1} = ‖[A*M*, B*][h_t; u_t]‖² + b₁, and
    /// h_{t+1} consistent with the latent transition.
    fn planted_dataset(
        m_star: &Mat,
        a_star: &Mat,
        b_star: &Mat,
        n: usize,
        rng: &mut StreamRng,
    ) -> HistoryDataset {
        let d_x = m_star.nrows();
        let d_h = m_star.ncols();
        let d_u = b_star.ncols();
        let hs = gaussian_mat(n, d_h, rng);
        let u_now = gaussian_mat(n, d_u, rng);
        let m_pinv = pinv(m_star, 1e-12).unwrap();
        let mut h_next = Mat::zeros(n, d_h);
        let mut hu = Mat::zeros(n, d_h + d_u);
        let mut cbar = DVector::zeros(n);
        let mut cbar_next = DVector::zeros(n - 1);
        for i in 0..n {
            let h = hs.row(i).transpose();
            let u = u_now.row(i).transpose();
            let z_next = a_star * (m_star * &h) + b_star * &u;
            h_next.row_mut(i).copy_from(&(&m_pinv * &z_next).transpose());
            hu.row_mut(i).columns_mut(0, d_h).copy_from(&h.transpose());
            hu.row_mut(i).columns_mut(d_h, d_u).copy_from(&u.transpose());
            cbar[i] = (m_star * &h).norm_squared() + 0.4;
            if i < n - 1 {
                cbar_next[i] = z_next.norm_squared() + 0.9;
            }
        }
        HistoryDataset {
            h: 1,
            d_x,
            d_y: d_h - d_u,
            d_u,
            n,
            hs,
            lifted: None,
            cbar,
            cbar_next,
            hu,
            h_next,
            u_now,
            c_now: DVector::zeros(n),
        }
    }

    #[test]
    fn align_factors_recovers_planted_misalignment() {
        let mut rng = rng_from_seed(204);
        let (d_x, d_h, d_u, n) = (2, 6, 1, 200);
        let m_star = gaussian_mat(d_x, d_h, &mut rng);
        let a_star = Mat::from_row_slice(2, 2, &[0.8, 0.1, 0.0, 0.7]);
        let b_star = gaussian_mat(d_x, d_u, &mut rng);
        let s = random_orthogonal(d_x, &mut rng);
        let s1 = random_orthogonal(d_x, &mut rng);

        let ds = planted_dataset(&m_star, &a_star, &b_star, n, &mut rng);
        let m_hat = &s * &m_star;
        let mut m1_star = Mat::zeros(d_x, d_h + d_u);
        m1_star.view_mut((0, 0), (d_x, d_h)).copy_from(&(&a_star * &m_star));
        m1_star.view_mut((0, d_h), (d_x, d_u)).copy_from(&b_star);
        let m1_hat = &s1 * &m1_star;

        let (a_hat, b_hat, trace) =
            align_factors(&m_hat, &m1_hat, &ds.hu, &ds.h_next).unwrap();
        let s0_expected = &s * s1.transpose();
        assert!((trace.s0_hat - &s0_expected).amax() <= 1e-8);
        assert!((a_hat - &s * &a_star * s.transpose()).amax() <= 1e-7);
        assert!((b_hat - &s * &b_star).amax() <= 1e-7);
    }

    #[test]
    fn align_factors_identity_when_transforms_match() {
        let mut rng = rng_from_seed(205);
        let (d_x, d_h, d_u, n) = (2, 5, 1, 150);
        let m_star = gaussian_mat(d_x, d_h, &mut rng);
        let a_star = Mat::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.5]);
        let b_star = gaussian_mat(d_x, d_u, &mut rng);
        let s = random_orthogonal(d_x, &mut rng);

        let ds = planted_dataset(&m_star, &a_star, &b_star, n, &mut rng);
        let m_hat = &s * &m_star;
        let mut m1_star = Mat::zeros(d_x, d_h + d_u);
        m1_star.view_mut((0, 0), (d_x, d_h)).copy_from(&(&a_star * &m_star));
        m1_star.view_mut((0, d_h), (d_x, d_u)).copy_from(&b_star);
        let m1_hat = &s * &m1_star;

        let (_, _, trace) = align_factors(&m_hat, &m1_hat, &ds.hu, &ds.h_next).unwrap();
        assert!((trace.s0_hat - Mat::identity(d_x, d_x)).amax() <= 1e-8);
    }

    #[test]
    fn cosysid_full_noiseless_path() {
        let mut rng = rng_from_seed(206);
        let (d_x, d_h, d_u, n) = (2, 4, 1, 400);
        let m_star = gaussian_mat(d_x, d_h, &mut rng);
        let a_star = Mat::from_row_slice(2, 2, &[0.8, 0.1, 0.0, 0.7]);
        let b_star = gaussian_mat(d_x, d_u, &mut rng);
        let ds = planted_dataset(&m_star, &a_star, &b_star, n, &mut rng);

        // representation from the exact cost regression, as Algorithm 1 would
        let fit = quadratic_regress(&ds.hs, &ds.cbar).unwrap();
        let rep = factor_psd(&fit.n_hat, d_x).unwrap();
        let (a_hat, b_hat, trace) = cosysid(&ds, &rep.m_hat, d_x).unwrap();

        // M̂ = S M* for the orthogonal S realized by the factorization
        let s = &rep.m_hat * pinv(&m_star, 1e-10).unwrap();
        assert!((s.transpose() * &s - Mat::identity(d_x, d_x)).amax() <= 1e-7);
        assert!((a_hat - &s * &a_star * s.transpose()).amax() <= 1e-6);
        assert!((b_hat - &s * &b_star).amax() <= 1e-6);
        assert!(trace.s0_orthogonality_defect <= 1e-6);
        assert!((trace.b1_hat - 0.9).abs() <= 1e-8);
    }

    #[test]
    fn cosysid_rejects_rank_mismatch() {
        let mut rng = rng_from_seed(207);
        let m_star = gaussian_mat(2, 4, &mut rng);
        let a_star = Mat::identity(2, 2) * 0.5;
        let b_star = gaussian_mat(2, 1, &mut rng);
        let ds = planted_dataset(&m_star, &a_star, &b_star, 50, &mut rng);
        assert!(cosysid(&ds, &m_star, 3).is_err());
    }

    #[test]
    fn cosysid_reference_run_rank_and_orthogonality() {
        // Ŝ₀ carries an errors-in-variables attenuation that only fades as
        // M̂₁'s own error does, so "large T" genuinely means large here.
        let model = ref_model();
        let h = 2;
        let mut defects = Vec::new();
        for seed in 0..4 {
            let mut rng = rng_from_seed(400 + seed);
            let traj = rollout_excite(&model, 200_000, h, 1.0, &mut rng, false).unwrap();
            let ds = build_histories(&traj, h, 2, &model.r).unwrap();
            let fit = quadratic_regress(&ds.hs, &ds.cbar).unwrap();
            let rep = factor_psd(&fit.n_hat, 2).unwrap();
            let (_, _, trace) = cosysid(&ds, &rep.m_hat, 2).unwrap();
            let sv = trace.m1_hat.clone().svd(false, false).singular_values;
            assert!(
                sv[sv.len() - 1] / sv[0] > 1e-3,
                "M̂₁ numerical rank deficient: σ ratio {}",
                sv[sv.len() - 1] / sv[0]
            );
            defects.push(trace.s0_orthogonality_defect);
        }
        defects.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (defects[1] + defects[2]);
        assert!(median <= 0.3, "median ‖Ŝ₀ᵀŜ₀ − I‖_F = {median}, all: {defects:?}");
    }

    #[test]
    fn learn_cost_recovers_planted() {
        let mut rng = rng_from_seed(209);
        let q0 = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let r = Mat::from_element(1, 1, 0.7);
        let n = 300;
        let zs = gaussian_mat(n, 2, &mut rng);
        let us = gaussian_mat(n, 1, &mut rng);
        let cs = DVector::from_fn(n, |i, _| {
            let z = zs.row(i).transpose();
            let u = us.row(i).transpose();
            (&q0 * &z).dot(&z) + (&r * &u).dot(&u) + 5.0
        });
        let (q_hat, b_hat) = learn_cost(&zs, &us, &cs, &r).unwrap();
        assert!((q_hat - &q0).amax() <= 1e-8);
        assert!((b_hat - 5.0).abs() <= 1e-8);
    }

    #[test]
    fn psd_truncation_rule() {
        let q = psd_truncate(&Mat::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]))).unwrap();
        assert!((q - Mat::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]))).amax() <= 1e-14);
    }

    #[test]
    fn learn_cost_offset_near_oracle_on_reference_run() {
        let model = ref_model();
        let mut rng = rng_from_seed(210);
        let traj = rollout_excite(&model, 40_000, 1, 1.0, &mut rng, true).unwrap();
        let zs_vec = traj.zs.as_ref().unwrap();
        let n = traj.total_steps();
        let zs = Mat::from_fn(n, 2, |i, j| zs_vec[i][j]);
        let us = Mat::from_fn(n, 1, |i, j| traj.us[i][j]);
        let cs = DVector::from_fn(n, |i, _| traj.cs[i]);
        let (_, b_hat) = learn_cost(&zs, &us, &cs, &model.r).unwrap();

        // oracle b* = ⟨Q, (I − LC)S⟩
        let s = filter_riccati(&model).unwrap();
        let g = DerivedGains::compute(&model).unwrap();
        let s_red = (Mat::identity(2, 2) - &g.l_star * &model.c) * &s;
        let b_star = crate::matstat::frob_inner(&model.q, &s_red);
        assert!(b_hat > 0.0);
        assert!(
            (b_hat - b_star).abs() <= 0.3 * b_star,
            "b̂ = {b_hat}, oracle b* = {b_star}"
        );
    }

    #[test]
    fn regressions_for_both_losses_are_decoupled() {
        // running Eq. 14's and Eq. 18's regressions in either order gives
        // bitwise identical results
        let model = ref_model();
        let mut rng = rng_from_seed(211);
        let traj = rollout_excite(&model, 2_000, 2, 1.0, &mut rng, false).unwrap();
        let ds = build_histories(&traj, 2, 2, &model.r).unwrap();
        let hu = ds.hu.rows(0, ds.n - 1).into_owned();

        let f14_first = quadratic_regress(&ds.hs, &ds.cbar).unwrap();
        let f18_second = quadratic_regress(&hu, &ds.cbar_next).unwrap();

        let f18_first = quadratic_regress(&hu, &ds.cbar_next).unwrap();
        let f14_second = quadratic_regress(&ds.hs, &ds.cbar).unwrap();

        assert_eq!(f14_first.n_hat, f14_second.n_hat);
        assert_eq!(f18_first.n_hat, f18_second.n_hat);
        assert_eq!(f14_first.b_hat, f14_second.b_hat);
        assert_eq!(f18_first.b_hat, f18_second.b_hat);
    }

    #[test]
    fn spectral_radius_of_closed_latent_loop_sanity() {
        // planted Â from the noiseless path stays similar to A*, hence stable
        let mut rng = rng_from_seed(212);
        let m_star = gaussian_mat(2, 4, &mut rng);
        let a_star = Mat::from_row_slice(2, 2, &[0.8, 0.1, 0.0, 0.7]);
        let b_star = gaussian_mat(2, 1, &mut rng);
        let ds = planted_dataset(&m_star, &a_star, &b_star, 300, &mut rng);
        let fit = quadratic_regress(&ds.hs, &ds.cbar).unwrap();
        let rep = factor_psd(&fit.n_hat, 2).unwrap();
        let (a_hat, _, _) = cosysid(&ds, &rep.m_hat, 2).unwrap();
        let rho = spectral_radius(&a_hat).unwrap();
        assert!((rho - 0.8).abs() < 1e-5, "similarity preserves the spectrum, rho = {rho}");
        let _ = lift_history(&DVector::zeros(2));
    }
}
