//! Ground-truth LQG problem definition: assumption verification, Riccati
//! solvers, optimal filter/controller, and the normalized parameterization
//! transform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matstat::{
    all_finite, frob_inner, solve_lyapunov, spectral_radius, sym_eig, symmetrize, Mat,
};
use crate::serde_mat;

/// Partially observable LTI system x⁺ = Ax + Bu + w, y = Cx + v, with
/// quadratic stage cost ‖x‖²_Q + ‖u‖²_R.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LqgModel {
    #[serde(rename = "A", with = "serde_mat")]
    pub a: Mat,
    #[serde(rename = "B", with = "serde_mat")]
    pub b: Mat,
    #[serde(rename = "C", with = "serde_mat")]
    pub c: Mat,
    #[serde(rename = "Q", with = "serde_mat")]
    pub q: Mat,
    #[serde(rename = "R", with = "serde_mat")]
    pub r: Mat,
    #[serde(rename = "Sigma_w", with = "serde_mat")]
    pub sigma_w: Mat,
    #[serde(rename = "Sigma_v", with = "serde_mat")]
    pub sigma_v: Mat,
    #[serde(rename = "Sigma_0", with = "serde_mat")]
    pub sigma_0: Mat,
}

impl LqgModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Mat,
        b: Mat,
        c: Mat,
        q: Mat,
        r: Mat,
        sigma_w: Mat,
        sigma_v: Mat,
        sigma_0: Mat,
    ) -> Result<Self> {
        let model = Self { a, b, c, q, r, sigma_w, sigma_v, sigma_0 };
        model.validate_dims()?;
        Ok(model)
    }

    pub fn d_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn d_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn d_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate_dims(&self) -> Result<()> {
        let (dx, du, dy) = (self.d_x(), self.d_u(), self.d_y());
        let checks = [
            (self.a.nrows() == dx && self.a.ncols() == dx, "A must be d_x x d_x"),
            (self.b.nrows() == dx, "B must have d_x rows"),
            (self.c.ncols() == dx, "C must have d_x columns"),
            (self.q.nrows() == dx && self.q.ncols() == dx, "Q must be d_x x d_x"),
            (self.r.nrows() == du && self.r.ncols() == du, "R must be d_u x d_u"),
            (
                self.sigma_w.nrows() == dx && self.sigma_w.ncols() == dx,
                "Sigma_w must be d_x x d_x",
            ),
            (
                self.sigma_v.nrows() == dy && self.sigma_v.ncols() == dy,
                "Sigma_v must be d_y x d_y",
            ),
            (
                self.sigma_0.nrows() == dx && self.sigma_0.ncols() == dx,
                "Sigma_0 must be d_x x d_x",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Argument(format!("model dimensions: {msg}")));
            }
        }
        for (m, name) in [
            (&self.a, "A"),
            (&self.b, "B"),
            (&self.c, "C"),
            (&self.q, "Q"),
            (&self.r, "R"),
            (&self.sigma_w, "Sigma_w"),
            (&self.sigma_v, "Sigma_v"),
            (&self.sigma_0, "Sigma_0"),
        ] {
            if !all_finite(m) {
                return Err(Error::Argument(format!("model matrix {name} has non-finite entries")));
            }
        }
        Ok(())
    }

    fn noiseless(&self) -> bool {
        self.sigma_w.amax() == 0.0 && self.sigma_v.amax() == 0.0 && self.sigma_0.amax() == 0.0
    }
}

/// Quantities derived from the model: Riccati solutions, Kalman and feedback
/// gains, the predictor dynamics Ā = (I − L*C)A and B̄ = (I − L*C)B, and the
/// cost observability Gram matrix.
#[derive(Debug, Clone)]
pub struct DerivedGains {
    pub s_star: Mat,
    pub p_star: Mat,
    pub l_star: Mat,
    pub k_star: Mat,
    pub a_bar: Mat,
    pub b_bar: Mat,
    pub q_bar: Mat,
}

impl DerivedGains {
    pub fn compute(model: &LqgModel) -> Result<Self> {
        let s_star = filter_riccati(model)?;
        let l_star = kalman_gain(model, &s_star)?;
        let p_star = solve_dare(&model.a, &model.b, &model.q, &model.r)?;
        let k_star = lqr_gain(&model.a, &model.b, &model.r, &p_star);
        let gain = Mat::identity(model.d_x(), model.d_x()) - &l_star * &model.c;
        let a_bar = &gain * &model.a;
        let b_bar = &gain * &model.b;
        let q_bar = cost_gram(&model.a, &model.q, model.d_x());
        Ok(Self { s_star, p_star, l_star, k_star, a_bar, b_bar, q_bar })
    }
}

const DARE_MAX_ITER: usize = 50_000;

/// Control-form DARE P = Aᵀ(P − PB(BᵀPB+R)⁻¹BᵀP)A + Q by fixed-point
/// iteration from P₀ = Q.
pub fn solve_dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    let mut p = symmetrize(q);
    let mut residual = f64::INFINITY;
    for _ in 0..DARE_MAX_ITER {
        let next = dare_step(a, b, q, r, &p)?;
        residual = (&next - &p).norm();
        p = next;
        if residual <= 1e-13 * (1.0 + p.norm()) {
            let final_resid = (&dare_step(a, b, q, r, &p)? - &p).norm();
            if final_resid <= 1e-10 * (1.0 + p.norm()) {
                return Ok(p);
            }
        }
    }
    Err(Error::NonConvergence { iters: DARE_MAX_ITER, residual })
}

fn dare_step(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let btp = b.transpose() * p;
    let inner = &btp * b + r;
    let chol = nalgebra::Cholesky::new(symmetrize(&inner))
        .ok_or_else(|| Error::Argument("DARE: BᵀPB + R not positive definite".into()))?;
    let gain_term = btp.transpose() * chol.solve(&(&btp * a));
    Ok(symmetrize(&(a.transpose() * (p * a - gain_term) + q)))
}

/// Filter-form DARE S = A(S − SCᵀ(CSCᵀ+Σv)⁻¹CS)Aᵀ + Σw, iterated directly
/// in its own orientation (the duality with [`solve_dare`] is a test oracle,
/// not the implementation route).
pub fn filter_riccati(model: &LqgModel) -> Result<Mat> {
    let sv_min = sym_eig(&model.sigma_v)?.values.min();
    if sv_min <= 0.0 {
        return Err(Error::Argument(format!(
            "filter_riccati: Sigma_v must be positive definite (lambda_min {sv_min:e})"
        )));
    }
    let (a, c, sw, sv) = (&model.a, &model.c, &model.sigma_w, &model.sigma_v);
    let mut s = symmetrize(sw);
    let mut residual = f64::INFINITY;
    let step = |s: &Mat| -> Result<Mat> {
        let sct = s * c.transpose();
        let inn = c * &sct + sv;
        let chol = nalgebra::Cholesky::new(symmetrize(&inn))
            .ok_or_else(|| Error::Argument("filter_riccati: singular innovation covariance".into()))?;
        let corr = &sct * chol.solve(&sct.transpose());
        Ok(symmetrize(&(a * (s - corr) * a.transpose() + sw)))
    };
    for _ in 0..DARE_MAX_ITER {
        let next = step(&s)?;
        residual = (&next - &s).norm();
        s = next;
        if residual <= 1e-13 * (1.0 + s.norm()) {
            let final_resid = (&step(&s)? - &s).norm();
            if final_resid <= 1e-10 * (1.0 + s.norm()) {
                return Ok(s);
            }
        }
    }
    Err(Error::NonConvergence { iters: DARE_MAX_ITER, residual })
}

/// Kalman gain L = SCᵀ(CSCᵀ + Σv)⁻¹.
pub fn kalman_gain(model: &LqgModel, s_star: &Mat) -> Result<Mat> {
    let sct = s_star * model.c.transpose();
    let inn = symmetrize(&(&model.c * &sct + &model.sigma_v));
    match nalgebra::Cholesky::new(inn) {
        Some(chol) => Ok(chol.solve(&sct.transpose()).transpose()),
        // degenerate noiseless filter: S = 0 forces L = 0
        None if sct.amax() == 0.0 => Ok(Mat::zeros(model.d_x(), model.d_y())),
        None => Err(Error::Argument("kalman_gain: singular innovation covariance".into())),
    }
}

/// LQR feedback gain K = −(BᵀPB + R)⁻¹BᵀPA.
pub fn lqr_gain(a: &Mat, b: &Mat, r: &Mat, p_star: &Mat) -> Mat {
    let btp = b.transpose() * p_star;
    let inner = symmetrize(&(&btp * b + r));
    let chol = nalgebra::Cholesky::new(inner).expect("BᵀPB + R positive definite");
    -chol.solve(&(&btp * a))
}

/// Cost observability Gram matrix Q̄ = Σ_{t<d_x} (Aᵗ)ᵀ Q Aᵗ.
pub fn cost_gram(a: &Mat, q: &Mat, d_x: usize) -> Mat {
    let mut gram = Mat::zeros(a.nrows(), a.ncols());
    let mut ak = Mat::identity(a.nrows(), a.ncols());
    for _ in 0..d_x {
        gram += ak.transpose() * q * &ak;
        ak = &ak * a;
    }
    symmetrize(&gram)
}

/// Change of state coordinates x' = Q̄^{1/2} x, under which the cost
/// observability Gram matrix becomes the identity. Returns the transformed
/// model and the transform Q̄^{1/2}.
pub fn normalize_model(model: &LqgModel) -> Result<(LqgModel, Mat)> {
    let q_bar = cost_gram(&model.a, &model.q, model.d_x());
    let eig = sym_eig(&q_bar)?;
    if eig.values.min() < 1e-10 {
        return Err(Error::Observability(format!(
            "cost Gram matrix numerically singular (lambda_min {:e})",
            eig.values.min()
        )));
    }
    let mut t = eig.vectors.clone();
    let mut t_inv = eig.vectors.clone();
    for (j, lam) in eig.values.iter().enumerate() {
        t.column_mut(j).scale_mut(lam.sqrt());
        t_inv.column_mut(j).scale_mut(1.0 / lam.sqrt());
    }
    let t = &t * eig.vectors.transpose();
    let t_inv = &t_inv * eig.vectors.transpose();
    let normalized = LqgModel {
        a: &t * &model.a * &t_inv,
        b: &t * &model.b,
        c: &model.c * &t_inv,
        q: symmetrize(&(&t_inv * &model.q * &t_inv)),
        r: model.r.clone(),
        sigma_w: symmetrize(&(&t * &model.sigma_w * &t)),
        sigma_v: model.sigma_v.clone(),
        sigma_0: symmetrize(&(&t * &model.sigma_0 * &t)),
    };
    Ok((normalized, t))
}

/// Numeric witnesses for every item of the standing assumptions. Violations
/// are flagged, not thrown, so the CLI can print diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub rho_a: f64,
    pub stable: bool,
    /// σ_min of the controllability matrix of (A, B).
    pub nu: f64,
    /// σ_min of the observability matrix of (A, C).
    pub omega: f64,
    /// σ_min of the controllability matrix of (A, Σw^{1/2}).
    pub kappa: f64,
    /// λ_min(Q̄)^{1/2}, the cost observability margin.
    pub mu: f64,
    /// λ_min(Σv)^{1/2}.
    pub sigma_v: f64,
    /// λ_min(R)^{1/2}.
    pub r: f64,
    /// ρ((I − L*C)A); absent when the Kalman gain is not computable.
    pub rho_bar: Option<f64>,
    /// max(α(A), α(Ā)) with α(M) = max_{k≤200} ‖Mᵏ‖₂ ρ(M)^{−k}.
    pub alpha: Option<f64>,
}

const PASS_FLOOR: f64 = 1e-9;

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.stable
            && self.nu > PASS_FLOOR
            && self.omega > PASS_FLOOR
            && self.kappa > PASS_FLOOR
            && self.mu > PASS_FLOOR
            && self.sigma_v > PASS_FLOOR
            && self.r > PASS_FLOOR
            && self.rho_bar.is_some_and(|r| r < 1.0)
    }

    /// (item, witness, pass) rows for printing.
    pub fn lines(&self) -> Vec<(String, String, bool)> {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        vec![
            ("stable".into(), format!("rho(A) = {:.6}", self.rho_a), self.stable),
            ("controllable (A,B)".into(), format!("nu = {:.6}", self.nu), self.nu > PASS_FLOOR),
            ("observable (A,C)".into(), format!("omega = {:.6}", self.omega), self.omega > PASS_FLOOR),
            (
                "noise-controllable (A,Sigma_w^1/2)".into(),
                format!("kappa = {:.6}", self.kappa),
                self.kappa > PASS_FLOOR,
            ),
            ("cost-observable (A,Q^1/2)".into(), format!("mu = {:.6}", self.mu), self.mu > PASS_FLOOR),
            ("Sigma_v positive definite".into(), format!("sigma_v = {:.6}", self.sigma_v), self.sigma_v > PASS_FLOOR),
            ("R positive definite".into(), format!("r = {:.6}", self.r), self.r > PASS_FLOOR),
            (
                "predictor stable".into(),
                format!("rho(A_bar) = {}", opt(self.rho_bar)),
                self.rho_bar.is_some_and(|r| r < 1.0),
            ),
            ("transient bound".into(), format!("alpha = {}", opt(self.alpha)), true),
        ]
    }
}

fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let d_x = a.nrows();
    let mut blocks = Vec::with_capacity(d_x);
    let mut akb = b.clone();
    for _ in 0..d_x {
        blocks.push(akb.clone());
        akb = a * &akb;
    }
    let cols: Vec<_> = blocks.iter().flat_map(|m| m.column_iter().map(|c| c.into_owned())).collect();
    Mat::from_columns(&cols)
}

fn observability_matrix(a: &Mat, c: &Mat) -> Mat {
    controllability_matrix(&a.transpose(), &c.transpose()).transpose()
}

fn min_singular_value(m: &Mat) -> f64 {
    let svd = m.clone().svd(false, false);
    svd.singular_values.iter().cloned().fold(f64::MAX, f64::min)
}

fn sym_psd_sqrt(m: &Mat) -> Result<Mat> {
    let eig = sym_eig(m)?;
    let mut u = eig.vectors.clone();
    for (j, lam) in eig.values.iter().enumerate() {
        u.column_mut(j).scale_mut(lam.max(0.0).sqrt());
    }
    Ok(&u * eig.vectors.transpose())
}

/// α(M) = max_{k ≤ 200} ‖Mᵏ‖₂ ρ(M)^{−k}, the transient growth factor.
fn alpha_estimate(m: &Mat) -> Result<f64> {
    let rho = spectral_radius(m)?;
    if rho < 1e-12 {
        return Ok(1.0);
    }
    let mut best = 1.0f64;
    let mut mk = Mat::identity(m.nrows(), m.ncols());
    let mut rk = 1.0;
    for _ in 1..=200 {
        mk = &mk * m;
        rk *= rho;
        let norm2 = mk.clone().svd(false, false).singular_values.max();
        if norm2 == 0.0 {
            break;
        }
        best = best.max(norm2 / rk);
    }
    Ok(best)
}

pub fn check_assumptions(model: &LqgModel) -> AssumptionReport {
    let rho_a = spectral_radius(&model.a).unwrap_or(f64::INFINITY);
    let stable = rho_a < 1.0;
    let nu = min_singular_value(&controllability_matrix(&model.a, &model.b));
    let omega = min_singular_value(&observability_matrix(&model.a, &model.c));
    let kappa = sym_psd_sqrt(&model.sigma_w)
        .map(|rt| min_singular_value(&controllability_matrix(&model.a, &rt)))
        .unwrap_or(0.0);
    let q_bar = cost_gram(&model.a, &model.q, model.d_x());
    let mu = sym_eig(&q_bar).map(|e| e.values.min().max(0.0).sqrt()).unwrap_or(0.0);
    let sigma_v = sym_eig(&model.sigma_v).map(|e| e.values.min().max(0.0).sqrt()).unwrap_or(0.0);
    let r = sym_eig(&model.r).map(|e| e.values.min().max(0.0).sqrt()).unwrap_or(0.0);
    let (rho_bar, alpha) = if stable && sigma_v > 0.0 {
        match DerivedGains::compute(model) {
            Ok(g) => {
                let rb = spectral_radius(&g.a_bar).ok();
                let al = match (alpha_estimate(&model.a), alpha_estimate(&g.a_bar)) {
                    (Ok(a1), Ok(a2)) => Some(a1.max(a2)),
                    _ => None,
                };
                (rb, al)
            }
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    AssumptionReport { rho_a, stable, nu, omega, kappa, mu, sigma_v, r, rho_bar, alpha }
}

/// J(π*): infinite-horizon average cost of the optimal policy (L*, K*),
/// from the stationary covariance of the joint [x; z] closed loop.
pub fn optimal_average_cost(model: &LqgModel) -> Result<f64> {
    if model.noiseless() {
        return Ok(0.0);
    }
    let g = DerivedGains::compute(model)?;
    let d_x = model.d_x();
    let (a, b, c) = (&model.a, &model.b, &model.c);
    let (l, k) = (&g.l_star, &g.k_star);
    let bk = b * k;
    let lca = l * c * a;

    // joint dynamics over [x; z]:
    //   x⁺ = A x + BK z + w
    //   z⁺ = LCA x + (A + BK − LCA) z + LC w + L v⁺
    let mut f = Mat::zeros(2 * d_x, 2 * d_x);
    f.view_mut((0, 0), (d_x, d_x)).copy_from(a);
    f.view_mut((0, d_x), (d_x, d_x)).copy_from(&bk);
    f.view_mut((d_x, 0), (d_x, d_x)).copy_from(&lca);
    f.view_mut((d_x, d_x), (d_x, d_x)).copy_from(&(a + &bk - &lca));

    let lc = l * c;
    let mut g_w = Mat::zeros(2 * d_x, d_x);
    g_w.view_mut((0, 0), (d_x, d_x)).copy_from(&Mat::identity(d_x, d_x));
    g_w.view_mut((d_x, 0), (d_x, d_x)).copy_from(&lc);
    let mut g_v = Mat::zeros(2 * d_x, model.d_y());
    g_v.view_mut((d_x, 0), (d_x, model.d_y())).copy_from(l);
    let w_joint = &g_w * &model.sigma_w * g_w.transpose() + &g_v * &model.sigma_v * g_v.transpose();

    let sigma = solve_lyapunov(&f, &w_joint).map_err(|e| match e {
        Error::Instability { rho, .. } => Error::Instability { rho, context: "optimal closed loop".into() },
        other => other,
    })?;
    let sigma_xx = sigma.view((0, 0), (d_x, d_x)).into_owned();
    let sigma_zz = sigma.view((d_x, d_x), (d_x, d_x)).into_owned();
    Ok(frob_inner(&model.q, &sigma_xx) + frob_inner(&model.r, &(k * sigma_zz * k.transpose())))
}
