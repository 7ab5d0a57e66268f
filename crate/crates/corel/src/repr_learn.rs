//! Cost-driven representation learning: quadratic regression of cumulative
//! costs on lifted histories, rank discovery from the spectrum, and
//! Eckart–Young factorization down to the representation map.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matstat::{smat, sym_eig, Mat};
use crate::serde_mat;
use crate::simulate::lift_history;

/// Relative eigenvalue cutoff for the lifted-Gram pseudo-inverse.
const GRAM_CUTOFF: f64 = 1e-12;

/// Row-block size for the Gram accumulation (fixed order keeps the
/// reduction deterministic).
const BLOCK: usize = 512;

/// Default eigenvalue ratio for rank discovery. The quartic regression's
/// noise eigenvalues sit at a few percent of λ₁ at realistic sample sizes,
/// so the threshold must clear them while staying below σ_min(M*)².
pub const DEFAULT_RANK_RATIO: f64 = 0.1;

/// Result of the quadratic regression target ≈ ‖h‖²_N + b.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadFit {
    #[serde(with = "serde_mat")]
    pub n_hat: Mat,
    pub b_hat: f64,
    /// λ_min of the lifted Gram matrix divided by the sample count.
    pub gram_min_eig: f64,
    /// Whether the Gram pseudo-inverse cutoff was hit (rank-deficient fit).
    pub rank_flag: bool,
}

/// Solves min over symmetric N and scalar b of
/// Σ_t (⟨svec(N), svec(h_t h_tᵀ)⟩ + b − target_t)², exactly, through the
/// pseudo-inverse of the lifted Gram matrix. Rank-deficient problems return
/// the minimum-norm solution with `rank_flag` set.
///
/// Internally the intercept is handled by centering (the classic equivalent
/// formulation), which conditions the Gram far better than carrying the
/// constant column.
pub fn quadratic_regress(covariates: &Mat, targets: &DVector<f64>) -> Result<QuadFit> {
    let t_len = covariates.nrows();
    if t_len == 0 {
        return Err(Error::Argument("quadratic_regress: zero samples".into()));
    }
    if targets.len() != t_len {
        return Err(Error::Argument(format!(
            "quadratic_regress: {} covariate rows vs {} targets",
            t_len,
            targets.len()
        )));
    }
    let d = covariates.ncols();
    let p = d * (d + 1) / 2;

    // pass 1: means of the lifted features and the targets
    let mut f_mean = DVector::zeros(p);
    for i in 0..t_len {
        let h = covariates.row(i).transpose();
        f_mean += lift_history(&h).rows(0, p);
    }
    f_mean /= t_len as f64;
    let y_mean = targets.mean();

    // pass 2: centered Gram and right-hand side, in fixed block order
    let mut gram = Mat::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    let mut block = Mat::zeros(BLOCK, p);
    let mut start = 0;
    while start < t_len {
        let len = BLOCK.min(t_len - start);
        for i in 0..len {
            let h = covariates.row(start + i).transpose();
            let f = lift_history(&h).rows(0, p) - &f_mean;
            block.row_mut(i).copy_from(&f.transpose());
        }
        let fb = block.rows(0, len);
        gram += fb.transpose() * fb;
        rhs += fb.transpose() * targets.rows(start, len).add_scalar(-y_mean);
        start += len;
    }

    let eig = sym_eig(&gram)?;
    let lam_max = eig.values[0].max(0.0);
    let cutoff = GRAM_CUTOFF * lam_max;
    let rank_flag = eig.values.min() <= cutoff;

    let proj = eig.vectors.transpose() * &rhs;
    let mut coeffs = DVector::zeros(p);
    for i in 0..p {
        if eig.values[i] > cutoff {
            coeffs[i] = proj[i] / eig.values[i];
        }
    }
    let theta = &eig.vectors * coeffs;
    let n_hat = smat(&theta)?;
    let b_hat = y_mean - f_mean.dot(&theta);

    // λ_min of the full [svec; 1]-augmented Gram, for excitation reporting:
    // G_aug = [[G_c + T·m̄m̄ᵀ, T·m̄], [T·m̄ᵀ, T]]
    let mut aug = Mat::zeros(p + 1, p + 1);
    aug.view_mut((0, 0), (p, p)).copy_from(&(&gram + &f_mean * f_mean.transpose() * t_len as f64));
    aug.view_mut((0, p), (p, 1)).copy_from(&(&f_mean * t_len as f64));
    aug.view_mut((p, 0), (1, p)).copy_from(&(f_mean.transpose() * t_len as f64));
    aug[(p, p)] = t_len as f64;
    let gram_min_eig = sym_eig(&aug)?.values.min().max(0.0) / t_len as f64;

    Ok(QuadFit { n_hat, b_hat, gram_min_eig, rank_flag })
}

/// Number of eigenvalues above threshold_ratio · max(eigvals); 0 when the
/// whole spectrum is nonpositive.
pub fn discover_rank(eigvals: &[f64], threshold_ratio: f64) -> Result<usize> {
    if eigvals.is_empty() {
        return Err(Error::Argument("discover_rank: empty spectrum".into()));
    }
    if !(threshold_ratio > 0.0 && threshold_ratio < 1.0) {
        return Err(Error::Argument(format!(
            "discover_rank: threshold_ratio {threshold_ratio} not in (0, 1)"
        )));
    }
    let max = eigvals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Ok(0);
    }
    Ok(eigvals.iter().filter(|&&v| v > threshold_ratio * max).count())
}

/// Learned representation map with the spectrum it was cut from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Representation {
    #[serde(with = "serde_mat")]
    pub m_hat: Mat,
    /// All eigenvalues of N̂, descending.
    pub eigvals: Vec<f64>,
    pub d_x_used: usize,
}

/// Best PSD rank-d_x factorization M̂ = max(Λ_{d_x}, 0)^{1/2} U_{d_x}ᵀ of a
/// symmetric matrix, optimal in Frobenius norm by Eckart–Young. Eigenvalue
/// ties keep the solver's original order.
pub fn factor_psd(n_hat: &Mat, d_x: usize) -> Result<Representation> {
    let d_h = n_hat.nrows();
    if d_x > d_h {
        return Err(Error::Argument(format!("factor_psd: d_x {d_x} exceeds dimension {d_h}")));
    }
    let eig = sym_eig(n_hat)?;
    let mut m_hat = Mat::zeros(d_x, d_h);
    for i in 0..d_x {
        let scale = eig.values[i].max(0.0).sqrt();
        m_hat.row_mut(i).copy_from(&(eig.vectors.column(i).transpose() * scale));
    }
    Ok(Representation {
        m_hat,
        eigvals: eig.values.iter().cloned().collect(),
        d_x_used: d_x,
    })
}

/// ẑ = M̂ h.
pub fn encode(m_hat: &Mat, h: &DVector<f64>) -> Result<DVector<f64>> {
    if m_hat.ncols() != h.len() {
        return Err(Error::Argument(format!(
            "encode: map takes dimension {}, got {}",
            m_hat.ncols(),
            h.len()
        )));
    }
    Ok(m_hat * h)
}

/// Row-wise batch encode: returns an n×d_x matrix of latent states.
pub fn encode_rows(m_hat: &Mat, rows: &Mat) -> Result<Mat> {
    if m_hat.ncols() != rows.ncols() {
        return Err(Error::Argument(format!(
            "encode_rows: map takes dimension {}, got {}",
            m_hat.ncols(),
            rows.ncols()
        )));
    }
    Ok(rows * m_hat.transpose())
}
