//! Dense symmetric/general linear algebra and Gaussian sampling kernels.
//!
//! Everything here is a pure function of its inputs (plus an explicit RNG
//! state), so values can be moved freely across threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense row/column matrix of f64, the workhorse type of the crate.
pub type Mat = DMatrix<f64>;

/// Seedable, splittable stream RNG. A seed reproduces draws exactly.
pub type StreamRng = rand_chacha::ChaCha8Rng;

/// Default relative singular-value cutoff for pseudo-inverses.
pub const PINV_DEFAULT_TOL: f64 = 1e-10;

pub fn rng_from_seed(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// Independent stream derived from the same seed (used by concurrent sweeps).
pub fn rng_stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// ⟨A, B⟩_F, the Frobenius inner product.
pub fn frob_inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

fn check_square_finite(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Argument(format!(
            "{what}: expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !all_finite(m) {
        return Err(Error::Argument(format!("{what}: non-finite entries")));
    }
    Ok(())
}

fn check_symmetric(m: &Mat, what: &str) -> Result<()> {
    check_square_finite(m, what)?;
    let scale = 1.0 + m.amax();
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > 1e-9 * scale {
        return Err(Error::Argument(format!(
            "{what}: matrix not symmetric (max asymmetry {worst:e})"
        )));
    }
    Ok(())
}

/// Isometric vectorization of a symmetric d×d matrix: row-major upper
/// triangle with off-diagonal entries scaled by √2, so that
/// ⟨svec(X), svec(Y)⟩ = ⟨X, Y⟩_F.
pub fn svec(m: &Mat) -> Result<DVector<f64>> {
    check_symmetric(m, "svec")?;
    let m = symmetrize(m);
    let d = m.nrows();
    let mut out = DVector::zeros(d * (d + 1) / 2);
    let mut k = 0;
    let sqrt2 = std::f64::consts::SQRT_2;
    for i in 0..d {
        for j in i..d {
            out[k] = if i == j { m[(i, j)] } else { sqrt2 * m[(i, j)] };
            k += 1;
        }
    }
    Ok(out)
}

/// Inverse of [`svec`]. The input length must be a triangular number.
pub fn smat(v: &DVector<f64>) -> Result<Mat> {
    let n = v.len();
    let d = ((8.0 * n as f64 + 1.0).sqrt() as usize).div_ceil(2) - 1;
    // float sqrt can land one off for large n
    let d = (d.saturating_sub(1)..=d + 1)
        .find(|&d| d * (d + 1) / 2 == n)
        .ok_or_else(|| Error::Argument(format!("smat: length {n} is not triangular")))?;
    let mut out = Mat::zeros(d, d);
    let mut k = 0;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i..d {
            let x = if i == j { v[k] } else { v[k] * inv_sqrt2 };
            out[(i, j)] = x;
            out[(j, i)] = x;
            k += 1;
        }
    }
    Ok(out)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
/// Ties keep the solver's original order (stable sort).
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: DVector<f64>,
    /// Orthogonal matrix whose columns are the eigenvectors, in the same
    /// order as `values`.
    pub vectors: Mat,
}

impl SymEig {
    /// V·diag(values)·Vᵀ.
    pub fn reconstruct(&self) -> Mat {
        let d = Mat::from_diagonal(&self.values);
        &self.vectors * d * self.vectors.transpose()
    }
}

pub fn sym_eig(m: &Mat) -> Result<SymEig> {
    check_symmetric(m, "sym_eig")?;
    let se = nalgebra::SymmetricEigen::new(symmetrize(m));
    let d = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
    let values = DVector::from_iterator(d, order.iter().map(|&i| se.eigenvalues[i]));
    let vectors = Mat::from_columns(
        &order
            .iter()
            .map(|&i| se.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok(SymEig { values, vectors })
}

/// Moore–Penrose pseudo-inverse with relative singular-value cutoff `tol`:
/// singular values below tol·σ_max are treated as zero.
pub fn pinv(m: &Mat, tol: f64) -> Result<Mat> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Argument(format!("pinv: tol {tol} not in (0, 1)")));
    }
    if !all_finite(m) {
        return Err(Error::Argument("pinv: non-finite entries".into()));
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * smax;
    let mut sig_inv = svd.singular_values.clone();
    for s in sig_inv.iter_mut() {
        *s = if *s > cutoff { 1.0 / *s } else { 0.0 };
    }
    // pinv = V Σ⁺ Uᵀ
    let mut vt_scaled = v_t.clone();
    for (i, s) in sig_inv.iter().enumerate() {
        vt_scaled.row_mut(i).scale_mut(*s);
    }
    Ok(vt_scaled.transpose() * u.transpose())
}

/// Result of [`least_squares`]: the minimum-norm minimizer of ‖X·W − Y‖_F,
/// and whether σ_min(X) fell below the rank cutoff.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub solution: Mat,
    pub rank_deficient: bool,
}

pub fn least_squares(x: &Mat, y: &Mat) -> Result<LeastSquares> {
    least_squares_tol(x, y, PINV_DEFAULT_TOL)
}

pub fn least_squares_tol(x: &Mat, y: &Mat, tol: f64) -> Result<LeastSquares> {
    if x.nrows() != y.nrows() {
        return Err(Error::Argument(format!(
            "least_squares: row mismatch {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Argument("least_squares: zero rows".into()));
    }
    if !all_finite(x) || !all_finite(y) {
        return Err(Error::Argument("least_squares: non-finite entries".into()));
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    let cutoff = tol * smax;
    let rank_deficient = smin <= cutoff || x.nrows() < x.ncols();
    // W = V Σ⁺ (Uᵀ Y), minimum-norm in the rank-deficient case
    let mut uty = u.transpose() * y;
    for (i, s) in svd.singular_values.iter().enumerate() {
        let f = if *s > cutoff { 1.0 / *s } else { 0.0 };
        uty.row_mut(i).scale_mut(f);
    }
    Ok(LeastSquares {
        solution: v_t.transpose() * uty,
        rank_deficient,
    })
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    check_square_finite(m, "spectral_radius")?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let eigs = m.clone().complex_eigenvalues();
    Ok(eigs.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Stationary covariance Σ of x⁺ = A x + noise: solves Σ = AΣAᵀ + W.
/// Direct Kronecker solve for n ≤ 40, doubling iteration above.
pub fn solve_lyapunov(a: &Mat, w: &Mat) -> Result<Mat> {
    check_square_finite(a, "solve_lyapunov")?;
    let rho = spectral_radius(a)?;
    if rho >= 1.0 - 1e-6 {
        return Err(Error::Instability {
            rho,
            context: "solve_lyapunov".into(),
        });
    }
    let w = symmetrize(w);
    let n = a.nrows();
    let sigma = if n <= 40 {
        let kron = a.kronecker(a);
        let sys = Mat::identity(n * n, n * n) - kron;
        let rhs = DVector::from_column_slice(w.as_slice());
        let sol = sys
            .lu()
            .solve(&rhs)
            .ok_or(Error::NonConvergence { iters: 0, residual: f64::NAN })?;
        symmetrize(&Mat::from_column_slice(n, n, sol.as_slice()))
    } else {
        let mut s = w.clone();
        let mut m = a.clone();
        let mut iters = 0usize;
        loop {
            let delta = &m * &s * m.transpose();
            s += &delta;
            s = symmetrize(&s);
            iters += 1;
            if delta.norm() <= 1e-14 * (1.0 + s.norm()) {
                break;
            }
            if iters > 200 {
                return Err(Error::NonConvergence { iters, residual: delta.norm() });
            }
            m = &m * &m;
        }
        s
    };
    let residual = (&sigma - a * &sigma * a.transpose() - &w).norm();
    if residual > 1e-10 * (1.0 + sigma.norm()) {
        return Err(Error::NonConvergence { iters: 0, residual });
    }
    Ok(sigma)
}

/// Precomputed covariance factor for repeated Gaussian draws.
/// Each draw consumes exactly `dim` standard normals from the stream.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    factor: Mat,
}

impl GaussianSampler {
    pub fn new(mean: &DVector<f64>, cov: &Mat) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::Argument(format!(
                "gaussian_sample: mean dim {} vs cov dim {}",
                mean.len(),
                cov.nrows()
            )));
        }
        let eig = sym_eig(cov)?;
        let scale = 1.0 + eig.values.amax();
        let mut roots = eig.values.clone();
        for v in roots.iter_mut() {
            if *v < -1e-10 * scale {
                return Err(Error::Argument(format!(
                    "gaussian_sample: covariance indefinite (eigenvalue {v:e})"
                )));
            }
            *v = v.max(0.0).sqrt();
        }
        let mut factor = eig.vectors.clone();
        for (j, r) in roots.iter().enumerate() {
            factor.column_mut(j).scale_mut(*r);
        }
        Ok(Self { mean: mean.clone(), factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn draw(&self, rng: &mut StreamRng) -> DVector<f64> {
        let z = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        &self.mean + &self.factor * z
    }
}

/// One multivariate Gaussian draw. Deterministic given the RNG state.
pub fn gaussian_sample(rng: &mut StreamRng, mean: &DVector<f64>, cov: &Mat) -> Result<DVector<f64>> {
    Ok(GaussianSampler::new(mean, cov)?.draw(rng))
}
