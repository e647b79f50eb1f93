//! Gaussian-state toolbox in shot-noise units: symplectic spectra, von
//! Neumann entropies and heterodyne conditioning of covariance matrices.
//!
//! Quadratures are ordered `(x₁, p₁, x₂, p₂, …)`.

use nalgebra::{DMatrix, SymmetricEigen};

/// Symplectic eigenvalues below `1 − PHYSICALITY_TOL` violate the uncertainty principle.
pub const PHYSICALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaussianError {
    #[error("unphysical covariance: symplectic eigenvalue {0} < 1")]
    Unphysical(f64),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix dimension {0} is not an even square size")]
    Dimension(usize),
    #[error("singular matrix in conditioning")]
    Singular,
}

/// Symplectic form `⊕ [[0, 1], [−1, 0]]` over `modes` modes.
pub fn omega(modes: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        w[(2 * k, 2 * k + 1)] = 1.0;
        w[(2 * k + 1, 2 * k)] = -1.0;
    }
    w
}

/// X-form two-mode covariance `[[a·I, c·Z], [c·Z, b·I]]` with `Z = diag(1, −1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeCov {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TwoModeCov {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = self.a;
        m[(1, 1)] = self.a;
        m[(2, 2)] = self.b;
        m[(3, 3)] = self.b;
        m[(0, 2)] = self.c;
        m[(2, 0)] = self.c;
        m[(1, 3)] = -self.c;
        m[(3, 1)] = -self.c;
        m
    }

    /// Closed-form symplectic eigenvalues, ascending.
    pub fn symplectic_eigenvalues(&self) -> [f64; 2] {
        let delta = self.a * self.a + self.b * self.b - 2.0 * self.c * self.c;
        let det = self.a * self.b - self.c * self.c;
        let disc = (delta * delta - 4.0 * det * det).max(0.0).sqrt();
        [((delta - disc) / 2.0).max(0.0).sqrt(), ((delta + disc) / 2.0).sqrt()]
    }

    pub fn check_physical(&self) -> Result<(), GaussianError> {
        let [lo, _] = self.symplectic_eigenvalues();
        if self.a < 1.0 - PHYSICALITY_TOL || self.b < 1.0 - PHYSICALITY_TOL || !(lo >= 1.0 - PHYSICALITY_TOL) {
            return Err(GaussianError::Unphysical(lo.min(self.a).min(self.b)));
        }
        Ok(())
    }

    /// Entropy of the two-mode state in bits.
    pub fn entropy(&self) -> Result<f64, GaussianError> {
        self.check_physical()?;
        let [n1, n2] = self.symplectic_eigenvalues();
        Ok(g_entropy(n1)? + g_entropy(n2)?)
    }
}

/// Symplectic spectrum of an arbitrary `2n × 2n` covariance matrix, ascending.
///
/// Uses the symmetric form `K = Σ^{1/2} Ω Σ^{1/2}`: the eigenvalues of `K·Kᵀ`
/// are the squared symplectic eigenvalues, each appearing twice.
pub fn symplectic_spectrum(sigma: &DMatrix<f64>) -> Result<Vec<f64>, GaussianError> {
    let dim = sigma.nrows();
    if dim == 0 || !dim.is_multiple_of(2) || sigma.ncols() != dim {
        return Err(GaussianError::Dimension(dim));
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(GaussianError::NotPositiveDefinite);
    }
    let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
    let k = &root * omega(dim / 2) * &root;
    let kkt = &k * k.transpose();
    let mut squares: Vec<f64> = SymmetricEigen::new((&kkt + kkt.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .map(|&v| v.max(0.0))
        .collect();
    squares.sort_by(f64::total_cmp);
    Ok(squares.iter().step_by(2).map(|v| v.sqrt()).collect())
}

/// Fails if any symplectic eigenvalue is below one.
pub fn check_physical(sigma: &DMatrix<f64>) -> Result<Vec<f64>, GaussianError> {
    let nus = symplectic_spectrum(sigma)?;
    match nus.first() {
        Some(&lo) if lo < 1.0 - PHYSICALITY_TOL => Err(GaussianError::Unphysical(lo)),
        _ => Ok(nus),
    }
}

fn x_log2_x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Entropy in bits of a thermal mode with symplectic eigenvalue `nu`.
pub fn g_entropy(nu: f64) -> Result<f64, GaussianError> {
    if !(nu >= 1.0 - PHYSICALITY_TOL) {
        return Err(GaussianError::Unphysical(nu));
    }
    let nu = nu.max(1.0);
    Ok(x_log2_x((nu + 1.0) / 2.0) - x_log2_x((nu - 1.0) / 2.0))
}

/// Von Neumann entropy of a Gaussian state in bits.
pub fn entropy(sigma: &DMatrix<f64>) -> Result<f64, GaussianError> {
    check_physical(sigma)?.into_iter().map(g_entropy).sum()
}

/// Covariance of the remaining modes after heterodyning `mode`:
/// `Σ_rest − C (Σ_m + I)⁻¹ Cᵀ`.
pub fn condition_on_heterodyne(sigma: &DMatrix<f64>, mode: usize) -> Result<DMatrix<f64>, GaussianError> {
    let dim = sigma.nrows();
    if !dim.is_multiple_of(2) || 2 * mode + 2 > dim {
        return Err(GaussianError::Dimension(dim));
    }
    let keep: Vec<usize> = (0..dim).filter(|&i| i / 2 != mode).collect();
    let meas = [2 * mode, 2 * mode + 1];
    let rest = sigma.select_rows(&keep).select_columns(&keep);
    let cross = sigma.select_rows(&keep).select_columns(&meas);
    let block = sigma.select_rows(&meas).select_columns(&meas) + DMatrix::identity(2, 2);
    let inv = block.try_inverse().ok_or(GaussianError::Singular)?;
    Ok(rest - &cross * inv * cross.transpose())
}

/// Two-mode squeezed vacuum of variance `v` on modes `(i, j)` embedded in `sigma`.
pub fn place_epr(sigma: &mut DMatrix<f64>, i: usize, j: usize, v: f64) {
    let c = (v * v - 1.0).max(0.0).sqrt();
    for (k, s) in [(0, 1.0), (1, -1.0)] {
        sigma[(2 * i + k, 2 * i + k)] = v;
        sigma[(2 * j + k, 2 * j + k)] = v;
        sigma[(2 * i + k, 2 * j + k)] = s * c;
        sigma[(2 * j + k, 2 * i + k)] = s * c;
    }
}

/// Mixes modes `i` and `j` on a beam splitter of transmittance `eta`.
pub fn beam_splitter(sigma: &DMatrix<f64>, i: usize, j: usize, eta: f64) -> DMatrix<f64> {
    let dim = sigma.nrows();
    let (t, r) = (eta.sqrt(), (1.0 - eta).max(0.0).sqrt());
    let mut s = DMatrix::identity(dim, dim);
    for k in 0..2 {
        let (a, b) = (2 * i + k, 2 * j + k);
        s[(a, a)] = t;
        s[(a, b)] = r;
        s[(b, a)] = -r;
        s[(b, b)] = t;
    }
    &s * sigma * s.transpose()
}
