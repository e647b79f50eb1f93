//! Parameter estimation on aligned symbol pairs: least-squares point
//! estimates and the finite-size worst-case bounds.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimationError {
    #[error("need at least 2 aligned pairs, got {0}")]
    TooFewPairs(usize),
    #[error("alice and bob sequences differ in length ({alice} vs {bob})")]
    LengthMismatch { alice: usize, bob: usize },
    #[error("alice's data has zero variance")]
    ZeroAliceVariance,
    #[error("epsilon_pe = {0} is outside (0, 1)")]
    EpsilonRange(f64),
    #[error("sample count must be at least 1, got {0}")]
    InvalidCount(f64),
    #[error("eta * T must be positive")]
    ZeroDenominator,
}

/// Running sums of a pooled two-quadrature regression.
///
/// Blocks can be accumulated independently and merged in a fixed order, so
/// the result does not depend on how work was scheduled.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RegressionSums {
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
    /// Number of symbol pairs (each contributes two pooled samples).
    pub pairs: usize,
}

impl RegressionSums {
    pub fn from_pairs(alice: &[Complex64], bob: &[Complex64]) -> Result<Self, EstimationError> {
        if alice.len() != bob.len() {
            return Err(EstimationError::LengthMismatch {
                alice: alice.len(),
                bob: bob.len(),
            });
        }
        let mut s = Self::default();
        for (a, b) in alice.iter().zip(bob) {
            s.sxx += a.re * a.re + a.im * a.im;
            s.sxy += a.re * b.re + a.im * b.im;
            s.syy += b.re * b.re + b.im * b.im;
        }
        s.pairs = alice.len();
        Ok(s)
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            sxx: self.sxx + other.sxx,
            sxy: self.sxy + other.sxy,
            syy: self.syy + other.syy,
            pairs: self.pairs + other.pairs,
        }
    }

    pub fn samples(&self) -> usize {
        2 * self.pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub t_hat: f64,
    pub sigma2_hat: f64,
    pub xi_bq_hat: f64,
    pub t_channel_hat: f64,
    pub v_b_hat: f64,
    /// Number of symbol pairs behind the estimate.
    pub pairs: usize,
    /// Alice's empirical per-quadrature variance.
    pub va_hat: f64,
}

impl PointEstimates {
    /// Standard error of t̂ under the linear Gaussian model.
    pub fn t_standard_error(&self) -> f64 {
        (self.sigma2_hat / (2.0 * self.pairs as f64 * self.va_hat)).sqrt()
    }

    /// Standard error of σ̂² (and therefore of ξ̂_Bq).
    pub fn sigma2_standard_error(&self) -> f64 {
        self.sigma2_hat * (2.0 / (2.0 * self.pairs as f64)).sqrt()
    }
}

/// Standard error of ξ̂_Bq = σ̂² − σ̂₀² when σ̂₀² comes from `m_calib` calibration symbols.
pub fn xi_standard_error(point: &PointEstimates, sigma2_0_hat: f64, m_calib: f64) -> f64 {
    (point.sigma2_hat.powi(2) / point.pairs as f64 + sigma2_0_hat.powi(2) / m_calib).sqrt()
}

/// Fits `y = t·x + z` pooling both quadratures.
pub fn fit_point(
    alice: &[Complex64],
    bob: &[Complex64],
    eta: f64,
    v_elec: f64,
) -> Result<PointEstimates, EstimationError> {
    let sums = RegressionSums::from_pairs(alice, bob)?;
    fit_sums(&sums, eta, v_elec)
}

pub fn fit_sums(sums: &RegressionSums, eta: f64, v_elec: f64) -> Result<PointEstimates, EstimationError> {
    if sums.pairs < 2 {
        return Err(EstimationError::TooFewPairs(sums.pairs));
    }
    if !(sums.sxx > 0.0) {
        return Err(EstimationError::ZeroAliceVariance);
    }
    let n = sums.samples() as f64;
    let t_hat = sums.sxy / sums.sxx;
    // Σ(y − t̂x)² = Σy² − t̂·Σxy at the least-squares optimum
    let sigma2_hat = ((sums.syy - t_hat * sums.sxy) / n).max(0.0);
    Ok(PointEstimates {
        t_hat,
        sigma2_hat,
        xi_bq_hat: sigma2_hat - v_elec - 1.0,
        t_channel_hat: 2.0 * t_hat * t_hat / eta,
        v_b_hat: sums.syy / n,
        pairs: sums.pairs,
        va_hat: sums.sxx / n,
    })
}

/// Two-sided normal quantile: z = √2·erf⁻¹(1 − ε).
pub fn z_of_epsilon(epsilon_pe: f64) -> Result<f64, EstimationError> {
    if !(epsilon_pe > 0.0 && epsilon_pe < 1.0) {
        return Err(EstimationError::EpsilonRange(epsilon_pe));
    }
    // erfc⁻¹(ε) avoids cancellation in 1 − ε for tiny ε
    Ok(std::f64::consts::SQRT_2 * erfc_inv(epsilon_pe))
}

fn check_count(m: f64) -> Result<(), EstimationError> {
    if m >= 1.0 {
        Ok(())
    } else {
        Err(EstimationError::InvalidCount(m))
    }
}

/// Confidence-interval edges `(t_min, σ²_max)`; `m` may be infinite.
pub fn worst_case(point: &PointEstimates, va: f64, m: f64, epsilon_pe: f64) -> Result<(f64, f64), EstimationError> {
    check_count(m)?;
    let z = z_of_epsilon(epsilon_pe)?;
    let t_min = point.t_hat - z * (point.sigma2_hat / (m * va)).sqrt();
    let sigma2_max = point.sigma2_hat + z * point.sigma2_hat * std::f64::consts::SQRT_2 / m.sqrt();
    Ok((t_min, sigma2_max))
}

/// Uncertainty Δσ̂₀² of the shot-plus-electronic calibration from `m_calib` samples.
pub fn calibration_bound(sigma2_0_hat: f64, m_calib: f64, epsilon_pe: f64) -> Result<f64, EstimationError> {
    check_count(m_calib)?;
    let z = z_of_epsilon(epsilon_pe)?;
    Ok(z * sigma2_0_hat * std::f64::consts::SQRT_2 / m_calib.sqrt())
}

pub fn xi_finite_size(sigma2_max: f64, sigma2_0_hat: f64, delta_sigma2_0: f64) -> f64 {
    sigma2_max - (sigma2_0_hat - delta_sigma2_0)
}

/// Refers Bob-side excess noise to the channel input: ξ_A = 2ξ_Bq/(ηT).
pub fn alice_referred(xi_bq: f64, eta: f64, t_channel: f64) -> Result<f64, EstimationError> {
    let d = eta * t_channel;
    if !(d > 0.0) {
        return Err(EstimationError::ZeroDenominator);
    }
    Ok(2.0 * xi_bq / d)
}

/// Channel transmittance corresponding to a regression gain: T = 2t²/η.
pub fn channel_from_gain(t: f64, eta: f64) -> f64 {
    2.0 * t * t / eta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseEstimates {
    pub t_min: f64,
    pub sigma2_max: f64,
    pub xi_bq_fs: f64,
    pub t_channel_min: f64,
    pub z_eps: f64,
    pub delta_sigma2: f64,
    pub delta_sigma2_0: f64,
}

/// Chains the worst-case bound, the calibration bound and the finite-size excess noise.
pub fn finite_size_estimates(
    point: &PointEstimates,
    va: f64,
    eta: f64,
    m: f64,
    sigma2_0_hat: f64,
    m_calib: f64,
    epsilon_pe: f64,
) -> Result<WorstCaseEstimates, EstimationError> {
    let (t_min, sigma2_max) = worst_case(point, va, m, epsilon_pe)?;
    let delta_sigma2_0 = calibration_bound(sigma2_0_hat, m_calib, epsilon_pe)?;
    Ok(WorstCaseEstimates {
        t_min,
        sigma2_max,
        xi_bq_fs: xi_finite_size(sigma2_max, sigma2_0_hat, delta_sigma2_0),
        t_channel_min: channel_from_gain(t_min.max(0.0), eta),
        z_eps: z_of_epsilon(epsilon_pe)?,
        delta_sigma2: sigma2_max - point.sigma2_hat,
        delta_sigma2_0,
    })
}

/// Point estimates implied by exact knowledge of the system parameters.
pub fn ideal_point(p: &crate::params::SystemParams) -> PointEstimates {
    let t = (p.eta * p.t_channel / 2.0).sqrt();
    let sigma2 = p.xi_bq + p.v_elec + 1.0;
    PointEstimates {
        t_hat: t,
        sigma2_hat: sigma2,
        xi_bq_hat: p.xi_bq,
        t_channel_hat: p.t_channel,
        v_b_hat: t * t * p.va + sigma2,
        pairs: 0,
        va_hat: p.va,
    }
}

/// One point of the worst-case estimator curves versus m (with m' = m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCasePoint {
    pub m: f64,
    /// Total finite-size excess noise 2·ξ_Bq^FS.
    pub xi_b_fs: f64,
    pub t_channel_min: f64,
}

/// Worst-case ξ_B and T_min at exact point estimates for each m.
pub fn worst_case_curve(p: &crate::params::SystemParams, ms: &[f64]) -> Result<Vec<WorstCasePoint>, EstimationError> {
    let point = ideal_point(p);
    ms.iter()
        .map(|&m| {
            let w = finite_size_estimates(&point, p.va, p.eta, m, 1.0 + p.v_elec, m, p.epsilon_pe)?;
            Ok(WorstCasePoint {
                m,
                xi_b_fs: 2.0 * w.xi_bq_fs,
                t_channel_min: w.t_channel_min,
            })
        })
        .collect()
}

/// Flat `key = value` report of the estimates.
pub fn report_lines(point: &PointEstimates, worst: Option<&WorstCaseEstimates>) -> Vec<(&'static str, f64)> {
    let mut out = vec![
        ("t_hat", point.t_hat),
        ("sigma2_hat", point.sigma2_hat),
        ("xi_bq_hat", point.xi_bq_hat),
        ("t_channel_hat", point.t_channel_hat),
        ("v_b_hat", point.v_b_hat),
        ("pairs", point.pairs as f64),
    ];
    if let Some(w) = worst {
        out.extend([
            ("t_min", w.t_min),
            ("sigma2_max", w.sigma2_max),
            ("xi_bq_fs", w.xi_bq_fs),
            ("t_channel_min", w.t_channel_min),
            ("z_eps", w.z_eps),
            ("delta_sigma2", w.delta_sigma2),
            ("delta_sigma2_0", w.delta_sigma2_0),
        ]);
    }
    out
}
