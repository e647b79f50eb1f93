//! Key-rate layer: Bob's mutual information, the trusted-detector Holevo
//! bound under reverse reconciliation, and asymptotic / finite-size SKR.

use crate::estimation::{self, EstimationError, PointEstimates, WorstCaseEstimates};
use crate::gaussian::{self, GaussianError, TwoModeCov};
use crate::params::{db_to_transmittance, SystemParams};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SecurityError {
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("eta = 1 with v_elec > 0 has no trusted-detector purification; use eta < 1 or v_elec = 0")]
    LosslessNoisyDetector,
    #[error("parameter-estimation count m = {m} must be below the total N = {n}")]
    EstimationExceedsTotal { m: f64, n: f64 },
    #[error("worst-case transmittance gain t_min = {0} is not positive; no finite-size key")]
    NoTransmittance(f64),
    #[error("key ratio {0} outside [0, 1]")]
    Ratio(f64),
    #[error("negative attenuation {0} dB")]
    Attenuation(f64),
}

/// The five physical inputs of the covariance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkPoint {
    pub va: f64,
    pub t_channel: f64,
    pub xi_bq: f64,
    pub v_elec: f64,
    pub eta: f64,
}

impl LinkPoint {
    pub fn from_params(p: &SystemParams) -> Self {
        Self {
            va: p.va,
            t_channel: p.t_channel,
            xi_bq: p.xi_bq,
            v_elec: p.v_elec,
            eta: p.eta,
        }
    }

    pub fn v_b(&self) -> f64 {
        0.5 * self.eta * self.t_channel * self.va + self.v_b_given_a()
    }

    pub fn v_b_given_a(&self) -> f64 {
        self.xi_bq + self.v_elec + 1.0
    }

    pub fn xi_alice(&self) -> Result<f64, EstimationError> {
        estimation::alice_referred(self.xi_bq, self.eta, self.t_channel)
    }
}

/// Alice–Bob covariance including the detector (one of Bob's two heterodyne modes).
pub fn cov_measured(pt: &LinkPoint) -> TwoModeCov {
    TwoModeCov {
        a: pt.va + 1.0,
        b: pt.v_b(),
        c: (0.5 * pt.eta * pt.t_channel * (pt.va * pt.va + 2.0 * pt.va)).sqrt(),
    }
}

/// Covariance at the channel output, before the trusted detector.
pub fn cov_channel_output(va: f64, t: f64, xi_a: f64) -> TwoModeCov {
    TwoModeCov {
        a: va + 1.0,
        b: t * (va + xi_a) + 1.0,
        c: (t * (va * va + 2.0 * va)).sqrt(),
    }
}

/// I_AB in bits per symbol; each heterodyne quadrature contributes ½·log₂.
pub fn mutual_information(pt: &LinkPoint) -> f64 {
    (pt.v_b() / pt.v_b_given_a()).log2()
}

/// Variance of the EPR ancilla that models electronic noise behind loss η.
pub fn detector_ancilla_variance(eta: f64, v_elec: f64) -> Result<f64, SecurityError> {
    if eta >= 1.0 {
        if v_elec > 0.0 {
            return Err(SecurityError::LosslessNoisyDetector);
        }
        return Ok(1.0);
    }
    Ok(1.0 + 2.0 * v_elec / (1.0 - eta))
}

/// χ_BE = S(E) − S(E|B) for reverse reconciliation with a trusted detector.
pub fn holevo_bound(pt: &LinkPoint) -> Result<f64, SecurityError> {
    let xi_a = pt.xi_alice()?;
    let channel = cov_channel_output(pt.va, pt.t_channel, xi_a);
    let s_e = channel.entropy()?;

    let v_d = detector_ancilla_variance(pt.eta, pt.v_elec)?;
    // modes: 0 = A, 1 = B (channel output), 2 = ancilla port F, 3 = ancilla partner G
    let mut sigma = DMatrix::zeros(8, 8);
    sigma.view_mut((0, 0), (4, 4)).copy_from(&channel.to_matrix());
    gaussian::place_epr(&mut sigma, 2, 3, v_d);
    let sigma = gaussian::beam_splitter(&sigma, 1, 2, pt.eta);
    let conditioned = gaussian::condition_on_heterodyne(&sigma, 1)?;
    let s_e_given_b = gaussian::entropy(&conditioned)?;
    Ok((s_e - s_e_given_b).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Asymptotic,
    FiniteSize,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Asymptotic => "asym",
            Regime::FiniteSize => "fs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub i_ab: f64,
    pub chi_be: f64,
    /// Reported key rate in bit/s, clamped at zero.
    pub skr: f64,
    pub skr_raw: f64,
    pub regime: Regime,
    /// Point at which I_AB and χ_BE were evaluated.
    pub inputs: LinkPoint,
    pub beta: f64,
    pub r_eff: f64,
    pub ratio: f64,
    pub worst_case: Option<WorstCaseEstimates>,
}

impl SecurityReport {
    /// Flat `key = value` report.
    pub fn to_report_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("regime", self.regime.label().into());
        kv("va", self.inputs.va.to_string());
        kv("t_channel", self.inputs.t_channel.to_string());
        kv("xi_bq", self.inputs.xi_bq.to_string());
        kv("v_elec", self.inputs.v_elec.to_string());
        kv("eta", self.inputs.eta.to_string());
        kv("beta", self.beta.to_string());
        kv("r_eff", self.r_eff.to_string());
        kv("ratio", self.ratio.to_string());
        kv("i_ab_bits", self.i_ab.to_string());
        kv("chi_be_bits", self.chi_be.to_string());
        kv("skr_raw_bps", self.skr_raw.to_string());
        kv("skr_bps", self.skr.to_string());
        if let Some(w) = &self.worst_case {
            kv("t_min", w.t_min.to_string());
            kv("sigma2_max", w.sigma2_max.to_string());
            kv("xi_bq_fs", w.xi_bq_fs.to_string());
            kv("t_channel_min", w.t_channel_min.to_string());
            kv("z_eps", w.z_eps.to_string());
            kv("delta_sigma2", w.delta_sigma2.to_string());
            kv("delta_sigma2_0", w.delta_sigma2_0.to_string());
        }
        s
    }
}

/// Devetak–Winter rate at an arbitrary point.
pub fn key_rate_at(
    pt: &LinkPoint,
    beta: f64,
    r_eff: f64,
    ratio: f64,
    regime: Regime,
) -> Result<SecurityReport, SecurityError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(SecurityError::Ratio(ratio));
    }
    let i_ab = mutual_information(pt);
    let chi_be = holevo_bound(pt)?;
    let skr_raw = ratio * (beta * i_ab - chi_be) * r_eff;
    Ok(SecurityReport {
        i_ab,
        chi_be,
        skr: skr_raw.max(0.0),
        skr_raw,
        regime,
        inputs: *pt,
        beta,
        r_eff,
        ratio,
        worst_case: None,
    })
}

pub fn skr_asymptotic(p: &SystemParams, ratio: f64) -> Result<SecurityReport, SecurityError> {
    key_rate_at(&LinkPoint::from_params(p), p.beta, p.r_eff(), ratio, Regime::Asymptotic)
}

/// Asymptotic rate from estimates (negative ξ̂ is clamped to zero here).
pub fn skr_from_estimates(
    p: &SystemParams,
    point: &PointEstimates,
    va: f64,
    ratio: f64,
) -> Result<SecurityReport, SecurityError> {
    let pt = LinkPoint {
        va,
        t_channel: point.t_channel_hat,
        xi_bq: point.xi_bq_hat.max(0.0),
        v_elec: p.v_elec,
        eta: p.eta,
    };
    key_rate_at(&pt, p.beta, p.r_eff(), ratio, Regime::Asymptotic)
}

/// Sample counts and calibration entering the finite-size bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteSizeInput {
    /// Parameter-estimation symbols m (may be infinite).
    pub m: f64,
    /// Calibration symbols m'.
    pub m_calib: f64,
    pub sigma2_0_hat: f64,
    pub epsilon_pe: f64,
}

/// Finite-size rate at a caller-chosen key ratio.
pub fn skr_finite_with_ratio(
    p: &SystemParams,
    point: &PointEstimates,
    va: f64,
    input: &FiniteSizeInput,
    ratio: f64,
) -> Result<SecurityReport, SecurityError> {
    let worst = estimation::finite_size_estimates(
        point,
        va,
        p.eta,
        input.m,
        input.sigma2_0_hat,
        input.m_calib,
        input.epsilon_pe,
    )?;
    if !(worst.t_min > 0.0) {
        return Err(SecurityError::NoTransmittance(worst.t_min));
    }
    let pt = LinkPoint {
        va,
        t_channel: worst.t_channel_min,
        xi_bq: worst.xi_bq_fs.max(0.0),
        v_elec: p.v_elec,
        eta: p.eta,
    };
    let mut report = key_rate_at(&pt, p.beta, p.r_eff(), ratio, Regime::FiniteSize)?;
    report.worst_case = Some(worst);
    Ok(report)
}

/// Finite-size rate with ratio `(N − m)/N`.
pub fn skr_finite(
    p: &SystemParams,
    point: &PointEstimates,
    va: f64,
    n_total: f64,
    input: &FiniteSizeInput,
) -> Result<SecurityReport, SecurityError> {
    if !(input.m < n_total) {
        return Err(SecurityError::EstimationExceedsTotal { m: input.m, n: n_total });
    }
    skr_finite_with_ratio(p, point, va, input, (n_total - input.m) / n_total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub atten_db: f64,
    pub regime: Regime,
    /// Infinite for asymptotic rows.
    pub m: f64,
    pub i_ab: f64,
    pub chi_be: f64,
    pub skr: f64,
}

fn row(atten_db: f64, m: f64, r: &SecurityReport) -> SweepRow {
    SweepRow {
        atten_db,
        regime: r.regime,
        m,
        i_ab: r.i_ab,
        chi_be: r.chi_be,
        skr: r.skr,
    }
}

/// SKR versus attenuation with the excess noise ξ_Bq held at its configured value.
///
/// Every grid point yields one asymptotic row followed by one finite-size row
/// per entry of `ms` (with m' = m and exact point estimates).
pub fn sweep_attenuation(
    p: &SystemParams,
    grid_db: &[f64],
    ms: &[f64],
    ratio: f64,
) -> Result<Vec<SweepRow>, SecurityError> {
    let blocks: Vec<Result<Vec<SweepRow>, SecurityError>> = grid_db
        .par_iter()
        .map(|&db| {
            let t = db_to_transmittance(db).map_err(|_| SecurityError::Attenuation(db))?;
            let local = SystemParams {
                t_channel: t,
                ..p.clone()
            };
            let mut rows = vec![row(db, f64::INFINITY, &skr_asymptotic(&local, ratio)?)];
            let point = estimation::ideal_point(&local);
            for &m in ms {
                let input = FiniteSizeInput {
                    m,
                    m_calib: m,
                    sigma2_0_hat: 1.0 + p.v_elec,
                    epsilon_pe: p.epsilon_pe,
                };
                let r = skr_finite_with_ratio(&local, &point, p.va, &input, ratio)?;
                rows.push(row(db, m, &r));
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::with_capacity(grid_db.len() * (1 + ms.len()));
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}
