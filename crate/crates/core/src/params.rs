//! System parameters, unit conversions and config ingestion.
//!
//! Every protocol constant used by the rest of the crate lives in
//! [`SystemParams`]. The defaults reproduce the operating point of the 11 km
//! ULL-fiber experiment (13 mSNU electronic noise, 29.6 % detection
//! efficiency, V_A = 2.778 SNU, ξ_B = 0.027 SNU, T = 0.624).
//!
//! Config documents are flat `key = value [unit]` lines. `#` starts a comment.
//! Numeric values accept scientific notation and, where the key has a
//! physical dimension, an optional SI suffix:
//!
//! | dimension | suffixes |
//! |-----------|----------|
//! | frequency | `Hz`, `kHz`, `MHz`, `GHz` |
//! | time      | `s`, `ms`, `us`, `ns`, `ps` |
//! | variance  | `SNU`, `mSNU` |
//! | phase     | `rad`, `mrad`, `deg` |
//! | ratio     | `dB` (extinction ratios and `atten_db` only) |
//!
//! `xi_b` (total excess noise at Bob) and `xi_bq` (per quadrature) are
//! alternative spellings of the same quantity, as are `t_channel` and
//! `atten_db`. Giving both members of a pair is an error.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

/// Static, dynamic and simulation parameters of a CV-QKD run.
///
/// All variances are per quadrature in shot-noise units (vacuum = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Electronic noise variance of the receiver.
    pub v_elec: f64,
    /// Reconciliation efficiency.
    pub beta: f64,
    /// Detection efficiency of the heterodyne receiver.
    pub eta: f64,
    /// Reference-to-quantum mean photon number ratio.
    pub rho: f64,
    /// Pulse repetition rate, Hz.
    pub rep_rate: f64,
    /// Fraction of pulse slots that carry quantum symbols.
    pub quantum_fraction: f64,
    pub epsilon_pe: f64,
    /// Alice's modulation variance per quadrature.
    pub va: f64,
    /// Excess noise per quadrature referred to Bob's input.
    pub xi_bq: f64,
    pub t_channel: f64,
    /// Total exchanged symbols N.
    pub n_total: u64,
    /// Symbols revealed for parameter estimation, m.
    pub m_pe: u64,
    /// Symbols used for the shot/electronic noise calibration, m'.
    pub m_calib: u64,
    /// Pulse FWHM, seconds.
    pub pulse_width: f64,
    pub samples_per_symbol: usize,
    /// Receiver low-pass bandwidth, Hz. `inf` disables the filter.
    pub filter_bw: f64,
    /// Effective linewidth of the relative signal/LO phase walk, Hz.
    pub linewidth_total: f64,
    pub seed: u64,
    /// Length of the cyclic pseudo-random quantum pattern.
    pub pattern_period: usize,
    /// Extinction ratios of the nested IQ MZIs, dB.
    pub er_top: f64,
    pub er_bottom: f64,
    /// Deviation from π/2 between the nested MZIs, radians.
    pub phase_bias_error: f64,
    /// Pulse-carver (EAM) extinction ratio, dB.
    pub er_carver: f64,
    /// Maximum VOA attenuation, dB.
    pub er_voa_max: f64,
    /// Apply digital predistortion ahead of the IQ modulator.
    pub predistortion: bool,
    /// IQ modulator full scale in units of the quantum constellation std.
    pub modulator_headroom: f64,
    /// Power-meter tap fraction of Alice's output beam splitter.
    pub tap_fraction: f64,
    /// Receiver ADC conversion gain, raw units per √SNU.
    pub adc_gain: f64,
    /// Quantum symbols per simulated oscilloscope acquisition.
    pub acquisition_symbols: usize,
    /// Minimum correlation peak to side-lobe ratio accepted by the synchronizer.
    pub sync_threshold: f64,
    /// References below this fraction of the median reference amplitude are flagged.
    pub ref_floor: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            v_elec: 0.013,
            beta: 0.95,
            eta: 0.296,
            rho: 342.6,
            rep_rate: 16e6,
            quantum_fraction: 0.5,
            epsilon_pe: 1e-10,
            va: 2.778,
            xi_bq: 0.0135,
            t_channel: 0.624,
            n_total: 3_080_000,
            m_pe: 1_540_000,
            m_calib: 1_540_000,
            pulse_width: 11.7e-9,
            samples_per_symbol: 125,
            filter_bw: 50e6,
            linewidth_total: 20e3,
            seed: 1,
            pattern_period: 2040,
            er_top: 25.0,
            er_bottom: 22.0,
            phase_bias_error: 0.0,
            er_carver: 28.5,
            er_voa_max: 33.0,
            predistortion: true,
            modulator_headroom: 8.0,
            tap_fraction: 0.9,
            adc_gain: 0.01,
            acquisition_symbols: 8160,
            sync_threshold: 2.0,
            ref_floor: 0.1,
        }
    }
}

impl SystemParams {
    /// Effective quantum symbol rate in symbols per second.
    pub fn r_eff(&self) -> f64 {
        self.rep_rate * self.quantum_fraction
    }

    pub fn slot_duration(&self) -> f64 {
        1.0 / self.rep_rate
    }

    pub fn sample_rate(&self) -> f64 {
        self.rep_rate * self.samples_per_symbol as f64
    }

    /// Total excess noise at Bob, ξ_B = 2 ξ_Bq.
    pub fn xi_b(&self) -> f64 {
        2.0 * self.xi_bq
    }

    /// Fraction (N − m)/N of symbols left for key generation.
    pub fn key_ratio(&self) -> f64 {
        (self.n_total - self.m_pe) as f64 / self.n_total as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, msg: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid(msg.to_string()))
            }
        }
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        check(self.v_elec >= 0.0 && self.v_elec.is_finite(), "v_elec must be >= 0")?;
        check(unit(self.beta), "beta out of (0,1]")?;
        check(unit(self.eta), "eta out of (0,1]")?;
        check(self.rho > 0.0 && self.rho.is_finite(), "rho must be > 0")?;
        check(self.rep_rate > 0.0 && self.rep_rate.is_finite(), "rep_rate must be > 0")?;
        check(unit(self.quantum_fraction), "quantum_fraction out of (0,1]")?;
        check(
            self.epsilon_pe > 0.0 && self.epsilon_pe < 1.0,
            "epsilon_pe out of (0,1)",
        )?;
        check(self.va >= 0.0 && self.va.is_finite(), "va must be >= 0")?;
        check(self.xi_bq >= 0.0 && self.xi_bq.is_finite(), "xi_bq must be >= 0")?;
        check(unit(self.t_channel), "t_channel out of (0,1]")?;
        check(
            self.m_pe > 0 && self.m_pe <= self.n_total,
            "m_pe must satisfy 0 < m_pe <= n_total",
        )?;
        check(self.m_calib > 0, "m_calib must be > 0")?;
        check(
            self.pulse_width > 0.0 && self.pulse_width.is_finite(),
            "pulse_width must be > 0",
        )?;
        check(self.samples_per_symbol >= 4, "samples_per_symbol must be >= 4")?;
        check(self.filter_bw > 0.0, "filter_bw must be > 0 (inf disables)")?;
        check(
            self.linewidth_total >= 0.0 && self.linewidth_total.is_finite(),
            "linewidth_total must be >= 0",
        )?;
        check(self.pattern_period >= 2, "pattern_period must be >= 2")?;
        for (name, er) in [
            ("er_top", self.er_top),
            ("er_bottom", self.er_bottom),
            ("er_carver", self.er_carver),
            ("er_voa_max", self.er_voa_max),
        ] {
            if !(er >= 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be >= 0 dB")));
            }
        }
        check(self.phase_bias_error.is_finite(), "phase_bias_error must be finite")?;
        check(
            self.modulator_headroom > 1.0 && self.modulator_headroom.is_finite(),
            "modulator_headroom must be > 1",
        )?;
        check(
            self.tap_fraction > 0.0 && self.tap_fraction < 1.0,
            "tap_fraction out of (0,1)",
        )?;
        check(self.adc_gain > 0.0 && self.adc_gain.is_finite(), "adc_gain must be > 0")?;
        check(
            self.acquisition_symbols >= self.pattern_period,
            "acquisition_symbols must be >= pattern_period",
        )?;
        check(self.sync_threshold >= 1.0, "sync_threshold must be >= 1")?;
        check(self.ref_floor >= 0.0 && self.ref_floor < 1.0, "ref_floor out of [0,1)")?;
        Ok(())
    }

    /// Renders a config document that [`load_config`] parses back to `self`.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("v_elec", self.v_elec.to_string());
        kv("beta", self.beta.to_string());
        kv("eta", self.eta.to_string());
        kv("rho", self.rho.to_string());
        kv("rep_rate", self.rep_rate.to_string());
        kv("quantum_fraction", self.quantum_fraction.to_string());
        kv("epsilon_pe", self.epsilon_pe.to_string());
        kv("va", self.va.to_string());
        kv("xi_bq", self.xi_bq.to_string());
        kv("t_channel", self.t_channel.to_string());
        kv("n_total", self.n_total.to_string());
        kv("m_pe", self.m_pe.to_string());
        kv("m_calib", self.m_calib.to_string());
        kv("pulse_width", self.pulse_width.to_string());
        kv("samples_per_symbol", self.samples_per_symbol.to_string());
        kv("filter_bw", self.filter_bw.to_string());
        kv("linewidth_total", self.linewidth_total.to_string());
        kv("seed", self.seed.to_string());
        kv("pattern_period", self.pattern_period.to_string());
        kv("er_top", self.er_top.to_string());
        kv("er_bottom", self.er_bottom.to_string());
        kv("phase_bias_error", self.phase_bias_error.to_string());
        kv("er_carver", self.er_carver.to_string());
        kv("er_voa_max", self.er_voa_max.to_string());
        kv("predistortion", self.predistortion.to_string());
        kv("modulator_headroom", self.modulator_headroom.to_string());
        kv("tap_fraction", self.tap_fraction.to_string());
        kv("adc_gain", self.adc_gain.to_string());
        kv("acquisition_symbols", self.acquisition_symbols.to_string());
        kv("sync_threshold", self.sync_threshold.to_string());
        kv("ref_floor", self.ref_floor.to_string());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dim {
    Plain,
    Frequency,
    Time,
    Variance,
    Phase,
    Decibel,
}

impl Dim {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dim::Plain => &[],
            Dim::Frequency => &[("GHz", 1e9), ("MHz", 1e6), ("kHz", 1e3), ("Hz", 1.0)],
            Dim::Time => &[
                ("ps", 1e-12),
                ("ns", 1e-9),
                ("us", 1e-6),
                ("µs", 1e-6),
                ("ms", 1e-3),
                ("s", 1.0),
            ],
            Dim::Variance => &[("mSNU", 1e-3), ("SNU", 1.0)],
            Dim::Phase => &[("mrad", 1e-3), ("rad", 1.0), ("deg", std::f64::consts::PI / 180.0)],
            Dim::Decibel => &[("dB", 1.0)],
        }
    }
}

fn parse_number(raw: &str, dim: Dim, line: usize) -> Result<f64, ConfigError> {
    let raw = raw.trim();
    let (num, scale) = match dim.units().iter().find(|(suffix, _)| raw.ends_with(suffix)) {
        Some((suffix, scale)) => (raw[..raw.len() - suffix.len()].trim_end(), *scale),
        None => (raw, 1.0),
    };
    let value: f64 = num
        .parse()
        .map_err(|_| parse_err(line, format!("cannot parse number `{raw}`")))?;
    if value.is_nan() {
        return Err(parse_err(line, "NaN is not a valid value"));
    }
    Ok(value * scale)
}

fn parse_count(raw: &str, line: usize) -> Result<u64, ConfigError> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| parse_err(line, format!("cannot parse count `{raw}`")))?;
    if v < 0.0 || v.fract() != 0.0 || v > 9.007_199_254_740_992e15 {
        return Err(parse_err(line, format!("`{raw}` is not a non-negative integer")));
    }
    Ok(v as u64)
}

fn parse_bool(raw: &str, line: usize) -> Result<bool, ConfigError> {
    match raw.trim() {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        other => Err(parse_err(line, format!("expected a boolean, got `{other}`"))),
    }
}

/// Parses and validates a config document. Absent keys keep their defaults.
pub fn load_config(text: &str) -> Result<SystemParams, ConfigError> {
    let mut p = SystemParams::default();
    let mut seen = HashSet::new();
    let mut m_calib_given = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(parse_err(line, format!("missing value for `{key}`")));
        }
        let canonical = match key {
            "xi_b" => "xi_bq",
            "atten_db" => "t_channel",
            k => k,
        };
        if !seen.insert(canonical.to_string()) {
            return Err(parse_err(line, format!("`{key}` given more than once")));
        }

        let num = |dim| parse_number(value, dim, line);
        let count = || parse_count(value, line);
        let size = || {
            parse_count(value, line).and_then(|v| usize::try_from(v).map_err(|_| parse_err(line, "value too large")))
        };
        match key {
            "v_elec" => p.v_elec = num(Dim::Variance)?,
            "beta" => p.beta = num(Dim::Plain)?,
            "eta" => p.eta = num(Dim::Plain)?,
            "rho" => p.rho = num(Dim::Plain)?,
            "rep_rate" => p.rep_rate = num(Dim::Frequency)?,
            "quantum_fraction" => p.quantum_fraction = num(Dim::Plain)?,
            "epsilon_pe" => p.epsilon_pe = num(Dim::Plain)?,
            "va" => p.va = num(Dim::Variance)?,
            "xi_bq" => p.xi_bq = num(Dim::Variance)?,
            "xi_b" => p.xi_bq = num(Dim::Variance)? / 2.0,
            "t_channel" => p.t_channel = num(Dim::Plain)?,
            "atten_db" => {
                let db = num(Dim::Decibel)?;
                if db < 0.0 {
                    return Err(parse_err(line, "atten_db must be >= 0"));
                }
                p.t_channel = db_to_transmittance(db).expect("checked non-negative");
            }
            "n_total" => p.n_total = count()?,
            "m_pe" => p.m_pe = count()?,
            "m_calib" => {
                p.m_calib = count()?;
                m_calib_given = true;
            }
            "pulse_width" => p.pulse_width = num(Dim::Time)?,
            "samples_per_symbol" => p.samples_per_symbol = size()?,
            "filter_bw" => p.filter_bw = num(Dim::Frequency)?,
            "linewidth_total" => p.linewidth_total = num(Dim::Frequency)?,
            "seed" => p.seed = count()?,
            "pattern_period" => p.pattern_period = size()?,
            "er_top" => p.er_top = num(Dim::Decibel)?,
            "er_bottom" => p.er_bottom = num(Dim::Decibel)?,
            "phase_bias_error" => p.phase_bias_error = num(Dim::Phase)?,
            "er_carver" => p.er_carver = num(Dim::Decibel)?,
            "er_voa_max" => p.er_voa_max = num(Dim::Decibel)?,
            "predistortion" => p.predistortion = parse_bool(value, line)?,
            "modulator_headroom" => p.modulator_headroom = num(Dim::Plain)?,
            "tap_fraction" => p.tap_fraction = num(Dim::Plain)?,
            "adc_gain" => p.adc_gain = num(Dim::Plain)?,
            "acquisition_symbols" => p.acquisition_symbols = size()?,
            "sync_threshold" => p.sync_threshold = num(Dim::Plain)?,
            "ref_floor" => p.ref_floor = num(Dim::Plain)?,
            other => return Err(parse_err(line, format!("unknown key `{other}`"))),
        }
    }
    if !m_calib_given {
        p.m_calib = p.m_pe;
    }
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("attenuation must be >= 0 dB, got {0}")]
pub struct NegativeAttenuation(pub f64);

/// Converts a loss in dB to a power transmittance, 10^(−dB/10).
pub fn db_to_transmittance(atten_db: f64) -> Result<f64, NegativeAttenuation> {
    if atten_db < 0.0 || atten_db.is_nan() {
        return Err(NegativeAttenuation(atten_db));
    }
    Ok(10f64.powf(-atten_db / 10.0))
}

pub fn transmittance_to_db(t: f64) -> f64 {
    -10.0 * t.log10()
}

/// Mean photon number per quantum pulse, ⟨n⟩ = V_A / 2.
pub fn mean_photon_number(va: f64) -> f64 {
    va / 2.0
}
