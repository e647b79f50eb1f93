//! Alice's transmitter: Gaussian symbol generation, reference interleaving,
//! the nested-MZI IQ modulator with finite extinction ratio, digital
//! predistortion and the power-meter estimate of the modulation variance.
//!
//! Quadratures are in shot-noise units with vacuum variance 1, so a coherent
//! state with complex quadrature amplitude `x + ip` carries
//! `(x² + p²) / 4` photons on average.

use crate::rng::SimRng;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TxError {
    #[error("symbol list is empty")]
    EmptySymbols,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("target {value} exceeds modulator dynamic range ±{limit}")]
    OutOfRange { value: f64, limit: f64 },
    #[error("target #{index} is outside the reachable constellation of the modulator")]
    Unreachable { index: usize },
    #[error("frame contains no quantum slots")]
    NoQuantumSlots,
    #[error("required attenuation {required_db:.2} dB is outside the VOA range [0, {max_db}] dB")]
    VoaRange { required_db: f64, max_db: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumSymbol {
    pub x: f64,
    pub p: f64,
}

impl QuantumSymbol {
    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.p)
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self { x: z.re, p: z.im }
    }

    pub fn intensity(self) -> f64 {
        self.x * self.x + self.p * self.p
    }
}

/// Draws `n` i.i.d. symbols with both quadratures N(0, va).
pub fn draw_symbols(n: usize, va: f64, rng: &mut SimRng) -> Result<Vec<QuantumSymbol>, TxError> {
    if n == 0 {
        return Err(TxError::InvalidArgument("n must be >= 1"));
    }
    if !(va >= 0.0) || !va.is_finite() {
        return Err(TxError::InvalidArgument("va must be >= 0"));
    }
    let sd = va.sqrt();
    Ok((0..n)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            let p: f64 = StandardNormal.sample(rng);
            QuantumSymbol { x: sd * x, p: sd * p }
        })
        .collect())
}

/// The cyclic pseudo-random pattern Alice loads into the modulator.
#[derive(Debug, Clone, PartialEq)]
pub struct AlicePattern {
    pub symbols: Vec<QuantumSymbol>,
}

impl AlicePattern {
    pub fn generate(period: usize, va: f64, rng: &mut SimRng) -> Result<Self, TxError> {
        Ok(Self {
            symbols: draw_symbols(period, va, rng)?,
        })
    }

    pub fn period(&self) -> usize {
        self.symbols.len()
    }

    /// `n` consecutive symbols of the repeating pattern starting at `start`.
    pub fn cyclic(&self, start: usize, n: usize) -> Vec<QuantumSymbol> {
        let period = self.period();
        (0..n).map(|i| self.symbols[(start + i) % period]).collect()
    }

    pub fn as_complex(&self) -> Vec<Complex64> {
        self.symbols.iter().map(|s| s.to_complex()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Slot {
    Quantum(QuantumSymbol),
    Reference(Sign),
}

/// Slot tags without payload; this is what Bob knows about the frame a priori.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotTag {
    Quantum,
    Reference(Sign),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLayout {
    pub tags: Vec<SlotTag>,
}

impl FrameLayout {
    /// Q,R,Q,R,… with reference signs +,−,+,−,…
    pub fn interleaved(n_quantum: usize) -> Self {
        let mut tags = Vec::with_capacity(2 * n_quantum);
        for i in 0..n_quantum {
            tags.push(SlotTag::Quantum);
            let sign = if i % 2 == 0 { Sign::Plus } else { Sign::Minus };
            tags.push(SlotTag::Reference(sign));
        }
        Self { tags }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn reference_slots(&self) -> impl Iterator<Item = (usize, Sign)> + '_ {
        self.tags.iter().enumerate().filter_map(|(i, t)| match t {
            SlotTag::Reference(s) => Some((i, *s)),
            SlotTag::Quantum => None,
        })
    }

    pub fn quantum_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.tags
            .iter()
            .enumerate()
            .filter_map(|(i, t)| matches!(t, SlotTag::Quantum).then_some(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub slots: Vec<Slot>,
    /// Modulus of the reference quadrature amplitude, SNU.
    pub ref_amplitude: f64,
    pub pattern_period: usize,
    pub rho: f64,
}

impl SymbolFrame {
    pub fn layout(&self) -> FrameLayout {
        FrameLayout {
            tags: self
                .slots
                .iter()
                .map(|s| match s {
                    Slot::Quantum(_) => SlotTag::Quantum,
                    Slot::Reference(sign) => SlotTag::Reference(*sign),
                })
                .collect(),
        }
    }

    pub fn quantum_symbols(&self) -> impl Iterator<Item = QuantumSymbol> + '_ {
        self.slots.iter().filter_map(|s| match s {
            Slot::Quantum(q) => Some(*q),
            Slot::Reference(_) => None,
        })
    }

    pub fn quantum_count(&self) -> usize {
        self.quantum_symbols().count()
    }

    /// Complex quadrature amplitude of every slot. References sit on the real axis.
    pub fn fields(&self) -> Vec<Complex64> {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Quantum(q) => q.to_complex(),
                Slot::Reference(sign) => Complex64::new(sign.value() * self.ref_amplitude, 0.0),
            })
            .collect()
    }

    /// Sum of the mean photon numbers of all slots.
    pub fn total_mean_photons(&self) -> f64 {
        self.fields().iter().map(|z| z.norm_sqr() / 4.0).sum()
    }

    /// Writes `slot_index,tag,x,p` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "slot_index,tag,x,p")?;
        for (i, (slot, z)) in self.slots.iter().zip(self.fields()).enumerate() {
            let tag = match slot {
                Slot::Quantum(_) => "Q",
                Slot::Reference(_) => "R",
            };
            writeln!(w, "{i},{tag},{},{}", z.re, z.im)?;
        }
        Ok(())
    }
}

/// Interleaves quantum symbols with alternating-sign references.
///
/// The reference amplitude is set so that the reference mean photon number is
/// `rho` times the mean photon number of the supplied quantum symbols.
pub fn build_frame(symbols: &[QuantumSymbol], rho: f64, pattern_period: usize) -> Result<SymbolFrame, TxError> {
    if symbols.is_empty() {
        return Err(TxError::EmptySymbols);
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(TxError::InvalidArgument("rho must be > 0"));
    }
    let mean_intensity = symbols.iter().map(|s| s.intensity()).sum::<f64>() / symbols.len() as f64;
    let ref_amplitude = (rho * mean_intensity).sqrt();
    let mut slots = Vec::with_capacity(2 * symbols.len());
    for (i, s) in symbols.iter().enumerate() {
        slots.push(Slot::Quantum(*s));
        let sign = if i % 2 == 0 { Sign::Plus } else { Sign::Minus };
        slots.push(Slot::Reference(sign));
    }
    Ok(SymbolFrame {
        slots,
        ref_amplitude,
        pattern_period,
        rho,
    })
}

/// Extinction-ratio and bias parameters of the transmitter PIC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqModulatorModel {
    pub er_top: f64,
    pub er_bottom: f64,
    pub phase_bias_error: f64,
    pub er_carver: f64,
    pub er_voa_max: f64,
}

impl Default for IqModulatorModel {
    fn default() -> Self {
        Self {
            er_top: 25.0,
            er_bottom: 22.0,
            phase_bias_error: 0.0,
            er_carver: 28.5,
            er_voa_max: 33.0,
        }
    }
}

impl IqModulatorModel {
    /// Infinite extinction ratios and an exact π/2 offset.
    pub fn ideal() -> Self {
        Self {
            er_top: f64::INFINITY,
            er_bottom: f64::INFINITY,
            phase_bias_error: 0.0,
            er_carver: f64::INFINITY,
            er_voa_max: f64::INFINITY,
        }
    }

    pub fn from_params(p: &crate::params::SystemParams) -> Self {
        Self {
            er_top: p.er_top,
            er_bottom: p.er_bottom,
            phase_bias_error: p.phase_bias_error,
            er_carver: p.er_carver,
            er_voa_max: p.er_voa_max,
        }
    }

    /// Field amplitude left in the carver's off state, 10^(−ER/20).
    pub fn carver_leakage(&self) -> f64 {
        10f64.powf(-self.er_carver / 20.0)
    }
}

/// Arm field imbalance `r` such that ER = 20·log10((1+r)/(1−r)).
pub fn field_imbalance(er_db: f64) -> f64 {
    if er_db.is_infinite() {
        return 1.0;
    }
    let q = 10f64.powf(er_db / 20.0);
    (q - 1.0) / (q + 1.0)
}

/// Field transmittance of a push-pull MZI at interferometer phase `phase`
/// (0 is constructive), normalized so the peak power transmission is 1.
///
/// `(e^{iφ/2} + r·e^{−iφ/2}) / (1 + r)` has the same power response as the
/// single-arm form `(1 + r·e^{iφ}) / (1 + r)` but no drive-dependent chirp.
pub fn mzi_transfer(phase: f64, er_db: f64) -> Complex64 {
    let r = field_imbalance(er_db);
    let half = Complex64::from_polar(1.0, phase / 2.0);
    (half + r * half.conj()) / (1.0 + r)
}

/// Drive of each nested MZI, measured from its null point, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drives {
    pub i: f64,
    pub q: f64,
}

/// IQ modulator with its output scaled to SNU quadrature amplitudes.
///
/// At the ideal point the output is `full_scale·(sin(d_I/2) + i·sin(d_Q/2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqModulator {
    pub model: IqModulatorModel,
    pub full_scale: f64,
}

impl IqModulator {
    pub fn new(model: IqModulatorModel, full_scale: f64) -> Self {
        Self { model, full_scale }
    }

    /// Sizes the full scale as `headroom` standard deviations of an N(0, va) constellation.
    pub fn for_variance(model: IqModulatorModel, va: f64, headroom: f64) -> Self {
        Self::new(model, headroom * va.sqrt())
    }

    fn arm(drive: f64, er_db: f64) -> Complex64 {
        mzi_transfer(PI - drive, er_db)
    }

    fn arm_derivative(drive: f64, er_db: f64) -> Complex64 {
        // arm(d) = sin(d/2) + i·ε·cos(d/2) with ε = (1 − r)/(1 + r)
        let r = field_imbalance(er_db);
        let eps = (1.0 - r) / (1.0 + r);
        Complex64::new(0.5 * (drive / 2.0).cos(), -0.5 * eps * (drive / 2.0).sin())
    }

    fn q_rotation(&self) -> Complex64 {
        Complex64::from_polar(1.0, FRAC_PI_2 + self.model.phase_bias_error)
    }

    /// Output field, SNU, for explicit drives.
    pub fn output(&self, drives: Drives) -> Complex64 {
        let top = Self::arm(drives.i, self.model.er_top);
        let bottom = Self::arm(drives.q, self.model.er_bottom);
        self.full_scale * (top + self.q_rotation() * bottom)
    }

    /// Uncompensated drives: linear in the target, matched to the small-signal slope.
    pub fn linear_drives(&self, target: QuantumSymbol) -> Result<Drives, TxError> {
        let limit = PI * self.full_scale / 2.0;
        for v in [target.x, target.p] {
            if v.abs() > limit {
                return Err(TxError::OutOfRange { value: v, limit });
            }
        }
        Ok(Drives {
            i: 2.0 * target.x / self.full_scale,
            q: 2.0 * target.p / self.full_scale,
        })
    }

    /// Closed-form arcsine inversion, exact for the ideal model.
    pub fn ideal_drives(&self, target: QuantumSymbol) -> Result<Drives, TxError> {
        for v in [target.x, target.p] {
            if v.abs() > self.full_scale {
                return Err(TxError::OutOfRange {
                    value: v,
                    limit: self.full_scale,
                });
            }
        }
        Ok(Drives {
            i: 2.0 * (target.x / self.full_scale).asin(),
            q: 2.0 * (target.p / self.full_scale).asin(),
        })
    }

    /// Modulates a target with uncompensated (linear) drives.
    pub fn iq_modulate(&self, target: QuantumSymbol) -> Result<Complex64, TxError> {
        Ok(self.output(self.linear_drives(target)?))
    }

    /// Newton inversion of the full transfer, seeded by the arcsine solution.
    fn invert(&self, target: Complex64, index: usize) -> Result<Drives, TxError> {
        let seed_target = QuantumSymbol {
            x: target.re.clamp(-0.999 * self.full_scale, 0.999 * self.full_scale),
            p: target.im.clamp(-0.999 * self.full_scale, 0.999 * self.full_scale),
        };
        let mut d = self.ideal_drives(seed_target)?;
        let tol = 1e-13 * self.full_scale.max(1.0);
        let rot = self.q_rotation();
        for _ in 0..60 {
            let f = self.output(d) - target;
            if f.norm() <= tol {
                return Ok(d);
            }
            let ji = self.full_scale * Self::arm_derivative(d.i, self.model.er_top);
            let jq = self.full_scale * rot * Self::arm_derivative(d.q, self.model.er_bottom);
            // 2×2 real system [ji jq]·δ = −f
            let det = ji.re * jq.im - jq.re * ji.im;
            if det.abs() < 1e-14 * self.full_scale * self.full_scale {
                return Err(TxError::Unreachable { index });
            }
            let di = (-f.re * jq.im + f.im * jq.re) / det;
            let dq = (-ji.re * f.im + ji.im * f.re) / det;
            d.i += di;
            d.q += dq;
            if d.i.abs() > PI || d.q.abs() > PI {
                return Err(TxError::Unreachable { index });
            }
        }
        if (self.output(d) - target).norm() <= 1e3 * tol {
            Ok(d)
        } else {
            Err(TxError::Unreachable { index })
        }
    }

    /// Drives that make [`IqModulator::output`] reproduce each target.
    pub fn predistort(&self, targets: &[QuantumSymbol]) -> Result<Vec<Drives>, TxError> {
        targets
            .iter()
            .enumerate()
            .map(|(i, t)| self.invert(t.to_complex(), i))
            .collect()
    }
}

/// Estimates V_A from the average power on the monitor tap.
///
/// The meter reading `tap·P` is divided back by the tap fraction, then the
/// reference share is removed using the known ratio ρ: each Q/R pair carries
/// `(1 + ρ)·⟨n⟩` photons on average.
pub fn estimate_va_powermeter(frame: &SymbolFrame, tap_fraction: f64) -> Result<f64, TxError> {
    if !(tap_fraction > 0.0 && tap_fraction < 1.0) {
        return Err(TxError::InvalidArgument("tap_fraction out of (0,1)"));
    }
    let n_q = frame.quantum_count();
    if n_q == 0 {
        return Err(TxError::NoQuantumSlots);
    }
    let tap_photons = tap_fraction * frame.total_mean_photons();
    let mean_photons = tap_photons / tap_fraction / (n_q as f64 * (1.0 + frame.rho));
    Ok(2.0 * mean_photons)
}

/// VOA setting that brings `launch_mean_photons` down to the target V_A.
pub fn voa_attenuation_db(launch_mean_photons: f64, target_va: f64, model: &IqModulatorModel) -> Result<f64, TxError> {
    let target = crate::params::mean_photon_number(target_va);
    if !(launch_mean_photons > 0.0) || !(target > 0.0) {
        return Err(TxError::InvalidArgument("photon numbers must be > 0"));
    }
    let required_db = 10.0 * (launch_mean_photons / target).log10();
    if required_db < 0.0 || required_db > model.er_voa_max {
        return Err(TxError::VoaRange {
            required_db,
            max_db: model.er_voa_max,
        });
    }
    Ok(required_db)
}
