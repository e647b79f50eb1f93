//! Fiber channel and heterodyne receiver.
//!
//! States are tracked semiclassically: each slot is a complex quadrature mean
//! plus Gaussian noise. The channel scales means by √T, rotates them by a
//! Wiener phase walk and adds excess noise referred to Alice's output. The
//! receiver scales by √(η/2) (efficiency and the 90° hybrid split) and adds
//! shot plus electronic noise, `1 + v_elec` per quadrature.
//!
//! Two measurement fidelities exist. [`measure_slots`] draws one noisy value
//! per slot directly. [`synthesize_trace`] renders an oversampled,
//! low-pass-filtered oscilloscope record whose peak sample per slot has the
//! same statistics.

use crate::params::SystemParams;
use crate::rng::SimRng;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinkError {
    #[error("pulse support {support_s:e} s exceeds the slot duration {slot_s:e} s")]
    PulseTooWide { support_s: f64, slot_s: f64 },
    #[error("samples_per_symbol must be >= 4, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub t_channel: f64,
    pub linewidth_total: f64,
    /// Excess noise at Alice's output, SNU per quadrature.
    pub xi_alice: f64,
    pub slot_duration: f64,
}

impl ChannelModel {
    pub fn from_params(p: &SystemParams) -> Self {
        Self {
            t_channel: p.t_channel,
            linewidth_total: p.linewidth_total,
            xi_alice: 2.0 * p.xi_bq / (p.eta * p.t_channel),
            slot_duration: p.slot_duration(),
        }
    }

    /// Standard deviation of the per-slot phase increment, √(2π·Δν·τ).
    pub fn phase_step_std(&self) -> f64 {
        (2.0 * PI * self.linewidth_total * self.slot_duration).sqrt()
    }
}

/// Channel output together with the true phase of every slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagated {
    pub fields: Vec<Complex64>,
    pub phases: Vec<f64>,
}

fn complex_normal(rng: &mut SimRng, sd: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(sd * re, sd * im)
}

/// Sends slot fields through the channel. The walk starts at `initial_phase`.
pub fn propagate(fields: &[Complex64], channel: &ChannelModel, initial_phase: f64, rng: &mut SimRng) -> Propagated {
    let amp = channel.t_channel.sqrt();
    let step = channel.phase_step_std();
    let noise_sd = (channel.t_channel * channel.xi_alice).sqrt();
    let mut phase = initial_phase;
    let mut out = Vec::with_capacity(fields.len());
    let mut phases = Vec::with_capacity(fields.len());
    for (k, &f) in fields.iter().enumerate() {
        if k > 0 && step > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            phase += step * z;
        }
        let mut z = amp * Complex64::from_polar(1.0, phase) * f;
        if noise_sd > 0.0 {
            z += complex_normal(rng, noise_sd);
        }
        out.push(z);
        phases.push(phase);
    }
    Propagated { fields: out, phases }
}

/// Draws a uniform initial phase in (−π, π].
pub fn random_phase(rng: &mut SimRng) -> f64 {
    PI - 2.0 * PI * rng.random::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    pub eta: f64,
    pub v_elec: f64,
    pub samples_per_symbol: usize,
    /// Low-pass bandwidth, Hz; infinite disables the filter.
    pub filter_bw: f64,
    pub sample_rate: f64,
    /// ADC conversion gain, raw units per √SNU.
    pub gain: f64,
}

impl DetectorModel {
    pub fn from_params(p: &SystemParams) -> Self {
        Self {
            eta: p.eta,
            v_elec: p.v_elec,
            samples_per_symbol: p.samples_per_symbol,
            filter_bw: p.filter_bw,
            sample_rate: p.sample_rate(),
            gain: p.adc_gain,
        }
    }

    /// Mean of the measured quadratures for an incoming slot field.
    pub fn detected_mean(&self, field: Complex64) -> Complex64 {
        (self.eta / 2.0).sqrt() * field
    }

    /// Shot plus electronic noise variance per quadrature.
    pub fn noise_variance(&self) -> f64 {
        1.0 + self.v_elec
    }
}

/// One heterodyne measurement in SNU.
pub fn heterodyne_measure(field: Complex64, detector: &DetectorModel, rng: &mut SimRng) -> Complex64 {
    detector.detected_mean(field) + complex_normal(rng, detector.noise_variance().sqrt())
}

/// Slot-level acquisition: one raw (gain-scaled) value per slot.
pub fn measure_slots(fields: &[Complex64], detector: &DetectorModel, rng: &mut SimRng) -> Vec<Complex64> {
    fields
        .iter()
        .map(|&f| detector.gain * heterodyne_measure(f, detector, rng))
        .collect()
}

/// Which noise sources are present in a calibration record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationKind {
    /// LO on, signal off: vacuum plus electronic noise.
    Shot,
    /// LO off: electronic noise only.
    Electronic,
}

impl CalibrationKind {
    fn variance(self, detector: &DetectorModel) -> f64 {
        match self {
            CalibrationKind::Shot => 1.0 + detector.v_elec,
            CalibrationKind::Electronic => detector.v_elec,
        }
    }
}

/// Slot-level calibration record in raw units.
pub fn calibration_slots(
    kind: CalibrationKind,
    detector: &DetectorModel,
    n_slots: usize,
    rng: &mut SimRng,
) -> Vec<Complex64> {
    let sd = detector.gain * kind.variance(detector).sqrt();
    (0..n_slots).map(|_| complex_normal(rng, sd)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    /// Full width at half maximum, seconds.
    pub width: f64,
    /// Field amplitude leaking through the carver between pulses.
    pub carver_leakage: f64,
}

/// Oversampled dual-quadrature receiver record in raw ADC units.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquiredTrace {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub sample_rate: f64,
    pub samples_per_symbol: usize,
    pub gain: f64,
}

impl AcquiredTrace {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn sample(&self, i: usize) -> Complex64 {
        Complex64::new(self.x[i], self.p[i])
    }

    /// CSV with `#` header lines carrying the calibration constants.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# sample_rate_hz={}", self.sample_rate)?;
        writeln!(w, "# samples_per_symbol={}", self.samples_per_symbol)?;
        writeln!(w, "# adc_gain_per_sqrt_snu={}", self.gain)?;
        writeln!(w, "sample_index,x,p")?;
        for i in 0..self.len() {
            writeln!(w, "{i},{},{}", self.x[i], self.p[i])?;
        }
        Ok(())
    }
}

/// Precomputed per-slot pulse template and filter constants.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEnd {
    template: Vec<f64>,
    alpha: f64,
    /// Sample index within a slot where the filtered pulse peaks.
    pub peak_index: usize,
    pub detector: DetectorModel,
}

fn filter_coefficient(detector: &DetectorModel) -> f64 {
    if detector.filter_bw.is_infinite() {
        1.0
    } else {
        1.0 - (-2.0 * PI * detector.filter_bw / detector.sample_rate).exp()
    }
}

fn raised_cosine(tau: f64, fwhm: f64) -> f64 {
    if tau.abs() >= fwhm {
        0.0
    } else {
        (PI * tau / (2.0 * fwhm)).cos().powi(2)
    }
}

impl FrontEnd {
    pub fn new(detector: DetectorModel, pulse: PulseShape) -> Result<Self, LinkError> {
        let sps = detector.samples_per_symbol;
        if sps < 4 {
            return Err(LinkError::TooFewSamples(sps));
        }
        let dt = 1.0 / detector.sample_rate;
        let slot = sps as f64 * dt;
        if 2.0 * pulse.width > slot {
            return Err(LinkError::PulseTooWide {
                support_s: 2.0 * pulse.width,
                slot_s: slot,
            });
        }
        let alpha = filter_coefficient(&detector);
        let center = (sps / 2) as f64;
        let leak = pulse.carver_leakage.clamp(0.0, 1.0);

        let render = |shift: f64| -> Vec<f64> {
            (0..sps)
                .map(|k| {
                    let tau = (k as f64 - center + shift) * dt;
                    leak + (1.0 - leak) * raised_cosine(tau, pulse.width)
                })
                .collect()
        };
        // filtered response of one isolated slot, including its tail into the next
        let respond = |tmpl: &[f64]| -> Vec<f64> {
            let mut y = 0.0;
            let mut out = Vec::with_capacity(2 * sps);
            for x in tmpl.iter().copied().chain(std::iter::repeat_n(0.0, sps)) {
                y += alpha * (x - y);
                out.push(y);
            }
            out
        };
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .fold((0, f64::MIN), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        };

        // shift the pulse earlier by the filter group delay so the filtered peak lands at the center
        let (p0, _) = argmax(&respond(&render(0.0)));
        let shift = p0 as f64 - center;
        let template = render(shift);
        let (peak_index, peak) = argmax(&respond(&template));
        let template = template.into_iter().map(|v| v / peak).collect();
        Ok(Self {
            template,
            alpha,
            peak_index: peak_index % sps,
            detector,
        })
    }

    fn render(&self, means: &[Complex64], noise_var: f64, rng: &mut SimRng) -> AcquiredTrace {
        let sps = self.detector.samples_per_symbol;
        let n = means.len() * sps;
        let gain = self.detector.gain;
        // white-noise level before the filter that yields `noise_var` after it
        let white_sd = (noise_var * (2.0 - self.alpha) / self.alpha).sqrt();
        let stationary_sd = noise_var.sqrt();
        let (zx, zp): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
        let mut yx = stationary_sd * zx;
        let mut yp = stationary_sd * zp;
        let mut x = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        for m in means {
            for &env in &self.template {
                let nx: f64 = StandardNormal.sample(rng);
                let np: f64 = StandardNormal.sample(rng);
                yx += self.alpha * (m.re * env + white_sd * nx - yx);
                yp += self.alpha * (m.im * env + white_sd * np - yp);
                x.push(gain * yx);
                p.push(gain * yp);
            }
        }
        AcquiredTrace {
            x,
            p,
            sample_rate: self.detector.sample_rate,
            samples_per_symbol: sps,
            gain,
        }
    }

    /// Renders slot fields arriving at the receiver as an oscilloscope trace.
    pub fn synthesize(&self, fields: &[Complex64], rng: &mut SimRng) -> AcquiredTrace {
        let means: Vec<Complex64> = fields.iter().map(|&f| self.detector.detected_mean(f)).collect();
        self.render(&means, self.detector.noise_variance(), rng)
    }

    /// Signal-off record for the SNU calibration.
    pub fn calibration_trace(&self, kind: CalibrationKind, n_slots: usize, rng: &mut SimRng) -> AcquiredTrace {
        let zeros = vec![Complex64::new(0.0, 0.0); n_slots];
        self.render(&zeros, kind.variance(&self.detector), rng)
    }
}

/// Renders incoming slot fields as an oversampled acquisition.
pub fn synthesize_trace(
    fields: &[Complex64],
    detector: &DetectorModel,
    pulse: PulseShape,
    rng: &mut SimRng,
) -> Result<AcquiredTrace, LinkError> {
    Ok(FrontEnd::new(*detector, pulse)?.synthesize(fields, rng))
}

/// Vacuum plus electronic noise record with the signal switched off.
pub fn shot_calibration_trace(
    detector: &DetectorModel,
    pulse: PulseShape,
    n_slots: usize,
    rng: &mut SimRng,
) -> Result<AcquiredTrace, LinkError> {
    Ok(FrontEnd::new(*detector, pulse)?.calibration_trace(CalibrationKind::Shot, n_slots, rng))
}
