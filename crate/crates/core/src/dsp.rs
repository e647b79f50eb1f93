//! Bob's offline DSP: downsampling, SNU normalization, reference-aided phase
//! recovery, phase correction with reference removal, and cross-correlation
//! pattern synchronization.

use crate::link::AcquiredTrace;
use crate::tx::{FrameLayout, SlotTag};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DspError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace length {len} is not a multiple of {sps} samples per symbol")]
    RaggedTrace { len: usize, sps: usize },
    #[error("slot count {got} does not match the frame layout ({expected})")]
    LayoutMismatch { got: usize, expected: usize },
    #[error("calibration record is empty or degenerate")]
    DegenerateCalibration,
    #[error("record is already in shot-noise units")]
    AlreadyNormalized,
    #[error("no reference above the amplitude floor")]
    NoValidReferences,
    #[error("Bob's sequence ({bob}) is shorter than the pattern ({pattern})")]
    TooShort { bob: usize, pattern: usize },
    #[error("synchronization failed: peak/side-lobe ratio {ratio:.3} below {threshold}")]
    SyncFailure { ratio: f64, threshold: f64 },
}

/// Symbol-rate values picked from an oversampled trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Downsampled {
    /// Chosen sampling phase within each slot.
    pub phase: usize,
    pub slots: Vec<Complex64>,
}

/// Energy of the sub-sequence at every sampling phase.
pub fn phase_energies(trace: &AcquiredTrace) -> Result<Vec<f64>, DspError> {
    let sps = trace.samples_per_symbol;
    if trace.is_empty() {
        return Err(DspError::EmptyTrace);
    }
    if sps == 0 || !trace.len().is_multiple_of(sps) {
        return Err(DspError::RaggedTrace { len: trace.len(), sps });
    }
    let mut energy = vec![0.0; sps];
    for (i, (x, p)) in trace.x.iter().zip(&trace.p).enumerate() {
        energy[i % sps] += x * x + p * p;
    }
    Ok(energy)
}

/// Keeps one sample per slot at the phase of maximal energy (smallest index on ties).
pub fn downsample(trace: &AcquiredTrace) -> Result<Downsampled, DspError> {
    let energy = phase_energies(trace)?;
    let mut phase = 0;
    for (k, &e) in energy.iter().enumerate() {
        if e > energy[phase] {
            phase = k;
        }
    }
    Ok(Downsampled {
        phase,
        slots: downsample_at(trace, phase),
    })
}

/// Samples a trace at a fixed phase, e.g. a calibration record at the data phase.
pub fn downsample_at(trace: &AcquiredTrace, phase: usize) -> Vec<Complex64> {
    let sps = trace.samples_per_symbol;
    (phase..trace.len()).step_by(sps).map(|i| trace.sample(i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Raw,
    Snu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub values: Vec<Complex64>,
    pub units: Units,
}

impl SlotRecord {
    pub fn raw(values: Vec<Complex64>) -> Self {
        Self {
            values,
            units: Units::Raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Multiplier from raw units to √SNU.
    pub scale: f64,
    /// Estimated σ₀² = v_elec + 1 in SNU.
    pub sigma2_0_hat: f64,
    pub v_elec_hat: f64,
    /// Number of calibration symbols, m'.
    pub m_calib: usize,
}

fn mean_square_per_quadrature(record: &[Complex64]) -> f64 {
    record.iter().map(|z| z.norm_sqr()).sum::<f64>() / (2 * record.len()) as f64
}

/// Rescales a raw record so that pure vacuum noise has unit variance.
///
/// `shot` holds vacuum plus electronic noise, `elec` electronic noise alone.
pub fn normalize_snu(
    raw: &SlotRecord,
    shot: &[Complex64],
    elec: &[Complex64],
) -> Result<(SlotRecord, Calibration), DspError> {
    if raw.units == Units::Snu {
        return Err(DspError::AlreadyNormalized);
    }
    if shot.is_empty() || elec.is_empty() {
        return Err(DspError::DegenerateCalibration);
    }
    let v_shot = mean_square_per_quadrature(shot);
    let v_elec = mean_square_per_quadrature(elec);
    let vacuum = v_shot - v_elec;
    if !(v_shot > 0.0) || !(vacuum > 0.0) {
        return Err(DspError::DegenerateCalibration);
    }
    let scale = 1.0 / vacuum.sqrt();
    let values = raw.values.iter().map(|z| z * scale).collect();
    Ok((
        SlotRecord {
            values,
            units: Units::Snu,
        },
        Calibration {
            scale,
            sigma2_0_hat: v_shot / vacuum,
            v_elec_hat: v_elec / vacuum,
            m_calib: shot.len(),
        },
    ))
}

/// How reference phases are carried over to the quantum slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseInterpolation {
    /// Straight line between neighbouring references.
    Linear,
    /// Moving average over `half_window` references each side, then linear.
    Smoothed { half_window: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRecoveryConfig {
    pub interpolation: PhaseInterpolation,
    /// References weaker than this fraction of the median reference amplitude are flagged.
    pub amplitude_floor: f64,
}

impl Default for PhaseRecoveryConfig {
    fn default() -> Self {
        Self {
            interpolation: PhaseInterpolation::Linear,
            amplitude_floor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrack {
    /// Estimated phase of every slot.
    pub per_slot: Vec<f64>,
    /// Unwrapped phase at each reference slot, in reference order.
    pub reference_phases: Vec<f64>,
    /// Slot indices of references below the amplitude floor.
    pub flagged: Vec<usize>,
    /// Largest step between consecutive unwrapped reference phases.
    pub max_step: f64,
}

impl PhaseTrack {
    /// Steps close to π make the unwrap ambiguous.
    pub fn wrap_risk(&self) -> bool {
        self.max_step > PI / 2.0
    }
}

fn wrap(phi: f64) -> f64 {
    let mut w = phi % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Estimates the channel phase from the known-sign references.
pub fn recover_phase(
    slots: &[Complex64],
    layout: &FrameLayout,
    config: &PhaseRecoveryConfig,
) -> Result<PhaseTrack, DspError> {
    if slots.len() != layout.len() {
        return Err(DspError::LayoutMismatch {
            got: slots.len(),
            expected: layout.len(),
        });
    }
    let refs: Vec<(usize, Complex64)> = layout
        .reference_slots()
        .map(|(i, sign)| (i, slots[i] * sign.value()))
        .collect();
    if refs.is_empty() {
        return Err(DspError::NoValidReferences);
    }
    let mut amps: Vec<f64> = refs.iter().map(|(_, z)| z.norm()).collect();
    amps.sort_by(f64::total_cmp);
    let floor = config.amplitude_floor * amps[amps.len() / 2];

    let mut flagged = Vec::new();
    let mut positions = Vec::with_capacity(refs.len());
    let mut phases = Vec::with_capacity(refs.len());
    for &(i, z) in &refs {
        if z.norm() < floor || z.norm() == 0.0 {
            flagged.push(i);
            continue;
        }
        let raw = z.arg();
        let unwrapped = match phases.last() {
            Some(&prev) => prev + wrap(raw - prev),
            None => raw,
        };
        positions.push(i as f64);
        phases.push(unwrapped);
    }
    if phases.is_empty() {
        return Err(DspError::NoValidReferences);
    }
    let max_step = phases.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);

    if let PhaseInterpolation::Smoothed { half_window } = config.interpolation {
        phases = moving_average(&phases, half_window);
    }

    let per_slot = interpolate(&positions, &phases, slots.len());
    Ok(PhaseTrack {
        per_slot,
        reference_phases: phases,
        flagged,
        max_step,
    })
}

fn moving_average(values: &[f64], half_window: usize) -> Vec<f64> {
    if half_window == 0 {
        return values.to_vec();
    }
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half_window);
            let hi = (i + half_window + 1).min(values.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Piecewise-linear interpolation, extrapolating the end segments.
fn interpolate(positions: &[f64], values: &[f64], n: usize) -> Vec<f64> {
    if positions.len() == 1 {
        return vec![values[0]; n];
    }
    let last = positions.len() - 1;
    let mut seg = 0;
    (0..n)
        .map(|i| {
            let x = i as f64;
            while seg + 1 < last && x > positions[seg + 1] {
                seg += 1;
            }
            let (x0, x1) = (positions[seg], positions[seg + 1]);
            let (y0, y1) = (values[seg], values[seg + 1]);
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        })
        .collect()
}

/// Derotates every slot and keeps only the quantum ones.
pub fn correct_and_strip(slots: &[Complex64], layout: &FrameLayout, track: &PhaseTrack) -> Vec<Complex64> {
    layout
        .tags
        .iter()
        .zip(slots)
        .zip(&track.per_slot)
        .filter(|((tag, _), _)| matches!(tag, SlotTag::Quantum))
        .map(|((_, z), &phi)| z * Complex64::from_polar(1.0, -phi))
        .collect()
}

/// Derotates all slots, references included (constellation dumps).
pub fn correct_all(slots: &[Complex64], track: &PhaseTrack) -> Vec<Complex64> {
    slots
        .iter()
        .zip(&track.per_slot)
        .map(|(z, &phi)| z * Complex64::from_polar(1.0, -phi))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncResult {
    /// Bob's symbol `i` corresponds to pattern index `(i + offset) mod period`.
    pub offset: usize,
    pub peak: f64,
    /// Peak over the largest other lag.
    pub sidelobe_ratio: f64,
}

/// Circular cross-correlation magnitude `|Σ_i bob[i]·conj(pattern[(i+k) mod P])|` for every lag k.
pub fn correlation_profile(pattern: &[Complex64], bob: &[Complex64]) -> Vec<f64> {
    let period = pattern.len();
    let mut folded = vec![Complex64::new(0.0, 0.0); period];
    for (i, z) in bob.iter().enumerate() {
        folded[i % period] += z;
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(period);
    let inv = planner.plan_fft_inverse(period);
    let mut fp = pattern.to_vec();
    fwd.process(&mut fp);
    fwd.process(&mut folded);
    // r[k] = Σ_j P[j+k]·conj(B[j]) has spectrum F_P·conj(F_B)
    let mut cross: Vec<Complex64> = fp.iter().zip(&folded).map(|(a, b)| a * b.conj()).collect();
    inv.process(&mut cross);
    cross.iter().map(|z| z.norm() / period as f64).collect()
}

/// Finds the pattern offset of Bob's sequence.
pub fn synchronize(pattern: &[Complex64], bob: &[Complex64], threshold: f64) -> Result<SyncResult, DspError> {
    if bob.len() < pattern.len() || pattern.len() < 2 {
        return Err(DspError::TooShort {
            bob: bob.len(),
            pattern: pattern.len(),
        });
    }
    let profile = correlation_profile(pattern, bob);
    let mut best = 0;
    for (k, &v) in profile.iter().enumerate() {
        if v > profile[best] {
            best = k;
        }
    }
    let side = profile
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != best)
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    let peak = profile[best];
    let ratio = if side > 0.0 { peak / side } else { f64::INFINITY };
    if !(ratio >= threshold) {
        return Err(DspError::SyncFailure { ratio, threshold });
    }
    Ok(SyncResult {
        offset: best,
        peak,
        sidelobe_ratio: ratio,
    })
}

/// Aligned symbol pairs after synchronization, both in SNU.
#[derive(Debug, Clone, PartialEq)]
pub struct DspResult {
    pub alice_symbols: Vec<Complex64>,
    pub bob_symbols: Vec<Complex64>,
    pub offset: usize,
    pub phase_track: Vec<f64>,
    pub sampling_phase: Option<usize>,
    pub calibration: Calibration,
    pub flagged_references: usize,
}

/// Alice's pattern values matching each of Bob's symbols.
pub fn align(pattern: &[Complex64], bob: &[Complex64], offset: usize) -> Vec<Complex64> {
    let period = pattern.len();
    (0..bob.len()).map(|i| pattern[(i + offset) % period]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DspConfig {
    pub phase: PhaseRecoveryConfig,
    pub sync_threshold: f64,
}

/// Intermediate constellations, kept for plotting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageDump {
    pub downsampled: Vec<Complex64>,
    pub corrected: Vec<Complex64>,
    pub quantum: Vec<Complex64>,
}

/// Runs normalization, phase recovery, reference removal and synchronization
/// on symbol-rate raw values.
pub fn process_slots(
    raw: SlotRecord,
    shot: &[Complex64],
    elec: &[Complex64],
    layout: &FrameLayout,
    pattern: &[Complex64],
    config: &DspConfig,
    dump: Option<&mut StageDump>,
) -> Result<DspResult, DspError> {
    let (snu, calibration) = normalize_snu(&raw, shot, elec)?;
    let track = recover_phase(&snu.values, layout, &config.phase)?;
    let quantum = correct_and_strip(&snu.values, layout, &track);
    let sync = synchronize(pattern, &quantum, config.sync_threshold)?;
    if let Some(d) = dump {
        d.downsampled = snu.values.clone();
        d.corrected = correct_all(&snu.values, &track);
        d.quantum = quantum.clone();
    }
    Ok(DspResult {
        alice_symbols: align(pattern, &quantum, sync.offset),
        bob_symbols: quantum,
        offset: sync.offset,
        phase_track: track.per_slot,
        sampling_phase: None,
        calibration,
        flagged_references: track.flagged.len(),
    })
}

/// The full chain starting from an oscilloscope trace.
pub fn process_trace(
    trace: &AcquiredTrace,
    shot: &AcquiredTrace,
    elec: &AcquiredTrace,
    layout: &FrameLayout,
    pattern: &[Complex64],
    config: &DspConfig,
    dump: Option<&mut StageDump>,
) -> Result<DspResult, DspError> {
    let ds = downsample(trace)?;
    let shot = downsample_at(shot, ds.phase);
    let elec = downsample_at(elec, ds.phase);
    let mut result = process_slots(SlotRecord::raw(ds.slots), &shot, &elec, layout, pattern, config, dump)?;
    result.sampling_phase = Some(ds.phase);
    Ok(result)
}

/// Writes `slot_index,tag,x,p` rows; `tags` may be shorter than `values` (quantum-only dumps).
pub fn write_constellation_csv<W: Write>(
    mut w: W,
    values: &[Complex64],
    layout: Option<&FrameLayout>,
) -> io::Result<()> {
    writeln!(w, "slot_index,tag,x,p")?;
    for (i, z) in values.iter().enumerate() {
        let tag = match layout.map(|l| l.tags[i]) {
            Some(SlotTag::Reference(_)) => "R",
            _ => "Q",
        };
        writeln!(w, "{i},{tag},{},{}", z.re, z.im)?;
    }
    Ok(())
}
