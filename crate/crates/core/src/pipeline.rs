//! End-to-end Monte-Carlo: transmitter → channel → receiver → DSP →
//! parameter estimation → key rates.
//!
//! Symbols are split into acquisitions of `acquisition_symbols` quantum
//! symbols. Each acquisition starts at a random point of Alice's cyclic
//! pattern with a random carrier phase and carries its own SNU calibration
//! records, as a single oscilloscope capture would. All randomness of an
//! acquisition comes from streams indexed by its block number, so results do
//! not depend on scheduling.

use crate::dsp::{self, Calibration, DspError, PhaseRecoveryConfig, PhaseTrack, SlotRecord};
use crate::estimation::{self, EstimationError, PointEstimates, RegressionSums, WorstCaseEstimates};
use crate::link::{self, AcquiredTrace, CalibrationKind, ChannelModel, DetectorModel, FrontEnd, LinkError, PulseShape};
use crate::params::{ConfigError, SystemParams};
use crate::rng::{stream, Domain};
use crate::security::{self, FiniteSizeInput, SecurityError, SecurityReport};
use crate::tx::{self, AlicePattern, FrameLayout, IqModulator, IqModulatorModel, SymbolFrame, TxError};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("acquisition {block}: {source}")]
    Dsp { block: usize, source: DspError },
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Security(#[from] SecurityError),
    #[error("need at least one pattern period ({period}) of symbols, got {n}")]
    TooFewSymbols { n: usize, period: usize },
}

/// Measurement fidelity of the receiver model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    /// Oversampled, filtered oscilloscope traces followed by downsampling.
    Trace,
    /// One noisy value per slot.
    Slot,
}

/// How the channel phase is removed before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    /// Reference-aided recovery, as Bob would do it.
    Estimated,
    /// Derotation by the true simulated phase (diagnostics only).
    Oracle,
    /// No correction.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub n_symbols: usize,
    pub fidelity: Fidelity,
    pub phase_mode: PhaseMode,
    /// When false the channel adds no excess noise (ξ = 0); shot and electronic noise remain.
    pub excess_noise: bool,
    pub dump_stages: bool,
}

impl SimulationOptions {
    pub fn new(n_symbols: usize) -> Self {
        Self {
            n_symbols,
            fidelity: Fidelity::Trace,
            phase_mode: PhaseMode::Estimated,
            excess_noise: true,
            dump_stages: false,
        }
    }
}

/// Intermediate data of the first acquisition, for constellation plots.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDumps {
    pub tx_frame: SymbolFrame,
    /// First slots of the oscilloscope record (trace fidelity only).
    pub trace_excerpt: Option<AcquiredTrace>,
    pub layout: FrameLayout,
    /// SNU values after downsampling.
    pub downsampled: Vec<Complex64>,
    /// All slots after phase correction.
    pub corrected: Vec<Complex64>,
    /// Quantum slots after reference removal.
    pub quantum: Vec<Complex64>,
    /// Alice's symbols aligned to `quantum`.
    pub alice: Vec<Complex64>,
    pub true_phase: Vec<f64>,
    pub phase_track: Vec<f64>,
}

/// Slots of the oscilloscope record kept in the stage dump.
pub const TRACE_EXCERPT_SLOTS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub n_symbols: usize,
    pub blocks: usize,
    /// Pairs disclosed for parameter estimation (m).
    pub pe_pairs: usize,
    pub point: PointEstimates,
    pub t_standard_error: f64,
    pub xi_standard_error: f64,
    pub va_hat: f64,
    pub sigma2_0_hat: f64,
    pub v_elec_hat: f64,
    pub m_calib: usize,
    pub worst: WorstCaseEstimates,
    pub sync_errors: usize,
    pub flagged_references: usize,
    pub sampling_phase: Option<usize>,
    pub skr_asymptotic: SecurityReport,
    /// `None` when the worst-case gain is not positive.
    pub skr_finite: Option<SecurityReport>,
    pub dumps: Option<StageDumps>,
}

impl SimulationReport {
    /// Flat `key = value` report.
    pub fn to_report_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("n_symbols", self.n_symbols.to_string());
        kv("blocks", self.blocks.to_string());
        kv("m", self.pe_pairs.to_string());
        kv("m_calib", self.m_calib.to_string());
        kv("va_hat", self.va_hat.to_string());
        kv("sigma2_0_hat", self.sigma2_0_hat.to_string());
        kv("v_elec_hat", self.v_elec_hat.to_string());
        for (k, v) in estimation::report_lines(&self.point, Some(&self.worst)) {
            if k != "pairs" {
                kv(k, v.to_string());
            }
        }
        kv("t_hat_se", self.t_standard_error.to_string());
        kv("xi_bq_hat_se", self.xi_standard_error.to_string());
        kv("sync_errors", self.sync_errors.to_string());
        kv("flagged_references", self.flagged_references.to_string());
        if let Some(k) = self.sampling_phase {
            kv("sampling_phase", k.to_string());
        }
        kv("i_ab_bits", self.skr_asymptotic.i_ab.to_string());
        kv("chi_be_bits", self.skr_asymptotic.chi_be.to_string());
        kv("skr_asym_bps", self.skr_asymptotic.skr.to_string());
        match &self.skr_finite {
            Some(r) => {
                kv("i_ab_fs_bits", r.i_ab.to_string());
                kv("chi_be_fs_bits", r.chi_be.to_string());
                kv("skr_fs_bps", r.skr.to_string());
            }
            None => kv("skr_fs_bps", "0".into()),
        }
        s
    }
}

struct BlockOutcome {
    sums: RegressionSums,
    calibration: Calibration,
    va_hat: f64,
    sync_error: bool,
    flagged: usize,
    sampling_phase: Option<usize>,
    dumps: Option<StageDumps>,
}

/// Sizes of the acquisitions; the remainder is merged into the last one.
pub fn block_sizes(n_symbols: usize, acquisition: usize) -> Vec<usize> {
    let acquisition = acquisition.max(1);
    let full = (n_symbols / acquisition).max(1);
    let mut sizes = vec![acquisition.min(n_symbols); full];
    let used: usize = sizes.iter().sum();
    if let Some(last) = sizes.last_mut() {
        *last += n_symbols - used;
    }
    sizes
}

struct Setup {
    params: SystemParams,
    pattern: AlicePattern,
    pattern_c: Vec<Complex64>,
    /// Transmitted field for each pattern index, after the modulator.
    modulated: Vec<Complex64>,
    channel: ChannelModel,
    detector: DetectorModel,
    front_end: Option<FrontEnd>,
    options: SimulationOptions,
    pe_fraction: f64,
    calib_fraction: f64,
}

impl Setup {
    fn new(params: &SystemParams, options: SimulationOptions) -> Result<Self, PipelineError> {
        params.validate()?;
        let period = params.pattern_period;
        if options.n_symbols < period {
            return Err(PipelineError::TooFewSymbols {
                n: options.n_symbols,
                period,
            });
        }
        let mut rng = stream(params.seed, Domain::Pattern, 0);
        let pattern = AlicePattern::generate(period, params.va, &mut rng)?;
        let model = IqModulatorModel::from_params(params);
        let modulator = IqModulator::for_variance(model, params.va, params.modulator_headroom);
        let modulated = if params.predistortion {
            modulator
                .predistort(&pattern.symbols)?
                .into_iter()
                .map(|d| modulator.output(d))
                .collect()
        } else {
            pattern
                .symbols
                .iter()
                .map(|&s| modulator.iq_modulate(s))
                .collect::<Result<_, _>>()?
        };
        let mut channel = ChannelModel::from_params(params);
        if !options.excess_noise {
            channel.xi_alice = 0.0;
        }
        let detector = DetectorModel::from_params(params);
        let front_end = match options.fidelity {
            Fidelity::Trace => Some(FrontEnd::new(
                detector,
                PulseShape {
                    width: params.pulse_width,
                    carver_leakage: model.carver_leakage(),
                },
            )?),
            Fidelity::Slot => None,
        };
        Ok(Self {
            pattern_c: pattern.as_complex(),
            pattern,
            modulated,
            channel,
            detector,
            front_end,
            options,
            pe_fraction: params.m_pe as f64 / params.n_total as f64,
            calib_fraction: params.m_calib as f64 / params.n_total as f64,
            params: params.clone(),
        })
    }

    fn run_block(&self, block: usize, size: usize, dump: bool) -> Result<BlockOutcome, PipelineError> {
        let p = &self.params;
        let period = self.pattern.period();
        let index = block as u64;
        let mut acq = stream(p.seed, Domain::Acquisition, index);
        let start = acq.random_range(0..period);
        let initial_phase = link::random_phase(&mut acq);

        let targets = self.pattern.cyclic(start, size);
        let frame = tx::build_frame(&targets, p.rho, period)?;
        let va_hat = tx::estimate_va_powermeter(&frame, p.tap_fraction)?;
        let mut fields = frame.fields();
        for (k, i) in frame.layout().quantum_slots().enumerate() {
            fields[i] = self.modulated[(start + k) % period];
        }
        let layout = frame.layout();

        let mut ch_rng = stream(p.seed, Domain::Channel, index);
        let propagated = link::propagate(&fields, &self.channel, initial_phase, &mut ch_rng);

        let mut det_rng = stream(p.seed, Domain::Detector, index);
        let mut cal_rng = stream(p.seed, Domain::Calibration, index);
        let n_cal = ((size as f64 * self.calib_fraction).round() as usize).max(2);
        let dsp_err = |source| PipelineError::Dsp { block, source };

        let (raw, shot, elec, sampling_phase, excerpt) = match &self.front_end {
            Some(fe) => {
                let trace = fe.synthesize(&propagated.fields, &mut det_rng);
                let shot = fe.calibration_trace(CalibrationKind::Shot, n_cal, &mut cal_rng);
                let elec = fe.calibration_trace(CalibrationKind::Electronic, n_cal, &mut cal_rng);
                let ds = dsp::downsample(&trace).map_err(dsp_err)?;
                let excerpt = dump.then(|| excerpt_of(&trace, TRACE_EXCERPT_SLOTS));
                (
                    ds.slots,
                    dsp::downsample_at(&shot, ds.phase),
                    dsp::downsample_at(&elec, ds.phase),
                    Some(ds.phase),
                    excerpt,
                )
            }
            None => (
                link::measure_slots(&propagated.fields, &self.detector, &mut det_rng),
                link::calibration_slots(CalibrationKind::Shot, &self.detector, n_cal, &mut cal_rng),
                link::calibration_slots(CalibrationKind::Electronic, &self.detector, n_cal, &mut cal_rng),
                None,
                None,
            ),
        };

        let (snu, calibration) = dsp::normalize_snu(&SlotRecord::raw(raw), &shot, &elec).map_err(dsp_err)?;
        let track = match self.options.phase_mode {
            PhaseMode::Estimated => dsp::recover_phase(
                &snu.values,
                &layout,
                &PhaseRecoveryConfig {
                    amplitude_floor: p.ref_floor,
                    ..Default::default()
                },
            )
            .map_err(dsp_err)?,
            PhaseMode::Oracle => fixed_track(propagated.phases.clone()),
            PhaseMode::Off => fixed_track(vec![0.0; snu.values.len()]),
        };
        let quantum = dsp::correct_and_strip(&snu.values, &layout, &track);
        let sync = dsp::synchronize(&self.pattern_c, &quantum, p.sync_threshold).map_err(dsp_err)?;
        let alice = dsp::align(&self.pattern_c, &quantum, sync.offset);

        let n_pe = ((size as f64 * self.pe_fraction).round() as usize).clamp(2, size);
        let sums = RegressionSums::from_pairs(&alice[..n_pe], &quantum[..n_pe])?;

        let dumps = dump.then(|| StageDumps {
            tx_frame: frame.clone(),
            trace_excerpt: excerpt,
            layout: layout.clone(),
            downsampled: snu.values.clone(),
            corrected: dsp::correct_all(&snu.values, &track),
            quantum: quantum.clone(),
            alice: alice.clone(),
            true_phase: propagated.phases.clone(),
            phase_track: track.per_slot.clone(),
        });

        Ok(BlockOutcome {
            sums,
            calibration,
            va_hat,
            sync_error: sync.offset != start,
            flagged: track.flagged.len(),
            sampling_phase,
            dumps,
        })
    }
}

fn fixed_track(per_slot: Vec<f64>) -> PhaseTrack {
    PhaseTrack {
        per_slot,
        reference_phases: Vec::new(),
        flagged: Vec::new(),
        max_step: 0.0,
    }
}

fn excerpt_of(trace: &AcquiredTrace, slots: usize) -> AcquiredTrace {
    let n = (slots * trace.samples_per_symbol).min(trace.len());
    AcquiredTrace {
        x: trace.x[..n].to_vec(),
        p: trace.p[..n].to_vec(),
        sample_rate: trace.sample_rate,
        samples_per_symbol: trace.samples_per_symbol,
        gain: trace.gain,
    }
}

/// Runs the full chain and evaluates the key rates from the estimates.
pub fn simulate(params: &SystemParams, options: SimulationOptions) -> Result<SimulationReport, PipelineError> {
    let setup = Setup::new(params, options)?;
    let sizes = block_sizes(options.n_symbols, params.acquisition_symbols);
    let outcomes: Vec<Result<BlockOutcome, PipelineError>> = sizes
        .par_iter()
        .enumerate()
        .map(|(b, &size)| setup.run_block(b, size, options.dump_stages && b == 0))
        .collect();

    let mut sums = RegressionSums::default();
    let mut shot_weighted = 0.0;
    let mut elec_weighted = 0.0;
    let mut m_calib = 0;
    let mut va_weighted = 0.0;
    let mut sync_errors = 0;
    let mut flagged = 0;
    let mut sampling_phase = None;
    let mut dumps = None;
    for (outcome, &size) in outcomes.into_iter().zip(&sizes) {
        let o = outcome?;
        sums = sums.merge(o.sums);
        let m = o.calibration.m_calib;
        shot_weighted += o.calibration.sigma2_0_hat * m as f64;
        elec_weighted += o.calibration.v_elec_hat * m as f64;
        m_calib += m;
        va_weighted += o.va_hat * size as f64;
        sync_errors += o.sync_error as usize;
        flagged += o.flagged;
        sampling_phase = sampling_phase.or(o.sampling_phase);
        if o.dumps.is_some() {
            dumps = o.dumps;
        }
    }
    let sigma2_0_hat = shot_weighted / m_calib as f64;
    let v_elec_hat = elec_weighted / m_calib as f64;
    let va_hat = va_weighted / options.n_symbols as f64;

    let point = estimation::fit_sums(&sums, params.eta, v_elec_hat)?;
    let m = sums.pairs as f64;
    let worst = estimation::finite_size_estimates(
        &point,
        va_hat,
        params.eta,
        m,
        sigma2_0_hat,
        m_calib as f64,
        params.epsilon_pe,
    )?;
    let n = options.n_symbols as f64;
    let ratio = (n - m) / n;
    let skr_asymptotic = security::skr_from_estimates(params, &point, va_hat, ratio)?;
    let skr_finite = match security::skr_finite(
        params,
        &point,
        va_hat,
        n,
        &FiniteSizeInput {
            m,
            m_calib: m_calib as f64,
            sigma2_0_hat,
            epsilon_pe: params.epsilon_pe,
        },
    ) {
        Ok(r) => Some(r),
        Err(SecurityError::NoTransmittance(_)) => None,
        Err(e) => return Err(e.into()),
    };

    Ok(SimulationReport {
        n_symbols: options.n_symbols,
        blocks: sizes.len(),
        pe_pairs: sums.pairs,
        t_standard_error: point.t_standard_error(),
        xi_standard_error: estimation::xi_standard_error(&point, sigma2_0_hat, m_calib as f64),
        point,
        va_hat,
        sigma2_0_hat,
        v_elec_hat,
        m_calib,
        worst,
        sync_errors,
        flagged_references: flagged,
        sampling_phase,
        skr_asymptotic,
        skr_finite,
        dumps,
    })
}
