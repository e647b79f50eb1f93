//! Subcommand implementations.

use crate::manifest::RunManifest;
use cvqkd::dsp::{self, DspError};
use cvqkd::estimation::{self, EstimationError};
use cvqkd::gaussian::GaussianError;
use cvqkd::params::{load_config, ConfigError, SystemParams};
use cvqkd::pipeline::{self, Fidelity, PhaseMode, PipelineError, SimulationOptions, StageDumps};
use cvqkd::security::{self, FiniteSizeInput, Regime, SecurityError};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read config file {path}: {source}")]
    ConfigRead { path: PathBuf, source: io::Error },
    #[error("config file {path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Security(#[from] SecurityError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("cannot write output: {0}")]
    Io(#[from] io::Error),
}

fn security_code(e: &SecurityError) -> u8 {
    match e {
        SecurityError::Gaussian(GaussianError::Unphysical(_) | GaussianError::NotPositiveDefinite) => 4,
        SecurityError::LosslessNoisyDetector
        | SecurityError::EstimationExceedsTotal { .. }
        | SecurityError::Ratio(_)
        | SecurityError::Attenuation(_) => 2,
        _ => 1,
    }
}

impl CliError {
    /// 0 ok, 2 configuration, 3 synchronization, 4 unphysical state, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigRead { .. } | CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Pipeline(PipelineError::Config(_) | PipelineError::TooFewSymbols { .. }) => 2,
            CliError::Pipeline(PipelineError::Dsp {
                source: DspError::SyncFailure { .. } | DspError::TooShort { .. },
                ..
            }) => 3,
            CliError::Pipeline(PipelineError::Security(e)) | CliError::Security(e) => security_code(e),
            _ => 1,
        }
    }
}

/// Built-in defaults, overridden by the config file when one is given.
pub fn resolve_params(config: Option<&Path>) -> Result<SystemParams, CliError> {
    let Some(path) = config else {
        return Ok(SystemParams::default());
    };
    let text = fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
        path: path.to_path_buf(),
        source,
    })?;
    load_config(&text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

pub struct SkrArgs {
    pub ratio: Option<f64>,
    pub regime: Regime,
    pub n_total: Option<u64>,
    pub m: Option<f64>,
    pub m_calib: Option<f64>,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
}

fn flags(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn check_ratio(ratio: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&ratio) {
        Ok(ratio)
    } else {
        Err(CliError::Usage(format!("--ratio {ratio} outside [0, 1]")))
    }
}

pub fn cmd_skr(mut params: SystemParams, args: SkrArgs) -> Result<(), CliError> {
    if let Some(eps) = args.epsilon {
        params.epsilon_pe = eps;
    }
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = match args.regime {
        Regime::Asymptotic => {
            let ratio = check_ratio(args.ratio.unwrap_or_else(|| params.key_ratio()))?;
            security::skr_asymptotic(&params, ratio)?
        }
        Regime::FiniteSize => {
            let n = args.n_total.unwrap_or(params.n_total) as f64;
            let input = FiniteSizeInput {
                m: args.m.unwrap_or(params.m_pe as f64),
                m_calib: args.m_calib.unwrap_or(params.m_calib as f64),
                sigma2_0_hat: 1.0 + params.v_elec,
                epsilon_pe: params.epsilon_pe,
            };
            let point = estimation::ideal_point(&params);
            match args.ratio {
                Some(r) => security::skr_finite_with_ratio(&params, &point, params.va, &input, check_ratio(r)?)?,
                None => security::skr_finite(&params, &point, params.va, n, &input)?,
            }
        }
    };
    let body = report.to_report_text();
    let mut manifest = RunManifest::new(
        "skr",
        flags(&[
            ("regime", args.regime.label().into()),
            ("ratio", report.ratio.to_string()),
            ("n_total", args.n_total.unwrap_or(params.n_total).to_string()),
            ("m", args.m.unwrap_or(params.m_pe as f64).to_string()),
            ("m_calib", args.m_calib.unwrap_or(params.m_calib as f64).to_string()),
        ]),
        &params,
    );
    manifest.emit(None, &body)?;
    if let Some(out) = &args.out {
        manifest.emit(Some(out), &body)?;
    }
    manifest.finish(args.out.as_deref())?;
    Ok(())
}

pub struct SimulateArgs {
    pub n_symbols: u64,
    pub fidelity: Fidelity,
    pub phase: PhaseMode,
    pub excess_noise: bool,
    pub seed: Option<u64>,
    pub dump_stages: bool,
    pub dump_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn fidelity_label(f: Fidelity) -> &'static str {
    match f {
        Fidelity::Trace => "trace",
        Fidelity::Slot => "slot",
    }
}

fn phase_label(p: PhaseMode) -> &'static str {
    match p {
        PhaseMode::Estimated => "estimated",
        PhaseMode::Oracle => "oracle",
        PhaseMode::Off => "off",
    }
}

pub fn cmd_simulate(mut params: SystemParams, args: SimulateArgs) -> Result<(), CliError> {
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    let options = SimulationOptions {
        n_symbols: args.n_symbols as usize,
        fidelity: args.fidelity,
        phase_mode: args.phase,
        excess_noise: args.excess_noise,
        dump_stages: args.dump_stages,
    };
    let mut manifest = RunManifest::new(
        "simulate",
        flags(&[
            ("n_symbols", args.n_symbols.to_string()),
            ("fidelity", fidelity_label(args.fidelity).into()),
            ("phase", phase_label(args.phase).into()),
            ("excess_noise", args.excess_noise.to_string()),
        ]),
        &params,
    );
    let report = pipeline::simulate(&params, options)?;
    let body = report.to_report_text();
    manifest.emit(args.out.as_deref(), &body)?;
    if let Some(d) = &report.dumps {
        let dir = args.dump_dir.clone().unwrap_or_else(|| match &args.out {
            Some(out) => out.with_extension("stages"),
            None => PathBuf::from("stages"),
        });
        write_stage_dumps(&mut manifest, &dir, d)?;
    }
    manifest.finish(args.out.as_deref())?;
    Ok(())
}

fn to_string(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> io::Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    String::from_utf8(buf).map_err(io::Error::other)
}

fn write_stage_dumps(manifest: &mut RunManifest, dir: &Path, d: &StageDumps) -> io::Result<()> {
    let tx = to_string(|w| d.tx_frame.write_csv(w))?;
    manifest.emit(Some(&dir.join("tx_frame.csv")), &tx)?;
    if let Some(trace) = &d.trace_excerpt {
        let body = to_string(|w| trace.write_csv(w))?;
        manifest.emit(Some(&dir.join("trace_excerpt.csv")), &body)?;
    }
    let ds = to_string(|w| dsp::write_constellation_csv(w, &d.downsampled, Some(&d.layout)))?;
    manifest.emit(Some(&dir.join("downsampled.csv")), &ds)?;
    let corrected = to_string(|w| dsp::write_constellation_csv(w, &d.corrected, Some(&d.layout)))?;
    manifest.emit(Some(&dir.join("corrected.csv")), &corrected)?;
    let quantum = to_string(|w| dsp::write_constellation_csv(w, &d.quantum, None))?;
    manifest.emit(Some(&dir.join("quantum.csv")), &quantum)?;

    let mut pairs = String::from("index,alice_x,alice_p,bob_x,bob_p\n");
    for (i, (a, b)) in d.alice.iter().zip(&d.quantum).enumerate() {
        let _ = writeln!(pairs, "{i},{},{},{},{}", a.re, a.im, b.re, b.im);
    }
    manifest.emit(Some(&dir.join("pairs.csv")), &pairs)?;

    let mut phase = String::from("slot_index,true_phase,estimated_phase\n");
    for (i, (t, e)) in d.true_phase.iter().zip(&d.phase_track).enumerate() {
        let _ = writeln!(phase, "{i},{t},{e}");
    }
    manifest.emit(Some(&dir.join("phase.csv")), &phase)
}

pub struct SweepArgs {
    pub grid: Vec<f64>,
    pub ms: Vec<f64>,
    pub ratio: Option<f64>,
    pub out: Option<PathBuf>,
}

fn fmt_m(m: f64) -> String {
    if m.is_infinite() {
        "inf".into()
    } else {
        m.to_string()
    }
}

pub fn sweep_csv(params: &SystemParams, grid: &[f64], ms: &[f64], ratio: f64) -> Result<String, CliError> {
    if grid.is_empty() {
        return Err(CliError::Usage("attenuation grid is empty".into()));
    }
    let rows = security::sweep_attenuation(params, grid, ms, ratio)?;
    let mut body = String::from("atten_db,regime,m,i_ab_bits,chi_be_bits,skr_bps\n");
    for r in rows {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{}",
            r.atten_db,
            r.regime.label(),
            fmt_m(r.m),
            r.i_ab,
            r.chi_be,
            r.skr
        );
    }
    Ok(body)
}

pub fn cmd_sweep(params: SystemParams, args: SweepArgs) -> Result<(), CliError> {
    if args.grid.iter().any(|&a| !(a >= 0.0)) {
        return Err(CliError::Usage("attenuations must be >= 0 dB".into()));
    }
    let ratio = check_ratio(args.ratio.unwrap_or_else(|| params.key_ratio()))?;
    let body = sweep_csv(&params, &args.grid, &args.ms, ratio)?;
    let join = |v: &[f64]| v.iter().map(|x| fmt_m(*x)).collect::<Vec<_>>().join(",");
    let mut manifest = RunManifest::new(
        "sweep",
        flags(&[
            ("grid_db", join(&args.grid)),
            ("m", join(&args.ms)),
            ("ratio", ratio.to_string()),
        ]),
        &params,
    );
    manifest.emit(args.out.as_deref(), &body)?;
    manifest.finish(args.out.as_deref())?;
    Ok(())
}

pub struct WorstCaseArgs {
    pub ms: Vec<f64>,
    pub out: Option<PathBuf>,
}

pub fn worstcase_csv(params: &SystemParams, ms: &[f64]) -> Result<String, CliError> {
    if ms.is_empty() {
        return Err(CliError::Usage("m grid is empty".into()));
    }
    let n = params.n_total as f64;
    // the experiment's N = m point is spliced into any grid that spans it
    let mut ms = ms.to_vec();
    let (lo, hi) = ms
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &m| (l.min(m), h.max(m)));
    if lo <= n && n <= hi && !ms.contains(&n) {
        let at = ms.iter().position(|&m| m > n).unwrap_or(ms.len());
        ms.insert(at, n);
    }
    let curve = estimation::worst_case_curve(params, &ms)?;
    let experiment = estimation::worst_case_curve(params, &[n])?[0];
    let mut body = String::new();
    let _ = writeln!(
        body,
        "# asymptotic: xi_b={} t_channel={}",
        2.0 * params.xi_bq,
        params.t_channel
    );
    let _ = writeln!(
        body,
        "# n_equals_m: m={} xi_b_fs={} t_channel_min={}",
        n, experiment.xi_b_fs, experiment.t_channel_min
    );
    body.push_str("m,xi_b_fs,t_channel_min,marker\n");
    for w in curve {
        let marker = if w.m == n { "n_equals_m" } else { "" };
        let _ = writeln!(body, "{},{},{},{marker}", w.m, w.xi_b_fs, w.t_channel_min);
    }
    Ok(body)
}

pub fn cmd_worstcase(params: SystemParams, args: WorstCaseArgs) -> Result<(), CliError> {
    let body = worstcase_csv(&params, &args.ms)?;
    let ms = args.ms.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",");
    let mut manifest = RunManifest::new("worstcase", flags(&[("m", ms)]), &params);
    manifest.emit(args.out.as_deref(), &body)?;
    manifest.finish(args.out.as_deref())?;
    Ok(())
}
