//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Reference values are recomputed here from first principles (closed
//! formulas, quadrature, bisection, planted spectra, explicit Monte-Carlo)
//! rather than read back from the library.

use cvqkd::dsp::{self, PhaseRecoveryConfig, SlotRecord};
use cvqkd::estimation;
use cvqkd::gaussian::{self, TwoModeCov};
use cvqkd::link::{self, AcquiredTrace, CalibrationKind, ChannelModel, DetectorModel};
use cvqkd::params::SystemParams;
use cvqkd::pipeline::{self, Fidelity, SimulationOptions};
use cvqkd::rng::{stream, Domain, SimRng};
use cvqkd::security::{self, LinkPoint};
use cvqkd::tx::{self, AlicePattern, IqModulator, IqModulatorModel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

// criterion 1
const TABLE_SKR_RATIO_1: f64 = 156_000.0;
const TABLE_SKR_RATIO_HALF: f64 = 78_000.0;
const SKR_BAND: f64 = 0.15;
const CONVENTION_BAND: f64 = 0.02;
const CHI_BACKSOLVED: f64 = 0.28626;
const CHI_TOL: f64 = 0.002;
const SKR_RUNTIME: Duration = Duration::from_secs(1);
// criterion 2
const I_AB: f64 = 0.32185;
const I_AB_TOL: f64 = 1e-4;
const V_B: f64 = 1.28305;
const V_B_TOL: f64 = 1e-5;
const XI_A: f64 = 0.14618;
const XI_A_TOL: f64 = 1e-5;
const Z_EPS: f64 = 6.467;
const Z_TOL: f64 = 0.01;
// criterion 3
const MC_SYMBOLS: usize = 1_000_000;
const XI_BQ: f64 = 0.0135;
const XI_SIGMAS: f64 = 3.0;
const T_CHANNEL: f64 = 0.624;
const T_REL_TOL: f64 = 0.02;
const DSP_PENALTY_MAX: f64 = 0.005;
const MC_RUNTIME: Duration = Duration::from_secs(120);
// criterion 4
const T_MIN_1E6: f64 = 0.29996;
const S_MAX_1E6: f64 = 1.03589;
const XI_FS_1E6: f64 = 0.03216;
const FS_TOL: f64 = 1e-4;
const FS_CONVERGENCE: f64 = 0.01;
const OPERATING_ATTEN_DB: f64 = 2.04;
// criterion 5
const EIG_TOL: f64 = 1e-9;
const DETECTOR_MC_TOL: f64 = 0.005;
// criterion 6
const SYNC_SUCCESS_MIN: f64 = 0.999;
const RHO_RATIO_TOL: f64 = 0.2;
const PREDISTORTION_RMS_MAX: f64 = 1e-3;
// criterion 7
const XI_B_ASYM: f64 = 0.027;
const WORSTCASE_CONVERGENCE: f64 = 1e-3;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            pass: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.pass &= ok;
        self.lines
            .push(format!("[{}] {}", if ok { "ok" } else { "FAILED" }, what.into()));
    }

    fn note(&mut self, what: impl Into<String>) {
        self.lines.push(format!("[info] {}", what.into()));
    }
}

fn cvqkd(args: &[&str]) -> (String, Duration) {
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_cvqkd"))
        .args(args)
        .env_remove("CVQKD_CONFIG")
        .output()
        .expect("spawn cvqkd");
    let elapsed = start.elapsed();
    assert!(
        o.status.success(),
        "cvqkd {args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    (String::from_utf8(o.stdout).unwrap(), elapsed)
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .find(|(k, _)| *k == key)
        .unwrap_or_else(|| panic!("report has no {key}"))
        .1
        .parse()
        .unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b) / b
}

/// Two-sided normal tail 2·∫_z^∞ φ by composite Simpson, inverted by bisection.
fn z_oracle(eps: f64) -> f64 {
    let tail = |z: f64| {
        let n = 200_000;
        let h = 14.0 / n as f64;
        let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = phi(z) + phi(z + 14.0);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * phi(z + k as f64 * h);
        }
        2.0 * s * h / 3.0
    };
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Per-quadrature heterodyne variances and the resulting Shannon information.
struct Closed {
    v_b: f64,
    v_b_given_a: f64,
    i_ab: f64,
    xi_a: f64,
}

fn closed_form(p: &SystemParams) -> Closed {
    let gain2 = p.eta * p.t_channel / 2.0;
    let v_b = gain2 * p.va + 1.0 + p.v_elec + p.xi_bq;
    let v_b_given_a = 1.0 + p.v_elec + p.xi_bq;
    Closed {
        v_b,
        v_b_given_a,
        // two quadratures, ½·log2 each
        i_ab: (v_b / v_b_given_a).log2(),
        xi_a: p.xi_bq / gain2,
    }
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let (full, t1) = cvqkd(&["skr", "--ratio", "1"]);
    let (half, t2) = cvqkd(&["skr", "--ratio", "0.5"]);
    let skr1 = value(&full, "skr_bps");
    let skr_half = value(&half, "skr_bps");
    let chi = value(&full, "chi_be_bits");
    o.check(
        rel(skr1, TABLE_SKR_RATIO_1).abs() <= SKR_BAND,
        format!(
            "ratio 1: SKR = {:.2} kbps, {:+.2}% vs 156 kbps (band ±15%)",
            skr1 / 1e3,
            100.0 * rel(skr1, TABLE_SKR_RATIO_1)
        ),
    );
    o.check(
        skr_half == 0.5 * skr1,
        format!("ratio 1/2: SKR = {:.2} kbps, exactly half of ratio 1", skr_half / 1e3),
    );
    o.check(
        rel(skr_half, TABLE_SKR_RATIO_HALF).abs() <= SKR_BAND,
        format!(
            "ratio 1/2: {:+.2}% vs 78 kbps (band ±15%)",
            100.0 * rel(skr_half, TABLE_SKR_RATIO_HALF)
        ),
    );
    let within_2 = rel(skr1, TABLE_SKR_RATIO_1).abs() <= CONVENTION_BAND;
    if within_2 {
        o.check(
            (chi - CHI_BACKSOLVED).abs() <= CHI_TOL,
            format!("within ±2%: chi_BE = {chi:.5} vs back-solved {CHI_BACKSOLVED} ± {CHI_TOL}"),
        );
    } else {
        o.note(format!(
            "SKR is outside ±2% so the ±2% convention confirmation does not apply; chi_BE = {chi:.5} vs back-solved {CHI_BACKSOLVED} (diff {:+.5}, {} the ±{CHI_TOL} window)",
            chi - CHI_BACKSOLVED,
            if (chi - CHI_BACKSOLVED).abs() <= CHI_TOL { "inside" } else { "outside" }
        ));
    }
    let slowest = t1.max(t2);
    o.check(
        slowest < SKR_RUNTIME,
        format!("runtime {:.3} s per invocation (< 1 s)", slowest.as_secs_f64()),
    );
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let p = SystemParams::default();
    let oracle = closed_form(&p);
    let pt = LinkPoint::from_params(&p);
    let i_ab = security::mutual_information(&pt);
    let v_b = pt.v_b();
    let xi_a = pt.xi_alice().unwrap();
    let z = estimation::z_of_epsilon(p.epsilon_pe).unwrap();
    let z_ref = z_oracle(p.epsilon_pe);
    o.check(
        (i_ab - I_AB).abs() <= I_AB_TOL && (i_ab - oracle.i_ab).abs() <= 1e-12,
        format!(
            "I_AB = {i_ab:.7} (target {I_AB} ± {I_AB_TOL}; closed form {:.7})",
            oracle.i_ab
        ),
    );
    o.check(
        (v_b - V_B).abs() <= V_B_TOL && (v_b - oracle.v_b).abs() <= 1e-12,
        format!(
            "V_B = {v_b:.9} (target {V_B} ± {V_B_TOL}; closed form {:.9})",
            oracle.v_b
        ),
    );
    o.check(
        (xi_a - XI_A).abs() <= XI_A_TOL && (xi_a - oracle.xi_a).abs() <= 1e-12,
        format!(
            "xi_A = {xi_a:.8} (target {XI_A} ± {XI_A_TOL}; closed form {:.8})",
            oracle.xi_a
        ),
    );
    o.check(
        (z - Z_EPS).abs() <= Z_TOL && (z - z_ref).abs() <= 1e-6,
        format!("z(1e-10) = {z:.6} (target {Z_EPS} ± {Z_TOL}; quadrature oracle {z_ref:.6})"),
    );
    let (cli, _) = cvqkd(&["skr"]);
    o.check(
        (value(&cli, "i_ab_bits") - oracle.i_ab).abs() <= 1e-12,
        "skr command reports the same I_AB",
    );
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let p = SystemParams::default();
    let start = Instant::now();
    let run = |excess: bool| {
        let opts = SimulationOptions {
            excess_noise: excess,
            fidelity: Fidelity::Trace,
            ..SimulationOptions::new(MC_SYMBOLS)
        };
        pipeline::simulate(&p, opts).unwrap()
    };
    let noisy = run(true);
    let xi = noisy.point.xi_bq_hat;
    let se = noisy.xi_standard_error;
    let t_hat = noisy.point.t_channel_hat;
    o.check(
        (xi - XI_BQ).abs() <= XI_SIGMAS * se,
        format!(
            "{MC_SYMBOLS} symbols: xi_Bq_hat = {xi:.5} ± {se:.5} ({:+.2} SE from {XI_BQ}; pass within 3 SE)",
            (xi - XI_BQ) / se
        ),
    );
    o.check(
        rel(t_hat, T_CHANNEL).abs() <= T_REL_TOL,
        format!(
            "T_hat = {t_hat:.5} ({:+.2}% vs {T_CHANNEL}; pass within 2%)",
            100.0 * rel(t_hat, T_CHANNEL)
        ),
    );
    o.note(format!(
        "{} acquisitions, {} sync errors, {} flagged references",
        noisy.blocks, noisy.sync_errors, noisy.flagged_references
    ));
    let quiet = run(false);
    let penalty = quiet.point.xi_bq_hat;
    o.check(
        penalty <= DSP_PENALTY_MAX,
        format!("channel noise off: xi_Bq_hat = {penalty:.5} SNU (<= {DSP_PENALTY_MAX})"),
    );
    let elapsed = start.elapsed();
    o.check(
        elapsed < MC_RUNTIME,
        format!("both runs took {:.1} s (< 120 s)", elapsed.as_secs_f64()),
    );
    o
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let p = SystemParams::default();

    // derivation chain at exact point estimates
    let z = z_oracle(p.epsilon_pe);
    let m = 1e6;
    let t = (p.eta * p.t_channel / 2.0).sqrt();
    let sigma2 = 1.0 + p.v_elec + p.xi_bq;
    let sigma2_0 = 1.0 + p.v_elec;
    let t_min = t - z * (sigma2 / (m * p.va)).sqrt();
    let s_max = sigma2 + z * sigma2 * 2f64.sqrt() / m.sqrt();
    let d0 = z * sigma2_0 * 2f64.sqrt() / m.sqrt();
    let xi_fs = s_max - (sigma2_0 - d0);
    let w = estimation::finite_size_estimates(&estimation::ideal_point(&p), p.va, p.eta, m, sigma2_0, m, p.epsilon_pe)
        .unwrap();
    o.check(
        (t_min - T_MIN_1E6).abs() <= FS_TOL && (w.t_min - t_min).abs() <= 1e-9,
        format!(
            "t_min(1e6) = {:.6} (target {T_MIN_1E6} ± {FS_TOL}; chain {t_min:.6})",
            w.t_min
        ),
    );
    o.check(
        (s_max - S_MAX_1E6).abs() <= FS_TOL && (w.sigma2_max - s_max).abs() <= 1e-9,
        format!(
            "sigma2_max(1e6) = {:.6} (target {S_MAX_1E6} ± {FS_TOL}; chain {s_max:.6})",
            w.sigma2_max
        ),
    );
    o.check(
        (xi_fs - XI_FS_1E6).abs() <= FS_TOL && (w.xi_bq_fs - xi_fs).abs() <= 1e-9,
        format!(
            "xi_Bq_FS(1e6) = {:.6} (target {XI_FS_1E6} ± {FS_TOL}; chain {xi_fs:.6})",
            w.xi_bq_fs
        ),
    );

    let (sweep, _) = cvqkd(&["sweep", "--grid", "0:14:0.25", "--m", "1e6,1e8,1e10,1e12"]);
    let rows = csv_rows(&sweep);
    let mut all_below = true;
    let mut worst_gap_12: f64 = 0.0;
    let mut zero_6 = f64::INFINITY;
    let mut zero_10 = f64::INFINITY;
    for chunk in rows.chunks(5) {
        let db: f64 = chunk[0][0].parse().unwrap();
        let asym: f64 = chunk[0][5].parse().unwrap();
        for r in &chunk[1..] {
            let fs: f64 = r[5].parse().unwrap();
            all_below &= fs <= asym;
            match r[2].as_str() {
                "1000000" if fs == 0.0 => zero_6 = zero_6.min(db),
                "10000000000" if fs == 0.0 => zero_10 = zero_10.min(db),
                "1000000000000" if db <= OPERATING_ATTEN_DB => worst_gap_12 = worst_gap_12.max(-rel(fs, asym)),
                _ => {}
            }
        }
    }
    o.check(
        all_below,
        format!(
            "SKR_FS <= SKR_asym on all {} grid points for m in 1e6..1e12",
            rows.len() / 5
        ),
    );
    let (at_op, _) = cvqkd(&["sweep", "--grid", "2.04", "--m", "1e12"]);
    let op = csv_rows(&at_op);
    let gap_op = -rel(op[1][5].parse().unwrap(), op[0][5].parse().unwrap());
    o.check(
        worst_gap_12 < FS_CONVERGENCE && gap_op < FS_CONVERGENCE,
        format!(
            "m = 1e12: largest relative shortfall {:.3}% over 0..2.04 dB, {:.3}% at 2.04 dB (< 1%)",
            100.0 * worst_gap_12,
            100.0 * gap_op
        ),
    );
    o.check(
        zero_6 < zero_10,
        format!("zero crossing m = 1e6 at {zero_6} dB, m = 1e10 at {zero_10} dB (strictly ordered)"),
    );
    let (fs, _) = cvqkd(&["skr", "--regime", "fs"]);
    let (asym, _) = cvqkd(&["skr", "--ratio", "0.5"]);
    let skr_fs = value(&fs, "skr_bps");
    o.check(
        skr_fs < TABLE_SKR_RATIO_HALF && skr_fs < value(&asym, "skr_bps"),
        format!(
            "N = 3.08e6, m = N/2 at the operating point: SKR_FS = {:.2} kbps (raw {:.2} kbps), below 78 kbps and below SKR_asym = {:.2} kbps",
            skr_fs / 1e3,
            value(&fs, "skr_raw_bps") / 1e3,
            value(&asym, "skr_bps") / 1e3
        ),
    );
    o
}

fn omega_eigen_moduli(sigma: &DMatrix<f64>) -> Vec<f64> {
    let m = gaussian::omega(sigma.nrows() / 2) * sigma;
    let mut v: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().step_by(2).collect()
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = stream(501, Domain::Misc, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        // thermal pair through a two-mode squeezer: planted spectrum {nu1, nu2}
        let nu1: f64 = rng.random_range(1.0..20.0);
        let nu2: f64 = rng.random_range(1.0..20.0);
        let r: f64 = rng.random_range(0.0..2.0);
        let (ch, sh) = (r.cosh(), r.sinh());
        let cov = TwoModeCov {
            a: nu1 * ch * ch + nu2 * sh * sh,
            b: nu1 * sh * sh + nu2 * ch * ch,
            c: (nu1 + nu2) * ch * sh,
        };
        let mut planted = [nu1, nu2];
        planted.sort_by(f64::total_cmp);
        let closed = cov.symplectic_eigenvalues();
        let numeric = omega_eigen_moduli(&cov.to_matrix());
        let general = gaussian::symplectic_spectrum(&cov.to_matrix()).unwrap();
        for k in 0..2 {
            let s = planted[k];
            worst = worst
                .max((closed[k] - numeric[k]).abs() / s)
                .max((closed[k] - planted[k]).abs() / s)
                .max((general[k] - numeric[k]).abs() / s);
        }
    }
    o.check(
        worst < EIG_TOL,
        format!("1000 random physical states: closed form, numeric and planted spectra agree (max rel diff {worst:.1e} < 1e-9)"),
    );
    let g1 = gaussian::g_entropy(1.0).unwrap();
    let g3 = gaussian::g_entropy(3.0).unwrap();
    o.check(g1 == 0.0 && g3 == 2.0, format!("g(1) = {g1}, g(3) = {g3}"));
    let v = 7.3;
    let tmsv = TwoModeCov {
        a: v,
        b: v,
        c: (v * v - 1.0f64).sqrt(),
    };
    let nu = tmsv.symplectic_eigenvalues();
    o.check(
        (nu[0] - 1.0).abs() < EIG_TOL && (nu[1] - 1.0).abs() < EIG_TOL,
        format!("TMSV symplectic spectrum {{{:.12}, {:.12}}}", nu[0], nu[1]),
    );

    let p = SystemParams::default();
    let oracle = closed_form(&p);
    let v_d = security::detector_ancilla_variance(p.eta, p.v_elec).unwrap();
    let identity = ((1.0 - p.eta) * v_d - ((1.0 - p.eta) + 2.0 * p.v_elec)).abs();
    // explicit beam splitter with a thermal ancilla, then balanced heterodyne
    let n = 1_000_000;
    let mut rng = stream(502, Domain::Misc, 0);
    let alice = Normal::new(0.0, p.va.sqrt()).unwrap();
    let channel = Normal::new(0.0, (1.0 + p.t_channel * oracle.xi_a).sqrt()).unwrap();
    let ancilla = Normal::new(0.0, v_d.sqrt()).unwrap();
    let (mut s_y, mut s_res) = (0.0, 0.0);
    let gain = (p.eta * p.t_channel / 2.0).sqrt();
    for _ in 0..n {
        let x = alice.sample(&mut rng);
        let b = p.t_channel.sqrt() * x + channel.sample(&mut rng);
        let out = p.eta.sqrt() * b + (1.0 - p.eta).sqrt() * ancilla.sample(&mut rng);
        let vac: f64 = StandardNormal.sample(&mut rng);
        let y = (out + vac) / 2f64.sqrt();
        s_y += y * y;
        s_res += (y - gain * x).powi(2);
    }
    let v_b = s_y / n as f64;
    let v_b_a = s_res / n as f64;
    o.check(
        identity < 1e-15 && rel(v_b, oracle.v_b).abs() < DETECTOR_MC_TOL && rel(v_b_a, oracle.v_b_given_a).abs() < DETECTOR_MC_TOL,
        format!(
            "(1-eta)v_d identity holds; Monte-Carlo V_B = {v_b:.5} ({:+.3}%), V_B|A = {v_b_a:.5} ({:+.3}%) (within 0.5%)",
            100.0 * rel(v_b, oracle.v_b),
            100.0 * rel(v_b_a, oracle.v_b_given_a)
        ),
    );
    o
}

fn noisy_bob(pattern: &[Complex64], offset: usize, len: usize, rng: &mut SimRng) -> Vec<Complex64> {
    let p = SystemParams::default();
    let t = (p.eta * p.t_channel / 2.0).sqrt();
    let sd = (p.xi_bq + p.v_elec + 1.0).sqrt();
    (0..len)
        .map(|i| {
            let nx: f64 = StandardNormal.sample(rng);
            let np: f64 = StandardNormal.sample(rng);
            t * pattern[(i + offset) % pattern.len()] + sd * Complex64::new(nx, np)
        })
        .collect()
}

fn reference_phase_variance(rho: f64, seed: u64) -> f64 {
    let p = SystemParams {
        rho,
        linewidth_total: 0.0,
        ..SystemParams::default()
    };
    let channel = ChannelModel::from_params(&p);
    let det = DetectorModel::from_params(&p);
    let mut r = stream(seed, Domain::Misc, 0);
    let symbols = tx::draw_symbols(100_000, p.va, &mut r).unwrap();
    let frame = tx::build_frame(&symbols, p.rho, p.pattern_period).unwrap();
    let phi0 = 0.4;
    let out = link::propagate(&frame.fields(), &channel, phi0, &mut r);
    let y: Vec<Complex64> = out
        .fields
        .iter()
        .map(|&f| link::heterodyne_measure(f, &det, &mut r))
        .collect();
    let track = dsp::recover_phase(&y, &frame.layout(), &PhaseRecoveryConfig::default()).unwrap();
    let errs: Vec<f64> = track.reference_phases.iter().map(|ph| ph - phi0).collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / errs.len() as f64
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let p = SystemParams::default();

    let sps = p.samples_per_symbol;
    let mut r = stream(601, Domain::Misc, 0);
    let mut recovered = 0;
    for k in 0..sps {
        let mut x = vec![0.0; sps * 40];
        let mut q = vec![0.0; sps * 40];
        for (i, (xi, qi)) in x.iter_mut().zip(q.iter_mut()).enumerate() {
            let (n1, n2): (f64, f64) = (StandardNormal.sample(&mut r), StandardNormal.sample(&mut r));
            *xi = 0.05 * n1;
            *qi = 0.05 * n2;
            if i % sps == k {
                *xi += r.random_range(-3.0..3.0);
                *qi += r.random_range(-3.0..3.0);
            }
        }
        let trace = AcquiredTrace {
            x,
            p: q,
            sample_rate: p.sample_rate(),
            samples_per_symbol: sps,
            gain: 1.0,
        };
        recovered += (dsp::downsample(&trace).unwrap().phase == k) as usize;
    }
    o.check(
        recovered == sps,
        format!("planted sampling phase recovered for {recovered}/{sps} phases"),
    );

    let period = p.pattern_period;
    let pattern = AlicePattern::generate(period, p.va, &mut stream(602, Domain::Misc, 0)).unwrap();
    let pattern_c = pattern.as_complex();
    let bob = noisy_bob(&pattern_c, 1234, 3 * period, &mut stream(603, Domain::Misc, 0));
    let base = dsp::synchronize(&pattern_c, &bob, p.sync_threshold).unwrap().offset;
    let equivariant = [1usize, 17, 500, period - 1, period, 3000].iter().all(|&k| {
        dsp::synchronize(&pattern_c, &bob[k..], p.sync_threshold)
            .unwrap()
            .offset
            == (base + k) % period
    });
    o.check(
        equivariant,
        "synchronizer offset shifts with the input (6 shifts incl. wrap)",
    );

    let channel = ChannelModel::from_params(&p);
    let det = DetectorModel::from_params(&p);
    let trials = 1000;
    let offset = 1000;
    let mut ok = 0;
    for trial in 0..trials {
        let mut r = stream(604, Domain::Channel, trial);
        let frame = tx::build_frame(&pattern.cyclic(offset, period), p.rho, period).unwrap();
        let phase0 = link::random_phase(&mut r);
        let out = link::propagate(&frame.fields(), &channel, phase0, &mut r);
        let raw = link::measure_slots(&out.fields, &det, &mut r);
        let shot = link::calibration_slots(CalibrationKind::Shot, &det, period, &mut r);
        let elec = link::calibration_slots(CalibrationKind::Electronic, &det, period, &mut r);
        let (snu, _) = dsp::normalize_snu(&SlotRecord::raw(raw), &shot, &elec).unwrap();
        let layout = frame.layout();
        let track = dsp::recover_phase(&snu.values, &layout, &PhaseRecoveryConfig::default()).unwrap();
        let quantum = dsp::correct_and_strip(&snu.values, &layout, &track);
        if let Ok(s) = dsp::synchronize(&pattern_c, &quantum, p.sync_threshold) {
            ok += (s.offset == offset) as usize;
        }
    }
    let rate = ok as f64 / trials as f64;
    o.check(
        rate >= SYNC_SUCCESS_MIN,
        format!("sync success {ok}/{trials} at the operating point (>= 99.9%)"),
    );

    let v1 = reference_phase_variance(p.rho, 605);
    let v2 = reference_phase_variance(2.0 * p.rho, 606);
    let ratio = v1 / v2;
    o.check(
        (ratio - 2.0).abs() <= RHO_RATIO_TOL * 2.0,
        format!("phase-error variance ratio rho : 2 rho = {ratio:.3} (2 ± 20%)"),
    );

    let model = IqModulatorModel::from_params(&p);
    let m = IqModulator::for_variance(model, p.va, p.modulator_headroom);
    let targets = tx::draw_symbols(20_000, p.va, &mut stream(607, Domain::Misc, 0)).unwrap();
    let drives = m.predistort(&targets).unwrap();
    let err: f64 = targets
        .iter()
        .zip(&drives)
        .map(|(t, &d)| (m.output(d) - t.to_complex()).norm_sqr())
        .sum();
    let pow: f64 = targets.iter().map(|t| t.intensity()).sum();
    let rms = (err / pow).sqrt();
    o.check(
        rms < PREDISTORTION_RMS_MAX,
        format!(
            "predistortion at ER {}/{} dB: relative RMS {rms:.2e} (< 1e-3)",
            model.er_top, model.er_bottom
        ),
    );
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let p = SystemParams::default();
    let (text, _) = cvqkd(&["worstcase"]);
    let rows = csv_rows(&text);
    let parsed: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    let monotone = parsed
        .windows(2)
        .all(|w| w[1].0 > w[0].0 && w[1].1 < w[0].1 && w[1].2 > w[0].2);
    o.check(
        monotone,
        format!(
            "{} rows: xi_B_FS strictly decreasing and T_min strictly increasing in m",
            parsed.len()
        ),
    );
    let last = parsed.last().unwrap();
    let (dxi, dt) = (rel(last.1, XI_B_ASYM), rel(last.2, T_CHANNEL));
    o.check(
        last.0 == 1e14 && dxi.abs() < WORSTCASE_CONVERGENCE && dt.abs() < WORSTCASE_CONVERGENCE,
        format!(
            "m = {:e}: xi_B_FS = {:.6} ({:+.4}%), T_min = {:.6} ({:+.4}%) (within 0.1%)",
            last.0,
            last.1,
            100.0 * dxi,
            last.2,
            100.0 * dt
        ),
    );
    let n = p.n_total as f64;
    let flagged: Vec<&Vec<String>> = rows.iter().filter(|r| r[3] == "n_equals_m").collect();
    let emitted = flagged.len() == 1 && flagged[0][0].parse::<f64>().unwrap() == n;
    o.check(
        emitted,
        match flagged.first() {
            Some(r) => format!("N = m = 3.08e6 row emitted: xi_B_FS = {}, T_min = {}", r[1], r[2]),
            None => "N = m = 3.08e6 row missing".into(),
        },
    );
    o
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("operating-point key rate", criterion_1),
        ("intermediate quantities", criterion_2),
        ("end-to-end Monte-Carlo", criterion_3),
        ("finite-size suite", criterion_4),
        ("Gaussian-formalism oracles", criterion_5),
        ("DSP properties", criterion_6),
        ("worst-case estimator curves", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome {
                pass: false,
                lines: vec![format!("[FAILED] panicked: {msg}")],
            }
        });
        failed += !outcome.pass as usize;
        println!(
            "criterion {}: {} - {name} ({:.1} s)",
            i + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for line in &outcome.lines {
            println!("    {line}");
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
