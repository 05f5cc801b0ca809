//! Acceptance suite: one pass/fail line per criterion. Runs without the
//! libtest harness so the lines are printed even when output is captured.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use modemux::counting::{
    count_coincidences, derived_rng, fractional_quantum_power, poisson_times, EventStream,
    Matching, StreamPurpose,
};
use modemux::model::{FiberSpec, InterGroupCoupling, ModeSet, Scenario};
use modemux::pipeline::{
    fit_fqp_pattern, max_baud_rate, run_scenario, snr_vs_power_sweep, PatternFitOptions, RunMode,
    GROUP_FQP_ANCHORS, SNR_ANCHOR_POWER_W,
};
use modemux::powerflow::{
    build_coupling_matrix, calibrate_coupling, group_transfer_fractions, CalibrationOptions,
    CouplingMatrix, GroupTable, Propagator, StepSize,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn shipped(rel: &str) -> Scenario {
    let path = repo_root().join("scenarios").join(rel);
    Scenario::load(&path).expect("readable").expect("valid")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(started: Instant, limit: Duration, detail: String) -> Outcome {
    let took = started.elapsed();
    check(
        took < limit,
        format!(
            "{detail}; {:.2} s of {} s allowed",
            took.as_secs_f64(),
            limit.as_secs()
        ),
    )
}

fn budget() -> Outcome {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_modemux"))
        .args([
            "budget",
            "--power",
            "20e-9",
            "--wavelength",
            "1565e-9",
            "--photons",
            "20",
        ])
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    let printed: f64 = text
        .lines()
        .find_map(|l| {
            l.strip_prefix("max_baud = ")?
                .strip_suffix(" Bd")?
                .parse()
                .ok()
        })
        .ok_or_else(|| format!("no baud rate in output: {text}"))?;
    let b = max_baud_rate(20e-9, 1565.0, 20.0).map_err(|e| e.to_string())?;
    let identity = (b.max_baud * b.photons_per_pulse * b.photon_energy_j - 20e-9).abs() / 20e-9;
    let ok = out.status.success() && (7.72e9..=7.96e9).contains(&printed) && identity < 1e-15;
    if !ok {
        return Err(format!(
            "B = {printed:e} Bd, B N_p hν relative error {identity:e}"
        ));
    }
    within_time(
        started,
        Duration::from_secs(1),
        format!("B = {printed:.4e} Bd"),
    )
}

fn accidentals() -> Outcome {
    let started = Instant::now();
    let (rate, window, duration) = (1e5, 4e-9, 3.0);
    let expected = 2.0 * rate * rate * window;
    let stream = |seed: u64, channel: u32| EventStream {
        label: format!("detector {channel}"),
        duration_s: duration,
        timestamps: poisson_times(
            rate,
            duration,
            &mut derived_rng(seed, StreamPurpose::Generic, channel, 0),
        ),
    };
    let rates: Vec<f64> = (0..30u64)
        .map(|seed| {
            let (a, b) = (stream(seed, 0), stream(seed, 1));
            count_coincidences(&a, &b, window, Matching::Greedy)
                .expect("sorted streams")
                .rate_hz
        })
        .collect();
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let sd = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    let z = (mean - expected) / se;
    if z.abs() > 3.0 {
        return Err(format!(
            "mean {mean:.3} Hz vs {expected} Hz is {z:.2} standard errors away"
        ));
    }
    within_time(
        started,
        Duration::from_secs(30),
        format!("mean {mean:.3} Hz, expected {expected} Hz, {z:+.2} SE"),
    )
}

fn conservation() -> Outcome {
    let started = Instant::now();
    let fiber = shipped("link_8km.json").fiber;
    let lossless = vec![0.0; fiber.modes.len()];
    let cm = build_coupling_matrix(&fiber);
    let prop =
        Propagator::new(&cm, &lossless, 8000.0, StepSize::Auto).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p0: Vec<f64> = (0..fiber.modes.len())
            .map(|_| rng.random::<f64>())
            .collect();
        let out = prop.apply(&p0).map_err(|e| e.to_string())?;
        let (a, b): (f64, f64) = (p0.iter().sum(), out.output.total());
        worst = worst.max((b - a).abs() / a);
    }
    if worst > 1e-9 {
        return Err(format!("worst relative power change {worst:e}"));
    }
    within_time(
        started,
        Duration::from_secs(10),
        format!("worst relative change {worst:.2e} over 100 vectors"),
    )
}

fn equipartition() -> Outcome {
    let modes = ModeSet::default();
    let fiber = shipped("link_8km.json").fiber.with_length(40.0);
    assert_eq!(fiber.intra_group_rate, 1.0);
    let cm = build_coupling_matrix(&fiber);
    // all power into the first mode of each group
    let mut p0 = vec![0.0; modes.len()];
    for g in 1..=modes.groups() {
        p0[modes.group_members(g).start] = 1.0;
    }
    let out = Propagator::new(&cm, &fiber.attenuation, 40.0, StepSize::Auto)
        .and_then(|p| p.apply(&p0))
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for g in 1..=modes.groups() {
        let powers = &out.output.p[modes.group_members(g)];
        let mean = powers.iter().sum::<f64>() / powers.len() as f64;
        let (lo, hi) = powers
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        worst = worst.max((hi - lo) / mean);
    }
    check(
        worst <= 0.01,
        format!("largest intra-group spread {:.2e} of the group mean", worst),
    )
}

/// exp(A z) p0 for the symmetric 2x2 power-flow generator.
fn two_mode_exact(alpha: [f64; 2], d: f64, z: f64, p0: [f64; 2]) -> [f64; 2] {
    let a = [[-alpha[0] - d, d], [d, -alpha[1] - d]];
    let s = (a[0][0] + a[1][1]) / 2.0;
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let q = (s * s - det).sqrt();
    let (c, sh) = ((q * z).cosh(), (q * z).sinh() / q);
    let e = (s * z).exp();
    let m = [
        [e * (c + sh * (a[0][0] - s)), e * sh * a[0][1]],
        [e * sh * a[1][0], e * (c + sh * (a[1][1] - s))],
    ];
    [
        m[0][0] * p0[0] + m[0][1] * p0[1],
        m[1][0] * p0[0] + m[1][1] * p0[1],
    ]
}

fn solver_order() -> Outcome {
    let (alpha, d, length) = ([0.01, 0.03], 0.05, 20.0);
    let cm = CouplingMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0.0, d, d, 0.0]))
        .map_err(|e| e.to_string())?;
    let exact = two_mode_exact(alpha, d, length, [1.0, 0.0]);
    let mut errors = Vec::new();
    for h in [1.0, 0.5, 0.25, 0.125] {
        let out = Propagator::new(&cm, &alpha, length, StepSize::Fixed(h))
            .and_then(|p| p.apply(&[1.0, 0.0]))
            .map_err(|e| e.to_string())?;
        errors.push(
            out.output
                .p
                .iter()
                .zip(exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = ratios.iter().all(|r| (8.0..=32.0).contains(r));
    let listed: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    check(
        ok,
        format!(
            "error ratios per halving {} (16 expected)",
            listed.join(", ")
        ),
    )
}

fn calibration_round_trip() -> Outcome {
    let started = Instant::now();
    let modes = ModeSet::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_rel, mut worst_res) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let truth: Vec<f64> = (0..modes.groups() - 1)
            .map(|_| 10f64.powf(rng.random_range(-7.0..-2.0)))
            .collect();
        let fiber = FiberSpec::uniform(modes, 40.0, 1.0, 0.0)
            .with_inter_group(InterGroupCoupling::adjacent(&truth));
        let f = group_transfer_fractions(
            &build_coupling_matrix(&fiber),
            &fiber.attenuation,
            &modes.group_of(),
            40.0,
            StepSize::Auto,
        )
        .map_err(|e| e.to_string())?;
        let targets: GroupTable = (0..f.nrows())
            .map(|a| {
                (0..f.ncols())
                    .map(|b| Some(10.0 * f[(a, b)].log10()))
                    .collect()
            })
            .collect();
        let start = FiberSpec::uniform(modes, 40.0, 1.0, 0.0);
        let out = calibrate_coupling(&targets, &start, 40.0, &CalibrationOptions::default())
            .map_err(|e| e.to_string())?;
        for ((_, d), t) in out.parameters.iter().zip(&truth) {
            worst_rel = worst_rel.max(((d - t) / t).abs());
        }
        worst_res = worst_res.max(out.max_residual_db);
    }
    if worst_rel > 0.05 || worst_res > 0.01 {
        return Err(format!(
            "worst relative D error {worst_rel:.2e}, worst residual {worst_res:.2e} dB"
        ));
    }
    within_time(
        started,
        Duration::from_secs(60),
        format!("worst relative D error {worst_rel:.2e}, worst residual {worst_res:.2e} dB over 20 draws"),
    )
}

fn group_pattern_ok(g: &[f64]) -> bool {
    (g[1] - 0.052).abs() <= 0.015
        && (g[3] - 0.098).abs() <= 0.02
        && [0, 2, 4].iter().all(|&k| (0.20..=0.38).contains(&g[k]))
        && g[0] + g[2] + g[4] >= 0.80
}

fn fqp_pattern() -> Outcome {
    let fmt = |g: &[f64]| {
        g.iter()
            .map(|x| format!("{:.3}", x))
            .collect::<Vec<_>>()
            .join(" ")
    };
    // refit from the uncalibrated fiber, then check the shipped calibration
    let mut start = shipped("reproduce/fqp.json");
    start.fiber.inter_group = InterGroupCoupling::uniform(5, 1e-5);
    let fit = fit_fqp_pattern(&start, &GROUP_FQP_ANCHORS, &PatternFitOptions::default())
        .map_err(|e| e.to_string())?;
    let refit = run_scenario(&fit.scenario, RunMode::Analytic)
        .map_err(|e| e.to_string())?
        .group_fqp
        .ok_or("no FQP")?;
    let link = run_scenario(&shipped("link_8km.json"), RunMode::Analytic)
        .map_err(|e| e.to_string())?
        .group_fqp
        .ok_or("no FQP")?;
    check(
        group_pattern_ok(&refit) && group_pattern_ok(&link),
        format!(
            "refit groups {}; shipped 8 km link groups {}",
            fmt(&refit),
            fmt(&link)
        ),
    )
}

fn snr_anchor() -> Outcome {
    let s = shipped("reproduce/snr.json");
    let monitor = s.monitored_modes();
    let points = snr_vs_power_sweep(
        &s,
        &[SNR_ANCHOR_POWER_W, 10.0 * SNR_ANCHOR_POWER_W],
        &monitor,
        RunMode::Analytic,
    )
    .map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, m) in points[0].snr.iter().enumerate() {
        let at = m.snr.exact.db().unwrap_or(f64::INFINITY);
        let slope = points[1].snr[k].snr.exact.db().map_or(f64::NAN, |b| b - at);
        ok &= at >= 10.0 && (slope + 10.0).abs() <= 0.1;
        parts.push(format!(
            "{} {at:.3} dB at 20 nW, {slope:+.4} dB/decade",
            m.mode
        ));
    }
    check(ok, parts.join("; "))
}

fn fqp_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_shift = 0.0f64;
    for case in 0..1000 {
        let n = rng.random_range(2..=15);
        let rates: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let rap = rng.random_range(0.0..50.0);
                (rap + rng.random_range(0.0..1e3), rap)
            })
            .collect();
        let il: Vec<f64> = (0..n).map(|_| rng.random_range(-15.0..0.0)).collect();
        let r_in = rng.random_range(100.0..1e4);
        let base =
            fractional_quantum_power(&rates, r_in, &il).map_err(|e| format!("case {case}: {e}"))?;
        let sum: f64 = base.fqp.iter().sum();
        if sum != 1.0 {
            return Err(format!("case {case}: sum {sum:e}"));
        }
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled: Vec<(f64, f64)> = rates.iter().map(|&(a, b)| (a * c, b * c)).collect();
        let other = fractional_quantum_power(&scaled, r_in, &il)
            .map_err(|e| format!("case {case}: {e}"))?;
        for (a, b) in base.fqp.iter().zip(&other.fqp) {
            worst_shift = worst_shift.max((a - b).abs());
        }
    }
    check(
        worst_shift <= 1e-12,
        format!("sum exactly 1 in 1000 cases; largest change under rescaling {worst_shift:.1e}"),
    )
}

const TOY: &str = r#"{
    "name": "three-mode toy",
    "fiber": { "length_m": 200, "groups": 2, "inter_group_d_per_m": 5e-4, "attenuation_db_per_km": 1.0 },
    "mux": { "insertion_loss_db": [-2.0, -2.5, -3.0], "group_crosstalk_db": [[null, -20.0], [-22.0, null]] },
    "demux": { "insertion_loss_db": -2.0 },
    "wdm_filters": [ { "name": "q1540", "center_nm": 1540, "extinction_db": 30 } ],
    "detectors": {
        "herald": { "efficiency": 0.8, "dark_rate_hz": 20000 },
        "idler": { "efficiency": 0.7, "dark_rate_hz": 300 }
    },
    "channels": [
        { "kind": "quantum", "mode": [0, 0], "wavelength_nm": 1540, "pair_rate_hz": 1500 },
        { "kind": "quantum", "mode": [0, 1], "wavelength_nm": 1540, "pair_rate_hz": 1100 },
        { "kind": "classical", "mode": [1, 0], "wavelength_nm": 1565, "power_w": 2e-11 }
    ],
    "counting": { "pair_rate_in_hz": 2600, "window_s": 4e-9, "acquisition_s": 1.0, "repetitions": 30, "seed": 0, "filter": "q1540" }
}"#;

fn monte_carlo_agreement() -> Outcome {
    let toy = Scenario::from_json(TOY).map_err(|e| e.to_string())?;
    let analytic = run_scenario(&toy, RunMode::Analytic).map_err(|e| e.to_string())?;
    let (mut runs_ok, mut within, mut total) = (0, 0, 0);
    for seed in 0..30u64 {
        let mut s = toy.clone();
        s.counting.seed = seed;
        let mc = run_scenario(&s, RunMode::MonteCarlo).map_err(|e| e.to_string())?;
        let mut all = true;
        for (a, (m, se)) in analytic
            .stats
            .iter()
            .zip(mc.stats.iter().zip(&mc.standard_errors))
        {
            for (x, y, e) in [
                (a.r1_hz, m.r1_hz, se[0]),
                (a.r2_hz, m.r2_hz, se[1]),
                (a.rcp_hz, m.rcp_hz, se[2]),
                (a.rap_hz, m.rap_hz, se[3]),
            ] {
                total += 1;
                let ok = (x - y).abs() <= 3.0 * e;
                within += usize::from(ok);
                all &= ok;
            }
        }
        runs_ok += usize::from(all);
    }
    let fraction = runs_ok as f64 / 30.0;
    check(
        fraction >= 0.95,
        format!("{runs_ok}/30 runs with every rate within 3 SE; {within}/{total} rates overall"),
    )
}

fn determinism() -> Outcome {
    let scenario = repo_root().join("scenarios/link_8km.json");
    let mut parts = Vec::new();
    for mode in ["analytic", "monte-carlo"] {
        let dirs: Vec<tempfile::TempDir> = (0..2)
            .map(|_| tempfile::tempdir().expect("temp dir"))
            .collect();
        for d in &dirs {
            let status = Command::new(env!("CARGO_BIN_EXE_modemux"))
                .arg("simulate")
                .arg(&scenario)
                .args(["--seed", "42", "--mode", mode])
                .arg("--output-dir")
                .arg(d.path())
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!(
                    "{mode}: {}",
                    String::from_utf8_lossy(&status.stderr)
                ));
            }
        }
        let tables = |root: &Path| -> Vec<(String, Vec<u8>)> {
            let mut files = Vec::new();
            for hash in std::fs::read_dir(root).expect("bundle root") {
                let dir = hash.expect("entry").path().join("simulate");
                for sub in ["tables", "plotdata"] {
                    for f in std::fs::read_dir(dir.join(sub)).expect("bundle dir") {
                        let p = f.expect("entry").path();
                        let name = p
                            .strip_prefix(root)
                            .expect("inside root")
                            .display()
                            .to_string();
                        files.push((name, std::fs::read(&p).expect("readable")));
                    }
                }
                files.push((
                    "summary.json".into(),
                    std::fs::read(dir.join("summary.json")).expect("summary"),
                ));
            }
            files.sort();
            files
        };
        let (a, b) = (tables(dirs[0].path()), tables(dirs[1].path()));
        if a.is_empty() || a != b {
            return Err(format!("{mode}: outputs differ between runs"));
        }
        parts.push(format!("{mode}: {} files identical", a.len()));
    }
    Ok(parts.join("; "))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("baud budget at 20 nW, 1565 nm, 20 photons", budget),
        ("accidental coincidence rate 2 R1 R2 t_c", accidentals),
        ("lossless power conservation over 8 km", conservation),
        ("intra-group equipartition at 40 m", equipartition),
        ("fourth-order convergence of the solver", solver_order),
        ("coupling calibration round trip", calibration_round_trip),
        ("group FQP pattern after 8 km", fqp_pattern),
        ("SNR anchor at 20 nW and -10 dB/decade slope", snr_anchor),
        ("FQP normalization and scale invariance", fqp_normalization),
        ("Monte Carlo agrees with closed form", monte_carlo_agreement),
        ("simulate --seed 42 is byte-identical", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += usize::from(outcome.is_err());
        println!(
            "criterion {:>2} {tag}: {name} ({detail}) [{:.1} s]",
            k + 1,
            started.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
