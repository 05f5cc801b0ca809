//! The `modemux` command-line tool: argument grammar and command dispatch.
//! Every command that produces results writes a bundle under
//! `<output-dir>/<scenario-hash>/<command>/`.

pub mod args;
mod error;

use std::path::{Path, PathBuf};

use modemux::counting::Snr;
use modemux::devices::TransferMatrix;
use modemux::model::{validate_scenario, ModeId, Scenario, ScenarioFile};
use modemux::pipeline::{
    calibration_bundle, fit_extinction, fit_fqp_pattern, max_baud_rate, reproduce_report,
    simulation_bundle, snr_vs_power_sweep, sweep_bundle, write_atomic, Bundle, Link,
    PatternFitOptions, RunMode, Table,
};
use modemux::powerflow::{
    calibrate_coupling, read_group_table_csv, CalibrationMode, CalibrationOptions,
    CalibrationResult, PowerFlowError,
};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use args::{Cli, Command, GlobalArgs, Overrides, OUTPUT_DIR_ENV};
pub use error::CliError;

/// Extinction search range for `calibrate --extinction-power`, dB.
const EXTINCTION_RANGE_DB: (f64, f64) = (0.0, 150.0);

/// Runs one parsed invocation. Text meant for the user is appended to `out`.
pub fn dispatch(cli: &Cli, out: &mut String) -> Result<(), CliError> {
    if let Some(jobs) = cli.global.jobs {
        // a pool already configured by an earlier call in this process is kept
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.into())
            .build_global();
    }
    let g = &cli.global;
    match &cli.command {
        Command::Validate { scenario } => validate(scenario, g, out),
        Command::Simulate {
            scenario,
            overrides,
        } => simulate(scenario, overrides, g, out),
        Command::Calibrate(a) => calibrate(a, g, out),
        Command::Sweep {
            scenario,
            powers,
            monitor,
            overrides,
        } => sweep(
            scenario,
            powers.as_deref(),
            monitor.as_deref(),
            overrides,
            g,
            out,
        ),
        Command::Budget(a) => budget(a, out),
        Command::Reproduce { dir } => reproduce(dir, g, out),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a scenario file and applies `--seed` and the field overrides
/// before validation, so overridden values are validated too.
fn load_scenario(path: &Path, overrides: &Overrides, g: &GlobalArgs) -> Result<Scenario, CliError> {
    let text = read_text(path)?;
    let mut file = ScenarioFile::from_json(&text).map_err(|e| CliError::from_model(path, e))?;
    if let (Some(fiber), Some(length)) = (file.fiber.as_mut(), overrides.length_m) {
        fiber.length_m = length;
    }
    if let Some(c) = file.counting.as_mut() {
        if let Some(seed) = g.seed {
            c.seed = seed;
        }
        if let Some(n) = overrides.repetitions {
            c.repetitions = n;
        }
        if let Some(t) = overrides.acquisition_s {
            c.acquisition_s = t;
        }
        if let Some(t) = overrides.window_s {
            c.window_s = t;
        }
        if let Some(m) = overrides.matching {
            c.matching = m.into();
        }
    }
    validate_scenario(&file).map_err(|e| CliError::from_model(path, e))
}

fn overrides_json(o: &Overrides) -> Value {
    json!({
        "length_m": o.length_m,
        "repetitions": o.repetitions,
        "acquisition_s": o.acquisition_s,
        "window_s": o.window_s,
        "matching": o.matching.map(|m| format!("{m:?}")),
    })
}

/// The effective configuration echoed into each bundle. Thread count and
/// output location are left out: they do not change any result.
fn config_json(command: &str, scenario: &Scenario, mode: RunMode, extra: Value) -> Value {
    json!({
        "command": command,
        "mode": mode,
        "seed": scenario.counting.seed,
        "scenario_hash": scenario.content_hash(),
        "arguments": extra,
        "scenario": scenario.to_file(),
    })
}

fn write_bundle(
    bundle: &Bundle,
    root: &Path,
    hash: &str,
    command: &str,
) -> Result<PathBuf, CliError> {
    let dir = root.join(hash).join(command);
    bundle.write_to(&dir)?;
    Ok(dir)
}

fn validate(path: &Path, g: &GlobalArgs, out: &mut String) -> Result<(), CliError> {
    let s = load_scenario(path, &Overrides::default(), g)?;
    out.push_str(&format!(
        "valid: {} ({} groups, {} modes, {} quantum and {} classical channels, hash {})\n",
        s.name,
        s.modes().groups(),
        s.modes().len(),
        s.channels.quantum().count(),
        s.channels.classical().count(),
        s.short_hash()
    ));
    Ok(())
}

fn simulate(
    path: &Path,
    overrides: &Overrides,
    g: &GlobalArgs,
    out: &mut String,
) -> Result<(), CliError> {
    let s = load_scenario(path, overrides, g)?;
    let mode = g.mode.into();
    let result = modemux::pipeline::run_scenario(&s, mode)?;
    let mut bundle = simulation_bundle(&result);
    bundle.config = Some(config_json(
        "simulate",
        &s,
        mode,
        json!({ "overrides": overrides_json(overrides) }),
    ));
    let dir = write_bundle(&bundle, &g.output_dir, &s.short_hash(), "simulate")?;

    out.push_str(&format!("{} [{mode}, seed {}]\n", s.name, s.counting.seed));
    if let Some(fqp) = &result.group_fqp {
        let cells: Vec<String> = fqp.iter().map(|x| format!("{x:.4}")).collect();
        out.push_str(&format!("group FQP: {}\n", cells.join(" ")));
    }
    for m in &result.snr {
        out.push_str(&format!(
            "SNR {}: {} exact, {} approximate\n",
            m.mode,
            snr_text(m.snr.exact),
            snr_text(m.snr.approximate)
        ));
    }
    for w in &result.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out.push_str(&format!("wrote {}\n", dir.display()));
    Ok(())
}

fn calibrate(a: &args::CalibrateArgs, g: &GlobalArgs, out: &mut String) -> Result<(), CliError> {
    let s = load_scenario(&a.scenario, &a.overrides, g)?;
    let mode: RunMode = g.mode.into();
    let arguments = json!({
        "crosstalk": a.crosstalk.as_ref().map(|p| p.display().to_string()),
        "parameterization": format!("{:?}", a.parameterization),
        "composite": a.composite,
        "wavelength_nm": a.wavelength_nm,
        "fqp_groups": a.fqp_groups,
        "extinction_power_w": a.extinction_power,
        "snr_threshold_db": a.snr_threshold,
        "overrides": overrides_json(&a.overrides),
    });
    let (mut bundle, calibrated, failure) = match (&a.crosstalk, &a.fqp_groups) {
        (Some(csv), _) => calibrate_crosstalk(&s, csv, a, out)?,
        (None, Some(targets)) => calibrate_pattern(&s, targets, a, out)?,
        (None, None) => {
            return Err(CliError::Domain(
                "calibrate needs --crosstalk or --fqp-groups".into(),
            ))
        }
    };
    bundle.config = Some(config_json("calibrate", &s, mode, arguments));
    let dir = write_bundle(&bundle, &g.output_dir, &s.short_hash(), "calibrate")?;
    let scenario_path = dir.join("scenario.json");
    write_atomic(
        &scenario_path,
        format!("{}\n", calibrated.to_file().to_json()).as_bytes(),
    )?;
    out.push_str(&format!(
        "calibrated scenario: {}\n",
        scenario_path.display()
    ));
    out.push_str(&format!("wrote {}\n", dir.display()));
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

type CalibrationOutput = (Bundle, Scenario, Option<CliError>);

fn calibrate_crosstalk(
    s: &Scenario,
    csv: &Path,
    a: &args::CalibrateArgs,
    out: &mut String,
) -> Result<CalibrationOutput, CliError> {
    let targets = read_group_table_csv(read_text(csv)?.as_bytes())?;
    let mode = if a.composite {
        let w = match a
            .wavelength_nm
            .or_else(|| s.channels.quantum().next().map(|c| c.wavelength_nm))
        {
            Some(w) => w,
            None => {
                return Err(CliError::Domain(
                    "--composite needs --wavelength-nm or a quantum channel".into(),
                ))
            }
        };
        let link = Link::new(s, &[w])?;
        let band = link.band(w);
        CalibrationMode::Composite {
            mux: TransferMatrix::from_matrix(band.mux.clone(), (w, w)),
            demux: TransferMatrix::from_matrix(band.demux.clone(), (w, w)),
        }
    } else {
        CalibrationMode::FiberOnly
    };
    let options = CalibrationOptions {
        parameterization: a.parameterization.into(),
        mode,
        ..Default::default()
    };
    let (result, failure): (CalibrationResult, Option<CliError>) = match calibrate_coupling(
        &targets,
        &s.fiber,
        s.fiber.length_m,
        &options,
    ) {
        Ok(r) => (r, None),
        Err(PowerFlowError::CalibrationFailed { best, iterations }) => {
            let e = CliError::Domain(format!(
                    "calibration did not converge after {iterations} iterations (rms residual {:.4} dB); best fit written",
                    best.rms_residual_db
                ));
            (*best, Some(e))
        }
        Err(e) => return Err(e.into()),
    };
    let mut calibrated = s.clone();
    calibrated.fiber.inter_group = result.inter_group.clone();
    for (a_, b, d) in result.inter_group.pairs().filter(|p| p.2 > 0.0) {
        out.push_str(&format!("D[{},{}] = {d:.6e} 1/m\n", a_ + 1, b + 1));
    }
    out.push_str(&format!(
        "residual: rms {:.4} dB, max {:.4} dB\n",
        result.rms_residual_db, result.max_residual_db
    ));
    Ok((calibration_bundle(&targets, &result), calibrated, failure))
}

fn calibrate_pattern(
    s: &Scenario,
    targets: &[f64],
    a: &args::CalibrateArgs,
    out: &mut String,
) -> Result<CalibrationOutput, CliError> {
    let fit = fit_fqp_pattern(s, targets, &PatternFitOptions::default())?;
    let mut table = Table::new("group_fqp_fit", &["group", "target", "fitted", "residual"]);
    for (k, (t, f)) in targets.iter().zip(&fit.group_fqp).enumerate() {
        table.push([
            (k + 1).to_string(),
            t.to_string(),
            f.to_string(),
            (f - t).to_string(),
        ]);
        out.push_str(&format!("group {}: target {t:.4}, fitted {f:.4}\n", k + 1));
    }
    let mut coupling = Table::new("coupling", &["group_a", "group_b", "d_per_m"]);
    for (k, d) in fit.adjacent_d.iter().enumerate() {
        coupling.push([(k + 1).to_string(), (k + 2).to_string(), d.to_string()]);
        out.push_str(&format!("D[{},{}] = {d:.6e} 1/m\n", k + 1, k + 2));
    }
    out.push_str(&format!(
        "attenuation step: {:.6e} 1/m per group\nmax group FQP residual: {:.2e}\n",
        fit.attenuation_slope_per_m, fit.max_abs_residual
    ));
    let mut calibrated = fit.scenario.clone();
    let mut extinction = Value::Null;
    if let Some(p) = a.extinction_power {
        let e = fit_extinction(&calibrated, p, a.snr_threshold, EXTINCTION_RANGE_DB)?;
        out.push_str(&format!(
            "extinction: {:.4} dB keeps SNR >= {} dB at {p:e} W\n",
            e.extinction_db, a.snr_threshold
        ));
        extinction = serde_json::to_value(&e).expect("fit serializes");
        calibrated = e.scenario;
    }
    let summary = json!({
        "pattern": fit,
        "extinction": extinction,
        "scenario_hash": calibrated.content_hash(),
    });
    let bundle = Bundle {
        summary,
        config: None,
        tables: vec![table, coupling],
        plotdata: Vec::new(),
    };
    Ok((bundle, calibrated, None))
}

fn sweep(
    path: &Path,
    powers: Option<&[f64]>,
    monitor: Option<&[modemux::model::ModeLabel]>,
    overrides: &Overrides,
    g: &GlobalArgs,
    out: &mut String,
) -> Result<(), CliError> {
    let s = load_scenario(path, overrides, g)?;
    let mode = g.mode.into();
    let powers: Vec<f64> = match (powers, &s.sweep) {
        (Some(p), _) => p.to_vec(),
        (None, Some(sw)) => sw.output_powers_w.clone(),
        (None, None) => {
            return Err(CliError::Domain(
                "no sweep powers: pass --powers or add a sweep section".into(),
            ))
        }
    };
    let monitor: Vec<ModeId> = match monitor {
        Some(labels) => labels
            .iter()
            .map(|l| s.modes().mode_index(l.m, l.n))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Domain(e.to_string()))?,
        None => s.monitored_modes(),
    };
    let points = snr_vs_power_sweep(&s, &powers, &monitor, mode)?;
    let mut bundle = sweep_bundle(&s, mode, &points);
    bundle.config = Some(config_json(
        "sweep",
        &s,
        mode,
        json!({
            "powers_w": powers,
            "monitor": monitor.iter().map(|m| m.label()).collect::<Vec<_>>(),
            "overrides": overrides_json(overrides),
        }),
    ));
    let dir = write_bundle(&bundle, &g.output_dir, &s.short_hash(), "sweep")?;
    for p in &points {
        let cells: Vec<String> = p
            .snr
            .iter()
            .map(|m| format!("{} {}", m.mode, snr_text(m.snr.exact)))
            .collect();
        out.push_str(&format!(
            "P = {:e} W: {}\n",
            p.output_power_w,
            cells.join(", ")
        ));
    }
    out.push_str(&format!("wrote {}\n", dir.display()));
    Ok(())
}

fn snr_text(s: Snr) -> String {
    match s {
        Snr::Db(db) => format!("{db:.3} dB"),
        other => other.to_string(),
    }
}

fn budget(a: &args::BudgetArgs, out: &mut String) -> Result<(), CliError> {
    let nm = match (a.wavelength, a.wavelength_nm) {
        (Some(m), _) => m * 1e9,
        (None, Some(nm)) => nm,
        (None, None) => {
            return Err(CliError::Domain(
                "pass --wavelength or --wavelength-nm".into(),
            ))
        }
    };
    let b = max_baud_rate(a.power, nm, a.photons).map_err(|e| CliError::Domain(e.to_string()))?;
    out.push_str(&format!("max_baud = {:.6e} Bd\n", b.max_baud));
    out.push_str(&format!("photon_energy = {:.9e} J\n", b.photon_energy_j));
    out.push_str(&format!(
        "power = {:e} W, wavelength = {} nm, photons_per_pulse = {}\n",
        b.classical_power_w, b.wavelength_nm, b.photons_per_pulse
    ));
    Ok(())
}

fn reproduce(dir: &Path, g: &GlobalArgs, out: &mut String) -> Result<(), CliError> {
    let mode: RunMode = g.mode.into();
    let mut bundle = reproduce_report(dir, mode, g.seed)?;
    let hashes = bundle.summary["scenarios"].to_string();
    let hash = hex::encode(Sha256::digest(hashes.as_bytes()))[..16].to_string();
    bundle.config = Some(json!({
        "command": "reproduce",
        "mode": mode,
        "seed": g.seed,
        "scenarios": bundle.summary["scenarios"],
    }));
    let out_dir = write_bundle(&bundle, &g.output_dir, &hash, "reproduce")?;
    let checks = bundle.summary["checks"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let mut failed = 0;
    for c in &checks {
        let pass = c["pass"].as_bool().unwrap_or(false);
        failed += usize::from(!pass);
        out.push_str(&format!(
            "{} [{}] {}: {} (expected {})\n",
            if pass { "PASS" } else { "FAIL" },
            c["target"].as_str().unwrap_or(""),
            c["description"].as_str().unwrap_or(""),
            c["value"],
            c["expected"].as_str().unwrap_or(""),
        ));
    }
    out.push_str(&format!("wrote {}\n", out_dir.display()));
    if failed > 0 {
        return Err(CliError::ChecksFailed {
            failed,
            total: checks.len(),
        });
    }
    Ok(())
}
