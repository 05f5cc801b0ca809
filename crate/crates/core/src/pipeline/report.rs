use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::budget::max_baud_rate;
use super::run::{run_scenario, RunMode, SimulationResult};
use super::sweep::{snr_vs_power_sweep, SweepPoint};
use super::PipelineError;
use crate::counting::{write_stats_csv, StatsRow};
use crate::model::{Channel, ChannelPlan, ModelError, Scenario};
use crate::powerflow::{CalibrationResult, GroupTable};

/// Scenario files expected by [`reproduce_report`]: the per-mode loss
/// characterization, the fractional-quantum-power run and the SNR sweep.
pub const REPRODUCE_FILES: [&str; 3] = ["loss.json", "fqp.json", "snr.json"];

/// Group FQP measured with quantum channels on HG00, HG11 and HG22 after
/// 8 km: 5.2 % and 9.8 % in the unexcited groups 2 and 4; the rest spread
/// between 24 % and 34 % with low orders favoured.
pub const GROUP_FQP_ANCHORS: [f64; 5] = [0.34, 0.052, 0.27, 0.098, 0.24];
/// Classical output power up to which the measured SNR stayed above 10 dB.
pub const SNR_ANCHOR_POWER_W: f64 = 20e-9;
pub const SNR_ANCHOR_DB: f64 = 10.0;

/// One CSV file of a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I: IntoIterator<Item = S>, S: ToString>(&mut self, row: I) {
        self.rows
            .push(row.into_iter().map(|s| s.to_string()).collect());
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }
}

/// A pass/fail comparison against a measured reference value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub target: String,
    pub description: String,
    pub value: f64,
    pub expected: String,
    pub pass: bool,
}

impl Check {
    fn new(target: &str, description: String, value: f64, expected: String, pass: bool) -> Self {
        Self {
            target: target.to_string(),
            description,
            value,
            expected,
            pass,
        }
    }
}

/// Output of one command: `summary.json`, optional `config.json`,
/// `tables/*.csv` and `plotdata/*.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub summary: Value,
    pub config: Option<Value>,
    pub tables: Vec<Table>,
    pub plotdata: Vec<Table>,
}

impl Bundle {
    /// Writes every file atomically under `dir` and returns the paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
        let mut written = Vec::new();
        let mut put = |rel: PathBuf, bytes: &[u8]| -> Result<(), PipelineError> {
            let path = dir.join(rel);
            write_atomic(&path, bytes)?;
            written.push(path);
            Ok(())
        };
        put("summary.json".into(), pretty(&self.summary).as_bytes())?;
        if let Some(config) = &self.config {
            put("config.json".into(), pretty(config).as_bytes())?;
        }
        for t in &self.tables {
            put(
                Path::new("tables").join(format!("{}.csv", t.name)),
                &t.to_csv(),
            )?;
        }
        for t in &self.plotdata {
            put(
                Path::new("plotdata").join(format!("{}.csv", t.name)),
                &t.to_csv(),
            )?;
        }
        Ok(written)
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// Writes to a temporary file in the target directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

fn snr_cell(s: &crate::counting::Snr) -> String {
    s.to_string()
}

/// Tables and summary of one simulation.
pub fn simulation_bundle(result: &SimulationResult) -> Bundle {
    let m = result.modes.len();
    let fqp = result.fqp.as_ref();
    let rows: Vec<StatsRow> = (0..m)
        .map(|p| StatsRow {
            mode: result.modes[p].clone(),
            stats: result.stats[p].clone(),
            fqp: fqp.map_or(0.0, |f| f.fqp[p]),
            eps_fqp: fqp.map_or(0.0, |f| f.error[p]),
        })
        .collect();
    let mut stats_csv = Vec::new();
    write_stats_csv(&rows, &mut stats_csv).expect("in-memory write");
    let mut stats = Table::new("stats", &[]);
    {
        let mut r = csv::Reader::from_reader(stats_csv.as_slice());
        stats.header = r
            .headers()
            .expect("own csv")
            .iter()
            .map(String::from)
            .collect();
        for rec in r.records() {
            stats
                .rows
                .push(rec.expect("own csv").iter().map(String::from).collect());
        }
    }

    let mut errors = Table::new(
        "standard_errors",
        &["mode", "se_R_1p", "se_R_2p", "se_R_cp", "se_R_ap"],
    );
    for (label, se) in result.modes.iter().zip(&result.standard_errors) {
        errors.push(
            [label.clone()]
                .into_iter()
                .chain(se.iter().map(|x| x.to_string())),
        );
    }

    let mut stages = Table::new(
        "stages",
        &[
            "stage",
            "mode",
            "quantum_photon_rate_hz",
            "classical_power_w",
        ],
    );
    for s in &result.stages {
        for (p, label) in result.modes.iter().enumerate() {
            stages.push([
                s.name.to_string(),
                label.clone(),
                s.quantum_photon_rate_hz[p].to_string(),
                s.classical_power_w[p].to_string(),
            ]);
        }
    }

    let mut tables = vec![stats, errors, stages];
    let mut plotdata = Vec::new();
    let mut lp = Table::new("output_ratio", &["x", "y", "y_err"]);
    for (p, s) in result.stats.iter().enumerate() {
        lp.push([(p + 1) as f64, s.lp, s.eps_lp]);
    }
    plotdata.push(lp);

    if let Some(f) = fqp {
        let mut t = Table::new(
            "fqp",
            &[
                "mode",
                "FQP",
                "eps_FQP",
                "unnormalized",
                "clamped",
                "normalization_il_db",
            ],
        );
        let mut plot = Table::new("fqp", &["x", "y", "y_err"]);
        for p in 0..m {
            t.push([
                result.modes[p].clone(),
                f.fqp[p].to_string(),
                f.error[p].to_string(),
                f.unnormalized[p].to_string(),
                f.clamped[p].to_string(),
                result.normalization_il_db[p].to_string(),
            ]);
            plot.push([(p + 1) as f64, f.fqp[p], f.error[p]]);
        }
        tables.push(t);
        plotdata.push(plot);
    }
    if let (Some(g), Some(f)) = (&result.group_fqp, fqp) {
        let sizes: Vec<usize> = (1..=g.len()).collect();
        let mut t = Table::new("group_fqp", &["group", "FQP", "eps_FQP"]);
        let mut plot = Table::new("group_fqp", &["x", "y", "y_err"]);
        let mut start = 0;
        for (k, (x, size)) in g.iter().zip(sizes).enumerate() {
            // per-mode errors of a group added in quadrature
            let err = f.error[start..start + size]
                .iter()
                .map(|e| e * e)
                .sum::<f64>()
                .sqrt();
            start += size;
            t.push([(k + 1).to_string(), x.to_string(), err.to_string()]);
            plot.push([(k + 1) as f64, *x, err]);
        }
        tables.push(t);
        plotdata.push(plot);
    }
    let mut snr = Table::new(
        "snr",
        &[
            "mode",
            "snr_exact_db",
            "snr_approx_db",
            "R_c0",
            "R_cP",
            "R_a",
        ],
    );
    for s in &result.snr {
        snr.push([
            s.mode.clone(),
            snr_cell(&s.snr.exact),
            snr_cell(&s.snr.approximate),
            s.rc0_hz.to_string(),
            s.rcp_hz.to_string(),
            s.ra_hz.to_string(),
        ]);
    }
    tables.push(snr);

    let summary = json!({
        "provenance": result.provenance,
        "classical_input_w": result.classical_input_w,
        "group_fqp": result.group_fqp,
        "snr": result.snr,
        "warnings": result.warnings,
    });
    Bundle {
        summary,
        config: None,
        tables,
        plotdata,
    }
}

pub fn sweep_bundle(scenario: &Scenario, mode: RunMode, points: &[SweepPoint]) -> Bundle {
    let mut t = Table::new(
        "snr_sweep",
        &[
            "output_power_w",
            "mode",
            "snr_exact_db",
            "snr_approx_db",
            "R_c0",
            "R_cP",
            "R_a",
        ],
    );
    let mut plots: Vec<Table> = Vec::new();
    for point in points {
        for s in &point.snr {
            t.push([
                point.output_power_w.to_string(),
                s.mode.clone(),
                snr_cell(&s.snr.exact),
                snr_cell(&s.snr.approximate),
                s.rc0_hz.to_string(),
                s.rcp_hz.to_string(),
                s.ra_hz.to_string(),
            ]);
            let name = format!("snr_{}", s.mode);
            let plot = match plots.iter_mut().find(|p| p.name == name) {
                Some(p) => p,
                None => {
                    plots.push(Table::new(&name, &["x", "y", "y_err"]));
                    plots.last_mut().expect("just pushed")
                }
            };
            if let Some(db) = s.snr.exact.db() {
                plot.push([point.output_power_w, db, 0.0]);
            }
        }
    }
    let summary = json!({
        "provenance": {
            "scenario": scenario.name,
            "scenario_hash": scenario.content_hash(),
            "seed": scenario.counting.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "mode": mode,
        },
        "points": points,
    });
    Bundle {
        summary,
        config: None,
        tables: vec![t],
        plotdata: plots,
    }
}

pub fn calibration_bundle(targets: &GroupTable, result: &CalibrationResult) -> Bundle {
    let q = targets.len();
    let mut t = Table::new(
        "crosstalk_fit",
        &[
            "group_in",
            "group_out",
            "target_db",
            "predicted_db",
            "residual_db",
        ],
    );
    for (a, row) in targets.iter().enumerate().take(q) {
        for (b, cell) in row.iter().enumerate().take(q) {
            let target = cell.filter(|x| x.is_finite());
            let predicted = result.predicted_db[(a, b)];
            t.push([
                (a + 1).to_string(),
                (b + 1).to_string(),
                target.map_or(String::new(), |x| x.to_string()),
                predicted.to_string(),
                target.map_or(String::new(), |x| (predicted - x).to_string()),
            ]);
        }
    }
    let mut d = Table::new("coupling", &["group_a", "group_b", "d_per_m"]);
    for (a, b, v) in result.inter_group.pairs() {
        d.push([(a + 1).to_string(), (b + 1).to_string(), v.to_string()]);
    }
    let summary = json!({
        "rms_residual_db": result.rms_residual_db,
        "max_residual_db": result.max_residual_db,
        "iterations": result.iterations,
        "parameters": result.parameters.iter().map(|(pairs, v)| json!({
            "groups": pairs.iter().map(|(a, b)| [a + 1, b + 1]).collect::<Vec<_>>(),
            "d_per_m": v,
        })).collect::<Vec<_>>(),
    });
    Bundle {
        summary,
        config: None,
        tables: vec![t, d],
        plotdata: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRow {
    pub mode: String,
    pub lp: f64,
    pub eps_lp: f64,
    pub lp_db: f64,
}

/// Output-to-input ratio of every mode measured on its own: one run per
/// mode with a single quantum channel at `R_in` and no classical light.
pub fn loss_characterization(
    scenario: &Scenario,
    mode: RunMode,
) -> Result<Vec<LossRow>, PipelineError> {
    let wavelength = scenario
        .channels
        .quantum()
        .next()
        .map(|c| c.wavelength_nm)
        .or_else(|| scenario.counting_filter().map(|f| f.center_nm))
        .ok_or_else(|| PipelineError::Invalid("no quantum wavelength to characterize at".into()))?;
    scenario
        .modes()
        .iter()
        .map(|id| {
            let mut s = scenario.clone();
            s.channels = ChannelPlan::new(vec![Channel::quantum(
                id,
                wavelength,
                scenario.counting.pair_rate_in_hz,
            )]);
            s.sweep = None;
            let r = run_scenario(&s, mode)?;
            let st = &r.stats[id.index()];
            Ok(LossRow {
                mode: id.label(),
                lp: st.lp,
                eps_lp: st.eps_lp,
                lp_db: if st.lp > 0.0 {
                    10.0 * st.lp.log10()
                } else {
                    f64::NEG_INFINITY
                },
            })
        })
        .collect()
}

fn load(path: &Path) -> Result<Scenario, PipelineError> {
    let loaded = Scenario::load(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    loaded.map_err(|e| match e {
        ModelError::Invalid(v) => PipelineError::Invalid(format!("{}: {v}", path.display())),
        other => PipelineError::Invalid(format!("{}: {other}", path.display())),
    })
}

/// Runs the three reference scenarios in `dir` and compares the results
/// with the measured reference values. `seed` replaces the scenarios' own seeds.
pub fn reproduce_report(
    dir: &Path,
    mode: RunMode,
    seed: Option<u64>,
) -> Result<Bundle, PipelineError> {
    let paths: Vec<PathBuf> = REPRODUCE_FILES.iter().map(|f| dir.join(f)).collect();
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.is_file()).cloned().collect();
    if !missing.is_empty() {
        return Err(PipelineError::MissingScenarios(missing));
    }
    let load = |path: &Path| {
        load(path).map(|mut s| {
            if let Some(seed) = seed {
                s.counting.seed = seed;
            }
            s
        })
    };
    let loss = load(&paths[0])?;
    let fqp = load(&paths[1])?;
    let snr_scenario = load(&paths[2])?;
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    let mut plotdata = Vec::new();

    // per-mode loss
    let rows = loss_characterization(&loss, mode)?;
    let mut t = Table::new("loss_ratio", &["mode", "L_p", "eps_Lp", "L_p_db"]);
    let mut plot = Table::new("loss_ratio", &["x", "y", "y_err"]);
    for (p, r) in rows.iter().enumerate() {
        t.push([
            r.mode.clone(),
            r.lp.to_string(),
            r.eps_lp.to_string(),
            r.lp_db.to_string(),
        ]);
        plot.push([(p + 1) as f64, r.lp, r.eps_lp]);
    }
    let worst = rows.iter().map(|r| r.lp).fold(f64::INFINITY, f64::min);
    checks.push(Check::new(
        "loss-ratio",
        "every mode transmits heralded photons (L_p > 0)".into(),
        worst,
        "> 0".into(),
        worst > 0.0,
    ));
    tables.push(t);
    plotdata.push(plot);

    // fractional quantum power
    let result = run_scenario(&fqp, mode)?;
    let sim = simulation_bundle(&result);
    for mut t in sim.tables.into_iter().filter(|t| t.name == "fqp") {
        t.name = "mode_fqp".into();
        tables.push(t);
    }
    for mut t in sim
        .plotdata
        .into_iter()
        .filter(|t| t.name == "fqp" || t.name == "group_fqp")
    {
        t.name = if t.name == "fqp" {
            "mode_fqp"
        } else {
            "group_fqp"
        }
        .into();
        plotdata.push(t);
    }
    let group = result.group_fqp.clone().ok_or_else(|| {
        PipelineError::Invalid("FQP scenario yields no fractional quantum power".into())
    })?;
    let mut t = Table::new("group_fqp", &["group", "FQP", "anchor", "allowed", "pass"]);
    let tolerance = |g: usize| -> (f64, f64) {
        match g {
            1 => (GROUP_FQP_ANCHORS[1] - 0.015, GROUP_FQP_ANCHORS[1] + 0.015),
            3 => (GROUP_FQP_ANCHORS[3] - 0.02, GROUP_FQP_ANCHORS[3] + 0.02),
            _ => (0.20, 0.38),
        }
    };
    for (g, x) in group.iter().enumerate() {
        let (lo, hi) = tolerance(g);
        let pass = (lo..=hi).contains(x);
        t.push([
            (g + 1).to_string(),
            x.to_string(),
            GROUP_FQP_ANCHORS
                .get(g)
                .map_or(String::new(), |a| a.to_string()),
            format!("[{lo:.3}, {hi:.3}]"),
            pass.to_string(),
        ]);
        checks.push(Check::new(
            "group-fqp",
            format!("group {} fractional quantum power", g + 1),
            *x,
            format!("[{lo:.3}, {hi:.3}]"),
            pass,
        ));
    }
    let excited: f64 = [0, 2, 4].iter().filter_map(|&g| group.get(g)).sum();
    checks.push(Check::new(
        "group-fqp",
        "groups 1, 3 and 5 together".into(),
        excited,
        ">= 0.80".into(),
        excited >= 0.80,
    ));
    tables.push(t);

    // SNR sweep
    let monitor = snr_scenario.monitored_modes();
    let mut powers = snr_scenario
        .sweep
        .as_ref()
        .map(|s| s.output_powers_w.clone())
        .unwrap_or_else(|| vec![0.0, 2e-9, 5e-9, 1e-8, 2e-8, 5e-8, 1e-7, 2e-7]);
    if powers.is_empty() {
        powers.push(SNR_ANCHOR_POWER_W);
    }
    let points = snr_vs_power_sweep(&snr_scenario, &powers, &monitor, mode)?;
    let sweep = sweep_bundle(&snr_scenario, mode, &points);
    tables.extend(sweep.tables);
    plotdata.extend(sweep.plotdata);
    let anchor = snr_vs_power_sweep(
        &snr_scenario,
        &[SNR_ANCHOR_POWER_W, 10.0 * SNR_ANCHOR_POWER_W],
        &monitor,
        RunMode::Analytic,
    )?;
    for (k, s) in anchor[0].snr.iter().enumerate() {
        let at = s.snr.exact;
        checks.push(Check::new(
            "snr-anchor",
            format!("{} SNR at 20 nW classical output power (dB)", s.mode),
            at.db().unwrap_or(f64::INFINITY),
            ">= 10".into(),
            at.at_least(SNR_ANCHOR_DB),
        ));
        if let (Some(a), Some(b)) = (at.db(), anchor[1].snr[k].snr.exact.db()) {
            let slope = b - a;
            checks.push(Check::new(
                "snr-slope",
                format!("{} SNR change per decade of classical power (dB)", s.mode),
                slope,
                "-10 +/- 0.1".into(),
                (slope + 10.0).abs() <= 0.1,
            ));
        }
    }

    let budget = max_baud_rate(SNR_ANCHOR_POWER_W, 1565.0, 20.0)?;
    checks.push(Check::new(
        "baud-budget",
        "shot-noise baud limit at 20 nW, 1565 nm, 20 photons per pulse (Bd)".into(),
        budget.max_baud,
        "[7.72e9, 7.96e9]".into(),
        (7.72e9..=7.96e9).contains(&budget.max_baud),
    ));
    let mut t = Table::new(
        "checks",
        &["target", "description", "value", "expected", "pass"],
    );
    for c in &checks {
        t.push([
            c.target.clone(),
            c.description.clone(),
            c.value.to_string(),
            c.expected.clone(),
            c.pass.to_string(),
        ]);
    }
    tables.push(t);

    let summary = json!({
        "mode": mode,
        "version": env!("CARGO_PKG_VERSION"),
        "scenarios": {
            "loss": loss.content_hash(),
            "fqp": fqp.content_hash(),
            "snr": snr_scenario.content_hash(),
        },
        "all_pass": checks.iter().all(|c| c.pass),
        "checks": checks,
    });
    Ok(Bundle {
        summary,
        config: None,
        tables,
        plotdata,
    })
}
