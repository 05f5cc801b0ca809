use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::link::{back_to_back_il_db, Link};
use super::PipelineError;
use crate::counting::{
    accidental_rate, count_coincidences, derived_rng, fractional_quantum_power, group_fqp,
    poisson_times, route_stream, snr, thin_with, CoincidenceStats, CountingError, EventStream,
    FqpResult, Matching, RepetitionSample, SnrPair, StreamPurpose,
};
use crate::model::{ChannelKind, Scenario};
use crate::units::photon_energy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Expected rates in closed form.
    #[default]
    Analytic,
    /// Timestamp-level sampling of every stream.
    MonteCarlo,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Analytic => "analytic",
            Self::MonteCarlo => "monte-carlo",
        })
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "monte-carlo" | "montecarlo" | "mc" => Ok(Self::MonteCarlo),
            other => Err(format!(
                "unknown mode {other:?} (expected analytic or monte-carlo)"
            )),
        }
    }
}

/// Expected per-mode quantities after one element of the link.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage {
    pub name: &'static str,
    /// Idler photons per second in each mode.
    pub quantum_photon_rate_hz: Vec<f64>,
    pub classical_power_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSnr {
    pub mode: String,
    pub snr: SnrPair,
    /// Coincidence rate without classical light.
    pub rc0_hz: f64,
    /// Coincidence rate with classical light.
    pub rcp_hz: f64,
    /// Accidental rate without classical light.
    pub ra_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub version: &'static str,
    pub mode: RunMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub provenance: Provenance,
    /// Output mode labels; every per-mode vector follows this order.
    pub modes: Vec<String>,
    /// Launch power of each classical channel, in plan order.
    pub classical_input_w: Vec<f64>,
    pub stages: Vec<Stage>,
    pub stats: Vec<CoincidenceStats>,
    /// Standard errors of `(R_1p, R_2p, R_cp, R_ap)`; zero in analytic mode.
    pub standard_errors: Vec<[f64; 4]>,
    pub normalization_il_db: Vec<f64>,
    pub fqp: Option<FqpResult>,
    pub group_fqp: Option<Vec<f64>>,
    pub snr: Vec<ModeSnr>,
    pub warnings: Vec<String>,
}

/// What reaches the detectors, derived from the link once per run.
struct Sources {
    /// `(input mode, pair rate, idler arrival probability per output)`; the
    /// probabilities include the counting filter but not the detector.
    quantum: Vec<(usize, f64, Vec<f64>)>,
    /// Classical photons per second reaching each output detector.
    leakage: Vec<f64>,
}

fn sources(scenario: &Scenario, link: &Link, classical_input: &[f64]) -> Sources {
    let m = scenario.modes().len();
    let filter = |w: f64| {
        scenario
            .counting_filter()
            .map_or(1.0, |f| f.transmittance(w))
    };
    let mut quantum = Vec::new();
    let mut leakage = vec![0.0; m];
    let mut classical = classical_input.iter();
    for ch in &scenario.channels.channels {
        let p = ch.mode.index();
        let f = filter(ch.wavelength_nm);
        match ch.kind {
            ChannelKind::Quantum { pair_rate_hz } => {
                let probs = (0..m)
                    .map(|c| link.transmittance(ch.wavelength_nm, p, c) * f)
                    .collect();
                quantum.push((p, pair_rate_hz, probs));
            }
            ChannelKind::Classical { .. } => {
                let power = *classical.next().expect("one power per classical channel");
                let photons = power * f / photon_energy(ch.wavelength_nm);
                for (c, l) in leakage.iter_mut().enumerate() {
                    *l += photons * link.transmittance(ch.wavelength_nm, p, c);
                }
            }
        }
    }
    Sources { quantum, leakage }
}

fn stages(
    scenario: &Scenario,
    link: &Link,
    classical_input: &[f64],
) -> Result<Vec<Stage>, PipelineError> {
    const NAMES: [&str; 6] = ["source", "mux", "fiber", "demux", "filter", "detector"];
    let m = scenario.modes().len();
    let eta = scenario.idler_detector.efficiency;
    let mut q = vec![vec![0.0; m]; NAMES.len()];
    let mut c = vec![vec![0.0; m]; NAMES.len()];
    let mut classical = classical_input.iter();
    for ch in &scenario.channels.channels {
        let (target, amount) = match ch.kind {
            ChannelKind::Quantum { pair_rate_hz } => (&mut q, pair_rate_hz),
            ChannelKind::Classical { .. } => (
                &mut c,
                *classical.next().expect("one power per classical channel"),
            ),
        };
        let band = link.band(ch.wavelength_nm);
        let f = scenario
            .counting_filter()
            .map_or(1.0, |f| f.transmittance(ch.wavelength_nm));
        let mut v = nalgebra::DVector::zeros(m);
        v[ch.mode.index()] = amount;
        let after_mux = &band.mux * &v;
        let after_fiber = &band.fiber * &after_mux;
        let after_demux = &band.demux * &after_fiber;
        let after_filter = &after_demux * f;
        let detected = &after_filter * eta;
        for (s, vec) in [
            v,
            after_mux,
            after_fiber,
            after_demux,
            after_filter,
            detected,
        ]
        .iter()
        .enumerate()
        {
            for (acc, x) in target[s].iter_mut().zip(vec.iter()) {
                *acc += x;
            }
        }
    }
    let mut out = Vec::with_capacity(NAMES.len());
    for ((name, mut quantum), mut classical) in NAMES.into_iter().zip(q).zip(c) {
        for v in [&mut quantum, &mut classical] {
            let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for x in v.iter_mut() {
                if x.is_nan() || *x < -1e-12 * scale {
                    return Err(PipelineError::Stage {
                        stage: name,
                        message: format!("invalid expected power {x}"),
                    });
                }
                *x = x.max(0.0);
            }
        }
        out.push(Stage {
            name,
            quantum_photon_rate_hz: quantum,
            classical_power_w: classical,
        });
    }
    Ok(out)
}

/// Singles and raw coincidences of one output, with and without classical
/// light.
#[derive(Debug, Clone, Copy)]
struct OutputRates {
    r2: f64,
    rcp: f64,
    r2_dark: f64,
    rcp_dark: f64,
}

fn analytic_rates(scenario: &Scenario, src: &Sources) -> (f64, Vec<OutputRates>) {
    let eta_h = scenario.herald_detector.efficiency;
    let eta_d = scenario.idler_detector.efficiency;
    let dark_d = scenario.idler_detector.dark_rate_hz;
    let tc = scenario.counting.window_s;
    let total: f64 = src.quantum.iter().map(|q| q.1).sum();
    let r1 = eta_h * total + scenario.herald_detector.dark_rate_hz;
    let coincidences = |r2: f64, rt: f64| match scenario.counting.matching {
        // uncorrelated herald clicks against idler clicks not already
        // claimed by their own partner
        Matching::Greedy => rt + 2.0 * tc * (r1 - rt) * (r2 - rt),
        Matching::AllPairs => rt + 2.0 * tc * r1 * r2,
    };
    let outputs = (0..src.leakage.len())
        .map(|c| {
            let idler: f64 = src.quantum.iter().map(|(_, r, probs)| r * probs[c]).sum();
            let rt = eta_h * eta_d * idler;
            let r2_dark = eta_d * idler + dark_d;
            let r2 = r2_dark + eta_d * src.leakage[c];
            OutputRates {
                r2,
                rcp: coincidences(r2, rt),
                r2_dark,
                rcp_dark: coincidences(r2_dark, rt),
            }
        })
        .collect();
    (r1, outputs)
}

fn merge_all(
    label: &str,
    duration: f64,
    streams: impl IntoIterator<Item = EventStream>,
) -> EventStream {
    streams
        .into_iter()
        .fold(EventStream::empty(label, duration), |acc, s| acc.merge(&s))
}

/// One Monte Carlo repetition. Every random draw comes from a stream keyed
/// by `(purpose, channel or output, repetition)`.
fn mc_repetition(
    scenario: &Scenario,
    src: &Sources,
    rep: u32,
) -> Result<(f64, Vec<OutputRates>), CountingError> {
    let cfg = &scenario.counting;
    let seed = cfg.seed;
    let dt = cfg.acquisition_s;
    let m = src.leakage.len();
    let eta_d = scenario.idler_detector.efficiency;

    let mut herald_parts = Vec::with_capacity(src.quantum.len() + 1);
    let mut idler_parts: Vec<Vec<EventStream>> = vec![Vec::new(); m];
    for (k, (_, rate, probs)) in src.quantum.iter().enumerate() {
        let k = k as u32;
        let pairs = EventStream {
            label: format!("pairs[{k}]"),
            duration_s: dt,
            timestamps: poisson_times(
                *rate,
                dt,
                &mut derived_rng(seed, StreamPurpose::Pairs, k, rep),
            ),
        };
        let mut rng = derived_rng(seed, StreamPurpose::HeraldThinning, k, rep);
        herald_parts.push(thin_with(
            &pairs,
            scenario.herald_detector.efficiency,
            &mut rng,
        )?);
        let detect: Vec<f64> = probs.iter().map(|p| (p * eta_d).min(1.0)).collect();
        let mut rng = derived_rng(seed, StreamPurpose::Routing, k, rep);
        for (c, s) in route_stream(&pairs, &detect, &mut rng)?
            .into_iter()
            .enumerate()
        {
            idler_parts[c].push(s);
        }
    }
    let mut rng = derived_rng(seed, StreamPurpose::HeraldDark, 0, rep);
    herald_parts.push(EventStream {
        label: "herald dark".into(),
        duration_s: dt,
        timestamps: poisson_times(scenario.herald_detector.dark_rate_hz, dt, &mut rng),
    });
    let herald = merge_all("herald", dt, herald_parts);
    let r1 = herald.rate();

    let mut outputs = Vec::with_capacity(m);
    for (c, mut parts) in idler_parts.into_iter().enumerate() {
        let c32 = c as u32;
        let mut rng = derived_rng(seed, StreamPurpose::OutputDark, c32, rep);
        parts.push(EventStream {
            label: "idler dark".into(),
            duration_s: dt,
            timestamps: poisson_times(scenario.idler_detector.dark_rate_hz, dt, &mut rng),
        });
        let idler_dark = merge_all("idler", dt, parts);
        let mut rng = derived_rng(seed, StreamPurpose::Leakage, c32, rep);
        let leak = EventStream {
            label: "leakage".into(),
            duration_s: dt,
            timestamps: poisson_times(eta_d * src.leakage[c], dt, &mut rng),
        };
        let dark = count_coincidences(&herald, &idler_dark, cfg.window_s, cfg.matching)?;
        let (r2, rcp) = if leak.is_empty() {
            (idler_dark.rate(), dark.rate_hz)
        } else {
            let idler = idler_dark.merge(&leak);
            (
                idler.rate(),
                count_coincidences(&herald, &idler, cfg.window_s, cfg.matching)?.rate_hz,
            )
        };
        outputs.push(OutputRates {
            r2,
            rcp,
            r2_dark: idler_dark.rate(),
            rcp_dark: dark.rate_hz,
        });
    }
    Ok((r1, outputs))
}

/// Runs the scenario with its classical channels at their planned launch
/// powers.
/// Herald rate and per-output rates of one Monte Carlo repetition.
type Repetition = (f64, Vec<OutputRates>);

pub fn run_scenario(scenario: &Scenario, mode: RunMode) -> Result<SimulationResult, PipelineError> {
    let powers: Vec<f64> = scenario
        .channels
        .classical()
        .map(|c| match c.kind {
            ChannelKind::Classical { power_w } => power_w,
            ChannelKind::Quantum { .. } => unreachable!(),
        })
        .collect();
    run_with_classical_input(scenario, mode, &powers)
}

/// Runs the scenario with explicit launch powers for its classical channels
/// (plan order).
pub fn run_with_classical_input(
    scenario: &Scenario,
    mode: RunMode,
    classical_input_w: &[f64],
) -> Result<SimulationResult, PipelineError> {
    let n_classical = scenario.channels.classical().count();
    if classical_input_w.len() != n_classical {
        return Err(PipelineError::Invalid(format!(
            "expected {n_classical} classical powers, got {}",
            classical_input_w.len()
        )));
    }
    if let Some(p) = classical_input_w
        .iter()
        .find(|p| !(**p >= 0.0 && p.is_finite()))
    {
        return Err(PipelineError::Invalid(format!(
            "classical power must be nonnegative, got {p}"
        )));
    }
    let modes = scenario.modes();
    let link = Link::new(scenario, &[])?;
    let stage_records = stages(scenario, &link, classical_input_w)?;
    let src = sources(scenario, &link, classical_input_w);
    let cfg = &scenario.counting;
    let tc = cfg.window_s;
    let r_in = cfg.pair_rate_in_hz;
    let m = modes.len();

    let mut stats = Vec::with_capacity(m);
    let mut standard_errors = Vec::with_capacity(m);
    // (R_c(0), R_c(P), R_a(0)) per output
    let mut snr_inputs = Vec::with_capacity(m);
    match mode {
        RunMode::Analytic => {
            let (r1, outputs) = analytic_rates(scenario, &src);
            for o in outputs {
                stats.push(CoincidenceStats::from_rates(r1, o.r2, o.rcp, tc, r_in)?);
                standard_errors.push([0.0; 4]);
                snr_inputs.push((o.rcp_dark, o.rcp, accidental_rate(r1, o.r2_dark, tc)));
            }
        }
        RunMode::MonteCarlo => {
            let reps = (0..cfg.repetitions)
                .into_par_iter()
                .map(|rep| mc_repetition(scenario, &src, rep))
                .collect::<Result<Vec<_>, _>>()?;
            let mean = |f: &dyn Fn(&Repetition) -> f64| {
                reps.iter().map(f).sum::<f64>() / reps.len() as f64
            };
            let r1_mean = mean(&|r| r.0);
            for c in 0..m {
                let samples = reps
                    .iter()
                    .map(|(r1, o)| RepetitionSample {
                        r1_hz: *r1,
                        r2_hz: o[c].r2,
                        rcp_hz: o[c].rcp,
                    })
                    .collect();
                let s = CoincidenceStats::from_samples(samples, tc, r_in)?;
                standard_errors.push(s.standard_errors(tc));
                stats.push(s);
                let rc0 = mean(&|r| r.1[c].rcp_dark);
                let r2_dark = mean(&|r| r.1[c].r2_dark);
                snr_inputs.push((rc0, stats[c].rcp_hz, accidental_rate(r1_mean, r2_dark, tc)));
            }
        }
    }
    if let Some((c, _)) = stats.iter().enumerate().find(|(_, s)| {
        [s.r1_hz, s.r2_hz, s.rcp_hz, s.rap_hz]
            .iter()
            .any(|x| !(x.is_finite() && *x >= 0.0))
    }) {
        return Err(PipelineError::Stage {
            stage: "estimators",
            message: format!("non-physical rate on output {}", c + 1),
        });
    }

    let mut warnings = Vec::new();
    let quantum_wavelength = scenario.channels.quantum().next().map(|c| c.wavelength_nm);
    let normalization_il_db = match (&cfg.normalization_il_db, quantum_wavelength) {
        (Some(il), _) => il.clone(),
        (None, Some(w)) => back_to_back_il_db(scenario, w)?,
        (None, None) => vec![0.0; m],
    };
    let (fqp, group) = if quantum_wavelength.is_none() {
        (None, None)
    } else {
        let rates: Vec<(f64, f64)> = stats.iter().map(|s| (s.rcp_hz, s.rap_hz)).collect();
        match fractional_quantum_power(&rates, r_in, &normalization_il_db) {
            Ok(f) => {
                if f.clamped.iter().any(|c| *c) {
                    warnings.push("negative net coincidences clamped to zero in FQP".to_string());
                }
                let g = group_fqp(&f.fqp, &modes);
                (Some(f), Some(g))
            }
            Err(CountingError::NoSignal) => {
                warnings.push(
                    "no output has a positive net coincidence rate; FQP not computed".to_string(),
                );
                (None, None)
            }
            Err(e) => return Err(e.into()),
        }
    };
    let snr_records = scenario
        .monitored_modes()
        .into_iter()
        .map(|id| {
            let (rc0, rcp, ra) = snr_inputs[id.index()];
            ModeSnr {
                mode: id.label(),
                snr: snr(rc0, rcp, ra),
                rc0_hz: rc0,
                rcp_hz: rcp,
                ra_hz: ra,
            }
        })
        .collect();

    Ok(SimulationResult {
        provenance: Provenance {
            scenario: scenario.name.clone(),
            scenario_hash: scenario.content_hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION"),
            mode,
        },
        modes: modes.iter().map(|id| id.label()).collect(),
        classical_input_w: classical_input_w.to_vec(),
        stages: stage_records,
        stats,
        standard_errors,
        normalization_il_db,
        fqp,
        group_fqp: group,
        snr: snr_records,
        warnings,
    })
}
