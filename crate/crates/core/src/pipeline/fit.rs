use serde::Serialize;

use super::run::{run_with_classical_input, RunMode};
use super::sweep::snr_vs_power_sweep;
use super::PipelineError;
use crate::counting::Snr;
use crate::model::{ChannelPlan, InterGroupCoupling, Scenario};
use crate::powerflow::{fit_box_least_squares, FitOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct PatternFitOptions {
    /// Upper bound of the per-group attenuation step, 1/m.
    pub max_slope_per_m: f64,
    /// Start points: every uniform `log10 D` is paired with every slope.
    pub start_log10_d: Vec<f64>,
    pub start_slopes_per_m: Vec<f64>,
    pub fit: FitOptions,
}

impl Default for PatternFitOptions {
    fn default() -> Self {
        Self {
            max_slope_per_m: 1e-4,
            start_log10_d: vec![-6.0, -5.0, -4.0],
            start_slopes_per_m: vec![0.0, 1e-5],
            fit: FitOptions {
                golden_sweeps: 0,
                ..FitOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternFit {
    #[serde(skip)]
    pub scenario: Scenario,
    /// `D` between groups `g` and `g + 1`, 1/m.
    pub adjacent_d: Vec<f64>,
    /// Attenuation added per group above the first, 1/m.
    pub attenuation_slope_per_m: f64,
    pub group_fqp: Vec<f64>,
    pub max_abs_residual: f64,
    pub iterations: usize,
}

/// The scenario with neighbouring-group coupling `adjacent` and attenuation
/// `base + slope * g` (zero-based group `g`), where `base` is the lowest
/// per-mode attenuation of the input scenario.
fn with_fiber_parameters(scenario: &Scenario, adjacent: &[f64], slope: f64) -> Scenario {
    let mut s = scenario.clone();
    let base = scenario
        .fiber
        .attenuation
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let group_of = s.modes().group_of();
    s.fiber.inter_group = InterGroupCoupling::adjacent(adjacent);
    s.fiber.attenuation = group_of.iter().map(|&g| base + slope * g as f64).collect();
    s
}

fn quantum_only(scenario: &Scenario) -> Scenario {
    let mut s = scenario.clone();
    s.channels = ChannelPlan::new(scenario.channels.quantum().cloned().collect());
    s
}

/// Group FQP of the scenario's quantum channels alone, in analytic mode.
fn group_pattern(scenario: &Scenario) -> Result<Vec<f64>, PipelineError> {
    let result = run_with_classical_input(&quantum_only(scenario), RunMode::Analytic, &[])?;
    result
        .group_fqp
        .ok_or_else(|| PipelineError::Invalid("scenario yields no fractional quantum power".into()))
}

/// Fits neighbouring-group coupling and a per-group attenuation step so that
/// the group FQP of the scenario's quantum channels matches `targets`.
pub fn fit_fqp_pattern(
    scenario: &Scenario,
    targets: &[f64],
    options: &PatternFitOptions,
) -> Result<PatternFit, PipelineError> {
    let q = scenario.modes().groups();
    if targets.len() != q {
        return Err(PipelineError::Invalid(format!(
            "expected {q} group targets, got {}",
            targets.len()
        )));
    }
    if scenario.channels.quantum().next().is_none() {
        return Err(PipelineError::Invalid(
            "pattern fit needs at least one quantum channel".into(),
        ));
    }
    // slope is searched in units of 1e-6 1/m to keep the parameters comparable
    const SLOPE_UNIT: f64 = 1e-6;
    let n_d = q - 1;
    let (lo, hi) = scenario.fiber.admissible_d;
    let decode = |x: &[f64]| {
        let d: Vec<f64> = x[..n_d].iter().map(|l| 10f64.powf(*l)).collect();
        (d, x[n_d] * SLOPE_UNIT)
    };
    let residuals = |x: &[f64]| {
        let (d, slope) = decode(x);
        match group_pattern(&with_fiber_parameters(scenario, &d, slope)) {
            Ok(g) => g.iter().zip(targets).map(|(a, b)| a - b).collect(),
            Err(_) => vec![1e3; q],
        }
    };
    let mut lower = vec![lo.log10(); n_d];
    let mut upper = vec![hi.log10(); n_d];
    lower.push(0.0);
    upper.push(options.max_slope_per_m / SLOPE_UNIT);
    // the landscape has shallow local minima, so start from a small grid of
    // uniform couplings and slopes and keep the best fit
    let mut best: Option<crate::powerflow::FitOutcome> = None;
    for &start_d in &options.start_log10_d {
        for &start_slope in &options.start_slopes_per_m {
            let mut x0 = vec![start_d.clamp(lower[0], upper[0]); n_d];
            x0.push((start_slope / SLOPE_UNIT).clamp(lower[n_d], upper[n_d]));
            let outcome = fit_box_least_squares(&residuals, &x0, &lower, &upper, &options.fit);
            if best.as_ref().is_none_or(|b| outcome.cost < b.cost) {
                best = Some(outcome);
            }
        }
    }
    let outcome = best.ok_or_else(|| {
        PipelineError::Invalid("pattern fit needs at least one start point".into())
    })?;
    let (d, slope) = decode(&outcome.x);
    let fitted = with_fiber_parameters(scenario, &d, slope);
    let group_fqp = group_pattern(&fitted)?;
    let max_abs_residual = group_fqp
        .iter()
        .zip(targets)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(PatternFit {
        scenario: fitted,
        adjacent_d: d,
        attenuation_slope_per_m: slope,
        group_fqp,
        max_abs_residual,
        iterations: outcome.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionFit {
    #[serde(skip)]
    pub scenario: Scenario,
    pub extinction_db: f64,
    /// Lowest exact SNR over the monitored outputs at the anchor power.
    pub worst_snr_db: Option<f64>,
}

fn worst_snr(scenario: &Scenario, output_power_w: f64) -> Result<Snr, PipelineError> {
    let point = snr_vs_power_sweep(scenario, &[output_power_w], &[], RunMode::Analytic)?
        .pop()
        .expect("one point");
    let mut worst = Snr::Unbounded;
    for s in point.snr.iter().map(|m| m.snr.exact) {
        worst = match (worst, s) {
            (_, Snr::NoSignal) | (Snr::NoSignal, _) => Snr::NoSignal,
            (Snr::Unbounded, x) => x,
            (x, Snr::Unbounded) => x,
            (Snr::Db(a), Snr::Db(b)) => Snr::Db(a.min(b)),
        };
    }
    Ok(worst)
}

/// Smallest extinction of the counting filter (within `range_db`) at which
/// every monitored output keeps an exact SNR of at least `threshold_db` at
/// the given classical output power. Bisection keeps the feasible end.
pub fn fit_extinction(
    scenario: &Scenario,
    output_power_w: f64,
    threshold_db: f64,
    range_db: (f64, f64),
) -> Result<ExtinctionFit, PipelineError> {
    let name = scenario
        .counting
        .filter
        .clone()
        .ok_or_else(|| PipelineError::Invalid("extinction fit needs counting.filter".into()))?;
    let with_extinction = |x: f64| {
        let mut s = scenario.clone();
        for f in s.wdm_filters.iter_mut().filter(|f| f.name == name) {
            f.extinction_db = x;
        }
        s
    };
    let feasible = |x: f64| -> Result<bool, PipelineError> {
        Ok(worst_snr(&with_extinction(x), output_power_w)?.at_least(threshold_db))
    };
    let (mut lo, mut hi) = range_db;
    if !feasible(hi)? {
        return Err(PipelineError::Invalid(format!(
            "SNR stays below {threshold_db} dB even at {hi} dB extinction"
        )));
    }
    if !feasible(lo)? {
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    } else {
        hi = lo;
    }
    let fitted = with_extinction(hi);
    let worst_snr_db = worst_snr(&fitted, output_power_w)?.db();
    Ok(ExtinctionFit {
        scenario: fitted,
        extinction_db: hi,
        worst_snr_db,
    })
}
