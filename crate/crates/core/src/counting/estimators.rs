use std::fmt;
use std::io::Write;

use serde::{Serialize, Serializer};

use super::CountingError;
use crate::model::ModeSet;

/// `2 R1 R2 t_c`.
pub fn accidental_rate(r1: f64, r2: f64, window: f64) -> f64 {
    2.0 * r1 * r2 * window
}

/// `(L_p, eps_Lp)`. `L_p` may come out slightly negative from noise and is
/// returned as is.
pub fn output_ratio(rcp: f64, rap: f64, r_in: f64) -> Result<(f64, f64), CountingError> {
    if !(r_in > 0.0 && r_in.is_finite()) {
        return Err(CountingError::InvalidParameter {
            name: "R_in",
            value: r_in,
        });
    }
    Ok(((rcp - rap) / r_in, rap / r_in))
}

/// Rates observed in one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepetitionSample {
    pub r1_hz: f64,
    pub r2_hz: f64,
    pub rcp_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceStats {
    pub r1_hz: f64,
    pub r2_hz: f64,
    pub rcp_hz: f64,
    pub rap_hz: f64,
    pub lp: f64,
    pub eps_lp: f64,
    /// Empty for closed-form rates.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<RepetitionSample>,
}

impl CoincidenceStats {
    pub fn from_rates(
        r1: f64,
        r2: f64,
        rcp: f64,
        window: f64,
        r_in: f64,
    ) -> Result<Self, CountingError> {
        let rap = accidental_rate(r1, r2, window);
        let (lp, eps_lp) = output_ratio(rcp, rap, r_in)?;
        Ok(Self {
            r1_hz: r1,
            r2_hz: r2,
            rcp_hz: rcp,
            rap_hz: rap,
            lp,
            eps_lp,
            samples: Vec::new(),
        })
    }

    /// Averages repetitions; the accidental estimate uses the mean singles.
    pub fn from_samples(
        samples: Vec<RepetitionSample>,
        window: f64,
        r_in: f64,
    ) -> Result<Self, CountingError> {
        let mean = |f: fn(&RepetitionSample) -> f64| {
            mean_and_stderr(&samples.iter().map(f).collect::<Vec<_>>()).0
        };
        let mut stats = Self::from_rates(
            mean(|s| s.r1_hz),
            mean(|s| s.r2_hz),
            mean(|s| s.rcp_hz),
            window,
            r_in,
        )?;
        stats.samples = samples;
        Ok(stats)
    }

    /// Standard errors of `(R_1p, R_2p, R_cp, R_ap)` across repetitions;
    /// zero without samples.
    pub fn standard_errors(&self, window: f64) -> [f64; 4] {
        let column = |f: &dyn Fn(&RepetitionSample) -> f64| {
            mean_and_stderr(&self.samples.iter().map(f).collect::<Vec<_>>()).1
        };
        [
            column(&|s| s.r1_hz),
            column(&|s| s.r2_hz),
            column(&|s| s.rcp_hz),
            column(&|s| accidental_rate(s.r1_hz, s.r2_hz, window)),
        ]
    }
}

/// Sample mean and its standard error (sample standard deviation over
/// `sqrt(n)`). The error is zero for fewer than two values.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FqpResult {
    pub fqp: Vec<f64>,
    pub error: Vec<f64>,
    /// Loss-normalized net rates `u_p` before normalization.
    pub unnormalized: Vec<f64>,
    /// Modes whose net rate was negative and clamped to zero.
    pub clamped: Vec<bool>,
}

/// Loss-normalized share of net coincidences per mode, normalized to unit
/// sum. `rates` holds `(R_cp, R_ap)` per mode and `il_db` the per-mode
/// transmission in dB.
pub fn fractional_quantum_power(
    rates: &[(f64, f64)],
    r_in: f64,
    il_db: &[f64],
) -> Result<FqpResult, CountingError> {
    if rates.len() != il_db.len() {
        return Err(CountingError::LengthMismatch {
            expected: rates.len(),
            found: il_db.len(),
        });
    }
    if !(r_in > 0.0 && r_in.is_finite()) {
        return Err(CountingError::InvalidParameter {
            name: "R_in",
            value: r_in,
        });
    }
    let transmittance: Vec<f64> = il_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
    if let Some(&bad) = il_db
        .iter()
        .zip(&transmittance)
        .find(|(_, t)| !(**t > 0.0 && t.is_finite()))
        .map(|(d, _)| d)
    {
        return Err(CountingError::InvalidParameter {
            name: "insertion loss (dB)",
            value: bad,
        });
    }
    let mut clamped = vec![false; rates.len()];
    let mut unnormalized = Vec::with_capacity(rates.len());
    for (p, (&(rcp, rap), t)) in rates.iter().zip(&transmittance).enumerate() {
        let u = (rcp - rap) / (r_in * t);
        if u < 0.0 {
            clamped[p] = true;
        }
        unnormalized.push(u);
    }
    let positive: Vec<f64> = unnormalized.iter().map(|u| u.max(0.0)).collect();
    let total: f64 = positive.iter().sum();
    if !(total > 0.0) {
        return Err(CountingError::NoSignal);
    }
    let mut fqp: Vec<f64> = positive.iter().map(|u| u / total).collect();
    renormalize(&mut fqp);
    let error = rates
        .iter()
        .zip(&transmittance)
        .map(|(&(_, rap), t)| (rap / r_in) / (t * total))
        .collect();
    Ok(FqpResult {
        fqp,
        error,
        unnormalized,
        clamped,
    })
}

/// Makes the left-to-right sum of a normalized vector exactly 1 by
/// recomputing its last nonzero entry as `1 - (sum of the rest)`.
fn renormalize(v: &mut [f64]) {
    let Some(last) = v.iter().rposition(|x| *x > 0.0) else {
        return;
    };
    let head: f64 = v[..last].iter().sum();
    let fixed = 1.0 - head;
    if fixed >= 0.0 {
        v[last] = fixed;
    }
}

/// Sums per-mode FQP by mode group.
pub fn group_fqp(fqp: &[f64], modes: &ModeSet) -> Vec<f64> {
    let mut g = modes.sum_by_group(fqp);
    let total: f64 = g.iter().sum();
    if total > 0.0 {
        g.iter_mut().for_each(|x| *x /= total);
        renormalize(&mut g);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Db(f64),
    /// No excess coincidences from classical light were resolved.
    Unbounded,
    /// The true-coincidence numerator is not positive.
    NoSignal,
}

impl Snr {
    pub fn db(&self) -> Option<f64> {
        match self {
            Self::Db(x) => Some(*x),
            _ => None,
        }
    }

    /// Treats `Unbounded` as `+inf` for threshold comparisons.
    pub fn at_least(&self, threshold_db: f64) -> bool {
        match self {
            Self::Db(x) => *x >= threshold_db,
            Self::Unbounded => true,
            Self::NoSignal => false,
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Db(x) => write!(f, "{x}"),
            Self::Unbounded => f.write_str("unbounded"),
            Self::NoSignal => f.write_str("no_signal"),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Db(x) => s.serialize_f64(*x),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrPair {
    pub exact: Snr,
    pub approximate: Snr,
}

/// Quantum-to-classical SNR from the coincidence rate without (`rc0`) and
/// with (`rcp`) classical light and the accidental rate `ra`.
pub fn snr(rc0: f64, rcp: f64, ra: f64) -> SnrPair {
    if !(rcp > rc0) {
        return SnrPair {
            exact: Snr::Unbounded,
            approximate: Snr::Unbounded,
        };
    }
    let excess = rcp - rc0;
    let db = |num: f64| {
        if num > 0.0 {
            Snr::Db(10.0 * (num / excess).log10())
        } else {
            Snr::NoSignal
        }
    };
    SnrPair {
        exact: db(rc0 - ra),
        approximate: db(rc0),
    }
}

/// One row of the per-mode statistics table.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub mode: String,
    pub stats: CoincidenceStats,
    pub fqp: f64,
    pub eps_fqp: f64,
}

pub fn write_stats_csv<W: Write>(rows: &[StatsRow], out: W) -> Result<(), CountingError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "mode", "R_1p", "R_2p", "R_cp", "R_ap", "L_p", "eps_Lp", "FQP", "eps_FQP",
    ])?;
    for r in rows {
        let s = &r.stats;
        let mut rec = vec![r.mode.clone()];
        rec.extend(
            [
                s.r1_hz, s.r2_hz, s.rcp_hz, s.rap_hz, s.lp, s.eps_lp, r.fqp, r.eps_fqp,
            ]
            .map(|x| x.to_string()),
        );
        w.write_record(rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
