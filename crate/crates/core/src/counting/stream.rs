use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::config::{derived_rng, CountingConfig, StreamPurpose};
use super::CountingError;

/// Sorted detection times in `[0, duration_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub label: String,
    pub duration_s: f64,
    pub timestamps: Vec<f64>,
}

impl EventStream {
    pub fn empty(label: impl Into<String>, duration_s: f64) -> Self {
        Self {
            label: label.into(),
            duration_s,
            timestamps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn rate(&self) -> f64 {
        self.timestamps.len() as f64 / self.duration_s
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn check_sorted(&self) -> Result<(), CountingError> {
        match self.timestamps.windows(2).position(|w| !(w[0] <= w[1])) {
            Some(i) => Err(CountingError::Unsorted {
                label: self.label.clone(),
                index: i + 1,
            }),
            None => Ok(()),
        }
    }

    /// Merges another sorted stream into this one.
    pub fn merge(&self, other: &EventStream) -> EventStream {
        let (a, b) = (&self.timestamps, &other.timestamps);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                out.push(a[i]);
                i += 1;
            } else {
                out.push(b[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        EventStream {
            label: self.label.clone(),
            duration_s: self.duration_s,
            timestamps: out,
        }
    }
}

fn check_rate(name: &'static str, value: f64) -> Result<(), CountingError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CountingError::InvalidParameter { name, value })
    }
}

/// Homogeneous Poisson arrival times of `rate` over `[0, duration)`.
pub fn poisson_times<R: Rng + ?Sized>(rate: f64, duration: f64, rng: &mut R) -> Vec<f64> {
    if rate <= 0.0 || duration <= 0.0 {
        return Vec::new();
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut times = Vec::with_capacity((rate * duration * 1.05) as usize + 16);
    let mut t = exp.sample(rng);
    while t < duration {
        times.push(t);
        t += exp.sample(rng);
    }
    times
}

/// Pair emission times at `pair_rate_in_hz`; herald and idler streams are
/// identical copies.
pub fn simulate_pair_stream(
    cfg: &CountingConfig,
) -> Result<(EventStream, EventStream), CountingError> {
    check_rate("pair_rate_in_hz", cfg.pair_rate_in_hz)?;
    let mut rng = derived_rng(cfg.seed, StreamPurpose::Pairs, 0, 0);
    let times = poisson_times(cfg.pair_rate_in_hz, cfg.acquisition_s, &mut rng);
    let herald = EventStream {
        label: "herald".into(),
        duration_s: cfg.acquisition_s,
        timestamps: times.clone(),
    };
    let idler = EventStream {
        label: "idler".into(),
        duration_s: cfg.acquisition_s,
        timestamps: times,
    };
    Ok((herald, idler))
}

/// Keeps each event independently with probability `survival`.
pub fn thin_with<R: Rng + ?Sized>(
    s: &EventStream,
    survival: f64,
    rng: &mut R,
) -> Result<EventStream, CountingError> {
    if !(0.0..=1.0).contains(&survival) {
        return Err(CountingError::InvalidParameter {
            name: "survival",
            value: survival,
        });
    }
    let timestamps = s
        .timestamps
        .iter()
        .copied()
        .filter(|_| rng.random_bool(survival))
        .collect();
    Ok(EventStream {
        label: s.label.clone(),
        duration_s: s.duration_s,
        timestamps,
    })
}

pub fn thin_stream(
    s: &EventStream,
    survival: f64,
    seed: u64,
) -> Result<EventStream, CountingError> {
    thin_with(
        s,
        survival,
        &mut derived_rng(seed, StreamPurpose::Generic, 0, 0),
    )
}

/// Merges an independent Poisson process of `rate` into `s`.
pub fn add_background(
    s: &EventStream,
    rate: f64,
    duration: f64,
    seed: u64,
) -> Result<EventStream, CountingError> {
    check_rate("rate", rate)?;
    let mut rng = derived_rng(seed, StreamPurpose::Generic, 1, 0);
    let bg = EventStream {
        label: s.label.clone(),
        duration_s: duration,
        timestamps: poisson_times(rate, duration, &mut rng),
    };
    Ok(s.merge(&bg))
}

/// Sends each event to at most one of `probabilities.len()` outputs; it is
/// lost with probability `1 - sum`.
pub fn route_stream<R: Rng + ?Sized>(
    s: &EventStream,
    probabilities: &[f64],
    rng: &mut R,
) -> Result<Vec<EventStream>, CountingError> {
    let total: f64 = probabilities.iter().sum();
    if let Some(&bad) = probabilities.iter().find(|p| !(**p >= 0.0)) {
        return Err(CountingError::InvalidParameter {
            name: "routing probability",
            value: bad,
        });
    }
    if total > 1.0 + 1e-9 {
        return Err(CountingError::InvalidParameter {
            name: "routing total",
            value: total,
        });
    }
    let mut outs: Vec<EventStream> = (0..probabilities.len())
        .map(|k| EventStream::empty(format!("{}[{k}]", s.label), s.duration_s))
        .collect();
    for &t in &s.timestamps {
        let mut u: f64 = rng.random();
        for (k, &p) in probabilities.iter().enumerate() {
            if u < p {
                outs[k].timestamps.push(t);
                break;
            }
            u -= p;
        }
    }
    Ok(outs)
}

/// Writes `index,timestamp_s` rows with 12 significant digits.
pub fn write_stream_csv<W: Write>(s: &EventStream, out: W) -> Result<(), CountingError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "timestamp_s"])?;
    for (i, t) in s.timestamps.iter().enumerate() {
        w.write_record([i.to_string(), format!("{t:.11e}")])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_stream_csv<R: Read>(
    input: R,
    label: &str,
    duration_s: f64,
) -> Result<EventStream, CountingError> {
    let mut r = csv::Reader::from_reader(input);
    let mut timestamps = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = rec.get(1).ok_or_else(|| CountingError::Format {
            line: line + 2,
            message: "missing timestamp column".into(),
        })?;
        let t: f64 = field.trim().parse().map_err(|_| CountingError::Format {
            line: line + 2,
            message: format!("bad timestamp {field:?}"),
        })?;
        timestamps.push(t);
    }
    let s = EventStream {
        label: label.into(),
        duration_s,
        timestamps,
    };
    s.check_sorted()?;
    Ok(s)
}
