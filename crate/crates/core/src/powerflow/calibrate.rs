use nalgebra::DMatrix;

use super::coupling::{build_coupling_matrix, CouplingMatrix};
use super::optimize::{fit_box_least_squares, FitOptions};
use super::propagate::{auto_step, group_fractions_of, Propagator, StepSize};
use super::PowerFlowError;
use crate::devices::TransferMatrix;
use crate::model::{FiberSpec, InterGroupCoupling};

/// Q×Q group cross-talk in dB indexed `[g_in][g_out]`; `None` or non-finite
/// cells are masked.
pub type GroupTable = Vec<Vec<Option<f64>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parameterization {
    /// One `D` shared by every group pair.
    Uniform,
    /// One `D` per neighbouring pair `(g, g + 1)`; other pairs are zero.
    #[default]
    AdjacentOnly,
    /// One `D` per unordered group pair.
    AllPairs,
}

impl Parameterization {
    fn pairs(&self, groups: usize) -> Vec<Vec<(usize, usize)>> {
        let all: Vec<(usize, usize)> = (0..groups)
            .flat_map(|a| (a + 1..groups).map(move |b| (a, b)))
            .collect();
        match self {
            Self::Uniform => vec![all],
            Self::AdjacentOnly => (0..groups.saturating_sub(1))
                .map(|a| vec![(a, a + 1)])
                .collect(),
            Self::AllPairs => all.into_iter().map(|p| vec![p]).collect(),
        }
    }
}

/// What the measured table describes.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CalibrationMode {
    /// Fiber coupling alone: targets are compared with the raw group
    /// transfer fractions.
    #[default]
    FiberOnly,
    /// MUX, fiber and DeMUX in cascade; each input group's output is
    /// normalized to the total output power.
    Composite {
        mux: TransferMatrix,
        demux: TransferMatrix,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationOptions {
    pub parameterization: Parameterization,
    pub mode: CalibrationMode,
    pub fit: FitOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub inter_group: InterGroupCoupling,
    /// Fitted values with the (zero-based) group pairs each one controls.
    pub parameters: Vec<(Vec<(usize, usize)>, f64)>,
    pub rms_residual_db: f64,
    pub max_residual_db: f64,
    /// Model prediction in dB, `[g_in][g_out]`.
    pub predicted_db: DMatrix<f64>,
    pub iterations: usize,
}

fn to_db(x: f64) -> f64 {
    10.0 * x.max(1e-300).log10()
}

/// Reads a group table from CSV: a header row `in\\out,1,2,...` then one row
/// per input group, its 1-based number first. Empty cells are masked.
pub fn read_group_table_csv<R: std::io::Read>(input: R) -> Result<GroupTable, PowerFlowError> {
    let bad = |line: usize, message: String| {
        PowerFlowError::InvalidInput(format!("group table line {line}: {message}"))
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let q = reader
        .headers()
        .map_err(|e| bad(1, e.to_string()))?
        .len()
        .saturating_sub(1);
    if q == 0 {
        return Err(bad(1, "header names no output groups".into()));
    }
    let mut table = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| bad(line, e.to_string()))?;
        if record.len() != q + 1 {
            return Err(bad(
                line,
                format!("expected {} cells, found {}", q + 1, record.len()),
            ));
        }
        let row = record
            .iter()
            .skip(1)
            .map(|cell| match cell {
                "" => Ok(None),
                text => text
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| bad(line, format!("'{text}' is not a number"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        table.push(row);
    }
    if table.len() != q {
        return Err(PowerFlowError::InvalidInput(format!(
            "group table has {} rows for {q} columns",
            table.len()
        )));
    }
    Ok(table)
}

/// Inverse of [`read_group_table_csv`].
pub fn write_group_table_csv(table: &GroupTable) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header =
        std::iter::once("in\\out".to_string()).chain((1..=table.len()).map(|g| g.to_string()));
    w.write_record(header).expect("in-memory write");
    for (g, row) in table.iter().enumerate() {
        let cells = std::iter::once((g + 1).to_string()).chain(
            row.iter()
                .map(|c| c.map_or(String::new(), |x| x.to_string())),
        );
        w.write_record(cells).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

/// Group cross-talk predicted for a fiber, in linear units `[g_in][g_out]`.
fn predicted_fractions(
    fiber: &FiberSpec,
    cm: &CouplingMatrix,
    length: f64,
    step: StepSize,
    mode: &CalibrationMode,
) -> Result<DMatrix<f64>, PowerFlowError> {
    let group_of = fiber.modes.group_of();
    let propagator = Propagator::new(cm, &fiber.attenuation, length, step)?;
    match mode {
        CalibrationMode::FiberOnly => Ok(group_fractions_of(propagator.matrix(), &group_of)),
        CalibrationMode::Composite { mux, demux } => {
            let t = &demux.t * propagator.matrix() * &mux.t;
            let mut f = group_fractions_of(&t, &group_of);
            for mut row in f.row_iter_mut() {
                let total: f64 = row.sum();
                if total > 0.0 {
                    row /= total;
                }
            }
            Ok(f)
        }
    }
}

/// Fits inter-group coupling coefficients so that the predicted group
/// cross-talk matches `targets` in the least-squares dB sense. Search runs
/// over `log10(D)` inside the fiber's admissible range.
pub fn calibrate_coupling(
    targets: &GroupTable,
    fiber: &FiberSpec,
    length: f64,
    options: &CalibrationOptions,
) -> Result<CalibrationResult, PowerFlowError> {
    let q = fiber.modes.groups();
    if targets.len() != q || targets.iter().any(|row| row.len() != q) {
        return Err(PowerFlowError::InvalidInput(format!(
            "targets must be a {q}x{q} table"
        )));
    }
    let cells: Vec<(usize, usize, f64)> = (0..q)
        .flat_map(|a| (0..q).map(move |b| (a, b)))
        .filter_map(|(a, b)| targets[a][b].filter(|t| t.is_finite()).map(|t| (a, b, t)))
        .collect();
    let params = options.parameterization.pairs(q);
    let (lo, hi) = fiber.admissible_d;
    let (log_lo, log_hi) = (lo.log10(), hi.log10());

    let coupling_for = |x: &[f64]| {
        let mut inter = InterGroupCoupling::zero(q);
        for (pairs, &logd) in params.iter().zip(x) {
            for &(a, b) in pairs {
                inter.set(a, b, 10f64.powf(logd));
            }
        }
        inter
    };
    // one step for every evaluation keeps the forward model smooth in D
    let strongest = fiber
        .clone()
        .with_inter_group(coupling_for(&vec![log_hi; params.len()]));
    let step = StepSize::Fixed(auto_step(
        &build_coupling_matrix(&strongest),
        &fiber.attenuation,
        length,
    ));

    let forward = |x: &[f64]| -> Result<DMatrix<f64>, PowerFlowError> {
        let trial = fiber.clone().with_inter_group(coupling_for(x));
        predicted_fractions(
            &trial,
            &build_coupling_matrix(&trial),
            length,
            step,
            &options.mode,
        )
    };
    let residuals = |x: &[f64]| -> Vec<f64> {
        match forward(x) {
            Ok(f) => cells
                .iter()
                .map(|&(a, b, t)| to_db(f[(a, b)]) - t)
                .collect(),
            Err(_) => vec![f64::MAX.sqrt(); cells.len()],
        }
    };

    let n = params.len();
    let x0 = vec![(log_lo + log_hi) / 2.0; n];
    let outcome = fit_box_least_squares(
        &residuals,
        &x0,
        &vec![log_lo; n],
        &vec![log_hi; n],
        &options.fit,
    );
    let mut x = outcome.x.clone();
    for (xi, inert) in x.iter_mut().zip(&outcome.inert) {
        if *inert {
            *xi = log_lo;
        }
    }
    let predicted = forward(&x)?;
    let predicted_db = predicted.map(to_db);
    let residual: Vec<f64> = cells
        .iter()
        .map(|&(a, b, t)| predicted_db[(a, b)] - t)
        .collect();
    let rms = if residual.is_empty() {
        0.0
    } else {
        (residual.iter().map(|r| r * r).sum::<f64>() / residual.len() as f64).sqrt()
    };
    let max = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let result = CalibrationResult {
        inter_group: coupling_for(&x),
        parameters: params
            .into_iter()
            .zip(&x)
            .map(|(pairs, &logd)| (pairs, 10f64.powf(logd)))
            .collect(),
        rms_residual_db: rms,
        max_residual_db: max,
        predicted_db,
        iterations: outcome.iterations,
    };
    if !outcome.converged {
        return Err(PowerFlowError::CalibrationFailed {
            best: Box::new(result),
            iterations: outcome.iterations,
        });
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_table_csv_round_trip() {
        let table: GroupTable = vec![vec![None, Some(-18.5)], vec![Some(-20.25), None]];
        let bytes = write_group_table_csv(&table);
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "in\\out,1,2\n1,,-18.5\n2,-20.25,\n"
        );
        assert_eq!(read_group_table_csv(&bytes[..]).unwrap(), table);
        assert!(read_group_table_csv("in\\out,1,2\n1,,x\n2,1,\n".as_bytes()).is_err());
        assert!(read_group_table_csv("in\\out,1,2\n1,,1\n".as_bytes()).is_err());
    }
    use crate::model::ModeSet;
    use crate::powerflow::group_transfer_fractions;

    fn synthetic_targets(fiber: &FiberSpec, length: f64) -> GroupTable {
        let f = group_transfer_fractions(
            &build_coupling_matrix(fiber),
            &fiber.attenuation,
            &fiber.modes.group_of(),
            length,
            StepSize::Auto,
        )
        .unwrap();
        (0..f.nrows())
            .map(|a| (0..f.ncols()).map(|b| Some(to_db(f[(a, b)]))).collect())
            .collect()
    }

    #[test]
    fn adjacent_round_trip() {
        let modes = ModeSet::default();
        let truth = [3e-4, 2e-6, 5e-5, 1e-3];
        let fiber = FiberSpec::uniform(modes, 40.0, 1.0, 0.0)
            .with_inter_group(InterGroupCoupling::adjacent(&truth));
        let targets = synthetic_targets(&fiber, 40.0);
        let out =
            calibrate_coupling(&targets, &fiber, 40.0, &CalibrationOptions::default()).unwrap();
        for ((_, d), t) in out.parameters.iter().zip(truth) {
            assert!(((d - t) / t).abs() < 0.05, "{d} vs {t}");
        }
        assert!(out.max_residual_db < 0.01, "{}", out.max_residual_db);
    }

    #[test]
    fn masked_zero_coupling_goes_to_lower_bound() {
        let modes = ModeSet::default();
        let fiber = FiberSpec::uniform(modes, 8000.0, 1.0, 0.0);
        let mut targets: GroupTable = vec![vec![Some(f64::NEG_INFINITY); 5]; 5];
        for (g, row) in targets.iter_mut().enumerate() {
            row[g] = Some(0.0);
        }
        let out =
            calibrate_coupling(&targets, &fiber, 8000.0, &CalibrationOptions::default()).unwrap();
        for (_, d) in &out.parameters {
            assert_eq!(*d, 1e-7);
        }
        // every cell masked: nothing constrains D
        let empty: GroupTable = vec![vec![None; 5]; 5];
        let out =
            calibrate_coupling(&empty, &fiber, 8000.0, &CalibrationOptions::default()).unwrap();
        assert!(out.parameters.iter().all(|(_, d)| *d == 1e-7));
    }

    #[test]
    fn eight_km_average_crosstalk_gives_admissible_d() {
        let modes = ModeSet::default();
        let fiber = FiberSpec::uniform(modes, 8000.0, 1.0, 0.0);
        let targets: GroupTable = (0..5)
            .map(|a| (0..5).map(|b| (a != b).then_some(-18.1)).collect())
            .collect();
        for parameterization in [Parameterization::Uniform, Parameterization::AdjacentOnly] {
            let options = CalibrationOptions {
                parameterization,
                ..Default::default()
            };
            let out = calibrate_coupling(&targets, &fiber, 8000.0, &options).unwrap();
            for (_, d) in &out.parameters {
                assert!((1e-7..=1e-2).contains(d), "{d}");
            }
        }
    }

    #[test]
    fn composite_mode_uses_devices() {
        let modes = ModeSet::default();
        let truth = 2e-6;
        let fiber = FiberSpec::uniform(modes, 8000.0, 1.0, truth);
        let mut xt = vec![vec![None; 5]; 5];
        for (a, row) in xt.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                if a != b {
                    *cell = Some(-30.0);
                }
            }
        }
        let spec = crate::model::MuxDemuxSpec {
            insertion_loss_db: vec![-4.0; 15],
            crosstalk: crate::model::CrosstalkTable::Group(xt),
            wavelength_range_nm: (0.0, f64::INFINITY),
        };
        let device = crate::devices::mux_from_measurements(&spec, modes).unwrap();
        let mode = CalibrationMode::Composite {
            mux: device.clone(),
            demux: device,
        };
        let cm = build_coupling_matrix(&fiber);
        let f = predicted_fractions(&fiber, &cm, 8000.0, StepSize::Auto, &mode).unwrap();
        let targets: GroupTable = (0..5)
            .map(|a| (0..5).map(|b| Some(to_db(f[(a, b)]))).collect())
            .collect();
        let options = CalibrationOptions {
            parameterization: Parameterization::Uniform,
            mode,
            ..Default::default()
        };
        let out = calibrate_coupling(
            &targets,
            &fiber.clone().with_inter_group(InterGroupCoupling::zero(5)),
            8000.0,
            &options,
        )
        .unwrap();
        let d = out.parameters[0].1;
        assert!(((d - truth) / truth).abs() < 0.05, "{d}");
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let fiber = FiberSpec::uniform(ModeSet::default(), 1.0, 1.0, 0.0);
        assert!(calibrate_coupling(
            &vec![vec![None; 4]; 4],
            &fiber,
            1.0,
            &CalibrationOptions::default()
        )
        .is_err());
    }

    #[test]
    fn failure_carries_best_so_far() {
        let fiber = FiberSpec::uniform(ModeSet::default(), 40.0, 1.0, 0.0);
        let targets: GroupTable = (0..5)
            .map(|a| (0..5).map(|b| (a != b).then_some(-30.0)).collect())
            .collect();
        let options = CalibrationOptions {
            fit: FitOptions {
                golden_sweeps: 0,
                max_iterations: 1,
                tolerance: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        match calibrate_coupling(&targets, &fiber, 40.0, &options) {
            Err(PowerFlowError::CalibrationFailed { best, iterations }) => {
                assert_eq!(iterations, 1);
                assert_eq!(best.parameters.len(), 4);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
