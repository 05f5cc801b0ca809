use nalgebra::{DMatrix, DVector};

use super::coupling::{generator, CouplingMatrix};
use super::PowerFlowError;

/// Modal powers at a position `z` along the fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector {
    pub p: Vec<f64>,
    pub z: f64,
}

impl PowerVector {
    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub output: PowerVector,
    pub trace: Option<Vec<PowerVector>>,
    pub step_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepSize {
    /// `min(0.1 / max_row_sum(d + diag α), L / 100)`.
    #[default]
    Auto,
    Fixed(f64),
}

/// Auto step for the given coupling, attenuation and length.
pub fn auto_step(cm: &CouplingMatrix, attenuation: &[f64], length: f64) -> f64 {
    let rate = cm.max_row_sum(attenuation);
    let by_length = length / 100.0;
    if rate > 0.0 {
        (0.1 / rate).min(by_length)
    } else {
        by_length
    }
}

/// Number of steps and the step that lands exactly on `length`.
fn discretize(length: f64, step: f64) -> (u64, f64) {
    if length == 0.0 {
        return (0, 0.0);
    }
    let n = ((length / step) - 1e-9).ceil().max(1.0) as u64;
    (n, length / n as f64)
}

fn check_inputs(
    attenuation: &[f64],
    p0: &[f64],
    n: usize,
    length: f64,
    step: StepSize,
) -> Result<(), PowerFlowError> {
    if attenuation.len() != n || p0.len() != n {
        return Err(PowerFlowError::InvalidInput(format!(
            "expected {n} modes, got {} attenuation and {} power entries",
            attenuation.len(),
            p0.len()
        )));
    }
    if !(length >= 0.0 && length.is_finite()) {
        return Err(PowerFlowError::InvalidInput(format!(
            "length must be nonnegative, got {length}"
        )));
    }
    if p0.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(PowerFlowError::InvalidInput(
            "initial powers must be nonnegative".into(),
        ));
    }
    if let StepSize::Fixed(h) = step {
        if !(h > 0.0 && h.is_finite()) {
            return Err(PowerFlowError::InvalidInput(format!(
                "step must be positive, got {h}"
            )));
        }
    }
    Ok(())
}

/// One classical RK4 step of a linear autonomous system is the matrix
/// polynomial `I + hA + (hA)²/2 + (hA)³/6 + (hA)⁴/24`.
fn rk4_step_matrix(a: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let ha = a * h;
    let mut term = DMatrix::identity(n, n);
    let mut s = DMatrix::identity(n, n);
    for k in 1..=4 {
        term = &term * &ha / k as f64;
        s += &term;
    }
    s
}

fn matrix_power(base: &DMatrix<f64>, mut exp: u64) -> DMatrix<f64> {
    let n = base.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut square = base.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            result = &result * &square;
        }
        exp >>= 1;
        if exp > 0 {
            square = &square * &square;
        }
    }
    result
}

/// The RK4 propagator over a whole fiber length, `S(h)^N`.
#[derive(Debug, Clone)]
pub struct Propagator {
    matrix: DMatrix<f64>,
    step: f64,
    steps: u64,
    length: f64,
}

impl Propagator {
    pub fn new(
        cm: &CouplingMatrix,
        attenuation: &[f64],
        length: f64,
        step: StepSize,
    ) -> Result<Self, PowerFlowError> {
        let n = cm.size();
        check_inputs(attenuation, &vec![0.0; n], n, length, step)?;
        let h = match step {
            StepSize::Auto => auto_step(cm, attenuation, length),
            StepSize::Fixed(h) => h,
        };
        let (steps, h) = discretize(length, h);
        let matrix = if steps == 0 {
            DMatrix::identity(n, n)
        } else {
            matrix_power(&rk4_step_matrix(&generator(cm, attenuation), h), steps)
        };
        let scale = matrix.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if matrix.iter().any(|x| !x.is_finite()) || matrix.iter().any(|&x| x < -1e-12 * scale) {
            return Err(PowerFlowError::Instability { step: h, z: length });
        }
        Ok(Self {
            matrix,
            step: h,
            steps,
            length,
        })
    }

    /// Full mode-to-mode power transfer matrix, `[(out, in)]`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn apply(&self, p0: &[f64]) -> Result<PropagationResult, PowerFlowError> {
        let n = self.matrix.nrows();
        check_inputs(&vec![0.0; n], p0, n, self.length, StepSize::Auto)?;
        let out = &self.matrix * DVector::from_column_slice(p0);
        let p = clamp_nonnegative(out.as_slice(), self.step, self.length)?;
        Ok(PropagationResult {
            output: PowerVector { p, z: self.length },
            trace: None,
            step_used: self.step,
        })
    }
}

fn clamp_nonnegative(p: &[f64], step: f64, z: f64) -> Result<Vec<f64>, PowerFlowError> {
    let total: f64 = p.iter().map(|x| x.abs()).sum();
    if p.iter().any(|x| !x.is_finite() || *x < -1e-12 * total) {
        return Err(PowerFlowError::Instability { step, z });
    }
    Ok(p.iter().map(|&x| x.max(0.0)).collect())
}

/// Integrates the power-flow equations from `z = 0` to `length`.
pub fn propagate_power(
    cm: &CouplingMatrix,
    attenuation: &[f64],
    p0: &[f64],
    length: f64,
    step: StepSize,
) -> Result<PropagationResult, PowerFlowError> {
    check_inputs(attenuation, p0, cm.size(), length, step)?;
    Propagator::new(cm, attenuation, length, step)?.apply(p0)
}

/// Steps the RK4 scheme explicitly and records `samples` evenly spaced power
/// vectors (including both ends).
pub fn propagate_traced(
    cm: &CouplingMatrix,
    attenuation: &[f64],
    p0: &[f64],
    length: f64,
    step: StepSize,
    samples: usize,
) -> Result<PropagationResult, PowerFlowError> {
    let n = cm.size();
    check_inputs(attenuation, p0, n, length, step)?;
    let h = match step {
        StepSize::Auto => auto_step(cm, attenuation, length),
        StepSize::Fixed(h) => h,
    };
    let (steps, h) = discretize(length, h);
    let a = generator(cm, attenuation);
    let rhs = |p: &DVector<f64>| &a * p;

    let samples = samples.max(2);
    let sample_at: Vec<u64> = (0..samples)
        .map(|i| ((i as f64 / (samples - 1) as f64) * steps as f64).round() as u64)
        .collect();
    let mut trace = Vec::with_capacity(samples);
    let mut next_sample = 0;
    let mut p = DVector::from_column_slice(p0);
    for k in 0..=steps {
        while next_sample < sample_at.len() && sample_at[next_sample] == k {
            trace.push(PowerVector {
                p: p.iter().copied().collect(),
                z: k as f64 * h,
            });
            next_sample += 1;
        }
        if k == steps {
            break;
        }
        let k1 = rhs(&p);
        let k2 = rhs(&(&p + &k1 * (h / 2.0)));
        let k3 = rhs(&(&p + &k2 * (h / 2.0)));
        let k4 = rhs(&(&p + &k3 * h));
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let total: f64 = p.iter().map(|x| x.abs()).sum();
        if p.iter().any(|x| !x.is_finite() || *x < -1e-12 * total) {
            return Err(PowerFlowError::Instability {
                step: h,
                z: (k + 1) as f64 * h,
            });
        }
    }
    let p = clamp_nonnegative(p.as_slice(), h, length)?;
    Ok(PropagationResult {
        output: PowerVector { p, z: length },
        trace: Some(trace),
        step_used: h,
    })
}

/// `F[(g_in, g_out)]`: fraction of the power launched uniformly into the
/// modes of group `g_in` that leaves the fiber in group `g_out`.
pub fn group_transfer_fractions(
    cm: &CouplingMatrix,
    attenuation: &[f64],
    group_of: &[usize],
    length: f64,
    step: StepSize,
) -> Result<DMatrix<f64>, PowerFlowError> {
    let propagator = Propagator::new(cm, attenuation, length, step)?;
    Ok(group_fractions_of(propagator.matrix(), group_of))
}

/// Group-to-group fractions of a mode transfer matrix `[(out, in)]` under
/// uniform injection into each input group.
pub(crate) fn group_fractions_of(t: &DMatrix<f64>, group_of: &[usize]) -> DMatrix<f64> {
    let q = group_of.iter().max().map_or(0, |g| g + 1);
    let mut sizes = vec![0usize; q];
    for &g in group_of {
        sizes[g] += 1;
    }
    let mut f = DMatrix::zeros(q, q);
    for (p_in, &g_in) in group_of.iter().enumerate() {
        for (p_out, &g_out) in group_of.iter().enumerate() {
            f[(g_in, g_out)] += t[(p_out, p_in)] / sizes[g_in] as f64;
        }
    }
    f
}
