use nalgebra::DMatrix;

use super::PowerFlowError;
use crate::model::{FiberSpec, InterGroupCoupling};

/// Symmetric, nonnegative per-unit-length mode coupling rates `d_pq` in 1/m
/// with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    d: DMatrix<f64>,
}

impl CouplingMatrix {
    /// Block structure from a zero-based group index per mode: members of one
    /// group couple at `intra`, modes of groups `a != b` at `inter.get(a, b)`.
    pub fn from_groups(group_of: &[usize], intra: f64, inter: &InterGroupCoupling) -> Self {
        let m = group_of.len();
        let d = DMatrix::from_fn(m, m, |p, q| {
            if p == q {
                0.0
            } else if group_of[p] == group_of[q] {
                intra
            } else {
                inter.get(group_of[p], group_of[q])
            }
        });
        Self { d }
    }

    pub fn from_matrix(d: DMatrix<f64>) -> Result<Self, PowerFlowError> {
        if !d.is_square() {
            return Err(PowerFlowError::InvalidCoupling(
                "matrix must be square".into(),
            ));
        }
        let n = d.nrows();
        for p in 0..n {
            if d[(p, p)] != 0.0 {
                return Err(PowerFlowError::InvalidCoupling(format!(
                    "nonzero diagonal at {p}"
                )));
            }
            for q in 0..n {
                let x = d[(p, q)];
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(PowerFlowError::InvalidCoupling(format!(
                        "entry ({p}, {q}) = {x}"
                    )));
                }
                if x != d[(q, p)] {
                    return Err(PowerFlowError::InvalidCoupling(format!(
                        "asymmetric at ({p}, {q})"
                    )));
                }
            }
        }
        Ok(Self { d })
    }

    pub fn size(&self) -> usize {
        self.d.nrows()
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.d[(p, q)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// Largest row sum of `d + diag(α)`.
    pub fn max_row_sum(&self, attenuation: &[f64]) -> f64 {
        self.d
            .row_iter()
            .zip(attenuation)
            .map(|(row, a)| row.sum() + a)
            .fold(0.0, f64::max)
    }

    /// Connected components of the graph with an edge wherever `d_pq > 0`.
    pub fn components(&self) -> usize {
        let n = self.size();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                for (q, flag) in seen.iter_mut().enumerate() {
                    if !*flag && self.d[(p, q)] > 0.0 {
                        *flag = true;
                        stack.push(q);
                    }
                }
            }
        }
        count
    }
}

pub fn build_coupling_matrix(fiber: &FiberSpec) -> CouplingMatrix {
    CouplingMatrix::from_groups(
        &fiber.modes.group_of(),
        fiber.intra_group_rate,
        &fiber.inter_group,
    )
}

/// Generator `A` of `dP/dz = A P`: `A = d - diag(row sums of d) - diag(α)`.
pub fn generator(cm: &CouplingMatrix, attenuation: &[f64]) -> DMatrix<f64> {
    let mut a = cm.d.clone();
    for p in 0..cm.size() {
        let out: f64 = cm.d.row(p).sum();
        a[(p, p)] = -out - attenuation[p];
    }
    a
}
