use nalgebra::{DMatrix, DVector};

use super::coupling::CouplingMatrix;
use super::propagate::{Propagator, StepSize};
use super::PowerFlowError;

const TOLERANCE: f64 = 1e-12;
const MAX_SQUARINGS: usize = 400;

/// Normalized dominant eigenvector of the power-flow generator: the modal
/// distribution that survives long propagation.
///
/// Power iteration on the unit-length propagator `exp(A · 1 m)`; each round
/// squares the (rescaled) iterate, so round `k` corresponds to `2^k` metres.
pub fn steady_state_distribution(
    cm: &CouplingMatrix,
    attenuation: &[f64],
) -> Result<Vec<f64>, PowerFlowError> {
    let n = cm.size();
    if n == 0 {
        return Err(PowerFlowError::InvalidInput("no modes".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let components = cm.components();
    if components > 1 {
        return Err(PowerFlowError::NonUniqueSteadyState { components });
    }
    let mut b: DMatrix<f64> = Propagator::new(cm, attenuation, 1.0, StepSize::Auto)?
        .matrix()
        .clone();
    let ones = DVector::from_element(n, 1.0);
    let normalize = |v: DVector<f64>| {
        let s = v.sum();
        v / s
    };
    let mut v = normalize(&b * &ones);
    for _ in 0..MAX_SQUARINGS {
        b = &b * &b;
        let scale = b.amax();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(PowerFlowError::SteadyStateNotConverged);
        }
        b /= scale;
        let next = normalize(&b * &ones);
        let change = (&next - &v).amax();
        v = next;
        if change < TOLERANCE {
            return Ok(v.iter().copied().collect());
        }
    }
    Err(PowerFlowError::SteadyStateNotConverged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{graded_attenuation, FiberSpec, InterGroupCoupling, ModeSet};
    use crate::powerflow::{build_coupling_matrix, propagate_power};

    #[test]
    fn lossless_connected_is_uniform() {
        let fiber = FiberSpec::uniform(ModeSet::default(), 1.0, 1.0, 1e-6)
            .with_inter_group(InterGroupCoupling::adjacent(&[1e-6, 1e-5, 1e-4, 1e-7]));
        let v = steady_state_distribution(&build_coupling_matrix(&fiber), &[0.0; 15]).unwrap();
        for x in v {
            assert!((x - 1.0 / 15.0).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn single_mode() {
        let cm = CouplingMatrix::from_matrix(DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(steady_state_distribution(&cm, &[0.3]).unwrap(), vec![1.0]);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let fiber = FiberSpec::uniform(ModeSet::default(), 1.0, 1.0, 0.0);
        let err =
            steady_state_distribution(&build_coupling_matrix(&fiber), &[0.0; 15]).unwrap_err();
        assert_eq!(err, PowerFlowError::NonUniqueSteadyState { components: 5 });
    }

    #[test]
    fn loss_graded_by_group_tilts_toward_low_order() {
        let modes = ModeSet::default();
        let fiber = FiberSpec::uniform(modes, 1.0, 1.0, 1e-4);
        let cm = build_coupling_matrix(&fiber);
        let alpha = graded_attenuation(modes, 0.2, 0.5);
        let v = steady_state_distribution(&cm, &alpha).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let group_mean: Vec<f64> = (1..=5)
            .map(|g| modes.group_members(g).map(|i| v[i]).sum::<f64>() / g as f64)
            .collect();
        assert!(
            group_mean.windows(2).all(|w| w[1] <= w[0]),
            "{group_mean:?}"
        );

        // a long propagation from an arbitrary launch approaches the same shape
        let mut p0 = vec![0.0; 15];
        p0[7] = 1.0;
        let r = propagate_power(
            &cm,
            &alpha,
            &p0,
            200_000.0,
            crate::powerflow::StepSize::Auto,
        )
        .unwrap();
        let total: f64 = r.output.p.iter().sum();
        for (a, b) in r.output.p.iter().zip(&v) {
            assert!((a / total - b).abs() < 1e-6, "{} vs {}", a / total, b);
        }
    }
}
