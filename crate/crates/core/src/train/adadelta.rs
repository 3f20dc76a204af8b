use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Adadelta accumulators, one vector per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaState {
    pub rho: f64,
    pub epsilon: f64,
    pub accum_grad_sq: Vec<Vec<f64>>,
    pub accum_update_sq: Vec<Vec<f64>>,
}

impl AdadeltaState {
    /// Fresh state for tensors of the given lengths.
    pub fn new(lengths: impl IntoIterator<Item = usize>, rho: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) || !(epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "adadelta needs 0 <= rho < 1 and epsilon > 0, got rho={rho}, epsilon={epsilon}"
            )));
        }
        let accum_grad_sq: Vec<Vec<f64>> = lengths.into_iter().map(|n| vec![0.0; n]).collect();
        Ok(Self {
            rho,
            epsilon,
            accum_update_sq: accum_grad_sq.clone(),
            accum_grad_sq,
        })
    }

    /// Applies one update in place. `names` label the tensors in error
    /// messages. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[&[f64]], names: &[String]) -> Result<()> {
        if params.len() != self.accum_grad_sq.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "adadelta state holds {} tensors, got {} parameters and {} gradients",
                self.accum_grad_sq.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.accum_grad_sq[i].len() {
                return Err(Error::Shape(format!("tensor {i}: parameter and gradient lengths differ")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                let name = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
                return Err(Error::NonFiniteGradient { name });
            }
        }
        let (rho, eps) = (self.rho, self.epsilon);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let eg = &mut self.accum_grad_sq[i];
            let eu = &mut self.accum_update_sq[i];
            for j in 0..p.len() {
                let gj = g[j];
                eg[j] = rho * eg[j] + (1.0 - rho) * gj * gj;
                let delta = -((eu[j] + eps).sqrt() / (eg[j] + eps).sqrt()) * gj;
                eu[j] = rho * eu[j] + (1.0 - rho) * delta * delta;
                p[j] += delta;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_decays_accumulators_only() {
        let mut state = AdadeltaState::new([2], 0.95, 1e-6).unwrap();
        state.accum_grad_sq[0] = vec![1.0, 2.0];
        state.accum_update_sq[0] = vec![3.0, 4.0];
        let mut w = vec![0.5, -0.5];
        for _ in 0..5 {
            state.step(&mut [&mut w], &[&[0.0, 0.0]], &[]).unwrap();
        }
        assert_eq!(w, vec![0.5, -0.5]);
        let k = 0.95f64.powi(5);
        for (a, b) in state.accum_grad_sq[0].iter().zip([1.0 * k, 2.0 * k]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_closed_form() {
        let mut state = AdadeltaState::new([1], DEFAULT_RHO, DEFAULT_EPSILON).unwrap();
        let mut w = vec![0.0];
        state.step(&mut [&mut w], &[&[1.0]], &[]).unwrap();
        assert!((w[0] + 4.4721e-3).abs() < 1e-7, "{}", w[0]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut state = AdadeltaState::new([1, 2], 0.95, 1e-6).unwrap();
        let (mut a, mut b) = (vec![0.0], vec![0.0, 0.0]);
        let err = state
            .step(&mut [&mut a, &mut b], &[&[1.0], &[0.0, f64::NAN]], &["a".into(), "l02.bias".into()])
            .unwrap_err();
        assert!(err.to_string().contains("l02.bias"), "{err}");
        assert_eq!(a, vec![0.0]);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(AdadeltaState::new([1], 1.0, 1e-6).is_err());
        assert!(AdadeltaState::new([1], 0.9, 0.0).is_err());
    }
}
