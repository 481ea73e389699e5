use crate::error::{Error, Result};
use crate::nn::{ModelParams, Tensor};

pub const DEFAULT_LEARNING_RATE: f64 = 0.002;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;

/// Adam with an exponentially weighted infinity norm in place of the second
/// moment:
///
/// ```text
/// m ← β₁ m + (1 − β₁) g
/// u ← max(β₂ u, |g|)
/// θ ← θ − α / (1 − β₁ᵗ) · m / u
/// ```
///
/// Elements whose `u` is exactly zero have only ever seen zero gradients and
/// are left unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamaxState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub infinity_norm: Vec<Tensor>,
}

impl AdamaxState {
    pub fn new(shapes: &[Vec<usize>], learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            step: 0,
            first_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            infinity_norm: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_model(params: &ModelParams, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        let shapes: Vec<Vec<usize>> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        Self::new(&shapes, learning_rate, beta1, beta2)
    }

    /// One update over parallel lists of parameters and gradients. Nothing is
    /// modified when any gradient is non-finite.
    pub fn update(&mut self, params: &mut [(String, &mut Tensor)], grads: &[(String, &Tensor)]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((pname, p), (gname, g)) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "parameter '{pname}' {:?} vs gradient '{gname}' {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of '{gname}'")));
            }
        }

        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let step_size = self.learning_rate / (1.0 - b1.powi(self.step as i32));
        for (i, ((_, p), (_, g))) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].data_mut();
            let u = self.infinity_norm[i].data_mut();
            for (j, (theta, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                u[j] = (b2 * u[j]).max(gj.abs());
                if u[j] > 0.0 {
                    *theta -= step_size * m[j] / u[j];
                }
            }
        }
        Ok(())
    }
}

pub fn adamax_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamaxState) -> Result<()> {
    let mut p = params.named_tensors_mut();
    let g = grads.named_tensors();
    state.update(&mut p, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    fn run(grads: &[f64]) -> (f64, AdamaxState) {
        let mut theta = scalar(0.0);
        let mut state = AdamaxState::new(&[vec![1]], DEFAULT_LEARNING_RATE, DEFAULT_BETA1, DEFAULT_BETA2);
        for &g in grads {
            let gt = scalar(g);
            state
                .update(&mut [("theta".into(), &mut theta)], &[("theta".into(), &gt)])
                .unwrap();
        }
        (theta.data()[0], state)
    }

    #[test]
    fn first_step_closed_form() {
        let (theta, state) = run(&[1.0]);
        assert_eq!(state.step, 1);
        assert!((state.first_moment[0].data()[0] - 0.1).abs() < 1e-15);
        assert_eq!(state.infinity_norm[0].data()[0], 1.0);
        assert!((theta + 0.002).abs() < 1e-15, "{theta}");
    }

    #[test]
    fn zero_gradient_is_a_fixpoint() {
        let (theta, state) = run(&[0.0; 20]);
        assert_eq!(theta, 0.0);
        assert_eq!(state.step, 20);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut theta = scalar(1.0);
        let mut state = AdamaxState::new(&[vec![1]], 0.1, 0.9, 0.999);
        let g = scalar(f64::NAN);
        let err = state
            .update(&mut [("emb".into(), &mut theta)], &[("emb".into(), &g)])
            .unwrap_err();
        assert!(err.to_string().contains("emb"));
        assert_eq!(state.step, 0);
        assert_eq!(theta.data()[0], 1.0);
    }

    proptest! {
        #[test]
        fn odd_symmetry(grads in prop::collection::vec(-10.0f64..10.0, 1..30)) {
            let neg: Vec<f64> = grads.iter().map(|g| -g).collect();
            let (a, _) = run(&grads);
            let (b, _) = run(&neg);
            prop_assert_eq!(a, -b);
        }

        #[test]
        fn infinity_norm_bounds(grads in prop::collection::vec(-10.0f64..10.0, 1..30)) {
            let mut prev = 0.0;
            for k in 1..=grads.len() {
                let (_, state) = run(&grads[..k]);
                let u = state.infinity_norm[0].data()[0];
                prop_assert!(u >= DEFAULT_BETA2 * prev);
                prop_assert!(u >= grads[k - 1].abs());
                prop_assert!(u >= 0.0);
                prev = u;
            }
        }
    }
}
