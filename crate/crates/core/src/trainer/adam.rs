use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Moment accumulators for adaptive-moment gradient descent.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    names: Vec<String>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Zeroed accumulators for parameters with the given names and shapes.
    pub fn new<'a>(params: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Self {
        let (names, zeros): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|(n, t)| (n.to_owned(), Tensor::zeros(t.shape().to_vec())))
            .unzip();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            names,
            v: zeros.clone(),
            m: zeros,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Nothing is modified when a gradient is non-finite or mis-shaped.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(Error::Dimension {
            op: "adam_step",
            lhs: vec![params.len(), grads.len()],
            rhs: vec![state.m.len()],
        });
    }
    for ((p, g), (m, name)) in params.iter().zip(grads).zip(state.m.iter().zip(&state.names)) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient {
                parameter: name.clone(),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let iter = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((pv, &gv), (mv, vv)) in iter {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> (Vec<Tensor>, AdamState) {
        let p = vec![Tensor::from_vec(vec![v])];
        let s = AdamState::new([("w", &p[0])]);
        (p, s)
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut p, mut s) = scalar_param(0.0);
        adam_step(&mut p, &[Tensor::from_vec(vec![1.0])], &mut s, 0.1).unwrap();
        // m̂ = v̂ = 1 at t = 1
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let (mut p, mut s) = scalar_param(2.0);
        adam_step(&mut p, &[Tensor::from_vec(vec![3.0])], &mut s, 0.01).unwrap();
        let after_one = p[0].data()[0];
        let m1 = s.first_moments()[0].data()[0];
        let (mut fresh, mut fresh_state) = scalar_param(2.0);
        adam_step(&mut fresh, &[Tensor::from_vec(vec![0.0])], &mut fresh_state, 0.01).unwrap();
        assert_eq!(fresh[0].data()[0], 2.0);
        adam_step(&mut p, &[Tensor::from_vec(vec![0.0])], &mut s, 0.01).unwrap();
        assert!(s.first_moments()[0].data()[0].abs() < m1.abs());
        assert_ne!(p[0].data()[0], after_one);
    }

    #[test]
    fn nan_gradient_names_the_parameter_and_changes_nothing() {
        let (mut p, mut s) = scalar_param(1.0);
        let before = (p.clone(), s.clone());
        let err = adam_step(&mut p, &[Tensor::from_vec(vec![f64::NAN])], &mut s, 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref parameter } if parameter == "w"));
        assert_eq!((p, s), before);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let (mut p, mut s) = scalar_param(0.3);
            for i in 0..50 {
                let g = Tensor::from_vec(vec![(i as f64 * 0.7).sin()]);
                adam_step(&mut p, &[g], &mut s, 1e-2).unwrap();
            }
            p[0].data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn update_is_bounded_by_learning_rate() {
        for g in [1e-6, 0.5, 3.0, -250.0] {
            for lr in [1e-3, 1e-6, 1e-9] {
                // start at 0 so the update is measured without cancellation
                let (mut p, mut s) = scalar_param(0.0);
                adam_step(&mut p, &[Tensor::from_vec(vec![g])], &mut s, lr).unwrap();
                assert!(p[0].data()[0].abs() <= lr * (1.0 + 1e-9));
            }
        }
    }
}
