//! Adam optimizer state and update step.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Per-parameter Adam state. Defaults are the optimizer's canonical
/// alpha=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step_count: u64,
    pub m: Tensor,
    pub v: Tensor,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(param_shape: &[usize], alpha: f64) -> AdamState {
        AdamState {
            step_count: 0,
            m: Tensor::zeros(param_shape),
            v: Tensor::zeros(param_shape),
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update with bias correction:
/// m = b1*m + (1-b1)*g, v = b2*v + (1-b2)*g^2,
/// p -= alpha * m_hat / (sqrt(v_hat) + eps).
pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut AdamState) -> Result<()> {
    if !param.same_shape(grad) || !param.same_shape(&state.m) {
        return Err(Error::ShapeMismatch {
            context: "adam_step",
            expected: param.shape().to_vec(),
            got: grad.shape().to_vec(),
        });
    }
    grad.check_finite("adam_step gradient")?;

    state.step_count += 1;
    let t = state.step_count as i32;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let m_corr = 1.0 - b1.powi(t);
    let v_corr = 1.0 - b2.powi(t);

    let m = state.m.data_mut();
    let v = state.v.data_mut();
    let p = param.data_mut();
    let g = grad.data();
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / m_corr;
        let v_hat = v[i] / v_corr;
        p[i] -= state.alpha * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_almost_alpha() {
        // Hand evaluation at t=1 with g=1: m_hat=1, v_hat=1,
        // update = -alpha/(1+eps) which is -0.1 to within eps.
        let mut p = Tensor::scalar(0.0);
        let g = Tensor::scalar(1.0);
        let mut st = AdamState::new(&[1], 0.1);
        adam_step(&mut p, &g, &mut st).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-8);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = Tensor::scalar(0.7);
        let g = Tensor::scalar(0.0);
        let mut st = AdamState::new(&[1], 0.1);
        for _ in 0..50 {
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        assert_eq!(p.data()[0], 0.7);
    }

    #[test]
    fn update_is_odd_in_gradient() {
        let g = Tensor::from_vec(&[3], vec![0.3, -1.2, 5.0]).unwrap();
        let neg = g.map(|x| -x);

        let mut p_pos = Tensor::zeros(&[3]);
        let mut st_pos = AdamState::new(&[3], 0.05);
        adam_step(&mut p_pos, &g, &mut st_pos).unwrap();

        let mut p_neg = Tensor::zeros(&[3]);
        let mut st_neg = AdamState::new(&[3], 0.05);
        adam_step(&mut p_neg, &neg, &mut st_neg).unwrap();

        for (a, b) in p_pos.data().iter().zip(p_neg.data()) {
            assert!((a + b).abs() < 1e-15, "updates not exact negations");
        }
    }

    #[test]
    fn first_step_bounded_by_alpha() {
        let mut rng = crate::numerics::rng::Rng::new(11);
        for _ in 0..100 {
            let g = Tensor::from_vec(&[1], vec![rng.range_f64(-10.0, 10.0)]).unwrap();
            let mut p = Tensor::scalar(0.0);
            let mut st = AdamState::new(&[1], 0.01);
            adam_step(&mut p, &g, &mut st).unwrap();
            assert!(p.data()[0].abs() <= 0.01 * (1.0 + 1e-6));
        }
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut p = Tensor::scalar(0.0);
        let g = Tensor::scalar(f64::NAN);
        let mut st = AdamState::new(&[1], 0.1);
        assert!(adam_step(&mut p, &g, &mut st).is_err());
    }
}
