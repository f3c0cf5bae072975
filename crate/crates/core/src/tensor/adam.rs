use super::{Array, TensorError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TensorError::InvalidArgument(format!(
                "invalid Adam configuration {self:?}"
            )))
        }
    }
}

/// First/second moment estimates for a fixed, ordered parameter list.
///
/// Moments are allocated lazily on the first step, matching the shapes of
/// the parameters handed in.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Array>,
    v: Vec<Array>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Result<Self, TensorError> {
        config.validate()?;
        Ok(AdamState {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update, applied in place.
    pub fn step(&mut self, params: &mut [&mut Array], grads: &[Array]) -> Result<(), TensorError> {
        if params.len() != grads.len() {
            return Err(TensorError::InvalidArgument(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Array::zeros(p.shape())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self
                .m
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.shape() != p.shape())
        {
            return Err(TensorError::InvalidArgument(
                "parameter list changed between Adam steps".into(),
            ));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, param) in params.iter_mut().enumerate() {
            let g = grads[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (i, w) in param.data_mut().iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Array::vector(vec![0.5, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut state = AdamState::new(AdamConfig::default()).unwrap();
        for _ in 0..3 {
            state.step(&mut [&mut p], &[Array::zeros(&[3])]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t=1: m_hat = g, v_hat = g^2, so the update is -lr * g/(|g| + eps).
        let mut p = Array::scalar(1.0);
        let mut state = AdamState::new(AdamConfig::default()).unwrap();
        state.step(&mut [&mut p], &[Array::scalar(1.0)]).unwrap();
        let expected = 1.0 - 0.001 * 1.0 / (1.0 + 1e-8);
        assert!((p.item().unwrap() - expected).abs() < 1e-15);
        assert!((p.item().unwrap() - (1.0 - 0.001)).abs() < 1e-10);
    }

    #[test]
    fn constant_positive_gradient_descends_twice() {
        let mut p = Array::scalar(0.0);
        let mut state = AdamState::new(AdamConfig::default()).unwrap();
        let mut last = 0.0;
        for _ in 0..2 {
            state.step(&mut [&mut p], &[Array::scalar(0.7)]).unwrap();
            let now = p.item().unwrap();
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Array::zeros(&[2]);
        let mut state = AdamState::new(AdamConfig::default()).unwrap();
        let err = state
            .step(&mut [&mut p], &[Array::zeros(&[3])])
            .unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { .. }));
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let bad = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(bad).is_err());
    }
}
