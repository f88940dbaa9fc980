//! Parameter-update rules: plain stochastic gradient descent and ADAM.
//!
//! Both operate on the trainable slices of a [`ModelWeights`] model,
//! walking parameters and a like-shaped gradient model in the same fixed
//! order so updates are deterministic. ADAM keeps per-parameter first and
//! second moment estimates with bias correction.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::netdef::ModelWeights;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<OptimizerKind> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Data(format!(
                "unknown optimizer '{other}', expected 'adam' or 'sgd'"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, ..OptimizerConfig::sgd(learning_rate) }
    }

    /// Reject configurations that cannot converge. A zero learning rate is
    /// deliberately allowed: it freezes the model, which is a meaningful
    /// control run.
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Data(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Data(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::Data(format!(
                "epsilon must be finite and positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Stateful optimizer. Moment buffers are created lazily on the first step
/// and mirror the trainable slice layout.
pub struct Optimizer<F> {
    config: OptimizerConfig,
    /// Step count, used for ADAM bias correction.
    t: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Float> Optimizer<F> {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer { config, t: 0, m: Vec::new(), v: Vec::new() })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Apply one update from `grads` to `params`. Both models must share a
    /// structure; grads are the already-averaged batch gradients.
    pub fn step(&mut self, params: &mut ModelWeights<F>, grads: &ModelWeights<F>) -> Result<()> {
        let grad_slices = grads.trainable_slices();
        let mut param_slices = params.trainable_slices_mut();
        if grad_slices.len() != param_slices.len()
            || grad_slices
                .iter()
                .zip(param_slices.iter())
                .any(|(g, p)| g.len() != p.len())
        {
            return Err(Error::Shape(
                "gradient model does not mirror the parameter model".into(),
            ));
        }

        let lr = F::from(self.config.learning_rate).unwrap();
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in param_slices.iter_mut().zip(&grad_slices) {
                    for (pv, &gv) in p.iter_mut().zip(g.iter()) {
                        *pv = *pv - lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = grad_slices.iter().map(|g| vec![F::zero(); g.len()]).collect();
                    self.v = self.m.clone();
                }
                self.t += 1;
                let b1 = F::from(self.config.beta1).unwrap();
                let b2 = F::from(self.config.beta2).unwrap();
                let eps = F::from(self.config.epsilon).unwrap();
                let one = F::one();
                // 1 − βᵗ, computed in f64 to avoid drift at large t.
                let corr1 = F::from(1.0 - self.config.beta1.powi(self.t as i32)).unwrap();
                let corr2 = F::from(1.0 - self.config.beta2.powi(self.t as i32)).unwrap();
                for ((p, g), (m, v)) in param_slices
                    .iter_mut()
                    .zip(&grad_slices)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for (((pv, &gv), mv), vv) in
                        p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *mv = b1 * *mv + (one - b1) * gv;
                        *vv = b2 * *vv + (one - b2) * gv * gv;
                        let m_hat = *mv / corr1;
                        let v_hat = *vv / corr2;
                        *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
