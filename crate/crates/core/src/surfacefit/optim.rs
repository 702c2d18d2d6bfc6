use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub max_iters: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub ema_decay: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Arithmetic used by the fitting loop's forward/backward passes.
    pub precision: Precision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
            max_iters: 2000,
            plateau_factor: 0.5,
            plateau_patience: 50,
            min_lr: 1e-4,
            ema_decay: 0.9,
            early_stop_patience: 150,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let checks: [(&str, bool); 10] = [
            ("learning_rate", self.learning_rate > 0.0 && self.learning_rate.is_finite()),
            ("beta1", open_unit(self.beta1)),
            ("beta2", open_unit(self.beta2)),
            ("epsilon", self.epsilon > 0.0 && self.epsilon.is_finite()),
            ("weight_decay", self.weight_decay >= 0.0 && self.weight_decay.is_finite()),
            ("max_iters", self.max_iters > 0),
            ("plateau_factor", open_unit(self.plateau_factor)),
            ("plateau_patience", self.plateau_patience > 0),
            ("min_lr", self.min_lr >= 0.0 && self.min_lr.is_finite()),
            ("ema_decay", open_unit(self.ema_decay)),
        ];
        if let Some((name, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(Error::Config(format!("{name} out of range")));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::Config("early_stop_patience out of range".into()));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay and bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamW {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &OptimConfig) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: self.m.len(),
                got: params.len(),
            });
        }
        if grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: self.m.len(),
                got: grad.len(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let decay = 1.0 - lr * cfg.weight_decay;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *p *= decay;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `plateau_factor` once the loss has not beaten its
/// best value for `plateau_patience` consecutive observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    lr: f64,
    best: f64,
    bad: usize,
}

impl PlateauScheduler {
    pub fn new(cfg: &OptimConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            best: f64::INFINITY,
            bad: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn observe(&mut self, loss: f64, cfg: &OptimConfig) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.bad = 0;
        } else {
            self.bad += 1;
            if self.bad >= cfg.plateau_patience {
                self.lr = (self.lr * cfg.plateau_factor).max(cfg.min_lr);
                self.bad = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopSignal {
    Continue,
    Stop,
}

/// Early stopping on the exponential moving average of the loss. Only a strictly
/// smaller EMA counts as an improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaEarlyStop {
    ema: Option<f64>,
    best: f64,
    bad: usize,
}

impl Default for EmaEarlyStop {
    fn default() -> Self {
        Self::new()
    }
}

impl EmaEarlyStop {
    pub fn new() -> Self {
        Self {
            ema: None,
            best: f64::INFINITY,
            bad: 0,
        }
    }

    pub fn ema(&self) -> Option<f64> {
        self.ema
    }

    pub fn observe(&mut self, loss: f64, cfg: &OptimConfig) -> StopSignal {
        let ema = match self.ema {
            None => loss,
            Some(prev) => cfg.ema_decay * prev + (1.0 - cfg.ema_decay) * loss,
        };
        self.ema = Some(ema);
        if ema < self.best {
            self.best = ema;
            self.bad = 0;
        } else {
            self.bad += 1;
        }
        if self.bad >= cfg.early_stop_patience {
            StopSignal::Stop
        } else {
            StopSignal::Continue
        }
    }
}
