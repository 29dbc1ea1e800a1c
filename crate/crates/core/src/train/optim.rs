use crate::error::{Error, Result};
use crate::model::Parameters;

/// Running mean-square accumulators, one per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub acc: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl OptimState {
    pub fn new(n: usize) -> Self {
        Self { acc: vec![0.0; n] }
    }

    pub fn for_params<P: Parameters>(p: &P) -> Self {
        Self::new(p.param_count())
    }
}

impl RmsProp {
    /// `acc ← decay·acc + (1 − decay)·g²`, `w ← w − lr·g/√(acc + eps)`.
    pub fn step_flat(&self, params: &mut [f64], grads: &[f64], state: &mut OptimState) -> Result<()> {
        if params.len() != grads.len() || params.len() != state.acc.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer over {} parameters given {} gradients and {} accumulators",
                params.len(),
                grads.len(),
                state.acc.len()
            )));
        }
        for ((w, &g), a) in params.iter_mut().zip(grads).zip(state.acc.iter_mut()) {
            *a = self.decay * *a + (1.0 - self.decay) * g * g;
            *w -= self.lr * g / (*a + self.eps).sqrt();
        }
        Ok(())
    }

    pub fn step<P: Parameters>(&self, params: &mut P, grads: &P, state: &mut OptimState) -> Result<()> {
        let mut flat = params.to_flat();
        self.step_flat(&mut flat, &grads.to_flat(), state)?;
        params.load_flat(&flat)
    }
}
