use super::{Result, Tensor, TensorError};

/// Stochastic gradient descent with heavy-ball momentum and L2 weight decay:
///
/// ```text
/// v ← momentum·v + grad + weight_decay·param
/// param ← param − lr·v
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
        }
    }

    /// Zeroed velocity buffers matching `params`.
    pub fn init_velocity(params: &[Tensor]) -> Vec<Vec<f64>> {
        params.iter().map(|p| vec![0.0; p.len()]).collect()
    }

    pub fn step(&self, params: &mut [Tensor], grads: &[Vec<f64>], velocity: &mut [Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != velocity.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "{} parameters, {} gradients, {} velocities",
                params.len(),
                grads.len(),
                velocity.len()
            )));
        }
        for ((p, g), v) in params.iter().zip(grads).zip(velocity.iter()) {
            if p.len() != g.len() || p.len() != v.len() {
                return Err(TensorError::ShapeMismatch(format!(
                    "parameter {:?} with gradient of {} and velocity of {}",
                    p.shape(),
                    g.len(),
                    v.len()
                )));
            }
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
            for ((w, &d), vel) in p.data_mut().iter_mut().zip(g).zip(v.iter_mut()) {
                *vel = self.momentum * *vel + d + self.weight_decay * *w;
                *w -= self.lr * *vel;
            }
        }
        Ok(())
    }
}
