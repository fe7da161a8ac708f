//! Generator maps: anything that pushes a latent vector into ambient space.

/// A deterministic map from latent space to ambient space. Fitted networks,
/// additive fits and ground-truth constructions all implement this, so
/// samplers and the transport evaluation treat them uniformly.
pub trait Generator {
    fn latent_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, z: &[f64]) -> Vec<f64>;
}

/// A generator backed by a closure, mostly for tests and ground-truth maps.
pub struct FnGenerator<F: Fn(&[f64]) -> Vec<f64>> {
    latent_dim: usize,
    output_dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FnGenerator<F> {
    pub fn new(latent_dim: usize, output_dim: usize, f: F) -> Self {
        FnGenerator {
            latent_dim,
            output_dim,
            f,
        }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> Generator for FnGenerator<F> {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn eval(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.latent_dim);
        (self.f)(z)
    }
}
