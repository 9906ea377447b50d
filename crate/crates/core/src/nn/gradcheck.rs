//! Central finite-difference checks of hand-written gradients.

use super::ParamSet;

pub const GRADCHECK_STEP: f64 = 1e-4;
/// Step used to re-measure an entry whose first estimate straddles a ReLU
/// kink.
pub const GRADCHECK_FINE_STEP: f64 = 1e-6;
/// Denominator floor for the relative error, so gradients near zero are
/// compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheck {
    /// Largest relative error over all entries after refinement.
    pub worst: f64,
    pub entries: usize,
    /// Entries that needed the fine step.
    pub refined: usize,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.worst <= tolerance
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRADCHECK_FLOOR)
}

/// Compares `analytic` (laid out like `params`) with central differences of
/// `loss` at every parameter entry. Entries that miss `tolerance` at
/// [`GRADCHECK_STEP`] are measured again at [`GRADCHECK_FINE_STEP`].
pub fn check_gradients<P, F>(params: &mut P, analytic: &P, tolerance: f64, mut loss: F) -> GradCheck
where
    P: ParamSet,
    F: FnMut(&P) -> f64,
{
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data.to_vec()).collect();
    let mut report = GradCheck::default();
    let mut central = |params: &mut P, ti: usize, k: usize, h: f64| {
        let orig = params.tensors_mut()[ti][k];
        params.tensors_mut()[ti][k] = orig + h;
        let up = loss(params);
        params.tensors_mut()[ti][k] = orig - h;
        let down = loss(params);
        params.tensors_mut()[ti][k] = orig;
        (up - down) / (2.0 * h)
    };
    for (ti, tensor) in analytic.iter().enumerate() {
        for (k, &a) in tensor.iter().enumerate() {
            report.entries += 1;
            let mut err = relative_error(a, central(params, ti, k, GRADCHECK_STEP));
            if err > tolerance {
                report.refined += 1;
                err = relative_error(a, central(params, ti, k, GRADCHECK_FINE_STEP));
            }
            report.worst = report.worst.max(err);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp, MlpSpec};
    use rand::SeedableRng;

    #[test]
    fn detects_a_wrong_gradient() {
        let spec = MlpSpec::stack(3, &[4], Activation::Tanh, 2, false, Activation::Sigmoid);
        let mut net = Mlp::new(spec, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        let x = [0.3, -0.2, 0.9];
        let loss = |n: &Mlp| n.forward(&x).unwrap().0.iter().sum::<f64>();
        let mut grads = net.zeros_like();
        let (_, cache) = net.forward(&x).unwrap();
        net.backward(&cache, &[1.0, 1.0], &mut grads);
        let ok = check_gradients(&mut net, &grads, 1e-4, loss);
        assert!(ok.passes(1e-4), "{ok:?}");
        assert_eq!(ok.entries, net.num_params());
        grads.tensors_mut()[0][0] += 0.5;
        assert!(!check_gradients(&mut net, &grads, 1e-4, loss).passes(1e-4));
    }
}
