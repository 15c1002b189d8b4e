use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layer, Network};
use crate::tensor::Scalar;

/// Half-width of the Xavier uniform law.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Draws every weight uniformly from ±sqrt(6/(fan_in+fan_out)) and zeroes
/// biases. Samples are drawn in f64 so both precisions see the same values.
pub fn xavier_init<T: Scalar>(net: &mut Network<T>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in net.layers_mut() {
        let (bound, weight, bias) = match layer {
            Layer::Conv(c) => (xavier_bound(c.fan_in(), c.fan_out()), &mut c.weight, &mut c.bias),
            Layer::Linear(l) => (
                xavier_bound(l.in_features, l.out_features),
                &mut l.weight,
                &mut l.bias,
            ),
            _ => continue,
        };
        for w in weight.data_mut() {
            *w = T::from_f64_lossy(rng.gen_range(-bound..=bound));
        }
        bias.fill(T::zero());
    }
}
