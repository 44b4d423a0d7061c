//! Seeded parameter initialization.

use rand::Rng;

use super::{LayerSpec, Sequential};

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
/// Parameters are drawn layer by layer in declaration order.
pub fn glorot_uniform<R: Rng + ?Sized>(network: &mut Sequential, rng: &mut R) {
    let specs: alloc::vec::Vec<LayerSpec> = network.specs();
    let mut params = network.parameters_mut();
    for spec in specs {
        let Some((fan_in, fan_out)) = spec.fans() else {
            continue;
        };
        let limit = libm::sqrtf(6.0 / (fan_in + fan_out) as f32);
        let weights = params.next().expect("weight tensor");
        for w in weights.data_mut() {
            *w = rng.gen_range(-limit..=limit);
        }
        let bias = params.next().expect("bias tensor");
        bias.data_mut().fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_is_seeded_and_bounded() {
        let specs = [LayerSpec::Dense { inputs: 10, units: 5 }];
        let mut a = Sequential::new(&[10], &specs).unwrap();
        let mut b = a.clone();
        glorot_uniform(&mut a, &mut ChaCha8Rng::seed_from_u64(7));
        glorot_uniform(&mut b, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let limit = libm::sqrtf(6.0 / 15.0);
        let weights = a.parameters().next().unwrap();
        assert!(weights.data().iter().all(|w| w.abs() <= limit));
        assert!(weights.data().iter().any(|&w| w != 0.0));
        assert!(a.parameters().nth(1).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
