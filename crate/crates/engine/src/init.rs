use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::spec::{LayerKind, LayerSpec};

/// Parameters of one layer. For batch normalization `weight`/`bias` hold
/// gamma/beta; the running statistics are empty for every other kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub running_mean: Vec<T>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub running_var: Vec<T>,
}

impl<T> Default for LayerParams<T> {
    fn default() -> Self {
        LayerParams {
            weight: Vec::new(),
            bias: Vec::new(),
            running_mean: Vec::new(),
            running_var: Vec::new(),
        }
    }
}

impl<T> LayerParams<T> {
    pub fn affine(weight: Vec<T>, bias: Vec<T>) -> Self {
        LayerParams {
            weight,
            bias,
            ..Default::default()
        }
    }

    pub fn count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// He-style initialization: weights uniform in `±sqrt(6 / fan_in)` (variance
/// `2 / fan_in`, `fan_in = in_channels × kernel volume`), zero biases,
/// batchnorm gamma 1 / beta 0 with running stats (0, 1).
pub fn seeded_init<T: Scalar>(spec: &LayerSpec, seed: u64) -> Result<LayerParams<T>> {
    spec.validate()?;
    Ok(match spec.kind {
        LayerKind::Conv | LayerKind::Deconv => {
            let fan_in = (spec.in_channels * spec.kernel_volume()) as f64;
            let bound = (6.0 / fan_in).sqrt();
            let n = spec.in_channels * spec.out_channels * spec.kernel_volume();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weight = (0..n)
                .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
                .collect();
            LayerParams::affine(weight, vec![T::zero(); spec.out_channels])
        }
        LayerKind::BatchNorm => LayerParams {
            weight: vec![T::one(); spec.in_channels],
            bias: vec![T::zero(); spec.in_channels],
            running_mean: vec![T::zero(); spec.in_channels],
            running_var: vec![T::one(); spec.in_channels],
        },
        _ => LayerParams::default(),
    })
}

/// Derives an independent per-layer seed (splitmix64 finalizer).
pub(crate) fn layer_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
