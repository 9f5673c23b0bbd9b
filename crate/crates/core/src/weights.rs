//! Convolution weight tensors and deterministic synthesis for graphs that ship
//! without trained parameters.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{NetworkGraph, Op};

/// Dense 4-D weight tensor in (F, C, K, K) row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub dims: [usize; 4],
    pub values: Vec<f32>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], values: Vec<f32>) -> Option<Self> {
        (dims.iter().product::<usize>() == values.len()).then_some(Self { dims, values })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self { dims, values: alloc::vec![0.0; dims.iter().product()] }
    }

    #[inline]
    pub fn index(&self, f: usize, c: usize, ky: usize, kx: usize) -> usize {
        let [_, cs, k1, k2] = self.dims;
        ((f * cs + c) * k1 + ky) * k2 + kx
    }

    #[inline]
    pub fn get(&self, f: usize, c: usize, ky: usize, kx: usize) -> f32 {
        self.values[self.index(f, c, ky, kx)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        })
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Pseudo-random weights for `name`, uniform in ±1/sqrt(C·K²). The stream
/// depends only on `(seed, name)`.
pub fn synthesize(name: &str, dims: [usize; 4], seed: u64) -> Tensor4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()));
    let fan_in = (dims[1] * dims[2] * dims[3]).max(1) as f64;
    let bound = (1.0 / libm::sqrt(fan_in)) as f32;
    let values = (0..dims.iter().product::<usize>()).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor4 { dims, values }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightShapeError {
    pub name: String,
    pub expected: [usize; 4],
    pub found: [usize; 4],
}

impl core::fmt::Display for WeightShapeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "weight tensor `{}` has dims {:?}, expected {:?}", self.name, self.found, self.expected)
    }
}

impl core::error::Error for WeightShapeError {}

/// Weight tensors for every convolution of a shaped graph: loaded ones where
/// present, synthesized otherwise. Keyed by weights reference.
pub fn resolve_weights(graph: &NetworkGraph, seed: u64) -> Result<BTreeMap<String, Tensor4>, WeightShapeError> {
    let mut out = BTreeMap::new();
    for n in graph.node_ids() {
        let Op::Convolution { window, filters, .. } = &graph.node(n).op else { continue };
        let key = graph.weights_key(n).expect("convolution has a weights key");
        let c = graph.input_shape(n).map(|s| s.c).unwrap_or(1);
        let dims = [*filters, c, window.kernel, window.kernel];
        let t = match graph.weights.get(key) {
            Some(t) if t.dims == dims => t.clone(),
            Some(t) => return Err(WeightShapeError { name: key.into(), expected: dims, found: t.dims }),
            None => synthesize(key, dims, seed),
        };
        out.insert(key.into(), t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthesis_is_deterministic_per_name() {
        let a = synthesize("conv1", [4, 3, 3, 3], 7);
        let b = synthesize("conv1", [4, 3, 3, 3], 7);
        let c = synthesize("conv2", [4, 3, 3, 3], 7);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = 1.0 / (27f32).sqrt();
        assert!(a.values.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn row_major_index() {
        let t = Tensor4::zeros([2, 3, 2, 2]);
        assert_eq!(t.index(1, 2, 1, 0), ((3 + 2) * 2 + 1) * 2);
        assert!(Tensor4::new([1, 1, 2, 2], alloc::vec![0.0; 3]).is_none());
    }
}
