//! Shared internals: seed derivation, the Adam optimizer, numeric formatting.

use ndarray::{Array1, Array2};

/// splitmix64 step; the standard finalizer used to stretch one seed word.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a path of indices.
///
/// Stable across platforms and independent of `std` hasher randomization, so
/// per-trial and per-node generators are reproducible from the manifest alone.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = master ^ 0xa076_1d64_78bd_642f;
    let mut out = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xe703_7ed1_a0b4_28db);
        out ^= splitmix64(&mut state);
    }
    out
}

/// Adam state for one parameter tensor.
#[derive(Debug, Clone)]
struct AdamSlot {
    m: Array2<f64>,
    v: Array2<f64>,
}

/// Adam optimizer over a list of 2-d parameter tensors.
///
/// Vectors are handled as 1xN matrices by the callers. Weight decay is the
/// classic L2 form added to the gradient before the moment updates.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    slots: Vec<AdamSlot>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64, shapes: &[(usize, usize)]) -> Self {
        let slots = shapes
            .iter()
            .map(|&(r, c)| AdamSlot {
                m: Array2::zeros((r, c)),
                v: Array2::zeros((r, c)),
            })
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            slots,
        }
    }

    /// One update step. `params` and `grads` must match the construction order.
    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[Array2<f64>]) {
        assert_eq!(params.len(), self.slots.len());
        assert_eq!(grads.len(), self.slots.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((param, grad), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let g = if self.weight_decay != 0.0 {
                grad + &(&**param * self.weight_decay)
            } else {
                grad.clone()
            };
            slot.m.zip_mut_with(&g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            slot.v
                .zip_mut_with(&g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            ndarray::Zip::from(&mut **param)
                .and(&slot.m)
                .and(&slot.v)
                .for_each(|p, &m, &v| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}

/// Formats a float with three decimals for table/CSV output.
pub fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

/// Row-major flattening used by all JSON checkpoint formats.
pub fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Inverse of [`to_rows`]; validates rectangular shape.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return None;
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((r, c), flat).ok()
}

/// 1-d convenience wrapper around [`Adam`] slots.
pub fn as_matrix(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(ndarray::Axis(0))
}
