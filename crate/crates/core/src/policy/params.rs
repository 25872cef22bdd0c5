use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::rng::rng_from_seed;
use crate::sim::{OBS_FEATURES, OBS_ROWS};
use crate::Action;

/// Network hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Features per observation row; the last one is the presence flag.
    pub d_in: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { d_in: OBS_FEATURES, d_model: 128, heads: 2, layers: 2 }
    }
}

impl Dims {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.d_model
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.d_in == 0 || self.d_model == 0 || self.heads == 0 || self.layers == 0 {
            return Err(PolicyError::InvalidDims("dimensions must be positive"));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(PolicyError::InvalidDims("heads must divide d_model"));
        }
        Ok(())
    }

    /// Rows of the observations this net reads by default.
    pub fn rows(&self) -> usize {
        OBS_ROWS
    }
}

/// Offsets of one parameter array inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlots {
    pub wq: Slot,
    pub wk: Slot,
    pub wv: Slot,
    pub wo: Slot,
    pub w1: Slot,
    pub b1: Slot,
    pub w2: Slot,
    pub b2: Slot,
}

/// Where every array lives. Matrices are row-major `in x out`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub dims: Dims,
    pub embed_w: Slot,
    pub embed_b: Slot,
    pub layers: Vec<LayerSlots>,
    pub pi_w: Slot,
    pub pi_b: Slot,
    pub v_w: Slot,
    pub v_b: Slot,
    pub total: usize,
}

impl Layout {
    pub fn new(dims: Dims) -> Result<Self, PolicyError> {
        dims.validate()?;
        let mut offset = 0;
        let mut slot = |rows: usize, cols: usize| {
            let s = Slot { offset, rows, cols };
            offset += rows * cols;
            s
        };
        let (d, f) = (dims.d_model, dims.ffn_dim());
        let embed_w = slot(dims.d_in, d);
        let embed_b = slot(1, d);
        let layers = (0..dims.layers)
            .map(|_| LayerSlots {
                wq: slot(d, d),
                wk: slot(d, d),
                wv: slot(d, d),
                wo: slot(d, d),
                w1: slot(d, f),
                b1: slot(1, f),
                w2: slot(f, d),
                b2: slot(1, d),
            })
            .collect();
        let pi_w = slot(d, Action::COUNT);
        let pi_b = slot(1, Action::COUNT);
        let v_w = slot(d, 1);
        let v_b = slot(1, 1);
        Ok(Layout { dims, embed_w, embed_b, layers, pi_w, pi_b, v_w, v_b, total: offset })
    }

    /// `(name, slot, is_bias)` for every array in storage order.
    pub fn arrays(&self) -> Vec<(String, Slot, bool)> {
        let mut out =
            vec![(String::from("embed.w"), self.embed_w, false), (String::from("embed.b"), self.embed_b, true)];
        for (l, s) in self.layers.iter().enumerate() {
            out.push((format!("layers.{l}.attn.wq"), s.wq, false));
            out.push((format!("layers.{l}.attn.wk"), s.wk, false));
            out.push((format!("layers.{l}.attn.wv"), s.wv, false));
            out.push((format!("layers.{l}.attn.wo"), s.wo, false));
            out.push((format!("layers.{l}.ffn.w1"), s.w1, false));
            out.push((format!("layers.{l}.ffn.b1"), s.b1, true));
            out.push((format!("layers.{l}.ffn.w2"), s.w2, false));
            out.push((format!("layers.{l}.ffn.b2"), s.b2, true));
        }
        out.push((String::from("pi.w"), self.pi_w, false));
        out.push((String::from("pi.b"), self.pi_b, true));
        out.push((String::from("value.w"), self.v_w, false));
        out.push((String::from("value.b"), self.v_b, true));
        out
    }
}

/// All trainable arrays of the actor-critic, flattened. Gradients use the
/// same type.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(dims: Dims) -> Result<Self, PolicyError> {
        let layout = Layout::new(dims)?;
        let data = vec![0.0; layout.total];
        Ok(PolicyParams { layout, data })
    }

    pub fn zeros_like(&self) -> Self {
        PolicyParams { layout: self.layout.clone(), data: vec![0.0; self.data.len()] }
    }

    pub fn dims(&self) -> Dims {
        self.layout.dims
    }

    pub fn slice(&self, s: Slot) -> &[f64] {
        &self.data[s.range()]
    }

    pub fn slice_mut(&mut self, s: Slot) -> &mut [f64] {
        &mut self.data[s.range()]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &PolicyParams) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }
}

/// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
pub fn init_params(seed: u64, dims: Dims) -> Result<PolicyParams, PolicyError> {
    let mut p = PolicyParams::zeros(dims)?;
    let mut rng = rng_from_seed(seed);
    for (_, slot, is_bias) in p.layout.arrays() {
        if is_bias {
            continue;
        }
        let bound = 1.0 / libm::sqrt(slot.rows as f64);
        for x in p.slice_mut(slot) {
            *x = rng.gen_range(-bound..bound);
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_params() {
        let d = Dims { d_model: 16, ..Dims::default() };
        assert_eq!(init_params(3, d).unwrap(), init_params(3, d).unwrap());
        assert_ne!(init_params(3, d).unwrap().data, init_params(4, d).unwrap().data);
    }

    #[test]
    fn biases_start_at_zero() {
        let p = init_params(1, Dims::default()).unwrap();
        for (name, slot, is_bias) in p.layout.arrays() {
            let xs = p.slice(slot);
            if is_bias {
                assert!(xs.iter().all(|&x| x == 0.0), "{name}");
            } else {
                let bound = 1.0 / (slot.rows as f64).sqrt();
                assert!(xs.iter().all(|&x| x.abs() <= bound), "{name}");
            }
        }
    }

    #[test]
    fn head_dim_and_validation() {
        assert_eq!(Dims::default().head_dim(), 64);
        let bad = Dims { d_model: 10, heads: 3, ..Dims::default() };
        assert!(matches!(init_params(0, bad), Err(PolicyError::InvalidDims(_))));
    }

    #[test]
    fn layout_is_contiguous() {
        let l = Layout::new(Dims { d_model: 8, heads: 1, layers: 3, d_in: 6 }).unwrap();
        let mut next = 0;
        for (_, s, _) in l.arrays() {
            assert_eq!(s.offset, next);
            next += s.len();
        }
        assert_eq!(next, l.total);
    }
}
