use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropoutMode {
    Training,
    Inference,
}

/// Inverted dropout. The keep-mask of the last training forward is recorded
/// for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutState {
    ratio: f64,
    pub mode: DropoutMode,
    mask: Option<Vec<bool>>,
}

impl DropoutState {
    pub fn new(ratio: f64, mode: DropoutMode) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::InvalidConfig(format!(
                "dropout ratio must be in [0, 1), got {ratio}"
            )));
        }
        Ok(Self {
            ratio,
            mode,
            mask: None,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Keep-mask recorded by the last training forward.
    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Installs a fixed keep-mask, e.g. to replay a forward pass.
    pub fn set_mask(&mut self, mask: Vec<bool>) {
        self.mask = Some(mask);
    }

    fn scale(&self) -> f64 {
        1.0 / (1.0 - self.ratio)
    }
}

/// Zeroes each element with probability `ratio` and scales survivors by
/// `1 / (1 − ratio)` in training mode; identity in inference mode.
pub fn dropout(input: &Tensor, state: &mut DropoutState, seed: u64) -> Tensor {
    if state.mode == DropoutMode::Inference {
        state.mask = None;
        return input.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<bool> = (0..input.len())
        .map(|_| rng.random::<f64>() >= state.ratio)
        .collect();
    let out = apply_mask(input, &mask, state.scale());
    state.mask = Some(mask);
    out
}

/// Applies the mask already installed in `state` (see
/// [`DropoutState::set_mask`]); identity in inference mode or without a mask.
pub fn dropout_with_mask(input: &Tensor, state: &DropoutState) -> Tensor {
    match (state.mode, &state.mask) {
        (DropoutMode::Training, Some(mask)) => apply_mask(input, mask, state.scale()),
        _ => input.clone(),
    }
}

/// Replays a recorded mask: the same forward map, applied to `input`.
pub(crate) fn apply_mask(input: &Tensor, mask: &[bool], scale: f64) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(mask)
        .map(|(&x, &keep)| if keep { x * scale } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("mask has the input's length")
}

pub fn dropout_backward(grad_out: &Tensor, state: &DropoutState) -> Result<Tensor> {
    match (state.mode, &state.mask) {
        (DropoutMode::Inference, _) => Ok(grad_out.clone()),
        (DropoutMode::Training, Some(mask)) => {
            if mask.len() != grad_out.len() {
                return Err(Error::ShapeMismatch(format!(
                    "dropout mask has {} elements, gradient has {}",
                    mask.len(),
                    grad_out.len()
                )));
            }
            Ok(apply_mask(grad_out, mask, state.scale()))
        }
        (DropoutMode::Training, None) => Err(Error::ShapeMismatch(
            "dropout backward before any training forward".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_grad_close, numeric_grad, random_tensor};

    #[test]
    fn ratio_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, &[3, 5]);
        for mode in [DropoutMode::Training, DropoutMode::Inference] {
            let mut st = DropoutState::new(0.0, mode).unwrap();
            assert_eq!(dropout(&x, &mut st, 77), x);
        }
    }

    #[test]
    fn inference_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, &[2, 8]);
        let mut st = DropoutState::new(0.5, DropoutMode::Inference).unwrap();
        assert_eq!(dropout(&x, &mut st, 3), x);
        assert!(st.mask().is_none());
    }

    #[test]
    fn half_ratio_statistics() {
        let x = Tensor::full(&[1_000_000], 1.25);
        let mut st = DropoutState::new(0.5, DropoutMode::Training).unwrap();
        let y = dropout(&x, &mut st, 2024);
        let zeroed = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((zeroed - 0.5).abs() <= 0.002, "zeroed fraction {zeroed}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.5));
        assert_eq!(st.mask().unwrap().len(), 1_000_000);
    }

    #[test]
    fn seeded_masks_are_reproducible() {
        let x = Tensor::full(&[64], 1.0);
        let mut a = DropoutState::new(0.5, DropoutMode::Training).unwrap();
        let mut b = DropoutState::new(0.5, DropoutMode::Training).unwrap();
        assert_eq!(dropout(&x, &mut a, 9), dropout(&x, &mut b, 9));
        assert_ne!(dropout(&x, &mut a, 9), dropout(&x, &mut b, 10));
    }

    #[test]
    fn fixed_mask_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(&mut rng, &[3, 7]);
        let mut st = DropoutState::new(0.3, DropoutMode::Training).unwrap();
        dropout(&x, &mut st, 5);
        let mask = st.mask().unwrap().to_vec();
        let proj = random_tensor(&mut rng, &[3, 7]);
        let g = dropout_backward(&proj, &st).unwrap();
        let numeric = numeric_grad(&x, |t| {
            apply_mask(t, &mask, 1.0 / 0.7).data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
        });
        assert_grad_close(&g, &numeric);
    }

    #[test]
    fn invalid_ratio() {
        assert!(DropoutState::new(1.0, DropoutMode::Training).is_err());
        assert!(DropoutState::new(-0.1, DropoutMode::Training).is_err());
    }
}
