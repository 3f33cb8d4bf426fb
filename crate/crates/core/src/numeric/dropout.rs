use super::rng::Rng;

/// Inverted dropout mask: each unit is kept with probability `1 − rate` and scaled by
/// `1 / (1 − rate)`, so inference needs no rescaling.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    scale: Vec<f64>,
}

impl DropoutMask {
    pub fn identity(width: usize) -> Self {
        Self { scale: vec![1.0; width] }
    }

    pub fn sample(width: usize, rate: f64, rng: &mut Rng) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
        let keep = 1.0 / (1.0 - rate);
        let scale = (0..width)
            .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
            .collect();
        Self { scale }
    }

    /// Mask for a forward pass: identity unless training with a positive rate.
    pub fn for_pass(width: usize, rate: f64, training: bool, rng: &mut Rng) -> Self {
        if training && rate > 0.0 {
            Self::sample(width, rate, rng)
        } else {
            Self::identity(width)
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    /// Gradient of `apply` is the same elementwise scaling.
    pub fn backward(&self, dy: &[f64]) -> Vec<f64> {
        self.apply(dy)
    }

    pub fn zeroed_fraction(&self) -> f64 {
        self.scale.iter().filter(|&&s| s == 0.0).count() as f64 / self.scale.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inference_is_bit_exact_identity() {
        let x = [0.1, -3.5, 7.25, f64::MIN_POSITIVE];
        let mask = DropoutMask::for_pass(4, 0.3, false, &mut Rng::new(1));
        let y = mask.apply(&x);
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn zeroed_fraction_tracks_rate() {
        let mask = DropoutMask::sample(100_000, 0.3, &mut Rng::new(2));
        assert!((mask.zeroed_fraction() - 0.3).abs() < 0.01);
    }

    #[test]
    fn kept_units_are_rescaled() {
        let mask = DropoutMask::sample(1000, 0.5, &mut Rng::new(3));
        for v in mask.apply(&[1.0; 1000]) {
            assert!(v == 0.0 || v == 2.0);
        }
    }
}
