//! Scalar loss functions. The conventions here are load-bearing for the rest
//! of the crate: L1 terms are means over coordinates, and GAN losses read
//! logits (the sigmoid lives inside the cross-entropy).

use crate::error::{Error, Result};
use crate::nn::softplus;

/// Mean absolute difference.
pub fn l1_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::DimMismatch {
            context: "l1_loss",
            expected: target.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyBatch("l1_loss"));
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// Binary cross-entropy of a logit against a constant label.
pub fn bce_with_logits(logit: f64, target: f64) -> f64 {
    softplus(logit) - target * logit
}

/// GAN losses from discriminator logits.
///
/// Discriminator: cross-entropy labeling real samples 1 and fakes 0.
/// Generator: non-saturating form, cross-entropy pushing fakes toward 1.
pub fn gan_losses(d_on_real: &[f64], d_on_fake: &[f64]) -> Result<(f64, f64)> {
    if d_on_real.is_empty() || d_on_fake.is_empty() {
        return Err(Error::EmptyBatch("gan_losses"));
    }
    let real_term = d_on_real
        .iter()
        .map(|&z| bce_with_logits(z, 1.0))
        .sum::<f64>()
        / d_on_real.len() as f64;
    let fake_term = d_on_fake
        .iter()
        .map(|&z| bce_with_logits(z, 0.0))
        .sum::<f64>()
        / d_on_fake.len() as f64;
    let disc = real_term + fake_term;
    let gen = d_on_fake
        .iter()
        .map(|&z| bce_with_logits(z, 1.0))
        .sum::<f64>()
        / d_on_fake.len() as f64;
    Ok((disc, gen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::sigmoid;

    #[test]
    fn l1_zero_iff_equal() {
        assert_eq!(l1_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(l1_loss(&[1.0, 2.0], &[1.0, 2.1]).unwrap() > 0.0);
    }

    #[test]
    fn l1_mean_convention() {
        assert_eq!(l1_loss(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
    }

    #[test]
    fn l1_matches_sum_of_abs_over_n() {
        let p: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let t: Vec<f64> = (0..10).map(|i| (i as f64 * 0.91).cos()).collect();
        let expected: f64 = p.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum::<f64>() / 10.0;
        assert!((l1_loss(&p, &t).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn l1_rejects_length_mismatch() {
        assert!(l1_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn perfect_discrimination_drives_disc_loss_to_zero() {
        let (disc, _gen) = gan_losses(&[50.0, 60.0], &[-50.0, -55.0]).unwrap();
        assert!(disc < 1e-20);
    }

    #[test]
    fn zero_logits_give_ln2_per_term() {
        let (disc, gen) = gan_losses(&[0.0, 0.0, 0.0], &[0.0]).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((disc - 2.0 * ln2).abs() < 1e-12);
        assert!((gen - ln2).abs() < 1e-12);
    }

    #[test]
    fn matches_scalar_by_scalar_cross_entropy() {
        let real = [0.3, -1.2, 2.4, 0.01];
        let fake = [-0.7, 1.9, 0.4];
        let mut disc = 0.0;
        for &z in &real {
            let p = sigmoid(z);
            disc += -(p.ln());
        }
        let mut fake_term = 0.0;
        let mut gen = 0.0;
        for &z in &fake {
            let p = sigmoid(z);
            fake_term += -((1.0 - p).ln());
            gen += -(p.ln());
        }
        let expected_disc = disc / real.len() as f64 + fake_term / fake.len() as f64;
        let expected_gen = gen / fake.len() as f64;
        let (d, g) = gan_losses(&real, &fake).unwrap();
        assert!((d - expected_disc).abs() < 1e-10);
        assert!((g - expected_gen).abs() < 1e-10);
    }

    #[test]
    fn empty_batches_rejected() {
        assert!(gan_losses(&[], &[0.0]).is_err());
        assert!(gan_losses(&[0.0], &[]).is_err());
    }
}
