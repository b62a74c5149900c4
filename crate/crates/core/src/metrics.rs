//! Signal quality measures.

use crate::error::{Error, Result};

/// Scale-invariant signal-to-distortion ratio in dB: the estimate is split
/// into its projection on the reference and the remainder.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::shape(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let rr: f64 = reference.iter().map(|r| r * r).sum();
    if rr <= 0.0 {
        return Err(Error::Silent("reference"));
    }
    let alpha = estimate.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / rr;
    let (mut target, mut noise) = (0.0, 0.0);
    for (e, r) in estimate.iter().zip(reference) {
        let t = alpha * r;
        target += t * t;
        noise += (e - t).powi(2);
    }
    Ok(10.0 * (target / noise.max(1e-300)).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_invariant_and_known_value() {
        let r: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let n: Vec<f64> = (0..100).map(|i| (i as f64 * 1.7).cos()).collect();
        let e: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + 0.1 * b).collect();
        let a = si_sdr(&e, &r).unwrap();
        let scaled: Vec<f64> = e.iter().map(|v| v * 7.0).collect();
        assert!((a - si_sdr(&scaled, &r).unwrap()).abs() < 1e-9);

        // orthogonal distortion of equal power: 0 dB
        let r = [1.0, 0.0];
        assert!(si_sdr(&[1.0, 1.0], &r).unwrap().abs() < 1e-12);
        assert!(si_sdr(&[1.0], &r).is_err());
        assert!(si_sdr(&[1.0, 0.0], &[0.0, 0.0]).is_err());
    }
}
