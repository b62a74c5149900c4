use num_complex::Complex64;
use rustfft::FftPlanner;

/// Full linear convolution, `len(x) + len(h) - 1` samples.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    if x.len().min(h.len()) <= 64 {
        let mut out = vec![0.0; out_len];
        for (i, &xv) in x.iter().enumerate() {
            for (j, &hv) in h.iter().enumerate() {
                out[i + j] += xv * hv;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let lift = |s: &[f64]| {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for (d, &x) in v.iter_mut().zip(s) {
            d.re = x;
        }
        v
    };
    let mut a = lift(x);
    let mut b = lift(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a.iter().take(out_len).map(|c| c.re / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum() {
        let x: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let h: Vec<f64> = (0..90).map(|i| ((i * 13 % 29) as f64) / 29.0).collect();
        let fast = fft_convolve(&x, &h);
        for (n, &v) in fast.iter().enumerate() {
            let mut direct = 0.0;
            for (j, &hv) in h.iter().enumerate() {
                if n >= j && n - j < x.len() {
                    direct += x[n - j] * hv;
                }
            }
            assert!((v - direct).abs() < 1e-10);
        }
    }
}
