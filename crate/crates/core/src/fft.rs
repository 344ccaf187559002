//! n-dimensional complex FFTs on row-major cubes (first axis slowest).

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

/// Unnormalised transform in place. `inverse` uses e^{+2πi km/n}.
pub fn fft_nd(data: &mut [Complex64], n: usize, d: usize, inverse: bool) {
    assert_eq!(data.len(), n.pow(d as u32));
    let mut planner = FftPlanner::new();
    let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    // last axis: contiguous rows
    data.par_chunks_mut(n).for_each(|row| plan.process(row));
    for axis in (0..d.saturating_sub(1)).rev() {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        data.par_chunks_mut(block).for_each(|blk| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for off in 0..stride {
                for k in 0..n {
                    line[k] = blk[off + k * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for k in 0..n {
                    blk[off + k * stride] = line[k];
                }
            }
        });
    }
}

/// Multi-index of a flat index.
pub fn unflatten(mut idx: usize, n: usize, d: usize, out: &mut [usize]) {
    for a in (0..d).rev() {
        out[a] = idx % n;
        idx /= n;
    }
}

/// (−1)^{Σ k_a}
pub fn parity(idx: usize, n: usize, d: usize) -> f64 {
    let mut s = 0;
    let mut r = idx;
    for _ in 0..d {
        s += r % n;
        r /= n;
    }
    if s % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_dft_2d() {
        let n = 8;
        let data: Vec<Complex64> = (0..n * n).map(|k| Complex64::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let mut f = data.clone();
        fft_nd(&mut f, n, 2, false);
        for k1 in 0..n {
            for k2 in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for m1 in 0..n {
                    for m2 in 0..n {
                        let ph = -std::f64::consts::TAU * ((k1 * m1 + k2 * m2) as f64) / n as f64;
                        s += data[m1 * n + m2] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((s - f[k1 * n + k2]).norm() < 1e-10);
            }
        }
        fft_nd(&mut f, n, 2, true);
        for (a, b) in f.iter().zip(&data) {
            assert!((a / (n * n) as f64 - b).norm() < 1e-12);
        }
    }
}
