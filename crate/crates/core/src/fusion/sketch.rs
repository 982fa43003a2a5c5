//! Tensor Sketch approximation of bilinear pooling: two independent count
//! sketches, circularly convolved through the FFT.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CountSketch {
    buckets: Vec<usize>,
    signs: Vec<f64>,
    out_dim: usize,
}

impl CountSketch {
    fn random<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let buckets = (0..in_dim).map(|_| rng.gen_range(0..out_dim)).collect();
        let signs = (0..in_dim)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        CountSketch {
            buckets,
            signs,
            out_dim,
        }
    }

    /// Inputs shorter than the sketch's input dimension are zero-padded.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        for ((&b, &s), &x) in self.buckets.iter().zip(&self.signs).zip(v) {
            out[b] += s * x;
        }
        out
    }
}

#[derive(Clone)]
pub struct TensorSketch {
    in_dim: usize,
    out_dim: usize,
    seed: u64,
    first: CountSketch,
    second: CountSketch,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TensorSketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TensorSketch")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("seed", &self.seed)
            .finish()
    }
}

impl TensorSketch {
    pub fn new(in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if out_dim < 1 {
            return Err(Error::InvalidConfig("sketch_dim must be at least 1".into()));
        }
        if in_dim < 1 {
            return Err(Error::InvalidConfig("sketch input dim must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = CountSketch::random(in_dim, out_dim, &mut rng);
        let second = CountSketch::random(in_dim, out_dim, &mut rng);
        let mut planner = FftPlanner::new();
        Ok(TensorSketch {
            in_dim,
            out_dim,
            seed,
            first,
            second,
            forward: planner.plan_fft_forward(out_dim),
            inverse: planner.plan_fft_inverse(out_dim),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Ψ(x, y) = IFFT(FFT(C₁x) ∘ FFT(C₂y)). Both inputs are zero-padded to
    /// the sketch input dimension.
    pub fn sketch(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        for v in [x, y] {
            if v.len() > self.in_dim {
                return Err(Error::DimMismatch {
                    expected: self.in_dim,
                    found: v.len(),
                });
            }
        }
        let to_complex = |v: Vec<f64>| -> Vec<Complex<f64>> {
            v.into_iter().map(|re| Complex::new(re, 0.0)).collect()
        };
        let mut a = to_complex(self.first.apply(x));
        let mut b = to_complex(self.second.apply(y));
        self.forward.process(&mut a);
        self.forward.process(&mut b);
        for (ai, bi) in a.iter_mut().zip(&b) {
            *ai *= bi;
        }
        self.inverse.process(&mut a);
        let scale = 1.0 / self.out_dim as f64;
        Ok(a.into_iter().map(|c| c.re * scale).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct circular convolution, no FFT.
    fn circular_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = a.len();
        (0..n)
            .map(|k| (0..n).map(|i| a[i] * b[(k + n - i) % n]).sum())
            .collect()
    }

    #[test]
    fn matches_direct_convolution() {
        let ts = TensorSketch::new(6, 5, 42).unwrap();
        let x = [0.3, -1.0, 2.0, 0.0, 0.5, 1.5];
        let y = [1.0, 0.25, -0.5, 3.0];
        let expected = circular_convolution(&ts.first.apply(&x), &ts.second.apply(&y));
        let got = ts.sketch(&x, &y).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_zero_and_determinism() {
        let ts = TensorSketch::new(8, 16, 1).unwrap();
        let x = [1.0; 8];
        assert_eq!(ts.sketch(&x, &x).unwrap().len(), 16);
        assert!(ts.sketch(&[0.0; 8], &x).unwrap().iter().all(|v| v.abs() < 1e-15));
        let again = TensorSketch::new(8, 16, 1).unwrap();
        assert_eq!(ts.sketch(&x, &[2.0; 8]).unwrap(), again.sketch(&x, &[2.0; 8]).unwrap());
        assert!(TensorSketch::new(8, 0, 1).is_err());
        assert!(ts.sketch(&[0.0; 9], &x).is_err());
    }
}
