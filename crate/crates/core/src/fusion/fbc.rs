//! Factorized bilinear coding.
//!
//! Each dictionary atom is a low-rank matrix `U_l V_lᵀ` (`U_l: p×r`,
//! `V_l: q×r`). A pair `(x, y)` is coded by projecting `x yᵀ` onto the atoms
//! through the factors, `⟨x yᵀ, U_l V_lᵀ⟩ = Σ_s (U_l[:,s]·x)(V_l[:,s]·y)`,
//! correcting with the inverse atom Gram matrix, and soft-thresholding by
//! `λ/2`. For orthonormal atoms this is the exact LASSO solution.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::store::VectorStore;
use crate::error::{Error, Result};

/// Gram matrices with a larger condition number are rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

#[derive(Clone, Debug)]
pub struct FbcDictionary {
    p: usize,
    q: usize,
    k: usize,
    r: usize,
    lambda: f64,
    /// `[U_1 | U_2 | … | U_k]`, p × rk.
    u_all: DMatrix<f64>,
    /// `[V_1 | V_2 | … | V_k]`, q × rk.
    v_all: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
}

impl FbcDictionary {
    /// Builds a dictionary from per-atom factors. Every `u[l]` must be p×r and
    /// every `v[l]` q×r.
    pub fn from_factors(u: &[DMatrix<f64>], v: &[DMatrix<f64>], lambda: f64) -> Result<Self> {
        let k = u.len();
        if k == 0 || v.len() != k {
            return Err(Error::InvalidConfig(format!(
                "need k ≥ 1 matching U and V factors, got {} and {}",
                u.len(),
                v.len()
            )));
        }
        let (p, r) = u[0].shape();
        let q = v[0].nrows();
        if p == 0 || q == 0 || r == 0 {
            return Err(Error::InvalidConfig("dictionary dims and rank must be positive".into()));
        }
        for (l, (ul, vl)) in u.iter().zip(v).enumerate() {
            if ul.shape() != (p, r) || vl.shape() != (q, r) {
                return Err(Error::InvalidConfig(format!(
                    "atom {l} has factor shapes {:?}/{:?}, expected ({p}, {r})/({q}, {r})",
                    ul.shape(),
                    vl.shape()
                )));
            }
        }
        let mut u_all = DMatrix::zeros(p, r * k);
        let mut v_all = DMatrix::zeros(q, r * k);
        for l in 0..k {
            u_all.columns_mut(l * r, r).copy_from(&u[l]);
            v_all.columns_mut(l * r, r).copy_from(&v[l]);
        }
        Self::from_stacked(u_all, v_all, k, r, lambda)
    }

    fn from_stacked(u_all: DMatrix<f64>, v_all: DMatrix<f64>, k: usize, r: usize, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be finite and ≥ 0, got {lambda}")));
        }
        if u_all.iter().chain(v_all.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("dictionary factors must be finite".into()));
        }
        let (p, q) = (u_all.nrows(), v_all.nrows());
        // G = P((UᵀU) ∘ (VᵀV))Pᵀ: block sums of the Hadamard product.
        let uu = u_all.transpose() * &u_all;
        let vv = v_all.transpose() * &v_all;
        let had = uu.component_mul(&vv);
        let gram = DMatrix::from_fn(k, k, |l, m| had.view((l * r, m * r), (r, r)).sum());
        let eig = SymmetricEigen::new(gram.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_GRAM_CONDITION) {
            return Err(Error::DegenerateDictionary { condition });
        }
        let gram_inv = gram
            .clone()
            .cholesky()
            .ok_or(Error::DegenerateDictionary { condition })?
            .inverse();
        Ok(FbcDictionary {
            p,
            q,
            k,
            r,
            lambda,
            u_all,
            v_all,
            gram,
            gram_inv,
        })
    }

    /// Factors drawn i.i.d. uniform on `[−1/√r, 1/√r]`, then each atom
    /// `U_l V_lᵀ` rescaled to unit Frobenius norm.
    pub fn random(p: usize, q: usize, k: usize, r: usize, lambda: f64, seed: u64) -> Result<Self> {
        if p == 0 || q == 0 || k == 0 || r == 0 {
            return Err(Error::InvalidConfig("dictionary dims, atoms and rank must be positive".into()));
        }
        let bound = 1.0 / (r as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u_all = DMatrix::from_fn(p, r * k, |_, _| rng.gen_range(-bound..=bound));
        let mut v_all = DMatrix::from_fn(q, r * k, |_, _| rng.gen_range(-bound..=bound));
        // Rescale each atom to unit Frobenius norm; λ/2 is the right
        // threshold only for unit-norm atoms.
        for l in 0..k {
            let norm = (u_all.columns(l * r, r) * v_all.columns(l * r, r).transpose()).norm();
            if norm > 0.0 {
                let s = 1.0 / norm.sqrt();
                u_all.columns_mut(l * r, r).scale_mut(s);
                v_all.columns_mut(l * r, r).scale_mut(s);
            }
        }
        Self::from_stacked(u_all, v_all, k, r, lambda)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be finite and ≥ 0, got {lambda}")));
        }
        Ok(FbcDictionary { lambda, ..self.clone() })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn atoms(&self) -> usize {
        self.k
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn u(&self, l: usize) -> DMatrix<f64> {
        self.u_all.columns(l * self.r, self.r).into_owned()
    }

    pub fn v(&self, l: usize) -> DMatrix<f64> {
        self.v_all.columns(l * self.r, self.r).into_owned()
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::DimMismatch {
                expected: self.p,
                found: x.len(),
            });
        }
        if y.len() != self.q {
            return Err(Error::DimMismatch {
                expected: self.q,
                found: y.len(),
            });
        }
        Ok(())
    }

    /// `⟨x yᵀ, U_l V_lᵀ⟩` for every atom: `P(Uᵀx ∘ Vᵀy)`.
    pub fn atom_projections(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        self.check_dims(x, y)?;
        let ux = self.u_all.tr_mul(&DVector::from_column_slice(x));
        let vy = self.v_all.tr_mul(&DVector::from_column_slice(y));
        let t = ux.component_mul(&vy);
        Ok(DVector::from_fn(self.k, |l, _| t.rows(l * self.r, self.r).sum()))
    }

    /// Gram-corrected code before shrinkage.
    pub fn raw_code(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let proj = self.atom_projections(x, y)?;
        Ok((&self.gram_inv * proj).iter().copied().collect())
    }

    pub fn encode(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let half = self.lambda / 2.0;
        Ok(self
            .raw_code(x, y)?
            .into_iter()
            .map(|c| soft_threshold(c, half))
            .collect())
    }

    /// `‖x yᵀ − Σ_l c_l U_l V_lᵀ‖² + λ‖c‖₁`, expanded through the Gram matrix
    /// so the p×q product is never formed.
    pub fn objective(&self, x: &[f64], y: &[f64], code: &[f64]) -> Result<f64> {
        if code.len() != self.k {
            return Err(Error::DimMismatch {
                expected: self.k,
                found: code.len(),
            });
        }
        let proj = self.atom_projections(x, y)?;
        let c = DVector::from_column_slice(code);
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let residual = xx * yy - 2.0 * c.dot(&proj) + c.dot(&(&self.gram * &c));
        Ok(residual.max(0.0) + self.lambda * code.iter().map(|v| v.abs()).sum::<f64>())
    }

    /// Writes the dictionary into a vector store under `fbc/meta`, `fbc/u`
    /// and `fbc/v` (factors column-major).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let mut store = VectorStore::create(dir)?;
        let meta = [self.p as f64, self.q as f64, self.k as f64, self.r as f64, self.lambda];
        store.insert("fbc/meta", &meta)?;
        store.insert("fbc/u", self.u_all.as_slice())?;
        store.insert("fbc/v", self.v_all.as_slice())?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let store = VectorStore::open(dir)?;
        let meta = store.get("fbc/meta")?;
        if meta.len() != 5 {
            return Err(Error::Store("fbc/meta must hold 5 values".into()));
        }
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
                Ok(v as usize)
            } else {
                Err(Error::Store(format!("invalid dictionary size {v}")))
            }
        };
        let (p, q, k, r) = (as_count(meta[0])?, as_count(meta[1])?, as_count(meta[2])?, as_count(meta[3])?);
        let u = store.get("fbc/u")?;
        let v = store.get("fbc/v")?;
        if u.len() != p * r * k || v.len() != q * r * k {
            return Err(Error::Store("factor sizes disagree with fbc/meta".into()));
        }
        Self::from_stacked(
            DMatrix::from_column_slice(p, r * k, &u),
            DMatrix::from_column_slice(q, r * k, &v),
            k,
            r,
            meta[4],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(n: usize, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, 1);
        m[(i, 0)] = 1.0;
        m
    }

    /// vec(A) row-major.
    fn vec_of(m: &DMatrix<f64>) -> Vec<f64> {
        (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|ij| m[ij]).collect()
    }

    #[test]
    fn single_atom_closed_form() {
        let dict = FbcDictionary::from_factors(&[e(3, 0)], &[e(4, 0)], 0.0).unwrap();
        let code = dict.encode(&[2.0, 0.0, 0.0], &[3.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(code, vec![6.0]);
    }

    #[test]
    fn full_shrinkage_zeroes_the_code() {
        let dict = FbcDictionary::random(4, 4, 3, 2, 0.0, 7).unwrap();
        let x = [0.3, -0.2, 0.9, 0.1];
        let y = [-0.5, 0.4, 0.2, 0.7];
        let max = dict.raw_code(&x, &y).unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let big = dict.with_lambda(2.0 * max).unwrap();
        assert!(big.encode(&x, &y).unwrap().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn orthonormal_atoms_match_closed_form_lasso() {
        // Disjoint supports, unit vectorized norm: atom l = u_l v_lᵀ with
        // u_l, v_l supported on coordinate l (scaled to unit product).
        let scales = [(2.0, 0.5), (0.25, 4.0), (1.0, 1.0)];
        let u: Vec<_> = scales.iter().enumerate().map(|(l, (a, _))| e(4, l) * *a).collect();
        let v: Vec<_> = scales.iter().enumerate().map(|(l, (_, b))| e(4, l) * *b).collect();
        let x = [0.7, -1.3, 0.4, 2.0];
        let y = [1.1, 0.6, -0.9, 0.3];
        for lambda in [0.0, 0.1, 0.5, 1.5] {
            let dict = FbcDictionary::from_factors(&u, &v, lambda).unwrap();
            let code = dict.encode(&x, &y).unwrap();
            let z = vec_of(&(DMatrix::from_column_slice(4, 1, &x) * DMatrix::from_row_slice(1, 4, &y)));
            for l in 0..3 {
                let atom = vec_of(&(&u[l] * v[l].transpose()));
                let inner: f64 = z.iter().zip(&atom).map(|(a, b)| a * b).sum();
                let expected = soft_threshold(inner, lambda / 2.0);
                assert!((code[l] - expected).abs() < 1e-12, "λ={lambda} l={l}");
            }
        }
    }

    #[test]
    fn gram_matches_vectorized_atoms() {
        let dict = FbcDictionary::random(3, 5, 4, 2, 0.1, 3).unwrap();
        for l in 0..4 {
            for m in 0..4 {
                let a = vec_of(&(dict.u(l) * dict.v(l).transpose()));
                let b = vec_of(&(dict.u(m) * dict.v(m).transpose()));
                let g: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
                assert!((dict.gram()[(l, m)] - g).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_dictionary_is_rejected() {
        let u = [e(2, 0), e(2, 0)];
        let v = [e(2, 1), e(2, 1)];
        let err = FbcDictionary::from_factors(&u, &v, 0.0).unwrap_err();
        assert!(err.to_string().starts_with("degenerate dictionary"), "{err}");
    }

    #[test]
    fn shape_errors() {
        assert!(FbcDictionary::from_factors(&[e(2, 0)], &[], 0.0).is_err());
        assert!(FbcDictionary::from_factors(&[e(2, 0), e(3, 0)], &[e(2, 0), e(2, 1)], 0.0).is_err());
        assert!(FbcDictionary::random(2, 2, 1, 1, -1.0, 0).is_err());
        let dict = FbcDictionary::random(2, 3, 1, 1, 0.0, 0).unwrap();
        assert!(dict.encode(&[1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let dict = FbcDictionary::random(5, 3, 4, 2, 0.25, 9).unwrap();
        dict.save(dir.path()).unwrap();
        let back = FbcDictionary::load(dir.path()).unwrap();
        assert_eq!((back.p(), back.q(), back.atoms(), back.rank()), (5, 3, 4, 2));
        assert_eq!(back.lambda(), 0.25);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        let y = [1.0, -1.0, 0.5];
        for (a, b) in dict.raw_code(&x, &y).unwrap().iter().zip(back.raw_code(&x, &y).unwrap()) {
            assert!((a - b).abs() < 1e-4 * (1.0 + a.abs()));
        }
    }

    proptest! {
        #[test]
        fn shrinkage_is_monotone_in_lambda(
            seed in 0u64..200,
            x in prop::collection::vec(-1.0f64..1.0, 4),
            y in prop::collection::vec(-1.0f64..1.0, 4),
            l1 in 0.0f64..1.0,
            dl in 0.0f64..1.0,
        ) {
            let base = FbcDictionary::random(4, 4, 3, 2, 0.0, seed).unwrap();
            let a = base.with_lambda(l1).unwrap().encode(&x, &y).unwrap();
            let b = base.with_lambda(l1 + dl).unwrap().encode(&x, &y).unwrap();
            let nz = |c: &[f64]| c.iter().filter(|v| **v != 0.0).count();
            prop_assert!(nz(&b) <= nz(&a));
            for (ca, cb) in a.iter().zip(&b) {
                prop_assert!(cb.abs() <= ca.abs());
            }
        }

        #[test]
        fn soft_threshold_algebra(
            seed in 0u64..200,
            x in prop::collection::vec(-1.0f64..1.0, 4),
            y in prop::collection::vec(-1.0f64..1.0, 4),
            lambda in 0.0f64..0.5,
        ) {
            let dict = FbcDictionary::random(4, 4, 3, 2, lambda, seed).unwrap();
            let raw = dict.raw_code(&x, &y).unwrap();
            let code = dict.encode(&x, &y).unwrap();
            for (c, r) in code.iter().zip(&raw) {
                prop_assert_eq!(c.abs(), (r.abs() - lambda / 2.0).max(0.0));
                if *c != 0.0 {
                    prop_assert_eq!(c.signum(), r.signum());
                }
            }
        }
    }
}
