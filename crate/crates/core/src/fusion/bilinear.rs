/// Row-major flattening of the outer product `x yᵀ`.
pub fn outer_product(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len() * y.len());
    for &xi in x {
        z.extend(y.iter().map(|&yj| xi * yj));
    }
    z
}

/// `sign(z)·sqrt(|z|)` followed by L2 normalization. All-zero input stays zero.
pub fn signed_sqrt_l2(z: &mut [f64]) {
    for v in z.iter_mut() {
        *v = v.signum() * v.abs().sqrt();
    }
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        z.iter_mut().for_each(|v| *v /= norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn basis_outer_product() {
        assert_eq!(outer_product(&[1.0, 0.0], &[0.0, 1.0]), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(outer_product(&[1.0, 2.0, 3.0], &[1.0, -1.0]).len(), 6);
    }

    #[test]
    fn normalization() {
        let mut z = vec![4.0, -9.0, 0.0];
        signed_sqrt_l2(&mut z);
        let n = 13f64.sqrt();
        assert!((z[0] - 2.0 / n).abs() < 1e-15 && (z[1] + 3.0 / n).abs() < 1e-15);
        let mut zero = vec![0.0; 3];
        signed_sqrt_l2(&mut zero);
        assert_eq!(zero, vec![0.0; 3]);
    }

    proptest! {
        #[test]
        fn bilinear_kernel_identity(
            x in prop::collection::vec(-3i32..=3, 1..6),
            y in prop::collection::vec(-3i32..=3, 1..6),
            seed in 0i32..50,
        ) {
            // Small integers keep every product exact in f64.
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            let y: Vec<f64> = y.into_iter().map(f64::from).collect();
            let x2: Vec<f64> = x.iter().enumerate().map(|(i, _)| f64::from((seed + i as i32) % 5 - 2)).collect();
            let y2: Vec<f64> = y.iter().enumerate().map(|(i, _)| f64::from((seed * 3 + i as i32) % 7 - 3)).collect();
            let lhs = dot(&outer_product(&x, &y), &outer_product(&x2, &y2));
            prop_assert_eq!(lhs, dot(&x, &x2) * dot(&y, &y2));
        }
    }
}
