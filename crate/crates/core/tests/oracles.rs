//! Independent numerical oracles for the fusion and embedding operations.

use nalgebra::DMatrix;
use quadfuse_core::embed::{EmbeddingProvider, Source};
use quadfuse_core::fusion::fbc::{soft_threshold, FbcDictionary};
use quadfuse_core::fusion::TensorSketch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Vectorized atoms as columns of a (p·q) × k matrix, built from explicit
/// p×q products.
fn explicit_dictionary(dict: &FbcDictionary) -> Vec<Vec<f64>> {
    (0..dict.atoms())
        .map(|l| {
            let atom = dict.u(l) * dict.v(l).transpose();
            atom.transpose().as_slice().to_vec()
        })
        .collect()
}

fn outer(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().flat_map(|a| y.iter().map(move |b| a * b)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(atoms: &[Vec<f64>], z: &[f64], c: &[f64], lambda: f64) -> f64 {
    let mut r = z.to_vec();
    for (atom, cl) in atoms.iter().zip(c) {
        r.iter_mut().zip(atom).for_each(|(ri, a)| *ri -= cl * a);
    }
    dot(&r, &r) + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Cyclic coordinate descent on ‖z − Bc‖² + λ‖c‖₁.
fn coordinate_descent_lasso(atoms: &[Vec<f64>], z: &[f64], lambda: f64) -> Vec<f64> {
    let k = atoms.len();
    let mut c = vec![0.0; k];
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for j in 0..k {
            let mut r = z.to_vec();
            for (m, atom) in atoms.iter().enumerate() {
                if m != j {
                    r.iter_mut().zip(atom).for_each(|(ri, a)| *ri -= c[m] * a);
                }
            }
            let norm2 = dot(&atoms[j], &atoms[j]);
            let next = soft_threshold(dot(&atoms[j], &r), lambda / 2.0) / norm2;
            delta = delta.max((next - c[j]).abs());
            c[j] = next;
        }
        if delta < 1e-15 {
            break;
        }
    }
    c
}

#[test]
fn orthonormal_atoms_agree_with_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        // Disjoint supports: atom l lives on row l and column l of a 4×4 grid.
        let mut u = Vec::new();
        let mut v = Vec::new();
        for l in 0..3 {
            let a: f64 = rng.gen_range(0.5..2.0);
            let mut ul = DMatrix::zeros(4, 1);
            ul[(l, 0)] = a;
            let mut vl = DMatrix::zeros(4, 1);
            vl[(l, 0)] = 1.0 / a;
            u.push(ul);
            v.push(vl);
        }
        let lambda = rng.gen_range(0.0..0.5);
        let dict = FbcDictionary::from_factors(&u, &v, lambda).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z = outer(&x, &y);
        let code = dict.encode(&x, &y).unwrap();
        for (l, atom) in explicit_dictionary(&dict).iter().enumerate() {
            let expected = soft_threshold(dot(&z, atom), lambda / 2.0);
            assert!((code[l] - expected).abs() < 1e-8);
        }
    }
}

#[test]
fn general_dictionary_objective_near_lasso_optimum() {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let dict = FbcDictionary::random(4, 4, 3, 2, 0.1, seed).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let atoms = explicit_dictionary(&dict);
        let z = outer(&x, &y);
        let optimum = coordinate_descent_lasso(&atoms, &z, 0.1);
        let best = objective(&atoms, &z, &optimum, 0.1);
        let code = dict.encode(&x, &y).unwrap();
        let ours = objective(&atoms, &z, &code, 0.1);
        // The Gram-expanded objective must agree with the explicit one.
        assert!((dict.objective(&x, &y, &code).unwrap() - ours).abs() < 1e-9);
        assert!(ours >= best - 1e-9, "seed {seed}: below optimum");
        worst = worst.max(ours / best);
    }
    assert!(worst <= 1.10, "worst objective ratio {worst}");
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn perturbed_unit(rng: &mut ChaCha8Rng, base: &[f64], scale: f64) -> Vec<f64> {
    let v: Vec<f64> = base
        .iter()
        .map(|b| {
            let g: f64 = StandardNormal.sample(rng);
            b + scale * g / (base.len() as f64).sqrt()
        })
        .collect();
    let n = dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / n).collect()
}

#[test]
fn tensor_sketch_inner_products_are_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 64;
    let x = random_unit(&mut rng, d);
    let y = random_unit(&mut rng, d);
    let x2 = perturbed_unit(&mut rng, &x, 0.5);
    let y2 = perturbed_unit(&mut rng, &y, 0.5);
    let target = dot(&x, &x2) * dot(&y, &y2);
    let trials = 2000;
    let mean: f64 = (0..trials)
        .map(|s| {
            let ts = TensorSketch::new(d, 1024, s).unwrap();
            dot(&ts.sketch(&x, &y).unwrap(), &ts.sketch(&x2, &y2).unwrap())
        })
        .sum::<f64>()
        / trials as f64;
    let rel = (mean - target).abs() / target.abs();
    assert!(rel < 0.05, "mean {mean} target {target} rel {rel}");
}

#[test]
fn distinct_image_refs_are_rarely_collinear() {
    let p = EmbeddingProvider::synthetic_image(2048, 77).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pairs = 10_000;
    let mut near = 0;
    for _ in 0..pairs {
        let a = format!("cdn/{:016x}.jpg", rng.gen::<u64>());
        let b = format!("cdn/{:016x}.jpg", rng.gen::<u64>());
        let va = p.embed_image(&a, Source::PostImage).unwrap();
        let vb = p.embed_image(&b, Source::PostImage).unwrap();
        if dot(va.values(), vb.values()) >= 0.99 {
            near += 1;
        }
    }
    assert!(near as f64 / pairs as f64 <= 0.001, "{near} near-collinear pairs");
}

