use cpsdre_core::cp::*;
use cpsdre_core::tensor::relative_error;
use cpsdre_core::{seeded_rng, CpFactors, Matrix, Tensor3, Vector};
use proptest::prelude::*;
use rand::RngExt;

fn synthetic(dims: [usize; 3], rank: usize, seed: u64) -> Tensor3 {
    let mut rng = seeded_rng(seed);
    CpFactors::random(dims, rank, &mut rng).unwrap().reconstruct()
}

/// Cyclic coordinate descent on `1/2 ||A a - b||^2 + lambda ||a||_1`.
fn coordinate_descent_lasso(a: &Matrix, b: &Vector, lambda: f64) -> Vector {
    let n = a.ncols();
    let mut x = Vector::zeros(n);
    for _ in 0..20000 {
        let mut change = 0.0f64;
        for j in 0..n {
            let col = a.column(j);
            let cj = col.norm_squared();
            if cj == 0.0 {
                continue;
            }
            let r = b - a * &x + col * x[j];
            let rho = col.dot(&r);
            let new = rho.signum() * (rho.abs() - lambda).max(0.0) / cj;
            change = change.max((new - x[j]).abs());
            x[j] = new;
        }
        if change < 1e-15 {
            break;
        }
    }
    x
}

fn objective(a: &Matrix, b: &Vector, x: &Vector, lambda: f64) -> f64 {
    0.5 * (a * x - b).norm_squared() + lambda * x.lp_norm(1)
}

#[test]
fn ista_converges_to_coordinate_descent_oracle() {
    for seed in 0..5 {
        let mut rng = seeded_rng(seed);
        // R = 4 terms on a 2x2x2 tensor
        let q = Matrix::from_fn(4, 8, |_, _| rng.random_range(-1.0..1.0));
        let t = Vector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let lambda = 0.1;
        let mut alpha = Vector::zeros(4);
        for _ in 0..20000 {
            alpha = ista_alpha_update(&t, &q, &alpha, lambda, None).unwrap();
        }
        let a = q.transpose();
        let oracle = coordinate_descent_lasso(&a, &t, lambda);
        let (f1, f2) = (objective(&a, &t, &alpha, lambda), objective(&a, &t, &oracle, lambda));
        assert!((f1 - f2).abs() < 1e-8, "seed {seed}: ISTA {f1} vs oracle {f2}");
    }
}

proptest! {
    #[test]
    fn soft_threshold_is_the_scalar_prox(z in proptest::collection::vec(-5.0f64..5.0, 1..8), tau in 0.0f64..3.0) {
        let out = soft_threshold(&Vector::from_vec(z.clone()), tau);
        for (i, &zi) in z.iter().enumerate() {
            // analytic minimizer of 1/2 (a - z)^2 + tau |a|
            let oracle = if zi > tau { zi - tau } else if zi < -tau { zi + tau } else { 0.0 };
            prop_assert!((out[i] - oracle).abs() < 1e-15);
            // and it is no worse than nearby candidates
            let f = |a: f64| 0.5 * (a - zi).powi(2) + tau * a.abs();
            for d in [-1e-3, 1e-3] {
                prop_assert!(f(out[i]) <= f(out[i] + d) + 1e-15);
            }
        }
    }
}

/// Dense Tikhonov solution of `min ||Q^T a - t||^2 + lambda ||L a||^2` with
/// `L = diag((|a0| + eps)^(-1/2))`.
fn tikhonov_oracle(q: &Matrix, t: &Vector, a0: &Vector, lambda: f64) -> Vector {
    let l2 = Matrix::from_diagonal(&a0.map(|a| 1.0 / (a.abs() + IRLS_EPSILON)));
    let lhs = q * q.transpose() + l2 * lambda;
    lhs.lu().solve(&(q * t)).unwrap()
}

#[test]
fn full_bidiagonalization_matches_dense_tikhonov() {
    for seed in 0..5 {
        let mut rng = seeded_rng(100 + seed);
        let r = 4;
        // orthonormal rows of Q
        let raw = Matrix::from_fn(12, r, |_, _| rng.random_range(-1.0..1.0));
        let q = raw.qr().q().transpose();
        let alpha_true = Vector::from_column_slice(&[4.0, 2.0, 1.0, 0.5]);
        let t = q.transpose() * &alpha_true;
        let a0 = Vector::from_fn(r, |_, _| rng.random_range(0.5..2.0));
        let out = flexible_hybrid_alpha_update(&t, &q, &a0, r).unwrap();
        let oracle = tikhonov_oracle(&q, &t, &a0, out.lambda);
        assert!((&out.alpha - &oracle).norm() < 1e-8 * oracle.norm(), "seed {seed}");
    }
}

#[test]
fn zero_data_gives_zero_weights() {
    let q = Matrix::identity(3, 6);
    let out = flexible_hybrid_alpha_update(&Vector::zeros(6), &q, &Vector::from_element(3, 1.0), 3).unwrap();
    assert!(out.alpha.iter().all(|&v| v == 0.0));
}

#[test]
fn ls_update_matches_pseudoinverse() {
    let mut rng = seeded_rng(9);
    let kr = Matrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
    let unfolding = Matrix::from_fn(5, 30, |_, _| rng.random_range(-1.0..1.0));
    let out = als_ls_update(&unfolding, &kr).unwrap();
    let pinv = kr.clone().pseudo_inverse(1e-14).unwrap();
    let oracle = &unfolding * pinv.transpose();
    assert!((&out - &oracle).norm() < 1e-10 * oracle.norm());
}

#[test]
fn als_recovers_synthetic_rank_three() {
    let t = synthetic([20, 20, 20], 3, 2024);
    let (f, trace) = als(&t, &AlsConfig { rank: 3, ..Default::default() }, None).unwrap();
    assert!(trace.iterations() <= 500);
    assert!(relative_error(&t, &f).unwrap() < 1e-6);
}

#[test]
fn als_error_is_monotone() {
    let t = synthetic([8, 7, 6], 4, 5);
    let (_, trace) = als(&t, &AlsConfig { rank: 3, max_iters: 60, ..Default::default() }, None).unwrap();
    let e = trace.errors();
    for w in e.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-10), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn pgs_finds_rank_three() {
    let t = synthetic([20, 20, 20], 3, 2024);
    for seed in 0..5 {
        let r = pgs(&t, &PgsConfig { seed, ..Default::default() }, None).unwrap();
        assert_eq!(r.rank_estimate, 3, "seed {seed}");
        assert!(r.trace.final_error().unwrap() < 1e-4);
    }
}

#[test]
fn pgs_on_zero_tensor_has_rank_zero() {
    let t = Tensor3::zeros([4, 4, 4]).unwrap();
    let r = pgs(&t, &PgsConfig::default(), None).unwrap();
    assert_eq!(r.rank_estimate, 0);
}

#[test]
fn larger_fixed_lambda_keeps_fewer_terms() {
    let t = synthetic([10, 10, 10], 3, 77);
    let scale = t.frob_norm();
    let rank = |l: f64| {
        pgs(&t, &PgsConfig { lambda: Lambda::Fixed(l), max_iters: 200, ..Default::default() }, None)
            .unwrap()
            .rank_estimate
    };
    let small = rank(1e-3 * scale);
    let large = rank(1e-2 * scale);
    assert!(large <= small, "rank {large} at 10x lambda vs {small}");
}

#[test]
fn pgs_als_variants() {
    let t = synthetic([12, 11, 10], 3, 8);
    let p = pgs(&t, &PgsConfig::default(), None).unwrap();
    let perr = p.trace.final_error().unwrap();
    let r = p.rank_estimate;
    let one = pgs_alsk_from(&t, p.clone(), 1, &AlsConfig::default()).unwrap();
    assert_eq!(one.factors.rank(), r);
    assert!(one.trace.final_error().unwrap() <= perr * (1.0 + 1e-9) + 1e-12);
    let two = pgs_alsk_from(&t, p, 2, &AlsConfig::default()).unwrap();
    assert_eq!(two.factors.rank(), r + 1);
    assert!(pgs_alsk_from(&t, two.pgs.clone(), 0, &AlsConfig::default()).is_err());
}
