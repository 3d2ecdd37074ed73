use nalgebra::{DMatrix, DVector};
use rand::Rng;
use samcmc::driver::run_rng;
use samcmc::kernels::mh_step;
use samcmc::oracle::{exact_omega, jacobian, lyapunov, mean_field, noise_covariance, theta_star};
use samcmc::samc::{samc_field, trial_log_density, FiniteSamcModel};
use samcmc::FiniteChainSpec;

struct Setup {
    omega: Vec<f64>,
    pi: Vec<f64>,
    star: Vec<f64>,
}

fn setup() -> Setup {
    let chain = FiniteChainSpec::chain10();
    let omega = exact_omega(&chain);
    let pi = chain.pi().to_vec();
    let star = theta_star(&omega, &pi).unwrap();
    Setup { omega, pi, star }
}

fn random_theta(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = center.iter().map(|c| c + radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let d: f64 = v.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if d <= radius {
            return v;
        }
    }
}

fn fd_jacobian(s: &Setup, theta: &[f64], h: f64) -> DMatrix<f64> {
    let d = theta.len();
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut p = theta.to_vec();
        let mut m = theta.to_vec();
        p[j] += h;
        m[j] -= h;
        let col = (mean_field(&p, &s.omega, &s.pi) - mean_field(&m, &s.omega, &s.pi)) / (2.0 * h);
        out.set_column(j, &col);
    }
    out
}

#[test]
fn jacobian_matches_finite_differences() {
    let s = setup();
    let mut rng = run_rng(1);
    for _ in 0..20 {
        let theta = random_theta(&mut rng, &s.star, 5.0);
        let f = jacobian(&theta, &s.omega, &s.pi);
        let fd = fd_jacobian(&s, &theta, 1e-5);
        let rel = (&f - &fd).amax() / f.amax();
        assert!(rel <= 1e-6, "θ = {theta:?}: {rel}");
    }
}

#[test]
fn lyapunov_gradient_matches_finite_differences() {
    let s = setup();
    let mut rng = run_rng(2);
    for _ in 0..20 {
        let theta = random_theta(&mut rng, &s.star, 5.0);
        let l = lyapunov(&theta, &s.omega, &s.pi);
        let fd = DVector::from_fn(theta.len(), |j, _| {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[j] += 1e-5;
            m[j] -= 1e-5;
            (lyapunov(&p, &s.omega, &s.pi).value - lyapunov(&m, &s.omega, &s.pi).value) / 2e-5
        });
        let rel = (&l.gradient - &fd).amax() / l.gradient.amax();
        assert!(rel <= 1e-6, "θ = {theta:?}: {rel}");
    }
}

#[test]
fn descent_negative_away_from_root() {
    let s = setup();
    let mut rng = run_rng(3);
    for _ in 0..100 {
        let theta = random_theta(&mut rng, &s.star, 5.0);
        let l = lyapunov(&theta, &s.omega, &s.pi);
        let h = mean_field(&theta, &s.omega, &s.pi);
        assert!(l.descent < 0.0);
        assert!((l.descent - l.gradient.dot(&h)).abs() <= 1e-12 * l.descent.abs().max(1.0));
    }
    for _ in 0..20 {
        let theta = random_theta(&mut rng, &s.star, 1e-6);
        assert!(lyapunov(&theta, &s.omega, &s.pi).descent.abs() <= 1e-10);
    }
}

#[test]
fn jacobian_is_negative_definite() {
    let s = setup();
    let mut rng = run_rng(4);
    for _ in 0..20 {
        let theta = random_theta(&mut rng, &s.star, 5.0);
        let f = jacobian(&theta, &s.omega, &s.pi);
        for _ in 0..100 {
            let z = DVector::from_fn(2, |_, _| 2.0 * rng.random::<f64>() - 1.0);
            assert!(z.dot(&(&f * &z)) < 0.0);
        }
    }
}

#[test]
fn noise_covariance_matches_batch_means() {
    let chain = FiniteChainSpec::chain10();
    let s = setup();
    let q_oracle = noise_covariance(&chain, &s.star).unwrap().q_matrix;
    let model = FiniteSamcModel::new(&chain);
    let prop = chain.neighbor_proposal();
    let mut rng = run_rng(5);
    let (batches, len) = (1000usize, 10_000usize);
    let mut x = 0usize;
    let mut h = [0.0; 2];
    let mut means = Vec::with_capacity(batches);
    for _ in 0..1000 {
        x = mh_step(&x, |p| trial_log_density(&model, &s.star, p), &prop, &mut rng).unwrap().0;
    }
    for _ in 0..batches {
        let mut acc = [0.0; 2];
        for _ in 0..len {
            x = mh_step(&x, |p| trial_log_density(&model, &s.star, p), &prop, &mut rng).unwrap().0;
            samc_field(chain.labels()[x], chain.pi(), &mut h);
            acc[0] += h[0];
            acc[1] += h[1];
        }
        means.push([acc[0] / len as f64, acc[1] / len as f64]);
    }
    // H has mean zero at θ*, so the batch covariance is taken about zero.
    let mut q_bm = DMatrix::<f64>::zeros(2, 2);
    for m in &means {
        for i in 0..2 {
            for j in 0..2 {
                q_bm[(i, j)] += m[i] * m[j] * len as f64 / batches as f64;
            }
        }
    }
    let rel = (&q_bm - &q_oracle).norm() / q_oracle.norm();
    assert!(rel <= 0.10, "batch means {q_bm}, oracle {q_oracle}, rel {rel}");
}
