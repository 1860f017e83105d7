use std::f64::consts::PI;

use isfno_core::solver::{
    gamma_op, kp_project, linear_symbol, mean, EquationConfig, Family, Solver, SolverState, StepControl,
};
use isfno_core::tensor::fft::{irfft_full, rfft_full};
use isfno_core::tensor::Tensor;
use isfno_core::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field_1d(n: usize, length: f64, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_fn(&[n, 1], |i| f(i as f64 * length / n as f64))
}

fn field_2d(n1: usize, n2: usize, length: f64, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_fn(&[n1, n2, 1], |p| {
        let (i, j) = (p / n2, p % n2);
        f(i as f64 * length / n1 as f64, j as f64 * length / n2 as f64)
    })
}

fn soliton(x: f64, t: f64, s: f64, c: f64, length: f64) -> f64 {
    // periodic sum of images; neighbours contribute below 1e-16 on l = 20
    (-2..=2)
        .map(|m| {
            let arg = 0.5 * s.sqrt() * (x - s * t - c + m as f64 * length);
            0.5 * s / arg.cosh().powi(2)
        })
        .sum()
}

fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    a.zip_map(b, |x, y| x - y).norm() / b.norm()
}

#[test]
fn gamma_annihilates_constants() {
    let g = gamma_op(&Tensor::full(&[64, 1], 3.5), 2.0 * PI).unwrap();
    assert!(g.max_abs() < 1e-13);
}

#[test]
fn gamma_of_cosine_scales_by_wavenumber() {
    let f = field_1d(64, 2.0 * PI, |x| (3.0 * x).cos());
    let g = gamma_op(&f, 2.0 * PI).unwrap();
    let want = f.map(|v| 3.0 * v);
    assert!(g.max_abs_diff(&want) < 1e-12);
}

#[test]
fn gamma_squared_matches_eighth_order_laplacian() {
    let n = 256;
    let h = 2.0 * PI / n as f64;
    let f = field_1d(n, 2.0 * PI, |x| x.sin() + 0.5 * (2.0 * x).cos() - 0.2 * (3.0 * x + 1.0).sin());
    let gg = gamma_op(&gamma_op(&f, 2.0 * PI).unwrap(), 2.0 * PI).unwrap();
    let c = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    let d = f.data();
    let lap: Vec<f64> = (0..n)
        .map(|i| {
            let mut acc = c[0] * d[i];
            for (k, ck) in c.iter().enumerate().skip(1) {
                acc += ck * (d[(i + k) % n] + d[(i + n - k) % n]);
            }
            acc / (h * h)
        })
        .collect();
    for (a, b) in gg.data().iter().zip(&lap) {
        assert!((a + b).abs() < 1e-6, "{a} vs {}", -b);
    }
}

#[test]
fn gamma_in_two_dimensions_uses_vector_magnitude() {
    let f = field_2d(32, 32, 2.0 * PI, |x, y| (3.0 * x + 4.0 * y).cos());
    let g = gamma_op(&f, 2.0 * PI).unwrap();
    assert!(g.max_abs_diff(&f.map(|v| 5.0 * v)) < 1e-12);
}

#[test]
fn symbols_at_marginal_and_dispersive_modes() {
    let ks = EquationConfig::ks(10.0, &[256]);
    let ms = EquationConfig::ms(10.0, &[256]);
    assert!(linear_symbol(&ks, &[10.0]).norm() < 1e-14);
    assert!(linear_symbol(&ms, &[10.0]).norm() < 1e-14);
    assert!(linear_symbol(&ks, &[4.0]).re > 0.0);
    let kdv = EquationConfig::kdv(256);
    let s = linear_symbol(&kdv, &[2.0]);
    assert_eq!(s, Complex64::new(0.0, 8.0));
    let kp = EquationConfig::kp(32, 32);
    assert_eq!(linear_symbol(&kp, &[0.0, 3.0]), Complex64::new(0.0, 0.0));
    assert!((linear_symbol(&kp, &[1.0, 2.0]) - Complex64::new(0.0, 1.0 - 4.0)).norm() < 1e-15);
}

#[test]
fn zero_field_is_a_fixed_point() {
    for cfg in [EquationConfig::ks(10.0, &[64]), EquationConfig::kdv(64), EquationConfig::ms(10.0, &[64])] {
        let solver = Solver::new(&cfg, StepControl::default()).unwrap();
        let out = solver.advance(&SolverState::new(Tensor::zeros(&[64, 1]), 0.1), 3).unwrap();
        assert!(out.field.data().iter().all(|&v| v == 0.0));
        assert!((out.t - 0.3).abs() < 1e-15);
    }
}

#[test]
fn kdv_soliton_translates_at_its_speed() {
    let (n, l) = (256, 20.0);
    let cfg = EquationConfig::kdv(n);
    let solver = Solver::new(&cfg, StepControl::default()).unwrap();
    let init = field_1d(n, l, |x| soliton(x, 0.0, 1.0, 10.0, l));
    let out = solver.advance(&SolverState::new(init, 0.25), 4).unwrap();
    let exact = field_1d(n, l, |x| soliton(x, 1.0, 1.0, 10.0, l));
    let err = rel_err(&out.field, &exact);
    assert!(err < 1e-4, "relative error {err}");
}

fn mode_coefficient(field: &Tensor, grid: &[usize], flat: usize) -> Complex64 {
    rfft_full(field.data(), grid)[flat]
}

#[test]
fn ks_linear_growth_of_a_small_mode() {
    let cfg = EquationConfig::ks(10.0, &[64]);
    let solver = Solver::new(&cfg, StepControl::default()).unwrap();
    let init = field_1d(64, 2.0 * PI, |x| 1e-6 * (4.0 * x).cos());
    let dt = 0.15;
    let out = solver.advance(&SolverState::new(init.clone(), dt), 1).unwrap();
    let ratio = mode_coefficient(&out.field, &[64], 4).norm() / mode_coefficient(&init, &[64], 4).norm();
    let want = (dt * (16.0 / 100.0 - 256.0 / 10000.0)).exp();
    assert!((ratio / want - 1.0).abs() < 1e-4, "{ratio} vs {want}");
}

#[test]
fn every_family_disperses_at_its_symbol() {
    let cases: Vec<(EquationConfig, Vec<usize>, Vec<i64>)> = vec![
        (EquationConfig::ms(10.0, &[64]), vec![64], vec![3]),
        (EquationConfig::ks(10.0, &[64]), vec![64], vec![7]),
        (EquationConfig::ms(10.0, &[32, 32]), vec![32, 32], vec![2, 3]),
        (EquationConfig::kdv(64), vec![64], vec![2]),
        (EquationConfig::kp(32, 32), vec![32, 32], vec![2, 3]),
    ];
    for (cfg, grid, m) in cases {
        let l = cfg.domain_length;
        let k: Vec<f64> = m.iter().map(|&mi| 2.0 * PI * mi as f64 / l).collect();
        let init = match grid.len() {
            1 => field_1d(grid[0], l, |x| 1e-8 * (k[0] * x).cos()),
            _ => field_2d(grid[0], grid[1], l, |x, y| 1e-8 * (k[0] * x + k[1] * y).cos()),
        };
        let flat = match grid.len() {
            1 => m[0] as usize,
            _ => m[0] as usize * grid[1] + m[1] as usize,
        };
        let dt = 0.05;
        let solver = Solver::new(&cfg, StepControl::default()).unwrap();
        let out = solver.advance(&SolverState::new(init.clone(), dt), 1).unwrap();
        let got = mode_coefficient(&out.field, &grid, flat) / mode_coefficient(&init, &grid, flat);
        let want = (linear_symbol(&cfg, &k) * dt).exp();
        assert!((got - want).norm() / want.norm() < 1e-3, "{:?}: {got} vs {want}", cfg.family);
    }
}

fn two_soliton(n: usize) -> Tensor {
    field_1d(n, 20.0, |x| soliton(x, 0.0, 1.5, 6.0, 20.0) + soliton(x, 0.0, 0.6, 13.0, 20.0))
}

#[test]
fn kdv_conserves_mass_and_momentum() {
    let n = 256;
    let cfg = EquationConfig::kdv(n);
    let solver = Solver::new(&cfg, StepControl::default()).unwrap();
    let init = two_soliton(n);
    let dx = 20.0 / n as f64;
    let mass = |f: &Tensor| f.data().iter().sum::<f64>() * dx;
    let momentum = |f: &Tensor| f.data().iter().map(|v| v * v).sum::<f64>() * dx;
    let t_end = 2.0;
    let out = solver.advance(&SolverState::new(init.clone(), 0.5), 4).unwrap();
    assert!((mass(&out.field) - mass(&init)).abs() / t_end < 1e-10);
    assert!((momentum(&out.field) - momentum(&init)).abs() / t_end < 1e-6);
}

#[test]
fn temporal_order_is_between_four_and_five() {
    let n = 32;
    let cfg = EquationConfig::kdv(n);
    let k = 2.0 * PI / 20.0;
    let init = field_1d(n, 20.0, |x| (k * x).cos() + 0.5 * (2.0 * k * x + 1.0).sin());
    let dt = 0.1;
    let run = |m: usize| {
        Solver::new(&cfg, StepControl::fixed(m)).unwrap().advance(&SolverState::new(init.clone(), dt), 1).unwrap().field
    };
    let reference = run(1024);
    let errs: Vec<f64> = [8, 16, 32].iter().map(|&m| rel_err(&run(m), &reference)).collect();
    for w in errs.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!((3.8..=5.2).contains(&slope), "errors {errs:?}, slope {slope}");
    }
}

fn kp_residual(field: &Tensor, n1: usize, n2: usize, l: f64) -> f64 {
    // ∫ ∂²_{x2} φ dx1 for each x2: trapezoid (periodic) in x1, spectral in x2
    let d = field.data();
    let dx1 = l / n1 as f64;
    let col: Vec<f64> = (0..n2).map(|j| (0..n1).map(|i| d[i * n2 + j]).sum::<f64>() * dx1).collect();
    let mut spec = rfft_full(&col, &[n2]);
    for (j, v) in spec.iter_mut().enumerate() {
        let m = if j <= n2 / 2 { j as f64 } else { j as f64 - n2 as f64 };
        *v *= -(2.0 * PI * m / l).powi(2);
    }
    irfft_full(&spec, &[n2]).iter().fold(0.0, |a, v| a.max(v.abs()))
}

#[test]
fn kp_projection_cases() {
    let (n1, n2, l) = (32, 32, 20.0);
    let pure = field_2d(n1, n2, l, |_, y| (2.0 * PI * y / l).cos());
    assert!(kp_project(&pure).unwrap().max_abs() < 1e-14);

    let ok = field_2d(n1, n2, l, |x, y| (2.0 * PI * (x + 2.0 * y) / l).sin() + 0.3);
    assert!(kp_project(&ok).unwrap().max_abs_diff(&ok) < 1e-14);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rand = Tensor::from_fn(&[n1, n2, 1], |_| rng.random_range(-1.0..1.0));
    assert!(kp_residual(&rand, n1, n2, l) > 1e-3);
    let projected = kp_project(&rand).unwrap();
    assert!(kp_residual(&projected, n1, n2, l) < 1e-12);

    assert!(matches!(kp_project(&Tensor::zeros(&[16, 1])), Err(Error::Shape(_))));
}

#[test]
fn kp_constraint_survives_many_steps() {
    let (n1, n2, l) = (32, 32, 20.0);
    let cfg = EquationConfig::kp(n1, n2);
    let init = kp_project(&field_2d(n1, n2, l, |x, y| {
        let k = 2.0 * PI / l;
        0.2 * (k * x + k * y).cos() + 0.1 * (2.0 * k * x - k * y).sin() + 0.05 * (k * y).cos()
    }))
    .unwrap();
    let solver = Solver::new(&cfg, StepControl::default()).unwrap();
    let mut state = SolverState::new(init, 0.01);
    for _ in 0..100 {
        state = solver.advance(&state, 1).unwrap();
        assert!(kp_residual(&state.field, n1, n2, l) < 1e-8);
    }
    assert!(state.field.max_abs() > 1e-2);
}

#[test]
fn ks_mean_is_pinned() {
    let cfg = EquationConfig::ks(4.0, &[64]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let init = Tensor::from_fn(&[64, 1], |_| rng.random_range(0.0..0.03));
    let m0 = mean(&init);
    let out = Solver::new(&cfg, StepControl::default()).unwrap().advance(&SolverState::new(init, 0.5), 10).unwrap();
    assert!((mean(&out.field) - m0).abs() < 1e-12);
}

#[test]
fn runs_are_bit_identical() {
    let cfg = EquationConfig::ms(10.0, &[64]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let init = Tensor::from_fn(&[64, 1], |_| rng.random_range(0.0..0.03));
    let solver = Solver::new(&cfg, StepControl::default()).unwrap();
    let a = solver.trajectory(&SolverState::new(init.clone(), 0.2), 6).unwrap();
    let b = Solver::new(&cfg, StepControl::default()).unwrap().trajectory(&SolverState::new(init, 0.2), 6).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.data(), y.data());
    }
}

#[test]
fn under_resolved_ms_is_refused() {
    let cfg = EquationConfig::ms(50.0, &[256]);
    assert!(matches!(Solver::new(&cfg, StepControl::default()), Err(Error::Stiffness(_))));
    assert!(Solver::new(&EquationConfig::ms(40.0, &[256]), StepControl::default()).is_ok());
}

#[test]
fn substep_cap_reports_stiffness() {
    let cfg = EquationConfig::kdv(128);
    let control = StepControl { max_substeps: 2, ..StepControl::default() };
    let solver = Solver::new(&cfg, control).unwrap();
    let err = solver.advance(&SolverState::new(two_soliton(128), 1.0), 1).unwrap_err();
    assert!(matches!(err, Error::Stiffness(_)));
}

#[test]
fn non_finite_input_is_divergence() {
    let cfg = EquationConfig::kdv(64);
    let mut f = Tensor::zeros(&[64, 1]);
    f.data_mut()[5] = f64::NAN;
    let err = Solver::new(&cfg, StepControl::default()).unwrap().advance(&SolverState::new(f, 0.1), 1).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }));
}

#[test]
fn family_names_parse() {
    for f in [Family::Ms, Family::Ks, Family::Kdv, Family::Kp] {
        assert_eq!(f.name().parse::<Family>().unwrap(), f);
    }
    assert!("burgers".parse::<Family>().is_err());
}
