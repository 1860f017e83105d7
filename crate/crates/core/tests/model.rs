use std::f64::consts::PI;
use std::rc::Rc;

use isfno_core::model::params::Init;
use isfno_core::model::{
    exp_fourier_layer, exp_fourier_layer_kdv, fourier_layer, layout, lift_zero_stack, project_truncate,
    pseudo_inverse_project, revnet_forward, revnet_inverse, Bound, Model, ModelSpec, ParamSet, Variant,
};
use isfno_core::tensor::gradcheck;
use isfno_core::tensor::kernels::gelu;
use isfno_core::tensor::{SpectralGrid, Tape, Tensor, Var};
use isfno_core::Error;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(shape: &[usize], scale: f64, r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.random_range(-scale..scale))
}

/// Stored wavevectors in weight order.
fn stored_modes(cutoffs: &[usize]) -> Vec<Vec<i64>> {
    match cutoffs {
        [k] => (0..*k as i64).map(|m| vec![m]).collect(),
        [k1, k2] => {
            let k1 = *k1 as i64;
            let mut out = Vec::new();
            for a in -(k1 - 1)..k1 {
                for b in 0..*k2 as i64 {
                    out.push(vec![a, b]);
                }
            }
            out
        }
        _ => unreachable!(),
    }
}

/// Points of a grid as index vectors, row-major.
fn points(extents: &[usize]) -> Vec<Vec<usize>> {
    match extents {
        [n] => (0..*n).map(|i| vec![i]).collect(),
        [n1, n2] => (0..n1 * n2).map(|p| vec![p / n2, p % n2]).collect(),
        _ => unreachable!(),
    }
}

fn phase(kappa: &[i64], x: &[usize], extents: &[usize]) -> f64 {
    kappa.iter().zip(x).zip(extents).map(|((&k, &xi), &n)| 2.0 * PI * k as f64 * xi as f64 / n as f64).sum()
}

/// Naive DFT of one sample `[x.., c]`: `[mode][channel]`.
fn naive_spectrum(z: &[f64], extents: &[usize], d: usize, modes: &[Vec<i64>]) -> Vec<Vec<Complex64>> {
    let pts = points(extents);
    modes
        .iter()
        .map(|k| {
            (0..d)
                .map(|c| {
                    pts.iter()
                        .enumerate()
                        .map(|(p, x)| z[p * d + c] * Complex64::from_polar(1.0, -phase(k, x, extents)))
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Naive synthesis `(1/N) Re Σ w_κ Y_κ e^{iκx}`: `[point][channel]`.
fn naive_synthesis(y: &[Vec<Complex64>], extents: &[usize], modes: &[Vec<i64>]) -> Vec<f64> {
    let pts = points(extents);
    let d = y[0].len();
    let n = pts.len() as f64;
    let mut out = vec![0.0; pts.len() * d];
    for (p, x) in pts.iter().enumerate() {
        for o in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, k) in modes.iter().enumerate() {
                let w = if *k.last().unwrap() == 0 { 1.0 } else { 2.0 };
                acc += w * y[m][o] * Complex64::from_polar(1.0, phase(k, x, extents));
            }
            out[p * d + o] = acc.re / n;
        }
    }
    out
}

fn block(r: &Tensor, m: usize, d: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(d, d, |o, c| {
        let i = ((m * d + o) * d + c) * 2;
        Complex64::new(r.data()[i], r.data()[i + 1])
    })
}

fn apply_blocks(mats: &[DMatrix<Complex64>], x: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    mats.iter()
        .zip(x)
        .map(|(a, v)| {
            let v = nalgebra::DVector::from_vec(v.clone());
            (a * v).iter().copied().collect()
        })
        .collect()
}

/// Straight-line Fourier layer on `[B, x.., d]`.
fn oracle_fourier(z: &Tensor, w: &Tensor, b: &Tensor, r: &Tensor, cutoffs: &[usize], alpha: bool) -> Vec<f64> {
    let shape = z.shape();
    let extents = &shape[1..shape.len() - 1];
    let d = shape[shape.len() - 1];
    let npts: usize = extents.iter().product();
    let modes = stored_modes(cutoffs);
    let mats: Vec<_> = (0..modes.len()).map(|m| block(r, m, d)).collect();
    let mut out = Vec::new();
    for s in 0..shape[0] {
        let zs = &z.data()[s * npts * d..(s + 1) * npts * d];
        let spec = apply_blocks(&mats, &naive_spectrum(zs, extents, d, &modes));
        let y = naive_synthesis(&spec, extents, &modes);
        for p in 0..npts {
            for o in 0..d {
                let mut pre = b.data()[o] + y[p * d + o];
                for c in 0..d {
                    pre += zs[p * d + c] * w.data()[c * d + o];
                }
                out.push(if alpha { zs[p * d + o] } else { 0.0 } + gelu(pre));
            }
        }
    }
    out
}

fn weight_shape(cutoffs: &[usize], d: usize) -> Vec<usize> {
    let mut s = match cutoffs {
        [k] => vec![*k],
        [k1, k2] => vec![2 * k1 - 1, *k2],
        _ => unreachable!(),
    };
    s.extend([d, d, 2]);
    s
}

fn grid(extents: &[usize], cutoffs: &[usize]) -> Rc<SpectralGrid> {
    Rc::new(SpectralGrid::new(extents, cutoffs).unwrap())
}

#[test]
fn zero_fourier_layer_is_identity_or_zero() {
    let mut r = rng(1);
    let z = random(&[2, 8, 3], 1.0, &mut r);
    let tape = Tape::new();
    let zv = tape.constant(z.clone());
    let w = tape.constant(Tensor::zeros(&[3, 3]));
    let b = tape.constant(Tensor::zeros(&[3]));
    let rw = tape.constant(Tensor::zeros(&weight_shape(&[3], 3)));
    let g = grid(&[8], &[3]);
    let same = fourier_layer(&zv, &w, &b, &rw, &g, true).unwrap().to_tensor();
    assert_eq!(same, z);
    let zero = fourier_layer(&zv, &w, &b, &rw, &g, false).unwrap().to_tensor();
    assert_eq!(zero.max_abs(), 0.0);
}

#[test]
fn fourier_layer_matches_straight_line_evaluation() {
    for (extents, cutoffs) in [(vec![8usize], vec![3usize]), (vec![8, 6], vec![3, 2])] {
        let mut r = rng(2);
        let d = 2;
        let mut zshape = vec![2];
        zshape.extend(&extents);
        zshape.push(d);
        let z = random(&zshape, 1.0, &mut r);
        let w = random(&[d, d], 0.7, &mut r);
        let b = random(&[d], 0.7, &mut r);
        let rw = random(&weight_shape(&cutoffs, d), 0.5, &mut r);
        for alpha in [true, false] {
            let tape = Tape::new();
            let out = fourier_layer(
                &tape.constant(z.clone()),
                &tape.constant(w.clone()),
                &tape.constant(b.clone()),
                &tape.constant(rw.clone()),
                &grid(&extents, &cutoffs),
                alpha,
            )
            .unwrap()
            .to_tensor();
            let want = oracle_fourier(&z, &w, &b, &rw, &cutoffs, alpha);
            let err = out.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{extents:?} alpha={alpha}: {err}");
        }
    }
}

#[test]
fn zero_exponential_layer_is_identity() {
    let mut r = rng(3);
    let z = random(&[1, 16, 2], 1.0, &mut r);
    let tape = Tape::new();
    let zero = tape.constant(Tensor::zeros(&weight_shape(&[5], 2)));
    let out = exp_fourier_layer(&tape.constant(z.clone()), &zero, Some(&zero), &grid(&[16], &[5])).unwrap();
    assert_eq!(out.to_tensor(), z);
}

/// Random weights whose κ = 0 block is real, so that the truncated
/// half-space synthesis reproduces every stored mode.
fn semigroup_weights(k: usize, d: usize, r: &mut ChaCha8Rng) -> Tensor {
    let mut w = random(&weight_shape(&[k], d), 0.4, r);
    for i in 0..d * d {
        w.data_mut()[2 * i + 1] = 0.0;
    }
    w
}

#[test]
fn linear_exponential_layer_is_a_semigroup() {
    let (n, k, d) = (16, 5, 3);
    let mut r = rng(4);
    let rl = semigroup_weights(k, d, &mut r);
    let z0 = random(&[1, n, d], 1.0, &mut r);
    let modes = stored_modes(&[k]);
    let spec0 = naive_spectrum(z0.data(), &[n], d, &modes);
    let g = grid(&[n], &[k]);
    let tape = Tape::new();
    let rv = tape.constant(rl.clone());
    let mut z = tape.constant(z0.clone());
    let mut worst: f64 = 0.0;
    for j in 1..=5 {
        z = exp_fourier_layer(&z, &rv, None, &g).unwrap();
        let got = naive_spectrum(z.value().data(), &[n], d, &modes);
        let mats: Vec<_> = (0..k).map(|m| (block(&rl, m, d) * Complex64::new(j as f64, 0.0)).exp()).collect();
        let want = apply_blocks(&mats, &spec0);
        for m in 0..k {
            for c in 0..d {
                worst = worst.max((got[m][c] - want[m][c]).norm() / n as f64);
            }
        }
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn linear_exponential_layer_is_mode_local() {
    let (n, k, d) = (16, 5, 2);
    let mut r = rng(5);
    let rl = random(&weight_shape(&[k], d), 0.4, &mut r);
    let z = Tensor::from_fn(&[1, n, d], |i| {
        let (x, c) = (i / d, i % d);
        (2.0 * PI * 3.0 * x as f64 / n as f64).cos() * (c + 1) as f64
    });
    let tape = Tape::new();
    let out = exp_fourier_layer(&tape.constant(z), &tape.constant(rl), None, &grid(&[n], &[k])).unwrap();
    let all: Vec<Vec<i64>> = (0..=n as i64 / 2).map(|m| vec![m]).collect();
    let spec = naive_spectrum(out.value().data(), &[n], d, &all);
    for (m, row) in spec.iter().enumerate() {
        for v in row {
            if m != 3 {
                assert!(v.norm() < 1e-12, "mode {m}: {v}");
            }
        }
    }
    assert!(spec[3][0].norm() > 1.0);
}

#[test]
fn quadratic_exponential_layer_matches_straight_line_evaluation() {
    let (n, k, d) = (8, 3, 2);
    let mut r = rng(6);
    let rl = random(&weight_shape(&[k], d), 0.5, &mut r);
    let rq = random(&weight_shape(&[k], d), 0.5, &mut r);
    let z = random(&[2, n, d], 1.0, &mut r);
    let tape = Tape::new();
    let out = exp_fourier_layer(
        &tape.constant(z.clone()),
        &tape.constant(rl.clone()),
        Some(&tape.constant(rq.clone())),
        &grid(&[n], &[k]),
    )
    .unwrap()
    .to_tensor();
    let modes = stored_modes(&[k]);
    let transfer = |w: &Tensor| -> Vec<DMatrix<Complex64>> {
        (0..k).map(|m| block(w, m, d).exp() - DMatrix::identity(d, d)).collect()
    };
    let (tl, tq) = (transfer(&rl), transfer(&rq));
    let mut want = Vec::new();
    for s in 0..2 {
        let zs = &z.data()[s * n * d..(s + 1) * n * d];
        let x = naive_spectrum(zs, &[n], d, &modes);
        let u = naive_synthesis(&apply_blocks(&tl, &x), &[n], &modes);
        let v = naive_synthesis(&apply_blocks(&tq, &x), &[n], &modes);
        for i in 0..n * d {
            want.push(zs[i] + u[i] + v[i] * v[i]);
        }
    }
    let err = out.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
}

#[test]
fn kdv_layer_weights_follow_the_power_law() {
    let (k, d) = (5, 2);
    let mut r = rng(7);
    let rk = random(&[d, d, 2], 1.0, &mut r);
    let tape = Tape::new();
    let w = isfno_core::model::layers::kdv_weights(
        &tape.constant(rk.clone()),
        &tape.constant(Tensor::full(&[1], 3.0)),
        &SpectralGrid::new(&[16], &[k]).unwrap(),
    )
    .unwrap()
    .to_tensor();
    let blk = d * d * 2;
    assert!(w.data()[..blk].iter().all(|&v| v == 0.0));
    assert_eq!(&w.data()[4 * blk..5 * blk], rk.data());
    for i in 0..blk {
        assert!((w.data()[2 * blk + i] - rk.data()[i] / 8.0).abs() < 1e-15);
    }
}

#[test]
fn kdv_layer_leaves_the_mean_and_refuses_2d() {
    let mut r = rng(8);
    let z = random(&[1, 16, 2], 1.0, &mut r);
    let tape = Tape::new();
    let rk = tape.constant(random(&[2, 2, 2], 1.0, &mut r));
    let p = tape.constant(Tensor::full(&[1], 3.0));
    let out = exp_fourier_layer_kdv(&tape.constant(z.clone()), &rk, &p, &grid(&[16], &[5])).unwrap();
    for c in 0..2 {
        let m0: f64 = (0..16).map(|x| z.data()[x * 2 + c]).sum();
        let m1: f64 = (0..16).map(|x| out.value().data()[x * 2 + c]).sum();
        assert!((m0 - m1).abs() < 1e-12);
    }
    let z2 = tape.constant(Tensor::zeros(&[1, 8, 8, 2]));
    let err = exp_fourier_layer_kdv(&z2, &rk, &p, &grid(&[8, 8], &[3, 3])).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)));
}

fn stub_f<'t>(a: &Var<'t>) -> isfno_core::Result<Var<'t>> {
    Ok(*a)
}

fn stub_g<'t>(b: &Var<'t>) -> isfno_core::Result<Var<'t>> {
    Ok(b.scale(2.0))
}

#[test]
fn revnet_stub_algebra() {
    let tape = Tape::new();
    let z = tape.constant(Tensor::new(vec![1, 1, 2], vec![1.5, -0.25]).unwrap());
    let f = stub_f;
    let g = stub_g;
    let out = revnet_forward(&z, 1, f, g).unwrap();
    assert_eq!(out.value().data(), &[3.0 * 1.5 + 2.0 * -0.25, 1.5 - 0.25]);
    let back = revnet_inverse(&out, 1, f, g).unwrap();
    assert_eq!(back.value().data(), &[1.5, -0.25]);
    assert!(matches!(revnet_forward(&z, 2, f, g), Err(Error::Shape(_))));
}

fn randomize(model: &mut Model, scale: f64, r: &mut ChaCha8Rng) {
    for t in model.params.tensors_mut() {
        for v in t.data_mut() {
            *v = r.random_range(-scale..scale);
        }
    }
}

#[test]
fn revnet_inverse_recovers_the_input() {
    let mut r = rng(9);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let dv = 1 + trial % 2;
        let spec = ModelSpec::new(Variant::IsfnoO, dv, 3, &[4], 2).with_hidden(16);
        let mut model = Model::new(spec, &mut r).unwrap();
        randomize(&mut model, 0.8, &mut r);
        let z = random(&[2, 16, dv + 3], 2.0, &mut r);
        let tape = Tape::new();
        let p = model.params.bind(&tape, false);
        let g = model.grid_for(&[2, 16, dv]).unwrap();
        let fwd =
            revnet_forward(&tape.constant(z.clone()), dv, |a| model.submap_f(&p, a, &g), |b| model.submap_g(&p, b, &g))
                .unwrap();
        assert!(fwd.value().max_abs_diff(&z) > 1e-3);
        let back = revnet_inverse(&fwd, dv, |a| model.submap_f(&p, a, &g), |b| model.submap_g(&p, b, &g)).unwrap();
        worst = worst.max(back.value().max_abs_diff(&z));
    }
    assert!(worst < 1e-11, "{worst}");
}

#[test]
fn zero_submaps_give_identity_coupling() {
    let mut r = rng(10);
    let spec = ModelSpec::new(Variant::IsfnoP, 1, 3, &[4], 2).with_hidden(8);
    let model = Model::new(spec, &mut r).unwrap();
    let z = random(&[1, 16, 4], 1.0, &mut r);
    let tape = Tape::new();
    let p = model.params.bind(&tape, false);
    let g = model.grid_for(&[1, 16, 1]).unwrap();
    let out =
        revnet_forward(&tape.constant(z.clone()), 1, |a| model.submap_f(&p, a, &g), |b| model.submap_g(&p, b, &g))
            .unwrap();
    assert_eq!(out.to_tensor(), z);
    let back = revnet_inverse(&out, 1, |a| model.submap_f(&p, a, &g), |b| model.submap_g(&p, b, &g)).unwrap();
    assert_eq!(back.to_tensor(), z);
}

#[test]
fn lift_and_truncate() {
    let tape = Tape::new();
    let phi = Tensor::new(vec![1, 2, 1], vec![0.5, -2.0]).unwrap();
    let z = lift_zero_stack(&tape.constant(phi.clone()), 4).unwrap();
    assert_eq!(z.value().data(), &[0.5, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0]);
    assert_eq!(project_truncate(&z, 1).unwrap().to_tensor(), phi);
    let noisy = Tensor::new(vec![1, 2, 4], vec![0.5, 9.0, 8.0, 7.0, -2.0, 6.0, 5.0, 4.0]).unwrap();
    assert_eq!(project_truncate(&tape.constant(noisy), 1).unwrap().to_tensor(), phi);
}

#[test]
fn pseudo_inverse_projection() {
    let w = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
    let phi =
        pseudo_inverse_project(&Tensor::new(vec![1, 2], vec![3.0, 5.0]).unwrap(), &w, &Tensor::zeros(&[2])).unwrap();
    assert!((phi.item() - 4.0).abs() < 1e-14);

    // stacked identity reduces to truncation
    let eye = Tensor::new(vec![2, 4], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    let z = Tensor::from_fn(&[3, 4], |i| i as f64 * 0.3 - 1.0);
    let got = pseudo_inverse_project(&z, &eye, &Tensor::zeros(&[4])).unwrap();
    assert_eq!(got, z.slice_channels(0, 2));

    let mut r = rng(11);
    let w = random(&[2, 5], 1.0, &mut r);
    let b = random(&[5], 1.0, &mut r);
    let phi = random(&[7, 2], 1.0, &mut r);
    let tape = Tape::new();
    let lifted = tape.constant(phi.clone()).affine(&tape.constant(w.clone()), Some(&tape.constant(b.clone()))).unwrap();
    let back = pseudo_inverse_project(&lifted.to_tensor(), &w, &b).unwrap();
    assert!(back.max_abs_diff(&phi) < 1e-12);

    let rank1 = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0]).unwrap();
    assert!(matches!(
        pseudo_inverse_project(&Tensor::zeros(&[1, 3]), &rank1, &Tensor::zeros(&[3])),
        Err(Error::Singular(_))
    ));
}

fn specs_for_counting() -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for v in Variant::ALL {
        out.push(ModelSpec::new(v, 1, 4, &[6], 3));
        out.push(ModelSpec::new(v, 2, 2, &[3], 3).with_hidden(5));
        if !matches!(v, Variant::IsfnoPk | Variant::IsfnoPk3) {
            out.push(ModelSpec::new(v, 1, 3, &[3, 2], 2).with_hidden(7));
        }
    }
    out
}

#[test]
fn parameter_count_matches_closed_form() {
    for spec in specs_for_counting() {
        let model = Model::new(spec.clone(), &mut rng(0)).unwrap();
        assert_eq!(model.parameter_count(), spec.parameter_count(), "{spec:?}");
    }
    // d_v=1, d_z=2, K=2, hidden 4: lift 4, six Fourier layers of 22, perceptron 17
    let fno = ModelSpec::new(Variant::Fno, 1, 2, &[2], 1).with_hidden(4);
    assert_eq!(fno.parameter_count(), 4 + 6 * 22 + 17);
    // d_v=1, d_z*=1 (d_z=2), K=2, hidden 4: f = g = 2·6 + 13, A' = 2·2·4
    let isfno = ModelSpec::new(Variant::IsfnoP, 1, 1, &[2], 1).with_hidden(4);
    assert_eq!(isfno.parameter_count(), 2 * 25 + 16);
    let pk = ModelSpec::new(Variant::IsfnoPk, 1, 1, &[2], 1).with_hidden(4);
    assert_eq!(pk.parameter_count(), 2 * 25 + 8 + 1);
}

#[test]
fn initialization_rules() {
    let spec = ModelSpec::new(Variant::IsfnoPk, 1, 4, &[6], 3);
    let model = Model::new(spec.clone(), &mut rng(1)).unwrap();
    for info in layout(&spec) {
        let t = model.params.get(&info.name).unwrap();
        match info.init {
            Init::Affine { fan_in } => {
                assert!(t.max_abs() > 0.0 && t.max_abs() <= 1.0 / (fan_in as f64).sqrt(), "{}", info.name)
            }
            Init::Spectral { width } => assert!(t.max_abs() > 0.0 && t.max_abs() <= 1.0 / width as f64),
            Init::Zero => assert_eq!(t.max_abs(), 0.0, "{}", info.name),
            Init::Constant(v) => assert!(t.data().iter().all(|&x| x == v)),
        }
    }
    let zero: Vec<String> = layout(&spec).into_iter().filter(|i| i.init == Init::Zero).map(|i| i.name).collect();
    assert_eq!(zero, ["f.mlp.l2.w", "f.mlp.l2.b", "g.mlp.l2.w", "g.mlp.l2.b", "a.r_kdv"]);
    assert_eq!(model.params.get("a.p").unwrap().data(), &[3.0]);
}

#[test]
fn zero_initialized_isfno_reproduces_the_input() {
    let mut r = rng(12);
    for v in [Variant::IsfnoS, Variant::IsfnoO, Variant::IsfnoP, Variant::IsfnoPk, Variant::IsfnoPk3] {
        let spec = ModelSpec::new(v, 1, 5, &[6], 4).with_hidden(16);
        let mut model = Model::new(spec, &mut r).unwrap();
        if v == Variant::IsfnoS {
            for name in ["a.0.w", "a.0.b", "a.0.r", "a.1.w", "a.1.b", "a.1.r"] {
                let t = model.params.get_mut(name).unwrap();
                *t = Tensor::zeros(t.shape());
            }
        }
        let phi = random(&[3, 32, 1], 1.0, &mut r);
        let out = model.predict(&phi).unwrap();
        assert_eq!(out.shape(), &[3, 4, 32, 1]);
        for b in 0..3 {
            for j in 0..4 {
                let step = &out.data()[(b * 4 + j) * 32..(b * 4 + j + 1) * 32];
                let want = &phi.data()[b * 32..(b + 1) * 32];
                assert!(step.iter().zip(want).all(|(a, b)| a.to_bits() == b.to_bits()), "{v} step {j}");
            }
        }
    }
}

#[test]
fn zero_kfno_outputs_the_bias_image() {
    for v in [Variant::KfnoS, Variant::KfnoO, Variant::KfnoP, Variant::Fno] {
        let spec = ModelSpec::new(v, 1, 3, &[4], 3).with_hidden(6);
        let mut model = Model::new(spec, &mut rng(13)).unwrap();
        for t in model.params.tensors_mut() {
            *t = Tensor::zeros(t.shape());
        }
        model.params.get_mut("p.l2.b").unwrap().data_mut()[0] = 0.7;
        let out = model.predict(&random(&[2, 16, 1], 1.0, &mut rng(14))).unwrap();
        assert_eq!(out.shape(), &[2, 3, 16, 1]);
        assert!(out.data().iter().all(|&x| x == 0.7));
    }
}

#[test]
fn first_component_is_the_single_step() {
    let mut r = rng(15);
    for v in Variant::ALL {
        let spec = ModelSpec::new(v, 1, 3, &[4], 3).with_hidden(8);
        let mut model = Model::new(spec, &mut r).unwrap();
        randomize(&mut model, 0.3, &mut r);
        let phi = random(&[2, 16, 1], 1.0, &mut r);
        let multi = model.predict(&phi).unwrap();
        let one = model.predict_step(&phi).unwrap();
        assert!(multi.data().iter().all(|x| x.is_finite()));
        for b in 0..2 {
            let first = &multi.data()[b * 48..b * 48 + 16];
            assert_eq!(first, &one.data()[b * 16..(b + 1) * 16], "{v}");
        }
    }
}

#[test]
fn fno_rollout_composes_single_steps() {
    let mut r = rng(16);
    let model = Model::new(ModelSpec::new(Variant::Fno, 1, 3, &[4], 3).with_hidden(8), &mut r).unwrap();
    let phi = random(&[1, 16, 1], 1.0, &mut r);
    let multi = model.predict(&phi).unwrap();
    let mut cur = phi;
    for j in 0..3 {
        cur = model.predict_step(&cur).unwrap();
        assert_eq!(&multi.data()[j * 16..(j + 1) * 16], cur.data());
    }
}

#[test]
fn two_dimensional_models_run() {
    let mut r = rng(17);
    for v in [Variant::Fno, Variant::KfnoO, Variant::IsfnoO, Variant::IsfnoS] {
        let model = Model::new(ModelSpec::new(v, 1, 3, &[3, 3], 2).with_hidden(8), &mut r).unwrap();
        let out = model.predict(&random(&[2, 8, 8, 1], 1.0, &mut r)).unwrap();
        assert_eq!(out.shape(), &[2, 2, 8, 8, 1]);
        assert!(out.is_finite());
    }
    let bad = ModelSpec::new(Variant::IsfnoPk3, 1, 3, &[3, 3], 2);
    assert!(matches!(Model::new(bad, &mut r), Err(Error::Unsupported(_))));
}

#[test]
fn non_finite_input_names_the_stage() {
    let mut r = rng(18);
    let mut phi = Tensor::zeros(&[1, 16, 1]);
    phi.data_mut()[3] = f64::NAN;
    let kfno = Model::new(ModelSpec::new(Variant::KfnoO, 1, 3, &[4], 2), &mut r).unwrap();
    match kfno.predict(&phi) {
        Err(Error::ForwardDivergence { stage }) => assert_eq!(stage, "lift"),
        other => panic!("{other:?}"),
    }
    let isfno = Model::new(ModelSpec::new(Variant::IsfnoO, 1, 3, &[4], 2), &mut r).unwrap();
    assert!(matches!(isfno.predict(&phi), Err(Error::ForwardDivergence { .. })));
    assert!(matches!(isfno.predict(&Tensor::zeros(&[1, 16, 2])), Err(Error::Shape(_))));
    assert!(matches!(isfno.predict(&Tensor::zeros(&[1, 6, 1])), Err(Error::CutoffTooLarge { .. })));
}

#[test]
fn gradients_of_every_variant_match_finite_differences() {
    let mut r = rng(19);
    for v in Variant::ALL {
        let width = if v.is_isfno() { 1 } else { 2 };
        let spec = ModelSpec::new(v, 1, width, &[2], 2).with_hidden(4);
        let mut model = Model::new(spec.clone(), &mut r).unwrap();
        assert!(model.parameter_count() <= 200, "{v}: {}", model.parameter_count());
        randomize(&mut model, 0.5, &mut r);
        if let Some(p) = model.params.get_mut("a.p") {
            p.data_mut()[0] = 2.5;
        }
        let phi = random(&[2, 8, 1], 1.0, &mut r);
        let target = random(&[2, 2, 8, 1], 1.0, &mut r);
        let names = model.params.names().to_vec();
        let check = gradcheck::check(model.params.tensors(), 1e-6, |tape, vars| {
            let bound = Bound::from_vars(names.clone(), vars.to_vec())?;
            model.forward_multi(&bound, &tape.constant(phi.clone()))?.relative_l2(&target)
        })
        .unwrap();
        assert!(check.relative_error < 1e-5, "{v}: {}", check.relative_error);
        assert!(check.numeric.iter().any(|g| g.abs() > 1e-6));
    }
}

#[test]
fn checkpoint_round_trip() {
    let mut r = rng(20);
    let model = Model::new(ModelSpec::new(Variant::IsfnoPk, 1, 3, &[5], 2).with_hidden(8), &mut r).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.isfm");
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back, model);
    let bits =
        |m: &Model| m.params.tensors().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&model));

    let mut bytes = Vec::new();
    model.write_to(&mut bytes).unwrap();
    let mut bad = bytes.clone();
    bad[1] = b'X';
    assert!(matches!(Model::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
    assert!(matches!(Model::read_from(&mut &bytes[..bytes.len() - 5]), Err(Error::Format(_))));

    // a spec that disagrees with the stored tensors is rejected
    let mut other = model.clone();
    other.spec.width = 4;
    let mut bytes = Vec::new();
    other.write_to(&mut bytes).unwrap();
    assert!(matches!(Model::read_from(&mut bytes.as_slice()), Err(Error::Format(_))));
}

#[test]
fn variant_names_parse() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    let err = "isfno_x".parse::<Variant>().unwrap_err().to_string();
    for v in Variant::ALL {
        assert!(err.contains(v.name()));
    }
    assert_eq!(Variant::ALL.iter().filter(|v| v.is_isfno()).count(), 5);
}

#[test]
fn random_init_outputs_are_finite() {
    let mut r = rng(21);
    let mut params = ParamSet::default();
    assert!(params.is_empty());
    params.push("x".into(), Tensor::zeros(&[1]));
    assert_eq!(params.scalar_count(), 1);
    for v in Variant::ALL {
        let model = Model::new(ModelSpec::new(v, 1, 8, &[16], 5), &mut r).unwrap();
        let out = model.predict(&random(&[2, 64, 1], 1.0, &mut r)).unwrap();
        assert!(out.is_finite(), "{v}");
    }
}
