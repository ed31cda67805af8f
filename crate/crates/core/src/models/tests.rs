use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::array::Array3;
use crate::sensor::{BandId, HyperCube, Space};

fn rnd(c: usize, h: usize, w: usize, seed: u64) -> Array3 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_fn(c, h, w, |_, _, _| r.random_range(-1.0..1.0))
}

fn rvec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn cube(a: Array3) -> HyperCube {
    HyperCube::new(a, BandId::Bd3, Space::Normalized).unwrap()
}

fn toy(arch: ArchId, c: usize, seed: u64) -> ModelParams {
    ModelParams::init(arch, BandId::Bd3, ModelCfg::toy(arch, c), 4, seed).unwrap()
}

// direct depthwise-then-pointwise loops, zero outside the image
fn dsc_oracle(x: &Array3, m: &DscParams, cout: usize, k: usize) -> Array3 {
    let (c, h, w) = x.shape();
    let r = (k / 2) as i64;
    let mut d = Array3::zeros(c, h, w);
    for ch in 0..c {
        for i in 0..h as i64 {
            for j in 0..w as i64 {
                let mut acc = 0.0;
                for a in 0..k as i64 {
                    for b in 0..k as i64 {
                        let (ii, jj) = (i + a - r, j + b - r);
                        if ii >= 0 && jj >= 0 && ii < h as i64 && jj < w as i64 {
                            acc += m.depthwise[ch * k * k + (a * k as i64 + b) as usize]
                                * x.get(ch, ii as usize, jj as usize);
                        }
                    }
                }
                d.set(ch, i as usize, j as usize, acc);
            }
        }
    }
    Array3::from_fn(cout, h, w, |o, i, j| {
        m.bias[o] + (0..c).map(|ch| m.pointwise[o * c + ch] * d.get(ch, i, j)).sum::<f64>()
    })
}

#[test]
fn identity_module_passes_input_through() {
    let x = rnd(3, 6, 5, 1);
    let mut dw = vec![0.0; 27];
    (0..3).for_each(|c| dw[c * 9 + 4] = 1.0);
    let mut pw = vec![0.0; 9];
    (0..3).for_each(|c| pw[c * 3 + c] = 1.0);
    let block = DscBlockCfg { in_channels: 3, out_channels: 3, kernel: 3, depth: 1 };
    let m = DscParams { depthwise: dw, pointwise: pw, bias: vec![0.0; 3] };
    assert_eq!(dsc_forward(&x, &block, &[m]).unwrap(), x);
}

#[test]
fn module_shape_and_channel_check() {
    let block = DscBlockCfg { in_channels: 4, out_channels: 8, kernel: 3, depth: 1 };
    let m = DscParams { depthwise: rvec(36, 2), pointwise: rvec(32, 3), bias: rvec(8, 4) };
    let y = dsc_forward(&rnd(4, 16, 16, 5), &block, &[m.clone()]).unwrap();
    assert_eq!(y.shape(), (8, 16, 16));
    assert!(matches!(dsc_forward(&rnd(3, 16, 16, 5), &block, &[m]), Err(crate::Error::Shape(_))));
}

#[test]
fn single_channel_module_matches_loops() {
    let block = DscBlockCfg { in_channels: 1, out_channels: 1, kernel: 3, depth: 1 };
    let m = DscParams { depthwise: rvec(9, 6), pointwise: rvec(1, 7), bias: rvec(1, 8) };
    let x = rnd(1, 5, 5, 9);
    let y = dsc_forward(&x, &block, &[m.clone()]).unwrap();
    assert!(y.sum_sq_diff(&dsc_oracle(&x, &m, 1, 3)).sqrt() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn module_matches_loops(cin in 1usize..=8, cout in 1usize..=8, h in 1usize..=9, w in 1usize..=9,
                            k in prop_oneof![Just(1usize), Just(3), Just(5)], seed in 0u64..1000) {
        let block = DscBlockCfg { in_channels: cin, out_channels: cout, kernel: k, depth: 1 };
        let m = DscParams {
            depthwise: rvec(cin * k * k, seed),
            pointwise: rvec(cout * cin, seed + 1),
            bias: rvec(cout, seed + 2),
        };
        let x = rnd(cin, h, w, seed + 3);
        let y = dsc_forward(&x, &block, &[m.clone()]).unwrap();
        prop_assert!(y.sum_sq_diff(&dsc_oracle(&x, &m, cout, k)).sqrt() < 1e-9);
    }

    #[test]
    fn shallow_variant_is_affine(alpha in -1.0f64..2.0, seed in 0u64..1000) {
        let mut p = toy(ArchId::DscrS, 5, seed);
        p.randomize(seed, 0.5);
        let (a, b) = (rnd(5, 6, 7, seed + 1), rnd(5, 6, 7, seed + 2));
        let mix = a.zip_map(&b, |u, v| alpha * u + (1.0 - alpha) * v);
        let lhs = predict(&p, &mix).unwrap();
        let (fa, fb) = (predict(&p, &a).unwrap(), predict(&p, &b).unwrap());
        let rhs = fa.zip_map(&fb, |u, v| alpha * u + (1.0 - alpha) * v);
        prop_assert!(lhs.sum_sq_diff(&rhs).sqrt() < 1e-9);
    }
}

#[test]
fn zero_head_reproduces_bicubic_exactly() {
    for arch in ArchId::ALL {
        let mut p = toy(arch, 16, 11);
        p.randomize(12, 0.3);
        p.zero_residual();
        let y = rnd(16, 8, 8, 13);
        assert_eq!(predict(&p, &y).unwrap(), bicubic_upsample_array(&y, 4), "{arch}");
    }
    let mut p = toy(ArchId::DscrS, 4, 0);
    p.tensors.iter_mut().for_each(|t| t.data.iter_mut().for_each(|v| *v = 0.0));
    let y = cube(rnd(4, 5, 5, 14));
    assert_eq!(dscr_forward(&y, &p).unwrap(), bicubic_upsample(&y, 4).unwrap());
}

#[test]
fn toy_shapes_for_both_patch_sizes() {
    for arch in ArchId::ALL {
        let p = toy(arch, 16, 3);
        for lr in [112, 52] {
            let y = rnd(16, lr, lr, 4);
            assert_eq!(predict(&p, &y).unwrap().shape(), (16, 4 * lr, 4 * lr), "{arch} {lr}");
        }
    }
}

#[test]
fn indivisible_input_names_the_multiple() {
    let p = toy(ArchId::Unet1m, 16, 3);
    match predict(&p, &rnd(16, 6, 8, 1)) {
        Err(crate::Error::Shape(m)) => assert!(m.contains("multiple of 16")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn full_width_swir_unet1m_shape() {
    let cfg = ModelCfg::preset(ArchId::Unet1m, 480).unwrap();
    let p = ModelParams::init(ArchId::Unet1m, BandId::Bd7, cfg, 4, 1).unwrap();
    let y = HyperCube::new(rnd(480, 52, 52, 2), BandId::Bd7, Space::Normalized).unwrap();
    assert_eq!(unet_s5p_forward(&y, &p).unwrap().shape(), (480, 208, 208));
}

#[test]
fn full_width_unet800k_shape() {
    let cfg = ModelCfg::preset(ArchId::Unet800k, 497).unwrap();
    let p = ModelParams::init(ArchId::Unet800k, BandId::Bd2, cfg, 4, 1).unwrap();
    let y = HyperCube::new(rnd(497, 112, 112, 2), BandId::Bd2, Space::Normalized).unwrap();
    assert_eq!(unet_s5p_forward(&y, &p).unwrap().shape(), (497, 448, 448));
}

#[test]
fn rectifiers_are_live_in_dscr() {
    let mut p = toy(ArchId::Dscr, 6, 5);
    p.randomize(6, 0.6);
    let y = rnd(6, 6, 6, 7);
    let with = predict(&p, &y).unwrap();
    let ModelCfg::Dscr(mut d) = p.cfg.clone() else { unreachable!() };
    d.relu = false;
    p.cfg = ModelCfg::Dscr(d);
    let without = predict(&p, &y).unwrap();
    assert!(with.sum_sq_diff(&without) > 1e-6);
}

#[test]
fn wrong_forward_for_architecture() {
    let p = toy(ArchId::Dscr, 4, 0);
    let y = cube(rnd(4, 4, 4, 0));
    assert!(unet_s5p_forward(&y, &p).is_err());
}

#[test]
fn tape_matches_eval_and_gradients_match_differences() {
    for arch in ArchId::ALL {
        let mut p = toy(arch, 16, 21);
        p.randomize_fan_in(22, 1.5);
        let y = rnd(16, 4, 4, 23);
        let t = rnd(16, 16, 16, 24);
        let loss = |q: &ModelParams| -> crate::Result<gradcheck::Probe> {
            let mut tape = Tape::new(q);
            let out = network(&mut tape, &y)?;
            let terms = tape.value(&out).zip_map(&t, |a, b| 0.5 * (a - b) * (a - b)).into_vec();
            Ok(gradcheck::Probe { terms, pattern: tape.relu_pattern() })
        };
        let mut tape = Tape::new(&p);
        let out = network(&mut tape, &y).unwrap();
        let pred = tape.value(&out).clone();
        assert_eq!(pred, predict(&p, &y).unwrap());
        let seed = pred.zip_map(&t, |a, b| a - b);
        let mut grads = p.zeros_like();
        tape.backward(out, &seed, &mut grads).unwrap();
        let flat: Vec<f64> = grads.concat();
        let r = gradcheck::check_gradients(&p, &flat, loss, 60, 1e-5, 1e-6, 25).unwrap();
        assert!(r.checked >= 50 && r.max_rel_error <= 1e-3, "{arch}: {r:?}");
    }
}





