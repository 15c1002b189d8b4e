mod common;

use common::*;
use ndarray::Array2;
use rand::Rng;

use shadowhash::losses::{srh_loss, srh_loss_and_gradient, PairLabels, SrhParams};
use shadowhash::nn::{xavier_init, LayerSpec, Network};
use shadowhash::Tensor;

fn check_kind(kind: LayerKind, seed: u64) {
    let mut r = rng(seed);
    for _ in 0..24 {
        let case = random_layer_case(kind, &mut r);
        let err = layer_fd_error(kind, &case, &mut r);
        assert!(err < 1e-5, "{kind:?} {case:?}: relative error {err:e}");
    }
}

#[test]
fn conv_gradients() {
    check_kind(LayerKind::Conv, 1);
}

#[test]
fn maxpool_gradients() {
    check_kind(LayerKind::MaxPool, 2);
}

#[test]
fn fully_connected_gradients() {
    check_kind(LayerKind::FullyConnected, 3);
}

#[test]
fn relu_gradients() {
    check_kind(LayerKind::Relu, 4);
}

#[test]
fn tanh_gradients() {
    check_kind(LayerKind::Tanh, 5);
}

#[test]
fn srh_gradient_matches_differences() {
    let mut r = rng(11);
    for _ in 0..60 {
        let case = random_srh_case(&mut r);
        let err = srh_fd_error(&case);
        assert!(err < 1e-4, "relative error {err:e}");
    }
}

/// Direct 7-loop convolution.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, bias: &Tensor<f64>, stride: usize, pad: usize) -> Vec<f64> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (f, k) = (w.shape()[0], w.shape()[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * f * ho * wo];
    for b in 0..n {
        for o in 0..f {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut acc = bias.data()[o];
                    for ch in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xx * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xi = ((b * c + ch) * h + iy as usize) * wd + ix as usize;
                                let wi = ((o * c + ch) * k + ky) * k + kx;
                                acc += x.data()[xi] * w.data()[wi];
                            }
                        }
                    }
                    out[((b * f + o) * ho + y) * wo + xx] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv_forward_matches_naive_loops() {
    let mut r = rng(21);
    for _ in 0..20 {
        let case = random_layer_case(LayerKind::Conv, &mut r);
        let LayerSpec::Conv { stride, pad, .. } = case.spec else { unreachable!() };
        let mut net = Network::<f64>::new(&case.input, &[case.spec]).unwrap();
        for p in net.params_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
        }
        let mut shape = vec![case.batch];
        shape.extend_from_slice(&case.input);
        let len = shape.iter().product();
        let x = Tensor::from_vec(&shape, (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let params = net.params();
        let expected = naive_conv(&x, params[0].1, params[1].1, stride, pad);
        let got = net.infer(&x).unwrap();
        for (a, b) in got.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{case:?}");
        }
    }
}

#[test]
fn maxpool_forward_matches_clipped_windows() {
    let mut r = rng(22);
    for _ in 0..20 {
        let case = random_layer_case(LayerKind::MaxPool, &mut r);
        let LayerSpec::MaxPool { window, stride } = case.spec else { unreachable!() };
        let net = Network::<f64>::new(&case.input, &[case.spec]).unwrap();
        let [c, h, w] = case.input;
        let x = Tensor::from_vec(&[1, c, h, w], (0..c * h * w).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let out = net.infer(&x).unwrap();
        let (ho, wo) = {
            let s = net.shape_at(1);
            (s[1], s[2])
        };
        for ch in 0..c {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut m = f64::NEG_INFINITY;
                    for iy in y * stride..(y * stride + window).min(h) {
                        for ix in xx * stride..(xx * stride + window).min(w) {
                            m = m.max(x.data()[(ch * h + iy) * w + ix]);
                        }
                    }
                    assert_eq!(out.data()[(ch * ho + y) * wo + xx], m);
                }
            }
        }
    }
}

/// Gradient of the SRH objective through the whole 12-bit network, on
/// sampled parameters of every layer, against central differences.
#[test]
fn end_to_end_gradient_through_network() {
    let mut r = rng(31);
    let mut net = Network::<f64>::canonical(6).unwrap();
    xavier_init(&mut net, 5);
    let m = 3;
    let x = Tensor::from_vec(
        &[m, 3, 32, 32],
        (0..m * 3 * 1024).map(|_| r.gen_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let labels = PairLabels::from_classes(&[0u8, 1, 0]);
    let u = Array2::from_shape_fn((m, 6), |_| if r.gen_bool(0.5) { 1i8 } else { -1 });
    let p = SrhParams::new(6, 0.3, 0.2).unwrap().with_margin(0.05);
    let loss = |net: &Network<f64>| -> f64 {
        let y = net.infer(&x).unwrap();
        let b = Array2::from_shape_vec((m, 6), y.data().to_vec()).unwrap();
        srh_loss(b.view(), u.view(), &labels, &p).unwrap().total()
    };
    let y = net.forward(&x).unwrap();
    let b = Array2::from_shape_vec((m, 6), y.data().to_vec()).unwrap();
    let (_, g) = srh_loss_and_gradient(b.view(), u.view(), &labels, &p).unwrap();
    net.backward(&Tensor::from_vec(&[m, 6], g.into_raw_vec_and_offset().0).unwrap())
        .unwrap();
    let analytic: Vec<(String, Vec<f64>)> =
        net.params().iter().map(|(n, _, g)| (n.clone(), g.data().to_vec())).collect();
    let h = 1e-6;
    for (pi, (name, grad)) in analytic.iter().enumerate() {
        let picks: Vec<usize> = (0..6).map(|_| r.gen_range(0..grad.len())).collect();
        let mut a = Vec::new();
        let mut fd = Vec::new();
        for &j in &picks {
            let x0 = net.params()[pi].1.data()[j];
            net.params_mut()[pi].value.data_mut()[j] = x0 + h;
            let lp = loss(&net);
            net.params_mut()[pi].value.data_mut()[j] = x0 - h;
            let lm = loss(&net);
            net.params_mut()[pi].value.data_mut()[j] = x0;
            a.push(grad[j]);
            fd.push((lp - lm) / (2.0 * h));
        }
        let err = rel_err(&a, &fd);
        assert!(err < 1e-4, "{name}: relative error {err:e} ({a:?} vs {fd:?})");
    }
}
