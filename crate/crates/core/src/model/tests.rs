use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ssm::{discretize, input_dependent_params, scan_sequential, ScanDims, ScanInputs};

fn silu(v: f64) -> f64 {
    v / (1.0 + (-v).exp())
}

fn rand_t(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Step-by-step block built from the scan primitives, without the graph.
fn reference_block(x: &[f64], len: usize, w: &MambaWeights<Tensor<f64>>) -> Vec<f64> {
    let d = w.in_proj.shape()[0];
    let di = w.out_proj.shape()[0];
    let xz = kernels::matmul(x, w.in_proj.data(), len, d, 2 * di);
    let mut u = vec![0.0; len * di];
    for n in 0..len {
        for i in 0..di {
            let mut acc = w.conv_b.data()[i];
            for k in 0..BLOCK_CONV_K {
                let src = n as isize + k as isize - (BLOCK_CONV_K as isize - 1);
                if src >= 0 {
                    acc += w.conv_w.data()[i * BLOCK_CONV_K + k] * xz[src as usize * 2 * di + i];
                }
            }
            u[n * di + i] = silu(acc);
        }
    }
    let ssm = SsmParams {
        a_log: w.a_log.clone(),
        d_skip: w.d_skip.clone(),
        x_proj: w.x_proj.clone(),
        dt_proj: w.dt_proj.clone(),
        dt_bias: w.dt_bias.clone(),
    };
    let sel = input_dependent_params(&u, len, &ssm).unwrap();
    let dims = ScanDims { len, d_inner: di, d_state: ssm.d_state() };
    let (abar, bbar) = discretize(&sel.delta, &ssm.a(), &sel.b, dims, Discretization::Euler).unwrap();
    let inp = ScanInputs { abar: &abar, bbar: &bbar, c: &sel.c, x: &u, d_skip: ssm.d_skip.data(), dims };
    let y = scan_sequential(&inp).unwrap().y;
    let gated: Vec<f64> = (0..len * di).map(|k| y[k] * silu(xz[(k / di) * 2 * di + di + k % di])).collect();
    let out = kernels::matmul(&gated, w.out_proj.data(), len, di, d);
    out.iter().zip(x).map(|(a, b)| a + b).collect()
}

fn reverse_rows(x: &[f64], cols: usize) -> Vec<f64> {
    x.chunks(cols).rev().flatten().copied().collect()
}

fn run_block(x: &Tensor<f64>, w: &MambaWeights<Tensor<f64>>, cfg: &ModelConfig) -> Vec<f64> {
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let wn = w.map(&mut |t: &Tensor<f64>| g.constant(t.clone()));
    let y = mamba_block(&mut g, xn, &wn, cfg).unwrap();
    g.value(y).data().to_vec()
}

fn run_bi(x: &Tensor<f64>, w: &BiMambaWeights<Tensor<f64>>, cfg: &ModelConfig) -> Vec<f64> {
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let wn = BiMambaWeights {
        fwd: w.fwd.map(&mut |t: &Tensor<f64>| g.constant(t.clone())),
        bwd: w.bwd.map(&mut |t: &Tensor<f64>| g.constant(t.clone())),
    };
    let y = bidirectional_mamba(&mut g, xn, &wn, cfg).unwrap();
    g.value(y).data().to_vec()
}

fn tiny(layers: usize) -> (ModelConfig, ModelParams<f64>) {
    let cfg = ModelConfig::tiny(2, 8, layers);
    let p = ModelParams::init(&cfg, 3).unwrap();
    (cfg, p)
}

#[test]
fn zero_out_projection_gives_residual_only() {
    let (cfg, mut p) = tiny(1);
    let x = rand_t(&[12, 8], 1);
    let w = &mut p.layers[0];
    w.fwd.out_proj.data_mut().iter_mut().for_each(|v| *v = 0.0);
    assert_eq!(run_block(&x, &w.fwd, &cfg), x.data());
    w.bwd.out_proj.data_mut().iter_mut().for_each(|v| *v = 0.0);
    assert_eq!(run_bi(&x, w, &cfg), x.data());
}

#[test]
fn block_matches_composed_reference() {
    for (seed, len, d) in [(1u64, 9usize, 8usize), (2, 17, 6), (3, 1, 4)] {
        let cfg = ModelConfig::tiny(2, d, 1);
        let p = ModelParams::<f64>::init(&cfg, seed).unwrap();
        let x = rand_t(&[len, d], seed + 10);
        let got = run_block(&x, &p.layers[0].fwd, &cfg);
        assert_eq!(got.len(), len * d);
        let want = reference_block(x.data(), len, &p.layers[0].fwd);
        let diff = got.iter().zip(&want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-12, "diff {diff}");
    }
}

#[test]
fn bidirectional_matches_two_pass_reference() {
    let (cfg, p) = tiny(1);
    let x = rand_t(&[11, 8], 5);
    let got = run_bi(&x, &p.layers[0], &cfg);
    let f = reference_block(x.data(), 11, &p.layers[0].fwd);
    let b = reverse_rows(&reference_block(&reverse_rows(x.data(), 8), 11, &p.layers[0].bwd), 8);
    for k in 0..got.len() {
        assert!((got[k] - (f[k] + b[k] - x.data()[k])).abs() < 1e-12);
    }
}

#[test]
fn tied_directions_keep_palindromes() {
    let (cfg, mut p) = tiny(1);
    p.layers[0].bwd = p.layers[0].fwd.clone();
    let half = rand_t(&[5, 8], 9);
    let mut data = half.data().to_vec();
    data.extend(reverse_rows(half.data(), 8));
    let x = Tensor::new([10, 8], data).unwrap();
    let y = run_bi(&x, &p.layers[0], &cfg);
    let yr = reverse_rows(&y, 8);
    for (a, b) in y.iter().zip(&yr) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn pixel_shuffle_examples() {
    let x = Tensor::<f64>::from_fn([10, 2], |i| (i / 2) as f64);
    let y = pixel_shuffle(&x, 10).unwrap();
    let want: Vec<f64> = (0..20).map(|i| (i % 10) as f64).collect();
    assert_eq!(y.shape(), &[1, 20]);
    assert_eq!(y.data(), &want[..]);
    let z = rand_t(&[3, 7], 1);
    assert_eq!(pixel_shuffle(&z, 1).unwrap(), z);
    let z = rand_t(&[20, 7], 2);
    let s = pixel_shuffle(&z, 10).unwrap();
    assert_eq!(pixel_unshuffle(&s, 10).unwrap(), z);
    let sq = |t: &Tensor<f64>| t.data().iter().map(|v| v * v).sum::<f64>();
    assert_eq!(sq(&s), sq(&z));
    assert!(matches!(pixel_shuffle(&rand_t(&[7, 3], 0), 2), Err(Error::Dimension(_))));
}

#[test]
fn zero_network_reduces_to_linear_interpolation() {
    let (cfg, mut p) = tiny(1);
    p.zero_network();
    let lr = rand_t(&[2, 30], 4);
    let mut g = Graph::new();
    let w = p.register(&mut g, false);
    let y = msecg_forward(&mut g, &lr, &w, &cfg).unwrap();
    assert_eq!(g.value(y), &li_upsample(&lr, 10).unwrap());
}

#[test]
fn output_is_ratio_times_longer() {
    let cfg = ModelConfig::tiny(12, 8, 1);
    let p = ModelParams::<f32>::init(&cfg, 0).unwrap();
    let lr = Signal::new(12, 50.0, vec![0.1; 12 * 500]).unwrap();
    let y = infer(&p, &cfg, &lr).unwrap();
    assert_eq!((y.channels(), y.len(), y.sample_rate()), (12, 5000, 500.0));
    let wrong = Signal::new(3, 50.0, vec![0.1; 30]).unwrap();
    assert!(matches!(infer(&p, &cfg, &wrong), Err(Error::Dimension(_))));
}

#[test]
fn ablation_arms_are_shape_valid() {
    for (ps, sc) in [(true, true), (true, false), (false, true), (false, false)] {
        let cfg = ModelConfig {
            use_pixel_shuffle: ps,
            use_deconv: !ps,
            use_skip_connection: sc,
            ..ModelConfig::tiny(2, 8, 1)
        };
        let p = ModelParams::<f64>::init(&cfg, 1).unwrap();
        assert_eq!(p.count(), count_params(&cfg));
        let lr = rand_t(&[2, 13], 3);
        let mut g = Graph::new();
        let w = p.register(&mut g, false);
        let y = msecg_forward(&mut g, &lr, &w, &cfg).unwrap();
        assert_eq!(g.shape(y), &[2, 130]);
    }
    let both = ModelConfig { use_deconv: true, ..ModelConfig::default() };
    assert!(matches!(both.validate(), Err(Error::Config(_))));
}

/// Central differences over every parameter of a tiny network.
#[test]
fn end_to_end_gradients_match_finite_differences() {
    let (cfg, p) = tiny(1);
    let lr = rand_t(&[2, 20], 21);
    let target = rand_t(&[2, 200], 22);
    let loss_of = |p: &ModelParams<f64>| -> f64 {
        let mut g = Graph::new();
        let w = p.register(&mut g, false);
        let y = msecg_forward(&mut g, &lr, &w, &cfg).unwrap();
        let t = g.constant(target.clone());
        let l = g.mse_loss(y, t).unwrap();
        g.value(l).data()[0]
    };
    let mut g = Graph::new();
    let w = p.register(&mut g, true);
    let y = msecg_forward(&mut g, &lr, &w, &cfg).unwrap();
    let t = g.constant(target.clone());
    let l = g.mse_loss(y, t).unwrap();
    let grads = g.backward(l).unwrap();

    let ids: Vec<NodeId> = w.iter().copied().collect();
    let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
    let mut work = p.clone();
    let h = 1e-6;
    for (slot, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).unwrap().data().to_vec();
        for (k, &ak) in analytic.iter().enumerate() {
            let orig = work.iter_mut()[slot].data()[k];
            work.iter_mut()[slot].data_mut()[k] = orig + h;
            let plus = loss_of(&work);
            work.iter_mut()[slot].data_mut()[k] = orig - h;
            let minus = loss_of(&work);
            work.iter_mut()[slot].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (numeric - ak).abs() / numeric.abs().max(ak.abs()).max(1e-6);
            assert!(rel < 1e-3, "{}[{k}]: analytic {ak} numeric {numeric}", names[slot]);
        }
    }
}

#[test]
fn count_params_hand_checks() {
    // no Mamba layers, 12 -> 12 channels, 1-tap convs:
    // front 12*12 + 12, head (12*10)*(12 + 1)
    let cfg =
        ModelConfig { d_model: 12, layers: 0, conv_kernel_front: 1, conv_kernel_head: 1, ..ModelConfig::default() };
    assert_eq!(count_params(&cfg), 156 + 1560);
    let mut last = 0;
    for m in 0..7 {
        let n = count_params(&ModelConfig { layers: m, ..ModelConfig::default() });
        assert!(n > last);
        last = n;
    }
    let n = count_params(&ModelConfig::default());
    assert!((1_500_000..=2_400_000).contains(&n) && n < 3_050_000, "{n}");
    assert_eq!(ModelParams::<f32>::init(&ModelConfig::default(), 0).unwrap().count(), n);
}

#[test]
fn init_is_deterministic() {
    let cfg = ModelConfig::tiny(2, 8, 2);
    let a = ModelParams::<f32>::init(&cfg, 5).unwrap();
    assert_eq!(a, ModelParams::<f32>::init(&cfg, 5).unwrap());
    assert_ne!(a, ModelParams::<f32>::init(&cfg, 6).unwrap());
    let shallow = ModelParams::<f32>::init(&ModelConfig::tiny(2, 8, 1), 5).unwrap();
    assert_eq!(shallow.layers[0], a.layers[0]);
}
