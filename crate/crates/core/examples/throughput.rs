//! Quick single-machine throughput probe: times the dominant GEMM
//! shapes of the full-size graph, one im2col unroll, and the whole
//! 416×416 forward pass. Run with `cargo run --release -p sungold
//! --example throughput`.

use std::time::Instant;

use sungold::layers::forward_pass;
use sungold::netdef::ModelWeights;
use sungold::presets::tiny_ripeness;
use sungold::tensor::{gemm, im2col, Matrix, Shape, Tensor};

fn fill(m: &mut Matrix<f32>, seed: u32) {
    let mut s = seed;
    for v in m.data_mut() {
        s = s.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
        *v = (s >> 8) as f32 / (1u32 << 24) as f32 - 0.5;
    }
}

fn time_gemm(label: &str, m: usize, k: usize, n: usize) {
    let mut a = Matrix::zeros(m, k);
    let mut b = Matrix::zeros(k, n);
    fill(&mut a, 1);
    fill(&mut b, 2);
    let _ = gemm(&a, &b); // warm
    let iters = 5;
    let t = Instant::now();
    for _ in 0..iters {
        let _ = gemm(&a, &b).unwrap();
    }
    let dt = t.elapsed().as_secs_f64() / iters as f64;
    let flop = 2.0 * m as f64 * k as f64 * n as f64;
    println!("{label}: {m}x{k} · {k}x{n}  {:.1} ms  {:.2} GFLOP/s", dt * 1e3, flop / dt / 1e9);
}

fn main() {
    time_gemm("deep 13x13 block ", 1024, 4608, 169);
    time_gemm("wide 26x26 block ", 256, 3456, 676);
    time_gemm("early 208x208    ", 32, 144, 43264);

    let x = Tensor::<f32>::zeros(Shape::new(1, 16, 208, 208));
    let iters = 5;
    let t = Instant::now();
    for _ in 0..iters {
        let _ = im2col(&x, 3, 1, 1).unwrap();
    }
    println!(
        "im2col 16ch 208²  {:.1} ms",
        t.elapsed().as_secs_f64() / iters as f64 * 1e3
    );

    let cfg = tiny_ripeness().unwrap();
    let w = ModelWeights::zeroed(&cfg);
    let input = Tensor::<f32>::zeros(Shape::new(1, 3, 416, 416));
    let t = Instant::now();
    let _ = forward_pass(&cfg, &w, &input).unwrap();
    println!("416 forward cold  {:.1} ms", t.elapsed().as_secs_f64() * 1e3);
    let _ = forward_pass(&cfg, &w, &input).unwrap();
    let t = Instant::now();
    for _ in 0..3 {
        let _ = forward_pass(&cfg, &w, &input).unwrap();
    }
    println!("416 forward warm  {:.1} ms", t.elapsed().as_secs_f64() / 3.0 * 1e3);
}
