// Scratch activation microbenchmark.
use std::time::Instant;

fn main() {
    let n = 20_000_000usize;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64) * 4.0 - 2.0).collect();

    let t0 = Instant::now();
    let mut acc = 0.0;
    for &x in &xs {
        acc += x.tanh();
    }
    println!("tanh:    {:.2} ns/call (acc {acc:.3})", t0.elapsed().as_nanos() as f64 / n as f64);

    let t0 = Instant::now();
    let mut acc = 0.0;
    for &x in &xs {
        acc += x.exp();
    }
    println!("exp:     {:.2} ns/call (acc {acc:.3})", t0.elapsed().as_nanos() as f64 / n as f64);

    let t0 = Instant::now();
    let mut acc = 0.0;
    for &x in &xs {
        acc += 1.0 / (1.0 + (-x).exp());
    }
    println!("sigmoid: {:.2} ns/call (acc {acc:.3})", t0.elapsed().as_nanos() as f64 / n as f64);

    // tanh through exp
    let t0 = Instant::now();
    let mut acc = 0.0;
    for &x in &xs {
        acc += 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
    }
    println!("tanh/exp:{:.2} ns/call (acc {acc:.3})", t0.elapsed().as_nanos() as f64 / n as f64);
}
