// Scratch matmul microbenchmark.
use ndarray::Array2;
use std::time::Instant;

fn main() {
    for (m, k, n) in [(128, 4, 32), (128, 32, 32), (512, 6, 32), (512, 32, 32), (512, 32, 2), (2048, 32, 32)] {
        let a = Array2::<f64>::from_elem((m, k), 0.5);
        let b = Array2::<f64>::from_elem((k, n), 0.25);
        let reps = 20_000_000 / (m * k * n) + 1;
        let t0 = Instant::now();
        let mut acc = 0.0;
        for _ in 0..reps {
            let c = a.dot(&b);
            acc += c[[0, 0]];
        }
        let el = t0.elapsed().as_secs_f64();
        let flops = 2.0 * (m * k * n * reps) as f64 / el / 1e9;
        println!("{m}x{k}x{n}: {flops:.2} Gflop/s ({el:.3}s, {reps} reps, acc {acc:.1})");
    }
}
