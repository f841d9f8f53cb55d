//! Rough throughput of noise generation and the implicit step on a window grid.

use std::time::Instant;

use chung_lab_core::domain::{window_grid, Budget, ParabolicWindow};
use chung_lab_core::noise::{NoiseSource, SeedSpec};
use chung_lab_core::solver::{Coefficient, ImplicitHeatStep};

fn main() {
    let n: i32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let ppa: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(16);
    let window = ParabolicWindow::new(2f64.powi(-n)).unwrap();
    let grid = window_grid(&window, ppa, &Budget::default()).unwrap();
    println!("nx={} nt={} cells={}", grid.nx, grid.nt, grid.cells());

    let mut rows = NoiseSource::Seeded(SeedSpec::new(1, 0, 0)).rows(&grid);
    let mut dw = vec![0.0; grid.nx];
    let start = Instant::now();
    while rows.fill_next(&mut dw) {}
    let noise_s = start.elapsed().as_secs_f64();

    let stepper = ImplicitHeatStep::new(&grid);
    let sigma = Coefficient::affine(2.0, 1.0);
    let mut step_s = f64::INFINITY;
    for _ in 0..5 {
        let mut u = vec![0.0; grid.nx];
        let start = Instant::now();
        for _ in 0..grid.nt {
            stepper.step(&mut u, &dw, &sigma);
        }
        step_s = step_s.min(start.elapsed().as_secs_f64());
    }
    let cells = grid.cells() as f64;
    println!(
        "noise {:.2} ns/cell, step {:.2} ns/cell (best of 5)",
        noise_s / cells * 1e9,
        step_s / cells * 1e9
    );
}
