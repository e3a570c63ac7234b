//! Small FFT utilities on the periodic grid (entropy-minimizer
//! preconditioning). All transforms are planned once per call site and run
//! single-threaded, so results are bit-reproducible.

use crate::grid::{GridChart, ScalarField};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Apply (a + b·K)^{-1} in Fourier space, where K is the exact symbol of the
/// compact 5-point Laplacian: K(kx,ky) = (2-2cos(kx hx))/hx² + (2-2cos(ky hy))/hy².
pub fn shifted_inverse_laplacian(f: &ScalarField, a: f64, b: f64) -> ScalarField {
    let chart = f.chart;
    let (nx, ny) = (chart.nx, chart.ny);
    let mut planner = FftPlanner::<f64>::new();
    let fft_x = planner.plan_fft_forward(nx);
    let fft_y = planner.plan_fft_forward(ny);
    let ifft_x = planner.plan_fft_inverse(nx);
    let ifft_y = planner.plan_fft_inverse(ny);

    let mut data: Vec<Complex64> =
        f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();

    // rows (x direction)
    for iy in 0..ny {
        fft_x.process(&mut data[iy * nx..(iy + 1) * nx]);
    }
    // columns (y direction)
    let mut col = vec![Complex64::new(0.0, 0.0); ny];
    for ix in 0..nx {
        for iy in 0..ny {
            col[iy] = data[iy * nx + ix];
        }
        fft_y.process(&mut col);
        for iy in 0..ny {
            data[iy * nx + ix] = col[iy];
        }
    }

    let hx = chart.hx();
    let hy = chart.hy();
    let tau_x = std::f64::consts::TAU / nx as f64;
    let tau_y = std::f64::consts::TAU / ny as f64;
    for iy in 0..ny {
        let ky = (2.0 - 2.0 * (tau_y * iy as f64).cos()) / (hy * hy);
        for ix in 0..nx {
            let kx = (2.0 - 2.0 * (tau_x * ix as f64).cos()) / (hx * hx);
            let denom = a + b * (kx + ky);
            data[iy * nx + ix] /= denom;
        }
    }

    for ix in 0..nx {
        for iy in 0..ny {
            col[iy] = data[iy * nx + ix];
        }
        ifft_y.process(&mut col);
        for iy in 0..ny {
            data[iy * nx + ix] = col[iy];
        }
    }
    for iy in 0..ny {
        ifft_x.process(&mut data[iy * nx..(iy + 1) * nx]);
    }

    let scale = 1.0 / (nx * ny) as f64;
    ScalarField {
        chart,
        values: data.iter().map(|c| c.re * scale).collect(),
    }
}
