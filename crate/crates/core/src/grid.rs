//! Periodic grid charts and the field types living on them.
//!
//! The domain is the flat 2-torus [0,lx) × [0,ly) sampled on an nx × ny
//! grid with modular index arithmetic in both axes. Values are stored
//! row-major: `values[iy * nx + ix]`.
//!
//! Vector fields store *covariant* components in the flat chart, so the
//! metric norm of V on a conformal metric e^{2u}δ is
//! |V|²_g = e^{-2u}(V₁² + V₂²).

use crate::error::{FlowError, Result};
use serde::{Deserialize, Serialize};

/// Finite-difference stencil order for all spatial operators on a chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil {
    Order2,
    Order4,
}

impl Default for Stencil {
    fn default() -> Self {
        Stencil::Order2
    }
}

/// Periodic grid on the fundamental domain [0,lx) × [0,ly).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridChart {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub stencil: Stencil,
}

impl GridChart {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::with_stencil(nx, ny, lx, ly, Stencil::Order2)
    }

    pub fn with_stencil(nx: usize, ny: usize, lx: f64, ly: f64, stencil: Stencil) -> Result<Self> {
        if nx < 16 || ny < 16 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(FlowError::InvalidGrid(format!(
                "grid sizes must be even and >= 16, got {nx} x {ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(FlowError::InvalidGrid(format!(
                "side lengths must be positive finite, got {lx} x {ly}"
            )));
        }
        Ok(GridChart { nx, ny, lx, ly, stencil })
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Coarsest spacing, used by CFL bounds and tolerance formulas.
    #[inline]
    pub fn h_max(&self) -> f64 {
        self.hx().max(self.hy())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Periodic wrap of signed index offsets.
    #[inline]
    pub fn wrap(&self, ix: isize, iy: isize) -> usize {
        let nx = self.nx as isize;
        let ny = self.ny as isize;
        let x = ix.rem_euclid(nx) as usize;
        let y = iy.rem_euclid(ny) as usize;
        self.idx(x, y)
    }

    #[inline]
    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.hx()
    }

    #[inline]
    pub fn y(&self, iy: usize) -> f64 {
        iy as f64 * self.hy()
    }

    pub fn point(&self, i: usize) -> (f64, f64) {
        let ix = i % self.nx;
        let iy = i / self.nx;
        (self.x(ix), self.y(iy))
    }

    /// Grid point nearest to physical coordinates (wrapped into the domain).
    pub fn nearest(&self, x: f64, y: f64) -> usize {
        let fx = (x / self.hx()).round() as isize;
        let fy = (y / self.hy()).round() as isize;
        self.wrap(fx, fy)
    }

    /// Doubled grid with the same domain and stencil, for refinement studies.
    pub fn refined(&self) -> Result<GridChart> {
        GridChart::with_stencil(self.nx * 2, self.ny * 2, self.lx, self.ly, self.stencil)
    }

    pub fn same(&self, other: &GridChart) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(FlowError::ChartMismatch(format!(
                "{}x{} [{}, {}] {:?} vs {}x{} [{}, {}] {:?}",
                self.nx, self.ny, self.lx, self.ly, self.stencil, other.nx, other.ny, other.lx,
                other.ly, other.stencil
            )))
        }
    }

    /// Minimum-image displacement from (x0,y0) to (x1,y1) in the flat chart.
    pub fn min_image(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> (f64, f64) {
        let mut dx = (x1 - x0).rem_euclid(self.lx);
        if dx > 0.5 * self.lx {
            dx -= self.lx;
        }
        let mut dy = (y1 - y0).rem_euclid(self.ly);
        if dy > 0.5 * self.ly {
            dy -= self.ly;
        }
        (dx, dy)
    }
}

/// Scalar sample field on a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub chart: GridChart,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(chart: GridChart) -> Self {
        ScalarField { chart, values: vec![0.0; chart.len()] }
    }

    pub fn constant(chart: GridChart, c: f64) -> Self {
        ScalarField { chart, values: vec![c; chart.len()] }
    }

    pub fn from_fn(chart: GridChart, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(chart.len());
        for iy in 0..chart.ny {
            for ix in 0..chart.nx {
                values.push(f(chart.x(ix), chart.y(iy)));
            }
        }
        ScalarField { chart, values }
    }

    pub fn from_values(chart: GridChart, values: Vec<f64>) -> Result<Self> {
        if values.len() != chart.len() {
            return Err(FlowError::InvalidGrid(format!(
                "value count {} does not match chart size {}",
                values.len(),
                chart.len()
            )));
        }
        Ok(ScalarField { chart, values })
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.chart.idx(ix, iy)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { chart: self.chart, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.chart, other.chart);
        ScalarField {
            chart: self.chart,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        for (v, xv) in self.values.iter_mut().zip(&x.values) {
            *v += a * xv;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in self.values.iter_mut() {
            *v *= a;
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Plain (unweighted) mean over grid points.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(FlowError::NonFinite { context: context.to_string() })
        }
    }

    /// Centered first derivative in x.
    pub fn dx(&self) -> ScalarField {
        let c = &self.chart;
        let mut out = vec![0.0; c.len()];
        match c.stencil {
            Stencil::Order2 => {
                let inv2h = 1.0 / (2.0 * c.hx());
                for iy in 0..c.ny {
                    for ix in 0..c.nx {
                        let e = self.values[c.wrap(ix as isize + 1, iy as isize)];
                        let w = self.values[c.wrap(ix as isize - 1, iy as isize)];
                        out[c.idx(ix, iy)] = (e - w) * inv2h;
                    }
                }
            }
            Stencil::Order4 => {
                let inv12h = 1.0 / (12.0 * c.hx());
                for iy in 0..c.ny {
                    for ix in 0..c.nx {
                        let e2 = self.values[c.wrap(ix as isize + 2, iy as isize)];
                        let e1 = self.values[c.wrap(ix as isize + 1, iy as isize)];
                        let w1 = self.values[c.wrap(ix as isize - 1, iy as isize)];
                        let w2 = self.values[c.wrap(ix as isize - 2, iy as isize)];
                        out[c.idx(ix, iy)] = (-e2 + 8.0 * e1 - 8.0 * w1 + w2) * inv12h;
                    }
                }
            }
        }
        ScalarField { chart: *c, values: out }
    }

    /// Centered first derivative in y.
    pub fn dy(&self) -> ScalarField {
        let c = &self.chart;
        let mut out = vec![0.0; c.len()];
        match c.stencil {
            Stencil::Order2 => {
                let inv2h = 1.0 / (2.0 * c.hy());
                for iy in 0..c.ny {
                    for ix in 0..c.nx {
                        let n = self.values[c.wrap(ix as isize, iy as isize + 1)];
                        let s = self.values[c.wrap(ix as isize, iy as isize - 1)];
                        out[c.idx(ix, iy)] = (n - s) * inv2h;
                    }
                }
            }
            Stencil::Order4 => {
                let inv12h = 1.0 / (12.0 * c.hy());
                for iy in 0..c.ny {
                    for ix in 0..c.nx {
                        let n2 = self.values[c.wrap(ix as isize, iy as isize + 2)];
                        let n1 = self.values[c.wrap(ix as isize, iy as isize + 1)];
                        let s1 = self.values[c.wrap(ix as isize, iy as isize - 1)];
                        let s2 = self.values[c.wrap(ix as isize, iy as isize - 2)];
                        out[c.idx(ix, iy)] = (-n2 + 8.0 * n1 - 8.0 * s1 + s2) * inv12h;
                    }
                }
            }
        }
        ScalarField { chart: *c, values: out }
    }

    /// Centered second derivative in x.
    pub fn dxx(&self) -> ScalarField {
        let c = &self.chart;
        let mut out = vec![0.0; c.len()];
        match c.stencil {
            Stencil::Order2 => {
                let invh2 = 1.0 / (c.hx() * c.hx());
                for iy in 0..c.ny {
                    for ix in 0..c.nx {
                        let e = self.values[c.wrap(ix as isize + 1, iy as isize)];
                        let m = self.values[c.idx(ix, iy)];
                        let w = self.values[c.wrap(ix as isize - 1, iy as isize)];
                        out[c.idx(ix, iy)] = (e - 2.0 * m + w) * invh2;
                    }
                }
            }
            Stencil::Order4 => {
                let invh2 = 1.0 / (12.0 * c.hx() * c.hx());
                for iy in 0..c.ny {
                    for ix in 0..c.nx {
                        let e2 = self.values[c.wrap(ix as isize + 2, iy as isize)];
                        let e1 = self.values[c.wrap(ix as isize + 1, iy as isize)];
                        let m = self.values[c.idx(ix, iy)];
                        let w1 = self.values[c.wrap(ix as isize - 1, iy as isize)];
                        let w2 = self.values[c.wrap(ix as isize - 2, iy as isize)];
                        out[c.idx(ix, iy)] = (-e2 + 16.0 * e1 - 30.0 * m + 16.0 * w1 - w2) * invh2;
                    }
                }
            }
        }
        ScalarField { chart: *c, values: out }
    }

    /// Centered second derivative in y.
    pub fn dyy(&self) -> ScalarField {
        let c = &self.chart;
        let mut out = vec![0.0; c.len()];
        match c.stencil {
            Stencil::Order2 => {
                let invh2 = 1.0 / (c.hy() * c.hy());
                for iy in 0..c.ny {
                    for ix in 0..c.nx {
                        let n = self.values[c.wrap(ix as isize, iy as isize + 1)];
                        let m = self.values[c.idx(ix, iy)];
                        let s = self.values[c.wrap(ix as isize, iy as isize - 1)];
                        out[c.idx(ix, iy)] = (n - 2.0 * m + s) * invh2;
                    }
                }
            }
            Stencil::Order4 => {
                let invh2 = 1.0 / (12.0 * c.hy() * c.hy());
                for iy in 0..c.ny {
                    for ix in 0..c.nx {
                        let n2 = self.values[c.wrap(ix as isize, iy as isize + 2)];
                        let n1 = self.values[c.wrap(ix as isize, iy as isize + 1)];
                        let m = self.values[c.idx(ix, iy)];
                        let s1 = self.values[c.wrap(ix as isize, iy as isize - 1)];
                        let s2 = self.values[c.wrap(ix as isize, iy as isize - 2)];
                        out[c.idx(ix, iy)] = (-n2 + 16.0 * n1 - 30.0 * m + 16.0 * s1 - s2) * invh2;
                    }
                }
            }
        }
        ScalarField { chart: *c, values: out }
    }

    /// Centered mixed derivative ∂²/∂x∂y (dx then dy of the same order).
    pub fn dxy(&self) -> ScalarField {
        self.dx().dy()
    }

    /// Flat Laplacian Δ₀ = ∂xx + ∂yy with the chart's stencil.
    pub fn lap_flat(&self) -> ScalarField {
        let mut out = self.dxx();
        out.axpy(1.0, &self.dyy());
        out
    }

    /// Bilinear interpolation at physical coordinates (periodic wrap).
    pub fn interp(&self, x: f64, y: f64) -> f64 {
        let c = &self.chart;
        let fx = x / c.hx();
        let fy = y / c.hy();
        let ix = fx.floor();
        let iy = fy.floor();
        let tx = fx - ix;
        let ty = fy - iy;
        let i0 = ix as isize;
        let j0 = iy as isize;
        let v00 = self.values[c.wrap(i0, j0)];
        let v10 = self.values[c.wrap(i0 + 1, j0)];
        let v01 = self.values[c.wrap(i0, j0 + 1)];
        let v11 = self.values[c.wrap(i0 + 1, j0 + 1)];
        v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
    }

    /// Gradient of the bilinear interpolant at physical coordinates.
    pub fn interp_grad(&self, x: f64, y: f64) -> (f64, f64) {
        let c = &self.chart;
        let fx = x / c.hx();
        let fy = y / c.hy();
        let ix = fx.floor();
        let iy = fy.floor();
        let tx = fx - ix;
        let ty = fy - iy;
        let i0 = ix as isize;
        let j0 = iy as isize;
        let v00 = self.values[c.wrap(i0, j0)];
        let v10 = self.values[c.wrap(i0 + 1, j0)];
        let v01 = self.values[c.wrap(i0, j0 + 1)];
        let v11 = self.values[c.wrap(i0 + 1, j0 + 1)];
        let gx = ((v10 - v00) * (1.0 - ty) + (v11 - v01) * ty) / c.hx();
        let gy = ((v01 - v00) * (1.0 - tx) + (v11 - v10) * tx) / c.hy();
        (gx, gy)
    }
}

/// Vector field; components are covariant (lower index) in the flat chart.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub chart: GridChart,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl VectorField {
    pub fn zeros(chart: GridChart) -> Self {
        VectorField { chart, vx: vec![0.0; chart.len()], vy: vec![0.0; chart.len()] }
    }

    pub fn from_components(vx: ScalarField, vy: ScalarField) -> Result<Self> {
        vx.chart.same(&vy.chart)?;
        Ok(VectorField { chart: vx.chart, vx: vx.values, vy: vy.values })
    }

    pub fn constant(chart: GridChart, vx: f64, vy: f64) -> Self {
        VectorField { chart, vx: vec![vx; chart.len()], vy: vec![vy; chart.len()] }
    }

    pub fn scaled(&self, a: f64) -> VectorField {
        VectorField {
            chart: self.chart,
            vx: self.vx.iter().map(|&v| a * v).collect(),
            vy: self.vy.iter().map(|&v| a * v).collect(),
        }
    }
}

/// Symmetric 2-tensor field; t12 = t21 structurally.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor2Field {
    pub chart: GridChart,
    pub t11: Vec<f64>,
    pub t12: Vec<f64>,
    pub t22: Vec<f64>,
}

impl SymTensor2Field {
    pub fn zeros(chart: GridChart) -> Self {
        let n = chart.len();
        SymTensor2Field { chart, t11: vec![0.0; n], t12: vec![0.0; n], t22: vec![0.0; n] }
    }

    pub fn axpy(&mut self, a: f64, other: &SymTensor2Field) {
        for (v, o) in self.t11.iter_mut().zip(&other.t11) {
            *v += a * o;
        }
        for (v, o) in self.t12.iter_mut().zip(&other.t12) {
            *v += a * o;
        }
        for (v, o) in self.t22.iter_mut().zip(&other.t22) {
            *v += a * o;
        }
    }

    pub fn scaled(&self, a: f64) -> SymTensor2Field {
        SymTensor2Field {
            chart: self.chart,
            t11: self.t11.iter().map(|&v| a * v).collect(),
            t12: self.t12.iter().map(|&v| a * v).collect(),
            t22: self.t22.iter().map(|&v| a * v).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        let m1 = self.t11.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let m2 = self.t12.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let m3 = self.t22.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        m1.max(m2).max(m3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_odd_grids() {
        assert!(GridChart::new(8, 32, 1.0, 1.0).is_err());
        assert!(GridChart::new(32, 17, 1.0, 1.0).is_err());
        assert!(GridChart::new(32, 32, -1.0, 1.0).is_err());
        assert!(GridChart::new(32, 32, 1.0, 1.0).is_ok());
    }

    #[test]
    fn wrap_is_modular_both_axes() {
        let c = GridChart::new(16, 16, 1.0, 1.0).unwrap();
        assert_eq!(c.wrap(-1, 0), c.idx(15, 0));
        assert_eq!(c.wrap(16, 3), c.idx(0, 3));
        assert_eq!(c.wrap(5, -2), c.idx(5, 14));
    }

    #[test]
    fn derivative_of_sine_second_order() {
        let c = GridChart::new(64, 64, 1.0, 1.0).unwrap();
        let k = 2.0 * std::f64::consts::PI;
        let f = ScalarField::from_fn(c, |x, _| (k * x).sin());
        let dfdx = f.dx();
        let exact = ScalarField::from_fn(c, |x, _| k * (k * x).cos());
        let err: f64 = dfdx
            .values
            .iter()
            .zip(&exact.values)
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
        // centered difference: relative error (kh)^2/6
        let h = c.hx();
        assert!(err < k * (k * h) * (k * h) / 6.0 * 1.1, "err = {err}");
    }

    #[test]
    fn order4_beats_order2() {
        let k = 2.0 * std::f64::consts::PI;
        let exact = |x: f64| -k * k * (k * x).sin();
        let mut errs = Vec::new();
        for stencil in [Stencil::Order2, Stencil::Order4] {
            let c = GridChart::with_stencil(64, 64, 1.0, 1.0, stencil).unwrap();
            let f = ScalarField::from_fn(c, |x, _| (k * x).sin());
            let dxx = f.dxx();
            let err = (0..c.nx)
                .map(|ix| (dxx.at(ix, 0) - exact(c.x(ix))).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < errs[0] * 1e-2, "order4 {} vs order2 {}", errs[1], errs[0]);
    }

    #[test]
    fn min_image_displacement() {
        let c = GridChart::new(16, 16, 1.0, 2.0).unwrap();
        let (dx, dy) = c.min_image(0.1, 0.1, 0.9, 1.9);
        assert!((dx - -0.2).abs() < 1e-14);
        assert!((dy - -0.2).abs() < 1e-14);
    }

    #[test]
    fn bilinear_interp_reproduces_nodes_and_linears() {
        let c = GridChart::new(16, 16, 1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(c, |x, y| 2.0 * x + 3.0 * y);
        // away from the periodic seam the interpolant is exact for linear data
        let v = f.interp(0.31, 0.47);
        assert!((v - (2.0 * 0.31 + 3.0 * 0.47)).abs() < 1e-12);
        let (gx, gy) = f.interp_grad(0.31, 0.47);
        assert!((gx - 2.0).abs() < 1e-10);
        assert!((gy - 3.0).abs() < 1e-10);
    }
}
