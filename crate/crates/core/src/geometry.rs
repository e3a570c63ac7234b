//! Discrete differential geometry for conformally flat metrics on the 2-torus.
//!
//! A metric is g_ij = e^{2u} δ_ij for a conformal factor u. In two dimensions
//! this gives closed-form discrete expressions for everything we need:
//!
//!   Δ_g f      = e^{-2u} Δ₀ f
//!   |∇f|²_g    = e^{-2u} ((∂x f)² + (∂y f)²)
//!   K          = -e^{-2u} Δ₀ u          (Gauss curvature)
//!   Rc         = K g,   R = 2K
//!   (∇∇f)_ij   = ∂i∂j f - Γ^k_ij ∂k f   with conformal Christoffels
//!   Div(t)_k   = e^{-2u} (∂x t_1k + ∂y t_2k - (∂k u)(t11 + t22))
//!   dμ         = e^{2u} hx hy
//!
//! Quadrature is the periodic trapezoid rule (= midpoint on a periodic grid).
//! ∫ Δ_g f dμ vanishes exactly: the conformal weights cancel and the periodic
//! stencil sum telescopes. The same cancellation makes `grad_inner` (the
//! face-averaged form) exactly adjoint to `laplace_beltrami` on Order2 charts,
//! so the integration-by-parts identity holds to rounding, not just to O(h²).
//!
//! `grad_norm_sq` squares centered components instead; that form is exact for
//! the quadratic phase of a Gaussian kernel, which keeps the Harnack equality
//! case clean. Both are second-order accurate.

use crate::error::{FlowError, Result};
use crate::flow::FlowTrajectory;
use crate::grid::{GridChart, ScalarField, SymTensor2Field, VectorField};

/// Riemannian metric g = e^{2u}(dx² + dy²) on a periodic chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalMetric {
    /// Conformal factor u (so the volume weight is e^{2u}).
    pub uc: ScalarField,
}

/// Metrics with e^{2u} anywhere below this are treated as flow blow-up.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

impl ConformalMetric {
    pub fn new(uc: ScalarField) -> Result<Self> {
        uc.ensure_finite("conformal factor")?;
        let m = ConformalMetric { uc };
        m.check_nondegenerate(0.0)?;
        Ok(m)
    }

    pub fn flat(chart: GridChart) -> Self {
        ConformalMetric { uc: ScalarField::zeros(chart) }
    }

    #[inline]
    pub fn chart(&self) -> &GridChart {
        &self.uc.chart
    }

    /// Pointwise volume weight e^{2u}.
    pub fn weight(&self) -> ScalarField {
        self.uc.map(|u| (2.0 * u).exp())
    }

    /// Pointwise inverse weight e^{-2u}.
    pub fn inv_weight(&self) -> ScalarField {
        self.uc.map(|u| (-2.0 * u).exp())
    }

    pub fn check_nondegenerate(&self, time: f64) -> Result<()> {
        let min_w = (2.0 * self.uc.min()).exp();
        if min_w < DEGENERACY_FLOOR || !min_w.is_finite() {
            Err(FlowError::DegenerateMetric { time, min_weight: min_w })
        } else {
            Ok(())
        }
    }

    /// Metric as a symmetric 2-tensor (g11 = g22 = e^{2u}, g12 = 0).
    pub fn as_tensor(&self) -> SymTensor2Field {
        let w = self.weight();
        SymTensor2Field {
            chart: self.uc.chart,
            t11: w.values.clone(),
            t12: vec![0.0; self.uc.chart.len()],
            t22: w.values,
        }
    }

    /// Rescaled metric c·g, i.e. u -> u + ln(c)/2.
    pub fn rescaled(&self, c: f64) -> ConformalMetric {
        let a = 0.5 * c.ln();
        ConformalMetric { uc: self.uc.map(|u| u + a) }
    }
}

/// Laplace–Beltrami operator: Δ_g f = e^{-2u} Δ₀ f.
pub fn laplace_beltrami(m: &ConformalMetric, f: &ScalarField) -> Result<ScalarField> {
    m.chart().same(&f.chart)?;
    let lap0 = f.lap_flat();
    Ok(lap0.zip(&m.uc, |l, u| l * (-2.0 * u).exp()))
}

/// Gradient as covariant components (∂x f, ∂y f).
pub fn gradient(m: &ConformalMetric, f: &ScalarField) -> Result<VectorField> {
    m.chart().same(&f.chart)?;
    VectorField::from_components(f.dx(), f.dy())
}

/// |∇f|²_g from centered components: e^{-2u}((∂x f)² + (∂y f)²).
pub fn grad_norm_sq(m: &ConformalMetric, f: &ScalarField) -> Result<ScalarField> {
    m.chart().same(&f.chart)?;
    let fx = f.dx();
    let fy = f.dy();
    let mut out = ScalarField::zeros(f.chart);
    for i in 0..out.values.len() {
        out.values[i] =
            (-2.0 * m.uc.values[i]).exp() * (fx.values[i] * fx.values[i] + fy.values[i] * fy.values[i]);
    }
    Ok(out)
}

/// ⟨∇f, ∇w⟩_g in the face-averaged form adjoint to the compact Laplacian.
///
/// Per axis the node value is the mean of the two adjacent face products
/// (f_{i+1}-f_i)(w_{i+1}-w_i)/h², weighted by e^{-2u}. Integrating this
/// against dμ cancels the weights, which is what makes
/// ∫ f Δ_g w dμ + ∫ ⟨∇f,∇w⟩_g dμ = 0 exact on Order2 charts.
pub fn grad_inner(m: &ConformalMetric, f: &ScalarField, w: &ScalarField) -> Result<ScalarField> {
    m.chart().same(&f.chart)?;
    m.chart().same(&w.chart)?;
    let c = *m.chart();
    let ihx2 = 1.0 / (c.hx() * c.hx());
    let ihy2 = 1.0 / (c.hy() * c.hy());
    let mut out = ScalarField::zeros(c);
    for iy in 0..c.ny {
        for ix in 0..c.nx {
            let i = c.idx(ix, iy);
            let fe = f.values[c.wrap(ix as isize + 1, iy as isize)] - f.values[i];
            let fw = f.values[i] - f.values[c.wrap(ix as isize - 1, iy as isize)];
            let fn_ = f.values[c.wrap(ix as isize, iy as isize + 1)] - f.values[i];
            let fs = f.values[i] - f.values[c.wrap(ix as isize, iy as isize - 1)];
            let we = w.values[c.wrap(ix as isize + 1, iy as isize)] - w.values[i];
            let ww = w.values[i] - w.values[c.wrap(ix as isize - 1, iy as isize)];
            let wn = w.values[c.wrap(ix as isize, iy as isize + 1)] - w.values[i];
            let ws = w.values[i] - w.values[c.wrap(ix as isize, iy as isize - 1)];
            let x_part = 0.5 * (fe * we + fw * ww) * ihx2;
            let y_part = 0.5 * (fn_ * wn + fs * ws) * ihy2;
            out.values[i] = (-2.0 * m.uc.values[i]).exp() * (x_part + y_part);
        }
    }
    Ok(out)
}

/// Face-averaged |∇f|²_g; the exact integrand of the Dirichlet energy used
/// by the entropy minimizer.
pub fn grad_norm_sq_mimetic(m: &ConformalMetric, f: &ScalarField) -> Result<ScalarField> {
    grad_inner(m, f, f)
}

/// Covariant Hessian (∇∇f)_ij = ∂i∂j f - Γ^k_ij ∂k f.
///
/// With g = e^{2u}δ the Christoffels are
///   Γ^1_11 = u_x, Γ^1_12 = u_y, Γ^1_22 = -u_x,
///   Γ^2_11 = -u_y, Γ^2_12 = u_x, Γ^2_22 = u_y.
pub fn hessian(m: &ConformalMetric, f: &ScalarField) -> Result<SymTensor2Field> {
    m.chart().same(&f.chart)?;
    let fx = f.dx();
    let fy = f.dy();
    let ux = m.uc.dx();
    let uy = m.uc.dy();
    let fxx = f.dxx();
    let fyy = f.dyy();
    let fxy = f.dxy();
    let n = f.chart.len();
    let mut t11 = vec![0.0; n];
    let mut t12 = vec![0.0; n];
    let mut t22 = vec![0.0; n];
    for i in 0..n {
        let (px, py) = (fx.values[i], fy.values[i]);
        let (ax, ay) = (ux.values[i], uy.values[i]);
        t11[i] = fxx.values[i] - ax * px + ay * py;
        t12[i] = fxy.values[i] - ay * px - ax * py;
        t22[i] = fyy.values[i] + ax * px - ay * py;
    }
    Ok(SymTensor2Field { chart: f.chart, t11, t12, t22 })
}

/// Gauss curvature K = -e^{-2u} Δ₀ u.
pub fn gauss_curvature(m: &ConformalMetric) -> ScalarField {
    let lap_u = m.uc.lap_flat();
    lap_u.zip(&m.uc, |l, u| -l * (-2.0 * u).exp())
}

/// Scalar curvature R = 2K.
pub fn scalar_curvature(m: &ConformalMetric) -> ScalarField {
    gauss_curvature(m).map(|k| 2.0 * k)
}

/// Ricci tensor Rc = K g.
pub fn ricci(m: &ConformalMetric) -> SymTensor2Field {
    let k = gauss_curvature(m);
    let n = m.chart().len();
    let mut t11 = vec![0.0; n];
    let mut t22 = vec![0.0; n];
    for i in 0..n {
        let kg = k.values[i] * (2.0 * m.uc.values[i]).exp();
        t11[i] = kg;
        t22[i] = kg;
    }
    SymTensor2Field { chart: *m.chart(), t11, t12: vec![0.0; n], t22 }
}

/// Covariant divergence of a symmetric 2-tensor, returned as a covector:
/// Div(t)_k = g^{ij} ∇_i t_jk.
pub fn divergence_sym(m: &ConformalMetric, t: &SymTensor2Field) -> Result<VectorField> {
    m.chart().same(&t.chart)?;
    let c = *m.chart();
    let t11 = ScalarField { chart: c, values: t.t11.clone() };
    let t12 = ScalarField { chart: c, values: t.t12.clone() };
    let t22 = ScalarField { chart: c, values: t.t22.clone() };
    let d_t11_x = t11.dx();
    let d_t12_y = t12.dy();
    let d_t12_x = t12.dx();
    let d_t22_y = t22.dy();
    let ux = m.uc.dx();
    let uy = m.uc.dy();
    let n = c.len();
    let mut vx = vec![0.0; n];
    let mut vy = vec![0.0; n];
    for i in 0..n {
        let iw = (-2.0 * m.uc.values[i]).exp();
        let tr = t.t11[i] + t.t22[i];
        vx[i] = iw * (d_t11_x.values[i] + d_t12_y.values[i] - ux.values[i] * tr);
        vy[i] = iw * (d_t12_x.values[i] + d_t22_y.values[i] - uy.values[i] * tr);
    }
    Ok(VectorField { chart: c, vx, vy })
}

/// ∫ f dμ = Σ f e^{2u} hx hy. Exact for constants times volume.
pub fn integrate(m: &ConformalMetric, f: &ScalarField) -> Result<f64> {
    m.chart().same(&f.chart)?;
    let cell = m.chart().hx() * m.chart().hy();
    let mut acc = 0.0;
    for i in 0..f.values.len() {
        acc += f.values[i] * (2.0 * m.uc.values[i]).exp();
    }
    Ok(acc * cell)
}

/// Total volume ∫ dμ.
pub fn volume(m: &ConformalMetric) -> f64 {
    let cell = m.chart().hx() * m.chart().hy();
    m.uc.values.iter().map(|&u| (2.0 * u).exp()).sum::<f64>() * cell
}

/// ∫ K dμ; zero on the torus (Gauss–Bonnet), exactly so in this discretization.
pub fn gauss_bonnet_defect(m: &ConformalMetric) -> f64 {
    integrate(m, &gauss_curvature(m)).expect("same chart")
}

/// Pointwise metric inner product of covariant vectors: e^{-2u}(X·Y).
pub fn vector_inner(m: &ConformalMetric, a: &VectorField, b: &VectorField) -> Result<ScalarField> {
    m.chart().same(&a.chart)?;
    m.chart().same(&b.chart)?;
    let mut out = ScalarField::zeros(*m.chart());
    for i in 0..out.values.len() {
        out.values[i] =
            (-2.0 * m.uc.values[i]).exp() * (a.vx[i] * b.vx[i] + a.vy[i] * b.vy[i]);
    }
    Ok(out)
}

/// |V|²_g = e^{-2u}(V₁² + V₂²) for covariant components.
pub fn vector_norm_sq(m: &ConformalMetric, v: &VectorField) -> Result<ScalarField> {
    vector_inner(m, v, v)
}

/// T(V,V) with indices raised: e^{-4u}(T11 V₁² + 2 T12 V₁V₂ + T22 V₂²).
pub fn tensor_apply(m: &ConformalMetric, t: &SymTensor2Field, v: &VectorField) -> Result<ScalarField> {
    m.chart().same(&t.chart)?;
    m.chart().same(&v.chart)?;
    let mut out = ScalarField::zeros(*m.chart());
    for i in 0..out.values.len() {
        let iw = (-2.0 * m.uc.values[i]).exp();
        out.values[i] = iw * iw
            * (t.t11[i] * v.vx[i] * v.vx[i]
                + 2.0 * t.t12[i] * v.vx[i] * v.vy[i]
                + t.t22[i] * v.vy[i] * v.vy[i]);
    }
    Ok(out)
}

/// |T|²_g = g^{ik}g^{jl} T_ij T_kl = e^{-4u}(T11² + 2 T12² + T22²).
pub fn tensor_norm_sq(m: &ConformalMetric, t: &SymTensor2Field) -> Result<ScalarField> {
    m.chart().same(&t.chart)?;
    let mut out = ScalarField::zeros(*m.chart());
    for i in 0..out.values.len() {
        let iw = (-2.0 * m.uc.values[i]).exp();
        out.values[i] = iw * iw
            * (t.t11[i] * t.t11[i] + 2.0 * t.t12[i] * t.t12[i] + t.t22[i] * t.t22[i]);
    }
    Ok(out)
}

/// trace_g T = g^{ij} T_ij = e^{-2u}(T11 + T22).
pub fn tensor_trace(m: &ConformalMetric, t: &SymTensor2Field) -> Result<ScalarField> {
    m.chart().same(&t.chart)?;
    let mut out = ScalarField::zeros(*m.chart());
    for i in 0..out.values.len() {
        out.values[i] = (-2.0 * m.uc.values[i]).exp() * (t.t11[i] + t.t22[i]);
    }
    Ok(out)
}

/// Relative eigenvalues of a symmetric tensor with respect to g, i.e. the
/// eigenvalues of e^{-2u}·T. Returns (λ_min, λ_max) fields.
pub fn relative_eigenvalues(m: &ConformalMetric, t: &SymTensor2Field) -> Result<(ScalarField, ScalarField)> {
    m.chart().same(&t.chart)?;
    let mut lo = ScalarField::zeros(*m.chart());
    let mut hi = ScalarField::zeros(*m.chart());
    for i in 0..lo.values.len() {
        let iw = (-2.0 * m.uc.values[i]).exp();
        let a = iw * t.t11[i];
        let b = iw * t.t12[i];
        let d = iw * t.t22[i];
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        lo.values[i] = mean - disc;
        hi.values[i] = mean + disc;
    }
    Ok((lo, hi))
}

/// Residual of the Laplacian evolution identity along a trajectory:
/// the centered time difference of Δ_{g(t)} f against
/// 2⟨α,∇∇f⟩ + ⟨2Div(α) - ∇S, ∇f⟩, in sup norm, for a fixed f.
pub fn check_laplacian_evolution(
    traj: &FlowTrajectory,
    f: &ScalarField,
    t: f64,
) -> Result<f64> {
    let k = traj.stored_index_interior(t)?;
    let (tm, t0, tp) = (traj.times()[k - 1], traj.times()[k], traj.times()[k + 1]);
    let m_prev = traj.metric_at_index(k - 1);
    let m_next = traj.metric_at_index(k + 1);
    let m = traj.metric_at_index(k);
    m.chart().same(&f.chart)?;

    let lap_prev = laplace_beltrami(&m_prev, f)?;
    let lap_next = laplace_beltrami(&m_next, f)?;
    // second-order derivative on a possibly non-uniform stored grid
    let a = tp - t0;
    let b = t0 - tm;
    let denom = a * b * (a + b);
    let lap_now = laplace_beltrami(&m, f)?;
    let mut lhs = ScalarField::zeros(f.chart);
    for i in 0..lhs.values.len() {
        lhs.values[i] = (b * b * lap_next.values[i] + (a * a - b * b) * lap_now.values[i]
            - a * a * lap_prev.values[i])
            / denom;
    }

    let alpha = traj.alpha_at_index(k)?;
    let hess = hessian(&m, f)?;
    // ⟨α, ∇∇f⟩ = g^{ik}g^{jl} α_ij (∇∇f)_kl
    let mut rhs = ScalarField::zeros(f.chart);
    for i in 0..rhs.values.len() {
        let iw = (-2.0 * m.uc.values[i]).exp();
        rhs.values[i] = 2.0
            * iw
            * iw
            * (alpha.alpha.t11[i] * hess.t11[i]
                + 2.0 * alpha.alpha.t12[i] * hess.t12[i]
                + alpha.alpha.t22[i] * hess.t22[i]);
    }
    let div_a = divergence_sym(&m, &alpha.alpha)?;
    let grad_s = gradient(&m, &alpha.trace_s)?;
    let grad_f = gradient(&m, f)?;
    let mut drift = VectorField::zeros(f.chart);
    for i in 0..drift.vx.len() {
        drift.vx[i] = 2.0 * div_a.vx[i] - grad_s.vx[i];
        drift.vy[i] = 2.0 * div_a.vy[i] - grad_s.vy[i];
    }
    let dot = vector_inner(&m, &drift, &grad_f)?;
    let mut residual = 0.0f64;
    for i in 0..lhs.values.len() {
        residual = residual.max((lhs.values[i] - rhs.values[i] - dot.values[i]).abs());
    }
    Ok(residual)
}

/// Dijkstra distance from a base grid point over the 8-neighbor graph with
/// metric edge lengths (trapezoid of e^u along each edge). First-order
/// accurate; used only where the spec allows trend-level distance.
pub fn metric_distance_field(m: &ConformalMetric, base: usize) -> ScalarField {
    use std::cmp::Ordering;
    use std::collections::BinaryHeap;

    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            // min-heap on distance
            other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal)
        }
    }

    let c = *m.chart();
    let mut dist = vec![f64::INFINITY; c.len()];
    dist[base] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry(0.0, base));
    let eu: Vec<f64> = m.uc.values.iter().map(|&u| u.exp()).collect();
    let neigh: [(isize, isize); 8] =
        [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    while let Some(Entry(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let ix = (i % c.nx) as isize;
        let iy = (i / c.nx) as isize;
        for (ox, oy) in neigh {
            let j = c.wrap(ix + ox, iy + oy);
            let step = ((ox as f64 * c.hx()).powi(2) + (oy as f64 * c.hy()).powi(2)).sqrt();
            let w = 0.5 * (eu[i] + eu[j]) * step;
            let nd = d + w;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Entry(nd, j));
            }
        }
    }
    ScalarField { chart: c, values: dist }
}

/// Exact flat-torus distance from a base grid point (minimum over images).
pub fn flat_distance_field(chart: &GridChart, base: usize) -> ScalarField {
    let (bx, by) = chart.point(base);
    ScalarField::from_fn(*chart, |x, y| {
        let (dx, dy) = chart.min_image(bx, by, x, y);
        (dx * dx + dy * dy).sqrt()
    })
}

/// Length of the straight chart segment from a to b under the metric
/// (composite trapezoid of e^u). An upper bound for the true distance.
pub fn line_integral_length(m: &ConformalMetric, a: (f64, f64), b: (f64, f64), segments: usize) -> f64 {
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    let flat_len = (dx * dx + dy * dy).sqrt();
    if flat_len == 0.0 {
        return 0.0;
    }
    let n = segments.max(2);
    let mut acc = 0.0;
    for s in 0..=n {
        let t = s as f64 / n as f64;
        let w = if s == 0 || s == n { 0.5 } else { 1.0 };
        let x = a.0 + t * dx;
        let y = a.1 + t * dy;
        acc += w * m.uc.interp(x, y).exp();
    }
    acc * flat_len / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn chart64() -> GridChart {
        GridChart::new(64, 64, 1.0, 1.0).unwrap()
    }

    #[test]
    fn flat_laplacian_eigenfunction() {
        let c = chart64();
        let m = ConformalMetric::flat(c);
        let k = 2.0 * PI / c.lx;
        let f = ScalarField::from_fn(c, |x, _| (k * x).sin());
        let lap = laplace_beltrami(&m, &f).unwrap();
        // discrete eigenvalue of the 3-point stencil: -(2-2cos(kh))/h²
        let h = c.hx();
        let lam = -(2.0 - 2.0 * (k * h).cos()) / (h * h);
        for i in 0..f.values.len() {
            assert!((lap.values[i] - lam * f.values[i]).abs() < 1e-10);
        }
        // and close to the continuum eigenvalue at O(h²)
        assert!((lam + k * k).abs() < k * k * (k * h) * (k * h) / 12.0 * 1.1);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let c = chart64();
        let m = ConformalMetric::new(ScalarField::from_fn(c, |x, y| {
            0.1 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos()
        }))
        .unwrap();
        let f = ScalarField::constant(c, 3.7);
        let lap = laplace_beltrami(&m, &f).unwrap();
        assert!(lap.max_abs() < 1e-12);
    }

    #[test]
    fn constant_conformal_scaling() {
        let c = chart64();
        let m0 = ConformalMetric::flat(c);
        let cval = 0.37;
        let m = ConformalMetric::new(ScalarField::constant(c, cval)).unwrap();
        let f = ScalarField::from_fn(c, |x, y| (2.0 * PI * x).sin() + (4.0 * PI * y).cos());
        let l0 = laplace_beltrami(&m0, &f).unwrap();
        let l = laplace_beltrami(&m, &f).unwrap();
        let s = (-2.0 * cval).exp();
        for i in 0..f.values.len() {
            assert!((l.values[i] - s * l0.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_integrates_to_zero() {
        let c = chart64();
        let m = ConformalMetric::new(ScalarField::from_fn(c, |x, y| {
            0.2 * (2.0 * PI * x).cos() + 0.1 * (2.0 * PI * y).sin()
        }))
        .unwrap();
        let f = ScalarField::from_fn(c, |x, y| (2.0 * PI * x).sin() * (6.0 * PI * y).cos() + x.sin());
        let lap = laplace_beltrami(&m, &f).unwrap();
        let total = integrate(&m, &lap).unwrap();
        assert!(total.abs() < 1e-10, "total = {total:e}");
    }

    #[test]
    fn grad_norm_examples() {
        let c = chart64();
        // f = x away from the seam: |∇f|² = 1
        let m = ConformalMetric::flat(c);
        let f = ScalarField::from_fn(c, |x, _| x);
        let g = grad_norm_sq(&m, &f).unwrap();
        // interior column, away from the wrap discontinuity
        assert!((g.at(20, 7) - 1.0).abs() < 1e-12);
        // constants
        let g0 = grad_norm_sq(&m, &ScalarField::constant(c, 2.0)).unwrap();
        assert!(g0.max_abs() < 1e-14);
        // conformal scaling with an analytic formula
        let cval = 0.25;
        let mc = ConformalMetric::new(ScalarField::constant(c, cval)).unwrap();
        let k = 2.0 * PI / c.lx;
        let fs = ScalarField::from_fn(c, |x, _| (k * x).sin());
        let gn = grad_norm_sq(&mc, &fs).unwrap();
        let h = c.hx();
        let tol = (-2.0 * cval).exp() * k * k * ((k * h).powi(2)) * 0.7;
        for ix in 0..c.nx {
            let x = c.x(ix);
            let exact = (-2.0 * cval).exp() * k * k * (k * x).cos().powi(2);
            assert!((gn.at(ix, 5) - exact).abs() < tol);
        }
    }

    #[test]
    fn hessian_flat_and_trace_consistency() {
        let c = chart64();
        let m = ConformalMetric::flat(c);
        let f = ScalarField::from_fn(c, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let h = hessian(&m, &f).unwrap();
        let dxx = f.dxx();
        for i in 0..f.values.len() {
            assert!((h.t11[i] - dxx.values[i]).abs() < 1e-12);
        }
        // zero tensor for constants
        let hz = hessian(&m, &ScalarField::constant(c, 1.0)).unwrap();
        assert!(hz.max_abs() < 1e-14);

        // trace_g(hessian) vs Δ_g f on a curved metric: the Christoffel
        // contributions to the trace cancel term-by-term, so agreement is
        // at rounding level (stronger than the O(h²) requirement).
        for n in [32usize, 64, 128] {
            let cn = GridChart::new(n, n, 1.0, 1.0).unwrap();
            let mn = ConformalMetric::new(ScalarField::from_fn(cn, |x, y| {
                0.15 * (2.0 * PI * x).sin() * (4.0 * PI * y).cos()
            }))
            .unwrap();
            let fnn = ScalarField::from_fn(cn, |x, y| (4.0 * PI * x).cos() + (2.0 * PI * y).sin());
            let hn = hessian(&mn, &fnn).unwrap();
            let tr = tensor_trace(&mn, &hn).unwrap();
            let lap = laplace_beltrami(&mn, &fnn).unwrap();
            let scale = lap.max_abs().max(1.0);
            let err = tr
                .values
                .iter()
                .zip(&lap.values)
                .fold(0.0f64, |mx, (&a, &b)| mx.max((a - b).abs()));
            assert!(err < 1e-10 * scale, "n={n}: err={err:e}");
        }
    }

    #[test]
    fn curvature_analytic_and_scaling() {
        let c = chart64();
        let m0 = ConformalMetric::flat(c);
        assert!(gauss_curvature(&m0).max_abs() < 1e-14);

        let eps = 0.1;
        let k = 2.0 * PI / c.lx;
        let m = ConformalMetric::new(ScalarField::from_fn(c, |x, _| eps * (k * x).sin())).unwrap();
        let kk = gauss_curvature(&m);
        let h = c.hx();
        for ix in 0..c.nx {
            let x = c.x(ix);
            let u = eps * (k * x).sin();
            let exact = (-2.0f64 * u).exp() * k * k * eps * (k * x).sin();
            let tol = eps * k * k * (k * h).powi(2) / 6.0;
            assert!((kk.at(ix, 3) - exact).abs() < tol);
        }

        // metric scaling: R -> R/c under g -> c g
        let r1 = scalar_curvature(&m);
        let ms = m.rescaled(4.0);
        let r4 = scalar_curvature(&ms);
        for i in 0..r1.values.len() {
            assert!((r4.values[i] - r1.values[i] / 4.0).abs() < 1e-12 * (1.0 + r1.values[i].abs()));
        }
        // Gauss–Bonnet on the scaled metric too
        assert!(gauss_bonnet_defect(&ms).abs() < 1e-10);
    }

    #[test]
    fn divergence_examples_and_bianchi() {
        let c = chart64();
        let m = ConformalMetric::flat(c);
        // zero tensor
        let z = SymTensor2Field::zeros(c);
        let dv = divergence_sym(&m, &z).unwrap();
        assert!(dv.vx.iter().chain(&dv.vy).all(|&v| v == 0.0));

        // flat identity: Div(f δ) = ∇f
        let f = ScalarField::from_fn(c, |x, y| (2.0 * PI * x).sin() + (2.0 * PI * y).cos());
        let mut t = SymTensor2Field::zeros(c);
        t.t11.copy_from_slice(&f.values);
        t.t22.copy_from_slice(&f.values);
        let dv = divergence_sym(&m, &t).unwrap();
        let gf = gradient(&m, &f).unwrap();
        for i in 0..f.values.len() {
            assert!((dv.vx[i] - gf.vx[i]).abs() < 1e-12);
            assert!((dv.vy[i] - gf.vy[i]).abs() < 1e-12);
        }

        // contracted Bianchi: Div(Rc) = ∇R / 2, refining
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let cn = GridChart::new(n, n, 1.0, 1.0).unwrap();
            let mn = ConformalMetric::new(ScalarField::from_fn(cn, |x, y| {
                0.12 * (2.0 * PI * x).sin() * (2.0 * PI * y).sin() + 0.05 * (4.0 * PI * y).cos()
            }))
            .unwrap();
            let rc = ricci(&mn);
            let dv = divergence_sym(&mn, &rc).unwrap();
            let r = scalar_curvature(&mn);
            let gr = gradient(&mn, &r).unwrap();
            let mut err = 0.0f64;
            for i in 0..rc.t11.len() {
                err = err.max((dv.vx[i] - 0.5 * gr.vx[i]).abs());
                err = err.max((dv.vy[i] - 0.5 * gr.vy[i]).abs());
            }
            errs.push(err);
        }
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(order1 > 1.8 && order2 > 1.8, "orders {order1:.2} {order2:.2}");
    }

    #[test]
    fn integrate_examples() {
        let c = chart64();
        let m = ConformalMetric::flat(c);
        assert!((integrate(&m, &ScalarField::constant(c, 1.0)).unwrap() - 1.0).abs() < 1e-14);
        let s = ScalarField::from_fn(c, |x, _| (2.0 * PI * x).sin());
        assert!(integrate(&m, &s).unwrap().abs() < 1e-13);
        let mc = ConformalMetric::new(ScalarField::constant(c, 0.3)).unwrap();
        let expect = (0.6f64).exp() * c.lx * c.ly;
        assert!((integrate(&mc, &ScalarField::constant(c, 1.0)).unwrap() - expect).abs() < 1e-12);
        // volume scaling under g -> c g
        assert!((volume(&mc.rescaled(3.0)) - 3.0 * volume(&mc)).abs() < 1e-12 * volume(&mc));
    }

    #[test]
    fn integration_by_parts_exact() {
        let c = chart64();
        let m = ConformalMetric::new(ScalarField::from_fn(c, |x, y| {
            0.2 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin()
        }))
        .unwrap();
        let f = ScalarField::from_fn(c, |x, y| (4.0 * PI * x).sin() + (2.0 * PI * y).cos());
        let w = ScalarField::from_fn(c, |x, y| (2.0 * PI * x).cos() * (6.0 * PI * y).sin());
        let lhs = integrate(&m, &laplace_beltrami(&m, &w).unwrap().zip(&f, |l, fv| l * fv)).unwrap();
        let rhs = integrate(&m, &grad_inner(&m, &f, &w).unwrap()).unwrap();
        let scale = 1.0 + lhs.abs().max(rhs.abs());
        assert!((lhs + rhs).abs() < 1e-8 * scale, "defect = {:e}", (lhs + rhs).abs());
    }

    #[test]
    fn degenerate_metric_rejected() {
        let c = chart64();
        let uc = ScalarField::constant(c, -20.0);
        assert!(matches!(
            ConformalMetric::new(uc),
            Err(FlowError::DegenerateMetric { .. })
        ));
    }

    #[test]
    fn chart_mismatch_errors() {
        let c = chart64();
        let c2 = GridChart::new(32, 32, 1.0, 1.0).unwrap();
        let m = ConformalMetric::flat(c);
        let f = ScalarField::zeros(c2);
        assert!(matches!(laplace_beltrami(&m, &f), Err(FlowError::ChartMismatch(_))));
        assert!(matches!(gradient(&m, &f), Err(FlowError::ChartMismatch(_))));
    }

    #[test]
    fn relative_eigenvalues_of_metric_are_one() {
        let c = chart64();
        let m = ConformalMetric::new(ScalarField::from_fn(c, |x, _| 0.2 * (2.0 * PI * x).sin()))
            .unwrap();
        let g = m.as_tensor();
        let (lo, hi) = relative_eigenvalues(&m, &g).unwrap();
        for i in 0..lo.values.len() {
            assert!((lo.values[i] - 1.0).abs() < 1e-12);
            assert!((hi.values[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dijkstra_close_to_flat_distance() {
        let c = GridChart::new(32, 32, 1.0, 1.0).unwrap();
        let m = ConformalMetric::flat(c);
        let base = c.idx(0, 0);
        let d = metric_distance_field(&m, base);
        let exact = flat_distance_field(&c, base);
        // 8-neighbor graph distance overestimates by at most sec(pi/8)
        let factor = 1.0 / (std::f64::consts::PI / 8.0).cos();
        for i in 0..d.values.len() {
            assert!(d.values[i] + 1e-12 >= exact.values[i]);
            assert!(d.values[i] <= exact.values[i] * factor + 1e-9);
        }
    }
}
