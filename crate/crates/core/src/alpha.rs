//! Pluggable α-providers for the flow ∂g/∂t = -2α, their traces, and the
//! correction quantity
//!
//!   D_α(V) = ∂S/∂t - ΔS - 2|α|² + 2(Rc - α)(V,V) + ⟨4Div(α) - 2∇S, V⟩ ,
//!
//! whose nonnegativity is the hypothesis behind every monotonicity and
//! Harnack statement in this crate. The five addends are kept separately for
//! diagnostics; `value` is their pointwise sum by construction.

use crate::error::{FlowError, Result};
use crate::flow::FlowTrajectory;
use crate::geometry::{
    self, divergence_sym, gradient, laplace_beltrami, ricci, tensor_trace, vector_inner,
    ConformalMetric,
};
use crate::grid::{ScalarField, SymTensor2Field, VectorField};
use rand::Rng;

/// Time-indexed tensor schedule for the Custom model.
#[derive(Debug, Clone)]
pub enum CustomSchedule {
    /// α(t) = fixed tensor, components given in the flat chart.
    FixedTensor(SymTensor2Field),
    /// α(t) = c · g(t), proportional to the current metric.
    /// c < 0 is the negative control: D(0) = -2c²n < 0.
    MetricMultiple(f64),
    /// Piecewise-linear interpolation of tensors at increasing times.
    TensorSeries(Vec<(f64, SymTensor2Field)>),
}

impl CustomSchedule {
    pub fn tensor_at(&self, t: f64, m: &ConformalMetric) -> SymTensor2Field {
        match self {
            CustomSchedule::FixedTensor(tensor) => tensor.clone(),
            CustomSchedule::MetricMultiple(c) => m.as_tensor().scaled(*c),
            CustomSchedule::TensorSeries(series) => {
                if series.len() == 1 || t <= series[0].0 {
                    return series[0].1.clone();
                }
                let last = series.len() - 1;
                if t >= series[last].0 {
                    return series[last].1.clone();
                }
                let k = series.partition_point(|(tk, _)| *tk <= t) - 1;
                let (t0, ref a0) = series[k];
                let (t1, ref a1) = series[k + 1];
                let w = (t - t0) / (t1 - t0);
                let mut out = a0.scaled(1.0 - w);
                out.axpy(w, a1);
                out
            }
        }
    }
}

/// Which α drives the flow.
#[derive(Debug, Clone)]
pub enum AlphaModel {
    /// α = 0: static manifold. D(V) = 2 Rc(V,V).
    Static,
    /// α = Rc: Ricci flow. D ≡ 0.
    Ricci,
    /// α = Rc - a dφ⊗dφ with coupling a > 0 and aux field φ obeying
    /// ∂φ/∂t = Δφ. D(V) = 2a(Δφ - ⟨∇φ,V⟩)², a perfect square.
    ExtendedRicci { a: f64 },
    /// User-supplied tensor schedule.
    Custom(CustomSchedule),
}

impl AlphaModel {
    pub fn tag(&self) -> String {
        match self {
            AlphaModel::Static => "static".into(),
            AlphaModel::Ricci => "ricci".into(),
            AlphaModel::ExtendedRicci { a } => format!("extended-ricci(a={a})"),
            AlphaModel::Custom(CustomSchedule::FixedTensor(_)) => "custom(fixed-tensor)".into(),
            AlphaModel::Custom(CustomSchedule::MetricMultiple(c)) => {
                format!("custom(metric-multiple {c})")
            }
            AlphaModel::Custom(CustomSchedule::TensorSeries(s)) => {
                format!("custom(series n={})", s.len())
            }
        }
    }

    pub fn needs_aux(&self) -> bool {
        matches!(self, AlphaModel::ExtendedRicci { .. })
    }
}

/// α, its trace S = g^{ij}α_ij, and the optional aux field at one time slice.
#[derive(Debug, Clone)]
pub struct AlphaSnapshot {
    pub alpha: SymTensor2Field,
    /// Trace computed from the stored components, so the self-check
    /// trace_s = g^{ij}α_ij is exact by construction.
    pub trace_s: ScalarField,
    pub aux: Option<ScalarField>,
    pub model_tag: String,
}

/// Build the α snapshot for a model on a metric (and aux field φ) at time t.
pub fn make_alpha(
    model: &AlphaModel,
    m: &ConformalMetric,
    aux: Option<&ScalarField>,
    t: f64,
) -> Result<AlphaSnapshot> {
    let chart = *m.chart();
    let alpha = match model {
        AlphaModel::Static => SymTensor2Field::zeros(chart),
        AlphaModel::Ricci => ricci(m),
        AlphaModel::ExtendedRicci { a } => {
            if *a <= 0.0 {
                return Err(FlowError::Model(format!(
                    "extended Ricci flow requires coupling a > 0, got {a}"
                )));
            }
            let phi = aux.ok_or_else(|| {
                FlowError::Model("extended Ricci flow requires the aux field φ".into())
            })?;
            chart.same(&phi.chart)?;
            let px = phi.dx();
            let py = phi.dy();
            let mut t_ = ricci(m);
            for i in 0..t_.t11.len() {
                t_.t11[i] -= a * px.values[i] * px.values[i];
                t_.t12[i] -= a * px.values[i] * py.values[i];
                t_.t22[i] -= a * py.values[i] * py.values[i];
            }
            t_
        }
        AlphaModel::Custom(schedule) => {
            let t_ = schedule.tensor_at(t, m);
            chart.same(&t_.chart)?;
            t_
        }
    };
    let trace_s = tensor_trace(m, &alpha)?;
    Ok(AlphaSnapshot {
        alpha,
        trace_s,
        aux: aux.cloned(),
        model_tag: model.tag(),
    })
}

/// D_α(V) split into its five addends.
#[derive(Debug, Clone)]
pub struct DalphaEvaluation {
    /// Pointwise sum of `parts` (exact).
    pub value: ScalarField,
    /// [∂S/∂t, -ΔS, -2|α|², 2(Rc-α)(V,V), ⟨4Div(α)-2∇S, V⟩]
    pub parts: [ScalarField; 5],
    /// Largest addend magnitude; the natural scale for tolerances.
    pub scale: f64,
}

impl DalphaEvaluation {
    pub fn min(&self) -> f64 {
        self.value.min()
    }
    pub fn max_abs(&self) -> f64 {
        self.value.max_abs()
    }
}

/// Evaluate D_α(V) at a stored trajectory time by the generic formula.
///
/// ∂S/∂t uses a centered difference across the neighboring stored slices;
/// at an endpoint the model's analytic time derivative is used when it has
/// one, otherwise this errors.
pub fn eval_dalpha_generic(
    traj: &FlowTrajectory,
    t: f64,
    v: &VectorField,
) -> Result<DalphaEvaluation> {
    let k = traj.stored_index_nearest(t)?;
    let m = traj.metric_at_index(k);
    m.chart().same(&v.chart)?;
    let snap = traj.alpha_at_index(k)?;
    let dsdt = traj.dsdt_at_index(k)?;

    let lap_s = laplace_beltrami(&m, &snap.trace_s)?;
    let alpha_norm = geometry::tensor_norm_sq(&m, &snap.alpha)?;
    let rc = ricci(&m);
    let mut rc_minus_alpha = rc;
    rc_minus_alpha.axpy(-1.0, &snap.alpha);
    let quad = geometry::tensor_apply(&m, &rc_minus_alpha, v)?;
    let div_a = divergence_sym(&m, &snap.alpha)?;
    let grad_s = gradient(&m, &snap.trace_s)?;
    let mut drift = VectorField::zeros(*m.chart());
    for i in 0..drift.vx.len() {
        drift.vx[i] = 4.0 * div_a.vx[i] - 2.0 * grad_s.vx[i];
        drift.vy[i] = 4.0 * div_a.vy[i] - 2.0 * grad_s.vy[i];
    }
    let transport = vector_inner(&m, &drift, v)?;

    let chart = *m.chart();
    let parts = [
        dsdt,
        lap_s.map(|x| -x),
        alpha_norm.map(|x| -2.0 * x),
        quad.map(|x| 2.0 * x),
        transport,
    ];
    let mut value = ScalarField::zeros(chart);
    for i in 0..value.values.len() {
        value.values[i] = parts[0].values[i]
            + parts[1].values[i]
            + parts[2].values[i]
            + parts[3].values[i]
            + parts[4].values[i];
    }
    let scale = parts.iter().map(|p| p.max_abs()).fold(0.0f64, f64::max);
    Ok(DalphaEvaluation { value, parts, scale })
}

/// Closed form of D for the extended Ricci flow: 2a(Δφ - ⟨∇φ,V⟩)².
///
/// Cross-checked against `eval_dalpha_generic` before anything relies on it;
/// it is never treated as ground truth on its own.
pub fn dalpha_extended_closed_form(
    m: &ConformalMetric,
    phi: &ScalarField,
    a: f64,
    v: &VectorField,
) -> Result<ScalarField> {
    let lap_phi = laplace_beltrami(m, phi)?;
    let grad_phi = gradient(m, phi)?;
    let dot = vector_inner(m, &grad_phi, v)?;
    let mut out = ScalarField::zeros(*m.chart());
    for i in 0..out.values.len() {
        let d = lap_phi.values[i] - dot.values[i];
        out.values[i] = 2.0 * a * d * d;
    }
    Ok(out)
}

/// One row of the nonnegativity certificate.
#[derive(Debug, Clone)]
pub struct CertificateRow {
    pub label: String,
    pub min_d: f64,
    pub max_abs_d: f64,
}

/// Result of probing D_α(V) over a family of vector fields.
#[derive(Debug, Clone)]
pub struct DalphaCertificate {
    pub rows: Vec<CertificateRow>,
    pub min_d: f64,
    /// 10·(h² + Δt²)·(largest addend magnitude); failures below -tol_d
    /// indicate a genuinely sign-indefinite D rather than discretization.
    pub tol_d: f64,
    pub time: f64,
}

impl DalphaCertificate {
    pub fn nonnegative_within_tol(&self) -> bool {
        self.min_d >= -self.tol_d
    }
}

/// Probe D_α(V) at all grid points for V in {0, ±e₁, ±e₂, optional ∇h,
/// random unit fields}; for the extended Ricci model also the analytic
/// minimizer direction V* with ⟨∇φ,V*⟩ = Δφ.
pub fn dalpha_nonneg_certificate(
    traj: &FlowTrajectory,
    t: f64,
    grad_h: Option<&VectorField>,
    n_random: usize,
    rng: &mut impl Rng,
) -> Result<DalphaCertificate> {
    let k = traj.stored_index_nearest(t)?;
    let m = traj.metric_at_index(k);
    let chart = *m.chart();
    let eu: Vec<f64> = m.uc.values.iter().map(|&u| u.exp()).collect();

    let mut candidates: Vec<(String, VectorField)> = Vec::new();
    candidates.push(("zero".into(), VectorField::zeros(chart)));
    for (label, sx, sy) in [("+e1", 1.0, 0.0), ("-e1", -1.0, 0.0), ("+e2", 0.0, 1.0), ("-e2", 0.0, -1.0)] {
        // covariant components scaled to unit metric norm: |V|_g = 1
        let mut v = VectorField::zeros(chart);
        for i in 0..v.vx.len() {
            v.vx[i] = sx * eu[i];
            v.vy[i] = sy * eu[i];
        }
        candidates.push((label.into(), v));
    }
    if let Some(g) = grad_h {
        candidates.push(("grad_h".into(), g.clone()));
    }
    for r in 0..n_random {
        let mut v = VectorField::zeros(chart);
        for i in 0..v.vx.len() {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            v.vx[i] = theta.cos() * eu[i];
            v.vy[i] = theta.sin() * eu[i];
        }
        candidates.push((format!("random-unit-{r}"), v));
    }
    if let AlphaModel::ExtendedRicci { .. } = traj.model() {
        if let Some(phi) = traj.aux_at_index(k) {
            let lap_phi = laplace_beltrami(&m, &phi)?;
            let gp = gradient(&m, &phi)?;
            let gp_norm = geometry::vector_norm_sq(&m, &gp)?;
            let mut v = VectorField::zeros(chart);
            for i in 0..v.vx.len() {
                let denom = gp_norm.values[i].max(1e-12);
                let c = lap_phi.values[i] / denom;
                v.vx[i] = c * gp.vx[i];
                v.vy[i] = c * gp.vy[i];
            }
            candidates.push(("extended-ricci-minimizer".into(), v));
        }
    }

    let mut rows = Vec::new();
    let mut min_d = f64::INFINITY;
    let mut scale = 0.0f64;
    for (label, v) in candidates {
        let eval = eval_dalpha_generic(traj, t, &v)?;
        scale = scale.max(eval.scale);
        let row_min = eval.min();
        min_d = min_d.min(row_min);
        rows.push(CertificateRow { label, min_d: row_min, max_abs_d: eval.max_abs() });
    }
    let h = chart.h_max();
    let dt = traj.stored_spacing_at(k);
    let tol_d = 10.0 * (h * h + dt * dt) * scale.max(1e-30);
    Ok(DalphaCertificate { rows, min_d, tol_d, time: traj.times()[k] })
}
