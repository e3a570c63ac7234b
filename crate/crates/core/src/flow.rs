//! Forward integration of ∂g/∂t = -2α in the conformal class.
//!
//! In 2D the conformal part of α is (S/2)g, so the metric evolution reduces
//! to ∂u/∂t = -S/2 for the conformal factor. Ricci and static α are exactly
//! conformal (Rc = Kg); for extended Ricci and general Custom tensors the
//! engine evolves only the conformal part when `conformal_project` is set
//! and refuses non-conformal α otherwise. D_α is always evaluated with the
//! full tensor. The aux field of the extended flow obeys ∂φ/∂t = Δ_g φ.
//!
//! Time stepping is the classical 4-stage explicit scheme with a diffusion
//! CFL bound dt ≤ safety · h² e^{2 min u} / 4 (tightened by 3/4 on Order4
//! charts and by the reaction scale 1/(1+max|S|)).

use crate::alpha::{make_alpha, AlphaModel, AlphaSnapshot, CustomSchedule};
use crate::error::{FlowError, Result};
use crate::geometry::{self, grad_norm_sq, laplace_beltrami, ConformalMetric};
use crate::grid::{GridChart, ScalarField, Stencil};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DtPolicy {
    Fixed(f64),
    CflAdaptive { safety: f64 },
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy::CflAdaptive { safety: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interp {
    Linear,
    Cubic,
}

impl Default for Interp {
    fn default() -> Self {
        Interp::Linear
    }
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub t_final: f64,
    pub dt_policy: DtPolicy,
    /// Store every k-th step (1 = store all).
    pub store_stride: usize,
    /// If set, store on a uniform time grid with this many intervals instead.
    pub store_count: Option<usize>,
    pub interp: Interp,
    pub conformal_project: bool,
}

impl FlowConfig {
    pub fn new(t_final: f64) -> Self {
        FlowConfig {
            t_final,
            dt_policy: DtPolicy::default(),
            store_stride: 1,
            store_count: None,
            interp: Interp::default(),
            conformal_project: false,
        }
    }

    pub fn stored(mut self, count: usize) -> Self {
        self.store_count = Some(count);
        self
    }

    pub fn projected(mut self) -> Self {
        self.conformal_project = true;
        self
    }
}

/// One stored time slice: the conformal factor and optional aux field.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub uc: ScalarField,
    pub phi: Option<ScalarField>,
}

/// Curvature and trace bounds measured over a trajectory:
/// Rc ≥ -k1 g, α ≥ -k2 g, |∇S|² ≤ k3, |S| ≤ k4, plus α ≤ alpha_upper g
/// (the two-sided α bound is needed by the reduced-distance sandwich).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvatureBounds {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub alpha_upper: f64,
}

/// Time-ordered snapshots of the flow; everything downstream (backward
/// solves, all checks) reads from this. Immutable once built.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    model: AlphaModel,
    chart: GridChart,
    times: Vec<f64>,
    snaps: Vec<Snapshot>,
    t_final: f64,
    interp: Interp,
    conformal_project: bool,
    /// Smallest integrator step taken (representative of the CFL limit).
    pub dt_step: f64,
}

fn stencil_cfl_factor(s: Stencil) -> f64 {
    match s {
        Stencil::Order2 => 1.0,
        Stencil::Order4 => 0.75,
    }
}

/// Stable step on the current metric. The h² diffusion bound applies only
/// when the right-hand side actually contains a Laplacian of the state;
/// Custom tensor schedules evolve u by a pointwise ODE.
fn stable_dt(chart: &GridChart, uc: &ScalarField, s_max: f64, safety: f64, diffusive: bool) -> f64 {
    let reaction = 1.0 / (1.0 + s_max.abs());
    let bound = if diffusive {
        let h = chart.hx().min(chart.hy());
        let diffusion = h * h * (2.0 * uc.min()).exp() / 4.0 * stencil_cfl_factor(chart.stencil);
        diffusion.min(reaction)
    } else {
        reaction
    };
    safety * bound
}

struct State {
    uc: Vec<f64>,
    phi: Option<Vec<f64>>,
}

impl State {
    fn saxpy(&self, a: f64, d: &Deriv) -> State {
        let mut uc = self.uc.clone();
        for (u, du) in uc.iter_mut().zip(&d.du) {
            *u += a * du;
        }
        let phi = match (&self.phi, &d.dphi) {
            (Some(p), Some(dp)) => {
                let mut p = p.clone();
                for (v, dv) in p.iter_mut().zip(dp) {
                    *v += a * dv;
                }
                Some(p)
            }
            (Some(p), None) => Some(p.clone()),
            _ => None,
        };
        State { uc, phi }
    }
}

struct Deriv {
    du: Vec<f64>,
    dphi: Option<Vec<f64>>,
}

fn conformality_defect(alpha: &crate::grid::SymTensor2Field) -> f64 {
    let mut defect = 0.0f64;
    for i in 0..alpha.t11.len() {
        defect = defect.max((alpha.t11[i] - alpha.t22[i]).abs());
        defect = defect.max(2.0 * alpha.t12[i].abs());
    }
    defect
}

fn eval_rhs(
    model: &AlphaModel,
    chart: GridChart,
    state: &State,
    t: f64,
    conformal_project: bool,
) -> Result<(Deriv, f64)> {
    let uc = ScalarField { chart, values: state.uc.clone() };
    let m = ConformalMetric { uc };
    let phi = state.phi.as_ref().map(|p| ScalarField { chart, values: p.clone() });
    let snap = make_alpha(model, &m, phi.as_ref(), t)?;
    if !conformal_project {
        let defect = conformality_defect(&snap.alpha);
        let scale = snap.alpha.max_abs().max(1e-30);
        if defect > 1e-12 * scale {
            return Err(FlowError::Model(format!(
                "α has a trace-free part (defect {defect:.3e}); enable conformal_project to evolve its conformal part"
            )));
        }
    }
    let s_max = snap.trace_s.max_abs();
    let du: Vec<f64> = snap.trace_s.values.iter().map(|&s| -0.5 * s).collect();
    let dphi = match &phi {
        Some(p) => Some(laplace_beltrami(&m, p)?.values),
        None => None,
    };
    Ok((Deriv { du, dphi }, s_max))
}

/// Integrate the flow from g₀ (and optional φ₀) to T, storing snapshots.
pub fn evolve(
    model: &AlphaModel,
    g0: &ConformalMetric,
    aux0: Option<&ScalarField>,
    cfg: &FlowConfig,
) -> Result<FlowTrajectory> {
    if !(cfg.t_final > 0.0) {
        return Err(FlowError::Config(format!("t_final must be > 0, got {}", cfg.t_final)));
    }
    g0.check_nondegenerate(0.0)?;
    if model.needs_aux() && aux0.is_none() {
        return Err(FlowError::Model("model requires an aux field".into()));
    }
    let chart = *g0.chart();
    if let Some(phi) = aux0 {
        chart.same(&phi.chart)?;
    }

    let mut state = State { uc: g0.uc.values.clone(), phi: aux0.map(|p| p.values.clone()) };
    let mut t = 0.0f64;
    let t_final = cfg.t_final;

    // storage schedule
    let schedule: Option<Vec<f64>> = cfg.store_count.map(|n| {
        let n = n.max(2);
        (1..=n).map(|j| t_final * j as f64 / n as f64).collect()
    });
    let est_slices = cfg.store_count.unwrap_or(0) + 2;
    let fields = if state.phi.is_some() { 2 } else { 1 };
    log::info!(
        "evolve[{}]: {}x{} grid, T={}, ~{} stored slices (~{:.1} MiB)",
        model.tag(),
        chart.nx,
        chart.ny,
        t_final,
        est_slices,
        (est_slices * fields * chart.len() * 8) as f64 / (1024.0 * 1024.0)
    );

    let mut times = vec![0.0];
    let mut snaps = vec![Snapshot {
        uc: g0.uc.clone(),
        phi: aux0.cloned(),
    }];
    let mut next_target_idx = 0usize;
    let mut step_index = 0usize;
    let mut min_dt_used = f64::INFINITY;

    // initial reaction scale for the CFL bound
    let (_, mut s_max) = eval_rhs(model, chart, &state, t, cfg.conformal_project)?;

    let diffusive = matches!(model, AlphaModel::Ricci | AlphaModel::ExtendedRicci { .. });
    while t < t_final - 1e-15 * t_final {
        let uc_field = ScalarField { chart, values: state.uc.clone() };
        let limit = stable_dt(&chart, &uc_field, s_max, 1.0, diffusive);
        let mut dt = match cfg.dt_policy {
            DtPolicy::Fixed(dt) => {
                if dt > limit {
                    return Err(FlowError::CflViolation { time: t, dt, limit });
                }
                dt
            }
            DtPolicy::CflAdaptive { safety } => safety * limit,
        };

        // land exactly on the next scheduled store time / final time
        let target = match &schedule {
            Some(sched) if next_target_idx < sched.len() => sched[next_target_idx],
            _ => t_final,
        };
        let mut landing = false;
        if t + dt >= target - 1e-13 * t_final {
            dt = target - t;
            landing = true;
        }
        if dt <= 0.0 {
            return Err(FlowError::Model(format!("time step collapsed at t = {t:.6e}")));
        }

        // classical 4-stage step
        let (k1, s1) = eval_rhs(model, chart, &state, t, cfg.conformal_project)?;
        let st2 = state.saxpy(0.5 * dt, &k1);
        let (k2, s2) = eval_rhs(model, chart, &st2, t + 0.5 * dt, cfg.conformal_project)?;
        let st3 = state.saxpy(0.5 * dt, &k2);
        let (k3, s3) = eval_rhs(model, chart, &st3, t + 0.5 * dt, cfg.conformal_project)?;
        let st4 = state.saxpy(dt, &k3);
        let (k4, s4) = eval_rhs(model, chart, &st4, t + dt, cfg.conformal_project)?;
        s_max = s1.max(s2).max(s3).max(s4);

        for i in 0..state.uc.len() {
            state.uc[i] +=
                dt / 6.0 * (k1.du[i] + 2.0 * k2.du[i] + 2.0 * k3.du[i] + k4.du[i]);
        }
        if let Some(phi) = state.phi.as_mut() {
            let (d1, d2, d3, d4) = (
                k1.dphi.as_ref().unwrap(),
                k2.dphi.as_ref().unwrap(),
                k3.dphi.as_ref().unwrap(),
                k4.dphi.as_ref().unwrap(),
            );
            for i in 0..phi.len() {
                phi[i] += dt / 6.0 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i]);
            }
        }
        t += dt;
        if landing {
            t = target; // kill accumulated rounding at scheduled times
        }
        step_index += 1;
        min_dt_used = min_dt_used.min(dt);

        let uc_now = ScalarField { chart, values: state.uc.clone() };
        uc_now.ensure_finite("flow step")?;
        let m_now = ConformalMetric { uc: uc_now };
        m_now.check_nondegenerate(t)?;

        let store_by_stride = schedule.is_none()
            && (step_index % cfg.store_stride == 0 || t >= t_final - 1e-15 * t_final);
        let store_by_schedule = landing;
        if store_by_stride || store_by_schedule {
            times.push(t);
            snaps.push(Snapshot {
                uc: m_now.uc.clone(),
                phi: state.phi.as_ref().map(|p| ScalarField { chart, values: p.clone() }),
            });
            if store_by_schedule {
                next_target_idx += 1;
            }
        }
    }

    // guarantee the final slice is stored exactly once
    if (times.last().copied().unwrap_or(0.0) - t_final).abs() > 1e-12 * t_final {
        times.push(t);
        snaps.push(Snapshot {
            uc: ScalarField { chart, values: state.uc.clone() },
            phi: state.phi.as_ref().map(|p| ScalarField { chart, values: p.clone() }),
        });
    }

    Ok(FlowTrajectory {
        model: model.clone(),
        chart,
        times,
        snaps,
        t_final,
        interp: cfg.interp,
        conformal_project: cfg.conformal_project,
        dt_step: min_dt_used,
    })
}

impl FlowTrajectory {
    /// A static (α independent) trajectory with two stored slices; useful for
    /// running kernels on a fixed background loaded from a checkpoint.
    pub fn static_background(m: &ConformalMetric, t_final: f64) -> Result<FlowTrajectory> {
        let cfg = FlowConfig { store_count: Some(64), ..FlowConfig::new(t_final) };
        evolve(&AlphaModel::Static, m, None, &cfg)
    }

    pub fn model(&self) -> &AlphaModel {
        &self.model
    }

    pub fn chart(&self) -> &GridChart {
        &self.chart
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn conformal_project(&self) -> bool {
        self.conformal_project
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn n_slices(&self) -> usize {
        self.times.len()
    }

    pub fn snapshot(&self, k: usize) -> &Snapshot {
        &self.snaps[k]
    }

    pub fn metric_at_index(&self, k: usize) -> ConformalMetric {
        ConformalMetric { uc: self.snaps[k].uc.clone() }
    }

    pub fn aux_at_index(&self, k: usize) -> Option<ScalarField> {
        self.snaps[k].phi.clone()
    }

    pub fn alpha_at_index(&self, k: usize) -> Result<AlphaSnapshot> {
        let m = self.metric_at_index(k);
        make_alpha(&self.model, &m, self.snaps[k].phi.as_ref(), self.times[k])
    }

    /// Index of the stored time nearest to t.
    pub fn stored_index_nearest(&self, t: f64) -> Result<usize> {
        let t0 = self.times[0];
        let t1 = *self.times.last().unwrap();
        if t < t0 - 1e-12 || t > t1 + 1e-12 {
            return Err(FlowError::TimeOutOfRange { time: t, t0, t1 });
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, &tk) in self.times.iter().enumerate() {
            let d = (tk - t).abs();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        Ok(best)
    }

    /// Like `stored_index_nearest` but requires an interior index.
    pub fn stored_index_interior(&self, t: f64) -> Result<usize> {
        let k = self.stored_index_nearest(t)?;
        if k == 0 || k + 1 == self.times.len() {
            return Err(FlowError::EndpointTime(t));
        }
        Ok(k)
    }

    /// Local stored-grid spacing around index k.
    pub fn stored_spacing_at(&self, k: usize) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        if k == 0 {
            self.times[1] - self.times[0]
        } else if k + 1 >= self.times.len() {
            self.times[k] - self.times[k - 1]
        } else {
            0.5 * (self.times[k + 1] - self.times[k - 1])
        }
    }

    fn segment(&self, t: f64) -> Result<usize> {
        let t0 = self.times[0];
        let t1 = *self.times.last().unwrap();
        if t < t0 - 1e-12 * (1.0 + t1.abs()) || t > t1 + 1e-12 * (1.0 + t1.abs()) {
            return Err(FlowError::TimeOutOfRange { time: t, t0, t1 });
        }
        let k = self.times.partition_point(|&tk| tk <= t);
        Ok(k.saturating_sub(1).min(self.times.len() - 2))
    }

    fn interp_values(
        &self,
        t: f64,
        interp: Interp,
        pick: impl Fn(&Snapshot) -> &ScalarField,
    ) -> Result<Vec<f64>> {
        let k = self.segment(t)?;
        let (ta, tb) = (self.times[k], self.times[k + 1]);
        let w = if tb > ta { (t - ta) / (tb - ta) } else { 0.0 };
        let fa = &pick(&self.snaps[k]).values;
        let fb = &pick(&self.snaps[k + 1]).values;
        match interp {
            Interp::Linear => {
                Ok(fa.iter().zip(fb).map(|(&a, &b)| a + w * (b - a)).collect())
            }
            Interp::Cubic => {
                // Hermite with finite-difference tangents (one-sided at the ends)
                let dt = tb - ta;
                let ma: Vec<f64> = if k == 0 {
                    fa.iter().zip(fb).map(|(&a, &b)| (b - a) / dt).collect()
                } else {
                    let fp = &pick(&self.snaps[k - 1]).values;
                    let span = self.times[k + 1] - self.times[k - 1];
                    fb.iter().zip(fp).map(|(&b, &p)| (b - p) / span).collect()
                };
                let mb: Vec<f64> = if k + 2 >= self.times.len() {
                    fa.iter().zip(fb).map(|(&a, &b)| (b - a) / dt).collect()
                } else {
                    let fn_ = &pick(&self.snaps[k + 2]).values;
                    let span = self.times[k + 2] - self.times[k];
                    fn_.iter().zip(fa).map(|(&n, &a)| (n - a) / span).collect()
                };
                let h00 = 2.0 * w * w * w - 3.0 * w * w + 1.0;
                let h10 = w * w * w - 2.0 * w * w + w;
                let h01 = -2.0 * w * w * w + 3.0 * w * w;
                let h11 = w * w * w - w * w;
                Ok((0..fa.len())
                    .map(|i| {
                        h00 * fa[i] + h10 * dt * ma[i] + h01 * fb[i] + h11 * dt * mb[i]
                    })
                    .collect())
            }
        }
    }

    /// Metric (and aux field) at an arbitrary trajectory time with an
    /// explicit interpolation mode. The backward/forward solvers always use
    /// Cubic here: the S(û) mismatch of a linear interpolant is O(Δt²) of
    /// one sign within each segment and integrates to a mass drift far above
    /// tol_mass on curved runs.
    pub fn fields_at_with(
        &self,
        t: f64,
        interp: Interp,
    ) -> Result<(ConformalMetric, Option<ScalarField>)> {
        let uc = ScalarField { chart: self.chart, values: self.interp_values(t, interp, |s| &s.uc)? };
        let phi = if self.snaps[0].phi.is_some() {
            Some(ScalarField {
                chart: self.chart,
                values: self.interp_values(t, interp, |s| s.phi.as_ref().unwrap())?,
            })
        } else {
            None
        };
        Ok((ConformalMetric { uc }, phi))
    }

    /// Metric (and aux field) at an arbitrary time with the configured mode.
    pub fn fields_at(&self, t: f64) -> Result<(ConformalMetric, Option<ScalarField>)> {
        self.fields_at_with(t, self.interp)
    }

    pub fn metric_at(&self, t: f64) -> Result<ConformalMetric> {
        Ok(self.fields_at(t)?.0)
    }

    /// α snapshot at an arbitrary time (interpolated fields, schedule at t).
    pub fn alpha_at(&self, t: f64) -> Result<AlphaSnapshot> {
        let (m, phi) = self.fields_at(t)?;
        make_alpha(&self.model, &m, phi.as_ref(), t)
    }

    /// α snapshot at an arbitrary time with an explicit interpolation mode.
    pub fn alpha_at_with(&self, t: f64, interp: Interp) -> Result<AlphaSnapshot> {
        let (m, phi) = self.fields_at_with(t, interp)?;
        make_alpha(&self.model, &m, phi.as_ref(), t)
    }

    /// ∂S/∂t at stored index k: centered difference over the stored grid at
    /// interior indices, analytic at endpoints when the model provides one.
    pub fn dsdt_at_index(&self, k: usize) -> Result<ScalarField> {
        if k > 0 && k + 1 < self.times.len() {
            let sm = self.alpha_at_index(k - 1)?.trace_s;
            let s0 = self.alpha_at_index(k)?.trace_s;
            let sp = self.alpha_at_index(k + 1)?.trace_s;
            let a = self.times[k + 1] - self.times[k];
            let b = self.times[k] - self.times[k - 1];
            let denom = a * b * (a + b);
            let mut out = ScalarField::zeros(self.chart);
            for i in 0..out.values.len() {
                out.values[i] = (b * b * sp.values[i] + (a * a - b * b) * s0.values[i]
                    - a * a * sm.values[i])
                    / denom;
            }
            return Ok(out);
        }
        self.analytic_dsdt(k)
            .ok_or(FlowError::EndpointTime(self.times[k]))?
    }

    /// Analytic ∂S/∂t where the model admits one.
    fn analytic_dsdt(&self, k: usize) -> Option<Result<ScalarField>> {
        match &self.model {
            AlphaModel::Static => Some(Ok(ScalarField::zeros(self.chart))),
            AlphaModel::ExtendedRicci { a } => Some((|| {
                // From the trace evolution of the extended flow:
                // ∂S/∂t = ΔS + 2|α|² + 2a(Δφ)².
                let m = self.metric_at_index(k);
                let snap = self.alpha_at_index(k)?;
                let phi = self.aux_at_index(k).ok_or_else(|| {
                    FlowError::Model("extended Ricci trajectory lost its aux field".into())
                })?;
                let lap_s = laplace_beltrami(&m, &snap.trace_s)?;
                let a2 = geometry::tensor_norm_sq(&m, &snap.alpha)?;
                let lap_phi = laplace_beltrami(&m, &phi)?;
                let mut out = ScalarField::zeros(self.chart);
                for i in 0..out.values.len() {
                    out.values[i] = lap_s.values[i]
                        + 2.0 * a2.values[i]
                        + 2.0 * a * lap_phi.values[i] * lap_phi.values[i];
                }
                Ok(out)
            })()),
            AlphaModel::Custom(CustomSchedule::MetricMultiple(_)) => {
                // S = 2c is constant in space and time
                Some(Ok(ScalarField::zeros(self.chart)))
            }
            AlphaModel::Custom(CustomSchedule::FixedTensor(_)) => Some((|| {
                // S(t) = e^{-2u}tr(T) with u̇ = -S/2, hence ∂S/∂t = S².
                let s = self.alpha_at_index(k)?.trace_s;
                Ok(s.map(|v| v * v))
            })()),
            _ => None,
        }
    }

    /// Measured hypothesis constants over all stored slices.
    pub fn measure_bounds(&self) -> Result<CurvatureBounds> {
        let mut k1 = 0.0f64;
        let mut k2 = 0.0f64;
        let mut k3 = 0.0f64;
        let mut k4 = 0.0f64;
        let mut upper = 0.0f64;
        for k in 0..self.times.len() {
            let m = self.metric_at_index(k);
            let snap = self.alpha_at_index(k)?;
            let kg = geometry::gauss_curvature(&m);
            for &kv in &kg.values {
                k1 = k1.max(-kv);
            }
            let (lo, hi) = geometry::relative_eigenvalues(&m, &snap.alpha)?;
            for i in 0..lo.values.len() {
                k2 = k2.max(-lo.values[i]);
                upper = upper.max(hi.values[i]);
            }
            let gs = grad_norm_sq(&m, &snap.trace_s)?;
            k3 = k3.max(gs.max());
            k4 = k4.max(snap.trace_s.max_abs());
        }
        Ok(CurvatureBounds { k1: k1.max(0.0), k2: k2.max(0.0), k3, k4, alpha_upper: upper.max(0.0) })
    }

    /// ∫dμ at each stored time.
    pub fn volume_series(&self) -> Vec<f64> {
        (0..self.times.len())
            .map(|k| geometry::volume(&self.metric_at_index(k)))
            .collect()
    }

    /// Rebuild a trajectory object from raw parts (checkpoint loading).
    pub fn from_parts(
        model: AlphaModel,
        chart: GridChart,
        times: Vec<f64>,
        snaps: Vec<Snapshot>,
        interp: Interp,
        conformal_project: bool,
        dt_step: f64,
    ) -> Result<FlowTrajectory> {
        if times.len() != snaps.len() || times.len() < 2 {
            return Err(FlowError::Checkpoint(format!(
                "trajectory needs >= 2 aligned slices, got {} times / {} snaps",
                times.len(),
                snaps.len()
            )));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(FlowError::Checkpoint("times must be strictly increasing".into()));
        }
        let t_final = *times.last().unwrap();
        Ok(FlowTrajectory { model, chart, times, snaps, t_final, interp, conformal_project, dt_step })
    }
}
