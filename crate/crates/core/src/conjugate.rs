//! Conjugate heat equation along a flow trajectory, and the plain heat
//! equation run forward.
//!
//! With τ = T - t and the operator □* = -∂/∂t - Δ + S = ∂/∂τ - Δ + S, a
//! conjugate solution obeys ∂u/∂τ = Δ_{g(T-τ)} u - S u. Solutions are
//! integrated on their own CFL-limited substeps between the trajectory's
//! stored slices (metric and S interpolated for the stages) and recorded at
//! the stored times. The mass ∫ u dμ_{g(t)} is constant along the flow;
//! discretely the Laplacian term drops out of the mass budget exactly
//! because the conformal weights cancel, so the recorded drift measures the
//! time integrator alone.
//!
//! Kernels start from an area-normalized discrete delta. The first steps use
//! positivity-preserving Euler half-steps on the compact 5-point stencil (a
//! 4-stage step truncates at graph distance four per step and would leave
//! exact zeros in the far field); the solver switches to the 4-stage scheme
//! once the whole torus is strictly positive and at least `n_burn` substeps
//! have elapsed.

use crate::error::{FlowError, Result};
use crate::flow::FlowTrajectory;
use crate::geometry::{flat_distance_field, integrate, metric_distance_field, ConformalMetric};
use crate::grid::{GridChart, ScalarField, Stencil};
use std::sync::Arc;

pub const DIM: f64 = 2.0;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// CFL safety factor for substeps.
    pub safety: f64,
    /// Normalize the initial data to unit mass.
    pub normalize: bool,
    /// Minimum number of burn-in substeps for kernel initialization.
    pub n_burn: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { safety: 0.2, normalize: true, n_burn: 10 }
    }
}

/// A conjugate-heat solution sampled at the trajectory's stored times.
/// When `basepoint` is set this is a kernel based at (y, T).
#[derive(Debug, Clone)]
pub struct ConjugateSolution {
    pub traj: Arc<FlowTrajectory>,
    /// u at each stored trajectory time (aligned with `traj.times()`).
    pub fields: Vec<ScalarField>,
    /// ∫ u dμ at each stored time.
    pub mass: Vec<f64>,
    /// max over all substeps of |mass - mass₀| / mass₀.
    pub mass_drift: f64,
    /// Grid index of the delta basepoint, for kernels.
    pub basepoint: Option<usize>,
    /// Smallest stored index (counting down from T) at which u > 0 strictly;
    /// the τ = 0 slice of a kernel holds the delta itself.
    pub positivity_horizon: usize,
    /// First substep size near τ = 0 (resolution floor for probes).
    pub dt_first: f64,
}

pub type KernelSolution = ConjugateSolution;

/// A positive solution of the plain heat equation ∂Φ/∂t = ΔΦ, forward in t.
#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub traj: Arc<FlowTrajectory>,
    pub fields: Vec<ScalarField>,
    /// max Φ at each stored time (maximum-principle diagnostic).
    pub max_series: Vec<f64>,
}

impl ConjugateSolution {
    pub fn times(&self) -> &[f64] {
        self.traj.times()
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.traj.t_final() - self.traj.times()[k]
    }

    /// Stored index whose τ is nearest to the requested value.
    pub fn index_at_tau(&self, tau: f64) -> Result<usize> {
        self.traj.stored_index_nearest(self.traj.t_final() - tau)
    }

    /// h = -log u - (n/2) log(4πτ) at stored index k. Requires u > 0, τ > 0.
    pub fn h_at(&self, k: usize) -> Result<ScalarField> {
        let tau = self.tau(k);
        if tau <= 0.0 {
            return Err(FlowError::Precondition("h is undefined at τ = 0".into()));
        }
        let u = &self.fields[k];
        if u.min() <= 0.0 {
            return Err(FlowError::PositivityLoss { time: self.traj.times()[k], min_value: u.min() });
        }
        let c = 0.5 * DIM * (4.0 * std::f64::consts::PI * tau).ln();
        Ok(u.map(|v| -v.ln() - c))
    }

    pub fn metric_at_index(&self, k: usize) -> ConformalMetric {
        self.traj.metric_at_index(k)
    }

    /// Check u > 0 at every stored slice past the positivity horizon.
    pub fn validate_positivity(&self) -> Result<()> {
        for k in 0..self.fields.len() {
            let min = self.fields[k].min();
            let tau_zero_slice = k + 1 == self.fields.len() && self.basepoint.is_some();
            if k >= self.positivity_horizon && !tau_zero_slice {
                if min <= 0.0 {
                    return Err(FlowError::PositivityLoss {
                        time: self.traj.times()[k],
                        min_value: min,
                    });
                }
            } else if min < 0.0 {
                return Err(FlowError::PositivityLoss {
                    time: self.traj.times()[k],
                    min_value: min,
                });
            }
        }
        Ok(())
    }
}

/// Compact 5-point flat Laplacian regardless of the chart's stencil order
/// (used by the positivity-preserving burn-in).
fn lap5(chart: &GridChart, v: &[f64], out: &mut [f64]) {
    let ihx2 = 1.0 / (chart.hx() * chart.hx());
    let ihy2 = 1.0 / (chart.hy() * chart.hy());
    for iy in 0..chart.ny {
        for ix in 0..chart.nx {
            let i = chart.idx(ix, iy);
            let e = v[chart.wrap(ix as isize + 1, iy as isize)];
            let w = v[chart.wrap(ix as isize - 1, iy as isize)];
            let n = v[chart.wrap(ix as isize, iy as isize + 1)];
            let s = v[chart.wrap(ix as isize, iy as isize - 1)];
            out[i] = (e - 2.0 * v[i] + w) * ihx2 + (n - 2.0 * v[i] + s) * ihy2;
        }
    }
}

struct SliceData {
    inv_weight: Vec<f64>, // e^{-2u}
    weight: Vec<f64>,     // e^{2u}
    s: Vec<f64>,
    s_max: f64,
    min_u: f64,
}

fn slice_data(traj: &FlowTrajectory, t: f64) -> Result<SliceData> {
    // cubic in time regardless of the trajectory's configured metric_at mode
    let (m, phi) = traj.fields_at_with(t, crate::flow::Interp::Cubic)?;
    let snap = crate::alpha::make_alpha(traj.model(), &m, phi.as_ref(), t)?;
    let inv_weight: Vec<f64> = m.uc.values.iter().map(|&u| (-2.0 * u).exp()).collect();
    let weight: Vec<f64> = m.uc.values.iter().map(|&u| (2.0 * u).exp()).collect();
    let s_max = snap.trace_s.max_abs();
    let min_u = m.uc.min();
    Ok(SliceData { inv_weight, weight, s: snap.trace_s.values, s_max, min_u })
}

fn mass_of(chart: &GridChart, u: &[f64], weight: &[f64]) -> f64 {
    let cell = chart.hx() * chart.hy();
    u.iter().zip(weight).map(|(&a, &w)| a * w).sum::<f64>() * cell
}

/// du/dτ = e^{-2u_c} Δ₀ u - S u at the given slice.
fn conj_rhs(chart: &GridChart, data: &SliceData, u: &[f64], out: &mut [f64]) {
    let field = ScalarField { chart: *chart, values: u.to_vec() };
    let lap = field.lap_flat();
    for i in 0..u.len() {
        out[i] = data.inv_weight[i] * lap.values[i] - data.s[i] * u[i];
    }
}

/// dΦ/dt = e^{-2u_c} Δ₀ Φ.
fn heat_rhs(chart: &GridChart, data: &SliceData, u: &[f64], out: &mut [f64]) {
    let field = ScalarField { chart: *chart, values: u.to_vec() };
    let lap = field.lap_flat();
    for i in 0..u.len() {
        out[i] = data.inv_weight[i] * lap.values[i];
    }
}

fn stable_substep(chart: &GridChart, data: &SliceData, safety: f64) -> f64 {
    let h = chart.hx().min(chart.hy());
    let factor = match chart.stencil {
        Stencil::Order2 => 1.0,
        Stencil::Order4 => 0.75,
    };
    let diffusion = h * h * (2.0 * data.min_u).exp() / 4.0 * factor;
    let reaction = 1.0 / (1.0 + data.s_max);
    safety * diffusion.min(reaction)
}

/// Integrate the conjugate equation backward from data given at t = T.
pub fn solve_conjugate(
    traj: Arc<FlowTrajectory>,
    init: ScalarField,
    opts: &SolverOptions,
) -> Result<ConjugateSolution> {
    traj.chart().same(&init.chart)?;
    if init.min() < 0.0 || init.max() <= 0.0 {
        return Err(FlowError::Precondition(
            "conjugate initial data must be nonnegative and not identically zero".into(),
        ));
    }
    solve_backward(traj, init, opts, None)
}

/// Solve the conjugate equation from an area-normalized discrete delta at
/// grid point y on g(T).
pub fn solve_kernel(
    traj: Arc<FlowTrajectory>,
    y: usize,
    opts: &SolverOptions,
) -> Result<KernelSolution> {
    let chart = *traj.chart();
    if y >= chart.len() {
        return Err(FlowError::Precondition(format!(
            "basepoint index {y} outside the {}-point grid",
            chart.len()
        )));
    }
    let m_end = traj.metric_at_index(traj.n_slices() - 1);
    let cell = chart.hx() * chart.hy();
    let mut init = ScalarField::zeros(chart);
    init.values[y] = 1.0 / ((2.0 * m_end.uc.values[y]).exp() * cell);
    solve_backward(traj, init, opts, Some(y))
}

fn solve_backward(
    traj: Arc<FlowTrajectory>,
    init: ScalarField,
    opts: &SolverOptions,
    basepoint: Option<usize>,
) -> Result<ConjugateSolution> {
    let chart = *traj.chart();
    let times = traj.times().to_vec();
    let kmax = times.len() - 1;
    let t_final = traj.t_final();

    let mut u = init.values.clone();
    if opts.normalize {
        let data_end = slice_data(&traj, t_final)?;
        let m0 = mass_of(&chart, &u, &data_end.weight);
        if m0 <= 0.0 {
            return Err(FlowError::Precondition("initial data has nonpositive mass".into()));
        }
        for v in u.iter_mut() {
            *v /= m0;
        }
    }

    let mut fields: Vec<Option<ScalarField>> = vec![None; times.len()];
    let mut mass = vec![0.0; times.len()];
    fields[kmax] = Some(ScalarField { chart, values: u.clone() });
    let data_end = slice_data(&traj, t_final)?;
    let mass0 = mass_of(&chart, &u, &data_end.weight);
    mass[kmax] = mass0;

    // burn in (positivity-preserving Euler) for delta-like data: a kernel
    // basepoint, or any nonnegative init that touches zero
    let mut burning = basepoint.is_some() || init.min() <= 0.0;
    let mut burn_steps = 0usize;
    let mut mass_drift = 0.0f64;
    let mut dt_first = 0.0f64;
    let mut first_step = true;
    let n = chart.len();
    let mut scratch = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut positivity_horizon = kmax;

    for k in (0..kmax).rev() {
        let t_target = times[k];
        let mut t = times[k + 1];
        while t > t_target + 1e-15 * t_final {
            let data = slice_data(&traj, t)?;
            let mut dt = stable_substep(&chart, &data, opts.safety);
            if burning {
                dt *= 0.5; // extra headroom keeps all Euler weights positive
            }
            dt = dt.min(t - t_target);
            if first_step {
                dt_first = dt;
                first_step = false;
            }

            if burning {
                // forward Euler in τ, positivity-preserving on the 5-point stencil
                lap5(&chart, &u, &mut scratch);
                let mut min_u = f64::INFINITY;
                for i in 0..n {
                    u[i] += dt * (data.inv_weight[i] * scratch[i] - data.s[i] * u[i]);
                    min_u = min_u.min(u[i]);
                }
                if min_u < 0.0 {
                    return Err(FlowError::PositivityLoss { time: t - dt, min_value: min_u });
                }
                burn_steps += 1;
                if min_u > 0.0 && burn_steps >= opts.n_burn {
                    burning = false;
                }
            } else {
                // 4-stage step in τ (t decreases)
                let data_mid = slice_data(&traj, t - 0.5 * dt)?;
                let data_end = slice_data(&traj, t - dt)?;
                conj_rhs(&chart, &data, &u, &mut k1);
                let u2: Vec<f64> = (0..n).map(|i| u[i] + 0.5 * dt * k1[i]).collect();
                conj_rhs(&chart, &data_mid, &u2, &mut k2);
                let u3: Vec<f64> = (0..n).map(|i| u[i] + 0.5 * dt * k2[i]).collect();
                conj_rhs(&chart, &data_mid, &u3, &mut k3);
                let u4: Vec<f64> = (0..n).map(|i| u[i] + dt * k3[i]).collect();
                conj_rhs(&chart, &data_end, &u4, &mut k4);
                let mut min_u = f64::INFINITY;
                for i in 0..n {
                    u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    min_u = min_u.min(u[i]);
                }
                if min_u <= 0.0 {
                    return Err(FlowError::PositivityLoss { time: t - dt, min_value: min_u });
                }
            }
            t -= dt;
            let data_now = slice_data(&traj, t)?;
            let m_now = mass_of(&chart, &u, &data_now.weight);
            mass_drift = mass_drift.max((m_now - mass0).abs() / mass0.abs().max(1e-300));
        }
        let field = ScalarField { chart, values: u.clone() };
        field.ensure_finite("conjugate solve")?;
        if field.min() > 0.0 && k < positivity_horizon {
            positivity_horizon = k;
        }
        let data_now = slice_data(&traj, t_target)?;
        mass[k] = mass_of(&chart, &u, &data_now.weight);
        fields[k] = Some(field);
    }

    // horizon is the first index (from the top) where strict positivity holds
    let mut horizon = kmax;
    for k in (0..kmax).rev() {
        if fields[k].as_ref().unwrap().min() > 0.0 {
            horizon = k;
        } else {
            break;
        }
    }

    Ok(ConjugateSolution {
        traj,
        fields: fields.into_iter().map(|f| f.unwrap()).collect(),
        mass,
        mass_drift,
        basepoint,
        positivity_horizon: horizon,
        dt_first,
    })
}

/// Integrate ∂Φ/∂t = Δ_{g(t)} Φ forward from Φ₀ > 0 at t = 0.
pub fn solve_forward(
    traj: Arc<FlowTrajectory>,
    phi0: ScalarField,
    opts: &SolverOptions,
) -> Result<ForwardSolution> {
    traj.chart().same(&phi0.chart)?;
    if phi0.min() <= 0.0 {
        return Err(FlowError::Precondition("forward initial data must be positive".into()));
    }
    let chart = *traj.chart();
    let times = traj.times().to_vec();
    let n = chart.len();
    let mut phi = phi0.values.clone();
    let mut fields = vec![ScalarField { chart, values: phi.clone() }];
    let mut max_series = vec![phi0.max()];

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];

    for k in 1..times.len() {
        let t_target = times[k];
        let mut t = times[k - 1];
        while t < t_target - 1e-15 * traj.t_final() {
            let data = slice_data(&traj, t)?;
            let mut dt = stable_substep(&chart, &data, opts.safety);
            dt = dt.min(t_target - t);
            let data_mid = slice_data(&traj, t + 0.5 * dt)?;
            let data_end = slice_data(&traj, t + dt)?;
            heat_rhs(&chart, &data, &phi, &mut k1);
            let u2: Vec<f64> = (0..n).map(|i| phi[i] + 0.5 * dt * k1[i]).collect();
            heat_rhs(&chart, &data_mid, &u2, &mut k2);
            let u3: Vec<f64> = (0..n).map(|i| phi[i] + 0.5 * dt * k2[i]).collect();
            heat_rhs(&chart, &data_mid, &u3, &mut k3);
            let u4: Vec<f64> = (0..n).map(|i| phi[i] + dt * k3[i]).collect();
            heat_rhs(&chart, &data_end, &u4, &mut k4);
            let mut min_phi = f64::INFINITY;
            for i in 0..n {
                phi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                min_phi = min_phi.min(phi[i]);
            }
            if min_phi <= 0.0 {
                return Err(FlowError::PositivityLoss { time: t + dt, min_value: min_phi });
            }
            t += dt;
        }
        let field = ScalarField { chart, values: phi.clone() };
        field.ensure_finite("forward solve")?;
        max_series.push(field.max());
        fields.push(field);
    }

    Ok(ForwardSolution { traj, fields, max_series })
}

/// Result of the short-time expansion check at one probe τ.
#[derive(Debug, Clone)]
pub struct AsymptoticsReport {
    pub tau: f64,
    /// max over the disc of |u·(4πτ)·e^{d²/4τ} - 1|.
    pub ratio_err: f64,
    /// (4πτ)·u(y,y) - 1 on the diagonal.
    pub diag_err: f64,
    pub disc_radius: f64,
    /// Exact torus distance was available (flat metric); otherwise the
    /// distance is the 8-neighbor graph estimate and only trends are claimed.
    pub quantitative: bool,
    pub tol: f64,
    pub pass: bool,
}

/// Compare the kernel against the leading-order short-time form
/// (4πτ)^{-n/2} e^{-d_T²/4τ} on a disc around the basepoint.
pub fn check_asymptotics(
    ker: &KernelSolution,
    tau_probe: f64,
    disc_frac: f64,
    tol: f64,
) -> Result<AsymptoticsReport> {
    let y = ker
        .basepoint
        .ok_or_else(|| FlowError::Precondition("asymptotics check needs a kernel".into()))?;
    let chart = *ker.traj.chart();
    let l_min = chart.lx.min(chart.ly);
    let diam_sq = l_min * l_min;
    if tau_probe > 0.25 * diam_sq {
        return Err(FlowError::Precondition(format!(
            "τ probe {tau_probe:.3e} is not small against diam² = {diam_sq:.3e}"
        )));
    }
    let n_burn_floor = 10.0 * ker.dt_first;
    if tau_probe < n_burn_floor {
        return Err(FlowError::Precondition(format!(
            "τ probe {tau_probe:.3e} below the burn-in resolution {n_burn_floor:.3e}"
        )));
    }
    let k = ker.index_at_tau(tau_probe)?;
    let tau = ker.tau(k);
    let u = &ker.fields[k];

    // distance on g(T): exact images when flat, graph distance otherwise
    let m_end = ker.traj.metric_at_index(ker.traj.n_slices() - 1);
    let spread = m_end.uc.max() - m_end.uc.min();
    let quantitative = spread < 1e-12;
    let dist = if quantitative {
        flat_distance_field(&chart, y)
    } else {
        metric_distance_field(&m_end, y)
    };

    let disc_radius = disc_frac * l_min;
    let four_pi_tau = 4.0 * std::f64::consts::PI * tau;
    let mut ratio_err = 0.0f64;
    for i in 0..u.values.len() {
        let d = dist.values[i];
        if d <= disc_radius {
            let ratio = u.values[i] * four_pi_tau * (d * d / (4.0 * tau)).exp();
            ratio_err = ratio_err.max((ratio - 1.0).abs());
        }
    }
    let diag_err = u.values[y] * four_pi_tau - 1.0;
    let pass = !quantitative || ratio_err <= tol;
    Ok(AsymptoticsReport { tau, ratio_err, diag_err, disc_radius, quantitative, tol, pass })
}

/// Relative drift of ∫ uΦ dμ along the flow (zero in the continuum: the
/// operators are mutually adjoint against the evolving measure).
pub fn duality_drift(conj: &ConjugateSolution, fwd: &ForwardSolution) -> Result<f64> {
    let n = conj.fields.len();
    if fwd.fields.len() != n {
        return Err(FlowError::Precondition("solutions live on different trajectories".into()));
    }
    let mut base = None;
    let mut drift = 0.0f64;
    for k in 0..n {
        let m = conj.traj.metric_at_index(k);
        let prod = conj.fields[k].zip(&fwd.fields[k], |a, b| a * b);
        let i = integrate(&m, &prod)?;
        match base {
            None => base = Some(i),
            Some(b) => drift = drift.max((i - b).abs() / b.abs().max(1e-300)),
        }
    }
    Ok(drift)
}

/// Fields needed again and again by the Harnack module: u, h, ∇h, Δh, |∇h|².
pub struct KernelSlice {
    pub k: usize,
    pub tau: f64,
    pub metric: ConformalMetric,
    pub u: ScalarField,
    pub h: ScalarField,
    pub s: ScalarField,
}

impl ConjugateSolution {
    pub fn slice(&self, k: usize) -> Result<KernelSlice> {
        let metric = self.metric_at_index(k);
        let s = self.traj.alpha_at_index(k)?.trace_s;
        Ok(KernelSlice {
            k,
            tau: self.tau(k),
            metric,
            u: self.fields[k].clone(),
            h: self.h_at(k)?,
            s,
        })
    }

    /// Empirical sup bound: C_emp = max over usable stored τ of τ^{n/2}·max u.
    pub fn linf_constant(&self) -> (f64, Vec<(f64, f64)>) {
        let mut series = Vec::new();
        let mut c_emp = 0.0f64;
        for k in self.positivity_horizon..self.fields.len() {
            let tau = self.tau(k);
            if tau <= 0.0 {
                continue;
            }
            let v = tau.powf(DIM / 2.0) * self.fields[k].max();
            series.push((tau, v));
            c_emp = c_emp.max(v);
        }
        (c_emp, series)
    }
}

/// l∞-stability report: C_emp under a dt-halved re-solve.
pub struct LinfReport {
    pub c_emp: f64,
    pub c_emp_half_dt: f64,
    pub rel_change: f64,
    pub series: Vec<(f64, f64)>,
}

/// Recompute the kernel with halved substeps and compare C_emp.
pub fn linf_bound_check(ker: &KernelSolution, opts: &SolverOptions) -> Result<LinfReport> {
    let (c_emp, series) = ker.linf_constant();
    let halved = SolverOptions { safety: opts.safety * 0.5, ..*opts };
    let re = match ker.basepoint {
        Some(y) => solve_kernel(ker.traj.clone(), y, &halved)?,
        None => solve_conjugate(ker.traj.clone(), ker.fields.last().unwrap().clone(), &halved)?,
    };
    let (c2, _) = re.linf_constant();
    let rel_change = (c2 - c_emp).abs() / c_emp.abs().max(1e-300);
    Ok(LinfReport { c_emp, c_emp_half_dt: c2, rel_change, series })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alpha::{AlphaModel, CustomSchedule};
    use crate::flow::{evolve, FlowConfig};
    use std::f64::consts::PI;

    fn static_flat(n: usize, t_final: f64, stored: usize) -> Arc<FlowTrajectory> {
        let c = GridChart::new(n, n, 1.0, 1.0).unwrap();
        let g0 = ConformalMetric::flat(c);
        let cfg = FlowConfig::new(t_final).stored(stored);
        Arc::new(evolve(&AlphaModel::Static, &g0, None, &cfg).unwrap())
    }

    #[test]
    fn constant_stays_constant_when_s_zero() {
        let traj = static_flat(32, 0.02, 16);
        let init = ScalarField::constant(*traj.chart(), 2.5);
        let opts = SolverOptions { normalize: false, ..Default::default() };
        let sol = solve_conjugate(traj, init, &opts).unwrap();
        for f in &sol.fields {
            for &v in &f.values {
                assert!((v - 2.5).abs() < 1e-12);
            }
        }
        assert!(sol.mass_drift < 1e-12);
    }

    #[test]
    fn constant_solution_ode_for_constant_s() {
        // α = λg₀ fixed: S(t) = 2λ/(1-2λt); constant-in-space u obeys
        // du/dτ = -S u, so u(τ=T)/u(0) = exp(-∫S dτ) = (1-2λT)... computed
        // against the quadrature of the stored S series.
        let c = GridChart::new(32, 32, 1.0, 1.0).unwrap();
        let g0 = ConformalMetric::flat(c);
        let lambda = 0.6;
        let model = AlphaModel::Custom(CustomSchedule::FixedTensor(g0.as_tensor().scaled(lambda)));
        let t_final = 0.3;
        let cfg = FlowConfig::new(t_final).stored(64);
        let traj = Arc::new(evolve(&model, &g0, None, &cfg).unwrap());
        let init = ScalarField::constant(c, 1.0);
        let opts = SolverOptions { normalize: false, ..Default::default() };
        let sol = solve_conjugate(traj.clone(), init, &opts).unwrap();
        // closed form: ∫₀^τ S(T-σ)dσ = ln((1-2λ(T-τ))/(1-2λT)),
        // so u(τ) = (1-2λT)/(1-2λt).
        for k in 0..traj.n_slices() {
            let t = traj.times()[k];
            let expect = (1.0 - 2.0 * lambda * t_final) / (1.0 - 2.0 * lambda * t);
            let got = sol.fields[k].values[0];
            assert!(
                (got - expect).abs() < 1e-6 * expect,
                "t={t}: {got} vs {expect}"
            );
            // spatially constant
            assert!((sol.fields[k].max() - sol.fields[k].min()).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_mass_and_symmetry_on_flat_torus() {
        let traj = static_flat(32, 0.05, 50);
        let chart = *traj.chart();
        let y = chart.idx(10, 20);
        let ker = solve_kernel(traj, y, &SolverOptions::default()).unwrap();
        ker.validate_positivity().unwrap();
        assert!(ker.mass_drift < 1e-6, "mass drift {}", ker.mass_drift);
        for k in 0..ker.fields.len() {
            assert!((ker.mass[k] - 1.0).abs() < 1e-6);
        }
        // evenness under x-y -> -(x-y)
        let k_mid = ker.fields.len() / 2;
        let u = &ker.fields[k_mid];
        let (yx, yy) = (10isize, 20isize);
        for dx in -5isize..=5 {
            for dy in -5isize..=5 {
                let a = u.values[chart.wrap(yx + dx, yy + dy)];
                let b = u.values[chart.wrap(yx - dx, yy - dy)];
                assert!((a - b).abs() < 1e-12 * a.abs().max(1e-300), "asym at {dx},{dy}");
            }
        }
    }

    #[test]
    fn forward_solution_examples() {
        let traj = static_flat(32, 0.02, 20);
        let chart = *traj.chart();
        // Φ ≡ 1 stays 1
        let sol = solve_forward(traj.clone(), ScalarField::constant(chart, 1.0), &SolverOptions::default())
            .unwrap();
        for f in &sol.fields {
            assert!((f.max() - 1.0).abs() < 1e-13 && (f.min() - 1.0).abs() < 1e-13);
        }
        // single mode decays like exp(-k_eff² t) with the discrete wavenumber
        let k = 2.0 * PI;
        let phi0 = ScalarField::from_fn(chart, |x, _| 1.0 + 0.5 * (k * x).sin());
        let sol = solve_forward(traj.clone(), phi0, &SolverOptions::default()).unwrap();
        let h = chart.hx();
        let k_eff_sq = (2.0 - 2.0 * (k * h).cos()) / (h * h);
        for (j, f) in sol.fields.iter().enumerate() {
            let t = traj.times()[j];
            let amp_expect = 0.5 * (-k_eff_sq * t).exp();
            let amp = 0.5 * (f.max() - f.min());
            assert!(
                (amp - amp_expect).abs() < 1e-4 * (1.0 + amp_expect),
                "t={t}: {amp} vs {amp_expect}"
            );
            // maximum principle
            if j > 0 {
                assert!(f.max() <= sol.max_series[j - 1] + 1e-12);
            }
        }
    }

    #[test]
    fn duality_of_backward_and_forward() {
        let c = GridChart::new(32, 32, 1.0, 1.0).unwrap();
        let g0 = ConformalMetric::new(ScalarField::from_fn(c, |x, y| {
            0.05 * (2.0 * PI * x).sin() * (2.0 * PI * y).sin()
        }))
        .unwrap();
        let cfg = FlowConfig::new(0.01).stored(20);
        let traj = Arc::new(evolve(&AlphaModel::Ricci, &g0, None, &cfg).unwrap());
        let y = c.idx(16, 16);
        let ker = solve_kernel(traj.clone(), y, &SolverOptions::default()).unwrap();
        let phi0 = ScalarField::from_fn(c, |x, y| 1.0 + 0.3 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin());
        let fwd = solve_forward(traj.clone(), phi0, &SolverOptions::default()).unwrap();
        let drift = duality_drift(&ker, &fwd).unwrap();
        let h = c.h_max();
        let dt_store = traj.stored_spacing_at(1);
        assert!(drift < 10.0 * (h * h + dt_store * dt_store), "duality drift {drift:e}");
    }

    #[test]
    fn rejects_bad_initial_data() {
        let traj = static_flat(32, 0.01, 8);
        let chart = *traj.chart();
        let neg = ScalarField::constant(chart, -1.0);
        assert!(solve_conjugate(traj.clone(), neg, &SolverOptions::default()).is_err());
        let zero = ScalarField::zeros(chart);
        assert!(solve_conjugate(traj.clone(), zero, &SolverOptions::default()).is_err());
        let nonpos = ScalarField::constant(chart, 0.5);
        assert!(solve_forward(traj.clone(), nonpos.map(|v| v - 0.5), &SolverOptions::default()).is_err());
    }
}
