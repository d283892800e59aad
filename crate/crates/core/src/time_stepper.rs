//! Backward-Euler mixed scheme for `(U^m, W^m)`:
//!
//! ```text
//! M (U^m - U^{m-1}) / k + A W^m                 = 0
//! eps A U^m + eps^{-1} N(U^m; U^{m-1}) - M W^m  = 0
//! ```
//!
//! solved per step by damped Newton on the coupled system.

use std::sync::Arc;

use log::{debug, warn};

use crate::dg::{
    assemble_nonlinear, assemble_nonlinear_jacobian, integrate_pointwise, integrate_pointwise2,
    DgField, DgSpace, FieldKind, NonlinearVariant,
};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, SparseLu, TripletBuilder};
use crate::mesh::{Mesh, DOMAIN_AREA};
use crate::operators::{
    project_initial, Discretization, InitialProjection, InverseLaplacianSolver, ScalarField,
};

/// Model and solver parameters of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub epsilon: f64,
    pub k: f64,
    pub t_final: f64,
    pub sigma0: f64,
    pub degree: usize,
    pub scheme: NonlinearVariant,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub init_projection: InitialProjection,
}

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
pub const MAX_HALVINGS: usize = 30;

/// Message attached to the conditional-stability warning.
pub const IMPLICIT_STEP_WARNING: &str = "k exceeds epsilon^3";

impl ModelParams {
    pub fn new(epsilon: f64, k: f64, t_final: f64, scheme: NonlinearVariant) -> Self {
        Self {
            epsilon,
            k,
            t_final,
            sigma0: crate::dg::default_penalty(1),
            degree: 1,
            scheme,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
            init_projection: InitialProjection::L2Continuous,
        }
    }

    /// Hard errors of the parameter set.
    pub fn errors(&self) -> Vec<String> {
        let mut e = Vec::new();
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.epsilon) {
            e.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !positive(self.k) {
            e.push(format!("k must be positive, got {}", self.k));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            e.push(format!("T must be non-negative, got {}", self.t_final));
        }
        if !positive(self.sigma0) {
            e.push(format!("sigma0 must be positive, got {}", self.sigma0));
        }
        if self.degree == 0 {
            e.push("degree must be >= 1".into());
        }
        if !positive(self.newton_tol) {
            e.push(format!("newton_tol must be positive, got {}", self.newton_tol));
        }
        if self.newton_max_iter == 0 {
            e.push("newton_max_iter must be >= 1".into());
        }
        e
    }

    /// Soft conditions: the fully implicit scheme is only stable for
    /// `k = O(eps^3)`.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.scheme == NonlinearVariant::Implicit && self.k > self.epsilon.powi(3) {
            w.push(format!(
                "{IMPLICIT_STEP_WARNING} (k = {}, epsilon^3 = {})",
                self.k,
                self.epsilon.powi(3)
            ));
        }
        w
    }

    /// Fails on hard errors, and on warnings when `strict`; returns the
    /// warnings otherwise.
    pub fn validate(&self, strict: bool) -> Result<Vec<String>> {
        let mut errors = self.errors();
        let warnings = self.warnings();
        if strict {
            errors.extend(warnings.iter().cloned());
        }
        if errors.is_empty() {
            Ok(warnings)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn num_steps(&self) -> usize {
        (self.t_final / self.k).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub step: usize,
    pub time: f64,
    pub u: DgField,
    pub w: DgField,
}

/// Per-step Newton diagnostics.
#[derive(Debug, Clone, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    /// `||F||_inf` before each iteration and after the last one.
    pub residuals: Vec<f64>,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// One row of the time series.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub mass: f64,
    pub newton_iters: usize,
    pub residual: f64,
    pub energy_law_residual: f64,
}

pub const TIMESERIES_HEADER: &str =
    "step,time,energy,mass,newton_iters,residual,energy_law_residual";

impl StepRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
            self.step,
            self.time,
            self.energy,
            self.mass,
            self.newton_iters,
            self.residual,
            self.energy_law_residual
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub records: Vec<StepRecord>,
}

impl TimeSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TIMESERIES_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

/// `E_h(U) = (1/4 eps) ||U^2 - 1||^2 + (eps/2) a_h(U, U)`.
pub fn discrete_energy(disc: &Discretization, u: &DgField, epsilon: f64) -> Result<f64> {
    let bulk = integrate_pointwise(disc.space(), u, |v| {
        let s = v * v - 1.0;
        s * s
    })?;
    Ok(bulk / (4.0 * epsilon) + 0.5 * epsilon * disc.sipg().bilinear(u.coeffs(), u.coeffs()))
}

/// Sign of the `(1/2 eps) ||d_t U||^2` term in the energy identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyLawSign {
    Plus,
    Minus,
}

impl From<NonlinearVariant> for EnergyLawSign {
    fn from(v: NonlinearVariant) -> Self {
        match v {
            NonlinearVariant::Splitting => EnergyLawSign::Plus,
            NonlinearVariant::Implicit => EnergyLawSign::Minus,
        }
    }
}

/// Dissipation accumulated by one step `U^{m-1} -> U^m`:
///
/// `k ||d_t U||_{-1,h}^2 + k^2 { (eps/2) |||d_t U|||_a^2 + (1/4 eps) ||d_t U^2||^2
///  + (1/2 eps) ||U d_t U||^2 +- (1/2 eps) ||d_t U||^2 }`.
pub fn step_dissipation(
    inv: &InverseLaplacianSolver,
    prev: &DgField,
    cur: &DgField,
    epsilon: f64,
    k: f64,
    sign: EnergyLawSign,
) -> Result<f64> {
    let disc = inv.discretization();
    let space = disc.space();
    let delta: Vec<f64> = cur
        .coeffs()
        .iter()
        .zip(prev.coeffs())
        .map(|(a, b)| a - b)
        .collect();
    let dt = cur.with_coeffs(delta.iter().map(|d| d / k).collect(), FieldKind::Broken);
    let minus1 = inv.minus1_norm_sq_coeffs(dt.coeffs())?;
    let energy = disc.sipg().bilinear(dt.coeffs(), dt.coeffs());
    let dt_sq = integrate_pointwise2(space, cur, prev, |a, b| {
        let v = (a * a - b * b) / k;
        v * v
    })?;
    let u_dt = integrate_pointwise2(space, cur, &dt, |a, d| (a * d) * (a * d))?;
    let l2 = disc.mass().bilinear(dt.coeffs(), dt.coeffs());
    let signed = match sign {
        EnergyLawSign::Plus => l2,
        EnergyLawSign::Minus => -l2,
    };
    Ok(k * minus1
        + k * k
            * (0.5 * epsilon * energy
                + dt_sq / (4.0 * epsilon)
                + u_dt / (2.0 * epsilon)
                + signed / (2.0 * epsilon)))
}

/// Residual of the discrete energy identity for every `l` of a trajectory
/// `U^0, ..., U^L` (index 0 is identically zero).
pub fn energy_law_residual(
    inv: &InverseLaplacianSolver,
    trajectory: &[DgField],
    epsilon: f64,
    k: f64,
    sign: EnergyLawSign,
) -> Result<Vec<f64>> {
    let disc = inv.discretization();
    let Some(first) = trajectory.first() else {
        return Ok(Vec::new());
    };
    let e0 = discrete_energy(disc, first, epsilon)?;
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for pair in trajectory.windows(2) {
        acc += step_dissipation(inv, &pair[0], &pair[1], epsilon, k, sign)?;
        out.push(discrete_energy(disc, &pair[1], epsilon)? + acc - e0);
    }
    Ok(out)
}

/// Newton solver for one time step, with Jacobian factorization reused
/// across iterations and steps when the pattern is unchanged.
pub struct TimeStepper {
    params: ModelParams,
    disc: Arc<Discretization>,
    jacobian_lu: Option<SparseLu>,
}

impl TimeStepper {
    pub fn new(disc: Arc<Discretization>, params: ModelParams) -> Result<Self> {
        let errors = params.errors();
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        if (disc.sigma0() - params.sigma0).abs() > 0.0 || disc.space().degree() != params.degree {
            return Err(Error::InvalidArgument(
                "discretization does not match the model parameters".into(),
            ));
        }
        Ok(Self {
            params,
            disc,
            jacobian_lu: None,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    fn space(&self) -> &DgSpace {
        self.disc.space()
    }

    /// Residual blocks of the coupled system at `(u, w)`.
    pub fn residual(&self, u: &DgField, w: &DgField, u_prev: &DgField) -> Result<Vec<f64>> {
        let eps = self.params.epsilon;
        let k = self.params.k;
        let space = self.space();
        let n = space.ndofs();
        let du: Vec<f64> = u
            .coeffs()
            .iter()
            .zip(u_prev.coeffs())
            .map(|(a, b)| a - b)
            .collect();
        let m_du = self.disc.mass().mul_vec(&du);
        let a_w = self.disc.sipg().mul_vec(w.coeffs());
        let a_u = self.disc.sipg().mul_vec(u.coeffs());
        let nl = assemble_nonlinear(space, u, u_prev, self.params.scheme)?;
        let m_w = self.disc.mass().mul_vec(w.coeffs());
        let mut r = Vec::with_capacity(2 * n);
        r.extend((0..n).map(|i| m_du[i] / k + a_w[i]));
        r.extend((0..n).map(|i| eps * a_u[i] + nl[i] / eps - m_w[i]));
        Ok(r)
    }

    fn factor_jacobian(&mut self, u: &DgField) -> Result<()> {
        let eps = self.params.epsilon;
        let k = self.params.k;
        let n = self.space().ndofs();
        let a = self.disc.sipg();
        let m = self.disc.mass();
        let jn = assemble_nonlinear_jacobian(self.space(), u, self.params.scheme)?;
        let mut b = TripletBuilder::with_capacity(2 * n, 2 * n, 3 * a.nnz() + 2 * m.nnz() + jn.nnz());
        b.push_matrix(m, 0, 0, 1.0 / k);
        b.push_matrix(a, 0, n, 1.0);
        b.push_matrix(a, n, 0, eps);
        b.push_matrix(&jn, n, 0, 1.0 / eps);
        b.push_matrix(m, n, n, -1.0);
        let jac = b.build(false);
        match &mut self.jacobian_lu {
            Some(lu) => lu.refactor(&jac)?,
            None => self.jacobian_lu = Some(SparseLu::new(&jac)?),
        }
        Ok(())
    }

    /// Damped Newton from the initial guess `(u0, w0)`.
    pub fn newton_solve(
        &mut self,
        u_prev: &DgField,
        u0: &DgField,
        w0: &DgField,
    ) -> Result<(DgField, DgField, NewtonReport)> {
        let n = self.space().ndofs();
        let tol = self.params.newton_tol;
        let mut u = u0.with_coeffs(u0.coeffs().to_vec(), FieldKind::Broken);
        let mut w = w0.with_coeffs(w0.coeffs().to_vec(), FieldKind::Broken);
        let mut r = self.residual(&u, &w, u_prev)?;
        let mut rn = max_abs(&r);
        let mut report = NewtonReport {
            iterations: 0,
            residuals: vec![rn],
        };
        while rn > tol {
            if !rn.is_finite() || report.iterations >= self.params.newton_max_iter {
                return Err(Error::NewtonDivergence {
                    iterations: report.iterations,
                    residual: rn,
                });
            }
            self.factor_jacobian(&u)?;
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let delta = self.jacobian_lu.as_ref().unwrap().solve(&neg)?;
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let uc: Vec<f64> = (0..n).map(|i| u.coeffs()[i] + alpha * delta[i]).collect();
                let wc: Vec<f64> = (0..n).map(|i| w.coeffs()[i] + alpha * delta[n + i]).collect();
                let ut = u.with_coeffs(uc, FieldKind::Broken);
                let wt = w.with_coeffs(wc, FieldKind::Broken);
                let rt = self.residual(&ut, &wt, u_prev)?;
                let rtn = max_abs(&rt);
                if rtn < rn {
                    accepted = Some((ut, wt, rt, rtn));
                    break;
                }
                alpha *= 0.5;
            }
            report.iterations += 1;
            let Some((ut, wt, rt, rtn)) = accepted else {
                return Err(Error::NewtonDivergence {
                    iterations: report.iterations,
                    residual: rn,
                });
            };
            if alpha < 1.0 {
                debug!("newton: damped step alpha = {alpha}");
            }
            u = ut;
            w = wt;
            r = rt;
            rn = rtn;
            report.residuals.push(rn);
        }
        Ok((u, w, report))
    }

    /// Advances `state` by one time step.
    pub fn step(&mut self, state: &SimState) -> Result<(SimState, NewtonReport)> {
        let (u, w, report) = self.newton_solve(&state.u, &state.u, &state.w)?;
        let step = state.step + 1;
        Ok((
            SimState {
                step,
                time: step as f64 * self.params.k,
                u,
                w,
            },
            report,
        ))
    }

    /// Chemical potential matching `U^0` through the second equation with
    /// `U^{-1} := U^0`.
    pub fn initial_potential(&self, u0: &DgField) -> Result<DgField> {
        let eps = self.params.epsilon;
        let a_u = self.disc.sipg().mul_vec(u0.coeffs());
        let nl = assemble_nonlinear(self.space(), u0, u0, self.params.scheme)?;
        let rhs: Vec<f64> = a_u.iter().zip(&nl).map(|(a, b)| eps * a + b / eps).collect();
        let w = SparseLu::new(self.disc.mass())?.solve(&rhs)?;
        self.space().field(w, FieldKind::Broken)
    }
}

/// Receives every record of a run as it is produced.
pub trait Observer {
    fn on_record(&mut self, _record: &StepRecord, _state: &SimState) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

/// Keeps every state of the run in memory.
#[derive(Debug, Default)]
pub struct TrajectoryRecorder {
    pub states: Vec<SimState>,
}

impl Observer for TrajectoryRecorder {
    fn on_record(&mut self, _record: &StepRecord, state: &SimState) -> Result<()> {
        self.states.push(state.clone());
        Ok(())
    }
}

/// Largest admissible mass drift of an accepted step relative to `|Omega|`.
pub const MASS_DRIFT_TOLERANCE: f64 = 1e-10;

/// Runs a full simulation on the `n x n` mesh from the initial data `u0`.
///
/// Records are passed to `observer` as they are produced; on a solver
/// failure the error is returned after all completed records were emitted.
pub fn run_simulation(
    params: &ModelParams,
    n: usize,
    u0: &dyn ScalarField,
    observer: &mut dyn Observer,
) -> Result<TimeSeries> {
    let errors = params.errors();
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    for w in params.warnings() {
        warn!("{w}");
    }
    let mesh = Arc::new(Mesh::uniform(n)?);
    let space = Arc::new(DgSpace::new(mesh, params.degree)?);
    let disc = Arc::new(Discretization::new(space, params.sigma0)?);
    run_on(disc, params, u0, observer)
}

/// As [`run_simulation`] on an existing discretization.
pub fn run_on(
    disc: Arc<Discretization>,
    params: &ModelParams,
    u0: &dyn ScalarField,
    observer: &mut dyn Observer,
) -> Result<TimeSeries> {
    let inv = InverseLaplacianSolver::new(disc.clone())?;
    let mut stepper = TimeStepper::new(disc.clone(), params.clone())?;
    let u = project_initial(&disc, u0, params.init_projection)?;
    let w = stepper.initial_potential(&u)?;
    let mut state = SimState {
        step: 0,
        time: 0.0,
        u,
        w,
    };
    let e0 = discrete_energy(&disc, &state.u, params.epsilon)?;
    let mass0 = disc.total_mass(&state.u);
    let mut series = TimeSeries::default();
    let first = StepRecord {
        step: 0,
        time: 0.0,
        energy: e0,
        mass: mass0,
        newton_iters: 0,
        residual: 0.0,
        energy_law_residual: 0.0,
    };
    observer.on_record(&first, &state)?;
    series.records.push(first);

    let sign = EnergyLawSign::from(params.scheme);
    let mut dissipation = 0.0;
    for _ in 0..params.num_steps() {
        let (next, report) = stepper.step(&state)?;
        let mass = disc.total_mass(&next.u);
        let drift = (mass - mass0).abs();
        if drift > MASS_DRIFT_TOLERANCE * DOMAIN_AREA {
            return Err(Error::LinearSolveFailure(format!(
                "mass drift {drift:.3e} at step {}",
                next.step
            )));
        }
        dissipation += step_dissipation(&inv, &state.u, &next.u, params.epsilon, params.k, sign)?;
        let energy = discrete_energy(&disc, &next.u, params.epsilon)?;
        let record = StepRecord {
            step: next.step,
            time: next.time,
            energy,
            mass,
            newton_iters: report.iterations,
            residual: report.final_residual(),
            energy_law_residual: energy + dissipation - e0,
        };
        observer.on_record(&record, &next)?;
        series.records.push(record);
        state = next;
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::FnField;

    fn disc(n: usize) -> Arc<Discretization> {
        let space = Arc::new(DgSpace::new(Arc::new(Mesh::uniform(n).unwrap()), 1).unwrap());
        Arc::new(Discretization::new(space, 20.0).unwrap())
    }

    #[test]
    fn energy_of_constant_states() {
        let d = disc(3);
        assert!(discrete_energy(&d, &d.space().constant(1.0), 0.1).unwrap().abs() < 1e-13);
        let e = discrete_energy(&d, &d.space().constant(0.0), 0.1).unwrap();
        assert!((e - 10.0).abs() < 1e-12);
    }

    #[test]
    fn energy_two_triangles() {
        let space = Arc::new(DgSpace::new(Arc::new(Mesh::uniform(1).unwrap()), 1).unwrap());
        let d = Discretization::new(space.clone(), 10.0).unwrap();
        let u = space
            .field(vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0], FieldKind::Broken)
            .unwrap();
        let e = discrete_energy(&d, &u, 0.1).unwrap();
        assert!((e - 2.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn equilibria_are_fixed_points() {
        for scheme in [NonlinearVariant::Splitting, NonlinearVariant::Implicit] {
            for c in [0.0, 1.0] {
                let d = disc(3);
                let mut params = ModelParams::new(0.1, 1e-5, 1e-5, scheme);
                params.sigma0 = 20.0;
                let mut st = TimeStepper::new(d.clone(), params).unwrap();
                let u = d.space().constant(c);
                let w = st.initial_potential(&u).unwrap();
                assert!(max_abs(w.coeffs()) < 1e-12);
                let state = SimState { step: 0, time: 0.0, u, w };
                let (next, report) = st.step(&state).unwrap();
                assert!(report.iterations <= 1);
                assert!(next.u.coeffs().iter().all(|v| (v - c).abs() < 1e-12));
                assert!(max_abs(next.w.coeffs()) < 1e-10);
            }
        }
    }

    #[test]
    fn zero_final_time_emits_initial_record() {
        let params = ModelParams::new(0.1, 1e-5, 0.0, NonlinearVariant::Splitting);
        let ts = run_simulation(&params, 3, &FnField(|p: [f64; 2]| p[0].tanh()), &mut ()).unwrap();
        assert_eq!(ts.records.len(), 1);
        assert_eq!(ts.records[0].step, 0);
    }

    #[test]
    fn implicit_warning_and_strict_rejection() {
        let p = ModelParams::new(0.1, 1e-2, 1e-1, NonlinearVariant::Implicit);
        let w = p.validate(false).unwrap();
        assert!(w[0].contains(IMPLICIT_STEP_WARNING));
        assert!(p.validate(true).is_err());
        let p = ModelParams::new(0.1, 1e-2, 1e-1, NonlinearVariant::Splitting);
        assert!(p.validate(true).unwrap().is_empty());
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut p = ModelParams::new(-0.1, 0.0, -1.0, NonlinearVariant::Splitting);
        p.sigma0 = 0.0;
        let e = p.errors();
        assert_eq!(e.len(), 4);
    }
}
