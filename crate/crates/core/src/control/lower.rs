//! Receding-horizon set-point splitting between hydro and battery.
//!
//! Decision vector `[H_1..H_p, B_1..B_p, u_1..u_p]`: hydro set-points,
//! battery AC set-points and L1 slacks on set-point moves. Hydro output is
//! predicted through the first-order lag anchored at the measured output, so
//! it enters the problem as an affine function of the set-points.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::control::baseline::droop_target;
use crate::domain::{BessConfig, PlantConfig, SECONDS_PER_HOUR};
use crate::plant::{capability, discretize_ttc, BessState};
use crate::qp::{QpError, QpProblem, QpSettings, QpSolution, QpSolver, QpStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LowerLayerError {
    #[error("horizon vectors have length {got}, expected {expected}")]
    HorizonMismatch { expected: usize, got: usize },
    #[error("horizon must be at least one step")]
    EmptyHorizon,
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Controller-side battery model used for the per-step power boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    /// Capability evaluated once at the measured state.
    FrozenVoltage,
    /// Second pass with boxes from the TTC trajectory predicted by the first.
    SuccessiveLinearization,
}

impl Fidelity {
    pub fn name(self) -> &'static str {
        match self {
            Fidelity::FrozenVoltage => "frozen",
            Fidelity::SuccessiveLinearization => "linearized",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "frozen" => Some(Fidelity::FrozenVoltage),
            "linearized" => Some(Fidelity::SuccessiveLinearization),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerLayerParams {
    /// Weight per kW of set-point movement.
    pub gamma: f64,
    pub horizon: usize,
    pub fidelity: Fidelity,
    /// Weight pulling hydro set-points to the shifted dispatch, 1/kW.
    pub anchor_weight: f64,
    /// SOE kept clear of each limit inside the horizon.
    pub soe_margin: f64,
    pub eps_abs: f64,
    pub max_iter: usize,
}

impl Default for LowerLayerParams {
    fn default() -> Self {
        Self {
            gamma: 0.4,
            horizon: 30,
            fidelity: Fidelity::FrozenVoltage,
            anchor_weight: 0.01,
            soe_margin: 1e-4,
            eps_abs: 1e-5,
            max_iter: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerLayerInput {
    pub k: usize,
    /// Predicted frequency over the horizon, Hz.
    pub f_hat: Vec<f64>,
    /// PCC dispatch over the horizon, kW.
    pub p_disp_horizon: Vec<f64>,
    /// Hydro output measured now, kW.
    pub h_meas: f64,
    /// Hydro set-point actuated at the previous step, kW.
    pub h_set_prev: f64,
    /// Shifted hydro dispatch at the previous step, kW.
    pub h_ref_prev: f64,
    pub bess_state: BessState,
    /// Hourly battery offset, kW.
    pub b0: f64,
    pub gamma: f64,
    pub p: usize,
}

const BLOCKS: usize = 7;
const TAGS: [&str; BLOCKS] = ["h_box", "ramp", "move_up", "move_down", "b_box", "soe_max", "soe_min"];

/// The parts of the problem that depend only on configuration.
#[derive(Debug, Clone)]
struct Structure {
    p: usize,
    lag: f64,
    gamma: f64,
    anchor: f64,
    /// `M` in the tracking residual `d + M x`.
    m: DMatrix<f64>,
    /// Lower-triangular map from set-points to predicted outputs.
    lmat: DMatrix<f64>,
    hess: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl Structure {
    fn new(p: usize, gamma: f64, anchor: f64, plant: &PlantConfig, bess: &BessConfig) -> Self {
        let n = 3 * p;
        let lag = 1.0 - plant.dt / plant.tau_h;
        let mut lmat = DMatrix::zeros(p, p);
        for j in 0..p {
            for i in 0..=j {
                lmat[(j, i)] = lag.powi((j - i) as i32) * (1.0 - lag);
            }
        }
        let mut m = DMatrix::zeros(p, n);
        for j in 0..p {
            for i in 0..p {
                m[(j, i)] = -lmat[(j, i)];
            }
            m[(j, p + j)] = 1.0;
        }
        let mut hess = m.transpose() * &m * 2.0;
        for j in 0..p {
            hess[(j, j)] += 2.0 * anchor;
        }

        let kappa = plant.dt / (SECONDS_PER_HOUR * bess.capacity_kwh);
        let mut a = DMatrix::zeros(BLOCKS * p, n);
        for j in 0..p {
            a[(j, j)] = 1.0;
            // ramp: (1 - lag) (H_j - Hhat_{j-1})
            a[(p + j, j)] = 1.0 - lag;
            if j > 0 {
                for i in 0..j {
                    a[(p + j, i)] -= (1.0 - lag) * lmat[(j - 1, i)];
                }
            }
            // moves against slacks
            a[(2 * p + j, j)] = 1.0;
            a[(3 * p + j, j)] = 1.0;
            if j > 0 {
                a[(2 * p + j, j - 1)] = -1.0;
                a[(3 * p + j, j - 1)] = -1.0;
            }
            a[(2 * p + j, 2 * p + j)] = -1.0;
            a[(3 * p + j, 2 * p + j)] = 1.0;
            a[(4 * p + j, p + j)] = 1.0;
            for i in 0..=j {
                a[(5 * p + j, p + i)] = kappa * bess.eta_ch;
                a[(6 * p + j, p + i)] = kappa / bess.eta_dch;
            }
        }
        Self { p, lag, gamma, anchor, m, lmat, hess, a }
    }

    fn matches(&self, p: usize, gamma: f64, anchor: f64, plant: &PlantConfig) -> bool {
        self.p == p && self.gamma == gamma && self.anchor == anchor && self.lag == 1.0 - plant.dt / plant.tau_h
    }

    /// `(q, l, u)` for the given input and per-step battery boxes, plus the
    /// constant part of the objective.
    fn vectors(
        &self,
        input: &LowerLayerInput,
        boxes: &[(f64, f64)],
        plant: &PlantConfig,
        bess: &BessConfig,
        margin: f64,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>, f64) {
        let p = self.p;
        let lag = self.lag;
        let h_ref: Vec<f64> = input.p_disp_horizon.iter().map(|pd| pd + input.b0).collect();
        let c: Vec<f64> = (0..p).map(|j| lag.powi(j as i32 + 1) * input.h_meas).collect();
        let d = DVector::from_fn(p, |j, _| droop_target(input.f_hat[j], input.p_disp_horizon[j], plant) - c[j]);

        let mut q = self.m.transpose() * &d * 2.0;
        for j in 0..p {
            q[j] -= 2.0 * self.anchor * h_ref[j];
            q[2 * p + j] = self.gamma;
        }
        let constant = d.norm_squared() + self.anchor * h_ref.iter().map(|h| h * h).sum::<f64>();

        let inf = f64::INFINITY;
        let mut l = DVector::zeros(BLOCKS * p);
        let mut u = DVector::zeros(BLOCKS * p);
        let ramp = plant.h_dot_max * plant.dt;
        let soe = input.bess_state.soe;
        let soe_hi = (bess.soe_max - margin - soe).max(0.0);
        let soe_lo = (bess.soe_min + margin - soe).min(0.0);
        for j in 0..p {
            l[j] = plant.h_min;
            u[j] = plant.h_max;
            // constant part of (1 - lag)(H_j - Hhat_{j-1})
            let prev = if j == 0 { input.h_meas } else { c[j - 1] };
            let off = -(1.0 - lag) * prev;
            l[p + j] = -ramp - off;
            u[p + j] = ramp - off;
            let d_ref = if j == 0 { h_ref[0] - input.h_ref_prev } else { h_ref[j] - h_ref[j - 1] };
            let h_prev = if j == 0 { input.h_set_prev } else { 0.0 };
            l[2 * p + j] = -inf;
            u[2 * p + j] = d_ref + h_prev;
            l[3 * p + j] = d_ref + h_prev;
            u[3 * p + j] = inf;
            l[4 * p + j] = boxes[j].0;
            u[4 * p + j] = boxes[j].1;
            l[5 * p + j] = -inf;
            u[5 * p + j] = soe_hi;
            l[6 * p + j] = soe_lo;
            u[6 * p + j] = inf;
        }
        (q, l, u, constant)
    }
}

fn check_input(input: &LowerLayerInput) -> Result<(), LowerLayerError> {
    if input.p == 0 {
        return Err(LowerLayerError::EmptyHorizon);
    }
    for got in [input.f_hat.len(), input.p_disp_horizon.len()] {
        if got != input.p {
            return Err(LowerLayerError::HorizonMismatch { expected: input.p, got });
        }
    }
    Ok(())
}

/// Full QP with the battery box frozen at the measured state.
pub fn build_ll_qp(
    input: &LowerLayerInput,
    plant: &PlantConfig,
    bess: &BessConfig,
    params: &LowerLayerParams,
) -> Result<QpProblem, LowerLayerError> {
    check_input(input)?;
    let s = Structure::new(input.p, input.gamma, params.anchor_weight, plant, bess);
    let boxes = vec![capability(&input.bess_state, bess); input.p];
    let (q, l, u, _) = s.vectors(input, &boxes, plant, bess, params.soe_margin);
    Ok(QpProblem::new(s.hess.clone(), q, s.a.clone(), l, u)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerLayerSolution {
    pub h_set: Vec<f64>,
    pub b_set: Vec<f64>,
    /// Predicted hydro output, kW.
    pub h_pred: Vec<f64>,
    /// SOE predicted by the TTC model under `b_set`.
    pub soe_pred: Vec<f64>,
    /// Battery boxes used in the final pass.
    pub boxes: Vec<(f64, f64)>,
    pub status: QpStatus,
    /// Tracking plus movement cost including constant terms.
    pub objective: f64,
    pub iterations: usize,
    pub active: Vec<&'static str>,
}

/// Stateful lower layer: keeps the factorised solver and the previous
/// solution for warm starts.
#[derive(Debug, Clone)]
pub struct LowerLayer {
    pub params: LowerLayerParams,
    structure: Option<Structure>,
    solver: Option<QpSolver>,
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl LowerLayer {
    pub fn new(params: LowerLayerParams) -> Self {
        Self { params, structure: None, solver: None, last: None }
    }

    pub fn solve(
        &mut self,
        input: &LowerLayerInput,
        plant: &PlantConfig,
        bess: &BessConfig,
    ) -> Result<LowerLayerSolution, LowerLayerError> {
        check_input(input)?;
        let p = input.p;
        if !self.structure.as_ref().is_some_and(|s| s.matches(p, input.gamma, self.params.anchor_weight, plant)) {
            self.structure = Some(Structure::new(p, input.gamma, self.params.anchor_weight, plant, bess));
            self.solver = None;
            self.last = None;
        }
        let mut boxes = vec![capability(&input.bess_state, bess); p];
        let mut sol = self.solve_pass(input, &boxes, plant, bess, true)?;
        if self.params.fidelity == Fidelity::SuccessiveLinearization && sol.status == QpStatus::Solved {
            let b: Vec<f64> = (0..p).map(|j| sol.x[p + j]).collect();
            boxes = predicted_boxes(&input.bess_state, &b, bess, plant.dt);
            sol = self.solve_pass(input, &boxes, plant, bess, false)?;
        }
        if sol.status == QpStatus::Solved {
            self.last = Some((sol.x.iter().copied().collect(), sol.y.iter().copied().collect()));
        } else {
            self.last = None;
        }
        let structure = self.structure.as_ref().expect("set above");
        let h_set: Vec<f64> = (0..p).map(|j| sol.x[j]).collect();
        let b_set: Vec<f64> = (0..p).map(|j| sol.x[p + j]).collect();
        let hv = structure.lmat.clone() * DVector::from_column_slice(&h_set);
        let h_pred = (0..p).map(|j| hv[j] + structure.lag.powi(j as i32 + 1) * input.h_meas).collect();
        let soe_pred = predict_soe(&input.bess_state, &b_set, bess, plant.dt);
        let (_, _, _, constant) = structure.vectors(input, &boxes, plant, bess, self.params.soe_margin);
        let active = active_tags(self.solver.as_ref().expect("solver built"), &sol, p);
        Ok(LowerLayerSolution {
            h_set,
            b_set,
            h_pred,
            soe_pred,
            boxes,
            status: sol.status,
            objective: sol.objective + constant,
            iterations: sol.iterations,
            active,
        })
    }

    fn solve_pass(
        &mut self,
        input: &LowerLayerInput,
        boxes: &[(f64, f64)],
        plant: &PlantConfig,
        bess: &BessConfig,
        shift: bool,
    ) -> Result<QpSolution, LowerLayerError> {
        let structure = self.structure.as_ref().expect("structure built");
        let (q, l, u, _) = structure.vectors(input, boxes, plant, bess, self.params.soe_margin);
        match self.solver.as_mut() {
            Some(solver) => solver.update_vectors(&q, &l, &u)?,
            None => {
                let problem = QpProblem::new(structure.hess.clone(), q, structure.a.clone(), l, u)?;
                let settings = QpSettings {
                    eps_abs: self.params.eps_abs,
                    max_iter: self.params.max_iter,
                    ..QpSettings::default()
                };
                self.solver = Some(QpSolver::new(&problem, settings)?);
            }
        }
        let solver = self.solver.as_mut().expect("solver built");
        match &self.last {
            Some((x, y)) if shift => {
                let p = input.p;
                solver.warm_start(&shift_blocks(x, p), &shift_blocks(y, p));
            }
            Some(_) => {}
            None => solver.cold_start(),
        }
        Ok(solver.solve())
    }
}

/// Drops the first entry of every length-`p` block and repeats the last.
fn shift_blocks(v: &[f64], p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    for block in v.chunks(p) {
        out.extend_from_slice(&block[1.min(block.len())..]);
        out.push(*block.last().unwrap_or(&0.0));
    }
    out
}

fn active_tags(solver: &QpSolver, sol: &QpSolution, p: usize) -> Vec<&'static str> {
    let pr = solver.problem();
    let ax = &pr.a * &sol.x;
    let mut tags = Vec::new();
    for (b, tag) in TAGS.iter().enumerate() {
        // only the first step matters for what is actuated
        let i = b * p;
        let tol = 1e-6 * (1.0 + ax[i].abs());
        if (ax[i] - pr.l[i]).abs() <= tol || (pr.u[i] - ax[i]).abs() <= tol {
            if *tag != "move_up" && *tag != "move_down" {
                tags.push(*tag);
            }
        }
    }
    tags
}

/// TTC simulation of the battery under a planned AC trajectory.
fn simulate(state: &BessState, b_set: &[f64], bess: &BessConfig, dt: f64) -> Vec<BessState> {
    let disc = discretize_ttc(&bess.ttc, dt);
    let mut s = *state;
    let mut out = Vec::with_capacity(b_set.len());
    for &b in b_set {
        let b_dc = bess.ac_to_dc(b);
        let v0 = disc.free_voltage(bess.ttc.ocv(s.soe), &s.x);
        let i = disc.current_for_power(v0, b_dc * 1000.0).unwrap_or(b_dc * 1000.0 / v0.max(1.0));
        s = BessState {
            soe: s.soe + b_dc * dt / (SECONDS_PER_HOUR * bess.capacity_kwh),
            x: disc.advance(&s.x, i),
            v_dc: v0 + disc.psi_i * i,
            v_ac: s.v_ac,
            i_dc: i,
        };
        out.push(s);
    }
    out
}

pub fn predict_soe(state: &BessState, b_set: &[f64], bess: &BessConfig, dt: f64) -> Vec<f64> {
    simulate(state, b_set, bess, dt).iter().map(|s| s.soe).collect()
}

/// Capability box for each step, evaluated at the state entering that step.
pub fn predicted_boxes(state: &BessState, b_set: &[f64], bess: &BessConfig, dt: f64) -> Vec<(f64, f64)> {
    let traj = simulate(state, b_set, bess, dt);
    let mut boxes = Vec::with_capacity(b_set.len());
    boxes.push(capability(state, bess));
    for s in traj.iter().take(b_set.len().saturating_sub(1)) {
        boxes.push(capability(s, bess));
    }
    boxes
}
