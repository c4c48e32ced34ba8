use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ipm;
use super::sparse::Csr;
use super::{check_bounds, residuals, QpError, QpProblem, QpSettings, QpSolution, QpStatus, INFINITY_BOUND};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;
const INFEASIBILITY_CHECK_INTERVAL: usize = 10;
const POLISH_DELTA: f64 = 1e-7;
const POLISH_REFINE_ITERS: usize = 8;
const POLISH_RETRY_INTERVAL: usize = 25;
const POLISH_ROUNDS: usize = 12;
/// ADMM iterations allowed before the interior-point fallback while one of
/// the last `STALL_MEMORY` solves needed it.
const STALLED_BUDGET: usize = 50;
const STALL_MEMORY: usize = 120;

/// ADMM workspace for one problem structure.
///
/// The matrices `P` and `A` are fixed at construction; `q`, `l` and `u` can be
/// replaced between solves, and the previous iterate is kept so consecutive
/// solves of slowly changing problems start warm.
#[derive(Debug, Clone)]
pub struct QpSolver {
    settings: QpSettings,
    original: QpProblem,
    n: usize,
    m: usize,
    // Ruiz scaling: x = D x_s, constraint rows scaled by E, cost by c.
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    p_s: DMatrix<f64>,
    a_s: DMatrix<f64>,
    p_csr: Csr,
    a_csr: Csr,
    q_s: Vec<f64>,
    l_s: Vec<f64>,
    u_s: Vec<f64>,
    rho: f64,
    rho_vec: Vec<f64>,
    kkt: Cholesky<f64, Dyn>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    /// Solves left with the reduced ADMM budget.
    stalled: usize,
}

impl QpSolver {
    pub fn new(problem: &QpProblem, settings: QpSettings) -> Result<Self, QpError> {
        let n = problem.n();
        let m = problem.m();
        let (d, e, c, p_s, a_s) = ruiz_scale(&problem.p, &problem.a, &problem.q, settings.scaling_iters);
        let p_csr = Csr::from_dense(&p_s);
        let a_csr = Csr::from_dense(&a_s);
        let rho = settings.rho.clamp(RHO_MIN, RHO_MAX);
        let mut solver = Self {
            original: problem.clone(),
            n,
            m,
            d,
            e,
            c,
            p_s,
            a_s,
            p_csr,
            a_csr,
            q_s: vec![0.0; n],
            l_s: vec![0.0; m],
            u_s: vec![0.0; m],
            rho,
            rho_vec: vec![rho; m],
            // placeholder, replaced by refactor() below
            kkt: Cholesky::new(DMatrix::identity(1, 1)).ok_or(QpError::Factorization)?,
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
            stalled: 0,
            settings,
        };
        solver.load_vectors();
        solver.refactor()?;
        Ok(solver)
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    pub fn problem(&self) -> &QpProblem {
        &self.original
    }

    /// True when `other` has the same `P` and `A` as the loaded problem, so that
    /// [`update_vectors`](Self::update_vectors) can be used instead of a rebuild.
    pub fn same_structure(&self, other: &QpProblem) -> bool {
        self.original.p == other.p && self.original.a == other.a
    }

    /// Replaces `q`, `l` and `u`, keeping the factorisation and the current iterate.
    pub fn update_vectors(
        &mut self,
        q: &DVector<f64>,
        l: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(), QpError> {
        if q.len() != self.n || l.len() != self.m || u.len() != self.m {
            return Err(QpError::Dimension("update_vectors: lengths differ from the loaded problem".into()));
        }
        check_bounds(l, u)?;
        let old_rho = self.rho_vec.clone();
        self.original.q = q.clone();
        self.original.l = l.clone();
        self.original.u = u.clone();
        self.load_vectors();
        if old_rho != self.rho_vec {
            self.refactor()?;
        }
        Ok(())
    }

    /// Sets the starting iterate from an (unscaled) primal-dual pair.
    pub fn warm_start(&mut self, x: &[f64], y: &[f64]) {
        if x.len() == self.n {
            for j in 0..self.n {
                self.x[j] = x[j] / self.d[j];
            }
        }
        if y.len() == self.m {
            for i in 0..self.m {
                self.y[i] = self.c * y[i] / self.e[i];
            }
        }
        let mut ax = vec![0.0; self.m];
        self.a_csr.mul_vec(&self.x, &mut ax);
        for i in 0..self.m {
            self.z[i] = ax[i].clamp(self.l_s[i], self.u_s[i]);
        }
    }

    /// Resets the iterate to zero.
    pub fn cold_start(&mut self) {
        self.x.fill(0.0);
        self.z.fill(0.0);
        self.y.fill(0.0);
    }

    fn load_vectors(&mut self) {
        let pr = &self.original;
        for j in 0..self.n {
            self.q_s[j] = self.c * self.d[j] * pr.q[j];
        }
        for i in 0..self.m {
            let (lo, hi) = (pr.l[i], pr.u[i]);
            self.l_s[i] = if lo <= -INFINITY_BOUND { f64::NEG_INFINITY } else { self.e[i] * lo };
            self.u_s[i] = if hi >= INFINITY_BOUND { f64::INFINITY } else { self.e[i] * hi };
            self.rho_vec[i] = row_rho(self.rho, self.l_s[i], self.u_s[i]);
        }
    }

    fn refactor(&mut self) -> Result<(), QpError> {
        let n = self.n;
        let mut k = self.p_s.clone();
        for j in 0..n {
            k[(j, j)] += self.settings.sigma;
        }
        if self.m > 0 {
            let mut ra = self.a_s.clone();
            for (i, mut row) in ra.row_iter_mut().enumerate() {
                row *= self.rho_vec[i];
            }
            k += self.a_s.transpose() * ra;
        }
        self.kkt = Cholesky::new(k).ok_or(QpError::Factorization)?;
        Ok(())
    }

    fn set_rho(&mut self, rho: f64) -> Result<(), QpError> {
        self.rho = rho.clamp(RHO_MIN, RHO_MAX);
        for i in 0..self.m {
            self.rho_vec[i] = row_rho(self.rho, self.l_s[i], self.u_s[i]);
        }
        self.refactor()
    }

    /// Runs ADMM from the current iterate.
    pub fn solve(&mut self) -> QpSolution {
        let (n, m) = (self.n, self.m);
        let st = self.settings.clone();
        let alpha = st.alpha;
        let sigma = st.sigma;

        let mut rhs = DVector::<f64>::zeros(n);
        let mut tmp_m = vec![0.0; m];
        let mut tmp_n = vec![0.0; n];
        let mut ax = vec![0.0; m];
        let mut px = vec![0.0; n];
        let mut aty = vec![0.0; n];
        let mut y_prev = vec![0.0; m];
        let mut last_polish: Option<usize> = None;
        let mut prev_proposal: Option<f64> = None;

        let trigger = (st.eps_abs * 1e3).max(1e-4);
        let budget = if self.stalled > 0 { st.max_iter.min(STALLED_BUDGET) } else { st.max_iter };
        self.stalled = self.stalled.saturating_sub(1);

        for i in 0..m {
            self.z[i] = self.z[i].clamp(self.l_s[i], self.u_s[i]);
        }
        // A warm start may already be optimal.
        let (prim, dual) = self.scaled_residuals(&mut ax, &mut px, &mut aty);
        if prim <= st.eps_abs && dual <= st.eps_abs {
            return self.finish(0, QpStatus::Solved);
        }

        for iter in 1..=budget {
            y_prev.copy_from_slice(&self.y);

            // x-update: (P + sigma I + A' R A) xt = sigma x - q + A'(R z - y)
            for i in 0..m {
                tmp_m[i] = self.rho_vec[i] * self.z[i] - self.y[i];
            }
            self.a_csr.mul_t_vec(&tmp_m, &mut tmp_n);
            for j in 0..n {
                rhs[j] = sigma * self.x[j] - self.q_s[j] + tmp_n[j];
            }
            self.kkt.solve_mut(&mut rhs);
            self.a_csr.mul_vec(rhs.as_slice(), &mut ax);

            for j in 0..n {
                self.x[j] = alpha * rhs[j] + (1.0 - alpha) * self.x[j];
            }
            for i in 0..m {
                let z_relaxed = alpha * ax[i] + (1.0 - alpha) * self.z[i];
                let z_new = (z_relaxed + self.y[i] / self.rho_vec[i]).clamp(self.l_s[i], self.u_s[i]);
                self.y[i] += self.rho_vec[i] * (z_relaxed - z_new);
                self.z[i] = z_new;
            }

            let (prim, dual) = self.scaled_residuals(&mut ax, &mut px, &mut aty);
            if prim <= st.eps_abs && dual <= st.eps_abs {
                return self.finish(iter, QpStatus::Solved);
            }

            if st.polish
                && prim.max(dual) <= trigger
                && last_polish.is_none_or(|p| iter >= p + POLISH_RETRY_INTERVAL)
            {
                last_polish = Some(iter);
                if let Some(sol) = self.polish(iter) {
                        return sol;
                }
            }

            if iter % INFEASIBILITY_CHECK_INTERVAL == 0 && self.primal_infeasible(&y_prev, &mut tmp_m, &mut tmp_n)
            {
                return self.finish(iter, QpStatus::Infeasible);
            }

            if st.adaptive_rho_interval > 0 && iter % st.adaptive_rho_interval == 0 && m > 0 {
                // Residuals of ADMM often oscillate; only move rho when two
                // consecutive proposals agree on the direction.
                let proposal = self.proposed_rho(&ax, &px, &aty) / self.rho;
                let side = |r: f64| if r > 5.0 { 1 } else if r < 0.2 { -1 } else { 0 };
                if let Some(prev) = prev_proposal {
                    if side(proposal) != 0 && side(proposal) == side(prev) {
                        let new_rho = self.rho * (proposal * prev).sqrt();
                        if self.set_rho(new_rho).is_err() {
                            break;
                        }
                        prev_proposal = None;
                        continue;
                    }
                }
                prev_proposal = Some(proposal);
            }
        }
        self.stalled = STALL_MEMORY;
        self.interior_point(budget).unwrap_or_else(|| self.finish(budget, QpStatus::MaxIter))
    }

    /// Fallback when ADMM runs out of iterations: an interior-point solve of
    /// the scaled problem, polished like an ADMM iterate.
    fn interior_point(&mut self, iterations: usize) -> Option<QpSolution> {
        let res = ipm::solve(&self.p_s, &self.q_s, &self.a_csr, &self.l_s, &self.u_s, &self.x, 1e-3 * self.settings.eps_abs);
        if !res.merit.is_finite() {
            return None;
        }
        self.x.copy_from_slice(res.x.as_slice());
        self.y.copy_from_slice(res.y.as_slice());
        let ax = &self.a_s * &res.x;
        for i in 0..self.m {
            self.z[i] = ax[i].clamp(self.l_s[i], self.u_s[i]);
        }
        if self.settings.polish {
            if let Some(sol) = self.polish(iterations) {
                return Some(sol);
            }
        }
        let (x, y) = self.unscaled_iterate();
        let sol = self.package(x, y, iterations, QpStatus::Solved, false);
        (sol.primal_res <= self.settings.eps_abs && sol.dual_res <= self.settings.eps_abs).then_some(sol)
    }

    /// Unscaled residual estimates of the current iterate. Leaves `A x`, `P x`
    /// and `A' y` (scaled) in the buffers.
    fn scaled_residuals(&self, ax: &mut [f64], px: &mut [f64], aty: &mut [f64]) -> (f64, f64) {
        self.a_csr.mul_vec(&self.x, ax);
        self.p_csr.mul_vec(&self.x, px);
        self.a_csr.mul_t_vec(&self.y, aty);
        let mut prim: f64 = 0.0;
        for i in 0..self.m {
            prim = prim.max(((ax[i] - self.z[i]) / self.e[i]).abs());
        }
        let mut dual: f64 = 0.0;
        for j in 0..self.n {
            dual = dual.max(((px[j] + self.q_s[j] + aty[j]) / (self.c * self.d[j])).abs());
        }
        (prim, dual)
    }

    fn proposed_rho(&self, ax: &[f64], px: &[f64], aty: &[f64]) -> f64 {
        let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let prim: f64 = (0..self.m).fold(0.0, |a, i| a.max((ax[i] - self.z[i]).abs()));
        let dual: f64 = (0..self.n).fold(0.0, |a, j| a.max((px[j] + self.q_s[j] + aty[j]).abs()));
        let prim_norm = inf_norm(ax).max(inf_norm(&self.z)).max(1e-12);
        let dual_norm = inf_norm(px).max(inf_norm(aty)).max(inf_norm(&self.q_s)).max(1e-12);
        let ratio = ((prim / prim_norm) / (dual / dual_norm).max(1e-30)).sqrt();
        if !ratio.is_finite() {
            return self.rho;
        }
        (self.rho * ratio).clamp(RHO_MIN, RHO_MAX)
    }

    /// Primal infeasibility certificate on the dual increment.
    fn primal_infeasible(&self, y_prev: &[f64], dy: &mut [f64], atdy: &mut [f64]) -> bool {
        if self.m == 0 {
            return false;
        }
        for i in 0..self.m {
            dy[i] = self.y[i] - y_prev[i];
        }
        let dy_norm = (0..self.m).fold(0.0f64, |a, i| a.max((self.e[i] * dy[i]).abs()));
        if dy_norm < 1e-12 {
            return false;
        }
        let eps = self.settings.eps_infeasible;
        self.a_csr.mul_t_vec(dy, atdy);
        let at_norm = (0..self.n).fold(0.0f64, |a, j| a.max((atdy[j] / self.d[j]).abs()));
        if at_norm > eps * dy_norm {
            return false;
        }
        let mut support = 0.0;
        for i in 0..self.m {
            let v = dy[i];
            if v.abs() * self.e[i] <= 1e-12 * dy_norm {
                continue;
            }
            if v > 0.0 {
                if self.u_s[i].is_infinite() {
                    return false;
                }
                support += self.u_s[i] * v;
            } else {
                if self.l_s[i].is_infinite() {
                    return false;
                }
                support += self.l_s[i] * v;
            }
        }
        support < -eps * dy_norm
    }

    fn unscaled_iterate(&self) -> (DVector<f64>, DVector<f64>) {
        let x = DVector::from_iterator(self.n, (0..self.n).map(|j| self.d[j] * self.x[j]));
        let y = DVector::from_iterator(self.m, (0..self.m).map(|i| self.e[i] * self.y[i] / self.c));
        (x, y)
    }

    fn finish(&mut self, iterations: usize, status: QpStatus) -> QpSolution {
        let (x, y) = self.unscaled_iterate();
        let mut sol = self.package(x, y, iterations, status, false);
        if status == QpStatus::Solved && self.settings.polish {
            if let Some(polished) = self.polish(iterations) {
                if polished.primal_res <= sol.primal_res.max(self.settings.eps_abs)
                    && polished.dual_res <= sol.dual_res.max(self.settings.eps_abs)
                {
                    sol = polished;
                }
            }
        }
        sol
    }

    fn package(
        &self,
        x: DVector<f64>,
        y: DVector<f64>,
        iterations: usize,
        status: QpStatus,
        polished: bool,
    ) -> QpSolution {
        let (primal_res, dual_res) = residuals(&self.original, &x, &y);
        let objective = self.original.objective(&x);
        QpSolution { x, y, status, primal_res, dual_res, iterations, objective, polished }
    }

    /// Guesses the active set from the iterate and solves the equality-constrained
    /// KKT system on it, then corrects the guess for a few rounds: rows whose
    /// multiplier has the wrong sign are released and violated rows are added.
    /// Returns a solution only if it meets the tolerance. On success the
    /// workspace iterate is replaced by the polished point.
    fn polish(&mut self, iterations: usize) -> Option<QpSolution> {
        let m = self.m;
        // -1 lower, +1 upper, 2 equality, 0 inactive
        let mut side = vec![0i8; m];
        for i in 0..m {
            let (lo, hi) = (self.l_s[i], self.u_s[i]);
            if lo == hi {
                side[i] = 2;
            } else if self.z[i] - lo < -self.y[i] {
                side[i] = -1;
            } else if hi - self.z[i] < self.y[i] {
                side[i] = 1;
            }
        }
        let tol = self.settings.eps_abs;
        for _ in 0..POLISH_ROUNDS {
            let (xs, ys_active, active) = self.solve_reduced_kkt(&side)?;
            let mut changed = false;
            for (r, &i) in active.iter().enumerate() {
                let yi = self.e[i] * ys_active[r] / self.c;
                if (side[i] == -1 && yi > tol) || (side[i] == 1 && yi < -tol) {
                    side[i] = 0;
                    changed = true;
                }
            }
            let mut ax = vec![0.0; m];
            self.a_csr.mul_vec(xs.as_slice(), &mut ax);
            for i in 0..m {
                if side[i] != 0 {
                    continue;
                }
                let slack = tol * self.e[i];
                if ax[i] < self.l_s[i] - slack {
                    side[i] = -1;
                    changed = true;
                } else if ax[i] > self.u_s[i] + slack {
                    side[i] = 1;
                    changed = true;
                }
            }
            if changed {
                continue;
            }

            let x = DVector::from_iterator(self.n, (0..self.n).map(|j| self.d[j] * xs[j]));
            let mut y = DVector::<f64>::zeros(m);
            let mut y_s = vec![0.0; m];
            for (r, &i) in active.iter().enumerate() {
                let yi = self.e[i] * ys_active[r] / self.c;
                // clean multipliers of the wrong sign that are within tolerance
                let yi = match side[i] {
                    -1 => yi.min(0.0),
                    1 => yi.max(0.0),
                    _ => yi,
                };
                y[i] = yi;
                y_s[i] = self.c * yi / self.e[i];
            }
            let sol = self.package(x, y, iterations, QpStatus::Solved, true);
            if sol.primal_res > tol || sol.dual_res > tol {
                return None;
            }
            self.x.copy_from_slice(xs.as_slice());
            self.y = y_s;
            for i in 0..m {
                self.z[i] = ax[i].clamp(self.l_s[i], self.u_s[i]);
            }
            return Some(sol);
        }
        None
    }

    /// Solves `min 1/2 x'Px + q'x` with the rows marked in `side` held at their
    /// bounds (scaled problem). Returns `x`, the multipliers of the active rows
    /// and the active row indices.
    fn solve_reduced_kkt(&self, side: &[i8]) -> Option<(DVector<f64>, DVector<f64>, Vec<usize>)> {
        let (n, m) = (self.n, self.m);
        let active: Vec<usize> = (0..m).filter(|&i| side[i] != 0).collect();
        let delta = POLISH_DELTA;
        let mut weight = vec![0.0; m];
        let mut b = vec![0.0; m];
        for &i in &active {
            weight[i] = 1.0 / delta;
            b[i] = match side[i] {
                1 => self.u_s[i],
                _ => self.l_s[i],
            };
        }
        let mut reduced = self.p_s.clone();
        for j in 0..n {
            reduced[(j, j)] += delta;
        }
        self.a_csr.add_weighted_gram(&weight, &mut reduced);
        let chol = Cholesky::new(reduced)?;

        // Solves the regularised system [[P + dI, Aa'], [Aa, -dI]] t = r, with
        // the active-row parts of `r2` and `y` stored at their row indices.
        let mut tmp_m = vec![0.0; m];
        let mut tmp_n = vec![0.0; n];
        let mut solve_reg = |r1: &DVector<f64>, r2: &[f64], y: &mut [f64]| -> DVector<f64> {
            for i in 0..m {
                tmp_m[i] = weight[i] * r2[i];
            }
            self.a_csr.mul_t_vec(&tmp_m, &mut tmp_n);
            let mut rhs = r1.clone();
            for j in 0..n {
                rhs[j] += tmp_n[j];
            }
            let x = chol.solve(&rhs);
            self.a_csr.mul_vec(x.as_slice(), &mut tmp_m);
            for i in 0..m {
                y[i] = weight[i] * (tmp_m[i] - r2[i]);
            }
            x
        };

        let g1 = -DVector::from_column_slice(&self.q_s);
        let mut ys = vec![0.0; m];
        let mut xs = solve_reg(&g1, &b, &mut ys);
        let mut dy = vec![0.0; m];
        let mut r2 = vec![0.0; m];
        let mut ax = vec![0.0; m];
        let mut aty = vec![0.0; n];
        for _ in 0..POLISH_REFINE_ITERS {
            // residual against the unregularised KKT matrix
            self.a_csr.mul_t_vec(&ys, &mut aty);
            let r1 = &g1 - (&self.p_s * &xs + DVector::from_column_slice(&aty));
            self.a_csr.mul_vec(xs.as_slice(), &mut ax);
            let mut worst = r1.amax();
            for &i in &active {
                r2[i] = b[i] - ax[i];
                worst = worst.max(r2[i].abs());
            }
            if worst < 1e-14 {
                break;
            }
            let dx = solve_reg(&r1, &r2, &mut dy);
            xs += dx;
            for &i in &active {
                ys[i] += dy[i];
            }
        }
        let ys = DVector::from_iterator(active.len(), active.iter().map(|&i| ys[i]));
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        Some((xs, ys, active))
    }
}

fn row_rho(rho: f64, lo: f64, hi: f64) -> f64 {
    if lo.is_infinite() && hi.is_infinite() {
        RHO_MIN
    } else if lo == hi {
        (rho * RHO_EQ_FACTOR).min(RHO_MAX)
    } else {
        rho
    }
}

type Scaling = (Vec<f64>, Vec<f64>, f64, DMatrix<f64>, DMatrix<f64>);

/// Modified Ruiz equilibration of the KKT matrix `[[P, A'], [A, 0]]` plus cost scaling.
fn ruiz_scale(p: &DMatrix<f64>, a: &DMatrix<f64>, q: &DVector<f64>, iters: usize) -> Scaling {
    let n = p.nrows();
    let m = a.nrows();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let mut ps = p.clone();
    let mut as_ = a.clone();
    let inv_sqrt = |v: f64| if v < SCALE_MIN { 1.0 } else { (1.0 / v.sqrt()).clamp(SCALE_MIN, SCALE_MAX) };

    for _ in 0..iters {
        let dd: Vec<f64> = (0..n)
            .map(|j| {
                let pn = ps.column(j).amax();
                let an = if m > 0 { as_.column(j).amax() } else { 0.0 };
                inv_sqrt(pn.max(an))
            })
            .collect();
        let ee: Vec<f64> = (0..m).map(|i| inv_sqrt(as_.row(i).amax())).collect();
        for j in 0..n {
            for i in 0..n {
                ps[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                as_[(i, j)] *= ee[i] * dd[j];
            }
        }
        for j in 0..n {
            d[j] *= dd[j];
        }
        for i in 0..m {
            e[i] *= ee[i];
        }
    }

    let mean_col = if n > 0 { (0..n).map(|j| ps.column(j).amax()).sum::<f64>() / n as f64 } else { 0.0 };
    let q_norm = (0..n).fold(0.0f64, |acc, j| acc.max((d[j] * q[j]).abs()));
    let scale = mean_col.max(q_norm);
    let c = if scale < SCALE_MIN { 1.0 } else { (1.0 / scale).clamp(SCALE_MIN, SCALE_MAX) };
    ps *= c;
    (d, e, c, ps, as_)
}
