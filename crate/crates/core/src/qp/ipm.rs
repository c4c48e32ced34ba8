//! Dense primal-dual interior-point method (Mehrotra predictor-corrector).
//!
//! Used by [`super::QpSolver`] on problems where ADMM stalls, typically
//! degenerate instances with many weakly active coupling rows. Rows with
//! `l == u` are equalities; every finite side of the other rows becomes a
//! one-sided inequality with its own slack.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use super::sparse::Csr;

const MAX_ITER: usize = 60;
const STEP_FRACTION: f64 = 0.995;
const REG: f64 = 1e-11;

enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

pub(crate) struct IpmResult {
    pub x: DVector<f64>,
    /// Multipliers in the `l <= Ax <= u` convention: positive on upper bounds.
    pub y: DVector<f64>,
    /// Largest of the residuals and the mean complementarity at `x`.
    pub merit: f64,
}

/// Solves `min 1/2 x'Px + q'x  s.t.  l <= Ax <= u` starting from `x0`,
/// stopping once residuals and complementarity are below `tol` (absolute,
/// infinity norm). Returns the best iterate found.
pub(crate) fn solve(
    p: &DMatrix<f64>,
    q: &[f64],
    a: &Csr,
    l: &[f64],
    u: &[f64],
    x0: &[f64],
    tol: f64,
) -> IpmResult {
    let n = p.nrows();
    let m = a.nrows;

    let eq_rows: Vec<usize> = (0..m).filter(|&i| l[i] == u[i]).collect();
    // (row, sign, bound): sign * a_i x <= bound
    let mut ineq: Vec<(usize, f64, f64)> = Vec::new();
    for i in 0..m {
        if l[i] == u[i] {
            continue;
        }
        if u[i].is_finite() {
            ineq.push((i, 1.0, u[i]));
        }
        if l[i].is_finite() {
            ineq.push((i, -1.0, -l[i]));
        }
    }
    let ne = eq_rows.len();
    let ni = ineq.len();

    let mut x = DVector::from_column_slice(x0);
    let mut ax = vec![0.0; m];
    a.mul_vec(x.as_slice(), &mut ax);
    let mut s = DVector::from_iterator(ni, ineq.iter().map(|&(i, sg, h)| (h - sg * ax[i]).max(1.0)));
    let mut lam = DVector::<f64>::from_element(ni, 1.0);
    let mut nu = DVector::<f64>::zeros(ne);

    let mut y = vec![0.0; m];
    // Near the end the Newton systems lose accuracy and the residuals can
    // grow again, so the best iterate seen is what gets returned.
    let mut best = (x.clone(), vec![0.0; m], f64::INFINITY);
    let mut aty = vec![0.0; n];
    let mut wrow = vec![0.0; m];
    let gather_y = |nu: &DVector<f64>, lam: &DVector<f64>, y: &mut [f64]| {
        y.fill(0.0);
        for (r, &i) in eq_rows.iter().enumerate() {
            y[i] = nu[r];
        }
        for (r, &(i, sg, _)) in ineq.iter().enumerate() {
            y[i] += sg * lam[r];
        }
    };
    let inf = |v: &DVector<f64>| if v.is_empty() { 0.0 } else { v.amax() };

    // Equality rows as dense columns of the KKT matrix.
    let mut e_cols = DMatrix::<f64>::zeros(n, ne);
    {
        let mut unit = vec![0.0; m];
        let mut col = vec![0.0; n];
        for (r, &i) in eq_rows.iter().enumerate() {
            unit[i] = 1.0;
            a.mul_t_vec(&unit, &mut col);
            unit[i] = 0.0;
            e_cols.set_column(r, &DVector::from_column_slice(&col));
        }
    }

    let mut tmp_m = vec![0.0; m];
    let mut tmp_n = vec![0.0; n];
    for _ in 0..MAX_ITER {
        a.mul_vec(x.as_slice(), &mut ax);
        gather_y(&nu, &lam, &mut y);
        a.mul_t_vec(&y, &mut aty);
        let r_d = p * &x + DVector::from_iterator(n, (0..n).map(|j| q[j] + aty[j]));
        let r_e = DVector::from_iterator(ne, eq_rows.iter().map(|&i| ax[i] - l[i]));
        let r_p = DVector::from_iterator(ni, ineq.iter().enumerate().map(|(r, &(i, sg, h))| sg * ax[i] + s[r] - h));
        let mu = if ni > 0 { s.dot(&lam) / ni as f64 } else { 0.0 };
        let merit = inf(&r_d).max(inf(&r_e)).max(inf(&r_p)).max(mu);
        if merit < best.2 {
            best = (x.clone(), y.clone(), merit);
        }
        if merit <= tol {
            break;
        }

        let w = lam.component_div(&s);
        wrow.fill(0.0);
        for (r, &(i, _, _)) in ineq.iter().enumerate() {
            wrow[i] += w[r];
        }
        let mut h = p.clone();
        a.add_weighted_gram(&wrow, &mut h);
        for j in 0..n {
            h[(j, j)] += REG;
        }
        let dim = n + ne;
        let factor = if ne == 0 {
            match h.cholesky() {
                Some(c) => Factor::Cholesky(c),
                None => break,
            }
        } else {
            let mut kkt = DMatrix::<f64>::zeros(dim, dim);
            kkt.view_mut((0, 0), (n, n)).copy_from(&h);
            kkt.view_mut((0, n), (n, ne)).copy_from(&e_cols);
            kkt.view_mut((n, 0), (ne, n)).copy_from(&e_cols.transpose());
            for r in 0..ne {
                kkt[(n + r, n + r)] = -REG;
            }
            Factor::Lu(kkt.lu())
        };

        // Newton direction with complementarity residual r_c (s.lam minus target).
        let mut direction = |r_c: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            tmp_m.fill(0.0);
            for (r, &(i, sg, _)) in ineq.iter().enumerate() {
                tmp_m[i] += sg * (w[r] * r_p[r] - r_c[r] / s[r]);
            }
            a.mul_t_vec(&tmp_m, &mut tmp_n);
            let mut rhs = DVector::<f64>::zeros(dim);
            for j in 0..n {
                rhs[j] = -r_d[j] - tmp_n[j];
            }
            for r in 0..ne {
                rhs[n + r] = -r_e[r];
            }
            let sol = match &factor {
                Factor::Cholesky(c) => c.solve(&rhs),
                Factor::Lu(lu) => lu.solve(&rhs)?,
            };
            let dx = sol.rows(0, n).into_owned();
            let dnu = sol.rows(n, ne).into_owned();
            a.mul_vec(dx.as_slice(), &mut tmp_m);
            let gdx = DVector::from_iterator(ni, ineq.iter().map(|&(i, sg, _)| sg * tmp_m[i]));
            let ds = -&r_p - &gdx;
            let dlam = w.component_mul(&(&r_p + &gdx)) - r_c.component_div(&s);
            Some((dx, dnu, ds, dlam))
        };
        let max_step = |v: &DVector<f64>, dv: &DVector<f64>| {
            v.iter().zip(dv.iter()).filter(|(_, &d)| d < 0.0).map(|(&vi, &d)| -vi / d).fold(1.0f64, f64::min)
        };

        let sl = s.component_mul(&lam);
        let Some((_, _, ds_a, dl_a)) = direction(&sl) else { break };
        let a_aff = max_step(&s, &ds_a).min(max_step(&lam, &dl_a));
        let sigma = if ni > 0 {
            let mu_aff = (&s + &ds_a * a_aff).dot(&(&lam + &dl_a * a_aff)) / ni as f64;
            (mu_aff / mu).powi(3)
        } else {
            0.0
        };
        let r_c = sl + ds_a.component_mul(&dl_a) - DVector::from_element(ni, sigma * mu);
        let Some((dx, dnu, ds, dlam)) = direction(&r_c) else { break };
        let alpha = (STEP_FRACTION * max_step(&s, &ds).min(max_step(&lam, &dlam))).min(1.0);
        x += &dx * alpha;
        nu += &dnu * alpha;
        s += &ds * alpha;
        lam += &dlam * alpha;
        if x.iter().chain(lam.iter()).any(|v| !v.is_finite()) {
            break;
        }
    }

    let (x, y, merit) = best;
    IpmResult { x, y: DVector::from_vec(y), merit }
}
