#![allow(dead_code)]

use hydro_fcr::control::lower::LowerLayerInput;
use hydro_fcr::control::upper::UpperLayerInput;
use hydro_fcr::domain::{BessConfig, PlantConfig, TtcParams};
use hydro_fcr::forecast::WForecast;
use hydro_fcr::plant::BessState;
use hydro_fcr::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random feasible convex QP with `n <= max_n`. Mixes singular and definite
/// `P`, equality rows, one-sided rows and free rows.
pub fn random_qp<R: Rng>(rng: &mut R, max_n: usize) -> QpProblem {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(0..=(3 * n / 2 + 2));
    let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };

    let k = rng.random_range(1..=n);
    let mf = DMatrix::from_fn(k, n, |_, _| normal(rng));
    let mut p = mf.transpose() * &mf;
    let singular = k < n && rng.random_bool(0.7);
    if !singular {
        for j in 0..n {
            p[(j, j)] += rng.random_range(0.01..1.0);
        }
    }
    let q = DVector::from_fn(n, |_, _| 3.0 * normal(rng));

    let x0 = DVector::from_fn(n, |_, _| normal(rng));
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut n_eq = 0;
    for _ in 0..m {
        let row: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { normal(rng) })
            .collect();
        let v: f64 = row.iter().zip(x0.iter()).map(|(a, b)| a * b).sum();
        let kind = rng.random_range(0..10);
        let (l, u) = match kind {
            0 if n_eq < n / 2 => {
                n_eq += 1;
                (v, v)
            }
            1 => (v - rng.random_range(0.0..1.0), f64::INFINITY),
            2 => (f64::NEG_INFINITY, v + rng.random_range(0.0..1.0)),
            3 => (f64::NEG_INFINITY, f64::INFINITY),
            _ => (v - rng.random_range(0.0..1.0), v + rng.random_range(0.0..1.0)),
        };
        rows.push(row);
        lo.push(l);
        hi.push(u);
    }
    if singular {
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            rows.push(row);
            lo.push(x0[j] - 5.0);
            hi.push(x0[j] + 5.0);
        }
    }
    let mm = rows.len();
    let a = DMatrix::from_fn(mm, n, |i, j| rows[i][j]);
    QpProblem::new(p, q, a, DVector::from_vec(lo), DVector::from_vec(hi)).unwrap()
}

/// Reference solution by accelerated projected gradient on the dual of a
/// proximal-point regularisation. Slow but independent of the ADMM code.
/// Returns the primal point.
pub fn qp_projected_gradient(pr: &QpProblem) -> DVector<f64> {
    let n = pr.n();
    let m = pr.m();
    let p_norm = pr.p.amax().max(1.0);
    let t = 100.0 / p_norm;
    let h = &pr.p + DMatrix::identity(n, n) / t;
    let hinv = h.cholesky().expect("P + I/t is definite").inverse();
    let mat = &pr.a * &hinv * pr.a.transpose();
    let lip = if m == 0 { 1.0 } else { 2.0 * mat.clone().symmetric_eigen().eigenvalues.amax().max(1e-12) };
    let step = 1.0 / lip;
    let mrow: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|k| mat[(i, k)]).collect()).collect();

    let up: Vec<Option<f64>> = pr.u.iter().map(|&v| v.is_finite().then_some(v)).collect();
    let lo: Vec<Option<f64>> = pr.l.iter().map(|&v| v.is_finite().then_some(v)).collect();
    let bound_scale = pr.l.iter().chain(pr.u.iter()).filter(|v| v.is_finite()).fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-11 * bound_scale;

    let mut x = DVector::<f64>::zeros(n);
    let mut yp = vec![0.0; m];
    let mut ym = vec![0.0; m];
    let mut ax = vec![0.0; m];
    for _outer in 0..2000 {
        let g = &pr.q - &x / t;
        let b = &pr.a * (&hinv * &g);
        let eval_ax = |yp: &[f64], ym: &[f64], out: &mut [f64]| {
            for i in 0..m {
                let mut acc = b[i];
                for k in 0..m {
                    acc += mrow[i][k] * (yp[k] - ym[k]);
                }
                out[i] = -acc;
            }
        };
        let (mut zp, mut zm) = (yp.clone(), ym.clone());
        let mut theta: f64 = 1.0;
        for it in 0..200_000 {
            eval_ax(&zp, &zm, &mut ax);
            let mut np = vec![0.0; m];
            let mut nm = vec![0.0; m];
            let mut restart = false;
            for i in 0..m {
                if let Some(u) = up[i] {
                    np[i] = (zp[i] + step * (ax[i] - u)).max(0.0);
                }
                if let Some(l) = lo[i] {
                    nm[i] = (zm[i] + step * (l - ax[i])).max(0.0);
                }
            }
            // gradient-based adaptive restart
            let mut dot = 0.0;
            for i in 0..m {
                dot += (zp[i] - np[i]) * (np[i] - yp[i]) + (zm[i] - nm[i]) * (nm[i] - ym[i]);
            }
            if dot > 0.0 {
                restart = true;
            }
            let theta_next = if restart { 1.0 } else { (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0 };
            let beta = if restart { 0.0 } else { (theta - 1.0) / theta_next };
            for i in 0..m {
                zp[i] = np[i] + beta * (np[i] - yp[i]);
                zm[i] = nm[i] + beta * (nm[i] - ym[i]);
            }
            yp = np;
            ym = nm;
            theta = theta_next;

            if it % 20 == 0 {
                eval_ax(&yp, &ym, &mut ax);
                let mut worst: f64 = 0.0;
                for i in 0..m {
                    if let Some(u) = up[i] {
                        worst = worst.max(ax[i] - u).max(yp[i] * (u - ax[i]).abs());
                    }
                    if let Some(l) = lo[i] {
                        worst = worst.max(l - ax[i]).max(ym[i] * (ax[i] - l).abs());
                    }
                }
                if worst <= tol {
                    break;
                }
            }
        }
        let lam = DVector::from_iterator(m, (0..m).map(|i| yp[i] - ym[i]));
        let x_new = -(&hinv * (&g + pr.a.transpose() * &lam));
        let dx = (&x_new - &x).amax();
        x = x_new;
        if dx < 1e-10 * (1.0 + x.amax()) {
            break;
        }
    }
    x
}

/// Worst KKT violation of `(x, y)`: bound violation, stationarity and
/// complementarity (`min(|y_i|, gap to the bound y_i pushes against)`).
pub fn kkt_residual(pr: &QpProblem, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let ax = &pr.a * x;
    let mut worst = (&pr.p * x + &pr.q + pr.a.transpose() * y).amax();
    for i in 0..pr.m() {
        worst = worst.max(pr.l[i] - ax[i]).max(ax[i] - pr.u[i]);
        let gap = if y[i] > 0.0 {
            pr.u[i] - ax[i]
        } else if y[i] < 0.0 {
            ax[i] - pr.l[i]
        } else {
            0.0
        };
        worst = worst.max(y[i].abs().min(gap.abs()));
    }
    worst
}

/// SOE after one hour with offset `b0` (kW) and frequency integral `w` (Hz h),
/// written out from the energy balance.
pub fn soe_end(soe: f64, b0: f64, w: f64, sigma_f: f64, bess: &BessConfig) -> f64 {
    let stored_by_offset = if b0 >= 0.0 { bess.eta_ch * b0 } else { b0 / bess.eta_dch };
    let fcr_power_integral = sigma_f * w;
    let drained_by_fcr = if fcr_power_integral >= 0.0 {
        fcr_power_integral / bess.eta_dch
    } else {
        fcr_power_integral * bess.eta_ch
    };
    soe + (stored_by_offset - drained_by_fcr) / bess.capacity_kwh
}

/// Brute-force hourly offset: scans `B0` over the converter range for the
/// smallest worst-case SOE violation at the two band edges, ties broken by
/// the smallest `|B0|`. Coarse grid at 1e-3 kW, then 1e-6 kW around the best.
pub fn upper_layer_scan(input: &UpperLayerInput) -> f64 {
    let bess = &input.bess;
    let b_ch = bess.max_charge_kw.min(bess.capability.b_rated);
    let b_dch = bess.max_discharge_kw.min(bess.capability.b_rated);
    let fc = &input.forecast;
    let violation = |b0: f64| {
        let low = soe_end(input.soe_meas, b0, fc.w_hat + fc.w_up, input.sigma_f, bess);
        let high = soe_end(input.soe_meas, b0, fc.w_hat - fc.w_down, input.sigma_f, bess);
        (bess.soe_min - low).max(high - bess.soe_max).max(0.0)
    };
    let better = |a: f64, b: f64| {
        let (va, vb) = (violation(a), violation(b));
        va < vb || (va == vb && a.abs() < b.abs())
    };
    let scan = |lo: f64, hi: f64, step: f64, mut best: f64| {
        let n = ((hi - lo) / step).ceil() as usize;
        for k in 0..=n {
            let b = (lo + k as f64 * step).min(hi);
            if better(b, best) {
                best = b;
            }
        }
        best
    };
    let mut best = 0.0;
    for b in [-b_dch, b_ch] {
        if better(b, best) {
            best = b;
        }
    }
    best = scan(-b_dch, b_ch, 1e-3, best);
    scan((best - 2e-3).max(-b_dch), (best + 2e-3).min(b_ch), 1e-6, best)
}

/// Branch voltages of the TTC circuit after `t` seconds of constant current
/// `i`, by classical RK4 with step `h`.
pub fn ttc_rk4(ttc: &TtcParams, x0: [f64; 3], i: f64, t: f64, h: f64) -> [f64; 3] {
    let deriv = |x: &[f64; 3]| -> [f64; 3] {
        let mut d = [0.0; 3];
        for j in 0..3 {
            let (r, c) = ttc.branches[j];
            d[j] = if r > 0.0 { -x[j] / (r * c) + i / c } else { 0.0 };
        }
        d
    };
    let add = |x: &[f64; 3], k: &[f64; 3], s: f64| [x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]];
    let steps = (t / h).round() as usize;
    let mut x = x0;
    for _ in 0..steps {
        let k1 = deriv(&x);
        let k2 = deriv(&add(&x, &k1, h / 2.0));
        let k3 = deriv(&add(&x, &k2, h / 2.0));
        let k4 = deriv(&add(&x, &k3, h));
        for j in 0..3 {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    x
}

/// Random hourly SOE-manager problem, including instances where no offset
/// keeps the band inside the limits.
pub fn random_ul_input<R: Rng>(rng: &mut R) -> UpperLayerInput {
    let power = rng.random_range(2.0..12.0);
    let mut bess = BessConfig::sized(power, rng.random_range(2.0..20.0));
    bess.eta_ch = rng.random_range(0.85..=1.0);
    bess.eta_dch = rng.random_range(0.85..=1.0);
    if rng.random_bool(0.2) {
        bess.max_charge_kw = rng.random_range(0.5..power);
    }
    let mut forecast = WForecast::point(rng.random_range(-0.04..0.04));
    forecast.w_up = rng.random_range(0.0..0.03);
    forecast.w_down = rng.random_range(0.0..0.03);
    UpperLayerInput {
        soe_meas: rng.random_range(0.05..0.95),
        forecast,
        sigma_f: rng.random_range(50.0..200.0),
        bess,
    }
}

/// Lower-layer instance on the default plant with a flat dispatch. The
/// movement penalty then acts on `sum |H_j - H_(j-1)|` with `H_0 = h_set_prev`.
/// With `flat` the frequency forecast sits at nominal.
pub fn random_ll_input<R: Rng>(rng: &mut R, plant: &PlantConfig, bess: &BessConfig, flat: bool) -> LowerLayerInput {
    let p = 30;
    let mut dev: f64 = rng.random_range(-0.06..0.06);
    let f_hat = (0..p)
        .map(|_| {
            dev = 0.9 * dev + 0.01 * rng.sample::<f64, _>(StandardNormal);
            if flat {
                plant.f_nominal
            } else {
                plant.f_nominal + dev
            }
        })
        .collect();
    let b0 = rng.random_range(-1.5..1.5);
    let h_meas = rng.random_range(20.0..35.0);
    LowerLayerInput {
        k: 0,
        f_hat,
        p_disp_horizon: vec![plant.p_disp[0]; p],
        h_meas,
        h_set_prev: h_meas + rng.random_range(-2.0..2.0),
        h_ref_prev: plant.p_disp[0] + b0,
        bess_state: BessState::at_rest(rng.random_range(0.2..0.8), bess),
        b0,
        gamma: 0.4,
        p,
    }
}

/// `sum |H_j - H_(j-1)|` over a hydro set-point plan starting from `h0`.
pub fn total_movement(h0: f64, h_set: &[f64]) -> f64 {
    let mut prev = h0;
    let mut s = 0.0;
    for &h in h_set {
        s += (h - prev).abs();
        prev = h;
    }
    s
}

/// Hourly integrals with a daily profile plus AR(1) noise, Hz·h.
pub fn seasonal_series(seed: u64, days: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = 0.0;
    (0..days * 24)
        .map(|g| {
            noise = 0.5 * noise + 0.002 * rng.sample::<f64, _>(StandardNormal);
            let phase = 2.0 * std::f64::consts::PI * (g % 24) as f64 / 24.0;
            0.01 * phase.sin() + 0.004 * (2.0 * phase).cos() + noise
        })
        .collect()
}

/// Standard normal draws.
pub fn normal(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}
