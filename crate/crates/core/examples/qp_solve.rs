//! Solves a small box- and row-constrained QP, then re-solves it warm after
//! shifting the bounds. Pass a directory to also dump the problem as CSV.
//!
//! cargo run --release --example qp_solve [dump_dir]

use hydro_fcr::qp::{QpProblem, QpSettings, QpSolver};
use nalgebra::{DMatrix, DVector};

fn main() -> anyhow::Result<()> {
    // min (x0 - 1)^2 + (x1 - 2)^2 + x0 x1  s.t.  x0 + x1 <= 1.5, 0 <= x <= 1
    let p = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    let q = DVector::from_row_slice(&[-2.0, -4.0]);
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    let l = DVector::from_row_slice(&[f64::NEG_INFINITY, 0.0, 0.0]);
    let u = DVector::from_row_slice(&[1.5, 1.0, 1.0]);
    let problem = QpProblem::new(p, q.clone(), a, l.clone(), u)?;

    if let Some(dir) = std::env::args().nth(1) {
        std::fs::create_dir_all(&dir)?;
        problem.dump_csv(std::path::Path::new(&dir))?;
        println!("problem written to {dir}");
    }

    let mut solver = QpSolver::new(&problem, QpSettings::default())?;
    let sol = solver.solve();
    println!(
        "status {:?}, x = [{:.6}, {:.6}], y = [{:.4}, {:.4}, {:.4}], objective {:.6}, {} iterations, polished {}",
        sol.status, sol.x[0], sol.x[1], sol.y[0], sol.y[1], sol.y[2], sol.objective, sol.iterations, sol.polished
    );

    let tighter = DVector::from_row_slice(&[1.0, 1.0, 1.0]);
    solver.update_vectors(&q, &l, &tighter)?;
    let warm = solver.solve();
    println!(
        "x0 + x1 <= 1: x = [{:.6}, {:.6}], objective {:.6}, {} iterations",
        warm.x[0], warm.x[1], warm.objective, warm.iterations
    );
    Ok(())
}
