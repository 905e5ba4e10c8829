use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Box-constrained minimization problem with a list of start points.
pub struct OptProblem<F>
where
    F: Fn(&[f64]) -> f64,
{
    pub objective: F,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub starts: Vec<Vec<f64>>,
}

impl<F> OptProblem<F>
where
    F: Fn(&[f64]) -> f64,
{
    pub fn new(objective: F, lower: Vec<f64>, upper: Vec<f64>, starts: Vec<Vec<f64>>) -> Self {
        Self { objective, lower, upper, starts }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MinimizeOptions {
    /// Projected-gradient infinity-norm tolerance.
    pub gtol: f64,
    /// Relative per-step function decrease tolerance.
    pub ftol: f64,
    pub max_iters: usize,
    pub record_trace: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { gtol: 1e-6, ftol: 1e-10, max_iters: 500, record_trace: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the start that produced the result.
    pub start_index: usize,
    /// Objective value after each accepted step of the winning start.
    pub trace: Option<Vec<f64>>,
}

/// Multistart projected BFGS with central finite-difference gradients.
///
/// Starts whose objective is non-finite are skipped. The best result over the
/// remaining starts is returned; ties go to the lower start index.
pub fn minimize<F>(problem: &OptProblem<F>, opts: &MinimizeOptions) -> Result<OptResult>
where
    F: Fn(&[f64]) -> f64,
{
    let n = problem.dim();
    if problem.upper.len() != n {
        return Err(Error::dim("optimizer bounds", n, problem.upper.len()));
    }
    for (i, (&lo, &hi)) in problem.lower.iter().zip(&problem.upper).enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidArgument(format!("bounds for coordinate {i} must be finite with lower <= upper")));
        }
    }
    if problem.starts.is_empty() {
        return Err(Error::InvalidArgument("no start points".into()));
    }

    let mut best: Option<OptResult> = None;
    for (k, start) in problem.starts.iter().enumerate() {
        if start.len() != n {
            return Err(Error::dim("optimizer start", n, start.len()));
        }
        let Some(res) = run_from(problem, start, opts) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => res.value < b.value,
        };
        if better {
            best = Some(OptResult { start_index: k, ..res });
        }
    }
    best.ok_or_else(|| Error::Optimization("objective non-finite at every start".into()))
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut probe = x.to_vec();
    for i in 0..n {
        let h = 1e-6 * (1.0 + x[i].abs());
        let can_up = x[i] + h <= hi[i];
        let can_down = x[i] - h >= lo[i];
        let gi = if can_up && can_down {
            probe[i] = x[i] + h;
            let fp = f(&probe);
            probe[i] = x[i] - h;
            let fm = f(&probe);
            (fp - fm) / (2.0 * h)
        } else if can_up {
            probe[i] = x[i] + h;
            (f(&probe) - fx) / h
        } else if can_down {
            probe[i] = x[i] - h;
            (fx - f(&probe)) / h
        } else {
            0.0
        };
        probe[i] = x[i];
        g[i] = if gi.is_finite() { gi } else { 0.0 };
    }
    g
}

fn projected(g: &[f64], x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    g.iter().enumerate().map(|(i, &gi)| if (x[i] <= lo[i] && gi > 0.0) || (x[i] >= hi[i] && gi < 0.0) { 0.0 } else { gi }).collect()
}

fn run_from<F: Fn(&[f64]) -> f64>(problem: &OptProblem<F>, start: &[f64], opts: &MinimizeOptions) -> Option<OptResult> {
    let (lo, hi) = (&problem.lower, &problem.upper);
    let f = &problem.objective;
    let n = lo.len();

    let mut x = start.to_vec();
    clamp_into(&mut x, lo, hi);
    let mut fx = f(&x);
    if !fx.is_finite() {
        return None;
    }
    let mut trace = opts.record_trace.then(|| vec![fx]);
    if n == 0 {
        return Some(OptResult { argmin: x, value: fx, iterations: 0, converged: true, start_index: 0, trace });
    }

    let mut g = fd_gradient(f, &x, fx, lo, hi);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut identity_h = true;
    let mut scaled = false;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let pg = projected(&g, &x, lo, hi);
        if pg.iter().fold(0.0_f64, |m, v| m.max(v.abs())) < opts.gtol {
            converged = true;
            break;
        }
        iterations += 1;

        let pgv = DVector::from_column_slice(&pg);
        let mut d = -(&h_inv * &pgv);
        for i in 0..n {
            if pg[i] == 0.0 {
                d[i] = 0.0;
            }
        }
        if d.dot(&pgv) >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            identity_h = true;
            scaled = false;
            d = -pgv.clone();
        }

        let dmax = d.amax();
        let mut alpha = if identity_h && !scaled && dmax > 1.0 { 1.0 / dmax } else { 1.0 };

        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + alpha * b).collect();
            clamp_into(&mut xn, lo, hi);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|s| *s == 0.0) {
                break;
            }
            let fnew = f(&xn);
            let decrease: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
            if fnew.is_finite() && fnew <= fx + 1e-4 * decrease.min(0.0) {
                accepted = Some((xn, fnew, step));
                break;
            }
            alpha *= 0.5;
        }

        let Some((xn, fnew, step)) = accepted else {
            if identity_h {
                // No descent along the projected gradient: stationary to FD precision.
                converged = true;
                break;
            }
            h_inv = DMatrix::identity(n, n);
            identity_h = true;
            scaled = false;
            continue;
        };

        let gn = fd_gradient(f, &xn, fnew, lo, hi);
        let rel_decrease = (fx - fnew) / fx.abs().max(fnew.abs()).max(f64::MIN_POSITIVE);

        let s = DVector::from_vec(step);
        let yv = DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() && sy > 0.0 {
            if !scaled {
                h_inv = DMatrix::identity(n, n) * (sy / yv.dot(&yv));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 yHy + rho) s s'
            h_inv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
            identity_h = false;
        }

        x = xn;
        fx = fnew;
        g = gn;
        if let Some(t) = trace.as_mut() {
            t.push(fx);
        }
        if rel_decrease.abs() < opts.ftol {
            converged = true;
            break;
        }
    }

    Some(OptResult { argmin: x, value: fx, iterations, converged, start_index: 0, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> MinimizeOptions {
        MinimizeOptions::default()
    }

    #[test]
    fn quadratic_bowl() {
        let p = OptProblem::new(|x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2), vec![-10.0, -10.0], vec![10.0, 10.0], vec![vec![5.0, -3.0]]);
        let r = minimize(&p, &opts()).unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-6);
        assert!((r.argmin[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock() {
        let p =
            OptProblem::new(|x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2), vec![-5.0, -5.0], vec![5.0, 5.0], vec![vec![-1.2, 1.0]]);
        let r = minimize(&p, &opts()).unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-4, "{:?}", r);
        assert!((r.argmin[1] - 1.0).abs() < 1e-4, "{:?}", r);
    }

    #[test]
    fn active_lower_bound() {
        let p = OptProblem::new(|x: &[f64]| x[0], vec![0.0], vec![1.0], vec![vec![0.7]]);
        let r = minimize(&p, &opts()).unwrap();
        assert_eq!(r.argmin[0], 0.0);
    }

    #[test]
    fn non_finite_starts_are_skipped() {
        let p = OptProblem::new(|x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) }, vec![-1.0], vec![1.0], vec![vec![-0.5], vec![0.9]]);
        let r = minimize(&p, &opts()).unwrap();
        assert_eq!(r.start_index, 1);
        assert!((r.argmin[0] - 0.5).abs() < 1e-6);

        let all_bad = OptProblem::new(|_: &[f64]| f64::INFINITY, vec![0.0], vec![1.0], vec![vec![0.5]]);
        assert!(minimize(&all_bad, &opts()).is_err());
    }

    #[test]
    fn value_matches_reevaluation() {
        let obj = |x: &[f64]| (x[0].sin() + x[1] * x[1]).exp();
        let p = OptProblem::new(obj, vec![-3.0, -3.0], vec![3.0, 3.0], vec![vec![1.0, 1.0], vec![-2.0, 0.5]]);
        let r = minimize(&p, &opts()).unwrap();
        assert!((obj(&r.argmin) - r.value).abs() <= 1e-12 * r.value.abs().max(1.0));
    }

    #[test]
    fn deterministic() {
        let obj = |x: &[f64]| (x[0] - 0.3).powi(4) + (x[1] + x[0]).powi(2);
        let p = OptProblem::new(obj, vec![-2.0, -2.0], vec![2.0, 2.0], vec![vec![1.5, -1.0]]);
        let a = minimize(&p, &opts()).unwrap();
        let b = minimize(&p, &opts()).unwrap();
        assert_eq!(a, b);
    }
}
