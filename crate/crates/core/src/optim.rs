//! Projected limited-memory BFGS for box-constrained minimization.

/// Result of a [`minimize`] call.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the projected gradient's inf-norm falls below this.
    pub pg_tol: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { max_iter: 5, memory: 10, pg_tol: 1e-8, max_line_search: 20 }
    }
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over the box `[lo, hi]` (entries may be infinite).
///
/// `f` returns the value and writes the gradient into its second argument.
/// Variables sitting on a bound with the gradient pushing outward are frozen
/// for the step; the search direction comes from the two-loop recursion over
/// the free variables and the step length from Armijo backtracking along the
/// projected path. Non-finite values are treated as infeasible.
pub fn minimize<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &LbfgsOptions) -> OptimResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evals = 1;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    if !fx.is_finite() {
        return OptimResult { x, f: fx, iterations, evaluations: evals };
    }

    while iterations < opts.max_iter {
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let pg = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg < opts.pg_tol {
            break;
        }

        // two-loop recursion restricted to the free set
        let mut q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let m = s_hist.len();
        let mut alphas = vec![0.0; m];
        for k in (0..m).rev() {
            let sy = dot(&s_hist[k], &y_hist[k]);
            let a = dot(&s_hist[k], &q) / sy;
            alphas[k] = a;
            for i in 0..n {
                if free[i] {
                    q[i] -= a * y_hist[k][i];
                }
            }
        }
        let gamma = if m > 0 {
            dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1])
        } else {
            1.0 / pg.max(1.0)
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for k in 0..m {
            let sy = dot(&s_hist[k], &y_hist[k]);
            let b = dot(&y_hist[k], &q) / sy;
            for i in 0..n {
                if free[i] {
                    q[i] += s_hist[k][i] * (alphas[k] - b);
                }
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&d, &g) >= 0.0 {
            d = (0..n).map(|i| if free[i] { -g[i] * gamma.abs().max(1e-12) } else { 0.0 }).collect();
        }

        let mut t = 1.0;
        let mut accepted = None;
        let mut g_new = vec![0.0; n];
        for _ in 0..opts.max_line_search {
            let mut xn: Vec<f64> = (0..n).map(|i| x[i] + t * d[i]).collect();
            project(&mut xn, lo, hi);
            let step: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
            let fnew = f(&xn, &mut g_new);
            evals += 1;
            if fnew.is_finite() && fnew <= fx + 1e-4 * dot(&g, &step) {
                accepted = Some((xn, fnew, step));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew, step)) = accepted else {
            break;
        };
        let yk: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        if dot(&step, &yk) > 1e-12 * dot(&step, &step).sqrt() * dot(&yk, &yk).sqrt() {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(step);
            y_hist.push(yk);
        }
        x = xn;
        fx = fnew;
        g.copy_from_slice(&g_new);
        iterations += 1;
    }
    OptimResult { x, f: fx, iterations, evaluations: evals }
}
