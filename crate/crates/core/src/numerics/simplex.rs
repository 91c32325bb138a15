//! Nelder-Mead simplex minimization with restarts.

/// Result of a simplex search.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Derivative-free minimizer. Non-finite objective values are treated as
/// `+inf`, which lets callers mark infeasible points.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
    /// Stop when the spread of vertex values falls below this.
    pub f_tol: f64,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            x_tol: 1e-10,
            f_tol: 1e-16,
            restarts: 2,
        }
    }
}

impl NelderMead {
    pub fn minimize<F: Fn(&[f64]) -> f64>(&self, f: F, start: &[f64], step: &[f64]) -> Minimum {
        assert_eq!(start.len(), step.len());
        let mut evals = 0usize;
        let eval = |x: &[f64], evals: &mut usize| -> f64 {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut best_x = start.to_vec();
        let mut best_f = eval(&best_x, &mut evals);
        let mut scale: Vec<f64> = step.to_vec();
        for _ in 0..=self.restarts {
            if evals >= self.max_evals {
                break;
            }
            let (x, fx) = self.run(&eval, &best_x, &best_f, &scale, &mut evals);
            let improved = fx < best_f;
            if fx <= best_f {
                best_x = x;
                best_f = fx;
            }
            // Restart with a smaller simplex around the incumbent.
            scale.iter_mut().for_each(|s| *s *= 0.1);
            if !improved && scale.iter().all(|s| s.abs() < self.x_tol) {
                break;
            }
        }
        Minimum {
            x: best_x,
            value: best_f,
            evals,
        }
    }

    fn run<E: Fn(&[f64], &mut usize) -> f64>(
        &self,
        eval: &E,
        x0: &[f64],
        f0: &f64,
        step: &[f64],
        evals: &mut usize,
    ) -> (Vec<f64>, f64) {
        let n = x0.len();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), *f0));
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += if step[i] != 0.0 { step[i] } else { 1e-3 };
            let fv = eval(&v, evals);
            simplex.push((v, fv));
        }

        while *evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_best = simplex[0].1;
            let f_worst = simplex[n].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(v, _)| {
                    v.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            let spread = if f_worst.is_finite() {
                (f_worst - f_best).abs()
            } else {
                f64::INFINITY
            };
            if diameter < self.x_tol || (spread <= self.f_tol && diameter < 1e3 * self.x_tol) {
                break;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect()
            };

            let xr = along(-1.0);
            let fr = eval(&xr, evals);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe, evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(-0.5);
                    let fc = eval(&xc, evals);
                    (xc, fc)
                } else {
                    let xc = along(0.5);
                    let fc = eval(&xc, evals);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for vertex in simplex.iter_mut().skip(1) {
                        let shrunk: Vec<f64> = vertex
                            .0
                            .iter()
                            .zip(&best)
                            .map(|(v, b)| b + 0.5 * (v - b))
                            .collect();
                        let fs = eval(&shrunk, evals);
                        *vertex = (shrunk, fs);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        simplex.swap_remove(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let nm = NelderMead {
            max_evals: 5000,
            ..NelderMead::default()
        };
        let m = nm.minimize(f, &[-1.2, 1.0], &[0.5, 0.5]);
        assert!((m.x[0] - 1.0).abs() < 1e-6, "{m:?}");
        assert!((m.x[1] - 1.0).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 0.3).powi(2) + (x[1] + 2.0).powi(2)
            }
        };
        let m = NelderMead::default().minimize(f, &[1.0, 0.0], &[0.5, 0.5]);
        assert!((m.x[0] - 0.3).abs() < 1e-7);
        assert!((m.x[1] + 2.0).abs() < 1e-7);
        assert!(m.evals <= 2000);
    }
}
