/// Central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_difference<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Step proportional to the magnitude of `x`, never below `floor`.
pub fn relative_step(x: f64, rel: f64, floor: f64) -> f64 {
    (rel * x.abs()).max(floor)
}
