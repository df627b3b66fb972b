//! Central-difference gradient checks used by the unit tests.

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

pub fn numeric_gradient(mut f: impl FnMut(f64) -> f64, at: f64) -> f64 {
    (f(at + STEP) - f(at - STEP)) / (2.0 * STEP)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let rel = relative_error(analytic, numeric);
    assert!(
        rel < REL_TOL,
        "{what}: analytic {analytic} vs numeric {numeric} (rel {rel:e})"
    );
}
