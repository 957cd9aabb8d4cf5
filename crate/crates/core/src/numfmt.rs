/// Formats `x` with 17 significant digits, enough to round-trip any `f64`.
///
/// Scientific notation keeps the output width independent of magnitude and
/// is accepted by both CSV readers and JSON parsers.
pub fn sig17(x: f64) -> String {
    if x == 0.0 {
        // collapse -0.0 so serialized output does not depend on sign of zero
        return format!("{:.16e}", 0.0);
    }
    format!("{x:.16e}")
}
