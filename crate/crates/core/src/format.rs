//! Platform-stable number formatting for CSV output.

/// Formats `x` with six significant digits in plain decimal notation,
/// switching to scientific notation outside `[1e-4, 1e15)`. Trailing zeros
/// are kept so column widths stay regular.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        // also folds -0.0
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // let the formatter do the rounding, then read back the exponent
    let sci = format!("{:.5e}", x);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if !(-4..15).contains(&exp) {
        return sci;
    }
    if exp > 5 {
        let rounded: f64 = sci.parse().unwrap();
        return format!("{:.0}", rounded);
    }
    format!("{:.*}", (5 - exp) as usize, x)
}
