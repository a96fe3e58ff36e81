//! Shared number formatting for observations and summaries: four
//! significant digits, exponent notation below 1e-3 so small magnitudes
//! (crack growth rates, Paris C) stay readable.

pub fn sig4(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0.000".to_string();
    }
    let a = v.abs();
    if a < 1e-3 || a >= 1e15 {
        return format!("{v:.3e}");
    }
    let exponent = a.log10().floor() as i32;
    let decimals = (3 - exponent).max(0) as usize;
    format!("{v:.decimals$}")
}
