//! Numeric text formatting shared by the CSV writers.

/// 17-significant-digit scientific notation: enough to reproduce any f64
/// exactly, so identical runs emit byte-identical files.
pub(crate) fn g17(v: f64) -> String {
    format!("{v:.16e}")
}
