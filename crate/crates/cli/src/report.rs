//! Flat `key=value` rendering of a transition report.

use std::fmt::Write;

use otmorph::TransitionReport;

/// Floats use Rust's shortest round-trip formatting, so equal reports render
/// to identical bytes and parsed values are bit-exact.
pub fn render(report: &TransitionReport<f64>) -> String {
    let steps: Vec<String> = report
        .per_step_distances
        .iter()
        .map(|d| d.to_string())
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "regularity={}", report.regularity);
    let _ = writeln!(out, "total_distance={}", report.total_distance);
    let _ = writeln!(out, "manifold_distance={}", report.manifold_distance);
    let _ = writeln!(out, "per_step_distances={}", steps.join(","));
    let _ = writeln!(out, "transport_converged={}", report.transport_converged);
    out
}
