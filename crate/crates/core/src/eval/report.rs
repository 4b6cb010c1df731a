use std::fmt;

use super::field::SdfMetrics;
use super::metrics::MeshMetrics;

/// Mesh and field metrics of one evaluation, printed one `key value` pair
/// per line.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub mesh: Option<MeshMetrics>,
    pub sdf: SdfMetrics,
}

impl EvalReport {
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Some(m) = &self.mesh {
            out.extend([
                ("chamfer_cm", m.chamfer),
                ("accuracy_cm", m.accuracy),
                ("completion_cm", m.completion),
                ("precision_pct", m.precision),
                ("recall_pct", m.recall),
                ("f1_pct", m.f1),
                ("completion_ratio_pct", m.completion_ratio),
            ].map(|(k, v)| (k, format!("{v:.6}"))));
        }
        let s = &self.sdf;
        out.extend([
            ("sdf_mae_all_cm", s.mae_all),
            ("sdf_mae_near_cm", s.mae_near),
            ("sdf_mae_far_cm", s.mae_far),
            ("grad_mae_all_rad", s.grad_mae_all),
            ("grad_mae_near_rad", s.grad_mae_near),
            ("grad_mae_far_rad", s.grad_mae_far),
            ("grad_norm_ok_near_pct", s.grad_norm_ok_near),
            ("valid_ratio_pct", s.valid_ratio),
        ].map(|(k, v)| (k, format!("{v:.6}"))));
        out.extend([
            ("points_kept", s.kept),
            ("points_near", s.near),
            ("points_far", s.far),
            ("medial_skipped", s.medial_skipped),
            ("stencil_skipped", s.stencil_skipped),
        ].map(|(k, v)| (k, v.to_string())));
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k} {v}")?;
        }
        Ok(())
    }
}

/// Parses `key value` lines back into pairs; blank lines are skipped.
pub fn parse_report(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .filter_map(|l| {
            let (k, v) = l.trim().split_once(' ')?;
            Some((k.to_string(), v.trim().parse().ok()?))
        })
        .collect()
}
