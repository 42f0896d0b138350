use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::traits::BranchTraitReport;

/// Summary statistics of signed errors `measured − truth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    /// mean squared error (squared units)
    pub mse: f64,
    /// root mean squared error (linear units)
    pub rmse: f64,
    /// mean absolute error (linear units)
    pub mae: f64,
    /// population standard deviation of the signed errors
    pub std: f64,
    pub max_abs: f64,
}

impl ErrorStats {
    /// All fields are 0 for an empty slice.
    pub fn from_errors(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return Self::default();
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
        let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        Self {
            count: errors.len(),
            mean,
            mse,
            rmse: mse.sqrt(),
            mae,
            std: var.sqrt(),
            max_abs: errors.iter().fold(0.0, |m, e| m.max(e.abs())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedBranch {
    pub measured: usize,
    pub truth: usize,
    pub junction_distance_mm: f64,
    pub diameter_error_mm: Option<f64>,
    pub length_error_mm: f64,
    /// relative to the true length
    pub length_error_fraction: f64,
    pub angle_error_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub match_radius_mm: f64,
    pub matched: Vec<MatchedBranch>,
    pub unmatched_measured: Vec<usize>,
    pub unmatched_truth: Vec<usize>,
    pub zero_matches: bool,
    pub diameter: ErrorStats,
    pub length: ErrorStats,
    pub angle: ErrorStats,
}

/// Pairs measured and true branches, then summarizes the trait errors.
///
/// A pair is admissible when the junctions are within `match_radius` mm.
/// Admissible pairs are taken greedily by junction distance plus tip
/// distance (the tip term separates branches sharing one junction); each
/// branch is used at most once.
pub fn compare_traits(report: &BranchTraitReport, truth: &BranchTraitReport, match_radius: f64) -> ComparisonSummary {
    let mut pairs = Vec::new();
    for (mi, m) in report.branches.iter().enumerate() {
        for (ti, t) in truth.branches.iter().enumerate() {
            let dj = (Vector3::from(m.junction) - Vector3::from(t.junction)).norm();
            if dj <= match_radius {
                let dt = (Vector3::from(m.tip) - Vector3::from(t.tip)).norm();
                pairs.push((dj + dt, dj, mi, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));
    let mut used_m = vec![false; report.branches.len()];
    let mut used_t = vec![false; truth.branches.len()];
    let mut matched = Vec::new();
    for (_, dj, mi, ti) in pairs {
        if used_m[mi] || used_t[ti] {
            continue;
        }
        used_m[mi] = true;
        used_t[ti] = true;
        let (m, t) = (&report.branches[mi], &truth.branches[ti]);
        let length_error_mm = m.length_mm - t.length_mm;
        matched.push(MatchedBranch {
            measured: m.id,
            truth: t.id,
            junction_distance_mm: dj,
            diameter_error_mm: m.diameter_mm.zip(t.diameter_mm).map(|(a, b)| a - b),
            length_error_mm,
            length_error_fraction: if t.length_mm > 0.0 { length_error_mm / t.length_mm } else { f64::NAN },
            angle_error_deg: m.angle_deg.zip(t.angle_deg).map(|(a, b)| a - b),
        });
    }
    matched.sort_by_key(|m| m.truth);
    let collect = |f: &dyn Fn(&MatchedBranch) -> Option<f64>| -> Vec<f64> { matched.iter().filter_map(f).collect() };
    let diameter = ErrorStats::from_errors(&collect(&|m| m.diameter_error_mm));
    let length = ErrorStats::from_errors(&collect(&|m| Some(m.length_error_mm)));
    let angle = ErrorStats::from_errors(&collect(&|m| m.angle_error_deg));
    ComparisonSummary {
        match_radius_mm: match_radius,
        zero_matches: matched.is_empty(),
        unmatched_measured: (0..report.branches.len())
            .filter(|&i| !used_m[i])
            .map(|i| report.branches[i].id)
            .collect(),
        unmatched_truth: (0..truth.branches.len())
            .filter(|&i| !used_t[i])
            .map(|i| truth.branches[i].id)
            .collect(),
        matched,
        diameter,
        length,
        angle,
    }
}
