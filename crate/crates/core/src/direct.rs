//! Design-based direct estimator: within-area sample mean, its variance,
//! standard error, and coefficient of variation, per species and area.

use std::collections::BTreeMap;

use crate::data::PlotTable;
use crate::linalg::ksum;

/// Direct estimate for one (species, area) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectEstimate {
    pub species: String,
    pub area: String,
    /// Number of plots in the area.
    pub n_plots: usize,
    pub mean: f64,
    /// Variance of the mean; undefined for a single plot.
    pub variance: Option<f64>,
    pub se: Option<f64>,
    /// SE / mean; undefined when the mean is zero or the variance is.
    pub cv: Option<f64>,
    /// All observations zero: the estimate is 0 with no standard error.
    pub zero_se: bool,
}

/// Within-area sample mean; `None` marks an area with no plots.
pub fn direct_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(ksum(values.iter().copied()) / values.len() as f64)
}

/// Variance of the within-area mean: sum of squared deviations over
/// n (n - 1). `None` marks the undefined n < 2 case.
pub fn direct_variance(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mu = direct_mean(values).expect("nonempty");
    let ss = ksum(values.iter().map(|&v| (v - mu) * (v - mu)));
    Some(ss / (n as f64 * (n - 1) as f64))
}

fn estimate_cell(species: &str, area: &str, values: &[f64]) -> Option<DirectEstimate> {
    let mean = direct_mean(values)?;
    let variance = direct_variance(values);
    let se = variance.map(f64::sqrt);
    let zero_se = values.iter().all(|&v| v == 0.0);
    let cv = match (se, mean > 0.0) {
        (Some(se), true) => Some(se / mean),
        _ => None,
    };
    Some(DirectEstimate {
        species: species.to_string(),
        area: area.to_string(),
        n_plots: values.len(),
        mean,
        variance,
        se,
        cv,
        zero_se,
    })
}

/// One estimate per (species, area) with at least one plot, species in
/// declared order, areas sorted.
pub fn direct_table(table: &PlotTable) -> Vec<DirectEstimate> {
    let mut area_plots: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, a) in table.area_ids.iter().enumerate() {
        area_plots.entry(a.as_str()).or_default().push(i);
    }
    let mut out = Vec::with_capacity(table.n_species() * area_plots.len());
    for (j, sp) in table.species.iter().enumerate() {
        for (area, plots) in &area_plots {
            let values: Vec<f64> = plots.iter().map(|&i| table.response.at(j, i)).collect();
            if let Some(est) = estimate_cell(sp, area, &values) {
                out.push(est);
            }
        }
    }
    out
}
