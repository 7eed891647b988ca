//! Plot-table and prediction-grid ingestion, validation, and standardization.
//!
//! Input files are RFC-4180 CSV with a header row, '.' decimal separator, and
//! planar coordinates in kilometers. Plot tables carry one row per plot with
//! columns `plot_id, x, y, area_id, <covariates...>, <one response column per
//! species>`; grids carry `x, y, area_id, <covariates...>`. Lines starting
//! with `#` are treated as manifest comments and skipped.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{ksum, Mat};
use crate::Result;

const MODULE: &str = "core-data";

/// Plot-level multispecies inventory table.
///
/// `response` is species x plot (Mg/ha or compatible nonnegative density),
/// species ordered by the declared species list.
#[derive(Clone, Debug)]
pub struct PlotTable {
    pub plot_ids: Vec<String>,
    /// Projected planar coordinates in kilometers.
    pub coords: Vec<(f64, f64)>,
    pub area_ids: Vec<String>,
    pub covariate_names: Vec<String>,
    /// Column-major: `covariates[c][i]` is covariate c at plot i.
    pub covariates: Vec<Vec<f64>>,
    pub species: Vec<String>,
    /// Species x plot response matrix.
    pub response: Mat,
}

impl PlotTable {
    pub fn n_plots(&self) -> usize {
        self.plot_ids.len()
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    /// Distinct area ids in first-occurrence order.
    pub fn area_list(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for a in &self.area_ids {
            if seen.insert(a.clone()) {
                out.push(a.clone());
            }
        }
        out
    }
}

/// Species x plot presence indicators derived from the response matrix.
#[derive(Clone, Debug)]
pub struct PresenceMatrix {
    pub z: Vec<u8>,
    pub n_species: usize,
    pub n_plots: usize,
}

impl PresenceMatrix {
    #[inline]
    pub fn at(&self, species: usize, plot: usize) -> u8 {
        self.z[species * self.n_plots + plot]
    }

    pub fn presences(&self, species: usize) -> usize {
        (0..self.n_plots).filter(|&i| self.at(species, i) == 1).count()
    }
}

/// Per-covariate mean and standard deviation from the fitting data.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StandardizationStats {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl StandardizationStats {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| (self.mean[i], self.sd[i]))
    }
}

/// Dense prediction grid with covariates standardized by the fitting stats.
#[derive(Clone, Debug)]
pub struct PredictionGrid {
    pub coords: Vec<(f64, f64)>,
    pub area_ids: Vec<String>,
    pub covariate_names: Vec<String>,
    pub covariates: Vec<Vec<f64>>,
    /// Cell counts per area, keyed by area id (sorted).
    pub cells_per_area: BTreeMap<String, usize>,
}

impl PredictionGrid {
    pub fn n_cells(&self) -> usize {
        self.coords.len()
    }

    /// Treat a plot table's locations as prediction cells, standardizing its
    /// covariates with the supplied (fitting) stats.
    pub fn from_plot_table(table: &PlotTable, stats: &StandardizationStats) -> Result<Self> {
        let mut covariates = Vec::with_capacity(table.covariate_names.len());
        for (c, name) in table.covariate_names.iter().enumerate() {
            let (m, s) = stats.get(name).ok_or_else(|| {
                Error::schema(MODULE, format!("no standardization stats for covariate '{name}'"))
            })?;
            covariates.push(table.covariates[c].iter().map(|v| (v - m) / s).collect());
        }
        let mut cells_per_area = BTreeMap::new();
        for a in &table.area_ids {
            *cells_per_area.entry(a.clone()).or_insert(0usize) += 1;
        }
        Ok(PredictionGrid {
            coords: table.coords.clone(),
            area_ids: table.area_ids.clone(),
            covariate_names: table.covariate_names.clone(),
            covariates,
            cells_per_area,
        })
    }
}

fn parse_field(raw: &str, row: usize, col: &str) -> Result<f64> {
    let t = raw.trim();
    if t.is_empty() {
        return Err(Error::validation(
            MODULE,
            format!("row {row}: missing value in column '{col}'"),
        ));
    }
    let v: f64 = t.parse().map_err(|_| {
        Error::validation(
            MODULE,
            format!("row {row}: cannot parse '{t}' in column '{col}' as a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(Error::validation(
            MODULE,
            format!("row {row}: non-finite value in column '{col}'"),
        ));
    }
    Ok(v)
}

fn reader_for(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(Error::missing(
            MODULE,
            format!("file not found: {}", path.display()),
        ));
    }
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?)
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::schema(MODULE, format!("missing column '{name}'")))
}

/// Load and validate a plot table.
///
/// Covariate columns are every header column that is not `plot_id`, `x`, `y`,
/// `area_id`, or one of the declared species responses; their order follows
/// the header.
pub fn load_plot_table(path: &Path, species: &[String]) -> Result<PlotTable> {
    let mut rdr = reader_for(path)?;
    let headers = rdr.headers()?.clone();
    let idx_plot = header_index(&headers, "plot_id")?;
    let idx_x = header_index(&headers, "x")?;
    let idx_y = header_index(&headers, "y")?;
    let idx_area = header_index(&headers, "area_id")?;
    let mut species_idx = Vec::with_capacity(species.len());
    for s in species {
        species_idx.push(header_index(&headers, s)?);
    }
    let reserved: HashSet<usize> = [idx_plot, idx_x, idx_y, idx_area]
        .into_iter()
        .chain(species_idx.iter().copied())
        .collect();
    let mut covariate_names = Vec::new();
    let mut covariate_idx = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if !reserved.contains(&i) {
            covariate_names.push(h.to_string());
            covariate_idx.push(i);
        }
    }

    let mut plot_ids: Vec<String> = Vec::new();
    let mut coords = Vec::new();
    let mut area_ids = Vec::new();
    let mut covariates: Vec<Vec<f64>> = vec![Vec::new(); covariate_names.len()];
    let mut resp_rows: Vec<Vec<f64>> = vec![Vec::new(); species.len()];
    let mut seen_ids: HashSet<String> = HashSet::new();

    for (rec_no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec_no + 2; // 1-based, after header
        let pid = rec
            .get(idx_plot)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                Error::validation(MODULE, format!("row {row}: missing plot_id"))
            })?
            .to_string();
        if !seen_ids.insert(pid.clone()) {
            return Err(Error::validation(
                MODULE,
                format!("row {row}: duplicate plot_id '{pid}'"),
            ));
        }
        let x = parse_field(rec.get(idx_x).unwrap_or(""), row, "x")?;
        let y = parse_field(rec.get(idx_y).unwrap_or(""), row, "y")?;
        let area = rec
            .get(idx_area)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                Error::validation(MODULE, format!("row {row}: missing area_id"))
            })?
            .to_string();
        for (c, &ci) in covariate_idx.iter().enumerate() {
            covariates[c].push(parse_field(
                rec.get(ci).unwrap_or(""),
                row,
                &covariate_names[c],
            )?);
        }
        for (j, &si) in species_idx.iter().enumerate() {
            let v = parse_field(rec.get(si).unwrap_or(""), row, &species[j])?;
            if v < 0.0 {
                return Err(Error::validation(
                    MODULE,
                    format!(
                        "row {row}: negative response {v} for species '{}' at plot '{pid}'",
                        species[j]
                    ),
                ));
            }
            resp_rows[j].push(v);
        }
        plot_ids.push(pid);
        coords.push((x, y));
        area_ids.push(area);
    }

    let n = plot_ids.len();
    let mut response = Mat::zeros(species.len(), n);
    for (j, row) in resp_rows.into_iter().enumerate() {
        response.row_mut(j).copy_from_slice(&row);
    }

    Ok(PlotTable {
        plot_ids,
        coords,
        area_ids,
        covariate_names,
        covariates,
        species: species.to_vec(),
        response,
    })
}

/// Write a plot table back to CSV; numeric fields round-trip bit-exactly for
/// finite doubles (shortest round-trip float formatting).
pub fn write_plot_table(table: &PlotTable, path: &Path) -> Result<()> {
    write_plot_table_with_comment(table, path, None)
}

/// Same as [`write_plot_table`] with an optional leading `#` manifest line.
pub fn write_plot_table_with_comment(
    table: &PlotTable,
    path: &Path,
    comment: Option<&str>,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(c) = comment {
        writeln!(f, "{c}")?;
    }
    let mut header = vec!["plot_id".to_string(), "x".into(), "y".into(), "area_id".into()];
    header.extend(table.covariate_names.iter().cloned());
    header.extend(table.species.iter().cloned());
    writeln!(f, "{}", header.join(","))?;
    for i in 0..table.n_plots() {
        let mut fields = vec![
            table.plot_ids[i].clone(),
            format!("{}", table.coords[i].0),
            format!("{}", table.coords[i].1),
            table.area_ids[i].clone(),
        ];
        for c in &table.covariates {
            fields.push(format!("{}", c[i]));
        }
        for j in 0..table.n_species() {
            fields.push(format!("{}", table.response.at(j, i)));
        }
        writeln!(f, "{}", fields.join(","))?;
    }
    Ok(())
}

/// z_{j,i} = 1 exactly when response_{j,i} > 0.
pub fn derive_presence(table: &PlotTable) -> PresenceMatrix {
    let (j_n, n) = (table.n_species(), table.n_plots());
    let mut z = vec![0u8; j_n * n];
    for j in 0..j_n {
        for i in 0..n {
            if table.response.at(j, i) > 0.0 {
                z[j * n + i] = 1;
            }
        }
    }
    PresenceMatrix {
        z,
        n_species: j_n,
        n_plots: n,
    }
}

/// Standardize covariate columns in place.
///
/// With `stats = None` the mean/sd are computed from the table (fitting path);
/// with supplied stats (prediction path) they are reused as-is. Quadratic
/// design terms are formed downstream from the standardized linear columns.
pub fn standardize_covariates(
    table: &mut PlotTable,
    stats: Option<&StandardizationStats>,
) -> Result<StandardizationStats> {
    let stats = match stats {
        Some(s) => {
            for name in &table.covariate_names {
                if s.get(name).is_none() {
                    return Err(Error::schema(
                        MODULE,
                        format!("no standardization stats for covariate '{name}'"),
                    ));
                }
            }
            s.clone()
        }
        None => compute_stats(&table.covariate_names, &table.covariates)?,
    };
    for (c, name) in table.covariate_names.iter().enumerate() {
        let (m, s) = stats.get(name).expect("checked above");
        for v in table.covariates[c].iter_mut() {
            *v = (*v - m) / s;
        }
    }
    Ok(stats)
}

/// Invert a standardization (used by round-trip checks).
pub fn unstandardize_covariates(table: &mut PlotTable, stats: &StandardizationStats) {
    for (c, name) in table.covariate_names.iter().enumerate() {
        if let Some((m, s)) = stats.get(name) {
            for v in table.covariates[c].iter_mut() {
                *v = *v * s + m;
            }
        }
    }
}

pub fn compute_stats(names: &[String], columns: &[Vec<f64>]) -> Result<StandardizationStats> {
    let mut mean = Vec::with_capacity(names.len());
    let mut sd = Vec::with_capacity(names.len());
    for (c, name) in names.iter().enumerate() {
        let col = &columns[c];
        let n = col.len() as f64;
        let m = ksum(col.iter().copied()) / n;
        let var = ksum(col.iter().map(|v| (v - m) * (v - m))) / (n - 1.0).max(1.0);
        if !(var > 0.0) {
            return Err(Error::validation(
                MODULE,
                format!("covariate '{name}' has zero variance"),
            ));
        }
        mean.push(m);
        sd.push(var.sqrt());
    }
    Ok(StandardizationStats {
        names: names.to_vec(),
        mean,
        sd,
    })
}

/// Load a prediction grid, check its covariate schema against the fitted
/// stats, standardize with those stats, and count cells per area.
pub fn attach_grid(path: &Path, stats: &StandardizationStats) -> Result<PredictionGrid> {
    let mut rdr = reader_for(path)?;
    let headers = rdr.headers()?.clone();
    let idx_x = header_index(&headers, "x")?;
    let idx_y = header_index(&headers, "y")?;
    let idx_area = header_index(&headers, "area_id")?;
    let mut covariate_names = Vec::new();
    let mut covariate_idx = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if i != idx_x && i != idx_y && i != idx_area {
            covariate_names.push(h.to_string());
            covariate_idx.push(i);
        }
    }
    let missing: Vec<&String> = stats
        .names
        .iter()
        .filter(|n| !covariate_names.contains(n))
        .collect();
    let extra: Vec<&String> = covariate_names
        .iter()
        .filter(|n| !stats.names.contains(n))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::schema(
            MODULE,
            format!(
                "grid covariate schema mismatch: missing {missing:?}, unexpected {extra:?}"
            ),
        ));
    }

    let mut coords = Vec::new();
    let mut area_ids: Vec<String> = Vec::new();
    let mut covariates: Vec<Vec<f64>> = vec![Vec::new(); covariate_names.len()];
    for (rec_no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec_no + 2;
        let x = parse_field(rec.get(idx_x).unwrap_or(""), row, "x")?;
        let y = parse_field(rec.get(idx_y).unwrap_or(""), row, "y")?;
        let area = rec
            .get(idx_area)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                Error::validation(MODULE, format!("row {row}: missing area_id"))
            })?
            .to_string();
        for (c, &ci) in covariate_idx.iter().enumerate() {
            let v = parse_field(rec.get(ci).unwrap_or(""), row, &covariate_names[c])?;
            let (m, s) = stats.get(&covariate_names[c]).expect("schema checked");
            covariates[c].push((v - m) / s);
        }
        coords.push((x, y));
        area_ids.push(area);
    }

    let mut cells_per_area = BTreeMap::new();
    for a in &area_ids {
        *cells_per_area.entry(a.clone()).or_insert(0usize) += 1;
    }

    Ok(PredictionGrid {
        coords,
        area_ids,
        covariate_names,
        covariates,
        cells_per_area,
    })
}

/// Deterministically separate exactly-duplicated coordinates by bumping the
/// k-th duplicate 1e-6 km east; neighbor conditioning degenerates under ties.
/// Returns the number of perturbed sites.
pub fn jitter_duplicate_coords(coords: &mut [(f64, f64)]) -> usize {
    let mut jittered = 0;
    for _pass in 0..64 {
        let mut groups: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
        for (i, &(x, y)) in coords.iter().enumerate() {
            groups.entry((x.to_bits(), y.to_bits())).or_default().push(i);
        }
        let mut any = false;
        for dup in groups.values().filter(|v| v.len() > 1) {
            for (k, &i) in dup.iter().enumerate().skip(1) {
                coords[i].0 += k as f64 * 1e-6;
                jittered += 1;
                any = true;
            }
        }
        if !any {
            return jittered;
        }
    }
    jittered
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn species2() -> Vec<String> {
        vec!["oak".into(), "pine".into()]
    }

    #[test]
    fn loads_small_table() {
        let f = write_tmp(
            "plot_id,x,y,area_id,TMIN,oak,pine\n\
             p1,0.0,0.0,A,1.0,0.0,3.2\n\
             p2,1.0,0.0,A,2.0,1.5,0.0\n\
             p3,0.0,1.0,B,3.0,2.0,0.1\n",
        );
        let t = load_plot_table(f.path(), &species2()).unwrap();
        assert_eq!(t.n_plots(), 3);
        assert_eq!(t.n_species(), 2);
        assert_eq!(t.response.rows(), 2);
        assert_eq!(t.response.cols(), 3);
        assert_eq!(t.covariate_names, vec!["TMIN".to_string()]);
        assert_eq!(t.response.at(1, 0), 3.2);
    }

    #[test]
    fn rejects_negative_response_with_row() {
        let f = write_tmp(
            "plot_id,x,y,area_id,TMIN,oak,pine\n\
             p1,0.0,0.0,A,1.0,0.0,3.2\n\
             p2,1.0,0.0,A,2.0,-1.0,0.0\n",
        );
        let err = load_plot_table(f.path(), &species2()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains("p2"), "{msg}");
    }

    #[test]
    fn rejects_missing_column_and_duplicate_id() {
        let f = write_tmp("plot_id,x,y,TMIN,oak,pine\np1,0,0,1,0,0\n");
        let err = load_plot_table(f.path(), &species2()).unwrap_err();
        assert!(err.to_string().contains("area_id"));

        let f = write_tmp(
            "plot_id,x,y,area_id,TMIN,oak,pine\n\
             p1,0.0,0.0,A,1.0,0.0,3.2\n\
             p1,1.0,0.0,A,2.0,1.0,0.0\n",
        );
        let err = load_plot_table(f.path(), &species2()).unwrap_err();
        assert!(err.to_string().contains("duplicate plot_id"));
    }

    #[test]
    fn presence_matches_elementwise_oracle() {
        let mut rng = crate::rng::chacha(3);
        let n = 8;
        let j_n = 5;
        let mut resp = Mat::zeros(j_n, n);
        for j in 0..j_n {
            for i in 0..n {
                *resp.at_mut(j, i) = if rng.gen::<f64>() < 0.4 {
                    0.0
                } else {
                    rng.gen::<f64>() * 10.0
                };
            }
        }
        let t = PlotTable {
            plot_ids: (0..n).map(|i| format!("p{i}")).collect(),
            coords: (0..n).map(|i| (i as f64, 0.0)).collect(),
            area_ids: vec!["A".into(); n],
            covariate_names: vec![],
            covariates: vec![],
            species: (0..j_n).map(|j| format!("s{j}")).collect(),
            response: resp.clone(),
        };
        let z = derive_presence(&t);
        for j in 0..j_n {
            for i in 0..n {
                let expect = u8::from(resp.at(j, i) > 0.0);
                assert_eq!(z.at(j, i), expect);
            }
        }
        // Idempotent under strictly positive rescaling.
        let mut t2 = t.clone();
        for j in 0..j_n {
            for i in 0..n {
                *t2.response.at_mut(j, i) *= 37.5;
            }
        }
        let z2 = derive_presence(&t2);
        assert_eq!(z.z, z2.z);
    }

    fn toy_table(column: Vec<f64>) -> PlotTable {
        let n = column.len();
        PlotTable {
            plot_ids: (0..n).map(|i| format!("p{i}")).collect(),
            coords: (0..n).map(|i| (i as f64, 0.0)).collect(),
            area_ids: vec!["A".into(); n],
            covariate_names: vec!["TMIN".into()],
            covariates: vec![column],
            species: vec!["oak".into()],
            response: Mat::zeros(1, n),
        }
    }

    #[test]
    fn standardize_symmetric_column() {
        let mut t = toy_table(vec![1.0, 2.0, 3.0]);
        let stats = standardize_covariates(&mut t, None).unwrap();
        assert_abs_diff_eq!(stats.mean[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.sd[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.covariates[0][0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.covariates[0][1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.covariates[0][2], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn standardize_random_column_moments_and_roundtrip() {
        let mut rng = crate::rng::chacha(9);
        let raw: Vec<f64> = (0..100).map(|_| 5.0 + 3.0 * rng.gen::<f64>()).collect();
        let mut t = toy_table(raw.clone());
        let stats = standardize_covariates(&mut t, None).unwrap();
        let m = crate::linalg::mean(&t.covariates[0]);
        let v = crate::linalg::sample_variance(&t.covariates[0]);
        assert!(m.abs() < 1e-12);
        assert!((v.sqrt() - 1.0).abs() < 1e-12);
        unstandardize_covariates(&mut t, &stats);
        for (a, b) in t.covariates[0].iter().zip(raw.iter()) {
            assert!(((a - b) / b).abs() < 1e-10);
        }
    }

    #[test]
    fn reused_stats_leave_new_data_uncentered() {
        let mut fit = toy_table(vec![1.0, 2.0, 3.0]);
        let stats = standardize_covariates(&mut fit, None).unwrap();
        let mut new = toy_table(vec![10.0, 11.0, 12.0]);
        standardize_covariates(&mut new, Some(&stats)).unwrap();
        assert!(crate::linalg::mean(&new.covariates[0]).abs() > 1.0);
    }

    #[test]
    fn zero_variance_covariate_errors_by_name() {
        let mut t = toy_table(vec![4.0, 4.0, 4.0]);
        let err = standardize_covariates(&mut t, None).unwrap_err();
        assert!(err.to_string().contains("TMIN"));
    }

    #[test]
    fn grid_counts_and_schema() {
        let stats = StandardizationStats {
            names: vec!["TMIN".into()],
            mean: vec![0.0],
            sd: vec![1.0],
        };
        let f = write_tmp(
            "x,y,area_id,TMIN\n\
             0,0,A,1\n1,0,A,1\n2,0,A,1\n3,0,A,1\n\
             0,1,B,1\n1,1,B,1\n2,1,B,1\n3,1,B,1\n\
             0,2,C,1\n1,2,C,1\n2,2,C,1\n3,2,C,1\n",
        );
        let g = attach_grid(f.path(), &stats).unwrap();
        assert_eq!(g.n_cells(), 12);
        assert_eq!(g.cells_per_area.len(), 3);
        assert!(g.cells_per_area.values().all(|&c| c == 4));

        let f = write_tmp("x,y,area_id\n0,0,A\n");
        let err = attach_grid(f.path(), &stats).unwrap_err();
        assert!(err.to_string().contains("TMIN"), "{err}");
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let f = write_tmp(
            "plot_id,x,y,area_id,TMIN,oak,pine\n\
             p1,0.125,7.25,A,1.099042,0.0,3.2000000000001\n\
             p2,1.75,-3.5,A,2.7e-3,1.5,0.0\n",
        );
        let t = load_plot_table(f.path(), &species2()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_plot_table(&t, out.path()).unwrap();
        let t2 = load_plot_table(out.path(), &species2()).unwrap();
        assert_eq!(t.coords, t2.coords);
        assert_eq!(t.covariates, t2.covariates);
        assert_eq!(t.response.data(), t2.response.data());
    }

    #[test]
    fn jitter_separates_exact_duplicates() {
        let mut coords = vec![(1.0, 1.0), (1.0, 1.0), (2.0, 2.0), (1.0, 1.0)];
        let n = jitter_duplicate_coords(&mut coords);
        assert_eq!(n, 2);
        let mut set: Vec<_> = coords
            .iter()
            .map(|&(x, y)| (x.to_bits(), y.to_bits()))
            .collect();
        set.sort();
        set.dedup();
        assert_eq!(set.len(), coords.len());
    }
}
