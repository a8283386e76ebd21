//! Data ingestion, standardization and PCA.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Reads a rectangular numeric CSV file.
///
/// Row numbers in errors are 1-based file lines, counting the header.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool, delimiter: u8) -> Result<DataMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&bytes, has_header, delimiter)
}

/// Like [`load_csv`] but on in-memory bytes.
pub fn parse_csv(bytes: &[u8], has_header: bool, delimiter: u8) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let mut names = None;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse(format!("row {line}: {e}")))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::RaggedRow {
                    row: line,
                    expected: c,
                    found: rec.len(),
                })
            }
            _ => {}
        }
        if i == 0 && has_header {
            names = Some(rec.iter().map(str::to_string).collect::<Vec<_>>());
            continue;
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: line,
                col: j + 1,
                text: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    row: line,
                    col: j + 1,
                    text: cell.to_string(),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("file is empty".into()))?;
    if rows == 0 {
        return Err(Error::Parse("file has no data rows".into()));
    }
    let m = DataMatrix::new(rows, cols, values)?;
    match names {
        Some(n) => m.with_feature_names(n),
        None => Ok(m),
    }
}

/// True when the first record of `bytes` does not parse as numbers.
pub fn sniff_header(bytes: &[u8], delimiter: u8) -> bool {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    match reader.records().next() {
        Some(Ok(rec)) => rec.iter().any(|c| c.parse::<f64>().is_err()),
        _ => false,
    }
}

/// Centers and/or scales each column. Scaling uses the sample (n-1)
/// standard deviation.
pub fn standardize(x: &DataMatrix, center: bool, scale: bool) -> Result<DataMatrix> {
    if !center && !scale {
        return Ok(x.clone());
    }
    let (n, p) = (x.rows(), x.cols());
    let means = x.column_means();
    let mut sds = vec![1.0; p];
    if scale {
        if n < 2 {
            return Err(Error::invalid("scaling needs at least two rows"));
        }
        for (j, sd) in sds.iter_mut().enumerate() {
            let ss: f64 = x.iter_rows().map(|r| (r[j] - means[j]).powi(2)).sum();
            *sd = (ss / (n - 1) as f64).sqrt();
            if !(*sd > 0.0) || *sd <= 1e-300 {
                return Err(Error::invalid(format!(
                    "cannot scale constant {}",
                    x.column_label(j)
                )));
            }
        }
    }
    let values = x
        .iter_rows()
        .flat_map(|r| {
            r.iter().enumerate().map(|(j, v)| {
                let c = if center { v - means[j] } else { *v };
                c / sds[j]
            })
        })
        .collect::<Vec<_>>();
    let out = DataMatrix::new(n, p, values)?;
    match x.feature_names() {
        Some(names) => out.with_feature_names(names.to_vec()),
        None => Ok(out),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub scores: DataMatrix,
    /// All `min(n, p)` singular values of the centered data, descending.
    pub singular_values: Vec<f64>,
    /// `singular_value / sqrt(n - 1)` for every component (scree data).
    pub stdev_per_component: Vec<f64>,
    /// `p x q`, one column per retained component.
    pub loadings: Vec<Vec<f64>>,
}

impl PcaResult {
    /// Scree table as CSV text with header `component,stdev`.
    pub fn scree_csv(&self) -> String {
        let mut s = String::from("component,stdev\n");
        for (i, v) in self.stdev_per_component.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, v));
        }
        s
    }
}

/// Principal components of the column-centered data, via SVD.
///
/// Each loading vector is signed so that its largest-magnitude entry is
/// positive.
pub fn pca(x: &DataMatrix, q: usize) -> Result<PcaResult> {
    let (n, p) = (x.rows(), x.cols());
    let max_q = (n.saturating_sub(1)).min(p);
    if q < 1 || q > max_q {
        return Err(Error::invalid(format!(
            "number of components {q} outside 1..={max_q}"
        )));
    }
    let means = x.column_means();
    let centered = DMatrix::from_fn(n, p, |i, j| x.row(i)[j] - means[j]);
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let denom = ((n - 1) as f64).sqrt();
    let stdev_per_component = singular_values.iter().map(|s| s / denom).collect();

    let mut load = DMatrix::<f64>::zeros(p, q);
    for (c, &i) in order.iter().take(q).enumerate() {
        let mut col: Vec<f64> = (0..p).map(|j| v_t[(i, j)]).collect();
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        for (j, v) in col.into_iter().enumerate() {
            load[(j, c)] = v;
        }
    }
    let scores = &centered * &load;
    let score_values: Vec<f64> = (0..n).flat_map(|i| (0..q).map(move |j| (i, j))).map(|(i, j)| scores[(i, j)]).collect();
    let names = (1..=q).map(|i| format!("PC{i}")).collect();
    Ok(PcaResult {
        scores: DataMatrix::new(n, q, score_values)?.with_feature_names(names)?,
        singular_values,
        stdev_per_component,
        loadings: (0..p).map(|j| (0..q).map(|c| load[(j, c)]).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn parses_plain_csv() {
        let m = parse_csv(b"1,2\n3,4\n5,6\n", false, b',').unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn header_becomes_feature_names() {
        let m = parse_csv(b"a,b\n1,2\n", true, b',').unwrap();
        assert_eq!(m.feature_names().unwrap(), &["a".to_string(), "b".to_string()]);
        assert!(sniff_header(b"a,b\n1,2\n", b','));
        assert!(!sniff_header(b"1,2\n", b','));
    }

    #[test]
    fn ragged_row_is_located() {
        let err = parse_csv(b"1,2\n3,4,5\n", false, b',').unwrap_err();
        assert!(err.to_string().contains("ragged row 2"), "{err}");
    }

    #[test]
    fn non_numeric_cell_is_located() {
        match parse_csv(b"1,2\n3,x\n", false, b',').unwrap_err() {
            Error::NonNumeric { row, col, .. } => assert_eq!((row, col), (2, 2)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn standardize_small_column() {
        let x = DataMatrix::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let z = standardize(&x, true, true).unwrap();
        for (a, b) in z.values().iter().zip([-1.0, 0.0, 1.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(standardize(&x, false, false).unwrap(), x);
    }

    #[test]
    fn constant_column_cannot_be_scaled() {
        let x = DataMatrix::new(3, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let err = standardize(&x, true, true).unwrap_err();
        assert!(err.to_string().contains("column 2"), "{err}");
    }

    #[test]
    fn rank_one_data_has_one_component() {
        let x = DataMatrix::new(4, 2, vec![0.0, 0.0, 1.0, 2.0, 2.0, 4.0, 3.0, 6.0]).unwrap();
        let r = pca(&x, 1).unwrap();
        assert!(r.singular_values[1].abs() < 1e-10);
        assert!(r.loadings[1][0] > 0.0);
    }

    fn random_matrix(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = crate::rng::stream(seed, "test", 0);
        let v = (0..n * p).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect();
        DataMatrix::new(n, p, v).unwrap()
    }

    #[test]
    fn scores_equal_centered_times_loadings() {
        let x = random_matrix(50, 5, 1);
        let r = pca(&x, 3).unwrap();
        let means = x.column_means();
        for i in 0..50 {
            for c in 0..3 {
                let direct: f64 = (0..5).map(|j| (x.row(i)[j] - means[j]) * r.loadings[j][c]).sum();
                assert_relative_eq!(r.scores.row(i)[c], direct, epsilon = 1e-10);
            }
        }
        for w in r.stdev_per_component.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for m in r.scores.column_means() {
            assert!(m.abs() < 1e-10);
        }
    }

    #[test]
    fn full_rank_pca_conserves_variance() {
        let x = random_matrix(30, 4, 2);
        let r = pca(&x, 4).unwrap();
        let total_x: f64 = x.column_variances().iter().sum();
        let total_s: f64 = r.scores.column_variances().iter().sum();
        assert_relative_eq!(total_x, total_s, epsilon = 1e-8);
        // reconstruction from every component
        let means = x.column_means();
        for i in 0..30 {
            for j in 0..4 {
                let rec: f64 = (0..4).map(|c| r.scores.row(i)[c] * r.loadings[j][c]).sum();
                assert_relative_eq!(rec, x.row(i)[j] - means[j], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn q_out_of_range() {
        let x = random_matrix(3, 5, 3);
        assert!(pca(&x, 0).is_err());
        assert!(pca(&x, 3).is_err());
        assert!(pca(&x, 2).is_ok());
    }
}
