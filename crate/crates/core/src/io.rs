//! Delimited text files: the sample matrix, prediction tables and metric
//! tables. Output is written atomically.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use nalgebra::DMatrix;

use crate::baselines::{MetricsReport, PredictionCell, PredictionTable};
use crate::error::{GaspError, Result};
use crate::grid::SiteGrid;
use crate::model::FunctionalDataset;

/// Token for a missing cell.
pub const NA_TOKEN: &str = "NA";

/// A site-by-sample matrix file: one header row (`site` then sample ids),
/// then one row per site with the coordinate first.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFile {
    pub sample_ids: Vec<String>,
    pub sites: SiteGrid,
    /// One entry per sample, each with one value per site.
    pub rows: Vec<Vec<Option<f64>>>,
}

fn io_err(path: &Path, source: std::io::Error) -> GaspError {
    GaspError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> GaspError {
    GaspError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Opens a file, transparently decompressing gzip input.
pub fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut magic = [0u8; 2];
    let got = file.read(&mut magic).map_err(|e| io_err(path, e))?;
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    if got == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(BufReader::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn parse_value(tok: &str, path: &Path, line: usize) -> Result<Option<f64>> {
    let tok = tok.trim();
    if tok == NA_TOKEN {
        return Ok(None);
    }
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {tok:?}")));
    }
    Ok(Some(v))
}

impl DataFile {
    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(open_maybe_gz(path)?, path)
    }

    /// Parses comma-separated text; `path` is only used in error messages.
    pub fn parse<R: Read>(reader: R, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| parse_err(path, 1, e.to_string()))?
            .clone();
        if header.len() < 2 {
            return Err(parse_err(
                path,
                1,
                "need a site column and at least one sample",
            ));
        }
        let sample_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut sites = Vec::new();
        let mut rows = vec![Vec::new(); sample_ids.len()];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(path, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let site = parse_value(&rec[0], path, line)?
                .ok_or_else(|| parse_err(path, line, "missing site coordinate"))?;
            if let Some(&last) = sites.last() {
                if site <= last {
                    return Err(parse_err(
                        path,
                        line,
                        format!("site {site} does not increase after {last}"),
                    ));
                }
            }
            sites.push(site);
            for (i, tok) in rec.iter().skip(1).enumerate() {
                rows[i].push(parse_value(tok, path, line)?);
            }
        }
        if sites.is_empty() {
            return Err(parse_err(path, 2, "no data rows"));
        }
        Ok(Self {
            sample_ids,
            sites: SiteGrid::new(sites)?,
            rows,
        })
    }

    /// Builds a file from a K×N matrix where `NaN` marks a missing cell.
    pub fn from_matrix(sample_ids: Vec<String>, sites: SiteGrid, y: &DMatrix<f64>) -> Result<Self> {
        if y.shape() != (sample_ids.len(), sites.len()) {
            return Err(GaspError::Domain(format!(
                "matrix {:?} does not match {} samples x {} sites",
                y.shape(),
                sample_ids.len(),
                sites.len()
            )));
        }
        let rows = y
            .row_iter()
            .map(|r| r.iter().map(|v| (!v.is_nan()).then_some(*v)).collect())
            .collect();
        Ok(Self {
            sample_ids,
            sites,
            rows,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("site");
        for id in &self.sample_ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (j, s) in self.sites.iter().enumerate() {
            out.push_str(&s.to_string());
            for row in &self.rows {
                out.push(',');
                match row[j] {
                    Some(v) => out.push_str(&v.to_string()),
                    None => out.push_str(NA_TOKEN),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn to_dataset(&self) -> Result<FunctionalDataset> {
        FunctionalDataset::from_masked(self.sites.clone(), &self.rows)
    }

    pub fn value(&self, sample: usize, column: usize) -> Option<f64> {
        self.rows
            .get(sample)
            .and_then(|r| r.get(column).copied().flatten())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA_TOKEN.to_owned(), |x| x.to_string())
}

/// Tab-separated prediction table with one header row.
pub fn prediction_table_tsv(table: &PredictionTable, sample_ids: &[String]) -> String {
    let mut out = String::from("method\tsample\tcolumn\tsite\tprediction\tlower\tupper\ttruth\n");
    for c in &table.cells {
        let id = sample_ids
            .get(c.sample)
            .cloned()
            .unwrap_or_else(|| c.sample.to_string());
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            table.method,
            id,
            c.column,
            c.site,
            c.prediction,
            opt(c.lower),
            opt(c.upper),
            opt(c.truth)
        ));
    }
    out
}

/// Reads a table written by [`prediction_table_tsv`]; sample ids are mapped
/// back to indices through `sample_ids`.
pub fn read_prediction_table(
    path: &Path,
    sample_ids: &[String],
    level: Option<f64>,
) -> Result<PredictionTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_reader(open_maybe_gz(path)?);
    let mut method = String::new();
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            parse_err(
                path,
                e.position().map_or(0, |p| p.line() as usize),
                e.to_string(),
            )
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 8 {
            return Err(parse_err(
                path,
                line,
                format!("expected 8 fields, got {}", rec.len()),
            ));
        }
        method = rec[0].to_owned();
        let sample = sample_ids
            .iter()
            .position(|s| s == &rec[1])
            .ok_or_else(|| parse_err(path, line, format!("unknown sample {:?}", &rec[1])))?;
        let column = rec[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad column index {:?}", &rec[2])))?;
        let need = |v: Option<f64>, what: &str| {
            v.ok_or_else(|| parse_err(path, line, format!("missing {what}")))
        };
        cells.push(PredictionCell {
            sample,
            column,
            site: need(parse_value(&rec[3], path, line)?, "site")?,
            prediction: need(parse_value(&rec[4], path, line)?, "prediction")?,
            lower: parse_value(&rec[5], path, line)?,
            upper: parse_value(&rec[6], path, line)?,
            truth: parse_value(&rec[7], path, line)?,
        });
    }
    Ok(PredictionTable {
        method,
        level,
        cells,
    })
}

/// Comparison table with one row per method: RMSE, coverage, interval length,
/// accuracy. Absent interval metrics print as `/`.
pub fn metrics_table(reports: &[MetricsReport]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "/".to_owned(), |x| format!("{x:.6}"));
    let mut out = String::from("method\tRMSE\tP_CI\tL_CI\tAccuracy\n");
    for r in reports {
        out.push_str(&format!(
            "{}\t{:.6}\t{}\t{}\t{:.6}\n",
            r.method,
            r.rmse,
            cell(r.coverage),
            cell(r.mean_length),
            r.accuracy
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use proptest::prelude::*;

    fn sample() -> DataFile {
        DataFile {
            sample_ids: vec!["a".into(), "b".into()],
            sites: SiteGrid::new(vec![1.0, 2.5, 10.0]).unwrap(),
            rows: vec![
                vec![Some(0.1), None, Some(1e-17)],
                vec![Some(-3.0), Some(0.3), Some(2.0 / 3.0)],
            ],
        }
    }

    #[test]
    fn round_trip_text_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample();
        let p = dir.path().join("d.csv");
        f.write(&p).unwrap();
        assert_eq!(DataFile::read(&p).unwrap(), f);
        let gz = dir.path().join("d.csv.gz");
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(f.to_csv_string().as_bytes()).unwrap();
        std::fs::write(&gz, enc.finish().unwrap()).unwrap();
        assert_eq!(DataFile::read(&gz).unwrap(), f);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let p = Path::new("x.csv");
        let err = DataFile::parse("site,a\n1,0.5\n1,0.2\n".as_bytes(), p).unwrap_err();
        assert!(matches!(err, GaspError::Parse { line: 3, .. }), "{err}");
        let err = DataFile::parse("site,a\n1,zz\n".as_bytes(), p).unwrap_err();
        assert!(matches!(err, GaspError::Parse { line: 2, .. }));
        let err = DataFile::parse("site,a,b\n1,0.5\n".as_bytes(), p).unwrap_err();
        assert_eq!(err.kind(), "parse");
        let err = DataFile::read(Path::new("/nonexistent/file.csv")).unwrap_err();
        assert_eq!(err.kind(), "io");
    }

    #[test]
    fn prediction_table_round_trip() {
        let ids = vec!["s0".to_owned(), "s1".to_owned()];
        let t = PredictionTable {
            method: "nearest-neighbor".into(),
            level: None,
            cells: vec![PredictionCell {
                sample: 1,
                column: 4,
                site: 12.5,
                prediction: 0.25,
                lower: None,
                upper: None,
                truth: Some(0.5),
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.tsv");
        write_atomic(&p, prediction_table_tsv(&t, &ids).as_bytes()).unwrap();
        assert_eq!(read_prediction_table(&p, &ids, None).unwrap(), t);
    }

    #[test]
    fn absent_metrics_print_as_slash() {
        let r = MetricsReport {
            method: "nn".into(),
            rmse: 0.1,
            coverage: None,
            mean_length: None,
            accuracy: 0.9,
            level: None,
            threshold: 0.5,
            n_cells: 3,
        };
        let t = metrics_table(&[r]);
        assert_eq!(t.lines().nth(1).unwrap(), "nn\t0.100000\t/\t/\t0.900000");
    }

    proptest! {
        #[test]
        fn values_round_trip(vals in prop::collection::vec(prop::option::of(-1e300..1e300f64), 1..30)) {
            let n = vals.len();
            let f = DataFile {
                sample_ids: vec!["x".into()],
                sites: SiteGrid::regular(0.0, 0.1, n).unwrap(),
                rows: vec![vals],
            };
            let back = DataFile::parse(f.to_csv_string().as_bytes(), Path::new("p")).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
