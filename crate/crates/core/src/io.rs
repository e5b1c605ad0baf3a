//! File formats: CSV panels (date column + one column per asset/factor,
//! ISO-8601 dates, empty string for missing) and JSON for configs and
//! manifests. Factor files may carry a `# units: percent` first line; values
//! are normalized to weekly decimals at load.
//!
//! Asset columns keep their order. A non-base currency is tagged in the
//! header as `NAME:CCY`; untagged columns are assumed base currency.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::panel::{
    FactorPanel, FxSeries, PricePanel, ReturnPanel, DEFAULT_CURRENCY, FACTOR_NAMES,
};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_string(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_string(path, &s)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = read_to_string(path)?;
    Ok(serde_json::from_str(&s)?)
}

fn parse_date(s: &str, path: &Path, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| {
        Error::Data(format!("{}:{line}: bad date {s:?}, expected YYYY-MM-DD", path.display()))
    })
}

fn parse_cell(s: &str, path: &Path, line: usize) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Data(format!("{}:{line}: bad number {s:?}", path.display())))
}

fn parse_num(s: &str, path: &Path, line: usize) -> Result<f64> {
    parse_cell(s, path, line)?.ok_or_else(|| {
        Error::Data(format!("{}:{line}: missing value where one is required", path.display()))
    })
}

/// Split a CSV into (units_percent, header, rows). Tolerates CRLF and a
/// trailing newline. The optional first line `# units: percent|decimal`
/// sets the unit flag.
fn split_csv(content: &str, path: &Path) -> Result<(bool, Vec<String>, Vec<(usize, Vec<String>)>)> {
    let mut percent = false;
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            let body = line.trim_start_matches('#').trim().to_lowercase();
            if let Some(units) = body.strip_prefix("units:") {
                match units.trim() {
                    "percent" => percent = true,
                    "decimal" => percent = false,
                    other => {
                        return Err(Error::Data(format!(
                            "{}: unknown units flag {other:?}",
                            path.display()
                        )))
                    }
                }
            }
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if header.is_none() {
            header = Some(fields);
        } else {
            rows.push((idx + 1, fields));
        }
    }
    let header =
        header.ok_or_else(|| Error::Data(format!("{}: no header row", path.display())))?;
    if header.first().map(|h| h.as_str()) != Some("date") {
        return Err(Error::Data(format!(
            "{}: first column must be 'date', got {:?}",
            path.display(),
            header.first()
        )));
    }
    Ok((percent, header, rows))
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Shortest-roundtrip float formatting for CSV output.
pub fn fmt_num(v: f64) -> String {
    format!("{v}")
}

pub fn save_price_csv(path: &Path, panel: &PricePanel) -> Result<()> {
    let mut out = String::from("date");
    for (name, tag) in panel.assets.iter().zip(&panel.currency_tags) {
        if name.contains(',') || name.contains(':') {
            return Err(Error::Data(format!("asset name {name:?} not representable in CSV")));
        }
        out.push(',');
        out.push_str(name);
        if tag != DEFAULT_CURRENCY {
            out.push(':');
            out.push_str(tag);
        }
    }
    out.push('\n');
    for t in 0..panel.n_dates() {
        out.push_str(&panel.dates[t].format("%Y-%m-%d").to_string());
        for i in 0..panel.n_assets() {
            out.push(',');
            out.push_str(&fmt_cell(panel.get(t, i)));
        }
        out.push('\n');
    }
    write_string(path, &out)
}

pub fn load_price_csv(path: &Path) -> Result<PricePanel> {
    let content = read_to_string(path)?;
    let (_, header, rows) = split_csv(&content, path)?;
    let mut assets = Vec::new();
    let mut tags = Vec::new();
    for col in &header[1..] {
        match col.split_once(':') {
            Some((name, ccy)) => {
                assets.push(name.to_string());
                tags.push(ccy.to_string());
            }
            None => {
                assets.push(col.clone());
                tags.push(DEFAULT_CURRENCY.to_string());
            }
        }
    }
    let mut dates = Vec::with_capacity(rows.len());
    let mut cells = Vec::with_capacity(rows.len() * assets.len());
    for (line, fields) in &rows {
        if fields.len() != header.len() {
            return Err(Error::Data(format!(
                "{}:{line}: {} fields, expected {}",
                path.display(),
                fields.len(),
                header.len()
            )));
        }
        dates.push(parse_date(&fields[0], path, *line)?);
        for f in &fields[1..] {
            cells.push(parse_cell(f, path, *line)?);
        }
    }
    PricePanel::new(dates, assets, tags, cells)
}

/// Return CSV layout: `date[,RF],ASSET...` holding simple weekly returns.
/// Log returns are reconstructed as ln(1+R) at load.
pub fn save_return_csv(path: &Path, panel: &ReturnPanel) -> Result<()> {
    let has_rf = !panel.rf.is_empty();
    let mut out = String::from("date");
    if has_rf {
        out.push_str(",RF");
    }
    for name in &panel.assets {
        if name.contains(',') {
            return Err(Error::Data(format!("asset name {name:?} not representable in CSV")));
        }
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for t in 0..panel.n_dates() {
        out.push_str(&panel.dates[t].format("%Y-%m-%d").to_string());
        if has_rf {
            out.push(',');
            out.push_str(&fmt_cell(Some(panel.rf[t])));
        }
        for i in 0..panel.n_assets() {
            out.push(',');
            out.push_str(&fmt_cell(panel.simple_at(t, i)));
        }
        out.push('\n');
    }
    write_string(path, &out)
}

pub fn load_return_csv(path: &Path) -> Result<ReturnPanel> {
    let content = read_to_string(path)?;
    let (percent, header, rows) = split_csv(&content, path)?;
    let scale = if percent { 0.01 } else { 1.0 };
    let has_rf = header.get(1).map(|h| h.as_str()) == Some("RF");
    let first_asset = if has_rf { 2 } else { 1 };
    let assets: Vec<String> = header[first_asset..].to_vec();
    let mut dates = Vec::with_capacity(rows.len());
    let mut rf = Vec::new();
    let mut cells = Vec::with_capacity(rows.len() * assets.len());
    for (line, fields) in &rows {
        if fields.len() != header.len() {
            return Err(Error::Data(format!(
                "{}:{line}: {} fields, expected {}",
                path.display(),
                fields.len(),
                header.len()
            )));
        }
        dates.push(parse_date(&fields[0], path, *line)?);
        if has_rf {
            rf.push(parse_num(&fields[1], path, *line)? * scale);
        }
        for f in &fields[first_asset..] {
            cells.push(parse_cell(f, path, *line)?.map(|v| v * scale));
        }
    }
    ReturnPanel::from_cells(dates, assets, cells, rf)
}

pub fn save_factor_csv(path: &Path, panel: &FactorPanel) -> Result<()> {
    let mut out = String::from("date");
    for name in FACTOR_NAMES {
        out.push(',');
        out.push_str(name);
    }
    if panel.rf.is_some() {
        out.push_str(",RF");
    }
    out.push('\n');
    for t in 0..panel.dates.len() {
        out.push_str(&panel.dates[t].format("%Y-%m-%d").to_string());
        for c in 0..FACTOR_NAMES.len() {
            out.push(',');
            out.push_str(&fmt_cell(Some(panel.factors[(t, c)])));
        }
        if let Some(rf) = &panel.rf {
            out.push(',');
            out.push_str(&fmt_cell(Some(rf[t])));
        }
        out.push('\n');
    }
    write_string(path, &out)
}

pub fn load_factor_csv(path: &Path) -> Result<FactorPanel> {
    let content = read_to_string(path)?;
    let (percent, header, rows) = split_csv(&content, path)?;
    let scale = if percent { 0.01 } else { 1.0 };
    let names: Vec<&str> = header[1..].iter().map(|s| s.as_str()).collect();
    let has_rf = names.last() == Some(&"RF");
    let expect_n = FACTOR_NAMES.len() + usize::from(has_rf);
    if names.len() != expect_n || names[..FACTOR_NAMES.len()] != FACTOR_NAMES {
        return Err(Error::Data(format!(
            "{}: factor columns must be {:?} with optional trailing RF, got {:?}",
            path.display(),
            FACTOR_NAMES,
            names
        )));
    }
    let mut dates = Vec::with_capacity(rows.len());
    let mut vals = Vec::with_capacity(rows.len() * FACTOR_NAMES.len());
    let mut rf = Vec::new();
    for (line, fields) in &rows {
        if fields.len() != header.len() {
            return Err(Error::Data(format!(
                "{}:{line}: {} fields, expected {}",
                path.display(),
                fields.len(),
                header.len()
            )));
        }
        dates.push(parse_date(&fields[0], path, *line)?);
        for f in &fields[1..=FACTOR_NAMES.len()] {
            vals.push(parse_num(f, path, *line)? * scale);
        }
        if has_rf {
            rf.push(parse_num(&fields[FACTOR_NAMES.len() + 1], path, *line)? * scale);
        }
    }
    let n = dates.len();
    FactorPanel::new(dates, Mat::from_vec(n, FACTOR_NAMES.len(), vals), has_rf.then_some(rf))
}

/// FX rate file: `date,rate`.
pub fn load_fx_csv(path: &Path) -> Result<FxSeries> {
    let content = read_to_string(path)?;
    let (_, header, rows) = split_csv(&content, path)?;
    if header.len() != 2 {
        return Err(Error::Data(format!(
            "{}: fx file needs exactly 'date,rate' columns",
            path.display()
        )));
    }
    let mut dates = Vec::with_capacity(rows.len());
    let mut rates = Vec::with_capacity(rows.len());
    for (line, fields) in &rows {
        dates.push(parse_date(&fields[0], path, *line)?);
        rates.push(parse_num(&fields[1], path, *line)?);
    }
    Ok(FxSeries { dates, rates })
}

/// Provenance of a cleaned panel: where it came from and which cleaning
/// knobs produced it.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct PanelManifest {
    pub source_file: String,
    pub anchor_weekday: String,
    pub coverage_threshold: f64,
    pub fill_limit: usize,
}
