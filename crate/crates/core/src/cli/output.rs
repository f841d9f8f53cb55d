use std::cmp::Ordering;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const COLUMNS: [&str; 14] = [
    "campaign_id",
    "subcommand",
    "config_hash",
    "seed_master",
    "replicate",
    "stream",
    "n",
    "r",
    "statistic",
    "value",
    "ci_low",
    "ci_high",
    "resolution",
    "timestamp",
];

/// One line of a results file. Empty optional fields mean "not applicable"
/// (for instance `replicate` on an aggregate row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub campaign_id: String,
    pub subcommand: String,
    pub config_hash: String,
    pub seed_master: u64,
    pub replicate: Option<u64>,
    pub stream: Option<u32>,
    pub n: Option<u32>,
    pub r: Option<f64>,
    pub statistic: String,
    pub value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub resolution: Option<String>,
    pub timestamp: String,
}

impl ResultRow {
    /// Canonical order: `(n, replicate, statistic, r, resolution)`, with
    /// absent values first.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then(self.replicate.cmp(&other.replicate))
            .then_with(|| self.statistic.cmp(&other.statistic))
            .then_with(|| match (self.r, other.r) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                (a, b) => a.is_some().cmp(&b.is_some()),
            })
            .then_with(|| self.resolution.cmp(&other.resolution))
    }
}

/// Identity fields shared by every row of a run.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub campaign_id: String,
    pub subcommand: String,
    pub config_hash: String,
    pub seed_master: u64,
    pub timestamp: String,
}

impl RunContext {
    pub fn new(campaign_id: String, subcommand: &str, config_hash: String, seed_master: u64) -> Self {
        Self {
            campaign_id,
            subcommand: subcommand.to_string(),
            config_hash,
            seed_master,
            timestamp: now_timestamp(),
        }
    }

    pub fn row(&self, statistic: impl Into<String>, value: f64) -> ResultRow {
        ResultRow {
            campaign_id: self.campaign_id.clone(),
            subcommand: self.subcommand.clone(),
            config_hash: self.config_hash.clone(),
            seed_master: self.seed_master,
            replicate: None,
            stream: None,
            n: None,
            r: None,
            statistic: statistic.into(),
            value,
            ci_low: None,
            ci_high: None,
            resolution: None,
            timestamp: self.timestamp.clone(),
        }
    }
}

/// Seconds since the Unix epoch with millisecond precision.
pub fn now_timestamp() -> String {
    let d = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default();
    format!("{}.{:03}", d.as_secs(), d.subsec_millis())
}

/// Fluent setters for the optional columns.
pub trait RowExt {
    fn replicate(self, replicate: u64) -> Self;
    fn stream(self, stream: u32) -> Self;
    fn scale(self, n: Option<u32>, r: f64) -> Self;
    fn ci(self, ci: (f64, f64)) -> Self;
    fn resolution(self, tag: impl Into<String>) -> Self;
}

impl RowExt for ResultRow {
    fn replicate(mut self, replicate: u64) -> Self {
        self.replicate = Some(replicate);
        self
    }

    fn stream(mut self, stream: u32) -> Self {
        self.stream = Some(stream);
        self
    }

    fn scale(mut self, n: Option<u32>, r: f64) -> Self {
        self.n = n;
        self.r = Some(r);
        self
    }

    fn ci(mut self, ci: (f64, f64)) -> Self {
        self.ci_low = Some(ci.0);
        self.ci_high = Some(ci.1);
        self
    }

    fn resolution(mut self, tag: impl Into<String>) -> Self {
        self.resolution = Some(tag.into());
        self
    }
}

/// Sort rows canonically and write them after the schema line.
pub fn write_rows<W: Write>(mut w: W, rows: &mut [ResultRow]) -> Result<()> {
    rows.sort_by(ResultRow::canonical_cmp);
    writeln!(w, "# schema_version={SCHEMA_VERSION}")?;
    let mut csv = csv::Writer::from_writer(w);
    for row in rows.iter() {
        csv.serialize(row).map_err(csv_error)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_rows_to(path: &Path, rows: &mut [ResultRow]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    write_rows(std::io::BufWriter::new(std::fs::File::create(&tmp)?), rows)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a results file, refusing unknown schema versions and column sets.
pub fn read_rows<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut reader = BufReader::new(r);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let version = first
        .trim()
        .strip_prefix("# schema_version=")
        .ok_or_else(|| Error::Format("missing schema version line".into()))?;
    if version != SCHEMA_VERSION.to_string() {
        return Err(Error::Format(format!(
            "unsupported schema version {version} (expected {SCHEMA_VERSION})"
        )));
    }
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(COLUMNS.iter().copied()) {
        return Err(Error::Format(format!("unexpected columns: {headers:?}")));
    }
    csv.deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

pub fn read_rows_from(path: &Path) -> Result<Vec<ResultRow>> {
    read_rows(std::fs::File::open(path)?)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// `name[key=value;...]`
pub fn statistic_name(name: &str, params: &[(&str, String)]) -> String {
    if params.is_empty() {
        return name.to_string();
    }
    let inner: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{name}[{}]", inner.join(";"))
}

/// Split `name[key=value;...]` into the name and its parameters.
pub fn parse_statistic(s: &str) -> (&str, Vec<(&str, &str)>) {
    match s.split_once('[') {
        Some((name, rest)) => {
            let inner = rest.strip_suffix(']').unwrap_or(rest);
            let params = inner
                .split(';')
                .filter_map(|kv| kv.split_once('='))
                .collect();
            (name, params)
        }
        None => (s, Vec::new()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> RunContext {
        RunContext::new("c".into(), "smallball", "abc".into(), 3)
    }

    #[test]
    fn round_trip_with_schema_line() {
        let c = ctx();
        let mut rows = vec![
            c.row("b", 1.5).scale(Some(4), 0.0625).replicate(2),
            c.row("a", f64::NAN).ci((0.1, 0.2)).resolution("ppa16"),
            c.row("p_exceedance[lambda=1;hits=3;trials=10]", 0.3).stream(7),
        ];
        let mut buf = Vec::new();
        write_rows(&mut buf, &mut rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema_version=1\ncampaign_id,subcommand,config_hash,seed_master,replicate,stream,n,r,statistic,value,ci_low,ci_high,resolution,timestamp\n"));
        let back = read_rows(&buf[..]).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].statistic, "a");
        assert!(back[0].value.is_nan());
        assert_eq!(back[2].n, Some(4));
        assert_eq!(back[1], rows[1]);
    }

    #[test]
    fn refuses_other_schema_versions() {
        let text = "# schema_version=2\ncampaign_id\n";
        assert!(read_rows(text.as_bytes()).is_err());
        assert!(read_rows("campaign_id\n".as_bytes()).is_err());
    }

    #[test]
    fn statistic_names_round_trip() {
        let s = statistic_name("p_exceedance", &[("lambda", "1.5".into()), ("hits", "4".into())]);
        assert_eq!(s, "p_exceedance[lambda=1.5;hits=4]");
        let (name, params) = parse_statistic(&s);
        assert_eq!(name, "p_exceedance");
        assert_eq!(params, vec![("lambda", "1.5"), ("hits", "4")]);
        assert_eq!(parse_statistic("plain"), ("plain", vec![]));
    }
}
