//! Per-batch trace records, their CSV form, and summary statistics.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapt::ActionKind;
use crate::error::{Error, Result};

/// What the policy did to the structure on one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceAction {
    /// Plain fine-tuning only.
    None,
    Pool,
    Increment,
    Merge,
    /// Merge followed by increment, fired by the hard-example pool.
    MergeInc,
}

impl From<ActionKind> for TraceAction {
    fn from(a: ActionKind) -> Self {
        match a {
            ActionKind::Pool => TraceAction::Pool,
            ActionKind::Increment => TraceAction::Increment,
            ActionKind::Merge => TraceAction::Merge,
        }
    }
}

impl TraceAction {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceAction::None => "none",
            TraceAction::Pool => "pool",
            TraceAction::Increment => "increment",
            TraceAction::Merge => "merge",
            TraceAction::MergeInc => "merge_inc",
        }
    }
}

impl fmt::Display for TraceAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TraceAction::None),
            "pool" => Ok(TraceAction::Pool),
            "increment" => Ok(TraceAction::Increment),
            "merge" => Ok(TraceAction::Merge),
            "merge_inc" => Ok(TraceAction::MergeInc),
            other => Err(Error::Trace(format!("unknown action `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub n: usize,
    pub action: TraceAction,
    /// Nodes added to layer 1 on this batch.
    pub delta_inc: usize,
    /// Node pairs merged in layer 1 on this batch.
    pub delta_mrg: usize,
    /// Widths after the batch's structural change.
    pub widths: Vec<usize>,
    pub lg: f64,
    pub lc: f64,
    pub e_lcl: Option<f64>,
    pub e_glb: f64,
    pub reward: Option<f64>,
    /// Predicted utilities (pool, increment, merge) at selection time.
    pub q_values: Option<[f64; 3]>,
    pub kl: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    n: usize,
    action: String,
    delta_inc: usize,
    delta_mrg: usize,
    widths: String,
    lg: f64,
    lc: f64,
    e_lcl: Option<f64>,
    e_glb: f64,
    reward: Option<f64>,
    q_pool: Option<f64>,
    q_increment: Option<f64>,
    q_merge: Option<f64>,
    kl: Option<f64>,
    wall_ms: f64,
}

pub const CSV_COLUMNS: [&str; 15] = [
    "n",
    "action",
    "delta_inc",
    "delta_mrg",
    "widths",
    "lg",
    "lc",
    "e_lcl",
    "e_glb",
    "reward",
    "q_pool",
    "q_increment",
    "q_merge",
    "kl",
    "wall_ms",
];

impl From<&TraceRecord> for CsvRow {
    fn from(r: &TraceRecord) -> Self {
        CsvRow {
            n: r.n,
            action: r.action.to_string(),
            delta_inc: r.delta_inc,
            delta_mrg: r.delta_mrg,
            widths: r.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(";"),
            lg: r.lg,
            lc: r.lc,
            e_lcl: r.e_lcl,
            e_glb: r.e_glb,
            reward: r.reward,
            q_pool: r.q_values.map(|q| q[0]),
            q_increment: r.q_values.map(|q| q[1]),
            q_merge: r.q_values.map(|q| q[2]),
            kl: r.kl,
            wall_ms: r.wall_ms,
        }
    }
}

impl TryFrom<CsvRow> for TraceRecord {
    type Error = Error;

    fn try_from(r: CsvRow) -> Result<Self> {
        let widths = r
            .widths
            .split(';')
            .map(|w| w.trim().parse::<usize>().map_err(|_| Error::Trace(format!("bad widths `{}` in row {}", r.widths, r.n))))
            .collect::<Result<Vec<_>>>()?;
        let q_values = match (r.q_pool, r.q_increment, r.q_merge) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            (None, None, None) => None,
            _ => return Err(Error::Trace(format!("partial Q values in row {}", r.n))),
        };
        Ok(TraceRecord {
            n: r.n,
            action: r.action.parse()?,
            delta_inc: r.delta_inc,
            delta_mrg: r.delta_mrg,
            widths,
            lg: r.lg,
            lc: r.lc,
            e_lcl: r.e_lcl,
            e_glb: r.e_glb,
            reward: r.reward,
            q_values,
            kl: r.kl,
            wall_ms: r.wall_ms,
        })
    }
}

pub fn write_trace<W: Write>(w: W, records: &[TraceRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if records.is_empty() {
        wr.write_record(CSV_COLUMNS)?;
    }
    for r in records {
        wr.serialize(CsvRow::from(r))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Trace(format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let mut out: Vec<TraceRecord> = Vec::new();
    for row in rd.deserialize::<CsvRow>() {
        let rec = TraceRecord::try_from(row?)?;
        if let Some(prev) = out.last() {
            if rec.n <= prev.n {
                return Err(Error::Trace(format!("batch index {} does not follow {}", rec.n, prev.n)));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn save_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    write_trace(std::fs::File::create(path)?, records)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    read_trace(std::fs::File::open(path)?)
}

/// Mean and population standard deviation of the values present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of<I: IntoIterator<Item = f64>>(values: I) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Stat {
            count: v.len(),
            mean,
            std: var.sqrt(),
        })
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4} (n={})", self.mean, self.std, self.count)
    }
}

/// Error statistics over the last `window` records of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub window: usize,
    pub records: usize,
    pub e_lcl: Option<Stat>,
    pub e_glb: Option<Stat>,
    pub final_widths: Vec<usize>,
}

impl Summary {
    pub fn from_records(records: &[TraceRecord], last: usize) -> Summary {
        let tail = &records[records.len().saturating_sub(last)..];
        Summary {
            window: last,
            records: records.len(),
            e_lcl: Stat::of(tail.iter().filter_map(|r| r.e_lcl)),
            e_glb: Stat::of(tail.iter().map(|r| r.e_glb)),
            final_widths: records.last().map(|r| r.widths.clone()).unwrap_or_default(),
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |s: &Option<Stat>| s.map_or("n/a".to_string(), |s| s.to_string());
        write!(
            f,
            "last {} of {} batches: E_lcl {} | E_glb {} | widths {:?}",
            self.window.min(self.records),
            self.records,
            show(&self.e_lcl),
            show(&self.e_glb),
            self.final_widths
        )
    }
}
