//! Iron Condor P&L over recorded option chains.
//!
//! Input files are CSV with header
//! `date,underlying_close,expiry,strike,kind,bid,ask` and ISO-8601 dates.
//! Every `.csv` file in a directory is read and rows are grouped by date.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::condor::{check_strike_order, from_params, structure_of, CondorSpec, StructureParams, MIN_CREDIT};
use crate::error::{Error, Result};
use crate::pricer::{bs_price, OptionKind};

pub const HEADER: [&str; 7] = ["date", "underlying_close", "expiry", "strike", "kind", "bid", "ask"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub expiry: NaiveDate,
    pub strike: f64,
    pub kind: OptionKind,
    pub bid: f64,
    pub ask: f64,
}

impl ChainRow {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSnapshot {
    pub date: NaiveDate,
    pub underlying_close: f64,
    pub rows: Vec<ChainRow>,
}

impl ChainSnapshot {
    pub fn quote(&self, expiry: NaiveDate, strike: f64, kind: OptionKind) -> Option<&ChainRow> {
        self.rows
            .iter()
            .find(|r| r.expiry == expiry && r.kind == kind && (r.strike - strike).abs() < 1e-9)
    }

    pub fn mid(&self, expiry: NaiveDate, strike: f64, kind: OptionKind) -> Option<f64> {
        self.quote(expiry, strike, kind).map(ChainRow::mid)
    }

    /// Sorted distinct strikes listed for `expiry` and `kind`.
    pub fn strikes(&self, expiry: NaiveDate, kind: OptionKind) -> Vec<f64> {
        let mut ks: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.expiry == expiry && r.kind == kind)
            .map(|r| r.strike)
            .collect();
        ks.sort_by(f64::total_cmp);
        ks.dedup();
        ks
    }

    pub fn expiries(&self) -> Vec<NaiveDate> {
        let mut e: Vec<NaiveDate> = self.rows.iter().map(|r| r.expiry).collect();
        e.sort();
        e.dedup();
        e
    }
}

fn violation(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::SchemaViolation {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_date(field: &str, path: &Path, line: u64, name: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field.trim(), "%Y-%m-%d")
        .map_err(|_| violation(path, line, format!("{name} `{field}` is not an ISO-8601 date")))
}

fn parse_num(field: &str, path: &Path, line: u64, name: &str) -> Result<f64> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(violation(path, line, format!("{name} `{field}` is not a finite number"))),
    }
}

fn read_file(path: &Path, by_date: &mut BTreeMap<NaiveDate, ChainSnapshot>) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != HEADER {
        return Err(violation(path, 1, format!("header must be `{}`", HEADER.join(","))));
    }
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i as u64 + 2, |p| p.line());
        if rec.len() != HEADER.len() {
            return Err(violation(path, line, format!("expected 7 fields, found {}", rec.len())));
        }
        let date = parse_date(&rec[0], path, line, "date")?;
        let close = parse_num(&rec[1], path, line, "underlying_close")?;
        let expiry = parse_date(&rec[2], path, line, "expiry")?;
        let strike = parse_num(&rec[3], path, line, "strike")?;
        let kind: OptionKind = rec[4]
            .parse()
            .map_err(|e: String| violation(path, line, e))?;
        let bid = parse_num(&rec[5], path, line, "bid")?;
        let ask = parse_num(&rec[6], path, line, "ask")?;
        if !(close > 0.0) {
            return Err(violation(path, line, "underlying_close must be positive"));
        }
        if !(strike > 0.0) {
            return Err(violation(path, line, "strike must be positive"));
        }
        if bid < 0.0 {
            return Err(violation(path, line, "bid must be non-negative"));
        }
        if bid > ask {
            return Err(violation(path, line, format!("bid {bid} exceeds ask {ask}")));
        }
        if expiry < date {
            return Err(violation(path, line, "expiry precedes the quote date"));
        }
        let snap = by_date.entry(date).or_insert_with(|| ChainSnapshot {
            date,
            underlying_close: close,
            rows: Vec::new(),
        });
        if (snap.underlying_close - close).abs() > 1e-9 {
            return Err(violation(
                path,
                line,
                format!("underlying_close {close} disagrees with {} for {date}", snap.underlying_close),
            ));
        }
        snap.rows.push(ChainRow {
            expiry,
            strike,
            kind,
            bid,
            ask,
        });
    }
    Ok(())
}

/// Reads every `.csv` file in `dir` and returns one snapshot per date, in
/// date order.
pub fn load_chains(dir: &Path) -> Result<Vec<ChainSnapshot>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    let mut by_date = BTreeMap::new();
    for f in &files {
        read_file(f, &mut by_date)?;
    }
    if by_date.is_empty() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }
    Ok(by_date.into_values().collect())
}

/// Nearest listed strike; on a tie the one farther from `spot` wins.
fn snap(listed: &[f64], target: f64, spot: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &k) in listed.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (d, db) = ((k - target).abs(), (listed[b] - target).abs());
                if d < db - 1e-12 || ((d - db).abs() <= 1e-12 && (k - spot).abs() > (listed[b] - spot).abs()) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Snaps the target strikes for `(x, xhat, xbar)` onto the listed strikes of
/// `expiry` and sets the credit from mid quotes.
pub fn select_strikes(
    snapshot: &ChainSnapshot,
    expiry: NaiveDate,
    x: f64,
    xhat: f64,
    xbar: f64,
) -> Result<CondorSpec> {
    let spot = snapshot.underlying_close;
    let target = from_params(x, xhat, xbar, spot)?;
    let puts = snapshot.strikes(expiry, OptionKind::Put);
    let calls = snapshot.strikes(expiry, OptionKind::Call);
    let missing = |what: &str| Error::NoMatchingStrikes(format!("{what} for expiry {expiry} on {}", snapshot.date));
    if puts.len() < 2 {
        return Err(missing("fewer than two put strikes"));
    }
    if calls.len() < 2 {
        return Err(missing("fewer than two call strikes"));
    }
    let i2 = snap(&puts, target[1], spot).ok_or_else(|| missing("no put strike"))?;
    let mut i1 = snap(&puts, target[0], spot).ok_or_else(|| missing("no put strike"))?;
    if i1 >= i2 {
        i1 = i2.checked_sub(1).ok_or_else(|| missing("no put strike below the short put"))?;
    }
    let i3 = snap(&calls, target[2], spot).ok_or_else(|| missing("no call strike"))?;
    let mut i4 = snap(&calls, target[3], spot).ok_or_else(|| missing("no call strike"))?;
    if i4 <= i3 {
        i4 = i3 + 1;
        if i4 >= calls.len() {
            return Err(missing("no call strike above the short call"));
        }
    }
    let strikes = [puts[i1], puts[i2], calls[i3], calls[i4]];
    check_strike_order(strikes).map_err(|_| missing("snapped strikes cross"))?;
    let credit = portfolio_mid(snapshot, expiry, strikes).ok_or_else(|| missing("incomplete quotes"))?;
    if !(credit > MIN_CREDIT) {
        return Err(Error::NonpositiveCredit(credit));
    }
    let mut spec = CondorSpec::new(strikes, credit)?;
    spec.params = Some(StructureParams { x, xhat, xbar });
    Ok(spec)
}

/// Portfolio value from mid quotes, `None` if any leg is unquoted.
pub fn portfolio_mid(snapshot: &ChainSnapshot, expiry: NaiveDate, k: [f64; 4]) -> Option<f64> {
    Some(CondorSpec::combine([
        snapshot.mid(expiry, k[0], OptionKind::Put)?,
        snapshot.mid(expiry, k[1], OptionKind::Put)?,
        snapshot.mid(expiry, k[2], OptionKind::Call)?,
        snapshot.mid(expiry, k[3], OptionKind::Call)?,
    ]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySeries {
    pub spec: CondorSpec,
    pub values: Vec<f64>,
    pub pnl: Vec<f64>,
    /// Dates whose value was carried forward.
    pub gaps: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub expiry: NaiveDate,
    pub dates: Vec<NaiveDate>,
    pub underlying: Vec<f64>,
    pub series: Vec<ReplaySeries>,
}

/// Snapshots from the first date through `expiry`.
fn window(chains: &[ChainSnapshot], expiry: NaiveDate) -> Result<&[ChainSnapshot]> {
    let end = chains.partition_point(|c| c.date <= expiry);
    if end == 0 {
        return Err(Error::NoMatchingStrikes(format!("no snapshots on or before {expiry}")));
    }
    Ok(&chains[..end])
}

/// Normalized P&L of `spec` on every date. The last snapshot is settled at
/// intrinsic value; dates missing a leg quote carry the previous value.
pub fn replay_pnl(chains: &[ChainSnapshot], spec: &CondorSpec, expiry: NaiveDate) -> Result<ReplaySeries> {
    let chains = window(chains, expiry)?;
    if !(spec.credit > 0.0) {
        return Err(Error::NonpositiveCredit(spec.credit));
    }
    let last = chains.len() - 1;
    let mut values = Vec::with_capacity(chains.len());
    let mut gaps = Vec::with_capacity(chains.len());
    for (i, snap) in chains.iter().enumerate() {
        let (v, gap) = if i == last {
            (spec.terminal_value(snap.underlying_close), false)
        } else if i == 0 {
            (spec.credit, false)
        } else {
            match portfolio_mid(snap, expiry, spec.strikes()) {
                Some(v) => (v, false),
                None => (values[i - 1], true),
            }
        };
        values.push(v);
        gaps.push(gap);
    }
    let pnl = values.iter().map(|v| (spec.credit - v) / spec.credit).collect();
    Ok(ReplaySeries {
        spec: *spec,
        values,
        pnl,
        gaps,
    })
}

/// Builds each portfolio on the first snapshot and replays it to `expiry`.
pub fn replay(chains: &[ChainSnapshot], expiry: NaiveDate, portfolios: &[StructureParams]) -> Result<ReplayResult> {
    let window = window(chains, expiry)?;
    let entry = &window[0];
    let series = portfolios
        .iter()
        .map(|p| {
            let spec = select_strikes(entry, expiry, p.x, p.xhat, p.xbar)?;
            replay_pnl(window, &spec, expiry)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplayResult {
        expiry,
        dates: window.iter().map(|c| c.date).collect(),
        underlying: window.iter().map(|c| c.underlying_close).collect(),
        series,
    })
}

/// Nearest expiry on or after the last snapshot date that the first
/// snapshot lists.
pub fn default_expiry(chains: &[ChainSnapshot]) -> Option<NaiveDate> {
    let last = chains.last()?.date;
    chains.first()?.expiries().into_iter().find(|&e| e >= last)
}

/// Orientation label derived from the strikes, not from the sign words.
pub fn orientation(p: &StructureParams) -> &'static str {
    if p.xbar > 0.0 {
        "put_shifted"
    } else if p.xbar < 0.0 {
        "call_shifted"
    } else {
        "symmetric"
    }
}

pub fn portfolio_id(p: &StructureParams) -> String {
    format!("x{:.2}_xhat{:.2}_xbar{:+.2}", p.x, p.xhat, p.xbar)
}

/// Long-format `date,portfolio_id,pnl` table.
pub fn pnl_csv(result: &ReplayResult) -> String {
    let mut s = String::from("date,portfolio_id,pnl\n");
    for series in &result.series {
        let id = series.spec.params.map_or_else(|| "custom".into(), |p| portfolio_id(&p));
        for (d, p) in result.dates.iter().zip(&series.pnl) {
            let _ = writeln!(s, "{d},{id},{p}");
        }
    }
    s
}

/// Per-date underlying, value and gap flag of every portfolio.
pub fn figure_csv(result: &ReplayResult) -> String {
    let mut s = String::from("date,t,underlying,portfolio_id,orientation,k1,k2,k3,k4,credit,value,pnl,gap\n");
    for series in &result.series {
        let params = series
            .spec
            .params
            .unwrap_or_else(|| structure_of(series.spec.strikes(), result.underlying[0]));
        let id = portfolio_id(&params);
        let k = series.spec.strikes();
        for (t, d) in result.dates.iter().enumerate() {
            let _ = writeln!(
                s,
                "{d},{t},{},{id},{},{},{},{},{},{},{},{},{}",
                result.underlying[t],
                orientation(&params),
                k[0],
                k[1],
                k[2],
                k[3],
                series.spec.credit,
                series.values[t],
                series.pnl[t],
                u8::from(series.gaps[t])
            );
        }
    }
    s
}

/// Synthetic market scenarios shipped as fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Bull,
    Sideways,
    Crash,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Bull, Scenario::Sideways, Scenario::Crash];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Bull => "bull",
            Scenario::Sideways => "sideways",
            Scenario::Crash => "crash",
        }
    }

    pub fn expiry(self) -> NaiveDate {
        let (y, m, d) = match self {
            Scenario::Bull => (2020, 12, 18),
            Scenario::Sideways => (2021, 7, 16),
            Scenario::Crash => (2022, 10, 21),
        };
        NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
    }

    pub fn n_dates(self) -> usize {
        match self {
            Scenario::Bull | Scenario::Sideways => 63,
            Scenario::Crash => 49,
        }
    }

    /// Closing level at fraction `u ∈ [0, 1]` of the window.
    fn level(self, u: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            Scenario::Bull => 100.0 + 9.0 * u + 1.2 * (6.0 * PI * u).sin(),
            Scenario::Sideways => 100.0 + 1.5 * (4.0 * PI * u).sin() + 0.5 * (10.0 * PI * u).sin(),
            Scenario::Crash => 100.0 - 15.0 * u * u + 0.8 * (5.0 * PI * u).sin(),
        }
    }
}

/// Weekdays ending on `end`, oldest first.
fn trading_days(end: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = end;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d -= Duration::days(1);
    }
    out.reverse();
    out
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Chains for `scenario`: integer strikes 70..=130, Black–Scholes mids at
/// σ = 0.2 rounded to cents, bid and ask 0.05 either side (bid floored at 0).
pub fn synthetic_chains(scenario: Scenario) -> Vec<ChainSnapshot> {
    let expiry = scenario.expiry();
    let n = scenario.n_dates();
    trading_days(expiry, n)
        .into_iter()
        .enumerate()
        .map(|(t, date)| {
            let u = t as f64 / (n - 1) as f64;
            let close = round2(scenario.level(u));
            let tau = (n - 1 - t) as f64 / 252.0;
            let rows = (70..=130)
                .flat_map(|k| [OptionKind::Put, OptionKind::Call].map(move |kind| (k as f64, kind)))
                .map(|(strike, kind)| {
                    let mid = round2(bs_price(kind, close, strike, 0.2, tau, 0.0));
                    let bid = round2((mid - 0.05).max(0.0));
                    ChainRow {
                        expiry,
                        strike,
                        kind,
                        bid,
                        ask: round2(bid + 0.10),
                    }
                })
                .collect();
            ChainSnapshot {
                date,
                underlying_close: close,
                rows,
            }
        })
        .collect()
}

pub fn chains_csv(chains: &[ChainSnapshot]) -> String {
    let mut s = HEADER.join(",");
    s.push('\n');
    for c in chains {
        for r in &c.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.date,
                c.underlying_close,
                r.expiry,
                r.strike,
                r.kind.as_str(),
                r.bid,
                r.ask
            );
        }
    }
    s
}

/// Writes `<dir>/<scenario>/chains.csv` for every scenario.
pub fn write_fixtures(dir: &Path) -> Result<Vec<PathBuf>> {
    Scenario::ALL
        .iter()
        .map(|&sc| {
            let sub = dir.join(sc.as_str());
            fs::create_dir_all(&sub)?;
            let path = sub.join("chains.csv");
            fs::write(&path, chains_csv(&synthetic_chains(sc)))?;
            Ok(sub)
        })
        .collect()
}
