use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{IngestError, Parsed, Reject, RejectReason};
use crate::model::{
    AccountAddress, Asset, EventKind, Evidence, Label, LabelKind, PoolEvent, PoolInfo, Provenance,
    TokenInfo, TransferRecord, TxHash, Units,
};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const TRANSFERS_FILE: &str = "transfers.jsonl";
pub const TOKENS_FILE: &str = "tokens.csv";
pub const POOLS_FILE: &str = "pools.csv";
pub const PRICES_FILE: &str = "prices.csv";
pub const OFFICIAL_FILE: &str = "official.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const TRUTH_FILE: &str = "truth_labels.csv";
pub const KEYWORDS_FILE: &str = "brand_keywords.txt";

const TOKENS_HEADER: &[&str] = &["address", "name", "symbol", "decimals", "creator", "createdTs"];
const POOLS_HEADER: &[&str] = &["address", "token0", "token1", "creator", "createdTs"];
const OFFICIAL_HEADER: &[&str] = &["address", "name", "symbol"];
const PRICES_HEADER: &[&str] = &["address", "usd"];
const LABELS_HEADER: &[&str] = &["address", "kind"];
const TRUTH_HEADER: &[&str] = &["address", "kind", "rule"];

/// Prefix of the optional first line of `prices.csv` recording the snapshot date.
pub const VALUATION_DATE_PREFIX: &str = "# valuation_date:";

/// An entry of the official-token list, with name and symbol normalized.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OfficialToken {
    pub address: AccountAddress,
    pub name: String,
    pub symbol: String,
}

/// A ground-truth label as emitted by the generator.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TruthLabel {
    pub address: AccountAddress,
    pub kind: LabelKind,
    pub rule: String,
}

pub(crate) fn read_file(path: &Path) -> Result<String, IngestError> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(s)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

// ---------------------------------------------------------------------------
// JSON Lines

struct Fields<'a> {
    obj: &'a Map<String, Value>,
}

type FieldResult<T> = Result<T, (String, String)>;

impl<'a> Fields<'a> {
    fn raw(&self, name: &str) -> FieldResult<&'a Value> {
        self.obj
            .get(name)
            .ok_or_else(|| (name.to_string(), "missing".to_string()))
    }

    fn str(&self, name: &str) -> FieldResult<&'a str> {
        self.raw(name)?
            .as_str()
            .ok_or_else(|| (name.to_string(), "expected a string".to_string()))
    }

    fn u64(&self, name: &str) -> FieldResult<u64> {
        self.raw(name)?
            .as_u64()
            .ok_or_else(|| (name.to_string(), "expected a non-negative integer".to_string()))
    }

    fn parse<T: FromStr>(&self, name: &str) -> FieldResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.str(name)?
            .parse()
            .map_err(|e: T::Err| (name.to_string(), e.to_string()))
    }
}

fn parse_jsonl<T>(
    text: &str,
    mut parse: impl FnMut(&Fields<'_>) -> Result<T, Reject>,
    key: impl Fn(&T) -> (TxHash, u32),
) -> Parsed<T> {
    let mut out = Parsed {
        records: Vec::new(),
        rejects: Vec::new(),
        lines: 0,
    };
    let mut seen = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                out.rejects.push(Reject {
                    line: line_no,
                    field: "<line>".into(),
                    reason: RejectReason::Schema(e.to_string()),
                });
                continue;
            }
        };
        let Some(obj) = value.as_object() else {
            out.rejects.push(Reject {
                line: line_no,
                field: "<line>".into(),
                reason: RejectReason::Schema("expected a JSON object".into()),
            });
            continue;
        };
        match parse(&Fields { obj }) {
            Ok(rec) => {
                if seen.insert(key(&rec)) {
                    out.records.push(rec);
                } else {
                    out.rejects.push(Reject {
                        line: line_no,
                        field: "tx/logIndex".into(),
                        reason: RejectReason::Duplicate,
                    });
                }
            }
            Err(mut r) => {
                r.line = line_no;
                out.rejects.push(r);
            }
        }
    }
    out
}

fn schema(e: (String, String)) -> Reject {
    Reject {
        line: 0,
        field: e.0,
        reason: RejectReason::Schema(e.1),
    }
}

fn log_index(f: &Fields<'_>) -> FieldResult<u32> {
    let v = f.u64("logIndex")?;
    u32::try_from(v).map_err(|_| ("logIndex".to_string(), "out of range".to_string()))
}

fn event_from_fields(f: &Fields<'_>) -> Result<PoolEvent, Reject> {
    let ev = (|| -> FieldResult<PoolEvent> {
        let kind = match f.str("kind")? {
            "mint" => EventKind::Mint,
            "burn" => EventKind::Burn,
            "swap" => EventKind::Swap,
            other => return Err(("kind".into(), format!("unknown kind `{other}`"))),
        };
        Ok(PoolEvent {
            tx_hash: f.parse("tx")?,
            log_index: log_index(f)?,
            timestamp: f.u64("ts")?,
            pool: f.parse("pool")?,
            kind,
            initiator: f.parse("initiator")?,
            amount0_in: f.parse("a0in")?,
            amount1_in: f.parse("a1in")?,
            amount0_out: f.parse("a0out")?,
            amount1_out: f.parse("a1out")?,
            lp_delta: f.parse("lp")?,
        })
    })()
    .map_err(schema)?;
    ev.validate().map_err(|v| Reject {
        line: 0,
        field: "kind".into(),
        reason: RejectReason::KindInvariant(v.to_string()),
    })?;
    Ok(ev)
}

fn transfer_from_fields(f: &Fields<'_>) -> Result<TransferRecord, Reject> {
    (|| -> FieldResult<TransferRecord> {
        Ok(TransferRecord {
            tx_hash: f.parse("tx")?,
            log_index: log_index(f)?,
            timestamp: f.u64("ts")?,
            token: f.parse::<Asset>("token")?,
            from: f.parse("from")?,
            to: f.parse("to")?,
            amount: f.parse::<Units>("amount")?,
        })
    })()
    .map_err(schema)
}

/// Lenient event parse; records keep file order.
pub fn parse_events(text: &str) -> Parsed<PoolEvent> {
    parse_jsonl(text, event_from_fields, |e| (e.tx_hash, e.log_index))
}

/// Lenient transfer parse; records keep file order.
pub fn parse_transfers(text: &str) -> Parsed<TransferRecord> {
    parse_jsonl(text, transfer_from_fields, |t| (t.tx_hash, t.log_index))
}

/// Loads, validates and sorts an event log. Any rejected line fails the load.
pub fn load_events(path: &Path) -> Result<Vec<PoolEvent>, IngestError> {
    let parsed = parse_events(&read_file(path)?);
    let mut events = strict_with_duplicates(parsed, path)?;
    events.sort();
    Ok(events)
}

/// Loads and sorts a transfer log. Any rejected line fails the load.
pub fn load_transfers(path: &Path) -> Result<Vec<TransferRecord>, IngestError> {
    let parsed = parse_transfers(&read_file(path)?);
    let mut transfers = strict_with_duplicates(parsed, path)?;
    transfers.sort_by_key(|t| t.key());
    Ok(transfers)
}

/// Strict conversion that reports a lone duplicate as `DuplicateRecord`.
fn strict_with_duplicates<T>(parsed: Parsed<T>, path: &Path) -> Result<Vec<T>, IngestError> {
    if !parsed.rejects.is_empty()
        && parsed
            .rejects
            .iter()
            .all(|r| r.reason == RejectReason::Duplicate)
    {
        let r = &parsed.rejects[0];
        return Err(IngestError::DuplicateRecord(format!(
            "{}: line {} ({})",
            source_name(path),
            r.line,
            r.field
        )));
    }
    parsed.into_strict(&source_name(path))
}

#[derive(Serialize)]
struct EventLine<'a> {
    tx: String,
    #[serde(rename = "logIndex")]
    log_index: u32,
    ts: u64,
    pool: String,
    kind: EventKind,
    initiator: String,
    a0in: &'a Units,
    a1in: &'a Units,
    a0out: &'a Units,
    a1out: &'a Units,
    lp: &'a Units,
}

#[derive(Serialize)]
struct TransferLine<'a> {
    tx: String,
    #[serde(rename = "logIndex")]
    log_index: u32,
    ts: u64,
    token: String,
    from: String,
    to: String,
    amount: &'a Units,
}

pub fn write_events(w: &mut impl Write, events: &[PoolEvent]) -> io::Result<()> {
    for e in events {
        let line = EventLine {
            tx: e.tx_hash.to_string(),
            log_index: e.log_index,
            ts: e.timestamp,
            pool: e.pool.to_string(),
            kind: e.kind,
            initiator: e.initiator.to_string(),
            a0in: &e.amount0_in,
            a1in: &e.amount1_in,
            a0out: &e.amount0_out,
            a1out: &e.amount1_out,
            lp: &e.lp_delta,
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_transfers(w: &mut impl Write, transfers: &[TransferRecord]) -> io::Result<()> {
    for t in transfers {
        let line = TransferLine {
            tx: t.tx_hash.to_string(),
            log_index: t.log_index,
            ts: t.timestamp,
            token: t.token.to_string(),
            from: t.from.to_string(),
            to: t.to.to_string(),
            amount: &t.amount,
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV registries

/// Reads a headed CSV, calling `row` on each record. Comment lines starting
/// with `#` are skipped.
fn parse_csv<T>(
    text: &str,
    source: &str,
    header: &[&str],
    mut row: impl FnMut(&csv::StringRecord) -> FieldResult<T>,
) -> Result<(Parsed<T>, Vec<usize>), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let bad_header = || IngestError::Header {
        file: source.to_string(),
        expected: header.join(","),
    };
    let found = rdr.headers().map_err(|_| bad_header())?;
    if found.iter().ne(header.iter().copied()) {
        return Err(bad_header());
    }
    let mut out = Parsed {
        records: Vec::new(),
        rejects: Vec::new(),
        lines: 0,
    };
    let mut record_lines = Vec::new();
    for result in rdr.records() {
        out.lines += 1;
        match result {
            Ok(rec) => {
                let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
                if rec.len() != header.len() {
                    out.rejects.push(Reject {
                        line,
                        field: "<row>".into(),
                        reason: RejectReason::Schema(format!(
                            "expected {} columns, found {}",
                            header.len(),
                            rec.len()
                        )),
                    });
                    continue;
                }
                match row(&rec) {
                    Ok(v) => {
                        out.records.push(v);
                        record_lines.push(line);
                    }
                    Err((field, msg)) => out.rejects.push(Reject {
                        line,
                        field,
                        reason: RejectReason::Schema(msg),
                    }),
                }
            }
            Err(e) => out.rejects.push(Reject {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                field: "<row>".into(),
                reason: RejectReason::Schema(e.to_string()),
            }),
        }
    }
    Ok((out, record_lines))
}

fn col<T: FromStr>(rec: &csv::StringRecord, header: &[&str], i: usize) -> FieldResult<T>
where
    T::Err: std::fmt::Display,
{
    rec[i]
        .parse()
        .map_err(|e: T::Err| (header[i].to_string(), e.to_string()))
}

/// Moves rows whose key was already seen into the reject list.
fn reject_duplicates<T, K: Ord>(parsed: &mut Parsed<T>, lines: &[usize], key: impl Fn(&T) -> K) {
    let mut seen = BTreeSet::new();
    let records = std::mem::take(&mut parsed.records);
    for (rec, &line) in records.into_iter().zip(lines) {
        if seen.insert(key(&rec)) {
            parsed.records.push(rec);
        } else {
            parsed.rejects.push(Reject {
                line,
                field: "address".into(),
                reason: RejectReason::Duplicate,
            });
        }
    }
    parsed.rejects.sort_by_key(|r| r.line);
}

pub fn parse_tokens(text: &str, source: &str) -> Result<Parsed<TokenInfo>, IngestError> {
    let h = TOKENS_HEADER;
    let (mut parsed, lines) = parse_csv(
        text,
        source,
        h,
        |r| {
            Ok(TokenInfo {
                address: col(r, h, 0)?,
                name: r[1].to_string(),
                symbol: r[2].to_string(),
                decimals: col(r, h, 3)?,
                creator: col(r, h, 4)?,
                creation_time: col(r, h, 5)?,
            })
        },
    )?;
    reject_duplicates(&mut parsed, &lines, |t| t.address);
    Ok(parsed)
}

pub fn parse_pools(text: &str, source: &str) -> Result<Parsed<PoolInfo>, IngestError> {
    let h = POOLS_HEADER;
    let (mut parsed, lines) = parse_csv(
        text,
        source,
        h,
        |r| {
            Ok(PoolInfo {
                address: col(r, h, 0)?,
                token0: col(r, h, 1)?,
                token1: col(r, h, 2)?,
                creator: col(r, h, 3)?,
                creation_time: col(r, h, 4)?,
            })
        },
    )?;
    reject_duplicates(&mut parsed, &lines, |p| p.address);
    Ok(parsed)
}

pub fn parse_official_tokens(
    text: &str,
    source: &str,
) -> Result<Parsed<OfficialToken>, IngestError> {
    let h = OFFICIAL_HEADER;
    let (mut parsed, lines) = parse_csv(
        text,
        source,
        h,
        |r| {
            Ok(OfficialToken {
                address: col(r, h, 0)?,
                name: crate::model::normalize_name(&r[1]),
                symbol: crate::model::normalize_name(&r[2]),
            })
        },
    )?;
    reject_duplicates(&mut parsed, &lines, |o| o.address);
    Ok(parsed)
}

/// Price rows plus the optional valuation date.
pub type PriceRows = (Parsed<(Asset, f64)>, Option<String>);

/// Parses `prices.csv` into rows plus the optional valuation date comment.
pub fn parse_prices(text: &str, source: &str) -> Result<PriceRows, IngestError> {
    let date = text
        .lines()
        .find_map(|l| l.trim().strip_prefix(VALUATION_DATE_PREFIX))
        .map(|d| d.trim().to_string());
    let h = PRICES_HEADER;
    let (mut parsed, lines) = parse_csv(
        text,
        source,
        h,
        |r| {
            let asset: Asset = col(r, h, 0)?;
            let usd: f64 = col(r, h, 1)?;
            if !usd.is_finite() || usd < 0.0 {
                return Err(("usd".into(), "price must be finite and >= 0".into()));
            }
            Ok((asset, usd))
        },
    )?;
    reject_duplicates(&mut parsed, &lines, |p| p.0);
    Ok((parsed, date))
}

/// Parses `labels.csv`. Only `ScamToken`, `OfficialToken` and
/// `ContractDeployerExcluded` may be supplied by users.
pub fn parse_user_labels(text: &str, source: &str) -> Result<Parsed<Label>, IngestError> {
    let h = LABELS_HEADER;
    parse_csv(text, source, h, |r| {
        let subject: AccountAddress = col(r, h, 0)?;
        let kind: LabelKind = col(r, h, 1)?;
        if !matches!(
            kind,
            LabelKind::ScamToken | LabelKind::OfficialToken | LabelKind::ContractDeployerExcluded
        ) {
            return Err(("kind".into(), format!("{kind} cannot be user-supplied")));
        }
        Ok(Label {
            subject,
            kind,
            provenance: Provenance::UserSupplied,
            evidence: Evidence::root("user-supplied", source),
        })
    })
    .map(|(p, _)| p)
}

pub fn parse_truth_labels(text: &str, source: &str) -> Result<Parsed<TruthLabel>, IngestError> {
    let h = TRUTH_HEADER;
    parse_csv(text, source, h, |r| {
        Ok(TruthLabel {
            address: col(r, h, 0)?,
            kind: col(r, h, 1)?,
            rule: r[2].to_string(),
        })
    })
    .map(|(p, _)| p)
}

fn load_csv<T>(
    path: &Path,
    parse: impl FnOnce(&str, &str) -> Result<Parsed<T>, IngestError>,
) -> Result<Vec<T>, IngestError> {
    let src = source_name(path);
    strict_with_duplicates(parse(&read_file(path)?, &src)?, path)
}

pub fn load_tokens(path: &Path) -> Result<Vec<TokenInfo>, IngestError> {
    load_csv(path, parse_tokens)
}

pub fn load_pools(path: &Path) -> Result<Vec<PoolInfo>, IngestError> {
    load_csv(path, parse_pools)
}

pub fn load_official_tokens(path: &Path) -> Result<BTreeSet<OfficialToken>, IngestError> {
    Ok(load_csv(path, parse_official_tokens)?.into_iter().collect())
}

pub fn load_user_labels(path: &Path) -> Result<Vec<Label>, IngestError> {
    load_csv(path, parse_user_labels)
}

pub fn load_truth_labels(path: &Path) -> Result<Vec<TruthLabel>, IngestError> {
    load_csv(path, parse_truth_labels)
}

pub fn load_price_table(path: &Path) -> Result<super::PriceTable, IngestError> {
    let src = source_name(path);
    let (parsed, date) = parse_prices(&read_file(path)?, &src)?;
    let rows = strict_with_duplicates(parsed, path)?;
    let prices: BTreeMap<Asset, f64> = rows.into_iter().collect();
    super::PriceTable::new(prices, date.unwrap_or_default())
}

/// One keyword per line; blank lines and `#` comments are ignored. Keywords are
/// normalized like token names.
pub fn load_brand_keywords(path: &Path) -> Result<Vec<String>, IngestError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(crate::model::normalize_name(t));
    }
    Ok(out)
}

fn csv_writer<W: Write>(w: W, header: &[&str]) -> csv::Result<csv::Writer<W>> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(header)?;
    Ok(wr)
}

fn csv_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn write_tokens<'a>(
    w: impl Write,
    tokens: impl IntoIterator<Item = &'a TokenInfo>,
) -> io::Result<()> {
    let mut wr = csv_writer(w, TOKENS_HEADER).map_err(csv_io)?;
    for t in tokens {
        wr.write_record([
            t.address.to_string(),
            t.name.clone(),
            t.symbol.clone(),
            t.decimals.to_string(),
            t.creator.to_string(),
            t.creation_time.to_string(),
        ])
        .map_err(csv_io)?;
    }
    wr.flush()
}

pub fn write_pools<'a>(
    w: impl Write,
    pools: impl IntoIterator<Item = &'a PoolInfo>,
) -> io::Result<()> {
    let mut wr = csv_writer(w, POOLS_HEADER).map_err(csv_io)?;
    for p in pools {
        wr.write_record([
            p.address.to_string(),
            p.token0.to_string(),
            p.token1.to_string(),
            p.creator.to_string(),
            p.creation_time.to_string(),
        ])
        .map_err(csv_io)?;
    }
    wr.flush()
}

pub fn write_official_tokens<'a>(
    w: impl Write,
    tokens: impl IntoIterator<Item = &'a OfficialToken>,
) -> io::Result<()> {
    let mut wr = csv_writer(w, OFFICIAL_HEADER).map_err(csv_io)?;
    for t in tokens {
        wr.write_record([t.address.to_string(), t.name.clone(), t.symbol.clone()])
            .map_err(csv_io)?;
    }
    wr.flush()
}

pub fn write_prices(mut w: impl Write, prices: &super::PriceTable) -> io::Result<()> {
    if !prices.valuation_date().is_empty() {
        writeln!(w, "{} {}", VALUATION_DATE_PREFIX, prices.valuation_date())?;
    }
    let mut wr = csv_writer(w, PRICES_HEADER).map_err(csv_io)?;
    for (asset, usd) in prices.iter() {
        wr.write_record([asset.to_string(), format!("{usd:?}")])
            .map_err(csv_io)?;
    }
    wr.flush()
}

pub fn write_user_labels<'a>(
    w: impl Write,
    labels: impl IntoIterator<Item = &'a Label>,
) -> io::Result<()> {
    let mut wr = csv_writer(w, LABELS_HEADER).map_err(csv_io)?;
    for l in labels {
        wr.write_record([l.subject.to_string(), l.kind.to_string()])
            .map_err(csv_io)?;
    }
    wr.flush()
}

pub fn write_truth_labels<'a>(
    w: impl Write,
    labels: impl IntoIterator<Item = &'a TruthLabel>,
) -> io::Result<()> {
    let mut wr = csv_writer(w, TRUTH_HEADER).map_err(csv_io)?;
    for l in labels {
        wr.write_record([l.address.to_string(), l.kind.to_string(), l.rule.clone()])
            .map_err(csv_io)?;
    }
    wr.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TX1: &str = "0x1111111111111111111111111111111111111111111111111111111111111111";
    const TX2: &str = "0x2222222222222222222222222222222222222222222222222222222222222222";
    const POOL: &str = "0x00000000000000000000000000000000000000aa";
    const USER: &str = "0x00000000000000000000000000000000000000bb";

    fn ev_line(tx: &str, li: u32, ts: u64, kind: &str, a: [&str; 5]) -> String {
        format!(
            r#"{{"tx":"{tx}","logIndex":{li},"ts":{ts},"pool":"{POOL}","kind":"{kind}","initiator":"{USER}","a0in":"{}","a1in":"{}","a0out":"{}","a1out":"{}","lp":"{}"}}"#,
            a[0], a[1], a[2], a[3], a[4]
        )
    }

    #[test]
    fn test_three_kinds_sorted_by_time() {
        let text = [
            ev_line(TX2, 0, 300, "burn", ["0", "0", "5", "6", "7"]),
            ev_line(TX1, 1, 200, "swap", ["10", "0", "0", "9", "0"]),
            ev_line(TX1, 0, 100, "mint", ["100", "100", "0", "0", "100"]),
        ]
        .join("\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        fs::write(&p, text).unwrap();
        let evs = load_events(&p).unwrap();
        let kinds: Vec<_> = evs.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, [EventKind::Mint, EventKind::Swap, EventKind::Burn]);
    }

    #[test]
    fn test_zero_swap_is_kind_invariant_reject() {
        let text = ev_line(TX1, 0, 1, "swap", ["0", "0", "0", "0", "0"]);
        let p = parse_events(&text);
        assert_eq!(p.lines, 1);
        assert!(p.records.is_empty());
        assert!(matches!(p.rejects[0].reason, RejectReason::KindInvariant(_)));
    }

    #[test]
    fn test_schema_errors_name_line_and_field() {
        let good = ev_line(TX1, 0, 1, "mint", ["1", "1", "0", "0", "1"]);
        let no_ts = good.replace(r#""ts":1,"#, "");
        let bad_amt = ev_line(TX2, 0, 1, "mint", ["1.5", "1", "0", "0", "1"]);
        let text = format!("{good}\n\n{no_ts}\n{bad_amt}\nnot json\n");
        let p = parse_events(&text);
        assert_eq!(p.lines, 4);
        assert_eq!(p.records.len() + p.rejects.len(), p.lines);
        let fields: Vec<_> = p.rejects.iter().map(|r| (r.line, r.field.as_str())).collect();
        assert_eq!(fields, [(3, "ts"), (4, "a0in"), (5, "<line>")]);
    }

    #[test]
    fn test_duplicate_event_is_duplicate_record() {
        let l = ev_line(TX1, 0, 1, "mint", ["1", "1", "0", "0", "1"]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        fs::write(&p, format!("{l}\n{l}\n")).unwrap();
        assert!(matches!(load_events(&p), Err(IngestError::DuplicateRecord(_))));
    }

    #[test]
    fn test_transfer_round_trip() {
        let t = TransferRecord {
            tx_hash: TX1.parse().unwrap(),
            log_index: 3,
            timestamp: 9,
            token: Asset::Eth,
            from: USER.parse().unwrap(),
            to: POOL.parse().unwrap(),
            amount: "123456789012345678901234567890".parse().unwrap(),
        };
        let mut buf = Vec::new();
        write_transfers(&mut buf, std::slice::from_ref(&t)).unwrap();
        let p = parse_transfers(std::str::from_utf8(&buf).unwrap());
        assert_eq!(p.records, vec![t]);
    }

    #[test]
    fn test_official_weth_normalized() {
        let text = "address,name,symbol\n0xC02aaA39b223FE8D0A0e5C4F27eAD9083C756Cc2,  Wrapped   Ether ,WETH\n";
        let p = parse_official_tokens(text, "official.csv").unwrap();
        assert!(p.rejects.is_empty());
        assert_eq!(p.records[0].name, "wrapped ether");
        assert_eq!(p.records[0].symbol, "weth");
    }

    #[test]
    fn test_official_header_only_is_empty() {
        let p = parse_official_tokens("address,name,symbol\n", "o").unwrap();
        assert!(p.records.is_empty() && p.rejects.is_empty());
    }

    #[test]
    fn test_official_duplicate_address() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("official.csv");
        fs::write(
            &p,
            format!("address,name,symbol\n{POOL},A,A\n{USER},B,B\n{POOL},C,C\n"),
        )
        .unwrap();
        let err = load_official_tokens(&p).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateRecord(ref m) if m.contains("line 4")));
    }

    #[test]
    fn test_bad_header() {
        assert!(matches!(
            parse_official_tokens("addr,name\n", "o"),
            Err(IngestError::Header { .. })
        ));
    }

    #[test]
    fn test_seven_deployer_labels() {
        let mut text = String::from("address,kind\n");
        for i in 1..=7 {
            text.push_str(&format!("0x{:040x},ContractDeployerExcluded\n", i));
        }
        let p = parse_user_labels(&text, "labels.csv").unwrap();
        assert_eq!(p.records.len(), 7);
        assert!(p
            .records
            .iter()
            .all(|l| l.kind == LabelKind::ContractDeployerExcluded
                && l.provenance == Provenance::UserSupplied));
    }

    #[test]
    fn test_user_label_kind_restricted() {
        let text = format!("address,kind\n{USER},CollusionAddress\n");
        let p = parse_user_labels(&text, "l").unwrap();
        assert_eq!(p.rejects.len(), 1);
        assert_eq!(p.rejects[0].field, "kind");
    }

    #[test]
    fn test_price_rows() {
        let text = format!(
            "{VALUATION_DATE_PREFIX} 2020-12-06\naddress,usd\nETH,600.0\n0xC02aaA39b223FE8D0A0e5C4F27eAD9083C756Cc2,600\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("prices.csv");
        fs::write(&p, &text).unwrap();
        let table = load_price_table(&p).unwrap();
        assert_eq!(table.usd(&Asset::Eth), Some(600.0));
        assert_eq!(table.valuation_date(), "2020-12-06");

        let mut buf = Vec::new();
        write_prices(&mut buf, &table).unwrap();
        fs::write(&p, &buf).unwrap();
        assert_eq!(load_price_table(&p).unwrap(), table);
    }

    #[test]
    fn test_missing_weth_price() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("prices.csv");
        fs::write(&p, "address,usd\nETH,600.0\n").unwrap();
        assert!(matches!(
            load_price_table(&p),
            Err(IngestError::RequiredPrice(_))
        ));
    }

    #[test]
    fn test_negative_price_rejected() {
        let (p, _) = parse_prices("address,usd\nETH,-1\n", "p").unwrap();
        assert_eq!(p.rejects[0].field, "usd");
    }

    #[test]
    fn test_keywords() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.txt");
        fs::write(&p, "# brands\nUniswap\n\n  Yearn  Finance \n").unwrap();
        assert_eq!(load_brand_keywords(&p).unwrap(), ["uniswap", "yearn finance"]);
    }

    proptest::proptest! {
        #[test]
        fn prop_no_line_dropped(picks in proptest::collection::vec(0u8..5, 0..40)) {
            let mut lines = Vec::new();
            for (i, p) in picks.iter().enumerate() {
                let tx = format!("0x{:064x}", i % 7);
                let li = (i / 7) as u32;
                lines.push(match p {
                    0 => ev_line(&tx, li, i as u64, "mint", ["1", "2", "0", "0", "1"]),
                    1 => ev_line(&tx, li, i as u64, "swap", ["0", "0", "0", "0", "0"]),
                    2 => "{\"tx\":1}".to_string(),
                    3 => ev_line(&tx, 0, 1, "swap", ["5", "0", "0", "4", "0"]),
                    _ => "garbage".to_string(),
                });
            }
            let parsed = parse_events(&lines.join("\n"));
            proptest::prop_assert_eq!(parsed.lines, picks.len());
            proptest::prop_assert_eq!(parsed.records.len() + parsed.rejects.len(), picks.len());
        }
    }
}
