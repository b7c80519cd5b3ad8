//! Versioned delimited event log.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::router::Side;
use crate::venue::Level;

pub const EVENTLOG_HEADER: &str = "# momenta-eventlog v1";
const COLUMNS: &str = "event,time,asset,venue,side,level,volume,price";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Decision,
    Post,
    LimitFill,
    MarketFill,
    Mark,
    Regime,
    Reject,
    Skip,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Decision => "decision",
            EventKind::Post => "post",
            EventKind::LimitFill => "limit_fill",
            EventKind::MarketFill => "market_fill",
            EventKind::Mark => "mark",
            EventKind::Regime => "regime",
            EventKind::Reject => "reject",
            EventKind::Skip => "skip",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "decision" => EventKind::Decision,
            "post" => EventKind::Post,
            "limit_fill" => EventKind::LimitFill,
            "market_fill" => EventKind::MarketFill,
            "mark" => EventKind::Mark,
            "regime" => EventKind::Regime,
            "reject" => EventKind::Reject,
            "skip" => EventKind::Skip,
            other => return Err(Error::Data(format!("unknown event kind '{other}'"))),
        })
    }
}

/// One log line. Unused columns stay empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub time: f64,
    pub asset: Option<usize>,
    pub venue: Option<usize>,
    pub side: Option<Side>,
    pub level: Option<Level>,
    pub volume: Option<f64>,
    pub price: Option<f64>,
}

impl Event {
    pub fn new(kind: EventKind, time: f64) -> Self {
        Self {
            kind,
            time,
            asset: None,
            venue: None,
            side: None,
            level: None,
            volume: None,
            price: None,
        }
    }

    pub fn asset(mut self, asset: usize) -> Self {
        self.asset = Some(asset);
        self
    }

    pub fn venue(mut self, venue: usize) -> Self {
        self.venue = Some(venue);
        self
    }

    pub fn side(mut self, side: Side) -> Self {
        self.side = Some(side);
        self
    }

    pub fn level(mut self, level: Level) -> Self {
        self.level = Some(level);
        self
    }

    pub fn volume(mut self, volume: f64) -> Self {
        self.volume = Some(volume);
        self
    }

    pub fn price(mut self, price: f64) -> Self {
        self.price = Some(price);
        self
    }

    pub fn is_fill(&self) -> bool {
        matches!(self.kind, EventKind::LimitFill | EventKind::MarketFill)
    }
}

struct Opt<T>(Option<T>);

impl<T: fmt::Display> fmt::Display for Opt<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Some(x) => write!(f, "{x}"),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},{}",
            self.kind.as_str(),
            self.time,
            Opt(self.asset),
            Opt(self.venue),
            Opt(self.side),
            Opt(self.level),
            Opt(self.volume),
            Opt(self.price)
        )
    }
}

pub fn write_events<W: Write>(mut w: W, events: &[Event]) -> Result<()> {
    writeln!(w, "{EVENTLOG_HEADER}")?;
    writeln!(w, "{COLUMNS}")?;
    for e in events {
        writeln!(w, "{e}")?;
    }
    Ok(())
}

pub fn events_to_string(events: &[Event]) -> String {
    let mut buf = Vec::new();
    write_events(&mut buf, events).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn opt<T: std::str::FromStr>(s: &str, what: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Data(format!("bad {what} '{s}'")))
}

pub fn parse_events(text: &str) -> Result<Vec<Event>> {
    let mut lines = text.lines();
    if lines.next() != Some(EVENTLOG_HEADER) {
        return Err(Error::Data(format!("missing '{EVENTLOG_HEADER}' header")));
    }
    if lines.next() != Some(COLUMNS) {
        return Err(Error::Data("unexpected event log columns".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Data(format!(
                    "event line has {} fields: '{line}'",
                    f.len()
                )));
            }
            let side = match f[4] {
                "" => None,
                "buy" => Some(Side::Buy),
                "sell" => Some(Side::Sell),
                other => return Err(Error::Data(format!("bad side '{other}'"))),
            };
            Ok(Event {
                kind: EventKind::parse(f[0])?,
                time: f[1]
                    .parse()
                    .map_err(|_| Error::Data(format!("bad time '{}'", f[1])))?,
                asset: opt(f[2], "asset")?,
                venue: opt(f[3], "venue")?,
                side,
                level: opt::<i8>(f[5], "level")?.map(Level),
                volume: opt(f[6], "volume")?,
                price: opt(f[7], "price")?,
            })
        })
        .collect()
}
