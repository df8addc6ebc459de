//! Interaction logs, temporal period split, sequence construction and the
//! training-sample draw.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Id, Result};

pub const NUM_PERIODS: usize = 10;
pub const TRAIN_PERIODS: usize = 8;
pub const DEFAULT_MAX_HISTORY: usize = 10;
pub const DEFAULT_SAMPLE_SIZE: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub user: Id,
    pub item: Id,
    pub timestamp: u64,
}

impl Event {
    fn order_key(&self) -> (u64, &str, &str) {
        (self.timestamp, &self.user, &self.item)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub title: String,
    /// Distinct genre labels in the order they were listed.
    pub genres: Vec<String>,
}

impl ItemMeta {
    pub fn new(title: impl Into<String>, genres: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut seen = HashSet::new();
        let genres = genres
            .into_iter()
            .map(Into::into)
            .filter(|g: &String| !g.is_empty() && seen.insert(g.clone()))
            .collect();
        Self {
            title: title.into(),
            genres,
        }
    }
}

/// Timestamped (user, item) events plus item metadata.
///
/// Every event references an item present in the metadata map; this is
/// checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog {
    events: Vec<Event>,
    items: IndexMap<Id, ItemMeta>,
}

impl InteractionLog {
    pub fn new(events: Vec<Event>, items: IndexMap<Id, ItemMeta>) -> Result<Self> {
        let mut unknown: Vec<String> = events
            .iter()
            .filter(|e| !items.contains_key(&e.item))
            .map(|e| e.item.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        if !unknown.is_empty() {
            unknown.sort();
            return Err(Error::UnknownItems(unknown));
        }
        Ok(Self { events, items })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn items(&self) -> &IndexMap<Id, ItemMeta> {
        &self.items
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_users(&self) -> usize {
        self.events
            .iter()
            .map(|e| e.user.as_str())
            .collect::<HashSet<_>>()
            .len()
    }

    /// Interaction count per item over the given events. Items without
    /// events are reported with a zero count.
    pub fn item_counts<'e>(&self, events: impl IntoIterator<Item = &'e Event>) -> IndexMap<&str, u64> {
        let mut counts: IndexMap<&str, u64> = self.items.keys().map(|k| (k.as_str(), 0)).collect();
        for e in events {
            if let Some(c) = counts.get_mut(e.item.as_str()) {
                *c += 1;
            }
        }
        counts
    }

    /// Writes the log in the two-file TSV format read by [`ingest`].
    pub fn write_tsv(&self, interactions: &Path, items: &Path) -> Result<()> {
        let mut w = create(interactions)?;
        let res: std::io::Result<()> = (|| {
            writeln!(w, "user_id\titem_id\ttimestamp")?;
            for e in &self.events {
                writeln!(w, "{}\t{}\t{}", e.user, e.item, e.timestamp)?;
            }
            w.flush()
        })();
        res.map_err(|e| Error::io(interactions, e))?;

        let mut w = create(items)?;
        let res: std::io::Result<()> = (|| {
            writeln!(w, "item_id\ttitle\tgenres")?;
            for (id, meta) in &self.items {
                writeln!(w, "{}\t{}\t{}", id, meta.title, meta.genres.join("|"))?;
            }
            w.flush()
        })();
        res.map_err(|e| Error::io(items, e))
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn malformed(file: &Path, line: usize, field: &str, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        file: file.to_path_buf(),
        line,
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn check_header(file: &Path, header: Option<&str>, expected: &[&str]) -> Result<()> {
    let header = header.unwrap_or("").trim_end_matches('\r');
    let cols: Vec<&str> = header.split('\t').collect();
    if cols != expected {
        return Err(malformed(
            file,
            1,
            "header",
            format!("expected `{}`, found `{}`", expected.join("\\t"), header),
        ));
    }
    Ok(())
}

/// Reads an interactions TSV (`user_id, item_id, timestamp`) and an items
/// TSV (`item_id, title, genres`).
pub fn ingest(interactions_file: &Path, items_file: &Path) -> Result<InteractionLog> {
    let items_text = fs::read_to_string(items_file).map_err(|e| Error::io(items_file, e))?;
    let mut lines = items_text.lines();
    check_header(items_file, lines.next(), &["item_id", "title", "genres"])?;
    let mut items = IndexMap::new();
    for (idx, raw) in lines.enumerate() {
        let line_no = idx + 2;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 3 {
            return Err(malformed(
                items_file,
                line_no,
                "row",
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        if cols[0].is_empty() {
            return Err(malformed(items_file, line_no, "item_id", "empty"));
        }
        let meta = ItemMeta::new(cols[1], cols[2].split('|'));
        if items.insert(cols[0].to_string(), meta).is_some() {
            return Err(malformed(
                items_file,
                line_no,
                "item_id",
                format!("duplicate id `{}`", cols[0]),
            ));
        }
    }

    let text = fs::read_to_string(interactions_file).map_err(|e| Error::io(interactions_file, e))?;
    let mut lines = text.lines();
    check_header(interactions_file, lines.next(), &["user_id", "item_id", "timestamp"])?;
    let mut events = Vec::new();
    for (idx, raw) in lines.enumerate() {
        let line_no = idx + 2;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 3 {
            return Err(malformed(
                interactions_file,
                line_no,
                "row",
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        if cols[0].is_empty() {
            return Err(malformed(interactions_file, line_no, "user_id", "empty"));
        }
        if cols[1].is_empty() {
            return Err(malformed(interactions_file, line_no, "item_id", "empty"));
        }
        let timestamp = cols[2]
            .parse::<u64>()
            .map_err(|e| malformed(interactions_file, line_no, "timestamp", format!("`{}`: {e}", cols[2])))?;
        events.push(Event {
            user: cols[0].to_string(),
            item: cols[1].to_string(),
            timestamp,
        });
    }
    InteractionLog::new(events, items)
}

/// Reads the original MovieLens-1M `ratings.dat` / `movies.dat` pair
/// (`::`-separated, Latin-1 encoded).
pub fn ingest_movielens(ratings_file: &Path, movies_file: &Path) -> Result<InteractionLog> {
    let movies = read_latin1(movies_file)?;
    let mut items = IndexMap::new();
    for (idx, raw) in movies.lines().enumerate() {
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split("::").collect();
        if cols.len() != 3 {
            return Err(malformed(
                movies_file,
                idx + 1,
                "row",
                format!("expected 3 `::`-separated fields, found {}", cols.len()),
            ));
        }
        items.insert(cols[0].to_string(), ItemMeta::new(cols[1], cols[2].split('|')));
    }

    let ratings = read_latin1(ratings_file)?;
    let mut events = Vec::new();
    for (idx, raw) in ratings.lines().enumerate() {
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split("::").collect();
        if cols.len() != 4 {
            return Err(malformed(
                ratings_file,
                idx + 1,
                "row",
                format!("expected 4 `::`-separated fields, found {}", cols.len()),
            ));
        }
        let timestamp = cols[3]
            .parse::<u64>()
            .map_err(|e| malformed(ratings_file, idx + 1, "timestamp", format!("`{}`: {e}", cols[3])))?;
        events.push(Event {
            user: cols[0].to_string(),
            item: cols[1].to_string(),
            timestamp,
        });
    }
    InteractionLog::new(events, items)
}

fn read_latin1(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes.iter().map(|&b| b as char).collect())
}

/// Drops items none of whose genres reaches `min_interactions` total events,
/// together with their events.
///
/// A genre's count is the number of events on items tagged with it. Items
/// without genres only survive the no-op threshold of zero.
pub fn filter_rare_genres(log: &InteractionLog, min_interactions: u64) -> InteractionLog {
    if min_interactions == 0 {
        return log.clone();
    }
    let mut genre_counts: HashMap<&str, u64> = HashMap::new();
    for e in &log.events {
        for g in &log.items[&e.item].genres {
            *genre_counts.entry(g.as_str()).or_default() += 1;
        }
    }
    let items: IndexMap<Id, ItemMeta> = log
        .items
        .iter()
        .filter(|(_, meta)| {
            meta.genres
                .iter()
                .any(|g| genre_counts.get(g.as_str()).copied().unwrap_or(0) >= min_interactions)
        })
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let events = log
        .events
        .iter()
        .filter(|e| items.contains_key(&e.item))
        .cloned()
        .collect();
    InteractionLog { events, items }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn of_period(period: usize) -> Self {
        match period {
            p if p < TRAIN_PERIODS => Split::Train,
            p if p == TRAIN_PERIODS => Split::Validation,
            _ => Split::Test,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
        }
    }
}

/// Ten temporally ordered buckets of near-equal event count. Buckets 0..8
/// are training, 8 is validation and 9 is test.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSplit {
    periods: Vec<Vec<Event>>,
}

impl PeriodSplit {
    pub fn periods(&self) -> &[Vec<Event>] {
        &self.periods
    }

    pub fn events_in(&self, split: Split) -> impl Iterator<Item = &Event> {
        self.periods
            .iter()
            .enumerate()
            .filter(move |(p, _)| Split::of_period(*p) == split)
            .flat_map(|(_, events)| events.iter())
    }

    pub fn count(&self, split: Split) -> usize {
        self.events_in(split).count()
    }

    /// All events in (timestamp, user, item) order, tagged with their split.
    pub fn iter_tagged(&self) -> impl Iterator<Item = (Split, &Event)> {
        self.periods
            .iter()
            .enumerate()
            .flat_map(|(p, events)| events.iter().map(move |e| (Split::of_period(p), e)))
    }
}

/// Sorts events by (timestamp, user_id, item_id) and cuts them into ten
/// contiguous buckets whose sizes differ by at most one; the first
/// `n % 10` buckets take the extra event.
pub fn split_periods(log: &InteractionLog) -> Result<PeriodSplit> {
    let n = log.events.len();
    if n < NUM_PERIODS {
        return Err(Error::InsufficientEvents {
            needed: NUM_PERIODS,
            got: n,
        });
    }
    let mut events = log.events.clone();
    events.sort_by(|a, b| a.order_key().cmp(&b.order_key()));

    let base = n / NUM_PERIODS;
    let extra = n % NUM_PERIODS;
    let mut periods = Vec::with_capacity(NUM_PERIODS);
    let mut rest = events.into_iter();
    for p in 0..NUM_PERIODS {
        let size = base + usize::from(p < extra);
        periods.push(rest.by_ref().take(size).collect());
    }
    Ok(PeriodSplit { periods })
}

/// One training/evaluation instance: a capped history and the next item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    /// `<user_id>#<n>` where `n` is the position of the target in the
    /// user's full timeline.
    pub id: Id,
    pub user_id: Id,
    pub history: Vec<Id>,
    pub target: Id,
    pub timestamp: u64,
    pub split: Split,
}

/// Emits one sequence per event that has at least one prior interaction by
/// the same user. Histories may reach back into earlier periods; targets
/// always belong to the split of their own period.
pub fn build_sequences(split: &PeriodSplit, max_len: usize) -> Vec<Sequence> {
    let max_len = max_len.max(1);
    let mut timelines: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut out = Vec::new();
    for (which, e) in split.iter_tagged() {
        let timeline = timelines.entry(e.user.as_str()).or_default();
        if !timeline.is_empty() {
            let start = timeline.len().saturating_sub(max_len);
            out.push(Sequence {
                id: format!("{}#{}", e.user, timeline.len()),
                user_id: e.user.clone(),
                history: timeline[start..].iter().map(|s| s.to_string()).collect(),
                target: e.item.clone(),
                timestamp: e.timestamp,
                split: which,
            });
        }
        timeline.push(e.item.as_str());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleDraw {
    pub sequences: Vec<Sequence>,
    pub seed: u64,
    pub size: usize,
}

/// Uniform draw without replacement. Selected sequences keep their pool
/// order; a pool no larger than `size` is returned whole.
pub fn draw_training_sample(sequences: &[Sequence], size: usize, seed: u64) -> SampleDraw {
    let size = size.max(1);
    let picked = if sequences.len() <= size {
        sequences.to_vec()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, sequences.len(), size).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| sequences[i].clone()).collect()
    };
    SampleDraw {
        sequences: picked,
        seed,
        size,
    }
}

pub fn write_sequences(path: &Path, sequences: &[Sequence]) -> Result<()> {
    let mut w = create(path)?;
    for s in sequences {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sequences(path: &Path) -> Result<Vec<Sequence>> {
    read_jsonl(path)
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedRow {
                file: PathBuf::from(path),
                line: i + 1,
                field: "json".into(),
                reason: e.to_string(),
            })
        })
        .collect()
}
