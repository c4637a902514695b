use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::model::{
    BrexitLabel, CorpusStats, Person, Quote, TerrorismLabel, Vote, VoteRecord,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Quotes with more words than this are rejected.
    pub max_words: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { max_words: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejections: Vec<Rejection>,
    /// Lines whose month-only date was completed to the first of the month.
    pub completed_dates: Vec<usize>,
}

/// An immutable collection of quotes, optionally with registered persons.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    persons: BTreeMap<String, Person>,
    quotes: Vec<Quote>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(persons: Vec<Person>, quotes: Vec<Quote>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for p in persons {
            if by_id.contains_key(&p.id) {
                return Err(Error::DuplicateId(p.id));
            }
            by_id.insert(p.id.clone(), p);
        }
        let mut corpus = Corpus {
            persons: by_id,
            quotes: Vec::with_capacity(quotes.len()),
            index: HashMap::new(),
        };
        for q in quotes {
            corpus.push(q)?;
        }
        Ok(corpus)
    }

    fn push(&mut self, q: Quote) -> Result<()> {
        if self.index.contains_key(&q.id) {
            return Err(Error::DuplicateId(q.id));
        }
        if !self.persons.is_empty() && !self.persons.contains_key(&q.person_id) {
            return Err(Error::UnknownReference(q.person_id));
        }
        self.index.insert(q.id.clone(), self.quotes.len());
        self.quotes.push(q);
        Ok(())
    }

    pub fn quotes(&self) -> &[Quote] {
        &self.quotes
    }

    pub fn persons(&self) -> impl Iterator<Item = &Person> {
        self.persons.values()
    }

    pub fn person(&self, id: &str) -> Option<&Person> {
        self.persons.get(id)
    }

    pub fn quote(&self, id: &str) -> Option<&Quote> {
        self.index.get(id).map(|&i| &self.quotes[i])
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }

    /// Quotes of one person sorted by date (stable for equal dates).
    pub fn quotes_of(&self, person_id: &str) -> Vec<&Quote> {
        let mut qs: Vec<&Quote> = self
            .quotes
            .iter()
            .filter(|q| q.person_id == person_id)
            .collect();
        qs.sort_by_key(|q| q.timestamp);
        qs
    }

    /// Distinct person ids referenced by quotes, in first-seen order.
    pub fn quoted_person_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.quotes
            .iter()
            .filter(|q| seen.insert(q.person_id.as_str()))
            .map(|q| q.person_id.as_str())
            .collect()
    }

    pub(crate) fn quotes_mut(&mut self) -> &mut [Quote] {
        &mut self.quotes
    }

    pub fn stats(&self) -> CorpusStats {
        let mut s = CorpusStats {
            quotes: self.quotes.len(),
            persons: self.persons.len(),
            ..Default::default()
        };
        for q in &self.quotes {
            match q.terrorism_label {
                Some(l) => *s.terrorism.entry(format!("{l:?}")).or_default() += 1,
                None => s.terrorism_unlabelled += 1,
            }
            match q.brexit_label {
                Some(l) => *s.brexit.entry(format!("{l:?}")).or_default() += 1,
                None => s.brexit_unlabelled += 1,
            }
        }
        for p in self.persons.values() {
            *s.persons_per_group.entry(p.group.clone()).or_default() += 1;
        }
        s
    }

    /// Drops persons with fewer than `min_quotes` quotes or (when votes are
    /// given) an empty voting record. Returns the kept corpus and the ids of
    /// removed persons.
    pub fn filter_persons(
        &self,
        filter: &PersonFilter,
        votes: Option<&BTreeMap<String, VoteRecord>>,
    ) -> Result<(Corpus, Vec<String>)> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for q in &self.quotes {
            *counts.entry(q.person_id.as_str()).or_default() += 1;
        }
        let mut ids: Vec<String> = if self.persons.is_empty() {
            self.quoted_person_ids().into_iter().map(String::from).collect()
        } else {
            self.persons.keys().cloned().collect()
        };
        ids.sort();
        let keep = |id: &str| {
            let enough = counts.get(id).copied().unwrap_or(0) >= filter.min_quotes;
            let voted = match votes {
                Some(v) if filter.require_votes => v.get(id).is_some_and(|r| !r.votes.is_empty()),
                _ => true,
            };
            enough && voted
        };
        let removed: Vec<String> = ids.iter().filter(|id| !keep(id)).cloned().collect();
        let persons = self
            .persons
            .values()
            .filter(|p| keep(&p.id))
            .cloned()
            .collect();
        let quotes = self
            .quotes
            .iter()
            .filter(|q| keep(&q.person_id))
            .cloned()
            .collect();
        Ok((Corpus::new(persons, quotes)?, removed))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersonFilter {
    pub min_quotes: usize,
    pub require_votes: bool,
}

impl Default for PersonFilter {
    fn default() -> Self {
        Self {
            min_quotes: 3,
            require_votes: true,
        }
    }
}

#[derive(Deserialize)]
struct RawQuote {
    id: Option<String>,
    person_id: Option<String>,
    timestamp: Option<String>,
    text: Option<String>,
    #[serde(default)]
    language: Option<String>,
    #[serde(default)]
    terrorism_label: Option<TerrorismLabel>,
    #[serde(default)]
    brexit_label: Option<BrexitLabel>,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
}

/// Parses a day-precision date. Month-only dates become the first of the
/// month and are reported through the returned flag.
pub fn parse_date(s: &str) -> Option<(NaiveDate, bool)> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some((d, false));
    }
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
        return Some((dt.date(), false));
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some((dt.date_naive(), false));
    }
    let mut parts = s.splitn(2, '-');
    let (y, m) = (parts.next()?, parts.next()?);
    if y.len() == 4 && m.len() == 2 {
        let d = NaiveDate::from_ymd_opt(y.parse().ok()?, m.parse().ok()?, 1)?;
        return Some((d, true));
    }
    None
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses quote JSON lines. Malformed or filtered records go to the report;
/// duplicate ids and unknown persons are hard errors.
pub fn parse_quotes(
    input: &str,
    persons: Vec<Person>,
    config: &IngestConfig,
) -> Result<(Corpus, IngestReport)> {
    let mut corpus = Corpus::new(persons, Vec::new())?;
    let mut report = IngestReport::default();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut reject = |id: Option<String>, reason: String| {
            report.rejections.push(Rejection {
                line: line_no,
                id,
                reason,
            })
        };
        let raw: RawQuote = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                reject(None, format!("malformed record: {e}"));
                continue;
            }
        };
        let id = raw.id.clone();
        let (Some(qid), Some(person_id), Some(ts), Some(text)) =
            (raw.id, raw.person_id, raw.timestamp, raw.text)
        else {
            reject(id, "missing one of id, person_id, timestamp, text".into());
            continue;
        };
        let Some((timestamp, completed)) = parse_date(&ts) else {
            reject(Some(qid), format!("invalid date `{ts}`"));
            continue;
        };
        if text.trim().is_empty() {
            reject(Some(qid), "empty text".into());
            continue;
        }
        let quote = Quote {
            id: qid,
            person_id,
            timestamp,
            text,
            language: raw.language.unwrap_or_default(),
            terrorism_label: raw.terrorism_label,
            brexit_label: raw.brexit_label,
            embedding: raw.embedding,
        };
        let words = quote.word_count();
        if words > config.max_words {
            reject(
                Some(quote.id),
                format!("{words} words exceeds limit of {}", config.max_words),
            );
            continue;
        }
        if completed {
            report.completed_dates.push(line_no);
        }
        corpus.push(quote)?;
        report.accepted += 1;
    }
    Ok((corpus, report))
}

pub fn ingest_quotes(
    path: &Path,
    persons: Vec<Person>,
    config: &IngestConfig,
) -> Result<(Corpus, IngestReport)> {
    parse_quotes(&read_to_string(path)?, persons, config)
}

pub fn read_persons(path: &Path) -> Result<Vec<Person>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Person = serde_json::from_str(line).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct VoteRow {
    person_id: String,
    date: String,
    vote: String,
}

/// Reads `person_id,date,vote` rows into per-person records, sorted by date.
pub fn parse_votes<R: std::io::Read>(reader: R) -> Result<BTreeMap<String, VoteRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut grouped: BTreeMap<String, Vec<(NaiveDate, Vote)>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<VoteRow>().enumerate() {
        let line = i + 2;
        let row = row?;
        let parse_err = |message: String| Error::Parse {
            context: "votes".into(),
            line,
            message,
        };
        let (date, _) =
            parse_date(&row.date).ok_or_else(|| parse_err(format!("invalid date `{}`", row.date)))?;
        let vote: Vote = row.vote.parse().map_err(|e: Error| parse_err(e.to_string()))?;
        grouped.entry(row.person_id).or_default().push((date, vote));
    }
    grouped
        .into_iter()
        .map(|(id, mut votes)| {
            votes.sort_by_key(|v| v.0);
            VoteRecord::new(id.clone(), votes).map(|r| (id, r))
        })
        .collect()
}

pub fn read_votes(path: &Path) -> Result<BTreeMap<String, VoteRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_votes(file)
}

pub fn write_quotes<W: std::io::Write>(mut w: W, quotes: &[Quote]) -> Result<()> {
    for q in quotes {
        serde_json::to_writer(&mut w, q)?;
        writeln!(w).map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, ts: &str, text: &str) -> String {
        serde_json::json!({"id": id, "person_id": "p1", "timestamp": ts, "text": text, "language": "en"})
            .to_string()
    }

    #[test]
    fn long_quotes_are_rejected() {
        let long = vec!["word"; 150].join(" ");
        let input = [line("a", "2001-01-01", &long), line("b", "2001-01-02", "short")].join("\n");
        let (c, r) = parse_quotes(&input, vec![], &IngestConfig::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(r.rejections.len(), 1);
        assert_eq!(r.rejections[0].line, 1);
        assert!(r.rejections[0].reason.contains("150 words"));
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let (c, r) = parse_quotes("", vec![], &IngestConfig::default()).unwrap();
        assert!(c.is_empty());
        assert_eq!(r.accepted, 0);
        assert!(r.rejections.is_empty());
        assert_eq!(c.stats().quotes, 0);
    }

    #[test]
    fn bad_date_reported_with_line_number() {
        let mut lines: Vec<String> = (0..5)
            .map(|i| line(&format!("q{i}"), &format!("2010-05-0{}", i + 1), "text here"))
            .collect();
        lines.insert(3, line("bad", "2010-13-45", "text"));
        let (c, r) = parse_quotes(&lines.join("\n"), vec![], &IngestConfig::default()).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(r.rejections.len(), 1);
        assert_eq!(r.rejections[0].line, 4);
        assert_eq!(r.rejections[0].id.as_deref(), Some("bad"));
    }

    #[test]
    fn month_only_dates_are_completed_and_flagged() {
        let (c, r) = parse_quotes(&line("a", "2004-07", "x"), vec![], &IngestConfig::default()).unwrap();
        assert_eq!(c.quotes()[0].timestamp, NaiveDate::from_ymd_opt(2004, 7, 1).unwrap());
        assert_eq!(r.completed_dates, vec![1]);
    }

    #[test]
    fn duplicate_ids_and_unknown_persons_are_errors() {
        let input = [line("a", "2001-01-01", "x"), line("a", "2001-01-02", "y")].join("\n");
        assert!(matches!(
            parse_quotes(&input, vec![], &IngestConfig::default()),
            Err(Error::DuplicateId(_))
        ));
        let persons = vec![Person {
            id: "other".into(),
            display_name: "Other".into(),
            group: "g".into(),
            person_category: None,
        }];
        assert!(matches!(
            parse_quotes(&line("a", "2001-01-01", "x"), persons, &IngestConfig::default()),
            Err(Error::UnknownReference(_))
        ));
    }

    #[test]
    fn votes_are_grouped_and_sorted() {
        let csv = "person_id,date,vote\nb,2019-03-01,for\na,2019-02-01,against\nb,2019-01-01,absent\n";
        let v = parse_votes(csv.as_bytes()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v["b"].votes[0].1, Vote::Absent);
        assert!(parse_votes("person_id,date,vote\na,2019-01-01,maybe\n".as_bytes()).is_err());
    }

    #[test]
    fn person_filter_drops_sparse_and_voteless() {
        let qs: Vec<String> = (0..4)
            .map(|i| {
                serde_json::json!({"id": format!("q{i}"), "person_id": if i < 3 { "a" } else { "b" }, "timestamp": "2001-01-01", "text": "t"})
                    .to_string()
            })
            .collect();
        let (c, _) = parse_quotes(&qs.join("\n"), vec![], &IngestConfig::default()).unwrap();
        let votes = parse_votes("person_id,date,vote\na,2019-01-01,for\n".as_bytes()).unwrap();
        let (kept, removed) = c.filter_persons(&PersonFilter::default(), Some(&votes)).unwrap();
        assert_eq!(kept.len(), 3);
        assert_eq!(removed, vec!["b".to_string()]);
    }
}
