//! Review ingestion, organisational enrichment and bag-of-words construction.

mod bag;
pub mod stem;
pub mod stopwords;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use bag::{preprocess, preprocess_texts, tokenize, BagCorpus, Document, PreprocessConfig, PruneReport, StemmerKind, Vocabulary};
pub use stem::stem_token;

pub(crate) fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{2018}' | '`')
}

/// A calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    /// Accepts `YYYY-MM` or `YYYY-MM-DD` (the day is validated, then dropped).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("invalid month `{s}` (expected YYYY-MM or YYYY-MM-DD)"));
        let ym = match s.len() {
            7 => s,
            10 => {
                chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| bad())?;
                &s[..7]
            }
            _ => return Err(bad()),
        };
        let (y, m) = ym.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Month { year, month })
    }
}

impl Serialize for Month {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The six Likert rating dimensions attached to a review.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Phone,
    Appointment,
    Dignity,
    Involved,
    Recommend,
    Info,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::Phone,
        Dimension::Appointment,
        Dimension::Dignity,
        Dimension::Involved,
        Dimension::Recommend,
        Dimension::Info,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Default CSV column name.
    pub fn column(self) -> &'static str {
        match self {
            Dimension::Phone => "r_phone",
            Dimension::Appointment => "r_appt",
            Dimension::Dignity => "r_dignity",
            Dimension::Involved => "r_involved",
            Dimension::Recommend => "r_recommend",
            Dimension::Info => "r_info",
        }
    }

    pub fn key(self) -> &'static str {
        &self.column()[2..]
    }

    pub fn label(self) -> &'static str {
        match self {
            Dimension::Phone => "phone access ease",
            Dimension::Appointment => "appointment ease",
            Dimension::Dignity => "given dignity & respect",
            Dimension::Involved => "involved in care decisions",
            Dimension::Recommend => "likely to recommend",
            Dimension::Info => "up-to-date information",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Six optional 1..=5 star ratings, indexed by [`Dimension`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratings(pub [Option<u8>; 6]);

impl Ratings {
    pub fn get(&self, dim: Dimension) -> Option<u8> {
        self.0[dim.index()]
    }

    /// Mean over the dimensions that were rated.
    pub fn mean_available(&self) -> Option<f64> {
        let (sum, n) = self
            .0
            .iter()
            .flatten()
            .fold((0u32, 0u32), |(s, n), &r| (s + r as u32, n + 1));
        (n > 0).then(|| sum as f64 / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewRecord {
    pub review_id: String,
    pub practice_id: String,
    pub posted_month: Month,
    pub text: String,
    pub ratings: Ratings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedReview {
    pub review: ReviewRecord,
    pub ccg_id: String,
    /// Register-weighted mean deprivation score of the practice.
    pub imd_weighted: f64,
    pub patients_registered: u64,
}

/// Column names of the reviews CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub review_id: String,
    pub practice_id: String,
    pub posted_date: String,
    pub text: String,
    pub ratings: [String; 6],
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            review_id: "review_id".into(),
            practice_id: "practice_id".into(),
            posted_date: "posted_date".into(),
            text: "text".into(),
            ratings: Dimension::ALL.map(|d| d.column().to_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRejection {
    /// 1-based line number in the source file (header is line 1).
    pub line: u64,
    pub review_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows: usize,
    pub accepted: usize,
    pub rejected: Vec<RowRejection>,
    /// Rating columns absent from the header; treated as missing everywhere.
    pub missing_rating_columns: Vec<String>,
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_owned(),
            column: name.to_owned(),
        })
}

fn parse_rating(raw: &str) -> std::result::Result<Option<u8>, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    match raw.parse::<u8>() {
        Ok(r @ 1..=5) => Ok(Some(r)),
        _ => Err(format!("rating `{raw}` outside 1..5")),
    }
}

/// Loads a reviews CSV. Malformed rows are rejected with a reason, never
/// silently dropped.
pub fn load_reviews(path: &Path, schema: &ColumnMapping) -> Result<(Vec<ReviewRecord>, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let id_col = column_index(&headers, &schema.review_id, path)?;
    let practice_col = column_index(&headers, &schema.practice_id, path)?;
    let date_col = column_index(&headers, &schema.posted_date, path)?;
    let text_col = column_index(&headers, &schema.text, path)?;

    let mut report = LoadReport::default();
    let rating_cols: Vec<Option<usize>> = schema
        .ratings
        .iter()
        .map(|name| {
            let idx = headers.iter().position(|h| h.trim() == name);
            if idx.is_none() {
                report.missing_rating_columns.push(name.clone());
            }
            idx
        })
        .collect();
    if !report.missing_rating_columns.is_empty() {
        log::warn!(
            "{}: rating columns absent, treated as missing: {}",
            path.display(),
            report.missing_rating_columns.join(", ")
        );
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        report.rows += 1;
        let line = i as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.rejected.push(RowRejection {
                    line,
                    review_id: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let review_id = row.get(id_col).map(|s| s.trim().to_owned());
        let reject = |reason: String| RowRejection {
            line,
            review_id: review_id.clone().filter(|s| !s.is_empty()),
            reason,
        };
        if row.len() != headers.len() {
            report.rejected.push(reject(format!(
                "expected {} fields, found {}",
                headers.len(),
                row.len()
            )));
            continue;
        }
        let parsed = (|| {
            let review_id = row[id_col].trim();
            if review_id.is_empty() {
                return Err("empty review_id".to_owned());
            }
            let practice_id = row[practice_col].trim();
            if practice_id.is_empty() {
                return Err("empty practice_id".to_owned());
            }
            let posted_month: Month = row[date_col].parse().map_err(|e: Error| e.to_string())?;
            let mut ratings = [None; 6];
            for (slot, col) in ratings.iter_mut().zip(&rating_cols) {
                if let Some(c) = col {
                    *slot = parse_rating(&row[*c])?;
                }
            }
            Ok(ReviewRecord {
                review_id: review_id.to_owned(),
                practice_id: practice_id.to_owned(),
                posted_month,
                text: row[text_col].to_owned(),
                ratings: Ratings(ratings),
            })
        })();
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => report.rejected.push(reject(reason)),
        }
    }
    report.accepted = records.len();
    for r in &report.rejected {
        log::warn!("{}:{}: row rejected: {}", path.display(), r.line, r.reason);
    }
    Ok((records, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterRow {
    pub practice_id: String,
    pub lsoa: String,
    pub patients: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImdRow {
    pub lsoa: String,
    pub imd_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcgRow {
    pub practice_id: String,
    pub ccg_id: String,
}

fn load_table<T: serde::de::DeserializeOwned>(path: &Path, columns: &[&str]) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    for c in columns {
        column_index(&headers, c, path)?;
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn load_register(path: &Path) -> Result<Vec<RegisterRow>> {
    load_table(path, &["practice_id", "lsoa", "patients"])
}

pub fn load_imd(path: &Path) -> Result<Vec<ImdRow>> {
    load_table(path, &["lsoa", "imd_score"])
}

pub fn load_ccg(path: &Path) -> Result<Vec<CcgRow>> {
    load_table(path, &["practice_id", "ccg_id"])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NotInRegister,
    NoImdScore,
    NoCcg,
    ZeroRegister,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::NotInRegister => "not in register",
            DropReason::NoImdScore => "no imd score",
            DropReason::NoCcg => "no ccg",
            DropReason::ZeroRegister => "zero register",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub retained: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl DropReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }
}

/// Per-practice deprivation and register size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PracticeProfile {
    pub imd_weighted: f64,
    pub patients: u64,
}

/// Register-weighted deprivation per practice. LSOAs without an IMD score
/// still count towards the register size but not towards the weighted mean.
pub fn practice_profiles(
    register: &[RegisterRow],
    imd: &[ImdRow],
) -> BTreeMap<String, std::result::Result<PracticeProfile, DropReason>> {
    let scores: HashMap<&str, f64> = imd.iter().map(|r| (r.lsoa.as_str(), r.imd_score)).collect();
    // (weighted score sum, scored patients, all patients)
    let mut acc: BTreeMap<&str, (f64, u64, u64)> = BTreeMap::new();
    for row in register {
        let e = acc.entry(row.practice_id.as_str()).or_default();
        e.2 += row.patients;
        if let Some(&score) = scores.get(row.lsoa.as_str()) {
            e.0 += row.patients as f64 * score;
            e.1 += row.patients;
        }
    }
    acc.into_iter()
        .map(|(practice, (weighted, scored, total))| {
            let profile = if total == 0 {
                Err(DropReason::ZeroRegister)
            } else if scored == 0 {
                Err(DropReason::NoImdScore)
            } else {
                Ok(PracticeProfile {
                    imd_weighted: weighted / scored as f64,
                    patients: total,
                })
            };
            (practice.to_owned(), profile)
        })
        .collect()
}

/// Joins reviews with register, deprivation and CCG tables. Reviews whose
/// practice cannot be resolved are dropped and counted by reason.
pub fn enrich_reviews(
    reviews: &[ReviewRecord],
    register: &[RegisterRow],
    imd: &[ImdRow],
    ccg: &[CcgRow],
) -> (Vec<EnrichedReview>, DropReport) {
    let profiles = practice_profiles(register, imd);
    let ccgs: HashMap<&str, &str> = ccg
        .iter()
        .filter(|r| !r.ccg_id.is_empty())
        .map(|r| (r.practice_id.as_str(), r.ccg_id.as_str()))
        .collect();
    let mut report = DropReport::default();
    let mut out = Vec::with_capacity(reviews.len());
    for review in reviews {
        let resolved = match profiles.get(&review.practice_id) {
            None => Err(DropReason::NotInRegister),
            Some(Err(reason)) => Err(*reason),
            Some(Ok(profile)) => match ccgs.get(review.practice_id.as_str()) {
                None => Err(DropReason::NoCcg),
                Some(ccg_id) => Ok((profile, *ccg_id)),
            },
        };
        match resolved {
            Ok((profile, ccg_id)) => out.push(EnrichedReview {
                review: review.clone(),
                ccg_id: ccg_id.to_owned(),
                imd_weighted: profile.imd_weighted,
                patients_registered: profile.patients,
            }),
            Err(reason) => *report.dropped.entry(reason).or_default() += 1,
        }
    }
    report.retained = out.len();
    (out, report)
}

#[derive(Debug, Serialize, Deserialize)]
struct ReviewRow {
    review_id: String,
    practice_id: String,
    posted_date: Month,
    text: String,
    r_phone: Option<u8>,
    r_appt: Option<u8>,
    r_dignity: Option<u8>,
    r_involved: Option<u8>,
    r_recommend: Option<u8>,
    r_info: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ccg_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    imd_weighted: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    patients_registered: Option<u64>,
}

impl ReviewRow {
    fn new(r: &ReviewRecord) -> Self {
        let [r_phone, r_appt, r_dignity, r_involved, r_recommend, r_info] = r.ratings.0;
        ReviewRow {
            review_id: r.review_id.clone(),
            practice_id: r.practice_id.clone(),
            posted_date: r.posted_month,
            text: r.text.clone(),
            r_phone,
            r_appt,
            r_dignity,
            r_involved,
            r_recommend,
            r_info,
            ccg_id: None,
            imd_weighted: None,
            patients_registered: None,
        }
    }

    fn record(&self) -> ReviewRecord {
        ReviewRecord {
            review_id: self.review_id.clone(),
            practice_id: self.practice_id.clone(),
            posted_month: self.posted_date,
            text: self.text.clone(),
            ratings: Ratings([
                self.r_phone,
                self.r_appt,
                self.r_dignity,
                self.r_involved,
                self.r_recommend,
                self.r_info,
            ]),
        }
    }
}

/// Writes reviews in the canonical reviews-CSV schema.
pub fn write_reviews(path: &Path, reviews: &[ReviewRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reviews {
        w.serialize(ReviewRow::new(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes enriched reviews: the reviews schema plus ccg_id, imd_weighted and
/// patients_registered columns.
pub fn write_enriched(path: &Path, reviews: &[EnrichedReview]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reviews {
        let mut row = ReviewRow::new(&r.review);
        row.ccg_id = Some(r.ccg_id.clone());
        row.imd_weighted = Some(r.imd_weighted);
        row.patients_registered = Some(r.patients_registered);
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_enriched(path: &Path) -> Result<Vec<EnrichedReview>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize::<ReviewRow>() {
        let row = row?;
        let missing = |c: &str| Error::MissingColumn {
            path: path.to_owned(),
            column: c.to_owned(),
        };
        out.push(EnrichedReview {
            review: row.record(),
            ccg_id: row.ccg_id.clone().ok_or_else(|| missing("ccg_id"))?,
            imd_weighted: row.imd_weighted.ok_or_else(|| missing("imd_weighted"))?,
            patients_registered: row
                .patients_registered
                .ok_or_else(|| missing("patients_registered"))?,
        });
    }
    Ok(out)
}
