//! Event-log and profile parsing, outlier cleaning and p-core filtering.
//!
//! An [`EventLog`] is immutable once built. Every filtering step produces a
//! new log that keeps the original day numbering, so gaps between logged
//! days survive and window arithmetic stays in calendar days.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use thiserror::Error;

use crate::ids::{ItemId, UserId};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("missing required column `{0}` in header")]
    MissingColumn(&'static str),
    #[error("duplicate profile for user `{0}`")]
    DuplicateProfile(String),
    #[error("event for user `{user}` on {date} has day index {day}, inconsistent with the log calendar")]
    InconsistentDay { user: String, date: NaiveDate, day: u32 },
    #[error("invalid cleaning configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown meal `{0}`")]
    UnknownMeal(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Meal occasion of a diary entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Meal {
    Breakfast,
    Lunch,
    Dinner,
    Snack,
    Other,
}

impl Meal {
    /// The four occasions analysed individually.
    pub const OCCASIONS: [Meal; 4] = [Meal::Breakfast, Meal::Lunch, Meal::Dinner, Meal::Snack];

    /// Lenient parse used for raw input: anything unrecognised becomes `Other`.
    pub fn parse_lenient(raw: &str) -> Meal {
        raw.parse().unwrap_or(Meal::Other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Meal::Breakfast => "breakfast",
            Meal::Lunch => "lunch",
            Meal::Dinner => "dinner",
            Meal::Snack => "snack",
            Meal::Other => "other",
        }
    }
}

impl FromStr for Meal {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "breakfast" => Ok(Meal::Breakfast),
            "lunch" => Ok(Meal::Lunch),
            "dinner" => Ok(Meal::Dinner),
            "snack" | "snacks" => Ok(Meal::Snack),
            "other" => Ok(Meal::Other),
            _ => Err(IngestError::UnknownMeal(s.to_string())),
        }
    }
}

impl fmt::Display for Meal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One diary row.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsumptionEvent {
    pub user: UserId,
    /// Days since the earliest date of the source file.
    pub day: u32,
    pub date: NaiveDate,
    pub meal: Meal,
    pub item: ItemId,
    pub description: Option<String>,
    /// kcal
    pub calories: Option<f64>,
    pub portion: Option<f64>,
}

impl ConsumptionEvent {
    pub fn new(user: &str, day: u32, date: NaiveDate, meal: Meal, item: &str) -> Self {
        Self {
            user: UserId::new(user),
            day,
            date,
            meal,
            item: ItemId::new(item),
            description: None,
            calories: None,
            portion: None,
        }
    }
}

/// Indexed, immutable collection of events.
#[derive(Clone, Debug, Default)]
pub struct EventLog {
    events: Vec<ConsumptionEvent>,
    user_index: BTreeMap<UserId, Vec<usize>>,
    day_index: BTreeMap<u32, Vec<usize>>,
    item_universe: BTreeSet<ItemId>,
    epoch: Option<NaiveDate>,
}

impl EventLog {
    /// Builds the indexes. Every event must satisfy `date - day == epoch` for
    /// one common epoch.
    pub fn from_events(events: Vec<ConsumptionEvent>) -> Result<Self, IngestError> {
        let mut epoch: Option<NaiveDate> = None;
        for e in &events {
            let implied = e.date - Duration::days(i64::from(e.day));
            match epoch {
                None => epoch = Some(implied),
                Some(ep) if ep != implied => {
                    return Err(IngestError::InconsistentDay { user: e.user.to_string(), date: e.date, day: e.day })
                }
                Some(_) => {}
            }
        }
        Ok(Self::index(events, epoch))
    }

    fn index(events: Vec<ConsumptionEvent>, epoch: Option<NaiveDate>) -> Self {
        let mut user_index: BTreeMap<UserId, Vec<usize>> = BTreeMap::new();
        let mut day_index: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut item_universe = BTreeSet::new();
        for (i, e) in events.iter().enumerate() {
            user_index.entry(e.user.clone()).or_default().push(i);
            day_index.entry(e.day).or_default().push(i);
            item_universe.insert(e.item.clone());
        }
        for idx in user_index.values_mut() {
            // stable: same-day events keep file order
            idx.sort_by_key(|&i| events[i].day);
        }
        Self { events, user_index, day_index, item_universe, epoch }
    }

    /// Keeps the events matching `keep`; day numbering and epoch are preserved.
    pub fn filter<F: FnMut(&ConsumptionEvent) -> bool>(&self, mut keep: F) -> EventLog {
        let events = self.events.iter().filter(|e| keep(e)).cloned().collect();
        Self::index(events, self.epoch)
    }

    /// Sub-log restricted to one meal occasion.
    pub fn restrict_to_meal(&self, meal: Meal) -> EventLog {
        self.filter(|e| e.meal == meal)
    }

    pub fn events(&self) -> &[ConsumptionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.user_index.keys()
    }

    pub fn n_users(&self) -> usize {
        self.user_index.len()
    }

    /// Events of one user ordered by day (file order within a day).
    pub fn user_events<'a>(&'a self, user: &UserId) -> impl Iterator<Item = &'a ConsumptionEvent> + 'a {
        self.user_index.get(user).into_iter().flatten().map(move |&i| &self.events[i])
    }

    /// Events logged on `day`, in file order.
    pub fn day_events(&self, day: u32) -> impl Iterator<Item = &ConsumptionEvent> + '_ {
        self.day_index.get(&day).into_iter().flatten().map(move |&i| &self.events[i])
    }

    /// Events with `day` in the half-open range, ordered by day.
    pub fn range_events(&self, days: std::ops::Range<u32>) -> impl Iterator<Item = &ConsumptionEvent> + '_ {
        self.day_index.range(days).flat_map(move |(_, idx)| idx.iter().map(move |&i| &self.events[i]))
    }

    pub fn item_universe(&self) -> &BTreeSet<ItemId> {
        &self.item_universe
    }

    /// `(min_day, max_day)`, or `None` for an empty log.
    pub fn day_range(&self) -> Option<(u32, u32)> {
        let first = *self.day_index.keys().next()?;
        let last = *self.day_index.keys().next_back()?;
        Some((first, last))
    }

    /// Calendar date of day index 0.
    pub fn epoch(&self) -> Option<NaiveDate> {
        self.epoch
    }

    pub fn date_of(&self, day: u32) -> Option<NaiveDate> {
        self.epoch.map(|ep| ep + Duration::days(i64::from(day)))
    }

    /// Weekday of every day index in `day_range`, including days without events.
    pub fn calendar(&self) -> BTreeMap<u32, Weekday> {
        match (self.epoch, self.day_range()) {
            (Some(ep), Some((lo, hi))) => {
                (lo..=hi).map(|d| (d, (ep + Duration::days(i64::from(d))).weekday())).collect()
            }
            _ => BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgeGroup {
    Adult18To44,
    Adult45Plus,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Northeast,
    Midwest,
    South,
    West,
    Other,
    Unknown,
}

impl Gender {
    pub fn parse(raw: &str) -> Gender {
        match raw.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Gender::Female,
            "male" | "m" => Gender::Male,
            _ => Gender::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unknown => "unknown",
        }
    }
}

impl AgeGroup {
    pub fn parse(raw: &str) -> AgeGroup {
        match raw.trim() {
            "18-44" => AgeGroup::Adult18To44,
            "45+" => AgeGroup::Adult45Plus,
            _ => AgeGroup::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::Adult18To44 => "18-44",
            AgeGroup::Adult45Plus => "45+",
            AgeGroup::Unknown => "unknown",
        }
    }
}

impl Region {
    pub fn parse(raw: &str) -> Region {
        let r = raw.trim().to_ascii_uppercase();
        match r.as_str() {
            "NE" => Region::Northeast,
            "MW" => Region::Midwest,
            "S" => Region::South,
            "W" => Region::West,
            "" | "UNKNOWN" => Region::Unknown,
            _ => Region::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Northeast => "NE",
            Region::Midwest => "MW",
            Region::South => "S",
            Region::West => "W",
            Region::Other => "other",
            Region::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserProfile {
    pub user: UserId,
    pub gender: Gender,
    pub age_group: AgeGroup,
    pub region: Region,
}

impl UserProfile {
    pub fn unknown(user: UserId) -> Self {
        Self { user, gender: Gender::Unknown, age_group: AgeGroup::Unknown, region: Region::Unknown }
    }
}

pub type Profiles = BTreeMap<UserId, UserProfile>;

/// Text-file column layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Delimiter {
    /// Tab if the header line contains one, comma otherwise.
    #[default]
    Auto,
    Comma,
    Tab,
}

fn read_all<R: Read>(mut reader: R) -> Result<String, IngestError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    Ok(text)
}

fn csv_reader(text: &str, delimiter: Delimiter) -> csv::Reader<&[u8]> {
    let delim = match delimiter {
        Delimiter::Comma => b',',
        Delimiter::Tab => b'\t',
        Delimiter::Auto => {
            let header = text.lines().next().unwrap_or("");
            if header.contains('\t') {
                b'\t'
            } else {
                b','
            }
        }
    };
    csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

fn required_column(headers: &csv::StringRecord, name: &'static str) -> Result<usize, IngestError> {
    column(headers, name).ok_or(IngestError::MissingColumn(name))
}

fn optional_number(raw: Option<&str>, line: u64, what: &str) -> Result<Option<f64>, IngestError> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse::<f64>()
            .map(Some)
            .map_err(|_| IngestError::MalformedRow { line, reason: format!("unparseable {what} `{s}`") }),
    }
}

/// Parses an event file with columns
/// `user_id,date,meal,item_id[,description,calories,portion]`.
///
/// Day indices count from the earliest date in the file. Unknown meals map to
/// [`Meal::Other`]. Row numbers in errors are 1-based physical line numbers
/// (the header is line 1).
pub fn parse_events<R: Read>(reader: R, delimiter: Delimiter) -> Result<EventLog, IngestError> {
    let text = read_all(reader)?;
    if text.trim().is_empty() {
        return Ok(EventLog::default());
    }
    let mut rdr = csv_reader(&text, delimiter);
    let headers = rdr.headers()?.clone();
    let c_user = required_column(&headers, "user_id")?;
    let c_date = required_column(&headers, "date")?;
    let c_meal = required_column(&headers, "meal")?;
    let c_item = required_column(&headers, "item_id")?;
    let c_desc = column(&headers, "description");
    let c_cal = column(&headers, "calories");
    let c_portion = column(&headers, "portion");

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected {} columns, found {}", headers.len(), record.len()),
            });
        }
        let date_raw = &record[c_date];
        let date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
            .map_err(|_| IngestError::MalformedRow { line, reason: format!("unparseable date `{date_raw}`") })?;
        let description = c_desc.map(|c| record[c].to_string()).filter(|d| !d.is_empty());
        let calories = optional_number(c_cal.map(|c| &record[c]), line, "calories")?;
        let portion = optional_number(c_portion.map(|c| &record[c]), line, "portion")?;
        rows.push(ConsumptionEvent {
            user: UserId::new(&record[c_user]),
            day: 0,
            date,
            meal: Meal::parse_lenient(&record[c_meal]),
            item: ItemId::new(&record[c_item]),
            description,
            calories,
            portion,
        });
    }
    let Some(epoch) = rows.iter().map(|e| e.date).min() else {
        return Ok(EventLog::default());
    };
    for e in &mut rows {
        e.day = (e.date - epoch).num_days() as u32;
    }
    Ok(EventLog::index(rows, Some(epoch)))
}

/// Writes events in the format [`parse_events`] reads. Optional columns are
/// emitted only when at least one event carries them.
pub fn write_events<W: Write>(log: &EventLog, writer: W) -> Result<(), IngestError> {
    let extended = log.events().iter().any(|e| e.description.is_some() || e.calories.is_some() || e.portion.is_some());
    let mut w = csv::Writer::from_writer(writer);
    if extended {
        w.write_record(["user_id", "date", "meal", "item_id", "description", "calories", "portion"])?;
    } else {
        w.write_record(["user_id", "date", "meal", "item_id"])?;
    }
    for e in log.events() {
        let date = e.date.format("%Y-%m-%d").to_string();
        if extended {
            let cal = e.calories.map(|c| c.to_string()).unwrap_or_default();
            let portion = e.portion.map(|p| p.to_string()).unwrap_or_default();
            w.write_record([
                e.user.as_str(),
                &date,
                e.meal.as_str(),
                e.item.as_str(),
                e.description.as_deref().unwrap_or(""),
                &cal,
                &portion,
            ])?;
        } else {
            w.write_record([e.user.as_str(), &date, e.meal.as_str(), e.item.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses a profile file with columns `user_id,gender,age_group,region`.
pub fn parse_profiles<R: Read>(reader: R, delimiter: Delimiter) -> Result<Profiles, IngestError> {
    let text = read_all(reader)?;
    let mut out = Profiles::new();
    if text.trim().is_empty() {
        return Ok(out);
    }
    let mut rdr = csv_reader(&text, delimiter);
    let headers = rdr.headers()?.clone();
    let c_user = required_column(&headers, "user_id")?;
    let c_gender = required_column(&headers, "gender")?;
    let c_age = required_column(&headers, "age_group")?;
    let c_region = required_column(&headers, "region")?;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected {} columns, found {}", headers.len(), record.len()),
            });
        }
        let user = UserId::new(&record[c_user]);
        let profile = UserProfile {
            user: user.clone(),
            gender: Gender::parse(&record[c_gender]),
            age_group: AgeGroup::parse(&record[c_age]),
            region: Region::parse(&record[c_region]),
        };
        if out.insert(user.clone(), profile).is_some() {
            return Err(IngestError::DuplicateProfile(user.to_string()));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CleaningConfig {
    /// kcal; entries strictly above are removed.
    pub max_calories: f64,
    pub drop_negative_portion: bool,
    /// Lowercase substrings matched case-insensitively against descriptions.
    pub description_denylist: Vec<String>,
    pub meal_allowlist: BTreeSet<Meal>,
    pub item_min_users: usize,
    pub user_min_items: usize,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            max_calories: 3000.0,
            drop_negative_portion: true,
            description_denylist: vec!["quick add calories".to_string()],
            meal_allowlist: Meal::OCCASIONS.into_iter().collect(),
            item_min_users: 6,
            user_min_items: 20,
        }
    }
}

impl CleaningConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.max_calories > 0.0) {
            return Err(IngestError::InvalidConfig("max_calories must be positive".into()));
        }
        if self.item_min_users == 0 || self.user_min_items == 0 {
            return Err(IngestError::InvalidConfig("p-core thresholds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Removal counts per rule. Each removed event is attributed to the first
/// rule it violates, in field order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CleaningReport {
    pub input: usize,
    pub negative_portion: usize,
    pub over_calories: usize,
    pub denylisted: usize,
    pub meal_excluded: usize,
    pub retained: usize,
}

impl CleaningReport {
    pub fn removed(&self) -> usize {
        self.negative_portion + self.over_calories + self.denylisted + self.meal_excluded
    }
}

/// Outlier removal. Total: never fails, never adds events.
pub fn clean(log: &EventLog, cfg: &CleaningConfig) -> (EventLog, CleaningReport) {
    let denylist: Vec<String> = cfg.description_denylist.iter().map(|d| d.to_lowercase()).collect();
    let mut report = CleaningReport { input: log.len(), ..Default::default() };
    let cleaned = log.filter(|e| {
        if cfg.drop_negative_portion && e.portion.is_some_and(|p| p < 0.0) {
            report.negative_portion += 1;
            return false;
        }
        if e.calories.is_some_and(|c| c > cfg.max_calories) {
            report.over_calories += 1;
            return false;
        }
        if let Some(desc) = &e.description {
            let desc = desc.to_lowercase();
            if denylist.iter().any(|d| desc.contains(d.as_str())) {
                report.denylisted += 1;
                return false;
            }
        }
        if !cfg.meal_allowlist.contains(&e.meal) {
            report.meal_excluded += 1;
            return false;
        }
        true
    });
    report.retained = cleaned.len();
    (cleaned, report)
}

/// Recursive degree filtering. Each pass first drops items consumed by fewer
/// than `item_min_users` distinct users, then users with fewer than
/// `user_min_items` distinct remaining items; passes repeat until neither
/// step removes anything.
pub fn p_core_filter(log: &EventLog, item_min_users: usize, user_min_items: usize) -> Result<EventLog, IngestError> {
    if item_min_users == 0 || user_min_items == 0 {
        return Err(IngestError::InvalidConfig("p-core thresholds must be at least 1".into()));
    }
    let mut pairs: HashSet<(&UserId, &ItemId)> = log.events().iter().map(|e| (&e.user, &e.item)).collect();
    loop {
        let mut item_degree: HashMap<&ItemId, usize> = HashMap::new();
        for (_, i) in &pairs {
            *item_degree.entry(*i).or_default() += 1;
        }
        let before = pairs.len();
        pairs.retain(|(_, i)| item_degree[i] >= item_min_users);
        let items_dropped = pairs.len() != before;

        let mut user_degree: HashMap<&UserId, usize> = HashMap::new();
        for (u, _) in &pairs {
            *user_degree.entry(*u).or_default() += 1;
        }
        let before = pairs.len();
        pairs.retain(|(u, _)| user_degree[u] >= user_min_items);
        let users_dropped = pairs.len() != before;

        if !items_dropped && !users_dropped {
            break;
        }
    }
    let keep: HashSet<(UserId, ItemId)> = pairs.into_iter().map(|(u, i)| (u.clone(), i.clone())).collect();
    Ok(log.filter(|e| keep.contains(&(e.user.clone(), e.item.clone()))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn toy(pairs: &[(&str, &str)]) -> EventLog {
        let events = pairs.iter().map(|(u, i)| ConsumptionEvent::new(u, 0, d("2014-10-12"), Meal::Lunch, i)).collect();
        EventLog::from_events(events).unwrap()
    }

    #[test]
    fn empty_input_is_empty_log() {
        let log = parse_events("user_id,date,meal,item_id\n".as_bytes(), Delimiter::Auto).unwrap();
        assert!(log.is_empty());
        assert!(log.item_universe().is_empty());
        let log = parse_events("".as_bytes(), Delimiter::Auto).unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn single_row_is_day_zero() {
        let src = "user_id,date,meal,item_id\nu1,2014-10-12,breakfast,oatmeal\n";
        let log = parse_events(src.as_bytes(), Delimiter::Auto).unwrap();
        assert_eq!(log.len(), 1);
        let e = &log.events()[0];
        assert_eq!(e.day, 0);
        assert_eq!(e.meal, Meal::Breakfast);
        assert_eq!(e.item.as_str(), "oatmeal");
    }

    #[test]
    fn day_gaps_are_preserved() {
        // two calendar days between the dates: 14 - 12
        let src = "user_id\tdate\tmeal\titem_id\nu1\t2014-10-14\tlunch\ta\nu1\t2014-10-12\tdinner\tb\n";
        let log = parse_events(src.as_bytes(), Delimiter::Auto).unwrap();
        let days: Vec<u32> = log.events().iter().map(|e| e.day).collect();
        assert_eq!(days, vec![2, 0]);
        assert_eq!(log.day_range(), Some((0, 2)));
        assert_eq!(log.calendar().len(), 3);
    }

    #[test]
    fn day_index_crosses_month_and_year() {
        let src = "user_id,date,meal,item_id\nu,2014-12-30,lunch,a\nu,2015-03-01,lunch,a\n";
        let log = parse_events(src.as_bytes(), Delimiter::Auto).unwrap();
        // 1 (Dec 31) + 31 + 28 + 1
        assert_eq!(log.events()[1].day, 61);
    }

    #[test]
    fn unknown_meal_maps_to_other() {
        let src = "user_id,date,meal,item_id\nu1,2014-10-12,Brunch,x\n";
        let log = parse_events(src.as_bytes(), Delimiter::Auto).unwrap();
        assert_eq!(log.events()[0].meal, Meal::Other);
    }

    #[test]
    fn malformed_rows_report_line() {
        let src = "user_id,date,meal,item_id\nu1,2014-10-12,lunch,a\nu1,2014-10-12,lunch\n";
        match parse_events(src.as_bytes(), Delimiter::Auto) {
            Err(IngestError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let src = "user_id,date,meal,item_id\nu1,12/10/2014,lunch,a\n";
        match parse_events(src.as_bytes(), Delimiter::Auto) {
            Err(IngestError::MalformedRow { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("date"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_required_column() {
        let src = "user_id,date,item_id\nu1,2014-10-12,a\n";
        assert!(matches!(parse_events(src.as_bytes(), Delimiter::Auto), Err(IngestError::MissingColumn("meal"))));
    }

    #[test]
    fn inconsistent_day_rejected() {
        let events = vec![
            ConsumptionEvent::new("u", 0, d("2014-10-12"), Meal::Lunch, "a"),
            ConsumptionEvent::new("u", 0, d("2014-10-13"), Meal::Lunch, "a"),
        ];
        assert!(matches!(EventLog::from_events(events), Err(IngestError::InconsistentDay { .. })));
    }

    #[test]
    fn write_then_parse_roundtrip() {
        let src = "user_id,date,meal,item_id,description,calories,portion\n\
                   u1,2014-10-12,lunch,a,Apple,95,1\n\
                   u2,2014-10-13,snack,b,,,\n";
        let log = parse_events(src.as_bytes(), Delimiter::Auto).unwrap();
        let mut buf = Vec::new();
        write_events(&log, &mut buf).unwrap();
        let again = parse_events(buf.as_slice(), Delimiter::Auto).unwrap();
        assert_eq!(log.events(), again.events());
    }

    #[test]
    fn profiles_parse_and_reject_duplicates() {
        let src = "user_id,gender,age_group,region\nu1,F,18-44,NE\nu2,male,45+,tx\nu3,,,\n";
        let p = parse_profiles(src.as_bytes(), Delimiter::Auto).unwrap();
        assert_eq!(p[&UserId::new("u1")].gender, Gender::Female);
        assert_eq!(p[&UserId::new("u2")].age_group, AgeGroup::Adult45Plus);
        assert_eq!(p[&UserId::new("u2")].region, Region::Other);
        assert_eq!(p[&UserId::new("u3")].region, Region::Unknown);
        let dup = "user_id,gender,age_group,region\nu1,F,18-44,NE\nu1,M,18-44,NE\n";
        assert!(matches!(parse_profiles(dup.as_bytes(), Delimiter::Auto), Err(IngestError::DuplicateProfile(_))));
    }

    #[test]
    fn cleaning_rules() {
        let base = ConsumptionEvent::new("u", 0, d("2014-10-12"), Meal::Lunch, "a");
        let mut over = base.clone();
        over.calories = Some(3500.0);
        let mut quick = base.clone();
        quick.description = Some("Quick Add Calories".into());
        let mut neg = base.clone();
        neg.portion = Some(-1.0);
        let mut other = base.clone();
        other.meal = Meal::Other;
        let mut ok = base.clone();
        ok.calories = Some(100.0);
        ok.portion = Some(1.0);
        let log = EventLog::from_events(vec![over, quick, neg, other, ok.clone()]).unwrap();
        let (cleaned, report) = clean(&log, &CleaningConfig::default());
        assert_eq!(cleaned.events(), &[ok]);
        assert_eq!(report.over_calories, 1);
        assert_eq!(report.denylisted, 1);
        assert_eq!(report.negative_portion, 1);
        assert_eq!(report.meal_excluded, 1);
        assert_eq!(report.retained + report.removed(), report.input);
    }

    #[test]
    fn exactly_max_calories_is_kept() {
        let mut e = ConsumptionEvent::new("u", 0, d("2014-10-12"), Meal::Lunch, "a");
        e.calories = Some(3000.0);
        let log = EventLog::from_events(vec![e]).unwrap();
        assert_eq!(clean(&log, &CleaningConfig::default()).0.len(), 1);
    }

    #[test]
    fn config_validation() {
        let mut cfg = CleaningConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.max_calories = 0.0;
        assert!(cfg.validate().is_err());
        cfg = CleaningConfig { item_min_users: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn p_core_hand_traced_fixpoint() {
        let log = toy(&[("u1", "a"), ("u1", "b"), ("u2", "a"), ("u3", "a"), ("u3", "b")]);
        let out = p_core_filter(&log, 2, 2).unwrap();
        let users: Vec<&str> = out.users().map(|u| u.as_str()).collect();
        assert_eq!(users, vec!["u1", "u3"]);
        let items: Vec<&str> = out.item_universe().iter().map(|i| i.as_str()).collect();
        assert_eq!(items, vec!["a", "b"]);
    }

    #[test]
    fn p_core_cascades() {
        // dropping item c leaves u2 with one item, which then drops u2 and
        // leaves item b below threshold
        let log = toy(&[
            ("u1", "a"),
            ("u1", "b"),
            ("u2", "b"),
            ("u2", "c"),
            ("u3", "a"),
            ("u3", "d"),
            ("u4", "a"),
            ("u4", "d"),
        ]);
        let out = p_core_filter(&log, 2, 2).unwrap();
        let users: Vec<&str> = out.users().map(|u| u.as_str()).collect();
        assert_eq!(users, vec!["u3", "u4"]);
    }

    #[test]
    fn p_core_fixpoint_and_empty() {
        let log = toy(&[("u1", "a"), ("u2", "a")]);
        assert_eq!(p_core_filter(&log, 2, 1).unwrap().events(), log.events());
        let empty = EventLog::default();
        assert!(p_core_filter(&empty, 6, 20).unwrap().is_empty());
        assert!(p_core_filter(&empty, 0, 20).is_err());
    }

    #[test]
    fn duplicate_rows_count_one_distinct_user() {
        let log = toy(&[("u1", "a"), ("u1", "a"), ("u1", "a")]);
        assert!(p_core_filter(&log, 2, 1).unwrap().is_empty());
    }
}
