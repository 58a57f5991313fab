//! Bank records, feature schemas, CSV ingestion, cleaning and splitting.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::{round_half_even, seeded_rng};

/// One named ratio column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub code: String,
    #[serde(default)]
    pub description: String,
}

impl Feature {
    pub fn new(code: impl Into<String>, description: impl Into<String>) -> Self {
        Feature {
            code: code.into(),
            description: description.into(),
        }
    }
}

/// Ordered list of feature codes. The order is the column order of every
/// feature vector in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

impl<'de> Deserialize<'de> for FeatureSchema {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let features = Vec::<Feature>::deserialize(deserializer)?;
        FeatureSchema::new(features).map_err(serde::de::Error::custom)
    }
}

const COMMERCIAL: [(&str, &str); 20] = [
    ("CA1", "Shareholder's equity/total assets"),
    ("CA2", "Shareholder's equity/total loans"),
    (
        "CA3",
        "Shareholder's equity + net profit/total assets + off balance sheet commitments",
    ),
    ("AQ1", "Permanent assets/total assets"),
    ("AQ2", "Total loans/total assets"),
    ("AQ3", "Loans under follow-up/total loans"),
    ("AQ4", "Specific provision/total loans"),
    ("AQ5", "Specific provision/total loans"),
    ("M1", "Personnel expenses/average assets"),
    ("E1", "Net profit/average assets"),
    ("E2", "Net profit/average shareholder's equity"),
    ("E3", "Income before taxes/average assets"),
    ("E4", "Interest income/total operating income"),
    ("E5", "Non-interest expenses/total operating income"),
    ("L1", "Liquid assets/total assets"),
    ("L2", "Total loans/total deposits"),
    ("SMR1", "Trading securities/total assets"),
    ("SMR2", "FX assets/FX liabilities"),
    ("SMR3", "Net interest income/average assets"),
    (
        "SMR4",
        "Net balance sheet position/total shareholder's equity",
    ),
];

const RURAL: [(&str, &str); 5] = [
    ("CAR", "Capital adequacy ratio: capital to risk weighted assets"),
    (
        "AssetQuality",
        "Earning assets quality: classified earning assets to total earning assets",
    ),
    ("NPM", "Net profit margin: net income to operating income"),
    ("ROA", "Return on assets: net income to total assets"),
    ("LDR", "Loan to deposit ratio: total lending to total deposits"),
];

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &features {
            if f.code.trim().is_empty() {
                return Err(Error::Schema("empty feature code".into()));
            }
            if !seen.insert(f.code.as_str()) {
                return Err(Error::Schema(format!("duplicate feature code `{}`", f.code)));
            }
        }
        Ok(FeatureSchema { features })
    }

    /// Builds a schema from bare codes with empty descriptions.
    pub fn from_codes<S: AsRef<str>>(codes: &[S]) -> Result<Self> {
        Self::new(
            codes
                .iter()
                .map(|c| Feature::new(c.as_ref(), ""))
                .collect(),
        )
    }

    /// The 20 CAMELS ratios used for commercial banks.
    pub fn commercial() -> Self {
        FeatureSchema {
            features: COMMERCIAL.iter().map(|(c, d)| Feature::new(*c, *d)).collect(),
        }
    }

    /// The 5 CAMEL ratios used for rural banks.
    pub fn rural() -> Self {
        FeatureSchema {
            features: RURAL.iter().map(|(c, d)| Feature::new(*c, *d)).collect(),
        }
    }

    /// Generic `X1..Xm` schema, used for synthetic data of arbitrary width.
    pub fn generic(m: usize) -> Self {
        FeatureSchema {
            features: (1..=m).map(|i| Feature::new(format!("X{i}"), "")).collect(),
        }
    }

    pub fn is_rural(&self) -> bool {
        self.codes().eq(RURAL.iter().map(|(c, _)| *c))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> + '_ {
        self.features.iter().map(|f| f.code.as_str())
    }

    pub fn code_list(&self) -> Vec<String> {
        self.codes().map(String::from).collect()
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Binary class. Bankrupt is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Active,
    Bankrupt,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Active => 0,
            Label::Bankrupt => 1,
        }
    }

    pub fn index(self) -> usize {
        self.as_u8() as usize
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Active),
            1 => Some(Label::Bankrupt),
            _ => None,
        }
    }

    /// +1 for bankrupt, -1 for active (SVM convention).
    pub fn sign(self) -> f64 {
        match self {
            Label::Active => -1.0,
            Label::Bankrupt => 1.0,
        }
    }

    pub fn from_probability(p: f64) -> Label {
        if p >= 0.5 {
            Label::Bankrupt
        } else {
            Label::Active
        }
    }

    pub fn parse(token: &str) -> Option<Label> {
        let t = token.trim();
        if t == "0" || t.eq_ignore_ascii_case("active") {
            Some(Label::Active)
        } else if t == "1" || t.eq_ignore_ascii_case("bankrupt") {
            Some(Label::Bankrupt)
        } else {
            None
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Active => Label::Bankrupt,
            Label::Bankrupt => Label::Active,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Active => f.write_str("Active"),
            Label::Bankrupt => f.write_str("Bankrupt"),
        }
    }
}

/// Calendar quarter, written `YYYY-Qn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quarter {
    year: i32,
    quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::InvalidParameter(format!(
                "quarter must be 1..=4, got {quarter}"
            )));
        }
        Ok(Quarter { year, quarter })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn quarter(self) -> u8 {
        self.quarter
    }

    pub fn next(self) -> Quarter {
        if self.quarter == 4 {
            Quarter {
                year: self.year + 1,
                quarter: 1,
            }
        } else {
            Quarter {
                year: self.year,
                quarter: self.quarter + 1,
            }
        }
    }

    /// Last calendar day of the quarter (Mar 31, Jun 30, Sep 30, Dec 31).
    pub fn end_date(self) -> NaiveDate {
        let (month, day) = match self.quarter {
            1 => (3, 31),
            2 => (6, 30),
            3 => (9, 30),
            _ => (12, 31),
        };
        NaiveDate::from_ymd_opt(self.year, month, day).expect("quarter end is a valid date")
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-Q{}", self.year, self.quarter)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("`{s}` is not of the form YYYY-Qn"));
        let (year, q) = s.trim().split_once('-').ok_or_else(bad)?;
        let q = q.strip_prefix('Q').or_else(|| q.strip_prefix('q')).ok_or_else(bad)?;
        if year.len() != 4 || q.len() != 1 {
            return Err(bad());
        }
        let year: i32 = year.parse().map_err(|_| bad())?;
        let quarter: u8 = q.parse().map_err(|_| bad())?;
        Quarter::new(year, quarter).map_err(|_| bad())
    }
}

impl Serialize for Quarter {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quarter {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankRecord {
    pub bank_id: String,
    pub period: Option<Quarter>,
    /// One ratio per schema feature. Missing cells are NaN until cleaned.
    pub values: Vec<f64>,
    pub label: Label,
}

impl BankRecord {
    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    records: Vec<BankRecord>,
}

/// Tokens treated as a missing cell (compared case-insensitively).
pub fn is_missing_marker(token: &str) -> bool {
    let t = token.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Parses one feature cell: a missing marker becomes NaN.
pub(crate) fn parse_cell(token: &str) -> Option<f64> {
    if is_missing_marker(token) {
        Some(f64::NAN)
    } else {
        token.trim().parse::<f64>().ok()
    }
}

pub(crate) fn format_cell(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        v.to_string()
    }
}

impl Dataset {
    pub fn new(schema: FeatureSchema, records: Vec<BankRecord>) -> Result<Self> {
        for r in &records {
            if r.values.len() != schema.len() {
                return Err(Error::Dimension {
                    expected: schema.len(),
                    actual: r.values.len(),
                });
            }
        }
        Ok(Dataset { schema, records })
    }

    /// Builds a dataset from raw rows with generated ids (`row-0`, `row-1`, ...).
    pub fn from_rows(schema: FeatureSchema, rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                actual: labels.len(),
            });
        }
        let records = rows
            .into_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (values, label))| BankRecord {
                bank_id: format!("row-{i}"),
                period: None,
                values,
                label,
            })
            .collect();
        Dataset::new(schema, records)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn records(&self) -> &[BankRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<BankRecord> {
        self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn m(&self) -> usize {
        self.schema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `[active, bankrupt]` counts.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for r in &self.records {
            counts[r.label.index()] += 1;
        }
        counts
    }

    pub fn has_both_classes(&self) -> bool {
        let c = self.class_counts();
        c[0] > 0 && c[1] > 0
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn rows(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.values.as_slice()).collect()
    }

    /// A new dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn with_records(&self, records: Vec<BankRecord>) -> Result<Dataset> {
        Dataset::new(self.schema.clone(), records)
    }

    pub fn check_dimension(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m() {
            return Err(Error::Dimension {
                expected: self.m(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Reads a CSV file. Missing cells are kept as NaN; see [`clean`].
    pub fn ingest_csv(path: impl AsRef<Path>, schema: &FeatureSchema, label_column: &str) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, schema, label_column)
    }

    pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema, label_column: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);

        let feature_cols = schema
            .codes()
            .map(|c| find(c).ok_or_else(|| Error::MissingColumn(c.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let label_col = find(label_column).ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
        let id_col = find("bank_id");
        let period_col = find("period");

        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            // header is line 1
            let line = i + 2;
            let cell = |c: usize| row.get(c).unwrap_or("");
            let mut values = Vec::with_capacity(feature_cols.len());
            for (code, &c) in schema.codes().zip(&feature_cols) {
                let token = cell(c);
                let v = parse_cell(token).ok_or_else(|| Error::NonNumeric {
                    row: line,
                    column: code.to_string(),
                    value: token.to_string(),
                })?;
                values.push(v);
            }
            let label = Label::parse(cell(label_col)).ok_or_else(|| Error::BadLabel {
                row: line,
                value: cell(label_col).to_string(),
            })?;
            let bank_id = match id_col {
                Some(c) => cell(c).to_string(),
                None => format!("row-{i}"),
            };
            let period = match period_col.map(cell) {
                Some(p) if !p.trim().is_empty() => Some(p.parse::<Quarter>().map_err(|_| Error::BadPeriod {
                    row: line,
                    value: p.to_string(),
                })?),
                _ => None,
            };
            records.push(BankRecord {
                bank_id,
                period,
                values,
                label,
            });
        }
        Dataset::new(schema.clone(), records)
    }

    /// Writes `bank_id[,period],<codes...>,label`. The period column is
    /// present only when some record carries a period.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let with_period = self.records.iter().any(|r| r.period.is_some());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["bank_id".to_string()];
        if with_period {
            header.push("period".into());
        }
        header.extend(self.schema.code_list());
        header.push("label".into());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.bank_id.clone()];
            if with_period {
                row.push(r.period.map(|p| p.to_string()).unwrap_or_default());
            }
            row.extend(r.values.iter().map(|&v| format_cell(v)));
            row.push(r.label.as_u8().to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Result of row-wise deletion of incomplete records.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanOutcome {
    pub dataset: Dataset,
    pub removed: usize,
    /// Set when every record was removed.
    pub emptied: bool,
}

/// Drops every record holding a missing or non-finite value.
pub fn clean(d: &Dataset) -> CleanOutcome {
    let records: Vec<BankRecord> = d.records.iter().filter(|r| r.is_complete()).cloned().collect();
    let removed = d.n() - records.len();
    let emptied = records.is_empty() && d.n() > 0;
    CleanOutcome {
        dataset: Dataset {
            schema: d.schema.clone(),
            records,
        },
        removed,
        emptied,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
    pub train_fraction: f64,
    pub stratified: bool,
}

/// Seeded shuffle-then-partition. Train size is `round_half_even(fraction · n)`;
/// stratified splits allocate that total across classes by largest remainder.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64, stratified: bool) -> Result<SplitPair> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = d.n();
    if n < 2 {
        return Err(Error::InsufficientData(format!("split needs n >= 2, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let n_train = round_half_even(train_fraction * n as f64);

    let in_train: Vec<bool> = if stratified {
        let counts = d.class_counts();
        if counts.contains(&0) {
            return Err(Error::SingleClass("stratified split needs both classes".into()));
        }
        let quotas = allocate(n_train, &counts);
        let mut taken = [0usize; 2];
        let mut flags = vec![false; n];
        for &i in &order {
            let c = d.records[i].label.index();
            if taken[c] < quotas[c] {
                taken[c] += 1;
                flags[i] = true;
            }
        }
        flags
    } else {
        let mut flags = vec![false; n];
        for &i in &order[..n_train] {
            flags[i] = true;
        }
        flags
    };

    let (train_idx, test_idx): (Vec<usize>, Vec<usize>) = order.iter().partition(|&&i| in_train[i]);
    Ok(SplitPair {
        train: d.subset(&train_idx),
        test: d.subset(&test_idx),
        seed,
        train_fraction,
        stratified,
    })
}

/// Largest-remainder allocation of `total` across classes proportional to `counts`.
fn allocate(total: usize, counts: &[usize; 2]) -> [usize; 2] {
    let n: usize = counts.iter().sum();
    let exact: Vec<f64> = counts.iter().map(|&c| total as f64 * c as f64 / n as f64).collect();
    let mut quotas = [exact[0].floor() as usize, exact[1].floor() as usize];
    let mut rest = total - quotas[0] - quotas[1];
    // larger remainder first; equal remainders favour the bankrupt class
    let mut by_remainder = [0usize, 1];
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(b.cmp(&a))
    });
    for &c in by_remainder.iter().cycle() {
        if rest == 0 {
            break;
        }
        if quotas[c] < counts[c] {
            quotas[c] += 1;
            rest -= 1;
        }
    }
    quotas
}
