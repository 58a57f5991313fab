//! Per-bank quarterly bankruptcy-probability series and early warnings.
//!
//! A warning is the first quarter whose probability is strictly above the
//! threshold (0.5 by default). Lead times count whole calendar months from
//! that quarter's last day to an externally supplied event date.

use std::io::{Read, Write};

use chrono::{Datelike, Months, NaiveDate};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::dataset::{format_cell, parse_cell, FeatureSchema, Quarter};
use crate::error::{Error, Result};
use crate::model::{Classifier, FittedModel};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendPoint {
    pub period: Quarter,
    /// One entry per model, aligned with [`TrendSeries::models`]; `None` marks
    /// a period whose report had missing features.
    pub probabilities: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendSeries {
    pub bank_id: String,
    pub models: Vec<String>,
    pub points: Vec<TrendPoint>,
    pub threshold: f64,
}

/// One bank's quarterly feature vectors, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct BankReports {
    pub bank_id: String,
    pub reports: Vec<(Quarter, Vec<f64>)>,
}

/// Evaluates every model on every report. Reports are sorted by period;
/// duplicate periods are an error.
pub fn probability_series<C: Classifier>(
    bank_id: &str,
    models: &[(String, C)],
    reports: &[(Quarter, Vec<f64>)],
    threshold: f64,
) -> Result<TrendSeries> {
    if reports.is_empty() {
        return Err(Error::InsufficientData(format!("bank `{bank_id}` has no reports")));
    }
    if models.is_empty() {
        return Err(Error::InvalidParameter("trend needs at least one model".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1]")));
    }
    let dim = reports[0].1.len();
    let mut sorted: Vec<&(Quarter, Vec<f64>)> = reports.iter().collect();
    sorted.sort_by_key(|(q, _)| *q);
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidParameter(format!(
            "bank `{bank_id}` has two reports for {}",
            w[0].0
        )));
    }
    let mut points = Vec::with_capacity(sorted.len());
    for (period, x) in sorted {
        if x.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: x.len(),
            });
        }
        let complete = x.iter().all(|v| v.is_finite());
        let probabilities = models
            .iter()
            .map(|(_, m)| if complete { m.predict_proba(x).map(Some) } else { Ok(None) })
            .collect::<Result<Vec<_>>>()?;
        points.push(TrendPoint {
            period: *period,
            probabilities,
        });
    }
    Ok(TrendSeries {
        bank_id: bank_id.to_string(),
        models: models.iter().map(|(n, _)| n.clone()).collect(),
        points,
        threshold,
    })
}

/// [`probability_series`] for persisted models, checking that every model
/// was trained on `schema`.
pub fn series_for_models(
    bank: &BankReports,
    models: &[(String, FittedModel)],
    schema: &FeatureSchema,
    threshold: f64,
) -> Result<TrendSeries> {
    let codes = schema.code_list();
    for (_, m) in models {
        m.check_schema(&codes)?;
    }
    probability_series(&bank.bank_id, models, &bank.reports, threshold)
}

impl TrendSeries {
    fn model_index(&self, model: &str) -> Result<usize> {
        self.models
            .iter()
            .position(|m| m == model)
            .ok_or_else(|| Error::Unknown(format!("model `{model}` not in series")))
    }

    pub fn values(&self, model: &str) -> Result<Vec<Option<f64>>> {
        let i = self.model_index(model)?;
        Ok(self.points.iter().map(|p| p.probabilities[i]).collect())
    }

    /// Earliest period with probability strictly above `threshold`.
    pub fn first_warning_at(&self, model: &str, threshold: f64) -> Result<Option<Quarter>> {
        let i = self.model_index(model)?;
        Ok(self
            .points
            .iter()
            .find(|p| p.probabilities[i].is_some_and(|v| v > threshold))
            .map(|p| p.period))
    }

    pub fn first_warning(&self, model: &str) -> Result<Option<Quarter>> {
        self.first_warning_at(model, self.threshold)
    }

    /// Signed whole months from the warning quarter's end to `event`;
    /// `None` when the model never warns.
    pub fn lead_time(&self, model: &str, event: NaiveDate) -> Result<Option<i32>> {
        Ok(self
            .first_warning(model)?
            .map(|q| signed_complete_months(q.end_date(), event)))
    }

    pub fn warnings(&self) -> Vec<(String, Option<Quarter>)> {
        self.models
            .iter()
            .map(|m| (m.clone(), self.first_warning(m).expect("own model name")))
            .collect()
    }

    pub fn summary(&self, event: Option<NaiveDate>) -> TrendSummary {
        let mut warnings = Map::new();
        let mut lead_times = Map::new();
        for (model, warning) in self.warnings() {
            warnings.insert(
                model.clone(),
                warning.map_or(Value::Null, |q| Value::String(q.to_string())),
            );
            if let Some(event) = event {
                let lead = warning.map(|q| signed_complete_months(q.end_date(), event));
                lead_times.insert(model, lead.map_or(Value::Null, Value::from));
            }
        }
        TrendSummary {
            bank_id: self.bank_id.clone(),
            threshold: self.threshold,
            event_date: event.map(|d| d.to_string()),
            warnings,
            lead_times,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendSummary {
    pub bank_id: String,
    pub threshold: f64,
    pub event_date: Option<String>,
    pub warnings: Map<String, Value>,
    pub lead_times: Map<String, Value>,
}

/// Largest `k` with `from + k months <= to` (month-end clamped).
pub fn complete_months(from: NaiveDate, to: NaiveDate) -> u32 {
    if to < from {
        return 0;
    }
    let rough = (to.year() - from.year()) * 12 + to.month() as i32 - from.month() as i32;
    let mut k = rough.max(0) as u32;
    while k > 0 && from.checked_add_months(Months::new(k)).is_none_or(|d| d > to) {
        k -= 1;
    }
    k
}

/// Positive when `to` is after `from`.
pub fn signed_complete_months(from: NaiveDate, to: NaiveDate) -> i32 {
    if to >= from {
        complete_months(from, to) as i32
    } else {
        -(complete_months(to, from) as i32)
    }
}

/// Reads `bank_id,period,<codes...>` rows (extra columns ignored), grouped
/// by bank in order of first appearance.
pub fn read_reports<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Vec<BankReports>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = find("bank_id")?;
    let period_col = find("period")?;
    let cols = schema.codes().map(find).collect::<Result<Vec<_>>>()?;
    let mut banks: Vec<BankReports> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let id = row.get(id_col).unwrap_or("").to_string();
        let period_text = row.get(period_col).unwrap_or("");
        let period: Quarter = period_text.parse().map_err(|_| Error::BadPeriod {
            row: line,
            value: period_text.to_string(),
        })?;
        let mut x = Vec::with_capacity(cols.len());
        for (code, &c) in schema.codes().zip(&cols) {
            let token = row.get(c).unwrap_or("");
            x.push(parse_cell(token).ok_or_else(|| Error::NonNumeric {
                row: line,
                column: code.to_string(),
                value: token.to_string(),
            })?);
        }
        match banks.iter_mut().find(|b| b.bank_id == id) {
            Some(b) => b.reports.push((period, x)),
            None => banks.push(BankReports {
                bank_id: id,
                reports: vec![(period, x)],
            }),
        }
    }
    Ok(banks)
}

/// `bank_id,period,<model...>` with `NA` for gaps.
pub fn write_series_csv<W: Write>(series: &[TrendSeries], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let Some(first) = series.first() else {
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        return Ok(());
    };
    let mut header = vec!["bank_id".to_string(), "period".to_string()];
    header.extend(first.models.iter().cloned());
    w.write_record(&header)?;
    for s in series {
        if s.models != first.models {
            return Err(Error::InvalidParameter("series disagree on model columns".into()));
        }
        for p in &s.points {
            let mut rec = vec![s.bank_id.clone(), p.period.to_string()];
            rec.extend(p.probabilities.iter().map(|v| format_cell(v.unwrap_or(f64::NAN))));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use crate::logreg::LogisticModel;

    /// Returns the first feature as its probability.
    struct Echo;
    impl Classifier for Echo {
        fn predict_proba(&self, x: &[f64]) -> Result<f64> {
            Ok(x[0])
        }
        fn predict(&self, x: &[f64]) -> Result<Label> {
            Ok(Label::from_probability(x[0]))
        }
    }

    fn quarters(start: &str, n: usize) -> Vec<Quarter> {
        let mut q: Quarter = start.parse().unwrap();
        let mut out = Vec::new();
        for _ in 0..n {
            out.push(q);
            q = q.next();
        }
        out
    }

    fn echo_series(values: &[f64]) -> TrendSeries {
        let reports: Vec<(Quarter, Vec<f64>)> =
            quarters("2016-Q1", values.len()).into_iter().zip(values.iter().map(|&v| vec![v])).collect();
        probability_series("A", &[("echo".to_string(), Echo)], &reports, DEFAULT_THRESHOLD).unwrap()
    }

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn zero_logit_single_point() {
        let reports = vec![("2018-Q1".parse().unwrap(), vec![1.0, 2.0])];
        let models = vec![("logreg".to_string(), LogisticModel::from_coefficients(0.0, vec![0.0, 0.0]))];
        let s = probability_series("A", &models, &reports, 0.5).unwrap();
        assert_eq!(s.points.len(), 1);
        assert_eq!(s.points[0].probabilities, vec![Some(0.5)]);
    }

    #[test]
    fn first_strict_crossing() {
        let s = echo_series(&[0.2, 0.4, 0.7, 0.3]);
        assert_eq!(s.first_warning("echo").unwrap(), Some("2016-Q3".parse().unwrap()));
        assert_eq!(echo_series(&[0.2, 0.5, 0.3]).first_warning("echo").unwrap(), None);
        assert_eq!(echo_series(&[0.1, 0.5, 0.5000001]).first_warning("echo").unwrap(), Some("2016-Q3".parse().unwrap()));
        assert!(s.first_warning("svm").is_err());
    }

    #[test]
    fn gaps_are_kept() {
        let s = echo_series(&[0.2, f64::NAN, 0.9]);
        assert_eq!(s.values("echo").unwrap(), vec![Some(0.2), None, Some(0.9)]);
        let mut buf = Vec::new();
        write_series_csv(&[s], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "bank_id,period,echo\nA,2016-Q1,0.2\nA,2016-Q2,NA\nA,2016-Q3,0.9\n");
    }

    #[test]
    fn reports_sorted_and_unique() {
        let reports = vec![("2016-Q2".parse().unwrap(), vec![0.9]), ("2016-Q1".parse().unwrap(), vec![0.1])];
        let s = probability_series("A", &[("echo".to_string(), Echo)], &reports, 0.5).unwrap();
        assert_eq!(s.points[0].period, "2016-Q1".parse().unwrap());
        let dup = vec![("2016-Q1".parse().unwrap(), vec![0.9]), ("2016-Q1".parse().unwrap(), vec![0.1])];
        assert!(probability_series("A", &[("echo".to_string(), Echo)], &dup, 0.5).is_err());
        let none: Vec<(Quarter, Vec<f64>)> = vec![];
        assert!(probability_series("A", &[("echo".to_string(), Echo)], &none, 0.5).is_err());
    }

    #[test]
    fn month_counting() {
        assert_eq!(complete_months(date(2018, 3, 31), date(2018, 8, 29)), 4);
        assert_eq!(complete_months(date(2018, 3, 31), date(2018, 8, 31)), 5);
        assert_eq!(complete_months(date(2018, 3, 31), date(2018, 4, 30)), 1);
        assert_eq!(complete_months(date(2018, 3, 31), date(2018, 3, 31)), 0);
        assert_eq!(complete_months(date(2016, 12, 31), date(2018, 1, 15)), 12);
        assert_eq!(signed_complete_months(date(2018, 6, 30), date(2018, 2, 1)), -4);
    }

    #[test]
    fn lead_time_from_warning() {
        let reports: Vec<(Quarter, Vec<f64>)> = quarters("2017-Q2", 4)
            .into_iter()
            .zip([0.1, 0.2, 0.3, 0.8].map(|v| vec![v]))
            .collect();
        let s = probability_series("A", &[("echo".to_string(), Echo)], &reports, 0.5).unwrap();
        assert_eq!(s.first_warning("echo").unwrap(), Some("2018-Q1".parse().unwrap()));
        assert_eq!(s.lead_time("echo", date(2018, 8, 29)).unwrap(), Some(4));
        assert_eq!(s.lead_time("echo", date(2017, 12, 1)).unwrap(), Some(-3));
        let quiet = echo_series(&[0.1, 0.2]);
        assert_eq!(quiet.lead_time("echo", date(2018, 8, 29)).unwrap(), None);
        let summary = s.summary(Some(date(2018, 8, 29)));
        assert_eq!(
            serde_json::to_string(&summary).unwrap(),
            r#"{"bank_id":"A","threshold":0.5,"event_date":"2018-08-29","warnings":{"echo":"2018-Q1"},"lead_times":{"echo":4}}"#
        );
    }

    #[test]
    fn report_ingestion_groups_banks() {
        let csv = "bank_id,period,CAR,AssetQuality,NPM,ROA,LDR\n\
                   A,2017-Q1,1,2,3,4,5\nB,2017-Q1,1,2,3,4,5\nA,2017-Q2,1,,3,4,5\n";
        let banks = read_reports(csv.as_bytes(), &FeatureSchema::rural()).unwrap();
        assert_eq!(banks.len(), 2);
        assert_eq!(banks[0].reports.len(), 2);
        assert!(banks[0].reports[1].1[1].is_nan());
        let bad = "bank_id,period,CAR,AssetQuality,NPM,ROA,LDR\nA,2017,1,2,3,4,5\n";
        assert!(matches!(read_reports(bad.as_bytes(), &FeatureSchema::rural()), Err(Error::BadPeriod { .. })));
    }
}
