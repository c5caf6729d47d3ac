//! Transcript domain types: assessment weightings, the coursework assessment
//! ratio, per-module outcomes, degree bands and per-student aggregation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exam and coursework weightings of a module, in integer percentage points.
/// The two always sum to 100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawWeighting", into = "RawWeighting")]
pub struct AssessmentWeighting {
    exam_weight: u8,
    coursework_weight: u8,
}

#[derive(Serialize, Deserialize)]
struct RawWeighting {
    exam_weight: u8,
    coursework_weight: u8,
}

impl TryFrom<RawWeighting> for AssessmentWeighting {
    type Error = Error;
    fn try_from(raw: RawWeighting) -> Result<Self> {
        Self::new(raw.exam_weight, raw.coursework_weight)
    }
}

impl From<AssessmentWeighting> for RawWeighting {
    fn from(w: AssessmentWeighting) -> Self {
        RawWeighting {
            exam_weight: w.exam_weight,
            coursework_weight: w.coursework_weight,
        }
    }
}

impl AssessmentWeighting {
    pub fn new(exam_weight: u8, coursework_weight: u8) -> Result<Self> {
        if u16::from(exam_weight) + u16::from(coursework_weight) != 100 {
            return Err(Error::InvalidValue(format!(
                "weights sum to {}, not 100",
                u16::from(exam_weight) + u16::from(coursework_weight)
            )));
        }
        Ok(Self {
            exam_weight,
            coursework_weight,
        })
    }

    /// Builds the weighting from its coursework share alone.
    pub fn from_coursework(coursework_weight: u8) -> Result<Self> {
        if coursework_weight > 100 {
            return Err(Error::InvalidValue(format!(
                "coursework weight {coursework_weight} exceeds 100"
            )));
        }
        Self::new(100 - coursework_weight, coursework_weight)
    }

    pub fn exam_weight(&self) -> u8 {
        self.exam_weight
    }

    pub fn coursework_weight(&self) -> u8 {
        self.coursework_weight
    }
}

/// Coursework assessment ratio: the coursework share of a module's total mark,
/// in `[0, 1]`. 0 is purely exam-based, 1 purely coursework-based.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Car(f64);

impl Car {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidValue(format!("CAR {value} outside [0, 1]")));
        }
        Ok(Car(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_exam_only(self) -> bool {
        self.0 == 0.0
    }

    pub fn is_coursework_only(self) -> bool {
        self.0 == 1.0
    }
}

pub fn compute_car(weighting: AssessmentWeighting) -> Car {
    Car(f64::from(weighting.coursework_weight) / 100.0)
}

/// One student's result on one module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentModuleOutcome {
    pub student_id: String,
    pub department: String,
    pub year_level: u8,
    pub module_code: String,
    pub module_mark: f64,
    pub exam_mark: Option<f64>,
    pub cswk_mark: Option<f64>,
    pub weighting: AssessmentWeighting,
}

impl StudentModuleOutcome {
    pub fn car(&self) -> Car {
        compute_car(self.weighting)
    }

    /// Checks the record-level invariants: marks in `[0, 100]`, no component
    /// mark on a zero-weighted component.
    pub fn validate(&self) -> Result<()> {
        check_mark("module_mark", self.module_mark)?;
        if let Some(m) = self.exam_mark {
            check_mark("exam_mark", m)?;
            if self.weighting.exam_weight == 0 {
                return Err(Error::InvalidValue(
                    "exam_mark present on a module with zero exam weight".into(),
                ));
            }
        }
        if let Some(m) = self.cswk_mark {
            check_mark("cswk_mark", m)?;
            if self.weighting.coursework_weight == 0 {
                return Err(Error::InvalidValue(
                    "cswk_mark present on a module with zero coursework weight".into(),
                ));
            }
        }
        if self.year_level > MAX_YEAR_LEVEL {
            return Err(Error::InvalidValue(format!(
                "year_level {} outside 0..={MAX_YEAR_LEVEL}",
                self.year_level
            )));
        }
        Ok(())
    }
}

/// Highest accepted year index (0 is the preparatory year).
pub const MAX_YEAR_LEVEL: u8 = 3;

fn check_mark(field: &str, mark: f64) -> Result<()> {
    if !mark.is_finite() || !(0.0..=100.0).contains(&mark) {
        return Err(Error::InvalidValue(format!("{field} {mark} outside [0, 100]")));
    }
    Ok(())
}

/// An outcome together with its refined module mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedOutcome {
    pub outcome: StudentModuleOutcome,
    pub refined_module_mark: f64,
}

/// Which mark an aggregation reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkField {
    #[default]
    Raw,
    Refined,
}

impl FromStr for MarkField {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "mm" => Ok(MarkField::Raw),
            "refined" | "rmm" => Ok(MarkField::Refined),
            other => Err(Error::Config(format!("unknown mark field {other:?}"))),
        }
    }
}

/// Anything that carries a module outcome and possibly a refined mark.
pub trait MarkRecord {
    fn outcome(&self) -> &StudentModuleOutcome;
    fn refined_mark(&self) -> Option<f64>;

    fn mark(&self, field: MarkField) -> Option<f64> {
        match field {
            MarkField::Raw => Some(self.outcome().module_mark),
            MarkField::Refined => self.refined_mark(),
        }
    }
}

impl MarkRecord for StudentModuleOutcome {
    fn outcome(&self) -> &StudentModuleOutcome {
        self
    }
    fn refined_mark(&self) -> Option<f64> {
        None
    }
}

impl MarkRecord for RefinedOutcome {
    fn outcome(&self) -> &StudentModuleOutcome {
        &self.outcome
    }
    fn refined_mark(&self) -> Option<f64> {
        Some(self.refined_module_mark)
    }
}

/// Unweighted mean of the selected mark over one student's modules in one year.
pub fn year_average<R: MarkRecord>(
    outcomes: &[R],
    student_id: &str,
    year: u8,
    field: MarkField,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for rec in outcomes {
        let o = rec.outcome();
        if o.student_id != student_id || o.year_level != year {
            continue;
        }
        let mark = rec.mark(field).ok_or_else(|| {
            Error::InvalidValue(format!(
                "record {}/{} carries no refined mark",
                o.student_id, o.module_code
            ))
        })?;
        sum += mark;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptySelection {
            selection: format!("modules for student {student_id} in year {year}"),
        });
    }
    Ok(sum / count as f64)
}

/// UK honours classification, ordered worst to best.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum DegreeBand {
    Fail,
    Pass,
    Third,
    LowerSecond,
    UpperSecond,
    First,
}

impl DegreeBand {
    pub const COUNT: usize = 6;

    /// All bands, worst to best. `ALL[b.index()] == b`.
    pub const ALL: [DegreeBand; 6] = [
        DegreeBand::Fail,
        DegreeBand::Pass,
        DegreeBand::Third,
        DegreeBand::LowerSecond,
        DegreeBand::UpperSecond,
        DegreeBand::First,
    ];

    /// Alphabetical column order used by the published confusion tables.
    pub const TABLE_ORDER: [DegreeBand; 6] = [
        DegreeBand::Fail,
        DegreeBand::First,
        DegreeBand::LowerSecond,
        DegreeBand::Pass,
        DegreeBand::Third,
        DegreeBand::UpperSecond,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            DegreeBand::Fail => "Fail",
            DegreeBand::Pass => "Pass",
            DegreeBand::Third => "Third",
            DegreeBand::LowerSecond => "Lower second",
            DegreeBand::UpperSecond => "Upper second",
            DegreeBand::First => "First",
        }
    }
}

impl fmt::Display for DegreeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DegreeBand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "fail" => Ok(DegreeBand::Fail),
            "pass" => Ok(DegreeBand::Pass),
            "third" => Ok(DegreeBand::Third),
            "lowersecond" | "22" => Ok(DegreeBand::LowerSecond),
            "uppersecond" | "21" => Ok(DegreeBand::UpperSecond),
            "first" => Ok(DegreeBand::First),
            _ => Err(Error::InvalidValue(format!("unknown degree band {s:?}"))),
        }
    }
}

/// Lower-bound thresholds mapping an average mark to a band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BandThreshold>", into = "Vec<BandThreshold>")]
pub struct BandingScheme {
    thresholds: Vec<BandThreshold>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandThreshold {
    pub lower: f64,
    pub band: DegreeBand,
}

impl TryFrom<Vec<BandThreshold>> for BandingScheme {
    type Error = Error;
    fn try_from(v: Vec<BandThreshold>) -> Result<Self> {
        BandingScheme::new(v)
    }
}

impl From<BandingScheme> for Vec<BandThreshold> {
    fn from(s: BandingScheme) -> Self {
        s.thresholds
    }
}

impl BandingScheme {
    /// The first threshold must be 0; bounds strictly increase and stay below
    /// 100, so the intervals partition `[0, 100]`.
    pub fn new(thresholds: Vec<BandThreshold>) -> Result<Self> {
        let first = thresholds
            .first()
            .ok_or_else(|| Error::Config("banding scheme has no thresholds".into()))?;
        if first.lower != 0.0 {
            return Err(Error::Config(format!(
                "banding scheme must start at 0, starts at {}",
                first.lower
            )));
        }
        for w in thresholds.windows(2) {
            if !(w[1].lower > w[0].lower) {
                return Err(Error::Config(format!(
                    "banding bounds not strictly increasing: {} then {}",
                    w[0].lower, w[1].lower
                )));
            }
        }
        if let Some(last) = thresholds.last() {
            if !(last.lower < 100.0) || !last.lower.is_finite() {
                return Err(Error::Config(format!(
                    "banding bound {} leaves an empty top band",
                    last.lower
                )));
            }
        }
        Ok(Self { thresholds })
    }

    pub fn thresholds(&self) -> &[BandThreshold] {
        &self.thresholds
    }
}

impl Default for BandingScheme {
    /// First >= 70, 2:1 [60,70), 2:2 [50,60), Third [40,50), Pass [35,40),
    /// Fail below 35.
    fn default() -> Self {
        use DegreeBand::*;
        let thresholds = [
            (0.0, Fail),
            (35.0, Pass),
            (40.0, Third),
            (50.0, LowerSecond),
            (60.0, UpperSecond),
            (70.0, First),
        ]
        .into_iter()
        .map(|(lower, band)| BandThreshold { lower, band })
        .collect();
        Self { thresholds }
    }
}

/// Band whose interval contains `average_mark`; lower bounds inclusive.
/// Marks below 0 fall in the bottom band and marks above 100 in the top one.
pub fn classify_band(average_mark: f64, scheme: &BandingScheme) -> DegreeBand {
    let t = &scheme.thresholds;
    let idx = t.partition_point(|th| th.lower <= average_mark);
    t[idx.saturating_sub(1)].band
}
