//! Assessment-method group means and two-sample t-tests.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcript::{Car, StudentModuleOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AssessmentMethodClass {
    ExamBased,
    CourseworkBased,
    Mixed,
}

impl AssessmentMethodClass {
    /// Column order of the published averages table.
    pub const TABLE_ORDER: [AssessmentMethodClass; 3] = [
        AssessmentMethodClass::ExamBased,
        AssessmentMethodClass::CourseworkBased,
        AssessmentMethodClass::Mixed,
    ];

    pub fn of(car: Car) -> Self {
        if car.is_exam_only() {
            AssessmentMethodClass::ExamBased
        } else if car.is_coursework_only() {
            AssessmentMethodClass::CourseworkBased
        } else {
            AssessmentMethodClass::Mixed
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AssessmentMethodClass::ExamBased => "Exam",
            AssessmentMethodClass::CourseworkBased => "Coursework",
            AssessmentMethodClass::Mixed => "Mixed",
        }
    }
}

impl fmt::Display for AssessmentMethodClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupCell {
    pub mean: f64,
    pub count: usize,
}

/// department -> method class -> (mean module mark, record count).
/// Empty cells are absent.
pub type GroupMeanTable = BTreeMap<String, BTreeMap<AssessmentMethodClass, GroupCell>>;

pub fn group_mean_table(records: &[StudentModuleOutcome]) -> GroupMeanTable {
    let mut sums: BTreeMap<String, BTreeMap<AssessmentMethodClass, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let cell = sums
            .entry(r.department.clone())
            .or_default()
            .entry(AssessmentMethodClass::of(r.car()))
            .or_insert((0.0, 0));
        cell.0 += r.module_mark;
        cell.1 += 1;
    }
    sums.into_iter()
        .map(|(dept, cells)| {
            let cells = cells
                .into_iter()
                .map(|(class, (sum, count))| {
                    (
                        class,
                        GroupCell {
                            mean: sum / count as f64,
                            count,
                        },
                    )
                })
                .collect();
            (dept, cells)
        })
        .collect()
}

/// All module marks of one method class, pooled across departments.
pub fn class_sample(records: &[StudentModuleOutcome], class: AssessmentMethodClass) -> Vec<f64> {
    records
        .iter()
        .filter(|r| AssessmentMethodClass::of(r.car()) == class)
        .map(|r| r.module_mark)
        .collect()
}

/// Per-department means of one method class, in department order; departments
/// lacking the class are skipped.
pub fn department_mean_sample(table: &GroupMeanTable, class: AssessmentMethodClass) -> Vec<f64> {
    table
        .values()
        .filter_map(|cells| cells.get(&class).map(|c| c.mean))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestVariant {
    #[default]
    Pooled,
    Welch,
}

impl std::str::FromStr for TTestVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(TTestVariant::Pooled),
            "welch" => Ok(TTestVariant::Welch),
            other => Err(Error::Config(format!("unknown t-test variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    #[serde(rename = "t")]
    pub t_statistic: f64,
    #[serde(rename = "df")]
    pub degrees_of_freedom: f64,
    #[serde(rename = "p")]
    pub p_value_two_sided: f64,
    pub variant: TTestVariant,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

/// Two-sample t-test of `mean(a) - mean(b)` with a two-sided p-value.
pub fn two_sample_t(sample_a: &[f64], sample_b: &[f64], variant: TTestVariant) -> Result<TTestResult> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::InvalidValue(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            sample_a.len(),
            sample_b.len()
        )));
    }
    if sample_a.iter().chain(sample_b).any(|x| !x.is_finite()) {
        return Err(Error::InvalidValue("t-test samples must be finite".into()));
    }
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let (ma, va) = mean_and_var(sample_a);
    let (mb, vb) = mean_and_var(sample_b);
    let diff = ma - mb;

    let (se, df) = match variant {
        TTestVariant::Pooled => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            ((pooled * (1.0 / na + 1.0 / nb)).sqrt(), df)
        }
        TTestVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            (se2.sqrt(), df)
        }
    };
    if !(se > 0.0) || !df.is_finite() {
        return Err(Error::DegenerateVariance(
            "both samples have zero variance; t statistic undefined".into(),
        ));
    }
    let t = diff / se;
    let p = two_sided_p(t, df)?;
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value_two_sided: p,
        variant,
        n_a: sample_a.len(),
        n_b: sample_b.len(),
        mean_a: ma,
        mean_b: mb,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn two_sided_p(t: f64, df: f64) -> Result<f64> {
    Ok((2.0 * upper_tail(t.abs(), df)?).min(1.0))
}

/// Lower-tail probability `P(T <= t)` of Student's t distribution.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    let tail = upper_tail(t.abs(), df)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// `P(T > t)` for `t >= 0`, as `I_x(df/2, 1/2) / 2` with `x = df / (df + t^2)`.
fn upper_tail(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(Error::Domain(format!("degrees of freedom must be positive, got {df}")));
    }
    if t.is_nan() {
        return Err(Error::Domain("t is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let t2 = t * t;
    let denom = df + t2;
    // x and 1 - x are formed separately so neither suffers cancellation.
    let x = df / denom;
    let y = t2 / denom;
    Ok(0.5 * regularized_incomplete_beta(x, y, 0.5 * df, 0.5))
}

/// Maximum continued-fraction iterations.
pub const BETA_CF_MAX_ITER: usize = 10_000;
/// Relative convergence tolerance of the continued fraction.
pub const BETA_CF_EPS: f64 = 1e-16;

/// Regularized incomplete beta `I_x(a, b)`, given both `x` and `y = 1 - x`.
pub fn regularized_incomplete_beta(x: f64, y: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_continued_fraction(x, a, b) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_continued_fraction(y, b, a) / b).clamp(0.0, 1.0)
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_CF_EPS {
            break;
        }
    }
    h
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lanczos approximation (g = 7, n = 9), with reflection below 0.5.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
