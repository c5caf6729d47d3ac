//! Seeded synthetic cohorts with a configurable coursework effect.
//!
//! Mark model for student `i` on module `m`:
//!
//! ```text
//! MM = clamp(ability_i + effect_linear * CAR_m + effect_quadratic * CAR_m^2 + eps, 0, 100)
//! ability_i ~ Normal(ability_mean, ability_sd)     (once per student)
//! eps       ~ Normal(0, noise_sd)                  (once per student-module)
//! ```
//!
//! Each department has a catalog of `3 * modules_per_student_per_year`
//! modules per year, and each catalog module's coursework weight is drawn
//! uniformly from the department's weight classes. Students take
//! `modules_per_student_per_year` distinct catalog modules per year; with
//! `coursework_preference_sd > 0` a student's choice is tilted toward (or
//! away from) coursework-heavy modules.
//!
//! Streams: catalog `[dept, year, slot]`, student `[dept, student]`,
//! student-module `[dept, student, year, slot]`. Adding students or
//! departments never changes the draws of existing ones.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, substream};
use crate::transcript::{AssessmentWeighting, StudentModuleOutcome, MAX_YEAR_LEVEL};

/// Catalog size as a multiple of the per-student module load.
pub const CATALOG_FACTOR: usize = 3;
/// Largest gap between the exam and coursework component marks is twice this.
pub const COMPONENT_SPREAD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepartmentProfile {
    pub code: String,
    pub student_count: usize,
    pub modules_per_student_per_year: usize,
    pub cw_weight_classes: Vec<u8>,
    pub years: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub departments: Vec<DepartmentProfile>,
    pub seed: u64,
    pub noise_sd: f64,
    pub ability_mean: f64,
    pub ability_sd: f64,
    pub effect_linear: f64,
    pub effect_quadratic: f64,
    /// Standard deviation of each student's tilt toward coursework-heavy
    /// modules when choosing from the catalog. 0 means uniform choice.
    pub coursework_preference_sd: f64,
}

/// Coursework weight classes of the Computer Science department.
pub const CS_WEIGHT_CLASSES: [u8; 9] = [0, 10, 20, 25, 30, 55, 60, 70, 100];

impl Default for CohortSpec {
    /// One department shaped like the evaluated cohort: 406 students, 8
    /// modules in each of the preparatory and three degree years.
    fn default() -> Self {
        Self {
            departments: vec![DepartmentProfile {
                code: "CS".into(),
                student_count: 406,
                modules_per_student_per_year: 8,
                cw_weight_classes: CS_WEIGHT_CLASSES.to_vec(),
                years: vec![0, 1, 2, 3],
            }],
            seed: 42,
            noise_sd: 8.0,
            ability_mean: 58.0,
            ability_sd: 9.0,
            effect_linear: 12.77,
            effect_quadratic: -5.873,
            coursework_preference_sd: 0.0,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        finite_nonneg("noise_sd", self.noise_sd)?;
        finite_nonneg("ability_sd", self.ability_sd)?;
        finite_nonneg("coursework_preference_sd", self.coursework_preference_sd)?;
        for (name, v) in [
            ("ability_mean", self.ability_mean),
            ("effect_linear", self.effect_linear),
            ("effect_quadratic", self.effect_quadratic),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if self.departments.is_empty() {
            return Err(Error::Config("cohort has no departments".into()));
        }
        let mut codes = std::collections::BTreeSet::new();
        for d in &self.departments {
            if d.code.trim().is_empty() {
                return Err(Error::Config("department code is empty".into()));
            }
            if !codes.insert(d.code.as_str()) {
                return Err(Error::Config(format!("duplicate department {}", d.code)));
            }
            if d.student_count == 0 {
                return Err(Error::Config(format!("department {} has no students", d.code)));
            }
            if d.modules_per_student_per_year == 0 {
                return Err(Error::Config(format!("department {} has no modules", d.code)));
            }
            if d.cw_weight_classes.is_empty() {
                return Err(Error::Config(format!("department {} has no weight classes", d.code)));
            }
            if let Some(w) = d.cw_weight_classes.iter().find(|&&w| w > 100) {
                return Err(Error::Config(format!("weight class {w} of {} exceeds 100", d.code)));
            }
            if d.years.is_empty() {
                return Err(Error::Config(format!("department {} has no years", d.code)));
            }
            if let Some(y) = d.years.iter().find(|&&y| y > MAX_YEAR_LEVEL) {
                return Err(Error::Config(format!("year {y} of {} exceeds {MAX_YEAR_LEVEL}", d.code)));
            }
        }
        Ok(())
    }

    pub fn module_count(&self) -> usize {
        self.departments
            .iter()
            .map(|d| d.student_count * d.modules_per_student_per_year * d.years.len())
            .sum()
    }
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("sd validated").sample(rng)
}

struct CatalogModule {
    code: String,
    weighting: AssessmentWeighting,
}

fn build_catalog(seed: u64, dept_idx: usize, dept: &DepartmentProfile, year: u8) -> Vec<CatalogModule> {
    let size = dept.modules_per_student_per_year * CATALOG_FACTOR;
    (0..size)
        .map(|slot| {
            let mut rng = substream(seed, &[domain::CATALOG, dept_idx as u64, u64::from(year), slot as u64]);
            let cw = dept.cw_weight_classes[rng.random_range(0..dept.cw_weight_classes.len())];
            CatalogModule {
                code: format!("{}{}{:03}", dept.code, year, slot),
                weighting: AssessmentWeighting::from_coursework(cw).expect("class <= 100"),
            }
        })
        .collect()
}

/// Splits `mm` into exam and coursework marks whose weighted mean is `mm`.
fn component_marks(rng: &mut ChaCha8Rng, mm: f64, w: AssessmentWeighting) -> (Option<f64>, Option<f64>) {
    let (we, wc) = (
        f64::from(w.exam_weight()) / 100.0,
        f64::from(w.coursework_weight()) / 100.0,
    );
    if w.coursework_weight() == 0 {
        return (Some(mm), None);
    }
    if w.exam_weight() == 0 {
        return (None, Some(mm));
    }
    // cswk = mm + we * d, exam = mm - wc * d keeps we * exam + wc * cswk = mm.
    let lo = (-COMPONENT_SPREAD).max(-mm / we).max((mm - 100.0) / wc);
    let hi = COMPONENT_SPREAD.min((100.0 - mm) / we).min(mm / wc);
    let d = if hi > lo { rng.random_range(lo..=hi) } else { 0.0 };
    let cswk = (mm + we * d).clamp(0.0, 100.0);
    let exam = (mm - wc * d).clamp(0.0, 100.0);
    (Some(exam), Some(cswk))
}

fn generate_student(
    spec: &CohortSpec,
    dept_idx: usize,
    dept: &DepartmentProfile,
    catalogs: &[(u8, Vec<CatalogModule>)],
    student_idx: usize,
) -> Vec<StudentModuleOutcome> {
    let mut srng = substream(spec.seed, &[domain::STUDENT, dept_idx as u64, student_idx as u64]);
    let ability = normal(&mut srng, spec.ability_mean, spec.ability_sd);
    let tilt = normal(&mut srng, 0.0, spec.coursework_preference_sd);
    let student_id = format!("{}-{:05}", dept.code, student_idx);

    let mut out = Vec::with_capacity(catalogs.len() * dept.modules_per_student_per_year);
    for (year, catalog) in catalogs {
        // Gumbel top-k: sampling without replacement with weights exp(tilt * CAR).
        let mut keys: Vec<(f64, usize)> = catalog
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let u: f64 = srng.random_range(f64::MIN_POSITIVE..1.0);
                let car = f64::from(m.weighting.coursework_weight()) / 100.0;
                (tilt * car - (-u.ln()).ln(), i)
            })
            .collect();
        keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = keys[..dept.modules_per_student_per_year].iter().map(|k| k.1).collect();
        chosen.sort_unstable();

        for slot in chosen {
            let module = &catalog[slot];
            let mut mrng = substream(
                spec.seed,
                &[domain::MODULE, dept_idx as u64, student_idx as u64, u64::from(*year), slot as u64],
            );
            let car = f64::from(module.weighting.coursework_weight()) / 100.0;
            let eps = if spec.noise_sd == 0.0 {
                0.0
            } else {
                let z: f64 = StandardNormal.sample(&mut mrng);
                z * spec.noise_sd
            };
            let mm = (ability + spec.effect_linear * car + spec.effect_quadratic * car * car + eps).clamp(0.0, 100.0);
            let (exam_mark, cswk_mark) = component_marks(&mut mrng, mm, module.weighting);
            out.push(StudentModuleOutcome {
                student_id: student_id.clone(),
                department: dept.code.clone(),
                year_level: *year,
                module_code: module.code.clone(),
                module_mark: mm,
                exam_mark,
                cswk_mark,
                weighting: module.weighting,
            });
        }
    }
    out
}

/// Generates the cohort described by `spec`: departments in order, students
/// in index order, years ascending, modules in catalog order. Generation runs
/// in parallel and is identical to serial generation.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<StudentModuleOutcome>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.module_count());
    for (dept_idx, dept) in spec.departments.iter().enumerate() {
        let mut years = dept.years.clone();
        years.sort_unstable();
        years.dedup();
        let catalogs: Vec<(u8, Vec<CatalogModule>)> = years
            .iter()
            .map(|&y| (y, build_catalog(spec.seed, dept_idx, dept, y)))
            .collect();
        let students: Vec<Vec<StudentModuleOutcome>> = (0..dept.student_count)
            .into_par_iter()
            .map(|s| generate_student(spec, dept_idx, dept, &catalogs, s))
            .collect();
        out.extend(students.into_iter().flatten());
    }
    Ok(out)
}
