//! Coursework-ratio mark refinement.
//!
//! The module mark is regressed on CAR (linear or quadratic, chosen by R²),
//! and the CAR-dependent part of the fit is subtracted from every mark:
//!
//! ```text
//! RMM = MM - (b1 * CAR + b2 * CAR^2)
//! ```
//!
//! The intercept is kept, so exam-only modules (CAR = 0) are never changed.
//! With the published coefficients (b1 = 12.77, b2 = -5.873) this is
//! `RMM = MM - 12.77 CAR + 5.873 CAR^2`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcript::{compute_car, Car, RefinedOutcome, StudentModuleOutcome};

/// Published linear coefficient of the refinement rule.
pub const PUBLISHED_B1: f64 = 12.77;
/// Published quadratic coefficient of the refinement rule.
pub const PUBLISHED_B2: f64 = -5.873;
/// Published R² of the quadratic and linear fits.
pub const PUBLISHED_R2_QUADRATIC: f64 = 0.0290;
pub const PUBLISHED_R2_LINEAR: f64 = 0.0277;

/// R² values closer than this count as tied; ties go to the linear model.
pub const SELECTION_TIE_TOLERANCE: f64 = 1e-12;

/// department -> sorted distinct coursework weights observed there.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RatioClassTable(pub BTreeMap<String, BTreeSet<u8>>);

impl RatioClassTable {
    pub fn classes(&self, department: &str) -> Option<&BTreeSet<u8>> {
        self.0.get(department)
    }

    /// Union of every department's classes, i.e. the columns of the table.
    pub fn all_classes(&self) -> BTreeSet<u8> {
        self.0.values().flatten().copied().collect()
    }
}

/// Per-department classes, derived from data only; departments never borrow
/// classes from each other.
pub fn derive_ratio_classes(records: &[StudentModuleOutcome]) -> RatioClassTable {
    let mut table: BTreeMap<String, BTreeSet<u8>> = BTreeMap::new();
    for r in records {
        table
            .entry(r.department.clone())
            .or_default()
            .insert(r.weighting.coursework_weight());
    }
    RatioClassTable(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Quadratic,
}

impl ModelKind {
    pub fn degree(self) -> usize {
        match self {
            ModelKind::Linear => 1,
            ModelKind::Quadratic => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementModel {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub r_squared: f64,
    pub model_kind: ModelKind,
    /// 0 for pinned (not fitted) coefficients.
    pub n_observations: usize,
}

impl RefinementModel {
    /// The published coefficients. The intercept was not reported and is 0.
    pub fn published() -> Self {
        Self {
            b0: 0.0,
            b1: PUBLISHED_B1,
            b2: PUBLISHED_B2,
            r_squared: PUBLISHED_R2_QUADRATIC,
            model_kind: ModelKind::Quadratic,
            n_observations: 0,
        }
    }

    /// The CAR-dependent part of the fitted mark, `b1 c + b2 c^2`.
    pub fn car_component(&self, car: Car) -> f64 {
        let c = car.value();
        self.b1 * c + self.b2 * c * c
    }

    pub fn predict(&self, car: Car) -> f64 {
        self.b0 + self.car_component(car)
    }
}

/// A fit together with the coefficient standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFit {
    pub model: RefinementModel,
    /// Standard errors of `(b0, b1, b2)`; `b2` is 0 for linear fits.
    pub std_errors: [f64; 3],
    pub residual_variance: f64,
}

fn distinct_count(points: &[(Car, f64)]) -> usize {
    let mut cars: Vec<u64> = points.iter().map(|(c, _)| c.value().to_bits()).collect();
    cars.sort_unstable();
    cars.dedup();
    cars.len()
}

/// Householder QR least squares for a tall `n x p` column-major design.
/// Returns the coefficients and the upper-triangular factor `R` (row-major `p x p`).
fn householder_least_squares(mut cols: Vec<Vec<f64>>, mut y: Vec<f64>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = cols.len();
    let n = y.len();
    let scale = cols
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for k in 0..p {
        let norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 * scale * (n as f64).sqrt() {
            return Err(Error::SingularFit(format!("design column {k} is linearly dependent")));
        }
        let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |target: &mut [f64]| {
            let dot: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (t, vi) in target.iter_mut().zip(&v) {
                *t -= f * vi;
            }
        };
        for col in cols.iter_mut().skip(k) {
            reflect(&mut col[k..]);
        }
        reflect(&mut y[k..]);
    }
    let r: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| if j >= i { cols[j][i] } else { 0.0 }).collect())
        .collect();
    let mut b = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = ((i + 1)..p).map(|j| r[i][j] * b[j]).sum();
        b[i] = (y[i] - s) / r[i][i];
    }
    Ok((b, r))
}

/// Inverse of an upper-triangular matrix.
fn invert_upper(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = r.len();
    let mut inv = vec![vec![0.0; p]; p];
    for j in 0..p {
        inv[j][j] = 1.0 / r[j][j];
        for i in (0..j).rev() {
            let s: f64 = ((i + 1)..=j).map(|k| r[i][k] * inv[k][j]).sum();
            inv[i][j] = -s / r[i][i];
        }
    }
    inv
}

/// Ordinary least squares of mark on `{1, CAR}` or `{1, CAR, CAR^2}`.
pub fn fit_polynomial_with_diagnostics(points: &[(Car, f64)], degree: usize) -> Result<PolynomialFit> {
    let kind = match degree {
        1 => ModelKind::Linear,
        2 => ModelKind::Quadratic,
        d => return Err(Error::InvalidValue(format!("unsupported polynomial degree {d}"))),
    };
    let p = degree + 1;
    if points.len() < p {
        return Err(Error::SingularFit(format!(
            "{} points cannot determine a degree-{degree} fit",
            points.len()
        )));
    }
    let distinct = distinct_count(points);
    if distinct < p {
        return Err(Error::SingularFit(format!(
            "{distinct} distinct CAR values cannot determine a degree-{degree} fit"
        )));
    }
    if points.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::InvalidValue("non-finite mark in fit".into()));
    }

    let cols: Vec<Vec<f64>> = (0..p)
        .map(|k| points.iter().map(|(c, _)| c.value().powi(k as i32)).collect())
        .collect();
    let y: Vec<f64> = points.iter().map(|(_, y)| *y).collect();
    let (b, r) = householder_least_squares(cols, y.clone())?;

    let mut model = RefinementModel {
        b0: b[0],
        b1: b[1],
        b2: if degree == 2 { b[2] } else { 0.0 },
        r_squared: 0.0,
        model_kind: kind,
        n_observations: points.len(),
    };
    let n = points.len() as f64;
    let mean_y = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|(c, v)| (v - model.predict(*c)).powi(2))
        .sum();
    model.r_squared = r_squared(ss_res, ss_tot);

    let dof = n - p as f64;
    let residual_variance = if dof > 0.0 { ss_res / dof } else { 0.0 };
    let rinv = invert_upper(&r);
    let mut std_errors = [0.0; 3];
    for (j, se) in std_errors.iter_mut().enumerate().take(p) {
        let row_norm2: f64 = rinv[j].iter().map(|v| v * v).sum();
        *se = (residual_variance * row_norm2).sqrt();
    }
    Ok(PolynomialFit {
        model,
        std_errors,
        residual_variance,
    })
}

fn r_squared(ss_res: f64, ss_tot: f64) -> f64 {
    // Residuals at rounding level on a constant response count as a perfect fit.
    let scale = ss_tot.max(1.0);
    if ss_tot <= f64::EPSILON * scale && ss_res <= f64::EPSILON * scale {
        return 1.0;
    }
    if ss_tot == 0.0 {
        return 0.0;
    }
    (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
}

pub fn fit_polynomial(points: &[(Car, f64)], degree: usize) -> Result<RefinementModel> {
    fit_polynomial_with_diagnostics(points, degree).map(|f| f.model)
}

/// Higher R² wins; ties within [`SELECTION_TIE_TOLERANCE`] prefer the linear model.
pub fn choose_model_kind(linear_r2: f64, quadratic_r2: f64) -> ModelKind {
    if quadratic_r2 > linear_r2 + SELECTION_TIE_TOLERANCE {
        ModelKind::Quadratic
    } else {
        ModelKind::Linear
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub selected: RefinementModel,
    pub linear: RefinementModel,
    pub quadratic: RefinementModel,
}

pub fn select_model(points: &[(Car, f64)]) -> Result<ModelSelection> {
    let linear = fit_polynomial(points, 1)?;
    let quadratic = fit_polynomial(points, 2)?;
    let selected = match choose_model_kind(linear.r_squared, quadratic.r_squared) {
        ModelKind::Linear => linear,
        ModelKind::Quadratic => quadratic,
    };
    Ok(ModelSelection {
        selected,
        linear,
        quadratic,
    })
}

/// `mm - (b1 car + b2 car^2)`; the intercept is not subtracted.
pub fn refine_mark(mm: f64, car: Car, model: &RefinementModel) -> f64 {
    if car.is_exam_only() {
        return mm;
    }
    mm - model.car_component(car)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSource {
    #[default]
    Fitted,
    Published,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineOptions {
    pub published_coefficients: bool,
    pub per_department: bool,
    pub clamp: bool,
}

/// The model used for one fitting scope (all records, or one department).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeFit {
    pub scope: String,
    pub selected: RefinementModel,
    pub linear: Option<RefinementModel>,
    pub quadratic: Option<RefinementModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRun {
    pub records: Vec<RefinedOutcome>,
    pub ratio_classes: RatioClassTable,
    pub fits: Vec<ScopeFit>,
    pub warnings: Vec<String>,
}

impl RefinementRun {
    pub fn model_for(&self, department: &str) -> Option<&RefinementModel> {
        self.fits
            .iter()
            .find(|f| f.scope == department)
            .or_else(|| self.fits.iter().find(|f| f.scope == ALL_SCOPE || f.scope == PUBLISHED_SCOPE))
            .map(|f| &f.selected)
    }
}

pub const ALL_SCOPE: &str = "*";
pub const PUBLISHED_SCOPE: &str = "published";

fn fit_scope(scope: &str, points: &[(Car, f64)], warnings: &mut Vec<String>) -> Result<ScopeFit> {
    match distinct_count(points) {
        0 => Err(Error::EmptySelection {
            selection: format!("records to fit in scope {scope}"),
        }),
        1 => {
            warnings.push(format!(
                "scope {scope}: a single CAR value; falling back to a constant linear model (no refinement)"
            ));
            let n = points.len() as f64;
            let mean = points.iter().map(|(_, y)| y).sum::<f64>() / n;
            let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean).powi(2)).sum();
            let model = RefinementModel {
                b0: mean,
                b1: 0.0,
                b2: 0.0,
                r_squared: r_squared(ss_tot, ss_tot),
                model_kind: ModelKind::Linear,
                n_observations: points.len(),
            };
            Ok(ScopeFit {
                scope: scope.into(),
                selected: model,
                linear: Some(model),
                quadratic: None,
            })
        }
        2 => {
            warnings.push(format!(
                "scope {scope}: fewer than 3 distinct CAR values; falling back to the linear model"
            ));
            let linear = fit_polynomial(points, 1)?;
            Ok(ScopeFit {
                scope: scope.into(),
                selected: linear,
                linear: Some(linear),
                quadratic: None,
            })
        }
        _ => {
            let sel = select_model(points)?;
            Ok(ScopeFit {
                scope: scope.into(),
                selected: sel.selected,
                linear: Some(sel.linear),
                quadratic: Some(sel.quadratic),
            })
        }
    }
}

/// Derive ratio classes, compute CAR, choose and fit the model, refine every
/// mark and append the refined mark next to the untouched original.
pub fn run_refinement_pipeline(records: &[StudentModuleOutcome], opts: &RefineOptions) -> Result<RefinementRun> {
    if records.is_empty() {
        return Err(Error::EmptySelection {
            selection: "records to refine".into(),
        });
    }
    let ratio_classes = derive_ratio_classes(records);
    let cars: Vec<Car> = records.iter().map(|r| compute_car(r.weighting)).collect();

    let mut warnings = Vec::new();
    let fits = if opts.published_coefficients {
        vec![ScopeFit {
            scope: PUBLISHED_SCOPE.into(),
            selected: RefinementModel::published(),
            linear: None,
            quadratic: None,
        }]
    } else if opts.per_department {
        let mut by_dept: BTreeMap<&str, Vec<(Car, f64)>> = BTreeMap::new();
        for (r, c) in records.iter().zip(&cars) {
            by_dept.entry(&r.department).or_default().push((*c, r.module_mark));
        }
        by_dept
            .into_iter()
            .map(|(dept, pts)| fit_scope(dept, &pts, &mut warnings))
            .collect::<Result<Vec<_>>>()?
    } else {
        let pts: Vec<(Car, f64)> = records.iter().zip(&cars).map(|(r, c)| (*c, r.module_mark)).collect();
        vec![fit_scope(ALL_SCOPE, &pts, &mut warnings)?]
    };

    let lookup: BTreeMap<&str, &RefinementModel> = fits.iter().map(|f| (f.scope.as_str(), &f.selected)).collect();
    let fallback = lookup.get(ALL_SCOPE).or_else(|| lookup.get(PUBLISHED_SCOPE)).copied();
    let refined: Vec<RefinedOutcome> = records
        .par_iter()
        .zip(cars.par_iter())
        .map(|(r, &car)| {
            let model = lookup
                .get(r.department.as_str())
                .copied()
                .or(fallback)
                .expect("every department has a model");
            let mut rmm = refine_mark(r.module_mark, car, model);
            if opts.clamp {
                rmm = rmm.clamp(0.0, 100.0);
            }
            RefinedOutcome {
                outcome: r.clone(),
                refined_module_mark: rmm,
            }
        })
        .collect();

    Ok(RefinementRun {
        records: refined,
        ratio_classes,
        fits,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::AssessmentWeighting;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn car(v: f64) -> Car {
        Car::new(v).unwrap()
    }

    fn rec(dept: &str, cw: u8, mark: f64) -> StudentModuleOutcome {
        StudentModuleOutcome {
            student_id: "s".into(),
            department: dept.into(),
            year_level: 1,
            module_code: format!("m{cw}"),
            module_mark: mark,
            exam_mark: None,
            cswk_mark: None,
            weighting: AssessmentWeighting::from_coursework(cw).unwrap(),
        }
    }

    #[test]
    fn ratio_class_examples() {
        let cs = [0u8, 10, 20, 25, 30, 55, 60, 70, 100];
        let mut recs: Vec<_> = cs.iter().rev().map(|&w| rec("CS", w, 60.0)).collect();
        recs.push(rec("CS", 25, 61.0));
        let t = derive_ratio_classes(&recs);
        assert_eq!(t.classes("CS").unwrap().iter().copied().collect::<Vec<_>>(), cs);

        let t = derive_ratio_classes(&[rec("Math", 50, 60.0)]);
        assert_eq!(t.classes("Math").unwrap().iter().copied().collect::<Vec<_>>(), vec![50]);

        let t = derive_ratio_classes(&[rec("A", 10, 60.0), rec("B", 15, 60.0)]);
        assert_eq!(t.classes("A").unwrap().len(), 1);
        assert_eq!(t.classes("B").unwrap().len(), 1);
        assert!(t.classes("A").unwrap().is_disjoint(t.classes("B").unwrap()));
    }

    #[test]
    fn exact_quadratic_three_points() {
        let pts = [(car(0.0), 10.0), (car(0.5), 14.91675), (car(1.0), 16.897)];
        let m = fit_polynomial(&pts, 2).unwrap();
        assert_abs_diff_eq!(m.b0, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.b1, 12.77, epsilon = 1e-9);
        assert_abs_diff_eq!(m.b2, -5.873, epsilon = 1e-9);
        assert_abs_diff_eq!(m.r_squared, 1.0, epsilon = 1e-12);
        assert_eq!(m.model_kind, ModelKind::Quadratic);
        assert_eq!(m.n_observations, 3);
    }

    #[test]
    fn horizontal_line() {
        let pts: Vec<_> = [0.0, 0.25, 0.5, 1.0].iter().map(|&c| (car(c), 42.0)).collect();
        let m = fit_polynomial(&pts, 1).unwrap();
        assert_abs_diff_eq!(m.b1, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.b0, 42.0, epsilon = 1e-12);
        assert_eq!(m.r_squared, 1.0);
    }

    #[test]
    fn singular_designs() {
        let same = [(car(0.3), 1.0), (car(0.3), 2.0), (car(0.3), 3.0)];
        assert!(matches!(fit_polynomial(&same, 1), Err(Error::SingularFit(_))));
        let two = [(car(0.0), 1.0), (car(1.0), 2.0), (car(1.0), 3.0), (car(0.0), 2.0)];
        assert!(fit_polynomial(&two, 1).is_ok());
        assert!(matches!(fit_polynomial(&two, 2), Err(Error::SingularFit(_))));
        assert!(fit_polynomial(&two[..1], 1).is_err());
        assert!(fit_polynomial(&two, 3).is_err());
    }

    #[test]
    fn selection_examples() {
        let quad: Vec<_> = (0..=10)
            .map(|i| {
                let c = i as f64 / 10.0;
                (car(c), 50.0 + 12.77 * c - 5.873 * c * c)
            })
            .collect();
        let s = select_model(&quad).unwrap();
        assert_eq!(s.selected.model_kind, ModelKind::Quadratic);
        assert_abs_diff_eq!(s.quadratic.r_squared, 1.0, epsilon = 1e-12);
        assert!(s.linear.r_squared < 1.0);

        let line: Vec<_> = (0..=10)
            .map(|i| {
                let c = i as f64 / 10.0;
                (car(c), 50.0 + 3.0 * c)
            })
            .collect();
        let s = select_model(&line).unwrap();
        assert_eq!(s.selected.model_kind, ModelKind::Linear);
        assert_abs_diff_eq!(s.quadratic.b2, 0.0, epsilon = 1e-9);

        assert_eq!(choose_model_kind(PUBLISHED_R2_LINEAR, PUBLISHED_R2_QUADRATIC), ModelKind::Quadratic);
        assert_eq!(choose_model_kind(0.5, 0.5 + 1e-13), ModelKind::Linear);
    }

    #[test]
    fn refine_examples() {
        let p = RefinementModel::published();
        assert_eq!(refine_mark(50.0, car(0.0), &p), 50.0);
        assert_abs_diff_eq!(refine_mark(50.0, car(0.5), &p), 45.08325, epsilon = 1e-9);
        assert_abs_diff_eq!(refine_mark(60.3, car(1.0), &p), 53.403, epsilon = 1e-9);
    }

    #[test]
    fn mixed_group_effective_car() {
        // root of 5.873 c^2 - 12.77 c + 2.1 = 0 in [0, 1]
        let (a, b, c) = (5.873f64, -12.77f64, 2.1f64);
        let root = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert_abs_diff_eq!(root, 0.179, epsilon = 5e-4);
        let rmm = refine_mark(60.4, car(root), &RefinementModel::published());
        assert_abs_diff_eq!(rmm, 58.3, epsilon = 1e-9);
    }

    #[test]
    fn pipeline_all_exam_falls_back() {
        let recs = vec![rec("CS", 0, 55.0), rec("CS", 0, 65.0), rec("CS", 0, 48.0)];
        let run = run_refinement_pipeline(&recs, &RefineOptions::default()).unwrap();
        assert!(!run.warnings.is_empty());
        for r in &run.records {
            assert_eq!(r.refined_module_mark, r.outcome.module_mark);
        }
        assert_eq!(run.fits[0].selected.model_kind, ModelKind::Linear);
    }

    #[test]
    fn pipeline_two_classes_uses_linear() {
        let recs = vec![rec("CS", 0, 55.0), rec("CS", 100, 65.0), rec("CS", 0, 50.0), rec("CS", 100, 70.0)];
        let run = run_refinement_pipeline(&recs, &RefineOptions::default()).unwrap();
        assert_eq!(run.warnings.len(), 1);
        assert_abs_diff_eq!(run.fits[0].selected.b1, 15.0, epsilon = 1e-9);
        assert_abs_diff_eq!(run.records[1].refined_module_mark, 50.0, epsilon = 1e-9);
    }

    #[test]
    fn pipeline_published_mode_and_clamp() {
        let recs = vec![rec("CS", 100, 3.0), rec("CS", 50, 60.0)];
        let run = run_refinement_pipeline(&recs, &RefineOptions { published_coefficients: true, ..Default::default() }).unwrap();
        assert_abs_diff_eq!(run.records[0].refined_module_mark, 3.0 - 6.897, epsilon = 1e-12);
        let clamped = run_refinement_pipeline(
            &recs,
            &RefineOptions { published_coefficients: true, clamp: true, ..Default::default() },
        )
        .unwrap();
        assert_eq!(clamped.records[0].refined_module_mark, 0.0);
        assert_eq!(clamped.records[0].outcome.module_mark, 3.0);
    }

    #[test]
    fn pipeline_per_department() {
        let mut recs = Vec::new();
        for (i, cw) in [0u8, 50, 100, 0, 50, 100].iter().enumerate() {
            recs.push(rec("A", *cw, 50.0 + f64::from(*cw) / 10.0 + i as f64 * 0.01));
            recs.push(rec("B", *cw, 60.0 - f64::from(*cw) / 20.0));
        }
        let run = run_refinement_pipeline(&recs, &RefineOptions { per_department: true, ..Default::default() }).unwrap();
        assert_eq!(run.fits.len(), 2);
        assert!(run.model_for("A").unwrap().b1 > 0.0);
        assert!(run.model_for("B").unwrap().b1 < 0.0);
        assert!(run_refinement_pipeline(&[], &RefineOptions::default()).is_err());
    }

    #[test]
    fn model_json_fields() {
        let v = serde_json::to_value(RefinementModel::published()).unwrap();
        for key in ["b0", "b1", "b2", "r_squared", "model_kind", "n_observations"] {
            assert!(v.get(key).is_some());
        }
        assert_eq!(v["model_kind"], "quadratic");
    }

    proptest! {
        #[test]
        fn exact_recovery_on_noiseless_polynomials(
            b0 in -50.0f64..100.0,
            b1 in -30.0f64..30.0,
            b2 in -30.0f64..30.0,
            lo in 0.0f64..0.5,
            width in 0.2f64..0.5,
            m in 3usize..40,
        ) {
            let pts: Vec<_> = (0..m)
                .map(|k| {
                    let c = lo + width * k as f64 / (m - 1) as f64;
                    (car(c), b0 + b1 * c + b2 * c * c)
                })
                .collect();
            let fit = fit_polynomial(&pts, 2).unwrap();
            prop_assert!((fit.b0 - b0).abs() <= 1e-9 * (1.0 + b0.abs()));
            prop_assert!((fit.b1 - b1).abs() <= 1e-9 * (1.0 + b1.abs()) / width.powi(2));
            prop_assert!((fit.b2 - b2).abs() <= 1e-9 * (1.0 + b2.abs()) / width.powi(2));
        }

        #[test]
        fn car_zero_is_identity(mm in 0.0f64..100.0, b1 in -50.0f64..50.0, b2 in -50.0f64..50.0) {
            let model = RefinementModel { b1, b2, ..RefinementModel::published() };
            prop_assert_eq!(refine_mark(mm, car(0.0), &model), mm);
        }

        #[test]
        fn published_decrement_increases_with_car(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            prop_assume!(a < b);
            let p = RefinementModel::published();
            prop_assert!(p.car_component(car(a)) < p.car_component(car(b)));
            prop_assert!(p.car_component(car(b)) <= 6.897 + 1e-12);
        }
    }
}
