//! Published aggregate tables, embedded verbatim for use as test oracles.
//!
//! Confusion tables keep the printed cells *and* the printed marginal
//! totals. For the excluding-CAR table the two disagree (the printed cells of
//! the Lower second and Third rows sum to 37 and 23, while their printed
//! totals are 47 and 30); [`PublishedConfusionTable::margin_mismatches`]
//! reports this instead of hiding it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::eval::ConfusionMatrix;
use crate::stats::AssessmentMethodClass;
use crate::transcript::DegreeBand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepartmentAverages {
    pub department: &'static str,
    pub student_number: u32,
    pub exam_based: f64,
    pub coursework_based: f64,
    pub mixed: f64,
}

impl DepartmentAverages {
    pub fn mean(&self, class: AssessmentMethodClass) -> f64 {
        match class {
            AssessmentMethodClass::ExamBased => self.exam_based,
            AssessmentMethodClass::CourseworkBased => self.coursework_based,
            AssessmentMethodClass::Mixed => self.mixed,
        }
    }
}

pub const AVERAGE_MARKS: [DepartmentAverages; 6] = [
    DepartmentAverages { department: "Business", student_number: 54960, exam_based: 59.77, coursework_based: 60.83, mixed: 60.01 },
    DepartmentAverages { department: "Civil Engineering", student_number: 34892, exam_based: 58.78, coursework_based: 63.74, mixed: 60.70 },
    DepartmentAverages { department: "Computer Science", student_number: 19800, exam_based: 58.18, coursework_based: 64.40, mixed: 58.87 },
    DepartmentAverages { department: "Electronic and Computer Systems Engineering", student_number: 13740, exam_based: 59.55, coursework_based: 63.26, mixed: 57.00 },
    DepartmentAverages { department: "Math", student_number: 24152, exam_based: 61.59, coursework_based: 66.00, mixed: 61.17 },
    DepartmentAverages { department: "Mechanical Engineering", student_number: 31385, exam_based: 58.80, coursework_based: 64.26, mixed: 60.24 },
];

/// Column of the averages table for one method class, in department order.
pub fn average_column(class: AssessmentMethodClass) -> Vec<f64> {
    AVERAGE_MARKS.iter().map(|d| d.mean(class)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedTTest {
    pub comparison: &'static str,
    pub p_value: f64,
    pub t_value: f64,
}

/// Tabulated t-tests. These come from unpublished student-level data and are
/// not reproducible from the department averages.
pub const TABULATED_T_TESTS: [PublishedTTest; 3] = [
    PublishedTTest { comparison: "Exam and coursework", p_value: 0.002, t_value: -4.5 },
    PublishedTTest { comparison: "Mixed and exam", p_value: 0.749, t_value: 0.39 },
    PublishedTTest { comparison: "Mixed and coursework", p_value: 0.004, t_value: -3.99 },
];

/// Exam-vs-coursework t statistic and p-value quoted in the prose.
pub const TEXT_T_VALUE: f64 = -5.06;
pub const TEXT_P_VALUE: f64 = 0.001;

/// A confusion table as printed: rows are the true class, columns the
/// prediction, both in [`DegreeBand::TABLE_ORDER`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedConfusionTable {
    pub title: &'static str,
    pub cells: [[u32; 6]; 6],
    pub row_totals: [u32; 6],
    pub column_totals: [u32; 6],
    pub grand_total: u32,
    pub auc: f64,
    pub error_rate: f64,
}

/// A printed total that differs from the sum of the printed cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginMismatch {
    pub axis: MarginAxis,
    pub band: Option<DegreeBand>,
    pub printed: u32,
    pub cell_sum: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginAxis {
    Row,
    Column,
    Grand,
}

impl PublishedConfusionTable {
    /// Sum of the printed diagonal cells.
    pub fn printed_trace(&self) -> u32 {
        (0..6).map(|i| self.cells[i][i]).sum()
    }

    /// Classification accuracy as printed: diagonal over the printed total.
    pub fn printed_accuracy(&self) -> f64 {
        f64::from(self.printed_trace()) / f64::from(self.grand_total)
    }

    pub fn cell_row_sums(&self) -> [u32; 6] {
        let mut s = [0; 6];
        for (i, row) in self.cells.iter().enumerate() {
            s[i] = row.iter().sum();
        }
        s
    }

    pub fn cell_column_sums(&self) -> [u32; 6] {
        let mut s = [0; 6];
        for row in &self.cells {
            for (j, v) in row.iter().enumerate() {
                s[j] += v;
            }
        }
        s
    }

    pub fn margin_mismatches(&self) -> Vec<MarginMismatch> {
        let mut out = Vec::new();
        for (axis, printed, sums) in [
            (MarginAxis::Row, self.row_totals, self.cell_row_sums()),
            (MarginAxis::Column, self.column_totals, self.cell_column_sums()),
        ] {
            for i in 0..6 {
                if printed[i] != sums[i] {
                    out.push(MarginMismatch {
                        axis,
                        band: Some(DegreeBand::TABLE_ORDER[i]),
                        printed: printed[i],
                        cell_sum: sums[i],
                    });
                }
            }
        }
        let total: u32 = self.cells.iter().flatten().sum();
        if total != self.grand_total {
            out.push(MarginMismatch {
                axis: MarginAxis::Grand,
                band: None,
                printed: self.grand_total,
                cell_sum: total,
            });
        }
        out
    }

    /// The printed cells as a [`ConfusionMatrix`] (bands re-indexed worst to best).
    pub fn to_confusion_matrix(&self) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::default();
        for (i, t) in DegreeBand::TABLE_ORDER.iter().enumerate() {
            for (j, p) in DegreeBand::TABLE_ORDER.iter().enumerate() {
                m.add(*t, *p, u64::from(self.cells[i][j]));
            }
        }
        m
    }

    /// Like [`Self::to_confusion_matrix`], but fails when the printed cells
    /// disagree with the printed totals.
    pub fn to_consistent_confusion_matrix(&self) -> Result<ConfusionMatrix> {
        let mismatches = self.margin_mismatches();
        if let Some(first) = mismatches.first() {
            return Err(Error::InvalidValue(format!(
                "{}: {} printed total(s) disagree with the cells (first: {:?} {:?} printed {} vs cells {})",
                self.title,
                mismatches.len(),
                first.axis,
                first.band,
                first.printed,
                first.cell_sum
            )));
        }
        Ok(self.to_confusion_matrix())
    }
}

pub const CONFUSION_EXCLUDING_CAR: PublishedConfusionTable = PublishedConfusionTable {
    title: "Predicting third year's average from first and second year's, excluding CAR",
    cells: [
        [0, 1, 3, 0, 5, 3],
        [0, 36, 0, 0, 0, 37],
        [0, 0, 0, 0, 6, 31],
        [0, 0, 0, 0, 0, 3],
        [0, 0, 8, 0, 2, 13],
        [0, 5, 4, 0, 0, 110],
    ],
    row_totals: [12, 73, 47, 3, 30, 119],
    column_totals: [0, 42, 25, 0, 20, 197],
    grand_total: 284,
    auc: 0.9073,
    error_rate: 0.0927,
};

pub const CONFUSION_INCLUDING_CAR: PublishedConfusionTable = PublishedConfusionTable {
    title: "Predicting third year's average from first and second year's, including CAR",
    cells: [
        [3, 2, 6, 0, 0, 2],
        [0, 59, 0, 0, 0, 23],
        [0, 4, 16, 0, 0, 26],
        [0, 0, 1, 0, 0, 2],
        [1, 1, 14, 0, 0, 9],
        [0, 12, 4, 0, 0, 99],
    ],
    row_totals: [13, 82, 46, 3, 25, 115],
    column_totals: [4, 78, 41, 0, 0, 161],
    grand_total: 284,
    auc: 0.9304,
    error_rate: 0.0696,
};

/// Number of students in the evaluated department.
pub const EVALUATED_STUDENTS: usize = 406;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementExampleRow {
    pub label: &'static str,
    pub module_count: u32,
    pub average_mm: f64,
    pub average_rmm: f64,
}

/// Worked example of one student's 32 modules. The total row is kept as
/// printed; it does not equal the count-weighted mean of the group rows.
pub const STUDENT_EXAMPLE_GROUPS: [RefinementExampleRow; 3] = [
    RefinementExampleRow { label: "exam-based modules", module_count: 19, average_mm: 48.6, average_rmm: 48.6 },
    RefinementExampleRow { label: "coursework-based modules", module_count: 6, average_mm: 60.3, average_rmm: 52.7 },
    RefinementExampleRow { label: "mixed EX and CW modules", module_count: 7, average_mm: 60.4, average_rmm: 58.3 },
];

pub const STUDENT_EXAMPLE_TOTAL: RefinementExampleRow =
    RefinementExampleRow { label: "all modules", module_count: 32, average_mm: 56.4, average_rmm: 53.2 };

/// Everything above in one serializable bundle.
#[derive(Debug, Clone, Serialize)]
pub struct PublishedFixtures {
    pub average_marks: Vec<DepartmentAverages>,
    pub tabulated_t_tests: Vec<PublishedTTest>,
    pub text_t_value: f64,
    pub text_p_value: f64,
    pub confusion_excluding_car: PublishedConfusionTable,
    pub confusion_including_car: PublishedConfusionTable,
    pub student_example_groups: Vec<RefinementExampleRow>,
    pub student_example_total: RefinementExampleRow,
}

pub fn emit_fixture_tables() -> PublishedFixtures {
    PublishedFixtures {
        average_marks: AVERAGE_MARKS.to_vec(),
        tabulated_t_tests: TABULATED_T_TESTS.to_vec(),
        text_t_value: TEXT_T_VALUE,
        text_p_value: TEXT_P_VALUE,
        confusion_excluding_car: CONFUSION_EXCLUDING_CAR,
        confusion_including_car: CONFUSION_INCLUDING_CAR,
        student_example_groups: STUDENT_EXAMPLE_GROUPS.to_vec(),
        student_example_total: STUDENT_EXAMPLE_TOTAL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let f = emit_fixture_tables();
        let math = f.average_marks.iter().find(|d| d.department == "Math").unwrap();
        assert_eq!(math.coursework_based, 66.00);
        assert_eq!(f.confusion_excluding_car.row_totals.iter().sum::<u32>(), 284);
        assert_eq!(f.confusion_excluding_car.grand_total, 284);
        // First is the second printed column
        assert_eq!(f.confusion_including_car.cells[1][1], 59);
    }

    #[test]
    fn including_car_table_is_consistent() {
        let t = &CONFUSION_INCLUDING_CAR;
        assert!(t.margin_mismatches().is_empty());
        assert_eq!(t.printed_trace(), 177);
        let m = t.to_consistent_confusion_matrix().unwrap();
        assert_eq!(m.total(), 284);
        assert_eq!(m.trace(), 177);
    }

    #[test]
    fn excluding_car_table_margins_disagree() {
        let t = &CONFUSION_EXCLUDING_CAR;
        assert_eq!(t.printed_trace(), 148);
        assert_eq!(t.printed_accuracy(), 148.0 / 284.0);
        assert_eq!(t.cell_row_sums(), [12, 73, 37, 3, 23, 119]);
        let mism = t.margin_mismatches();
        assert_eq!(mism.len(), 5);
        assert!(t.to_consistent_confusion_matrix().is_err());
    }

    #[test]
    fn example_total_row_is_not_the_group_mean() {
        let n: u32 = STUDENT_EXAMPLE_GROUPS.iter().map(|g| g.module_count).sum();
        assert_eq!(n, STUDENT_EXAMPLE_TOTAL.module_count);
        let mean = STUDENT_EXAMPLE_GROUPS
            .iter()
            .map(|g| f64::from(g.module_count) * g.average_mm)
            .sum::<f64>()
            / f64::from(n);
        assert!((mean - 1708.0 / 32.0).abs() < 1e-12);
        assert!((mean - STUDENT_EXAMPLE_TOTAL.average_mm).abs() > 2.0);
    }
}
