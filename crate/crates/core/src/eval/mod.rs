//! Forensic evaluation: EER, DET curves, Cllr, PAV-optimal Cllr, linear
//! calibration and zoo-plot quartile statistics.

pub mod calib;
pub mod cllr;
pub mod det;
pub mod score;
pub mod zoo;

pub use calib::{fit_linear_calibration, CalibrationModel};
pub use cllr::{compute_cllr, pav_cllr_min};
pub use det::{compute_det, compute_eer, DetCurve, DetPoint};
pub use score::{ScoreRecord, ScoreSet, Trial, TrialLabel, TrialList};
pub use zoo::{zoo_stats, ZooAssignment, ZooCategory};
