//! Co-location events between users and their analytical null model.

mod detect;
mod null_model;

pub use detect::{classify, detect_colocations, ColocationConfig, ColocationEvent, Place};
pub use null_model::{
    expected_colocation_count, expected_colocation_duration, expected_colocation_prob, null_model_report,
    DurationFormula, NullModelRow, DAY_MINUTES,
};
