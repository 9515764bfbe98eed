//! Behaviour-change metrics: percent change against a weekday baseline,
//! time allocation, location entropy, radius of gyration and rolling-window
//! changes.

mod individual;
mod series;

pub use individual::{
    location_entropy, location_weights, radius_of_gyration, time_allocation, window_metrics, TimeShares,
    Weighting, WindowMetrics,
};
pub use series::{
    daily_visit_series, median, Aggregate, percent_change, rolling_change, rolling_mean, write_tidy_csv, DailySeries,
    SeriesKey, WindowConfig,
};
