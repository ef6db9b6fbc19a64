//! Limit order book snapshots, feature windows and movement labels.

mod cache;
mod csvio;
mod norm;
mod snapshot;
mod window;

pub use cache::{read_window_cache, write_window_cache};
pub use csvio::{header as csv_header, parse_snapshots, write_snapshots};
pub use norm::NormStats;
pub use snapshot::{group_days, Day, Level, Snapshot, FEATURES, LEVELS};
pub use window::{
    balanced_gamma, build_day_windows, build_windows, horizon_return, label_from_return, label_horizon, window_count,
    DayWindows, FeatureWindow, Movement, WindowMeta,
};

#[cfg(test)]
pub(crate) use snapshot::test_support;
