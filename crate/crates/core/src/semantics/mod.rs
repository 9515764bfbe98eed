//! Semantic labelling of stop locations: residential and workplace anchors,
//! POI matching, and the resulting [`Visit`] stream.

mod anchors;
mod label;
mod poi;
mod taxonomy;

pub use anchors::{compute_anchor_windows, infer_residential, infer_workplace, AnchorWindows, DayAnchors, WorkStats};
pub use label::{annotate_user, label_visits};
pub use poi::{match_poi, Geometry, Poi, PoiIndex, PoiMatch, DEFAULT_MATCH_RADIUS_M};
pub use taxonomy::{Taxonomy, L1_CATEGORIES};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::geo::LatLon;

/// Reference to a matched POI with its two-level category.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PoiRef {
    pub poi_id: String,
    pub l1: String,
    pub l2: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SemanticLabel {
    Residential,
    Workplace,
    Poi(PoiRef),
    Other,
}

impl SemanticLabel {
    pub fn kind(&self) -> &'static str {
        match self {
            SemanticLabel::Residential => "Residential",
            SemanticLabel::Workplace => "Workplace",
            SemanticLabel::Poi(_) => "POI",
            SemanticLabel::Other => "Other",
        }
    }

    /// Symbol used in routine sequences: the anchor kind, or the first-level
    /// POI category.
    pub fn symbol(&self) -> &str {
        match self {
            SemanticLabel::Poi(p) => &p.l1,
            other => other.kind(),
        }
    }

    pub fn poi(&self) -> Option<&PoiRef> {
        match self {
            SemanticLabel::Poi(p) => Some(p),
            _ => None,
        }
    }
}

/// One stop event at a labelled stop location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub user_id: String,
    pub location_id: u32,
    pub label: SemanticLabel,
    /// POI matched to the location, kept even when an anchor label wins.
    pub poi: Option<PoiRef>,
    pub start_time: i64,
    pub end_time: i64,
    /// Local calendar date of `start_time`.
    pub day: NaiveDate,
    /// Centroid of the stop location.
    pub lat: f64,
    pub lon: f64,
}

impl Visit {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    pub fn duration(&self) -> i64 {
        self.end_time - self.start_time
    }
}
