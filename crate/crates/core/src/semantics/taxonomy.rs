use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::Deserialize;

use crate::{Error, Result};

/// First-level venue categories.
pub const L1_CATEGORIES: [&str; 8] = [
    "Arts & Entertainment",
    "College & University",
    "Food",
    "Nightlife Spot",
    "Outdoors & Recreation",
    "Professional & Other Places",
    "Shop & Service",
    "Travel & Transport",
];

const BUILTIN_TAXONOMY: &str = include_str!("../../data/taxonomy.csv");
const BUILTIN_ESSENTIAL: &str = include_str!("../../data/essential_shops.txt");
const BUILTIN_OSM: &str = include_str!("../../data/osm_mapping.csv");

/// Two-level category taxonomy plus the sample OSM tag mapping.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    l2_to_l1: BTreeMap<String, String>,
    essential: BTreeSet<String>,
    osm: BTreeMap<String, (String, String)>,
}

#[derive(Deserialize)]
struct TaxonomyRow {
    l1: String,
    l2: String,
}

#[derive(Deserialize)]
struct OsmRow {
    osm_tag: String,
    l1: String,
    l2: String,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Taxonomy {
    pub fn builtin() -> Self {
        let mut t = Self::from_csv(BUILTIN_TAXONOMY.as_bytes()).expect("builtin taxonomy parses");
        t.essential = BUILTIN_ESSENTIAL
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        let mut rdr = csv::Reader::from_reader(BUILTIN_OSM.as_bytes());
        for row in rdr.deserialize::<OsmRow>() {
            let row = row.expect("builtin osm mapping parses");
            t.osm.insert(row.osm_tag, (row.l1, row.l2));
        }
        t
    }

    /// Reads an `l1,l2` CSV. Every `l1` must be one of [`L1_CATEGORIES`].
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut l2_to_l1 = BTreeMap::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for row in rdr.deserialize::<TaxonomyRow>() {
            let row = row?;
            if !L1_CATEGORIES.contains(&row.l1.as_str()) {
                return Err(Error::invalid(format!("unknown first-level category {:?}", row.l1)));
            }
            if let Some(prev) = l2_to_l1.insert(row.l2.clone(), row.l1.clone()) {
                if prev != row.l1 {
                    return Err(Error::invalid(format!(
                        "category {:?} listed under both {prev:?} and {:?}",
                        row.l2, row.l1
                    )));
                }
            }
        }
        Ok(Taxonomy {
            l2_to_l1,
            essential: BTreeSet::new(),
            osm: BTreeMap::new(),
        })
    }

    pub fn with_essential(mut self, names: impl IntoIterator<Item = String>) -> Self {
        self.essential = names.into_iter().collect();
        self
    }

    pub fn contains(&self, l1: &str, l2: &str) -> bool {
        self.l2_to_l1.get(l2).is_some_and(|p| p == l1)
    }

    pub fn validate(&self, l1: &str, l2: &str) -> Result<()> {
        if self.contains(l1, l2) {
            Ok(())
        } else {
            Err(Error::invalid(format!("category pair ({l1:?}, {l2:?}) not in taxonomy")))
        }
    }

    pub fn l1_of(&self, l2: &str) -> Option<&str> {
        self.l2_to_l1.get(l2).map(String::as_str)
    }

    pub fn l2_names(&self) -> impl Iterator<Item = (&str, &str)> {
        self.l2_to_l1.iter().map(|(l2, l1)| (l1.as_str(), l2.as_str()))
    }

    /// Essential `Shop & Service` venues (groceries, pharmacies and similar).
    pub fn is_essential_shop(&self, l1: &str, l2: &str) -> bool {
        l1 == "Shop & Service" && self.essential.contains(l2)
    }

    /// Maps an OSM `key=value` tag through the sample mapping table.
    pub fn map_osm_tag(&self, tag: &str) -> Option<(&str, &str)> {
        self.osm.get(tag).map(|(a, b)| (a.as_str(), b.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_all_first_level_categories() {
        let t = Taxonomy::builtin();
        let l1: BTreeSet<&str> = t.l2_names().map(|(l1, _)| l1).collect();
        assert_eq!(l1.len(), 8);
        for c in L1_CATEGORIES {
            assert!(l1.contains(c));
        }
    }

    #[test]
    fn essential_shops() {
        let t = Taxonomy::builtin();
        assert!(t.is_essential_shop("Shop & Service", "Pharmacy"));
        assert!(!t.is_essential_shop("Shop & Service", "Clothing Store"));
        assert!(!t.is_essential_shop("Food", "Pharmacy"));
        for name in BUILTIN_ESSENTIAL.lines().filter(|l| !l.is_empty()) {
            assert!(t.contains("Shop & Service", name), "{name}");
        }
    }

    #[test]
    fn osm_mapping_targets_taxonomy() {
        let t = Taxonomy::builtin();
        assert_eq!(t.map_osm_tag("amenity=cafe"), Some(("Food", "Café")));
        for (l1, l2) in t.osm.values() {
            assert!(t.contains(l1, l2), "{l1}/{l2}");
        }
    }

    #[test]
    fn rejects_unknown_top_level() {
        let csv = "l1,l2\nSpace,Rocket\n";
        assert!(Taxonomy::from_csv(csv.as_bytes()).is_err());
    }
}
