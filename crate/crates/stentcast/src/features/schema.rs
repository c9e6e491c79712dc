//! Canonical feature column layout.
//!
//! Frame mode carries the 24 raw per-frame features. Segmental and lesion
//! modes expand each of the 24 through the 7 summary statistics (168
//! columns) and append the 16 lesion-level volumetrics, for 184 columns;
//! `include_phenotype` appends a 3-column one-hot block. Column order is
//! part of the contract: models fingerprint it and refuse anything else.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Frame,
    Segmental,
    Lesion,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Frame => write!(f, "frame"),
            Mode::Segmental => write!(f, "segmental"),
            Mode::Lesion => write!(f, "lesion"),
        }
    }
}

impl FromStr for Mode {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "frame" => Ok(Mode::Frame),
            "segmental" => Ok(Mode::Segmental),
            "lesion" => Ok(Mode::Lesion),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnGroup {
    Lumen2d,
    Calc2d,
    Lumen3d,
    Calc3d,
    Phenotype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub group: ColumnGroup,
    /// Areas and volumes bypass min-max normalization.
    pub exempt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub mode: Mode,
    pub include_phenotype: bool,
    pub columns: Vec<ColumnDef>,
}

impl FeatureSchema {
    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }
}

/// The 24 per-frame features: 12 lumen then 12 calcification.
pub const BASE_2D: [(&str, ColumnGroup); 24] = [
    ("lumen_area", ColumnGroup::Lumen2d),
    ("lumen_pct_stenosis", ColumnGroup::Lumen2d),
    ("lumen_major_axis", ColumnGroup::Lumen2d),
    ("lumen_minor_axis", ColumnGroup::Lumen2d),
    ("lumen_perimeter", ColumnGroup::Lumen2d),
    ("lumen_extent", ColumnGroup::Lumen2d),
    ("lumen_eccentricity", ColumnGroup::Lumen2d),
    ("lumen_solidity", ColumnGroup::Lumen2d),
    ("lumen_circularity", ColumnGroup::Lumen2d),
    ("lumen_below_050_ref", ColumnGroup::Lumen2d),
    ("lumen_below_070_ref", ColumnGroup::Lumen2d),
    ("lumen_below_090_ref", ColumnGroup::Lumen2d),
    ("calc_arc_angle", ColumnGroup::Calc2d),
    ("calc_thickness", ColumnGroup::Calc2d),
    ("calc_depth", ColumnGroup::Calc2d),
    ("calc_area", ColumnGroup::Calc2d),
    ("calc_major_axis", ColumnGroup::Calc2d),
    ("calc_minor_axis", ColumnGroup::Calc2d),
    ("calc_perimeter", ColumnGroup::Calc2d),
    ("calc_extent", ColumnGroup::Calc2d),
    ("calc_eccentricity", ColumnGroup::Calc2d),
    ("calc_solidity", ColumnGroup::Calc2d),
    ("calc_circularity", ColumnGroup::Calc2d),
    ("calc_stretch_ratio", ColumnGroup::Calc2d),
];

pub const STAT_SUFFIXES: [&str; 7] = ["mean", "median", "sd", "min", "max", "skew", "kurt"];

/// The 16 lesion-level columns: 6 lumen, 9 calcification, calc percentage.
pub const LESION_3D: [(&str, ColumnGroup); 16] = [
    ("lumen_volume", ColumnGroup::Lumen3d),
    ("lumen_equiv_diameter", ColumnGroup::Lumen3d),
    ("lumen_extent_3d", ColumnGroup::Lumen3d),
    ("lumen_convex_volume", ColumnGroup::Lumen3d),
    ("lumen_solidity_3d", ColumnGroup::Lumen3d),
    ("lumen_surface_area", ColumnGroup::Lumen3d),
    ("calc_volume", ColumnGroup::Calc3d),
    ("calc_volume_index", ColumnGroup::Calc3d),
    ("calc_length", ColumnGroup::Calc3d),
    ("calc_equiv_diameter", ColumnGroup::Calc3d),
    ("calc_extent_3d", ColumnGroup::Calc3d),
    ("calc_convex_volume", ColumnGroup::Calc3d),
    ("calc_solidity_3d", ColumnGroup::Calc3d),
    ("calc_surface_area", ColumnGroup::Calc3d),
    ("calc_num_deposits", ColumnGroup::Calc3d),
    ("calc_pct", ColumnGroup::Calc3d),
];

pub const PHENOTYPE_COLUMNS: [&str; 3] =
    ["phenotype_nodule", "phenotype_protrusion", "phenotype_sheet"];

/// Base features whose values carry area or volume units.
const EXEMPT_BASES: [&str; 9] = [
    "lumen_area",
    "calc_area",
    "lumen_volume",
    "lumen_convex_volume",
    "lumen_surface_area",
    "calc_volume",
    "calc_volume_index",
    "calc_convex_volume",
    "calc_surface_area",
];

/// Exemption is decided on the base feature name, stat suffixes stripped.
pub fn is_exempt(column: &str) -> bool {
    let base = STAT_SUFFIXES
        .iter()
        .find_map(|suffix| column.strip_suffix(&format!("_{suffix}")))
        .unwrap_or(column);
    EXEMPT_BASES.contains(&base)
}

pub fn build_schema(mode: Mode, include_phenotype: bool) -> FeatureSchema {
    let mut columns = Vec::new();
    match mode {
        Mode::Frame => {
            for (name, group) in BASE_2D {
                columns.push(ColumnDef { name: name.to_string(), group, exempt: is_exempt(name) });
            }
        }
        Mode::Segmental | Mode::Lesion => {
            for (base, group) in BASE_2D {
                for suffix in STAT_SUFFIXES {
                    let name = format!("{base}_{suffix}");
                    let exempt = is_exempt(&name);
                    columns.push(ColumnDef { name, group, exempt });
                }
            }
            for (name, group) in LESION_3D {
                columns.push(ColumnDef { name: name.to_string(), group, exempt: is_exempt(name) });
            }
        }
    }
    if include_phenotype {
        for name in PHENOTYPE_COLUMNS {
            columns.push(ColumnDef {
                name: name.to_string(),
                group: ColumnGroup::Phenotype,
                exempt: false,
            });
        }
    }
    FeatureSchema { mode, include_phenotype, columns }
}

/// Hand-picked subset: calcification angle, thickness, depth and area, lumen
/// area and stenosis, plus the total volumes and calcification percentage.
const CLE_2D: [&str; 6] = [
    "lumen_area",
    "lumen_pct_stenosis",
    "calc_arc_angle",
    "calc_thickness",
    "calc_depth",
    "calc_area",
];

pub fn cle_columns(mode: Mode) -> Vec<String> {
    match mode {
        Mode::Frame => CLE_2D.iter().map(|s| s.to_string()).collect(),
        Mode::Segmental | Mode::Lesion => {
            let mut out = Vec::new();
            for base in CLE_2D {
                for suffix in STAT_SUFFIXES {
                    out.push(format!("{base}_{suffix}"));
                }
            }
            out.push("lumen_volume".to_string());
            out.push("calc_volume".to_string());
            out.push("calc_pct".to_string());
            out
        }
    }
}

/// Content address of a column layout; models embed it and refuse feature
/// matrices whose fingerprint differs.
pub fn schema_fingerprint(mode: Mode, columns: &[String]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(mode.to_string().as_bytes());
    for c in columns {
        hasher.update([0u8]);
        hasher.update(c.as_bytes());
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_schema_has_24_columns() {
        assert_eq!(build_schema(Mode::Frame, false).columns.len(), 24);
        assert_eq!(build_schema(Mode::Frame, true).columns.len(), 27);
    }

    #[test]
    fn segmental_schema_has_184_columns() {
        let schema = build_schema(Mode::Segmental, false);
        assert_eq!(schema.columns.len(), 184);
        assert_eq!(build_schema(Mode::Segmental, true).columns.len(), 187);
        assert_eq!(build_schema(Mode::Lesion, false).columns.len(), 184);
    }

    #[test]
    fn column_names_are_unique() {
        let schema = build_schema(Mode::Segmental, true);
        let mut names = schema.column_names();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 187);
    }

    #[test]
    fn exemption_covers_areas_and_volumes_only() {
        assert!(is_exempt("lumen_area"));
        assert!(is_exempt("lumen_area_mean"));
        assert!(is_exempt("calc_area_kurt"));
        assert!(is_exempt("calc_volume"));
        assert!(is_exempt("calc_surface_area"));
        assert!(!is_exempt("lumen_pct_stenosis"));
        assert!(!is_exempt("lumen_pct_stenosis_mean"));
        assert!(!is_exempt("calc_pct"));
        assert!(!is_exempt("calc_equiv_diameter"));
        assert!(!is_exempt("calc_arc_angle_sd"));
        assert!(!is_exempt("phenotype_sheet"));
    }

    #[test]
    fn cle_subset_sizes() {
        assert_eq!(cle_columns(Mode::Frame).len(), 6);
        assert_eq!(cle_columns(Mode::Segmental).len(), 45);
        let seg = build_schema(Mode::Segmental, false).column_names();
        for c in cle_columns(Mode::Segmental) {
            assert!(seg.contains(&c), "{c} missing from segmental schema");
        }
    }

    #[test]
    fn fingerprint_distinguishes_layouts() {
        let a = build_schema(Mode::Segmental, false).column_names();
        let b = build_schema(Mode::Frame, false).column_names();
        assert_ne!(schema_fingerprint(Mode::Segmental, &a), schema_fingerprint(Mode::Frame, &b));
        let mut swapped = a.clone();
        swapped.swap(0, 1);
        assert_ne!(
            schema_fingerprint(Mode::Segmental, &a),
            schema_fingerprint(Mode::Segmental, &swapped)
        );
        assert_eq!(
            schema_fingerprint(Mode::Segmental, &a),
            schema_fingerprint(Mode::Segmental, &a)
        );
    }
}
