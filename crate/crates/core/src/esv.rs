//! Benefit-transfer ESV coefficients: the per-class table, the regenerative
//! crop uplift, and min-max normalization to [0, 1].

use thiserror::Error;

use crate::grid::{LandClass, NUM_CLASSES, NUM_MODIFIABLE};

/// Base ESV coefficients in USD/ha/yr, table order. The crops value is the
/// un-uplifted base; uplift is applied at table construction.
pub const DEFAULT_RAW_ESV: [f64; NUM_CLASSES] =
    [554.0, 238.0, 1136.0, 246.0, 295.0, 0.0, 0.0, 0.0, 184.0];

/// Regenerative-agriculture multiplier on the crops coefficient in the
/// headline configuration.
pub const HEADLINE_REGEN_UPLIFT: f64 = 1.35;

#[derive(Debug, Error, PartialEq)]
pub enum EsvError {
    #[error("regenerative uplift must be positive, got {0}")]
    NonPositiveUplift(f64),
    #[error("ESV for {0} must be non-negative, got {1}")]
    NegativeValue(&'static str, f64),
    #[error("degenerate ESV table: all classes share the same value")]
    DegenerateTable,
    #[error("ESV override line {line}: {msg}")]
    Override { line: usize, msg: String },
}

/// Per-class ESV coefficients with the uplift applied and min-max
/// normalized values. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct EsvTable {
    raw: [f64; NUM_CLASSES],
    regen_uplift: f64,
    effective: [f64; NUM_CLASSES],
    normalized: [f64; NUM_CLASSES],
    normalized_modifiable: [f64; NUM_MODIFIABLE],
    uplift_sets_maximum: bool,
}

/// Build the default table with the given crops uplift.
pub fn build_esv_table(regen_uplift: f64) -> Result<EsvTable, EsvError> {
    EsvTable::with_raw(DEFAULT_RAW_ESV, regen_uplift)
}

impl EsvTable {
    pub fn with_raw(raw: [f64; NUM_CLASSES], regen_uplift: f64) -> Result<EsvTable, EsvError> {
        if !(regen_uplift > 0.0) {
            return Err(EsvError::NonPositiveUplift(regen_uplift));
        }
        for (k, &v) in raw.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(EsvError::NegativeValue(
                    LandClass::from_index(k).unwrap().name(),
                    v,
                ));
            }
        }
        let mut effective = raw;
        effective[LandClass::Crops.index()] *= regen_uplift;

        let max = effective.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = effective.iter().copied().fold(f64::INFINITY, f64::min);
        if max <= min {
            return Err(EsvError::DegenerateTable);
        }
        let span = max - min;
        let mut normalized = [0.0; NUM_CLASSES];
        for k in 0..NUM_CLASSES {
            normalized[k] = (effective[k] - min) / span;
        }
        let mut normalized_modifiable = [0.0; NUM_MODIFIABLE];
        for (k, &class) in LandClass::MODIFIABLE.iter().enumerate() {
            normalized_modifiable[k] = normalized[class.index()];
        }
        // The uplift is meant to re-rank modifiable classes, not to move the
        // normalization anchor; flag it when it does.
        let uplift_sets_maximum = effective[LandClass::Crops.index()] >= max
            && raw[LandClass::Crops.index()] < max;
        Ok(EsvTable {
            raw,
            regen_uplift,
            effective,
            normalized,
            normalized_modifiable,
            uplift_sets_maximum,
        })
    }

    pub fn raw(&self, class: LandClass) -> f64 {
        self.raw[class.index()]
    }

    /// Raw value with the crops uplift applied.
    pub fn effective(&self, class: LandClass) -> f64 {
        self.effective[class.index()]
    }

    pub fn normalized(&self, class: LandClass) -> f64 {
        self.normalized[class.index()]
    }

    /// Normalized coefficient by modifiable channel index.
    #[inline]
    pub fn normalized_modifiable(&self, k: usize) -> f64 {
        self.normalized_modifiable[k]
    }

    pub fn regen_uplift(&self) -> f64 {
        self.regen_uplift
    }

    /// True when the uplifted crops coefficient has become the normalization
    /// maximum; callers surface this as a run-metadata warning.
    pub fn uplift_sets_maximum(&self) -> bool {
        self.uplift_sets_maximum
    }
}

/// Apply a `class_name,raw_value` CSV over the default raw table. Lines that
/// are empty or start with `#` are skipped.
pub fn parse_overrides_csv(text: &str) -> Result<[f64; NUM_CLASSES], EsvError> {
    let mut raw = DEFAULT_RAW_ESV;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (name, value) = trimmed.split_once(',').ok_or_else(|| EsvError::Override {
            line: line_no,
            msg: "expected 'class_name,raw_value'".into(),
        })?;
        let class = LandClass::parse(name).ok_or_else(|| EsvError::Override {
            line: line_no,
            msg: format!("unknown class '{}'", name.trim()),
        })?;
        let value: f64 = value.trim().parse().map_err(|_| EsvError::Override {
            line: line_no,
            msg: format!("invalid value '{}'", value.trim()),
        })?;
        if !(value >= 0.0) {
            return Err(EsvError::Override {
                line: line_no,
                msg: format!("negative value {}", value),
            });
        }
        raw[class.index()] = value;
    }
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn headline_normalization_matches_printed_values() {
        let table = build_esv_table(HEADLINE_REGEN_UPLIFT).unwrap();
        // 246 * 1.35 = 332.1 carried at full precision; the anchor is the
        // flooded/wetland value 1136.
        assert!(close(table.effective(LandClass::Crops), 332.1, 1e-9));
        assert!(close(table.normalized(LandClass::Crops), 332.1 / 1136.0, 1e-12));
        assert!(close(table.normalized(LandClass::Crops), 0.292, 5e-4));
        assert!(close(table.normalized(LandClass::BuiltArea), 0.260, 5e-4));
        assert!(close(table.normalized(LandClass::Trees), 0.210, 5e-4));
        assert!(close(table.normalized(LandClass::Rangeland), 0.162, 5e-4));
        assert_eq!(table.normalized(LandClass::BareGround), 0.0);
        assert!(!table.uplift_sets_maximum());
    }

    #[test]
    fn modifiable_ordering_under_uplift() {
        let table = build_esv_table(HEADLINE_REGEN_UPLIFT).unwrap();
        let crops = table.normalized(LandClass::Crops);
        let built = table.normalized(LandClass::BuiltArea);
        let trees = table.normalized(LandClass::Trees);
        let range = table.normalized(LandClass::Rangeland);
        let bare = table.normalized(LandClass::BareGround);
        assert!(crops > built && built > trees && trees > range && range > bare);
        assert_eq!(bare, 0.0);
    }

    #[test]
    fn base_crops_normalization() {
        let table = build_esv_table(1.0).unwrap();
        assert!(close(table.normalized(LandClass::Crops), 246.0 / 1136.0, 1e-12));
        assert!(close(table.normalized(LandClass::Crops), 0.217, 5e-4));
        assert_eq!(table.normalized(LandClass::BareGround), 0.0);
    }

    #[test]
    fn bounds_and_unique_maximum() {
        for uplift in [0.5, 1.0, 1.35, 2.0, 4.0] {
            let table = build_esv_table(uplift).unwrap();
            let ones: Vec<_> = LandClass::ALL
                .iter()
                .filter(|&&c| table.normalized(c) == 1.0)
                .collect();
            assert_eq!(ones.len(), 1, "uplift {}", uplift);
            assert_eq!(*ones[0], &LandClass::Flooded);
            for &class in &LandClass::ALL {
                let v = table.normalized(class);
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn uplift_beyond_anchor_flagged() {
        let table = build_esv_table(1136.0 / 246.0 + 0.1).unwrap();
        assert!(table.uplift_sets_maximum());
        assert_eq!(table.normalized(LandClass::Crops), 1.0);
    }

    #[test]
    fn invalid_uplift_rejected() {
        assert_eq!(
            build_esv_table(0.0),
            Err(EsvError::NonPositiveUplift(0.0))
        );
        assert!(build_esv_table(-1.0).is_err());
    }

    #[test]
    fn overrides_csv() {
        let raw = parse_overrides_csv("# comment\ntrees, 300\nWater,600\n").unwrap();
        assert_eq!(raw[LandClass::Trees.index()], 300.0);
        assert_eq!(raw[LandClass::Water.index()], 600.0);
        assert_eq!(raw[LandClass::Crops.index()], 246.0);
        assert!(parse_overrides_csv("sand,1").is_err());
        assert!(parse_overrides_csv("trees,abc").is_err());
    }
}
