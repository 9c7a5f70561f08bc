//! Actuator catalog: per-actuator geometry records with optional measured
//! rest lengths at the standard test pressures.
//!
//! Rest lengths that were never measured are interpolated linearly between
//! the unpressurized initial length and the fully-pressurized minimum
//! length. That is a documented placeholder, not physics: real actuators
//! contract nonlinearly with pressure, so supply measured columns when
//! available.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// The pressures [psi] the catalog stores explicit rest-length columns for.
pub const CATALOG_PRESSURES_PSI: [f64; 4] = [5.0, 10.0, 15.0, 20.0];

const COLUMNS: [&str; 10] = [
    "id",
    "mesh_diameter_mm",
    "initial_length_mm",
    "min_length_mm",
    "sheath_material",
    "sheath_diameter_mm",
    "rest_length_5psi_mm",
    "rest_length_10psi_mm",
    "rest_length_15psi_mm",
    "rest_length_20psi_mm",
];

/// One catalog row.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorRecord {
    pub id: String,
    pub mesh_diameter_mm: f64,
    /// Unpressurized initial length IL.
    pub initial_length_mm: f64,
    /// Fully-pressurized minimum length ML.
    pub min_length_mm: f64,
    /// "none" marks a plain (unsheathed) actuator.
    pub sheath_material: String,
    pub sheath_diameter_mm: Option<f64>,
    /// Measured rest lengths, keyed by whole-psi pressure.
    pub rest_lengths_mm: BTreeMap<u32, f64>,
}

impl ActuatorRecord {
    pub fn has_sheath(&self) -> bool {
        self.sheath_material != "none"
    }

    /// Pressurized rest length at `pressure_psi`: the measured column when
    /// one exists, otherwise the linear placeholder between IL (0 psi) and
    /// ML (20 psi).
    pub fn rest_length_at(&self, pressure_psi: f64) -> Result<f64> {
        if !(pressure_psi.is_finite() && pressure_psi >= 0.0) {
            bail!("pressure must be finite and >= 0, got {pressure_psi}");
        }
        let whole = pressure_psi.round();
        if (pressure_psi - whole).abs() < 1e-9 {
            if let Some(&l) = self.rest_lengths_mm.get(&(whole as u32)) {
                return Ok(l);
            }
        }
        let il = self.initial_length_mm;
        let ml = self.min_length_mm;
        Ok(il + (ml - il) * pressure_psi / 20.0)
    }

    /// Largest relative contraction this actuator reaches, in percent.
    pub fn max_contraction_ratio(&self) -> Result<f64> {
        Ok(vma_core::protocol::contraction_ratio(
            self.initial_length_mm,
            self.min_length_mm,
        )?)
    }
}

/// A loaded catalog with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub records: Vec<ActuatorRecord>,
}

impl Catalog {
    pub fn get(&self, id: &str) -> Option<&ActuatorRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }
}

fn parse_f64(raw: &str, row: usize, column: &str, path: &Path) -> Result<f64> {
    raw.trim()
        .parse()
        .with_context(|| format!("{}: row {row}, column {column}: {raw:?} is not a number", path.display()))
}

fn parse_opt_f64(raw: &str, row: usize, column: &str, path: &Path) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    Ok(Some(parse_f64(raw, row, column, path)?))
}

/// Loads and validates a catalog CSV.
pub fn load_catalog(path: &Path) -> Result<Catalog> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening catalog {}", path.display()))?;
    let headers: Vec<&str> = rdr.headers()?.iter().collect();
    if headers != COLUMNS {
        bail!(
            "{}: catalog header mismatch: expected [{}], found [{}]",
            path.display(),
            COLUMNS.join(", "),
            headers.join(", ")
        );
    }
    let mut records: Vec<ActuatorRecord> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {i}", path.display()))?;
        let get = |idx: usize| record.get(idx).unwrap_or("");
        let id = get(0).trim().to_string();
        if id.is_empty() {
            bail!("{}: row {i}: empty id", path.display());
        }
        if records.iter().any(|r| r.id == id) {
            bail!("{}: duplicate actuator id {id:?}", path.display());
        }
        let rec = ActuatorRecord {
            id,
            mesh_diameter_mm: parse_f64(get(1), i, "mesh_diameter_mm", path)?,
            initial_length_mm: parse_f64(get(2), i, "initial_length_mm", path)?,
            min_length_mm: parse_f64(get(3), i, "min_length_mm", path)?,
            sheath_material: {
                let m = get(4).trim();
                if m.is_empty() {
                    bail!("{}: row {i}: empty sheath_material (use \"none\")", path.display());
                }
                m.to_string()
            },
            sheath_diameter_mm: parse_opt_f64(get(5), i, "sheath_diameter_mm", path)?,
            rest_lengths_mm: {
                let mut m = BTreeMap::new();
                for (j, &p) in CATALOG_PRESSURES_PSI.iter().enumerate() {
                    if let Some(l) = parse_opt_f64(get(6 + j), i, COLUMNS[6 + j], path)? {
                        m.insert(p as u32, l);
                    }
                }
                m
            },
        };
        if !(rec.min_length_mm > 0.0 && rec.initial_length_mm >= rec.min_length_mm) {
            bail!(
                "{}: actuator {}: need initial_length_mm >= min_length_mm > 0, got {} and {}",
                path.display(),
                rec.id,
                rec.initial_length_mm,
                rec.min_length_mm
            );
        }
        if !(rec.mesh_diameter_mm > 0.0) {
            bail!("{}: actuator {}: mesh diameter must be positive", path.display(), rec.id);
        }
        records.push(rec);
    }
    if records.is_empty() {
        bail!("{}: catalog has no records", path.display());
    }
    Ok(Catalog { records })
}
