//! File schemas and atomic output.
//!
//! Every CSV starts with `# key=value` metadata comment lines, then a
//! header row, then data rows (UTF-8, LF, '.' decimal). Floats are written
//! with the shortest representation that parses back to the same bits, so
//! numeric content survives write/read cycles exactly. Readers check the
//! header verbatim and name the offending column on schema violations.
//!
//! Strain profiles are stored as breakpoints; segment durations and rates
//! are regenerated on read, so a profile file is value-faithful rather
//! than a stored copy of the in-memory representation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use vma_core::analysis::{FvCurve, FvGroup, FvPoint, RampDirection};
use vma_core::{ForceTrace, StrainProfile, TraceMeta, TraceSample};

/// Leading `# key=value` lines of a file, in key order.
pub type Metadata = BTreeMap<String, String>;

/// Writes bytes to `path` atomically (temp file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("creating temp file next to {}", path.display()))?;
    std::fs::write(tmp.path(), content)
        .with_context(|| format!("writing temp file for {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

/// Shortest decimal form that parses back to the identical f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn push_metadata(out: &mut String, meta: &Metadata) {
    for (k, v) in meta {
        writeln!(out, "# {k}={v}").expect("string write");
    }
}

/// Reads the leading `# key=value` block of a file.
pub fn read_metadata(path: &Path) -> Result<Metadata> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut meta = Metadata::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = rest.trim().split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(meta)
}

fn meta_f64(meta: &Metadata, key: &str, path: &Path) -> Result<f64> {
    let raw = meta
        .get(key)
        .ok_or_else(|| anyhow!("{}: missing metadata key {key}", path.display()))?;
    raw.parse()
        .with_context(|| format!("{}: metadata {key}={raw} is not a number", path.display()))
}

fn meta_str<'m>(meta: &'m Metadata, key: &str, path: &Path) -> Result<&'m str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| anyhow!("{}: missing metadata key {key}", path.display()))
}

/// CSV reader positioned after the comment block with the header verified
/// against `expected` exactly.
fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?;
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        bail!(
            "{}: header mismatch: expected columns [{}], found [{}]",
            path.display(),
            expected.join(", "),
            found.join(", ")
        );
    }
    Ok(rdr)
}

fn field_f64(record: &csv::StringRecord, idx: usize, name: &str, path: &Path) -> Result<f64> {
    let raw = record
        .get(idx)
        .ok_or_else(|| anyhow!("{}: row too short at column {name}", path.display()))?;
    raw.parse()
        .with_context(|| format!("{}: column {name}: {raw:?} is not a number", path.display()))
}

const TRACE_COLUMNS: [&str; 4] = ["time_s", "extension_mm", "strain", "force_N"];
const TRACE_COLUMNS_P: [&str; 5] = ["time_s", "extension_mm", "strain", "force_N", "pressure_psi"];

/// Writes a force trace; the pressure column appears only when every
/// sample carries a pressure reading.
pub fn write_trace(path: &Path, trace: &ForceTrace) -> Result<()> {
    let with_pressure = match trace.samples.iter().filter(|s| s.pressure_psi.is_some()).count() {
        0 => false,
        n if n == trace.samples.len() => true,
        n => bail!(
            "trace has pressure on {n} of {} samples; need all or none",
            trace.samples.len()
        ),
    };
    let mut out = String::new();
    let m = &trace.meta;
    let mut meta = Metadata::new();
    meta.insert("actuator_id".into(), m.actuator_id.clone());
    meta.insert(
        "rest_length_unpressurized_mm".into(),
        fmt_f64(m.rest_length_unpressurized_mm),
    );
    meta.insert(
        "rest_length_pressurized_mm".into(),
        fmt_f64(m.rest_length_pressurized_mm),
    );
    meta.insert("pressure_psi".into(), fmt_f64(m.pressure_psi));
    meta.insert("sample_period_s".into(), fmt_f64(m.sample_period_s));
    push_metadata(&mut out, &meta);
    let header: &[&str] = if with_pressure { &TRACE_COLUMNS_P } else { &TRACE_COLUMNS };
    out.push_str(&header.join(","));
    out.push('\n');
    for s in &trace.samples {
        out.push_str(&fmt_f64(s.time));
        out.push(',');
        out.push_str(&fmt_f64(s.extension_mm));
        out.push(',');
        out.push_str(&fmt_f64(s.strain));
        out.push(',');
        out.push_str(&fmt_f64(s.force));
        if let Some(p) = s.pressure_psi {
            out.push(',');
            out.push_str(&fmt_f64(p));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_trace(path: &Path) -> Result<ForceTrace> {
    let meta = read_metadata(path)?;
    let trace_meta = TraceMeta::new(
        meta_str(&meta, "actuator_id", path)?,
        meta_f64(&meta, "rest_length_unpressurized_mm", path)?,
        meta_f64(&meta, "rest_length_pressurized_mm", path)?,
        meta_f64(&meta, "pressure_psi", path)?,
        meta_f64(&meta, "sample_period_s", path)?,
    )?;
    // Peek the header to decide which schema variant this file uses.
    let with_pressure = {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .with_context(|| format!("opening {}", path.display()))?;
        rdr.headers()?.len() == TRACE_COLUMNS_P.len()
    };
    let expected: &[&str] = if with_pressure { &TRACE_COLUMNS_P } else { &TRACE_COLUMNS };
    let mut rdr = open_csv(path, expected)?;
    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("{}: data row {i}", path.display()))?;
        samples.push(TraceSample {
            time: field_f64(&record, 0, "time_s", path)?,
            extension_mm: field_f64(&record, 1, "extension_mm", path)?,
            strain: field_f64(&record, 2, "strain", path)?,
            force: field_f64(&record, 3, "force_N", path)?,
            pressure_psi: if with_pressure {
                Some(field_f64(&record, 4, "pressure_psi", path)?)
            } else {
                None
            },
        });
    }
    Ok(ForceTrace::new(trace_meta, samples)?)
}

/// Experiment context a profile file carries for downstream simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMeta {
    pub actuator_id: String,
    pub rest_length_unpressurized_mm: f64,
    pub rest_length_pressurized_mm: f64,
    pub pressure_psi: f64,
    pub sample_rate_hz: f64,
}

impl ProfileMeta {
    pub fn trace_meta(&self) -> Result<TraceMeta> {
        Ok(TraceMeta::new(
            self.actuator_id.clone(),
            self.rest_length_unpressurized_mm,
            self.rest_length_pressurized_mm,
            self.pressure_psi,
            1.0 / self.sample_rate_hz,
        )?)
    }
}

const PROFILE_COLUMNS: [&str; 2] = ["time_s", "strain"];

/// Writes a strain profile as its breakpoint polyline.
pub fn write_profile(path: &Path, profile: &StrainProfile, meta: &ProfileMeta) -> Result<()> {
    let mut out = String::new();
    let mut md = Metadata::new();
    md.insert("actuator_id".into(), meta.actuator_id.clone());
    md.insert(
        "rest_length_unpressurized_mm".into(),
        fmt_f64(meta.rest_length_unpressurized_mm),
    );
    md.insert(
        "rest_length_pressurized_mm".into(),
        fmt_f64(meta.rest_length_pressurized_mm),
    );
    md.insert("pressure_psi".into(), fmt_f64(meta.pressure_psi));
    md.insert("sample_rate_hz".into(), fmt_f64(meta.sample_rate_hz));
    push_metadata(&mut out, &md);
    out.push_str(&PROFILE_COLUMNS.join(","));
    out.push('\n');
    for (t, strain) in profile.breakpoints() {
        out.push_str(&fmt_f64(t));
        out.push(',');
        out.push_str(&fmt_f64(strain));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_profile(path: &Path) -> Result<(StrainProfile, ProfileMeta)> {
    let meta = read_metadata(path)?;
    let pm = ProfileMeta {
        actuator_id: meta_str(&meta, "actuator_id", path)?.to_string(),
        rest_length_unpressurized_mm: meta_f64(&meta, "rest_length_unpressurized_mm", path)?,
        rest_length_pressurized_mm: meta_f64(&meta, "rest_length_pressurized_mm", path)?,
        pressure_psi: meta_f64(&meta, "pressure_psi", path)?,
        sample_rate_hz: meta_f64(&meta, "sample_rate_hz", path)?,
    };
    if !(pm.sample_rate_hz.is_finite() && pm.sample_rate_hz > 0.0) {
        bail!("{}: sample_rate_hz must be positive", path.display());
    }
    let mut rdr = open_csv(path, &PROFILE_COLUMNS)?;
    let mut points = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("{}: data row {i}", path.display()))?;
        points.push((
            field_f64(&record, 0, "time_s", path)?,
            field_f64(&record, 1, "strain", path)?,
        ));
    }
    let profile = StrainProfile::from_breakpoints(&points, 1.0 / pm.sample_rate_hz)?;
    Ok((profile, pm))
}

const FV_COLUMNS: [&str; 6] = [
    "pressure_psi",
    "shortening_velocity_per_s",
    "fv_mean",
    "fv_std",
    "n",
    "direction",
];
const FV_POINT_COLUMNS: [&str; 5] = [
    "pressure_psi",
    "shortening_velocity_per_s",
    "fv",
    "direction",
    "source_ramp",
];

/// The sibling file holding a curve's raw per-ramp points.
pub fn points_path(fv_path: &Path) -> PathBuf {
    let stem = fv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "fv".to_string());
    let ext = fv_path
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    fv_path.with_file_name(format!("{stem}_points.{ext}"))
}

fn fv_metadata(curve: &FvCurve) -> Metadata {
    let mut md = Metadata::new();
    md.insert("actuator_id".into(), curve.actuator_id.clone());
    md.insert("pressure_psi".into(), fmt_f64(curve.pressure_psi));
    md.insert("d_eps".into(), fmt_f64(curve.d_eps));
    md.insert("eps0".into(), fmt_f64(curve.eps0));
    md.insert(
        "rest_length_unpressurized_mm".into(),
        fmt_f64(curve.rest_length_unpressurized_mm),
    );
    md.insert(
        "rest_length_pressurized_mm".into(),
        fmt_f64(curve.rest_length_pressurized_mm),
    );
    md
}

fn direction_of_shortening_velocity(v: f64) -> RampDirection {
    // Shortening-positive convention: a negative shortening velocity is an
    // extension ramp.
    if v < 0.0 {
        RampDirection::Extend
    } else {
        RampDirection::Shorten
    }
}

/// Writes an extracted curve: aggregated groups at `path`, raw points in
/// the `_points` sibling.
pub fn write_fv_curve(path: &Path, curve: &FvCurve) -> Result<()> {
    let md = fv_metadata(curve);

    let mut out = String::new();
    push_metadata(&mut out, &md);
    out.push_str(&FV_COLUMNS.join(","));
    out.push('\n');
    for g in &curve.groups {
        out.push_str(&fmt_f64(g.pressure_psi));
        out.push(',');
        out.push_str(&fmt_f64(g.v_mean));
        out.push(',');
        out.push_str(&fmt_f64(g.fv_mean));
        out.push(',');
        out.push_str(&fmt_f64(g.fv_std));
        out.push(',');
        let _ = write!(out, "{}", g.n);
        out.push(',');
        out.push_str(g.direction.as_str());
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())?;

    let mut pts = String::new();
    push_metadata(&mut pts, &md);
    pts.push_str(&FV_POINT_COLUMNS.join(","));
    pts.push('\n');
    for p in &curve.points {
        pts.push_str(&fmt_f64(p.pressure_psi));
        pts.push(',');
        pts.push_str(&fmt_f64(p.v));
        pts.push(',');
        pts.push_str(&fmt_f64(p.fv));
        pts.push(',');
        pts.push_str(direction_of_shortening_velocity(p.v).as_str());
        let _ = write!(pts, ",{}", p.source_ramp);
        pts.push('\n');
    }
    write_atomic(&points_path(path), pts.as_bytes())
}

fn parse_direction(raw: &str, path: &Path) -> Result<RampDirection> {
    match raw {
        "extend" => Ok(RampDirection::Extend),
        "shorten" => Ok(RampDirection::Shorten),
        other => bail!("{}: column direction: unknown value {other:?}", path.display()),
    }
}

/// Reads an extracted curve. The `_points` sibling is optional; without it
/// the curve carries groups only.
pub fn read_fv_curve(path: &Path) -> Result<FvCurve> {
    let meta = read_metadata(path)?;
    let rest_length_pressurized_mm = meta_f64(&meta, "rest_length_pressurized_mm", path)?;
    let mut curve = FvCurve {
        actuator_id: meta_str(&meta, "actuator_id", path)?.to_string(),
        pressure_psi: meta_f64(&meta, "pressure_psi", path)?,
        d_eps: meta_f64(&meta, "d_eps", path)?,
        eps0: meta_f64(&meta, "eps0", path)?,
        rest_length_unpressurized_mm: meta_f64(&meta, "rest_length_unpressurized_mm", path)?,
        rest_length_pressurized_mm,
        points: Vec::new(),
        groups: Vec::new(),
    };
    let mut rdr = open_csv(path, &FV_COLUMNS)?;
    for (i, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("{}: data row {i}", path.display()))?;
        let v_mean = field_f64(&record, 1, "shortening_velocity_per_s", path)?;
        let n_raw = record.get(4).unwrap_or("");
        let n: usize = n_raw
            .parse()
            .with_context(|| format!("{}: column n: {n_raw:?} is not a count", path.display()))?;
        curve.groups.push(FvGroup {
            pressure_psi: field_f64(&record, 0, "pressure_psi", path)?,
            // The file stores the measured mean velocity; the commanded
            // machine speed is its magnitude mapped back through the
            // normalization length.
            nominal_speed_mm_s: v_mean.abs() * rest_length_pressurized_mm,
            direction: parse_direction(record.get(5).unwrap_or(""), path)?,
            v_mean,
            fv_mean: field_f64(&record, 2, "fv_mean", path)?,
            fv_std: field_f64(&record, 3, "fv_std", path)?,
            n,
        });
    }

    let pts = points_path(path);
    if pts.exists() {
        let mut rdr = open_csv(&pts, &FV_POINT_COLUMNS)?;
        for (i, record) in rdr.records().enumerate() {
            let record = record.with_context(|| format!("{}: data row {i}", pts.display()))?;
            let source_raw = record.get(4).unwrap_or("");
            curve.points.push(FvPoint {
                pressure_psi: field_f64(&record, 0, "pressure_psi", &pts)?,
                v: field_f64(&record, 1, "shortening_velocity_per_s", &pts)?,
                fv: field_f64(&record, 2, "fv", &pts)?,
                source_ramp: source_raw.parse().with_context(|| {
                    format!("{}: column source_ramp: {source_raw:?} is not an index", pts.display())
                })?,
            });
        }
    }
    Ok(curve)
}

const ANALYTIC_COLUMNS: [&str; 3] = ["shortening_velocity_per_s", "fv", "dfv"];

/// One row of an analytic curve file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticRow {
    /// Shortening-positive normalized velocity [1/s].
    pub v: f64,
    pub fv: f64,
    pub dfv: f64,
}

/// Writes a closed-form curve sampled on a velocity grid.
pub fn write_analytic_curve(path: &Path, meta: &Metadata, rows: &[AnalyticRow]) -> Result<()> {
    let mut out = String::new();
    push_metadata(&mut out, meta);
    out.push_str(&ANALYTIC_COLUMNS.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&fmt_f64(r.v));
        out.push(',');
        out.push_str(&fmt_f64(r.fv));
        out.push(',');
        out.push_str(&fmt_f64(r.dfv));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_analytic_curve(path: &Path) -> Result<(Metadata, Vec<AnalyticRow>)> {
    let meta = read_metadata(path)?;
    let mut rdr = open_csv(path, &ANALYTIC_COLUMNS)?;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("{}: data row {i}", path.display()))?;
        rows.push(AnalyticRow {
            v: field_f64(&record, 0, "shortening_velocity_per_s", path)?,
            fv: field_f64(&record, 1, "fv", path)?,
            dfv: field_f64(&record, 2, "dfv", path)?,
        });
    }
    Ok((meta, rows))
}

const PRESSURE_COLUMNS: [&str; 2] = ["time_s", "pressure_psi"];

pub fn write_pressure_log(path: &Path, series: &[(f64, f64)]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&PRESSURE_COLUMNS.join(","));
    out.push('\n');
    for (t, p) in series {
        out.push_str(&fmt_f64(*t));
        out.push(',');
        out.push_str(&fmt_f64(*p));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_pressure_log(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = open_csv(path, &PRESSURE_COLUMNS)?;
    let mut series = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("{}: data row {i}", path.display()))?;
        series.push((
            field_f64(&record, 0, "time_s", path)?,
            field_f64(&record, 1, "pressure_psi", path)?,
        ));
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vma_core::protocol::{build_protocol, ProtocolConfig};

    fn tmp(name: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        (dir, path)
    }

    fn sample_trace(with_pressure: bool) -> ForceTrace {
        let meta = TraceMeta::new("unit", 94.3, 70.3, 20.0, 0.01).unwrap();
        let samples = (0..50)
            .map(|i| {
                let t = i as f64 * 0.01;
                TraceSample {
                    time: t,
                    strain: 0.3414 + t / 3.0,
                    extension_mm: 24.0 + 70.3 * t / 3.0,
                    force: 1.0 + (t * std::f64::consts::PI).sin() / 7.0,
                    pressure_psi: with_pressure.then_some(20.0 + t / 9.0),
                }
            })
            .collect();
        ForceTrace::new(meta, samples).unwrap()
    }

    #[test]
    fn trace_round_trip_is_bit_exact() {
        for with_pressure in [false, true] {
            let (_d, path) = tmp("trace.csv");
            let trace = sample_trace(with_pressure);
            write_trace(&path, &trace).unwrap();
            let back = read_trace(&path).unwrap();
            assert_eq!(back.meta, trace.meta);
            assert_eq!(back.samples.len(), trace.samples.len());
            for (a, b) in back.samples.iter().zip(&trace.samples) {
                assert!(a.time == b.time && a.strain == b.strain);
                assert!(a.extension_mm == b.extension_mm && a.force == b.force);
                assert!(a.pressure_psi == b.pressure_psi);
            }
            // Writing the read-back trace reproduces the file verbatim.
            let first = std::fs::read(&path).unwrap();
            write_trace(&path, &back).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), first);
        }
    }

    #[test]
    fn mixed_pressure_column_rejected() {
        let mut trace = sample_trace(true);
        trace.samples[3].pressure_psi = None;
        let (_d, path) = tmp("trace.csv");
        let err = write_trace(&path, &trace).unwrap_err();
        assert!(err.to_string().contains("all or none"), "{err}");
    }

    #[test]
    fn trace_header_mismatch_names_columns() {
        let (_d, path) = tmp("trace.csv");
        std::fs::write(&path, "# actuator_id=x\n# rest_length_unpressurized_mm=94.3\n# rest_length_pressurized_mm=70.3\n# pressure_psi=20\n# sample_period_s=0.01\ntime_s,ext,strain,force_N\n0,0,0.3,1\n").unwrap();
        let err = read_trace(&path).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("header mismatch") && msg.contains("extension_mm"), "{msg}");
    }

    #[test]
    fn protocol_profile_round_trips_by_value_and_bytes() {
        let cfg = ProtocolConfig::standard(20.0, 94.3, 70.3);
        let profile = build_protocol(&cfg).unwrap();
        let meta = ProfileMeta {
            actuator_id: "control-2".into(),
            rest_length_unpressurized_mm: 94.3,
            rest_length_pressurized_mm: 70.3,
            pressure_psi: 20.0,
            sample_rate_hz: 100.0,
        };
        let (_d, path) = tmp("profile.csv");
        write_profile(&path, &profile, &meta).unwrap();
        let (back, back_meta) = read_profile(&path).unwrap();
        assert_eq!(back_meta, meta);
        assert_eq!(back.breakpoints(), profile.breakpoints());
        let first = std::fs::read(&path).unwrap();
        write_profile(&path, &back, &back_meta).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn fv_round_trip_preserves_groups_and_points() {
        let curve = FvCurve {
            actuator_id: "control-2".into(),
            pressure_psi: 20.0,
            d_eps: 2.0 / 70.3,
            eps0: 24.0 / 70.3,
            rest_length_unpressurized_mm: 94.3,
            rest_length_pressurized_mm: 70.3,
            points: vec![
                FvPoint { v: -2.0 / 70.3, fv: 1.25, pressure_psi: 20.0, source_ramp: 0 },
                FvPoint { v: 2.0 / 70.3, fv: 0.75, pressure_psi: 20.0, source_ramp: 1 },
            ],
            groups: vec![
                FvGroup {
                    pressure_psi: 20.0,
                    nominal_speed_mm_s: 2.0,
                    direction: RampDirection::Extend,
                    v_mean: -2.0 / 70.3,
                    fv_mean: 1.25,
                    fv_std: 0.0,
                    n: 1,
                },
                FvGroup {
                    pressure_psi: 20.0,
                    nominal_speed_mm_s: 2.0,
                    direction: RampDirection::Shorten,
                    v_mean: 2.0 / 70.3,
                    fv_mean: 0.75,
                    fv_std: 0.0,
                    n: 1,
                },
            ],
        };
        let (_d, path) = tmp("fv.csv");
        write_fv_curve(&path, &curve).unwrap();
        assert!(points_path(&path).exists());
        let back = read_fv_curve(&path).unwrap();
        assert_eq!(back.points, curve.points);
        for (a, b) in back.groups.iter().zip(&curve.groups) {
            assert!(a.v_mean == b.v_mean && a.fv_mean == b.fv_mean && a.fv_std == b.fv_std);
            assert_eq!(a.n, b.n);
            assert_eq!(a.direction, b.direction);
            // Nominal speed is reconstructed from the measured mean.
            assert!((a.nominal_speed_mm_s - b.nominal_speed_mm_s).abs() < 1e-9);
        }
        assert!(back.d_eps == curve.d_eps && back.eps0 == curve.eps0);

        // Groups alone still load when the points sibling is absent.
        std::fs::remove_file(points_path(&path)).unwrap();
        let groups_only = read_fv_curve(&path).unwrap();
        assert!(groups_only.points.is_empty());
        assert_eq!(groups_only.groups.len(), 2);
    }

    #[test]
    fn analytic_and_pressure_files_round_trip() {
        let (_d, path) = tmp("curve.csv");
        let mut meta = Metadata::new();
        meta.insert("asymptote".into(), fmt_f64(0.4));
        let rows = vec![
            AnalyticRow { v: -1.0, fv: 3.9284822353142307, dfv: 2.5284822353142307 },
            AnalyticRow { v: 1.0, fv: -1.9284822353142307, dfv: -2.5284822353142307 },
        ];
        write_analytic_curve(&path, &meta, &rows).unwrap();
        let (m, r) = read_analytic_curve(&path).unwrap();
        assert_eq!(m.get("asymptote").map(String::as_str), Some("0.4"));
        assert_eq!(r, rows);

        let (_d2, plog) = tmp("pressure.csv");
        let series = vec![(0.0, 0.0), (1.5, 20.0), (3.0, 20.0)];
        write_pressure_log(&plog, &series).unwrap();
        assert_eq!(read_pressure_log(&plog).unwrap(), series);
    }
}
