//! Configuration, raw-data files, result records and the run orchestrator.
//!
//! A run is computed entirely in memory first ([`execute`]); only then are
//! the raw CSVs and the record written ([`write_outputs`]). A failed write
//! removes what it had written, so every file on disk is referenced by a record.

pub mod config;
pub mod record;
pub mod timetags;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use config::{
    load_config, load_config_with, parse_config, CalibrationSettings, DetectorPair, Overrides, Protocol, RunConfig,
};
pub use record::{read_record, Estimates, RawFileRef, ResultRecord, TemperatureEstimate, TOOL_NAME, TOOL_VERSION};
pub use timetags::{export_timetags, import_timetags, read_timetags, timetags_to_csv, write_timetags};

use crate::detection::TimeTag;
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_efficiency_with, fit_delay_differences, fit_dip_center, fit_group_delay, fit_visibility_envelope,
    DelaySample, DipEnvelope,
};
use crate::experiments::calibration::run_detector_calibration_with_tags;
use crate::experiments::{run_pmd_interferogram, run_tof_dispersion, run_two_photon_interferometer, CalibrationCounts};
use crate::source::SpectralShape;
use crate::units::SPEED_OF_LIGHT;

/// A raw file held in memory until the run is written.
#[derive(Clone, Debug)]
pub struct PendingFile {
    pub name: String,
    pub content: String,
    pub data: String,
}

/// A computed run that has not touched the disk yet.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub config: RunConfig,
    pub config_hash: String,
    pub started_utc: String,
    pub estimates: Estimates,
    pub estimation_errors: Vec<String>,
    pub files: Vec<PendingFile>,
}

impl PreparedRun {
    pub fn file_refs(&self) -> Vec<RawFileRef> {
        self.files
            .iter()
            .map(|f| RawFileRef {
                path: f.name.clone(),
                sha256: sha256_hex(f.data.as_bytes()),
                bytes: f.data.len() as u64,
                content: f.content.clone(),
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: ResultRecord,
    pub record_path: PathBuf,
    pub summary: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now_utc() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// File-name stem shared by all outputs of a run.
fn stem(config: &RunConfig, hash: &str) -> String {
    format!("{}-{}-s{}", config.protocol, &hash[..12], config.seed)
}

/// Keeps estimation failures as record entries; anything else aborts the run.
fn soft<T>(r: Result<T>, context: &str, errors: &mut Vec<String>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_estimation_failure() => {
            errors.push(format!("{context}: {e}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn merged_tags(a: &[TimeTag], b: &[TimeTag]) -> Vec<TimeTag> {
    let mut all: Vec<TimeTag> = a.iter().chain(b).copied().collect();
    all.sort_by(|x, y| x.t.cmp(&y.t).then(x.detector.0.cmp(&y.detector.0)));
    all
}

fn swapped(c: &CalibrationCounts) -> CalibrationCounts {
    CalibrationCounts {
        n_a: c.n_b,
        n_b: c.n_a,
        dark_a_hz: c.dark_b_hz,
        dark_b_hz: c.dark_a_hz,
        ..c.clone()
    }
}

/// Simulates and estimates without writing anything.
pub fn execute(config: &RunConfig) -> Result<PreparedRun> {
    config.validate()?;
    let started_utc = now_utc();
    let config_hash = config.hash();
    let stem = stem(config, &config_hash);
    let seed = config.seed;
    let mut errors = Vec::new();
    let mut files = Vec::new();
    let missing = |s: &str| Error::validation(s, "section missing");

    let estimates = match config.protocol {
        Protocol::Tof => {
            let settings = config.tof.as_ref().ok_or_else(|| missing("tof"))?;
            let fiber = config.fiber.as_ref().ok_or_else(|| missing("fiber"))?;
            let det = config.detectors.as_ref().ok_or_else(|| missing("detectors"))?;
            let scan = run_tof_dispersion(&config.source, fiber, (&det.a, &det.b), settings, seed)?;
            files.push(PendingFile {
                name: format!("{stem}.tof_bins.csv"),
                content: "tof_bins".into(),
                data: scan.to_csv(),
            });
            let dispersion = soft(fit_group_delay(&scan), "group-delay fit", &mut errors)?;
            Estimates::Tof {
                singles_local: scan.singles_local,
                singles_remote: scan.singles_remote,
                coincidences: scan.bins.iter().map(|b| b.count).sum(),
                dispersion,
            }
        }
        Protocol::Interferometer => {
            let settings = config.interferometer.as_ref().ok_or_else(|| missing("interferometer"))?;
            let fiber = config.fiber.as_ref().ok_or_else(|| missing("fiber"))?;
            let scans = run_two_photon_interferometer(&config.source, fiber, settings, seed)?;
            let mut temperatures = Vec::new();
            let mut samples = Vec::new();
            for (i, scan) in scans.iter().enumerate() {
                let t = scan.temperature_c.unwrap_or(config.source.temperature_c);
                let name = format!("{stem}.scan-{i}.csv");
                files.push(PendingFile {
                    name: name.clone(),
                    content: format!("interferogram at {t} C"),
                    data: scan.to_csv(),
                });
                let envelope = soft(fit_visibility_envelope(scan), &format!("envelope at {t} C"), &mut errors)?;
                let delay = match &envelope {
                    Some(e) if e.degenerate => {
                        errors.push(format!("envelope at {t} C: visibility is flat over the scan"));
                        None
                    }
                    Some(e) => {
                        // Mirror round trip: Δτ = 2x/c.
                        let to_ps = 2.0 * 1e-6 / SPEED_OF_LIGHT * 1e12;
                        Some(DelaySample {
                            signal_nm: scan.signal_center_nm,
                            idler_nm: scan.idler_center_nm,
                            delay_ps: e.x_opt * to_ps,
                            stderr_ps: e.x_opt_stderr * to_ps,
                        })
                    }
                    None => None,
                };
                samples.extend(delay);
                temperatures.push(TemperatureEstimate {
                    temperature_c: t,
                    signal_center_nm: scan.signal_center_nm,
                    idler_center_nm: scan.idler_center_nm,
                    raw_file: name,
                    envelope,
                    delay,
                });
            }
            let relative_delay = soft(fit_delay_differences(&samples), "relative delay fit", &mut errors)?;
            let lambda0 = match &relative_delay {
                Some(f) => soft(f.lambda0(), "zero-dispersion wavelength", &mut errors)?,
                None => None,
            };
            Estimates::Interferometer {
                temperatures,
                relative_delay,
                lambda0_nm: lambda0.map(|l| l.0),
                lambda0_stderr_nm: lambda0.map(|l| l.1),
            }
        }
        Protocol::Pmd => {
            let settings = config.pmd.as_ref().ok_or_else(|| missing("pmd"))?;
            let sample = config.sample.as_ref().ok_or_else(|| missing("sample"))?;
            let scan = run_pmd_interferogram(&config.source, sample, settings, seed)?;
            files.push(PendingFile {
                name: format!("{stem}.dip_scan.csv"),
                content: "pmd_dip_scan".into(),
                data: scan.to_csv(),
            });
            let envelope = match config.source.spectral_shape {
                SpectralShape::Rectangular => DipEnvelope::Triangular,
                SpectralShape::Gaussian => DipEnvelope::Gaussian,
            };
            Estimates::Pmd {
                dip: soft(fit_dip_center(&scan, envelope), "dip fit", &mut errors)?,
            }
        }
        Protocol::Calibrate => {
            let settings = config.calibration.clone().unwrap_or_default();
            let det = config.detectors.as_ref().ok_or_else(|| missing("detectors"))?;
            let run = run_detector_calibration_with_tags(
                &config.source,
                &det.a,
                &det.b,
                settings.duration_s,
                settings.window_ns,
                seed,
            )?;
            files.push(PendingFile {
                name: format!("{stem}.timetags.csv"),
                content: "timetags".into(),
                data: timetags_to_csv(&merged_tags(&run.tags_a, &run.tags_b)),
            });
            let options = settings.options();
            let eta_a = soft(estimate_efficiency_with(&run.counts, options), "efficiency of A", &mut errors)?;
            let eta_b = soft(
                estimate_efficiency_with(&swapped(&run.counts), options),
                "efficiency of B",
                &mut errors,
            )?;
            Estimates::Calibrate {
                counts: run.counts,
                eta_a,
                eta_b,
            }
        }
    };
    Ok(PreparedRun {
        config: config.clone(),
        config_hash,
        started_utc,
        estimates,
        estimation_errors: errors,
        files,
    })
}

/// Writes the raw files and then the record into `config.output_dir`.
pub fn write_outputs(run: PreparedRun) -> Result<RunOutput> {
    let dir = run.config.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let raw_files = run.file_refs();
    let record = ResultRecord {
        schema: record::RECORD_SCHEMA,
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        protocol: run.config.protocol,
        seed: run.config.seed,
        config_hash: run.config_hash.clone(),
        started_utc: run.started_utc,
        finished_utc: now_utc(),
        estimates: run.estimates,
        estimation_errors: run.estimation_errors,
        raw_files,
        config: run.config,
    };
    let record_path = dir.join(format!("{}.record.json", stem(&record.config, &record.config_hash)));
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        for f in &run.files {
            let p = dir.join(&f.name);
            std::fs::write(&p, &f.data)?;
            written.push(p);
        }
        std::fs::write(&record_path, record.to_json())?;
        Ok(())
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        return Err(e);
    }
    let summary = summarize(&record, &record_path);
    Ok(RunOutput {
        record,
        record_path,
        summary,
    })
}

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    write_outputs(execute(config)?)
}

#[derive(Clone, Debug)]
pub struct ReplayOutput {
    pub output: RunOutput,
    /// Raw files whose hash differs from the original record.
    pub raw_mismatches: Vec<String>,
    pub estimates_match: bool,
}

impl ReplayOutput {
    pub fn reproduced(&self) -> bool {
        self.raw_mismatches.is_empty() && self.estimates_match
    }
}

/// Re-runs the config embedded in a record and compares the outcome with it.
/// Outputs go to `output_dir` if given, else to the directory holding the record.
pub fn replay(record_path: &Path, output_dir: Option<PathBuf>) -> Result<ReplayOutput> {
    let original = read_record(record_path)?;
    let mut config = original.config.clone();
    config.output_dir = match output_dir {
        Some(d) => d,
        None => record_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let prepared = execute(&config)?;
    let fresh = prepared.file_refs();
    let raw_mismatches = original
        .raw_files
        .iter()
        .filter(|old| !fresh.iter().any(|f| f.path == old.path && f.sha256 == old.sha256))
        .map(|old| old.path.clone())
        .collect();
    let estimates_match = prepared.estimates == original.estimates;
    let output = write_outputs(prepared)?;
    Ok(ReplayOutput {
        output,
        raw_mismatches,
        estimates_match,
    })
}

fn fmt_pm(v: f64, e: f64, unit: &str) -> String {
    format!("{v:.4} ± {e:.4} {unit}").trim_end().to_string()
}

/// One-screen human summary of a record.
pub fn summarize(record: &ResultRecord, record_path: &Path) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {}  protocol {}  seed {}",
        record.tool, record.tool_version, record.protocol, record.seed
    );
    let _ = writeln!(s, "config  {}", &record.config_hash[..16]);
    let _ = writeln!(s, "record  {}", record_path.display());
    for f in &record.raw_files {
        let _ = writeln!(s, "raw     {} ({} bytes, sha256 {}…)", f.path, f.bytes, &f.sha256[..12]);
    }
    match &record.estimates {
        Estimates::Tof {
            singles_local,
            singles_remote,
            coincidences,
            dispersion,
        } => {
            let _ = writeln!(s, "singles {singles_local} local, {singles_remote} remote; {coincidences} coincidences");
            if let Some(d) = dispersion {
                let _ = writeln!(s, "λ₀      {}", fmt_pm(d.lambda0_nm, d.lambda0_stderr_nm, "nm"));
                if let Some(s0) = d.slope_s0_ps_per_nm2_km {
                    let _ = writeln!(s, "S₀      {s0:.5} ps/(nm²·km)");
                }
                let _ = writeln!(s, "fit     {} bins, residual rms {:.3} ps", d.bins_used, d.residual_rms_ps);
            }
        }
        Estimates::Interferometer {
            temperatures,
            lambda0_nm,
            lambda0_stderr_nm,
            ..
        } => {
            for t in temperatures {
                match (&t.envelope, &t.delay) {
                    (Some(e), Some(d)) => {
                        let _ = writeln!(
                            s,
                            "T {:>6.2} C  {:.2}/{:.2} nm  x_opt {}  Δτ {:.4} ps  V {:.3}",
                            t.temperature_c,
                            t.signal_center_nm,
                            t.idler_center_nm,
                            fmt_pm(e.x_opt, e.x_opt_stderr, "µm"),
                            d.delay_ps,
                            e.v_max
                        );
                    }
                    _ => {
                        let _ = writeln!(s, "T {:>6.2} C  no envelope", t.temperature_c);
                    }
                }
            }
            if let (Some(l), Some(e)) = (lambda0_nm, lambda0_stderr_nm) {
                let _ = writeln!(s, "λ₀      {}", fmt_pm(*l, *e, "nm"));
            }
        }
        Estimates::Pmd { dip } => {
            if let Some(d) = dip {
                let _ = writeln!(s, "DGD     {}", fmt_pm(d.dgd_fs, d.dgd_stderr_fs, "fs"));
                let _ = writeln!(s, "dip     visibility {:.4}, width {:.3} fs, χ²/dof {:.3}", d.visibility, d.width_fs, d.reduced_chi2);
            }
        }
        Estimates::Calibrate { counts, eta_a, eta_b } => {
            let _ = writeln!(
                s,
                "counts  N_A {}  N_B {}  N_AB {}  over {} s",
                counts.n_a, counts.n_b, counts.n_ab, counts.duration_s
            );
            for (name, e) in [("η_A", eta_a), ("η_B", eta_b)] {
                if let Some(e) = e {
                    let flag = if e.clipped { " (clipped)" } else { "" };
                    let _ = writeln!(s, "{name}     {}{flag}", fmt_pm(e.eta, e.eta_stderr, ""));
                }
            }
        }
    }
    for e in &record.estimation_errors {
        let _ = writeln!(s, "failed  {e}");
    }
    s
}
