//! Run configuration: a TOML file whose sections start from named presets.
//!
//! Every section (`source`, `fiber`, `detectors.a`, `detectors.b`, `sample`)
//! starts from a preset and the keys given in the file override it. A section
//! may name its preset with `preset = "..."`; otherwise the protocol's default
//! applies. Protocol sections (`tof`, `interferometer`, `pmd`) have no preset
//! and are required by their protocol; `calibration` has defaults.
//!
//! Physics keys carry their unit as a suffix (`jitter_ps`, `length_km`).

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::detection::DetectorSpec;
use crate::error::{Error, Result};
use crate::estimation::EfficiencyOptions;
use crate::experiments::{content_hash, InterferometerSettings, PmdSettings, TofSettings};
use crate::fiber::{BirefringentElement, FiberSpec};
use crate::source::SourceSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tof,
    Interferometer,
    Pmd,
    Calibrate,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Tof, Protocol::Interferometer, Protocol::Pmd, Protocol::Calibrate];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Tof => "tof",
            Protocol::Interferometer => "interferometer",
            Protocol::Pmd => "pmd",
            Protocol::Calibrate => "calibrate",
        }
    }

    fn default_source_preset(self) -> &'static str {
        match self {
            Protocol::Tof | Protocol::Calibrate => "fig1-source",
            Protocol::Interferometer => "sec42-source",
            Protocol::Pmd => "sec43-source",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::validation("protocol", format!("unknown protocol {s:?}; expected tof, interferometer, pmd or calibrate")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorPair {
    pub a: DetectorSpec,
    pub b: DetectorSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    #[serde(default = "default_calibration_duration")]
    pub duration_s: f64,
    #[serde(default = "default_calibration_window")]
    pub window_ns: f64,
    #[serde(default = "default_true")]
    pub subtract_accidentals: bool,
    #[serde(default = "default_true")]
    pub subtract_dark: bool,
}

fn default_calibration_duration() -> f64 {
    1.0
}

fn default_calibration_window() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            duration_s: default_calibration_duration(),
            window_ns: default_calibration_window(),
            subtract_accidentals: true,
            subtract_dark: true,
        }
    }
}

impl CalibrationSettings {
    pub fn options(&self) -> EfficiencyOptions {
        EfficiencyOptions {
            subtract_accidentals: self.subtract_accidentals,
            subtract_dark: self.subtract_dark,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::validation("calibration.duration_s", "duration must be positive"));
        }
        if !(self.window_ns > 0.0 && self.window_ns.is_finite()) {
            return Err(Error::validation("calibration.window_ns", "coincidence window must be positive"));
        }
        Ok(())
    }
}

/// A fully resolved run: presets expanded, defaults applied, invariants checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub source: SourceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber: Option<FiberSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detectors: Option<DetectorPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tof: Option<TofSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interferometer: Option<InterferometerSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmd: Option<PmdSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<BirefringentElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSettings>,
}

/// Values given on the command line; they win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub protocol: Option<Protocol>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

pub const DEFAULT_OUTPUT_DIR: &str = "results";

/// Default detector ids: A = 1 and B = 0, so the time-of-flight channel ids
/// A, A + 1, … never collide with B.
const DEFAULT_ID_A: u32 = 1;
const DEFAULT_ID_B: u32 = 0;

pub fn source_preset(name: &str) -> Option<SourceSpec> {
    match name {
        "fig1-source" => Some(SourceSpec::fig1()),
        "sec42-source" => Some(SourceSpec::sec42()),
        "sec43-source" => Some(SourceSpec::sec43()),
        _ => None,
    }
}

/// `smf-fixture` is 10 km of the standard single-mode fixture; override
/// `length_km` for other lengths.
pub fn fiber_preset(name: &str) -> Option<FiberSpec> {
    match name {
        "smf-fixture" => Some(FiberSpec::smf_fixture(10.0)),
        _ => None,
    }
}

pub fn detector_preset(name: &str, id: u32) -> Option<DetectorSpec> {
    match name {
        "ideal" => Some(DetectorSpec::ideal(id)),
        "ingaas" => Some(DetectorSpec::ingaas(id)),
        _ => None,
    }
}

/// `quartz-plate`: Δn = 0.009, 1 mm thick, axis at 0.
pub fn sample_preset(name: &str) -> Option<BirefringentElement> {
    match name {
        "quartz-plate" => BirefringentElement::plate(0.009, 1.0, 0.0).ok(),
        _ => None,
    }
}

const TOP_LEVEL_KEYS: [&str; 11] = [
    "protocol",
    "seed",
    "output_dir",
    "source",
    "fiber",
    "detectors",
    "tof",
    "interferometer",
    "pmd",
    "sample",
    "calibration",
];

pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_with(path, &Overrides::default())
}

pub fn load_config_with(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string(), overrides)
}

/// Parses and validates a config document. `origin` names it in diagnostics.
pub fn parse_config(text: &str, origin: &str, overrides: &Overrides) -> Result<RunConfig> {
    let doc = Doc { text, origin };
    let table: Table = text.parse::<Table>().map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        Error::Parse(match line {
            Some(l) => format!("{origin}:{l}: {}", e.message()),
            None => format!("{origin}: {}", e.message()),
        })
    })?;
    for key in table.keys() {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
            return Err(doc.error(None, key, &format!("unknown key `{key}`")));
        }
    }

    let file_protocol = match table.get("protocol") {
        Some(v) => Some(doc.scalar::<Protocol>(None, "protocol", v)?),
        None => None,
    };
    let protocol = match (file_protocol, overrides.protocol) {
        (Some(f), Some(o)) if f != o => {
            return Err(Error::validation(
                "protocol",
                format!("config declares protocol {f} but {o} was requested"),
            ))
        }
        (f, o) => o.or(f).ok_or_else(|| Error::validation("protocol", "no protocol given"))?,
    };
    let seed = match (overrides.seed, table.get("seed")) {
        (Some(s), _) => s,
        (None, Some(v)) => doc.scalar::<u64>(None, "seed", v)?,
        (None, None) => {
            return Err(Error::validation(
                "seed",
                "seed must be given explicitly; there is no clock-derived default",
            ))
        }
    };
    let output_dir = match (&overrides.output_dir, table.get("output_dir")) {
        (Some(p), _) => p.clone(),
        (None, Some(v)) => doc.scalar::<PathBuf>(None, "output_dir", v)?,
        (None, None) => PathBuf::from(DEFAULT_OUTPUT_DIR),
    };

    let source: SourceSpec = doc.section("source", table.get("source"), |name| {
        source_preset(name.unwrap_or(protocol.default_source_preset()))
    })?;
    let needs_fiber = matches!(protocol, Protocol::Tof | Protocol::Interferometer);
    let fiber = if needs_fiber || table.contains_key("fiber") {
        Some(doc.section::<FiberSpec>("fiber", table.get("fiber"), |name| {
            fiber_preset(name.unwrap_or("smf-fixture"))
        })?)
    } else {
        None
    };
    let needs_detectors = matches!(protocol, Protocol::Tof | Protocol::Calibrate);
    let detectors = if needs_detectors || table.contains_key("detectors") {
        let section = match table.get("detectors") {
            None => Table::new(),
            Some(Value::Table(t)) => t.clone(),
            Some(_) => return Err(doc.error(None, "detectors", "`detectors` must be a table")),
        };
        for key in section.keys() {
            if key != "a" && key != "b" {
                return Err(doc.error(Some("detectors"), key, &format!("unknown detector `{key}`; expected a or b")));
            }
        }
        let a = doc.section::<DetectorSpec>("detectors.a", section.get("a"), |name| {
            detector_preset(name.unwrap_or("ingaas"), DEFAULT_ID_A)
        })?;
        let b = doc.section::<DetectorSpec>("detectors.b", section.get("b"), |name| {
            detector_preset(name.unwrap_or("ingaas"), DEFAULT_ID_B)
        })?;
        Some(DetectorPair { a, b })
    } else {
        None
    };
    let tof = doc.optional::<TofSettings>("tof", table.get("tof"))?;
    let interferometer = doc.optional::<InterferometerSettings>("interferometer", table.get("interferometer"))?;
    let pmd = doc.optional::<PmdSettings>("pmd", table.get("pmd"))?;
    let sample = match table.get("sample") {
        Some(v) => Some(doc.section::<BirefringentElement>("sample", Some(v), |name| name.and_then(sample_preset))?),
        None => None,
    };
    let calibration = match (protocol, table.get("calibration")) {
        (_, Some(v)) => Some(doc.section::<CalibrationSettings>("calibration", Some(v), |_| {
            Some(CalibrationSettings::default())
        })?),
        (Protocol::Calibrate, None) => Some(CalibrationSettings::default()),
        _ => None,
    };

    let config = RunConfig {
        protocol,
        seed,
        output_dir,
        source,
        fiber,
        detectors,
        tof,
        interferometer,
        pmd,
        sample,
        calibration,
    };
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Checks every module invariant the run depends on.
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        if let Some(f) = &self.fiber {
            f.validate()?;
        }
        if let Some(d) = &self.detectors {
            d.a.validate_at("detectors.a")?;
            d.b.validate_at("detectors.b")?;
        }
        if let Some(s) = &self.sample {
            BirefringentElement::new(s.dgd_fs, s.axis_angle_rad)?;
        }
        if let Some(c) = &self.calibration {
            c.validate()?;
        }
        let missing = |section: &str| {
            Error::validation(section, format!("protocol {} requires a [{section}] section", self.protocol))
        };
        match self.protocol {
            Protocol::Tof => {
                self.tof.as_ref().ok_or_else(|| missing("tof"))?.validate()?;
                self.fiber.as_ref().ok_or_else(|| missing("fiber"))?;
                self.detectors.as_ref().ok_or_else(|| missing("detectors"))?;
            }
            Protocol::Interferometer => {
                self.interferometer.as_ref().ok_or_else(|| missing("interferometer"))?.validate()?;
                self.fiber.as_ref().ok_or_else(|| missing("fiber"))?;
            }
            Protocol::Pmd => {
                self.pmd.as_ref().ok_or_else(|| missing("pmd"))?.validate()?;
                self.sample.as_ref().ok_or_else(|| missing("sample"))?;
            }
            Protocol::Calibrate => {
                self.calibration.as_ref().ok_or_else(|| missing("calibration"))?;
                self.detectors.as_ref().ok_or_else(|| missing("detectors"))?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        content_hash(self)
    }

    /// The resolved config as TOML, with every preset expanded.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("cannot serialize config: {e}")))
    }
}

struct Doc<'a> {
    text: &'a str,
    origin: &'a str,
}

impl Doc<'_> {
    fn error(&self, section: Option<&str>, key: &str, message: &str) -> Error {
        let place = match section {
            Some(s) => format!("[{s}] {key}"),
            None => key.to_string(),
        };
        match find_key_line(self.text, section, key) {
            Some(line) => Error::Parse(format!("{}:{line}: {place}: {message}", self.origin)),
            None => Error::Parse(format!("{}: {place}: {message}", self.origin)),
        }
    }

    fn scalar<T: DeserializeOwned>(&self, section: Option<&str>, key: &str, v: &Value) -> Result<T> {
        v.clone()
            .try_into()
            .map_err(|e: toml::de::Error| self.error(section, key, e.message()))
    }

    /// Builds a section from its preset overlaid with the file's keys.
    fn section<T: DeserializeOwned + Serialize>(
        &self,
        name: &str,
        value: Option<&Value>,
        preset: impl Fn(Option<&str>) -> Option<T>,
    ) -> Result<T> {
        let mut user = match value {
            None => Table::new(),
            Some(Value::Table(t)) => t.clone(),
            Some(_) => return Err(self.error(None, name, "expected a table")),
        };
        let preset_name = match user.remove("preset") {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(_) => return Err(self.error(Some(name), "preset", "preset must be a string")),
        };
        let base = preset(preset_name.as_deref()).ok_or_else(|| match &preset_name {
            Some(p) => self.error(Some(name), "preset", &format!("unknown preset {p:?}")),
            None => self.error(None, name, "this section needs a preset or a full set of keys"),
        });
        let merged = match base {
            Ok(b) => {
                let mut t = Value::try_from(&b)
                    .map_err(|e| Error::Parse(format!("preset for [{name}] does not serialize: {e}")))?;
                if let Value::Table(t) = &mut t {
                    merge(t, user);
                }
                t
            }
            // Without a preset the keys must stand on their own.
            Err(_) if preset_name.is_none() && !user.is_empty() => Value::Table(user),
            Err(e) => return Err(e),
        };
        merged.try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let key = offending_key(&msg).unwrap_or(name.rsplit('.').next().unwrap_or(name));
            self.error(Some(name), key, &msg)
        })
    }

    fn optional<T: DeserializeOwned>(&self, name: &str, value: Option<&Value>) -> Result<Option<T>> {
        let Some(v) = value else { return Ok(None) };
        v.clone().try_into().map(Some).map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let key = offending_key(&msg).unwrap_or(name);
            self.error(Some(name), key, &msg)
        })
    }
}

/// Overlays `user` onto `base`. Nested tables merge key by key, except that a
/// table carrying a `kind` tag replaces the base when the kinds differ.
fn merge(base: &mut Table, user: Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(u)) => {
                let same_kind = match (b.get("kind"), u.get("kind")) {
                    (Some(x), Some(y)) => x == y,
                    _ => true,
                };
                if same_kind {
                    merge(b, u);
                } else {
                    *b = u;
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Pulls the field name out of serde messages such as "unknown field `x`" or
/// "missing field `x`".
fn offending_key(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]` (or at top level), if written that way.
fn find_key_line(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[') {
            let name = header.trim_start_matches('[').split(']').next().unwrap_or("").trim();
            current = Some(name.to_string());
            seen.insert(name.to_string());
            if section.is_none() && name == key {
                return Some(i + 1);
            }
            if let Some(s) = section {
                // A subtable header such as [fiber.model] for key `model`.
                if name == format!("{s}.{key}") {
                    return Some(i + 1);
                }
            }
            continue;
        }
        let in_scope = match (section, &current) {
            (None, None) => true,
            (Some(s), Some(c)) => c == s,
            _ => false,
        };
        if in_scope {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    // Fall back to the section header.
    let s = section?;
    text.lines()
        .position(|l| l.trim().trim_start_matches('[').split(']').next().map(str::trim) == Some(s))
        .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectorId;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config(text, "test.toml", &Overrides::default())
    }

    #[test]
    fn minimal_calibrate_config_uses_defaults() {
        let c = parse("protocol = \"calibrate\"\nseed = 7\n").unwrap();
        assert_eq!(c.source, SourceSpec::fig1());
        let d = c.detectors.unwrap();
        assert_eq!(d.a, DetectorSpec::ingaas(DEFAULT_ID_A));
        assert_eq!(d.b.id, DetectorId(DEFAULT_ID_B));
        assert_eq!(c.calibration, Some(CalibrationSettings::default()));
        assert_eq!(c.output_dir, PathBuf::from(DEFAULT_OUTPUT_DIR));
        assert!(c.fiber.is_none());
    }

    #[test]
    fn keys_override_presets() {
        let c = parse(
            "protocol = \"tof\"\nseed = 1\n[source]\npreset = \"sec42-source\"\npair_rate_hz = 2e5\n\
             [fiber]\nlength_km = 2.5\n[tof]\nlambda_start_nm = 1280.0\nlambda_stop_nm = 1320.0\nduration_s = 0.1\n",
        )
        .unwrap();
        assert_eq!(c.source.pair_rate_hz, 2e5);
        assert_eq!(c.source.lambda_pump_nm, 700.0);
        assert_eq!(c.fiber.unwrap(), FiberSpec::smf_fixture(2.5));
    }

    #[test]
    fn efficiency_out_of_range_names_the_invariant() {
        let err = parse("protocol = \"calibrate\"\nseed = 1\n[detectors.a]\nefficiency = 1.2\n").unwrap_err();
        assert!(err.to_string().contains("DetectorSpec.efficiency"), "{err}");
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "detectors.a.efficiency"));
    }

    #[test]
    fn unknown_keys_report_line_and_field() {
        let err = parse("protocol = \"calibrate\"\nseed = 1\n\n[detectors.b]\njiter_ps = 5.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse(_)));
        assert!(msg.contains("test.toml:5") && msg.contains("jiter_ps"), "{msg}");

        let err = parse("protocol = \"calibrate\"\nseed = 1\ncolour = 3\n").unwrap_err();
        assert!(err.to_string().contains("test.toml:3"), "{err}");
    }

    #[test]
    fn syntax_errors_report_the_line() {
        let err = parse("protocol = \"calibrate\"\nseed = = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse(ref m) if m.contains("test.toml:2")), "{err}");
    }

    #[test]
    fn seed_is_required() {
        let err = parse("protocol = \"calibrate\"\n").unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "seed"));
        let c = parse_config(
            "protocol = \"calibrate\"\n",
            "t",
            &Overrides {
                seed: Some(3),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn protocol_sections_are_required() {
        let err = parse("protocol = \"pmd\"\nseed = 1\n").unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "pmd"), "{err}");
    }

    #[test]
    fn conflicting_protocol_is_rejected() {
        let err = parse_config(
            "protocol = \"tof\"\nseed = 1\n",
            "t",
            &Overrides {
                protocol: Some(Protocol::Pmd),
                ..Overrides::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "protocol"));
    }

    #[test]
    fn fiber_model_kind_can_be_replaced() {
        let c = parse(
            "protocol = \"interferometer\"\nseed = 1\n[fiber]\nlength_km = 0.001\n[fiber.model]\nkind = \"quadratic\"\n\
             tau0_ps_per_km = 4.9e6\nlambda0_nm = 1312.0\ns0_ps_per_nm2_km = 0.09\n\
             [interferometer]\ntemperatures_c = [50.0]\nmirror_um = { start = 0.0, stop = 10.0, step = 0.1 }\n",
        )
        .unwrap();
        assert!(matches!(c.fiber.unwrap().model, crate::fiber::DispersionModel::Quadratic { .. }));
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = "protocol = \"pmd\"\nseed = 11\noutput_dir = \"out\"\n[sample]\npreset = \"quartz-plate\"\n\
                    [pmd]\ndelay_fs = { start = 0.0, stop = 60.0, step = 0.5 }\n";
        let c = parse(text).unwrap();
        assert!((c.sample.unwrap().dgd_fs - 30.02).abs() < 0.01);
        let again = parse(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
    }
}
