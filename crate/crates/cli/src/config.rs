use std::path::{Path, PathBuf};

use golden_anosov::schedule::{build_schedule, Profile, Schedule};
use golden_anosov::verify::VerifyOptions;
use golden_anosov::{Backend, FieldElement};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Where the schedule of a run comes from: a file, or a build request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSource {
    pub file: Option<String>,
    pub profile: String,
    pub stages: usize,
    pub theta: Option<String>,
}

impl ScheduleSource {
    pub fn load(&self) -> Result<Schedule, Failure> {
        if let Some(path) = &self.file {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{path}: {e}")))?;
            return Ok(Schedule::from_json(&text)?);
        }
        let profile = match self.profile.as_str() {
            "toy" => Profile::toy(),
            "strict" => Profile::Strict,
            other => return Err(Failure::Usage(format!("unknown profile {other:?}"))),
        };
        let theta = self.theta.as_deref().map(parse_number).transpose()?;
        Ok(build_schedule(self.stages, &profile, theta.as_ref())?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "what", rename_all = "kebab-case")]
pub enum ExportSpec {
    Curve { depth: Option<usize>, points: usize },
    Orbit { depth: Option<usize>, x: String, y: String, steps: usize },
    Density { stage: Option<usize>, depth: usize },
}

/// Everything a run depends on. Runs with equal configs produce equal outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    BuildSchedule { schedule: ScheduleSource, out: String },
    Verify { schedule: ScheduleSource, suites: Vec<String>, options: VerifyOptions, out: String },
    Export { schedule: ScheduleSource, export: ExportSpec, backend: Backend, out: String },
}

impl RunConfig {
    pub fn out(&self) -> &str {
        match self {
            RunConfig::BuildSchedule { out, .. } | RunConfig::Verify { out, .. } | RunConfig::Export { out, .. } => out,
        }
    }

    pub fn set_out(&mut self, path: String) {
        match self {
            RunConfig::BuildSchedule { out, .. } | RunConfig::Verify { out, .. } | RunConfig::Export { out, .. } => {
                *out = path
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub library_version: String,
    pub run: RunConfig,
}

impl Manifest {
    pub fn new(run: RunConfig) -> Self {
        Manifest {
            tool: "golden-anosov".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            library_version: golden_anosov::VERSION.into(),
            run,
        }
    }

    pub fn path_for(out: &str) -> PathBuf {
        let mut p = Path::new(out).as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    }

    pub fn write(&self) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_file(&Manifest::path_for(self.run.out()), text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

/// Parses `p/q`, `p/q + r/s*phi` or a plain decimal such as `-0.125` exactly.
pub fn parse_number(s: &str) -> Result<FieldElement, Failure> {
    if let Ok(x) = s.parse::<FieldElement>() {
        return Ok(x);
    }
    let bad = || Failure::Usage(format!("not a number: {s:?}"));
    let t = s.trim();
    let (neg, t) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int, frac) = t.split_once('.').ok_or_else(bad)?;
    if int.is_empty() && frac.is_empty() || !(int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())) {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let num = format!("{}{}", if neg { "-" } else { "" }, digits.trim_start_matches('0').max("0"));
    let den = format!("1{}", "0".repeat(frac.len()));
    format!("{num}/{den}").parse::<FieldElement>().map_err(|_| bad())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_parse_exactly() {
        assert_eq!(parse_number("0.3").unwrap(), FieldElement::from_ratio(3, 10));
        assert_eq!(parse_number("-1.25").unwrap(), FieldElement::from_ratio(-5, 4));
        assert_eq!(parse_number("262145/262144").unwrap(), FieldElement::from_ratio(262145, 262144));
        assert!(parse_number("0.3e2").is_err());
        assert!(parse_number(".").is_err());
    }

    #[test]
    fn manifest_sits_next_to_the_output() {
        assert_eq!(Manifest::path_for("out/curve.csv"), PathBuf::from("out/curve.csv.manifest.json"));
    }

    #[test]
    fn configs_round_trip_through_json() {
        let run = RunConfig::Export {
            schedule: ScheduleSource { file: None, profile: "toy".into(), stages: 2, theta: None },
            export: ExportSpec::Curve { depth: Some(5), points: 10 },
            backend: Backend::Exact,
            out: "a.csv".into(),
        };
        let m = Manifest::new(run);
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<Manifest>(&text).unwrap(), m);
    }
}
