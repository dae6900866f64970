//! Flat `key = value` settings with `[section]` headers.
//!
//! Keys are unique across sections; a section only groups them. Command-line
//! flags of the same name override file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use imcf_core::{Family, FlowConfig, InitialData, ProfileSpec};

/// Known keys by section, in the order they are echoed.
pub const SECTIONS: &[(&str, &[&str])] = &[
    (
        "profile",
        &[
            "family",
            "k",
            "kappa",
            "m",
            "q",
            "a",
            "omega",
            "path",
            "r0",
            "r_max",
            "theta0",
            "horizon_margin",
            "slope0",
        ],
    ),
    (
        "flow",
        &[
            "n",
            "grid",
            "c_cfl",
            "t_end",
            "output_every",
            "h_floor",
            "margin",
            "initial",
        ],
    ),
    ("check", &["samples", "cap"]),
    ("output", &["out_dir"]),
];

fn section_of(key: &str) -> Option<&'static str> {
    SECTIONS
        .iter()
        .find(|(_, keys)| keys.contains(&key))
        .map(|(s, _)| *s)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut settings = Settings::default();
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    bail!("line {}: unknown section [{name}]", lineno + 1);
                }
                section = Some(name.to_owned());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            let key = key.trim();
            let owner = section_of(key)
                .ok_or_else(|| anyhow!("line {}: unknown key {key:?}", lineno + 1))?;
            if let Some(s) = &section {
                if s != owner {
                    bail!(
                        "line {}: key {key:?} belongs to [{owner}], found in [{s}]",
                        lineno + 1
                    );
                }
            }
            settings
                .values
                .insert(key.to_owned(), value.trim().to_owned());
        }
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(section_of(key).is_some(), "unknown key {key}");
        self.values.insert(key.to_owned(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("invalid value {v:?} for {key}: {e}"))
            })
            .transpose()
    }

    fn required<T: FromStr>(&self, key: &str, family: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(key)?
            .ok_or_else(|| anyhow!("family {family} needs {key}"))
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Sectioned text that [`Settings::parse`] reads back to the same map.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for (section, keys) in SECTIONS {
            let present: Vec<_> = keys
                .iter()
                .filter_map(|k| self.get(k).map(|v| (k, v)))
                .collect();
            if present.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "[{section}]");
            for (k, v) in present {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    pub fn dimension(&self) -> Result<usize> {
        let n = self.parsed::<usize>("n")?.unwrap_or(2);
        if n < 2 {
            bail!("n = {n} must be at least 2");
        }
        Ok(n)
    }

    pub fn profile_spec(&self) -> Result<ProfileSpec> {
        let name = self
            .get("family")
            .ok_or_else(|| anyhow!("no profile family given"))?;
        let n = self.dimension()? as u32;
        let family = match name {
            "euclidean" => Family::Euclidean,
            "hyperbolic" => Family::Hyperbolic {
                k: self.parsed("k")?.unwrap_or(1.0),
            },
            "ds_schwarzschild" => Family::DsSchwarzschild {
                kappa: self.parsed("kappa")?.unwrap_or(1.0),
                m: self.required("m", name)?,
                n,
            },
            "reissner_nordstrom" => Family::ReissnerNordstrom {
                m: self.required("m", name)?,
                q: self.required("q", name)?,
                n,
            },
            "oscillator" => Family::Oscillator {
                a: self.required("a", name)?,
                omega: self.required("omega", name)?,
            },
            "tabulated" => Family::Tabulated {
                path: PathBuf::from(self.required::<String>("path", name)?),
            },
            other => bail!("unknown profile family {other:?}"),
        };
        let mut spec = ProfileSpec::new(family);
        spec.r0 = self.parsed("r0")?;
        spec.r_max = self.parsed("r_max")?;
        spec.theta0 = self.parsed("theta0")?;
        if let Some(m) = self.parsed("horizon_margin")? {
            spec.horizon_margin = m;
        }
        if let Some(s) = self.parsed("slope0")? {
            spec.slope0 = s;
        }
        Ok(spec)
    }

    pub fn flow_config(&self) -> Result<FlowConfig> {
        let d = FlowConfig::default();
        let initial = match self.get("initial") {
            Some(text) => InitialData::parse(text)?,
            None => bail!("no initial data given"),
        };
        let cfg = FlowConfig {
            n: self.dimension()?,
            grid: self.parsed("grid")?.unwrap_or(d.grid),
            c_cfl: self.parsed("c_cfl")?.unwrap_or(d.c_cfl),
            t_end: self
                .parsed("t_end")?
                .ok_or_else(|| anyhow!("no t_end given"))?,
            output_every: self.parsed("output_every")?.unwrap_or(d.output_every),
            h_floor: self.parsed("h_floor")?.unwrap_or(d.h_floor),
            margin: self.parsed("margin")?.unwrap_or(d.margin),
            initial,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `out_dir` setting, then `IMCF_OUT_DIR`, then `imcf_out`.
    pub fn out_dir(&self) -> PathBuf {
        self.get("out_dir")
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("IMCF_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("imcf_out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let s = Settings::parse(
            "# run\n[profile]\nfamily = hyperbolic\nk=2\n\n[flow]\nn = 2\nt_end = 4\ninitial = legendre(1, 0.05, 2)\n",
        )
        .unwrap();
        assert_eq!(s.get("k"), Some("2"));
        assert_eq!(s.profile_spec().unwrap(), ProfileSpec::hyperbolic(2.0));
        let cfg = s.flow_config().unwrap();
        assert_eq!(
            cfg.initial,
            InitialData::Legendre {
                r0: 1.0,
                eps: 0.05,
                l: 2
            }
        );
        assert_eq!(cfg.t_end, 4.0);
    }

    #[test]
    fn echo_round_trips() {
        let mut s = Settings::default();
        s.set("family", "ds_schwarzschild");
        s.set("m", "2");
        s.set("initial", "round(1)");
        s.set("t_end", "1.5");
        assert_eq!(Settings::parse(&s.to_config_text()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Settings::parse("[nope]\n").is_err());
        assert!(Settings::parse("zzz = 1\n").is_err());
        assert!(Settings::parse("[flow]\nfamily = euclidean\n").is_err());
        assert!(Settings::parse("family\n").is_err());
        let s = Settings::parse("family = ds_schwarzschild\n").unwrap();
        assert!(s.profile_spec().is_err());
        let s = Settings::parse("family = euclidean\nk = x\n").unwrap();
        assert!(s.profile_spec().is_ok());
        let s = Settings::parse("family = hyperbolic\nk = x\n").unwrap();
        assert!(s.profile_spec().is_err());
    }
}
