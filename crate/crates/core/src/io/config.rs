//! TOML configuration.
//!
//! ```toml
//! seed = 7
//!
//! [preprocess]
//! box_xy_half = "150 cm"
//!
//! [conversion]
//! fpf_delta = 0.10        # bare numbers are meters
//!
//! [utcl]
//! mu = "20 cm"
//! ```
//!
//! Every key is optional and falls back to its default. Length-valued keys
//! accept either a bare number in meters or a string with a `m`, `cm` or
//! `mm` suffix. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use toml::{Table, Value};

use crate::convert::ConversionConfig;
use crate::error::{Error, Result};
use crate::preprocess::PreprocessConfig;
use crate::utcl::UtclConfig;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    pub preprocess: PreprocessConfig,
    pub conversion: ConversionConfig,
    pub utcl: UtclConfig,
    pub seed: Option<u64>,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config { key, reason } => Error::Config {
            key,
            reason: format!("{reason} (in {})", path.display()),
        },
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<Config> {
    let mut root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
    let mut cfg = Config::default();

    if let Some(v) = root.remove("seed") {
        let seed = v
            .as_integer()
            .and_then(|i| u64::try_from(i).ok())
            .ok_or_else(|| Error::config("seed", "must be a non-negative integer"))?;
        cfg.seed = Some(seed);
    }
    if let Some(v) = root.remove("preprocess") {
        let mut s = Section::new("preprocess", v)?;
        let p = &mut cfg.preprocess;
        s.length("box_xy_half", &mut p.box_xy_half)?;
        s.length("box_z_min", &mut p.box_z_min)?;
        s.length("box_z_max", &mut p.box_z_max)?;
        s.number("rot_max_deg", &mut p.rot_max_deg)?;
        s.number("scale_min", &mut p.scale_min)?;
        s.number("scale_max", &mut p.scale_max)?;
        s.length("trans_max", &mut p.trans_max)?;
        s.count("target_points", &mut p.target_points)?;
        s.finish()?;
        s.check(p.validate())?;
    }
    if let Some(v) = root.remove("conversion") {
        let mut s = Section::new("conversion", v)?;
        let c = &mut cfg.conversion;
        s.length("npa_sigma", &mut c.npa_sigma)?;
        s.number("npa_prob", &mut c.npa_prob)?;
        s.count("npa_count", &mut c.npa_count)?;
        s.length("fpf_gamma", &mut c.fpf_gamma)?;
        s.length("fpf_delta", &mut c.fpf_delta)?;
        s.number("rs_rmin", &mut c.rs_rmin)?;
        s.number("rs_rmax", &mut c.rs_rmax)?;
        s.count("rs_min_points", &mut c.rs_min_points)?;
        s.length("ni_sigma", &mut c.ni_sigma)?;
        s.number("idw_epsilon", &mut c.idw_epsilon)?;
        s.finish()?;
        s.check(c.validate())?;
    }
    if let Some(v) = root.remove("utcl") {
        let mut s = Section::new("utcl", v)?;
        let u = &mut cfg.utcl;
        s.length("mu", &mut u.mu)?;
        s.length("eta", &mut u.eta)?;
        s.length("rho", &mut u.rho)?;
        s.number("lambda_con", &mut u.lambda_con)?;
        s.finish()?;
        s.check(u.validate())?;
    }
    if let Some(key) = root.keys().next() {
        return Err(Error::config(key.clone(), "unknown key"));
    }
    Ok(cfg)
}

struct Section {
    name: &'static str,
    table: Table,
}

impl Section {
    fn new(name: &'static str, v: Value) -> Result<Self> {
        match v {
            Value::Table(table) => Ok(Self { name, table }),
            _ => Err(Error::config(name, "must be a table")),
        }
    }

    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn number(&mut self, key: &str, dst: &mut f64) -> Result<()> {
        if let Some(v) = self.table.remove(key) {
            *dst = as_f64(&v).ok_or_else(|| Error::config(self.key(key), "must be a number"))?;
        }
        Ok(())
    }

    fn length(&mut self, key: &str, dst: &mut f64) -> Result<()> {
        if let Some(v) = self.table.remove(key) {
            *dst = match &v {
                Value::String(s) => parse_length(s).map_err(|r| Error::config(self.key(key), r))?,
                other => as_f64(other).ok_or_else(|| {
                    Error::config(self.key(key), "must be a number (meters) or a string like \"5 cm\"")
                })?,
            };
        }
        Ok(())
    }

    fn count(&mut self, key: &str, dst: &mut usize) -> Result<()> {
        if let Some(v) = self.table.remove(key) {
            *dst = v
                .as_integer()
                .and_then(|i| usize::try_from(i).ok())
                .ok_or_else(|| Error::config(self.key(key), "must be a non-negative integer"))?;
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        match self.table.keys().next() {
            Some(k) => Err(Error::config(self.key(k), "unknown key")),
            None => Ok(()),
        }
    }

    fn check(&self, r: Result<()>) -> Result<()> {
        r.map_err(|e| match e {
            Error::Config { key, reason } => Error::config(self.key(&key), reason),
            other => other,
        })
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Parses `"<number> <unit>"` with unit `m`, `cm` or `mm` into meters.
pub fn parse_length(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let split = s
        .find(|c: char| c.is_ascii_alphabetic())
        .ok_or_else(|| format!("length `{s}` has no unit (use m, cm or mm)"))?;
    let (num, unit) = s.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("`{}` is not a number", num.trim()))?;
    let factor = match unit.trim() {
        "m" => 1.0,
        "cm" => 0.01,
        "mm" => 0.001,
        u => return Err(format!("unknown length unit `{u}`")),
    };
    Ok(value * factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.seed, None);
    }

    #[test]
    fn lengths_accept_units() {
        assert_eq!(parse_length("5 cm").unwrap(), 0.05);
        assert_eq!(parse_length("20cm").unwrap(), 0.2);
        assert_eq!(parse_length("1.5 m").unwrap(), 1.5);
        assert_eq!(parse_length("10 mm").unwrap(), 0.01);
        assert!(parse_length("5").is_err());
        assert!(parse_length("5 in").is_err());
        let c = parse_config("[utcl]\nmu = \"30 cm\"\neta = 0.04\n").unwrap();
        assert!((c.utcl.mu - 0.3).abs() < 1e-15);
        assert_eq!(c.utcl.eta, 0.04);
    }

    #[test]
    fn supplement_delta_accepted() {
        let c = parse_config("seed = 3\n[conversion]\nfpf_delta = 0.10\n").unwrap();
        assert_eq!(c.conversion, ConversionConfig::supplement_preset());
        assert_eq!(c.seed, Some(3));
    }

    #[test]
    fn range_violations_name_the_key() {
        let err = parse_config("[conversion]\nrs_rmin = 2.0\n").unwrap_err().to_string();
        assert!(err.contains("conversion.rs_rmin"), "{err}");
        let err = parse_config("[conversion]\nfpf_gamma = 0.2\n").unwrap_err().to_string();
        assert!(err.contains("conversion.fpf_delta"), "{err}");
        let err = parse_config("[preprocess]\ntarget_points = -1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("preprocess.target_points"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config("sed = 1\n").unwrap_err().to_string().contains("`sed`"));
        let err = parse_config("[utcl]\nlambda = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("utcl.lambda"), "{err}");
        assert!(parse_config("utcl = 3\n").is_err());
    }
}
