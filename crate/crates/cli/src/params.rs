//! Flat `key = value` parameters: file parsing, overrides, defaults and
//! typed accessors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use mesoamp::units::UnitSystem;

/// A mistake in how the tool was invoked (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(
            split_assignment(line)
                .ok_or_else(|| usage(format!("line {}: expected `key = value`, got `{raw}`", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

pub fn split_assignment(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return None;
    }
    Some((k.to_string(), v.to_string()))
}

/// Resolved parameters of one command: defaults overlaid by the config file
/// and then by command-line overrides.
#[derive(Debug, Clone)]
pub struct Params {
    command: &'static str,
    values: BTreeMap<String, String>,
}

impl Params {
    pub fn resolve(
        command: &'static str,
        defaults: &[(&'static str, &'static str)],
        assignments: impl IntoIterator<Item = (String, String)>,
    ) -> anyhow::Result<Self> {
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in assignments {
            if !values.contains_key(&k) {
                let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
                return Err(usage(format!("unknown key `{k}` for `{command}` (known: {})", known.join(", "))));
            }
            values.insert(k, v);
        }
        Ok(Self { command, values })
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.raw(key).is_empty()
    }

    fn bad(&self, key: &str, what: &str) -> anyhow::Error {
        usage(format!("`{}`: key `{key}` = `{}` is not {what}", self.command, self.raw(key)))
    }

    pub fn f64(&self, key: &str) -> anyhow::Result<f64> {
        self.raw(key).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| self.bad(key, "a finite number"))
    }

    pub fn opt_f64(&self, key: &str) -> anyhow::Result<Option<f64>> {
        if self.is_set(key) {
            self.f64(key).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn usize(&self, key: &str) -> anyhow::Result<usize> {
        self.raw(key).parse::<usize>().map_err(|_| self.bad(key, "a non-negative integer"))
    }

    pub fn u64(&self, key: &str) -> anyhow::Result<u64> {
        self.raw(key).parse::<u64>().map_err(|_| self.bad(key, "a non-negative integer"))
    }

    pub fn bool(&self, key: &str) -> anyhow::Result<bool> {
        match self.raw(key) {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(self.bad(key, "a boolean")),
        }
    }

    pub fn choice<'a>(&self, key: &str, options: &[&'a str]) -> anyhow::Result<&'a str> {
        let v = self.raw(key);
        options
            .iter()
            .find(|o| o.eq_ignore_ascii_case(v))
            .copied()
            .ok_or_else(|| self.bad(key, &format!("one of {}", options.join("|"))))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> anyhow::Result<T> {
        self.raw(key).parse::<T>().map_err(|_| self.bad(key, what))
    }

    /// A voltage in V_T. A trailing `volt`/`V` tag converts from volts; a
    /// bare number or a `V_T` tag is taken in V_T.
    pub fn voltage(&self, key: &str) -> anyhow::Result<f64> {
        parse_voltage(self.raw(key)).ok_or_else(|| self.bad(key, "a voltage (number with optional V_T or volt tag)"))
    }

    pub fn opt_voltage(&self, key: &str) -> anyhow::Result<Option<f64>> {
        if self.is_set(key) {
            self.voltage(key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// A grid written as `min:max:steps` or as a comma-separated list.
    pub fn grid(&self, key: &str) -> anyhow::Result<Vec<f64>> {
        parse_grid(self.raw(key)).ok_or_else(|| self.bad(key, "a grid (`min:max:steps` or comma list)"))
    }
}

pub fn parse_voltage(s: &str) -> Option<f64> {
    let s = s.trim();
    let split = s.find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E').unwrap_or(s.len());
    let (num, tag) = (s[..split].trim(), s[split..].trim());
    let v: f64 = num.parse().ok().filter(|v: &f64| v.is_finite())?;
    match tag {
        "" | "V_T" | "VT" | "vt" => Some(v),
        "V" | "volt" | "volts" => Some(UnitSystem::room_temperature().volts_to_thermal(v)),
        _ => None,
    }
}

pub fn parse_grid(s: &str) -> Option<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return None;
        }
        let lo: f64 = parts[0].parse().ok()?;
        let hi: f64 = parts[1].parse().ok()?;
        let n: usize = parts[2].parse().ok()?;
        if n == 0 || !lo.is_finite() || !hi.is_finite() {
            return None;
        }
        return Some(mesoamp::device::linspace(lo, hi, n));
    }
    s.split(',').map(|p| p.trim().parse::<f64>().ok().filter(|v| v.is_finite())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let kv = parse_config_text("# header\na = 1\n\n b=2 # trailing\n").unwrap();
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "2".into())]);
        assert!(parse_config_text("novalue\n").is_err());
    }

    #[test]
    fn voltages_and_grids() {
        assert_eq!(parse_voltage("2"), Some(2.0));
        assert_eq!(parse_voltage("-1.5e1 V_T"), Some(-15.0));
        let v = parse_voltage("0.026 volt").unwrap();
        assert!((v - 0.026 / UnitSystem::room_temperature().thermal_voltage_volt).abs() < 1e-12);
        assert!(parse_voltage("2 furlongs").is_none());
        assert_eq!(parse_grid("0:1:3"), Some(vec![0.0, 0.5, 1.0]));
        assert_eq!(parse_grid("1, 2.5"), Some(vec![1.0, 2.5]));
        assert!(parse_grid("1:2").is_none());
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let p = Params::resolve("x", &[("a", "1"), ("b", "2")], vec![("b".into(), "3".into())]).unwrap();
        assert_eq!(p.f64("b").unwrap(), 3.0);
        let e = Params::resolve("x", &[("a", "1")], vec![("zz".into(), "3".into())]).unwrap_err();
        assert!(e.downcast_ref::<UsageError>().is_some());
    }
}
