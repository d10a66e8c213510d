//! Flat `key = value` configuration resolved from defaults, an optional
//! file and command-line flags, in that order of precedence.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use hypeboy::hypergraph::{Ratios, SplitSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Default {
    Required,
    Optional,
    Value(&'static str),
}

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Default,
    pub help: &'static str,
}

pub const fn required(name: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: Default::Required,
        help,
    }
}

pub const fn optional(name: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: Default::Optional,
        help,
    }
}

pub const fn value(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: Default::Value(default),
        help,
    }
}

/// Reads `key = value` lines; blank lines and lines starting with `#` are
/// skipped. A `.json` file is read as a run manifest and its `config`
/// object is used.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("{} is not valid JSON", path.display()))?;
        let config = manifest
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| anyhow!("{} has no \"config\" object", path.display()))?;
        return config
            .iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => Ok((k.clone(), s.clone())),
                other => Ok((k.clone(), other.to_string())),
            })
            .collect();
    }
    parse_config(&text).with_context(|| format!("in config file {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        if out.iter().any(|(seen, _): &(String, String)| seen == k) {
            bail!("line {}: key `{k}` given twice", i + 1);
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Fully resolved settings of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    values: BTreeMap<String, String>,
}

impl Resolved {
    pub fn resolve(
        keys: &[Key],
        file: Vec<(String, String)>,
        flags: Vec<(String, String)>,
    ) -> Result<Self> {
        let mut values = BTreeMap::new();
        for k in keys {
            if let Default::Value(v) = k.default {
                values.insert(k.name.to_string(), v.to_string());
            }
        }
        for (k, v) in file.into_iter().chain(flags) {
            if !keys.iter().any(|key| key.name == k) {
                bail!("unknown key `{k}`");
            }
            values.insert(k, v);
        }
        for k in keys {
            if k.default == Default::Required && !values.contains_key(k.name) {
                bail!("missing required key `{}` ({})", k.name, k.help);
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| anyhow!("missing required key `{key}`"))
    }

    pub fn get<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.str(key)?;
        raw.parse()
            .map_err(|e| anyhow!("invalid value \"{raw}\" for key `{key}`: {e}"))
    }

    pub fn opt<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key).map(|_| self.get(key)).transpose()
    }

    pub fn with<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T>) -> Result<T> {
        let raw = self.str(key)?;
        parse(raw).with_context(|| format!("invalid value \"{raw}\" for key `{key}`"))
    }

    pub fn opt_with<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Option<T>> {
        self.raw(key).map(|_| self.with(key, parse)).transpose()
    }
}

/// `4x100` (100 hyperedges of size 4), comma-joined terms such as
/// `3x50,4x50`, or plain sizes `2,3,4`.
pub fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    let mut sizes = Vec::new();
    for term in s.split(',').map(str::trim) {
        match term.split_once('x') {
            Some((size, count)) => {
                let size: usize = size.trim().parse().context("hyperedge size")?;
                let count: usize = count.trim().parse().context("hyperedge count")?;
                sizes.extend(std::iter::repeat_n(size, count));
            }
            None => sizes.push(term.parse().context("hyperedge size")?),
        }
    }
    if sizes.is_empty() {
        bail!("no hyperedges requested");
    }
    Ok(sizes)
}

/// `2..8` (inclusive), `2,4,6` or a single integer.
pub fn parse_int_range(s: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty range {a}..{b}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(Into::into))
        .collect()
}

/// `start:step:end` (inclusive), `0.1,0.5` or a single real.
pub fn parse_real_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts[..] {
        [a, step, b] => {
            let (a, step, b): (f64, f64, f64) = (a.parse()?, step.parse()?, b.parse()?);
            if !(step > 0.0) || b < a {
                bail!("range needs start <= end and a positive step");
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..count)
                .map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        [_] => s
            .split(',')
            .map(|t| t.trim().parse().map_err(Into::into))
            .collect(),
        _ => bail!("expected start:step:end"),
    }
}

/// `train,valid,test` fractions.
pub fn parse_ratios(s: &str) -> Result<Ratios> {
    let parts = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let [train, valid, test] = parts[..] else {
        bail!("expected three comma-separated fractions");
    };
    let r = Ratios::new(train, valid, test);
    r.validate()?;
    Ok(r)
}

/// Ratios as in [`parse_ratios`] or `per-class:TRAIN,VALID`.
pub fn parse_split(s: &str) -> Result<SplitSpec> {
    if let Some(rest) = s.strip_prefix("per-class:") {
        let (train, valid) = rest
            .split_once(',')
            .ok_or_else(|| anyhow!("expected per-class:TRAIN,VALID"))?;
        return Ok(SplitSpec::PerClass {
            train: train.trim().parse()?,
            valid: valid.trim().parse()?,
        });
    }
    Ok(SplitSpec::Ratios(parse_ratios(s)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[Key] = &[
        required("seed", "seed"),
        value("lr", "0.001", "learning rate"),
        optional("checkpoint", "checkpoint"),
    ];

    fn pairs(p: &[(&str, &str)]) -> Vec<(String, String)> {
        p.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let r = Resolved::resolve(KEYS, pairs(&[("lr", "0.1"), ("seed", "1")]), pairs(&[("seed", "2")]))
            .unwrap();
        assert_eq!(r.get::<f64>("lr").unwrap(), 0.1);
        assert_eq!(r.get::<u64>("seed").unwrap(), 2);
        assert_eq!(r.opt::<String>("checkpoint").unwrap(), None);
    }

    #[test]
    fn unknown_and_missing_keys_are_named() {
        let e = Resolved::resolve(KEYS, pairs(&[("sede", "1")]), vec![]).unwrap_err();
        assert!(e.to_string().contains("`sede`"));
        let e = Resolved::resolve(KEYS, vec![], vec![]).unwrap_err();
        assert!(e.to_string().contains("`seed`"));
        let r = Resolved::resolve(KEYS, vec![], pairs(&[("seed", "x")])).unwrap();
        assert!(r.get::<u64>("seed").unwrap_err().to_string().contains("`seed`"));
    }

    #[test]
    fn config_text() {
        let c = parse_config("# c\n\nseed = 4\n lr=0.5 \n").unwrap();
        assert_eq!(c, pairs(&[("seed", "4"), ("lr", "0.5")]));
        assert!(parse_config("seed 4").is_err());
        assert!(parse_config("seed=1\nseed=2").is_err());
    }

    #[test]
    fn size_and_range_syntax() {
        assert_eq!(parse_sizes("4x3").unwrap(), vec![4, 4, 4]);
        assert_eq!(parse_sizes("2x1,3x2,5").unwrap(), vec![2, 3, 3, 5]);
        assert!(parse_sizes("ax2").is_err());
        assert_eq!(parse_int_range("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_int_range("3,7").unwrap(), vec![3, 7]);
        assert!(parse_int_range("5..2").is_err());
        let p = parse_real_range("0:0.1:1").unwrap();
        assert_eq!(p.len(), 11);
        assert_eq!(p[3], 0.3);
        assert_eq!(p[10], 1.0);
        assert_eq!(parse_real_range("0.25").unwrap(), vec![0.25]);
        assert!(parse_real_range("1:0:2").is_err());
    }

    #[test]
    fn split_syntax() {
        assert_eq!(
            parse_split("per-class:20,30").unwrap(),
            SplitSpec::PerClass { train: 20, valid: 30 }
        );
        assert!(matches!(parse_split("0.1,0.1,0.8").unwrap(), SplitSpec::Ratios(_)));
        assert!(parse_split("0.5,0.5").is_err());
        assert!(parse_split("0.5,0.5,0.5").is_err());
    }
}
