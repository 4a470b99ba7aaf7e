//! Command implementations behind the `flt` binary: property verification,
//! approximation-error sweeps, scaling benchmarks and toy training.
//!
//! Every command takes a JSON config (all fields optional), patched by
//! command-line overrides and then by the `FLT_SEED` environment variable.

pub mod approx;
pub mod bench;
pub mod stats;
pub mod train;
pub mod verify;

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub const SEED_ENV: &str = "FLT_SEED";

/// Exit status for a failed property or run.
pub const EXIT_FAILURE: i32 = 1;
/// Exit status for bad arguments or configs.
pub const EXIT_USAGE: i32 = 2;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::InvalidParameter(_) | Error::OracleScope(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// `FLT_SEED`, if set.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config(format!("{SEED_ENV}: {e}"))),
    }
}

/// Config as a JSON object: the file at `path`, or `{}`.
pub fn read_config_value(path: Option<&Path>) -> Result<Value> {
    let Some(path) = path else {
        return Ok(Value::Object(Default::default()));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Error::Config(format!("{}: config must be a JSON object", path.display())));
    }
    Ok(v)
}

/// Sets the dotted `key` (`train.adam.eps`) to `value`, creating objects on
/// the way.
pub fn set_path(config: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("bad override key {key:?}")));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = obj.entry(*part).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

/// Applies `key=value` overrides. Values parse as JSON when they can and
/// are taken as strings otherwise.
pub fn apply_overrides(config: &mut Value, sets: &[String]) -> Result<()> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        set_path(config, k.trim(), value)?;
    }
    Ok(())
}

pub fn parse_config<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
}

/// `#`-prefixed CSV preamble: version, command, resolved config, seeds.
pub fn write_header<C: Serialize>(out: &mut dyn Write, command: &str, config: &C, seeds: &[u64]) -> Result<()> {
    let json = serde_json::to_string(config)?;
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    writeln!(out, "# flt {}", crate::VERSION)?;
    writeln!(out, "# command: {command}")?;
    writeln!(out, "# config: {json}")?;
    writeln!(out, "# seeds: {}", seeds.join(","))?;
    Ok(())
}

/// Header plus rows; the column line comes from the record's field names.
pub fn write_csv<C: Serialize, R: Serialize>(
    out: &mut dyn Write,
    command: &str,
    config: &C,
    seeds: &[u64],
    rows: &[R],
) -> Result<()> {
    write_header(out, command, config, seeds)?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut file = std::io::BufWriter::new(std::fs::File::create(p)?);
            f(&mut file)?;
            file.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}

/// `f` over `items` on up to `threads` scoped threads, results in input
/// order.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// `base, base + 1, …`.
pub fn seed_list(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dotted_overrides() {
        let mut v = json!({"train": {"steps": 3}});
        apply_overrides(&mut v, &["train.steps=0".into(), "task.kind=causal_copy".into(), "paired=true".into()]).unwrap();
        assert_eq!(v, json!({"train": {"steps": 0}, "task": {"kind": "causal_copy"}, "paired": true}));
        assert!(apply_overrides(&mut v, &["nokey".into()]).is_err());
        assert!(apply_overrides(&mut v, &["paired.x=1".into()]).is_err());
    }

    #[test]
    fn par_map_keeps_order() {
        let xs: Vec<u64> = (0..10).collect();
        assert_eq!(par_map(&xs, 3, |x| x * x), par_map(&xs, 1, |x| x * x));
    }

    #[test]
    fn header_lines() {
        let mut buf = Vec::new();
        write_header(&mut buf, "bench", &json!({"a": 1}), &[3, 4]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.starts_with('#')));
        assert_eq!(lines[2], "# config: {\"a\":1}");
        assert_eq!(lines[3], "# seeds: 3,4");
    }
}
