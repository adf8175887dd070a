//! JSON config files mirror the command line: top-level keys are global
//! flags, and an object keyed by the subcommand name holds its flags. The
//! entries are turned into arguments placed before the user's own, so
//! explicit flags win.

use std::ffi::OsString;
use std::fs;

use serde_json::{Map, Value};

/// Global options that take a value.
const GLOBAL_VALUED: &[&str] = &["--config", "--seed"];

fn flag(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => {
            let parts: Option<Vec<String>> = items.iter().map(scalar).collect();
            parts.map(|p| p.join(","))
        }
        _ => None,
    }
}

fn push_flags(obj: &Map<String, Value>, out: &mut Vec<OsString>, skip_objects: bool) -> Result<(), String> {
    for (k, v) in obj {
        match v {
            Value::Object(_) if skip_objects => {}
            Value::Bool(true) => out.push(flag(k).into()),
            Value::Bool(false) | Value::Null => {}
            other => {
                let s = scalar(other).ok_or_else(|| format!("config key `{k}` has an unsupported value"))?;
                out.push(flag(k).into());
                out.push(s.into());
            }
        }
    }
    Ok(())
}

/// Position of the subcommand and the config path, if any.
fn scan(args: &[OsString]) -> (usize, Option<String>) {
    let mut i = 1;
    let mut config = None;
    while i < args.len() {
        let a = args[i].to_string_lossy().to_string();
        if !a.starts_with('-') {
            break;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else if GLOBAL_VALUED.contains(&a.as_str()) {
            if a == "--config" {
                config = args.get(i + 1).map(|s| s.to_string_lossy().to_string());
            }
            i += 1;
        }
        i += 1;
    }
    (i, config)
}

/// Returns `args` with the config file's flags spliced in.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let (sub_at, path) = scan(&args);
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| format!("reading config {path}: {e}"))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("parsing config {path}: {e}"))?;
    let Value::Object(root) = value else {
        return Err(format!("config {path} must hold a JSON object"));
    };
    let mut out: Vec<OsString> = vec![args[0].clone()];
    let mut globals = Vec::new();
    push_flags(&root, &mut globals, true)?;
    out.extend(globals);
    out.extend(args[1..sub_at.min(args.len())].iter().cloned());
    if sub_at < args.len() {
        let sub = args[sub_at].to_string_lossy().to_string();
        out.push(args[sub_at].clone());
        let mut rest = args[sub_at + 1..].iter().cloned().peekable();
        // positional family of `gen` stays first
        if sub == "gen" {
            if let Some(p) = rest.next_if(|a| !a.to_string_lossy().starts_with('-')) {
                out.push(p);
            }
        }
        if let Some(Value::Object(section)) = root.get(&sub) {
            let mut local = Vec::new();
            push_flags(section, &mut local, false)?;
            out.extend(local);
        }
        out.extend(rest);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_flags_precede_explicit_ones() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(
            f,
            r#"{{"seed": 4, "verbose": false, "sweep": {{"thetas": [0, 0.5], "methods": "l1", "gamma": 2.5}}}}"#
        )
        .unwrap();
        let p = f.path().to_string_lossy().to_string();
        let out = expand(os(&["bin", "--config", &p, "sweep", "--gamma", "3"])).unwrap();
        let out: Vec<String> = out.iter().map(|s| s.to_string_lossy().to_string()).collect();
        assert_eq!(
            out,
            ["bin", "--seed", "4", "--config", &p, "sweep", "--gamma", "2.5", "--methods", "l1", "--thetas", "0,0.5", "--gamma", "3"]
        );
    }

    #[test]
    fn no_config_is_identity() {
        let a = os(&["bin", "--seed", "3", "hinf", "--system", "s.json"]);
        assert_eq!(expand(a.clone()).unwrap(), a);
    }
}
