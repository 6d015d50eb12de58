//! `--config <json>`: a flat JSON object whose keys are flag names (with `-`
//! or `_`). Each entry becomes a flag appended to argv unless that flag was
//! given explicitly. Arrays become comma-separated lists; `true` becomes a
//! bare switch and `false` is skipped.

use std::ffi::OsString;
use std::path::PathBuf;

use nubblematch_core::Error;
use serde_json::Value;

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut iter = argv.iter();
    while let Some(arg) = iter.next() {
        let arg = arg.to_string_lossy();
        if arg == "--config" {
            return iter.next().map(PathBuf::from);
        }
        if let Some(p) = arg.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Returns argv with config entries merged beneath explicit flags.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>, Error> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: Value = serde_json::from_str(&text)?;
    let Value::Object(map) = value else {
        return Err(Error::Argument("config must be a JSON object".into()));
    };

    let given = |flag: &str| {
        argv.iter().any(|a| {
            let a = a.to_string_lossy();
            a == flag || a.starts_with(&format!("{flag}="))
        })
    };

    let mut out = argv.clone();
    let mut keys: Vec<&String> = map.keys().collect();
    keys.sort();
    for key in keys {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || given(&flag) {
            continue;
        }
        match &map[key] {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let parts = items
                    .iter()
                    .map(|v| {
                        scalar(v).ok_or_else(|| {
                            Error::Argument(format!("config key '{key}' has a non-scalar item"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                out.push(flag.into());
                out.push(parts.join(",").into());
            }
            other => {
                let v = scalar(other).ok_or_else(|| {
                    Error::Argument(format!("config key '{key}' must be a scalar or array"))
                })?;
                out.push(flag.into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn explicit_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"seed": 3, "ratios": [0, 0.1], "tau": 0.7, "verbose": false}"#).unwrap();
        let argv = args(&["nm", "sweep", "--seed", "9", "--config", cfg.to_str().unwrap()]);
        let merged = merge(argv.clone()).unwrap();
        let tail: Vec<String> = merged[argv.len()..]
            .iter()
            .map(|s| s.to_string_lossy().into_owned())
            .collect();
        assert_eq!(tail, vec!["--ratios", "0,0.1", "--tau", "0.7"]);
    }

    #[test]
    fn no_config_is_passthrough() {
        let argv = args(&["nm", "iou"]);
        assert_eq!(merge(argv.clone()).unwrap(), argv);
    }

    #[test]
    fn rejects_non_object() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, "[1]").unwrap();
        assert!(merge(args(&["nm", "--config", cfg.to_str().unwrap()])).is_err());
    }
}
