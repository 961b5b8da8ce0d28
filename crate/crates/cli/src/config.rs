//! JSON run configuration. Validation walks the raw JSON tree so every
//! error names the offending path, e.g. `modes[1]` or `signal.segments[0][1]`.

use std::path::Path;

use serde_json::{Map, Value};
use swent::estimator::EstimationConfig;
use swent::{ModeSet, Repeat, SwitchedSystem, SwitchingSignal};

use crate::exit::{ExitKind, Failure, Outcome, WithExit};

const TOP_KEYS: &[&str] = &[
    "name",
    "description",
    "modes",
    "signal",
    "estimation",
    "flow",
    "analysis",
];

#[derive(Clone, Debug)]
pub enum FlowTimes {
    Explicit(Vec<f64>),
    Sampled { horizon: f64, density: usize },
}

#[derive(Clone, Debug)]
pub struct FlowSpec {
    pub x0: Vec<f64>,
    pub times: FlowTimes,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub system: SwitchedSystem,
    pub estimation: Option<EstimationConfig>,
    pub flow: Option<FlowSpec>,
    /// Horizon for estimating activation fractions of non-periodic signals.
    pub horizon: Option<f64>,
}

fn err(path: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::config(format!("{path}: {msg}"))
}

fn object<'a>(v: &'a Value, path: &str) -> Outcome<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| err(path, "expected an object"))
}

fn array<'a>(v: &'a Value, path: &str) -> Outcome<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| err(path, "expected an array"))
}

fn number(v: &Value, path: &str) -> Outcome<f64> {
    match v.as_f64() {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(err(path, "expected a finite number")),
    }
}

fn positive(v: &Value, path: &str) -> Outcome<f64> {
    let x = number(v, path)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(err(path, format!("expected a positive number, got {x}")))
    }
}

fn count(v: &Value, path: &str) -> Outcome<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| err(path, "expected a non-negative integer"))
}

fn check_keys(map: &Map<String, Value>, allowed: &[&str], path: &str) -> Outcome<()> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            let at = if path.is_empty() {
                key.clone()
            } else {
                format!("{path}.{key}")
            };
            return Err(err(&at, "unknown field"));
        }
    }
    Ok(())
}

fn required<'a>(map: &'a Map<String, Value>, key: &str, path: &str) -> Outcome<&'a Value> {
    map.get(key).ok_or_else(|| {
        let at = if path.is_empty() {
            key.to_string()
        } else {
            format!("{path}.{key}")
        };
        err(&at, "missing required field")
    })
}

fn parse_modes(v: &Value) -> Outcome<Vec<Vec<Vec<f64>>>> {
    let list = array(v, "modes")?;
    if list.is_empty() {
        return Err(err("modes", "at least one mode is required"));
    }
    let mut out = Vec::with_capacity(list.len());
    let mut dim = None;
    for (i, m) in list.iter().enumerate() {
        let path = format!("modes[{i}]");
        let rows = array(m, &path)?;
        let n = rows.len();
        if n == 0 {
            return Err(err(&path, "matrix has no rows"));
        }
        if let Some(d) = dim {
            if d != n {
                return Err(err(&path, format!("expected a {d}x{d} matrix, got {n} rows")));
            }
        }
        dim = Some(n);
        let mut mat = Vec::with_capacity(n);
        for (r, row) in rows.iter().enumerate() {
            let rpath = format!("{path}[{r}]");
            let entries = array(row, &rpath)?;
            if entries.len() != n {
                return Err(err(
                    &rpath,
                    format!("expected {n} entries for a square matrix, got {}", entries.len()),
                ));
            }
            let vals = entries
                .iter()
                .enumerate()
                .map(|(c, x)| number(x, &format!("{rpath}[{c}]")))
                .collect::<Outcome<Vec<f64>>>()?;
            mat.push(vals);
        }
        out.push(mat);
    }
    Ok(out)
}

fn parse_signal(v: &Value, modes: usize) -> Outcome<SwitchingSignal> {
    let map = object(v, "signal")?;
    check_keys(map, &["k", "repeat", "segments"], "signal")?;
    let k = count(required(map, "k", "signal")?, "signal.k")?;
    if k != modes {
        return Err(err(
            "signal.k",
            format!("{k} modes declared but {modes} matrices given"),
        ));
    }
    let repeat = match map.get("repeat") {
        None => Repeat::Periodic,
        Some(r) => match r.as_str() {
            Some("periodic") => Repeat::Periodic,
            Some("truncated") => Repeat::Truncated,
            _ => return Err(err("signal.repeat", "expected \"periodic\" or \"truncated\"")),
        },
    };
    let segs = array(required(map, "segments", "signal")?, "signal.segments")?;
    if segs.is_empty() {
        return Err(err("signal.segments", "at least one segment is required"));
    }
    let mut segments = Vec::with_capacity(segs.len());
    for (j, s) in segs.iter().enumerate() {
        let path = format!("signal.segments[{j}]");
        let pair = array(s, &path)?;
        if pair.len() != 2 {
            return Err(err(&path, "expected [mode, duration]"));
        }
        let mode = count(&pair[0], &format!("{path}[0]"))?;
        if mode == 0 || mode > k {
            return Err(err(&format!("{path}[0]"), format!("mode {mode} is not in 1..={k}")));
        }
        let duration = positive(&pair[1], &format!("{path}[1]"))?;
        segments.push((mode, duration));
    }
    SwitchingSignal::new(k, segments, repeat).map_err(|e| err("signal", e))
}

fn parse_flow(v: &Value, n: usize) -> Outcome<FlowSpec> {
    let map = object(v, "flow")?;
    check_keys(map, &["x0", "times", "horizon", "density"], "flow")?;
    let x0v = array(required(map, "x0", "flow")?, "flow.x0")?;
    if x0v.len() != n {
        return Err(err("flow.x0", format!("expected {n} entries, got {}", x0v.len())));
    }
    let x0 = x0v
        .iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("flow.x0[{i}]")))
        .collect::<Outcome<Vec<f64>>>()?;
    let times = match (map.get("times"), map.get("horizon")) {
        (Some(t), None) => {
            let ts = array(t, "flow.times")?
                .iter()
                .enumerate()
                .map(|(i, x)| number(x, &format!("flow.times[{i}]")))
                .collect::<Outcome<Vec<f64>>>()?;
            if ts.is_empty() {
                return Err(err("flow.times", "at least one time is required"));
            }
            FlowTimes::Explicit(ts)
        }
        (None, Some(h)) => {
            let horizon = positive(h, "flow.horizon")?;
            let density = match map.get("density") {
                Some(d) => count(d, "flow.density")?.max(1),
                None => swent::flow::DEFAULT_SAMPLE_DENSITY,
            };
            FlowTimes::Sampled { horizon, density }
        }
        _ => return Err(err("flow", "give exactly one of \"times\" or \"horizon\"")),
    };
    Ok(FlowSpec { x0, times })
}

/// Validates a parsed JSON document into a run configuration.
pub fn from_value(doc: &Value) -> Outcome<RunConfig> {
    let top = object(doc, "$")?;
    check_keys(top, TOP_KEYS, "")?;
    let rows = parse_modes(required(top, "modes", "")?)?;
    let modes = ModeSet::from_rows(&rows).map_err(|e| err("modes", e))?;
    let signal = parse_signal(required(top, "signal", "")?, rows.len())?;
    let n = modes.n();
    let system = SwitchedSystem::new(modes, signal).map_err(|e| err("signal", e))?;

    let estimation = match top.get("estimation") {
        None => None,
        Some(v) => {
            object(v, "estimation")?;
            let cfg: EstimationConfig = serde_json::from_value(v.clone()).map_err(|e| err("estimation", e))?;
            cfg.validate().map_err(|e| err("estimation", e))?;
            Some(cfg)
        }
    };
    let flow = top.get("flow").map(|v| parse_flow(v, n)).transpose()?;
    let horizon = match top.get("analysis") {
        None => None,
        Some(v) => {
            let map = object(v, "analysis")?;
            check_keys(map, &["horizon"], "analysis")?;
            map.get("horizon")
                .map(|h| positive(h, "analysis.horizon"))
                .transpose()?
        }
    };
    Ok(RunConfig {
        system,
        estimation,
        flow,
        horizon,
    })
}

pub fn load(path: &Path) -> Outcome<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))
        .exit(ExitKind::Io)?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    from_value(&doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn example() -> Value {
        json!({
            "modes": [[[2, 0], [0, 0]], [[2, 0], [0, -1]]],
            "signal": {"k": 2, "repeat": "periodic", "segments": [[1, 1.0], [2, 1.0]]}
        })
    }

    fn message(doc: Value) -> String {
        let f = from_value(&doc).unwrap_err();
        assert_eq!(f.kind, ExitKind::Config);
        f.to_string()
    }

    #[test]
    fn parses_example_system() {
        let cfg = from_value(&example()).unwrap();
        assert_eq!(cfg.system.n(), 2);
        assert_eq!(cfg.system.modes().k(), 2);
        assert!(cfg.estimation.is_none());
    }

    #[test]
    fn unequal_dimensions_cite_mode_path() {
        let mut doc = example();
        doc["modes"][1] = json!([[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
        assert!(message(doc).starts_with("modes[1]:"));
    }

    #[test]
    fn non_square_row_cites_row_path() {
        let mut doc = example();
        doc["modes"][0][1] = json!([0]);
        assert!(message(doc).starts_with("modes[0][1]:"));
    }

    #[test]
    fn empty_segments_rejected() {
        let mut doc = example();
        doc["signal"]["segments"] = json!([]);
        assert!(message(doc).starts_with("signal.segments:"));
    }

    #[test]
    fn bad_segment_fields() {
        let mut doc = example();
        doc["signal"]["segments"][1] = json!([3, 1.0]);
        assert!(message(doc).starts_with("signal.segments[1][0]:"));
        let mut doc = example();
        doc["signal"]["segments"][0] = json!([1, -1.0]);
        assert!(message(doc).starts_with("signal.segments[0][1]:"));
        let mut doc = example();
        doc["signal"]["k"] = json!(3);
        assert!(message(doc).starts_with("signal.k:"));
    }

    #[test]
    fn estimation_block_is_validated() {
        let mut doc = example();
        doc["estimation"] = json!({"horizons": [4, 8, 12], "epsilons": [0.5, 0.25], "grid_resolution": 128});
        assert!(message(doc).starts_with("estimation:"));
        let mut doc = example();
        doc["estimation"] = json!({"horizons": [4, 8, 12], "bogus": 1});
        assert!(message(doc).starts_with("estimation:"));
        let mut doc = example();
        doc["estimation"] = json!({"horizons": [2, 4, 6], "method": "grid_formula"});
        assert!(from_value(&doc).unwrap().estimation.is_some());
    }

    #[test]
    fn flow_block() {
        let mut doc = example();
        doc["flow"] = json!({"x0": [1, 1], "horizon": 2.0});
        assert!(matches!(
            from_value(&doc).unwrap().flow.unwrap().times,
            FlowTimes::Sampled { horizon, .. } if horizon == 2.0
        ));
        doc["flow"] = json!({"x0": [1], "times": [0, 1]});
        assert!(message(doc).starts_with("flow.x0:"));
    }

    #[test]
    fn unknown_top_level_field() {
        let mut doc = example();
        doc["mdoes"] = json!([]);
        assert!(message(doc).starts_with("mdoes:"));
    }
}
