use std::fs;
use std::path::Path;

use oselab::catalog::{self, Family};
use oselab::drivers::{Driver, DriverSpec};
use oselab::interval_maps::{MapSpec, PfMatrix, PiecewiseAffineMap};
use serde::de::DeserializeOwned;

use crate::UsageError;

/// Deserializes `text` reporting the failing field path and position.
pub fn parse_json<T: DeserializeOwned>(origin: &str, text: &str) -> Result<T, UsageError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.inner();
        let field = if path == "." { String::new() } else { format!(" field `{path}`:") };
        let place = if inner.line() > 0 {
            format!(" line {}, column {}:", inner.line(), inner.column())
        } else {
            String::new()
        };
        UsageError(format!("{origin}:{place}{field} {inner}"))
    })
}

fn read_file(path: &Path) -> Result<String, UsageError> {
    fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

/// Generators named by a family, a comma list of catalogue names, or a JSON
/// file holding one map or an array of maps.
#[derive(Debug, Clone)]
pub struct MapSet {
    pub labels: Vec<String>,
    pub matrices: Vec<PfMatrix>,
}

pub fn parse_maps(arg: &str) -> Result<MapSet, UsageError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = read_file(path)?;
        let specs: Vec<MapSpec> = if text.trim_start().starts_with('[') {
            parse_json(arg, &text)?
        } else {
            vec![parse_json(arg, &text)?]
        };
        if specs.is_empty() {
            return Err(UsageError(format!("{arg}: no maps")));
        }
        let mut set = MapSet {
            labels: Vec::new(),
            matrices: Vec::new(),
        };
        for (i, spec) in specs.iter().enumerate() {
            let map = PiecewiseAffineMap::from_spec(spec)
                .map_err(|e| UsageError(format!("{arg}: map {i}: {e}")))?;
            let pf = map
                .pf_matrix()
                .map_err(|e| UsageError(format!("{arg}: map {i}: {e}")))?;
            set.labels.push(format!("{arg}#{i}"));
            set.matrices.push(pf);
        }
        return Ok(set);
    }
    if let Ok(family) = arg.parse::<Family>() {
        return Ok(MapSet {
            labels: (1..=family.len())
                .map(|i| match family {
                    Family::S => "S".to_string(),
                    Family::S1to6 => format!("S{i}"),
                    _ => format!("T{i}"),
                })
                .collect(),
            matrices: family.pf_matrices(),
        });
    }
    let mut set = MapSet {
        labels: Vec::new(),
        matrices: Vec::new(),
    };
    for name in arg.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = catalog::by_name(name).map_err(|e| UsageError(format!("--maps: {e}")))?;
        let pf = m.pf_matrix().map_err(|e| UsageError(format!("--maps {name}: {e}")))?;
        set.labels.push(name.to_string());
        set.matrices.push(pf);
    }
    if set.matrices.is_empty() {
        return Err(UsageError("--maps: nothing named".to_string()));
    }
    Ok(set)
}

/// `omega-star`, `periodic:123` (or bare `123`), `iid:K:SEED`,
/// `explicit:ORIGIN:1,2,3`, inline JSON or a JSON file.
pub fn parse_driver(arg: &str) -> Result<Driver, UsageError> {
    let bad = |msg: String| UsageError(format!("--driver {arg:?}: {msg}"));
    let trimmed = arg.trim();
    let spec: DriverSpec = if trimmed.starts_with('{') {
        parse_json("--driver", trimmed)?
    } else if Path::new(trimmed).is_file() {
        parse_json(trimmed, &read_file(Path::new(trimmed))?)?
    } else {
        let lower = trimmed.to_ascii_lowercase();
        let mut parts = lower.splitn(2, ':');
        let head = parts.next().unwrap_or_default();
        let rest = parts.next();
        let digits = |s: &str| -> Result<Vec<usize>, UsageError> {
            s.chars()
                .filter(|c| *c != ',')
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| bad(format!("not a symbol: {c:?}")))
                })
                .collect()
        };
        match (head, rest) {
            ("omega-star" | "omega*" | "omega_star", None) => return Ok(Driver::omega_star()),
            ("periodic", Some(w)) => DriverSpec::Periodic { word: digits(w)? },
            (w, None) if !w.is_empty() && w.chars().all(|c| c.is_ascii_digit()) => {
                DriverSpec::Periodic { word: digits(w)? }
            }
            ("iid", Some(r)) => {
                let (k, seed) = r
                    .split_once(':')
                    .ok_or_else(|| bad("expected iid:K:SEED".to_string()))?;
                DriverSpec::Iid {
                    alphabet: k.parse().map_err(|_| bad(format!("alphabet {k:?}")))?,
                    seed: seed.parse().map_err(|_| bad(format!("seed {seed:?}")))?,
                }
            }
            ("explicit", Some(r)) => {
                let (origin, word) = r
                    .split_once(':')
                    .ok_or_else(|| bad("expected explicit:ORIGIN:SYMBOLS".to_string()))?;
                DriverSpec::Explicit {
                    symbols: digits(word)?,
                    origin: origin.parse().map_err(|_| bad(format!("origin {origin:?}")))?,
                }
            }
            _ => return Err(bad("unrecognised driver".to_string())),
        }
    };
    Driver::from_spec(&spec).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drivers_from_strings() {
        assert_eq!(parse_driver("123").unwrap().period(), Some(3));
        assert_eq!(parse_driver("periodic:1,2").unwrap().period(), Some(2));
        assert_eq!(
            parse_driver("omega-star").unwrap().window(-1, 3).unwrap(),
            Driver::omega_star().window(-1, 3).unwrap()
        );
        let d = parse_driver("explicit:-1:21").unwrap();
        assert_eq!(d.symbol_at(-1).unwrap(), 2);
        assert!(parse_driver("iid:6:4").is_ok());
        assert!(parse_driver("{\"type\": \"periodic\", \"word\": [1, 2]}").is_ok());
        assert!(parse_driver("sometimes").is_err());
    }

    #[test]
    fn json_errors_carry_position_and_field() {
        let e = parse_driver("{\"type\": \"periodic\",\n \"word\": [1, }").unwrap_err();
        assert!(e.0.contains("line 2"), "{}", e.0);
        let e = parse_json::<MapSpec>("map.json", "{\"cells\": 9,\n \"slopes\": [\"3\", 4]}").unwrap_err();
        assert!(e.0.contains("line 2"), "{}", e.0);
        assert!(e.0.contains("slopes[1]"), "{}", e.0);
    }

    #[test]
    fn maps_from_names_and_families() {
        assert_eq!(parse_maps("t123").unwrap().matrices.len(), 3);
        let s = parse_maps("T1, rho").unwrap();
        assert_eq!(s.labels, vec!["T1", "rho"]);
        assert!(parse_maps("T9").is_err());
    }
}
