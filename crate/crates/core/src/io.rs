//! JSON model files and CSV exports.
//!
//! The file layout is documented in `docs/model-schema.md`.

use crate::backward::fmt_num;
use crate::error::{Error, Result};
use crate::measure::{PiecewiseFn, StieltjesMeasure};
use crate::model::{
    validate_model, CashFlow, CumulativeRate, Model, PairDependence, Path, ReserveDependence,
    StateDependence, StateSpace, ViolationKind,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    states: Vec<usize>,
    alpha: Vec<f64>,
    horizon: f64,
    #[serde(default)]
    lambda: BTreeMap<String, CumulativeRate>,
    #[serde(default)]
    phi: BTreeMap<usize, StieltjesMeasure>,
    #[serde(default)]
    sojourn: BTreeMap<usize, StieltjesMeasure>,
    #[serde(default)]
    transition: BTreeMap<String, PiecewiseFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reserve_dependence: Option<DependenceDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    absorbing: Option<Vec<usize>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DependenceDoc {
    #[serde(default)]
    pairs: BTreeMap<String, PairDependence>,
    #[serde(default)]
    states: BTreeMap<usize, StateDependence>,
}

fn pair_key(i: usize, j: usize) -> String {
    format!("{i}->{j}")
}

fn parse_pair(key: &str, field: &str) -> Result<(usize, usize)> {
    let bad = || Error::Schema {
        path: format!("{field}.{key}"),
        message: "expected a key of the form \"i->j\"".into(),
    };
    let (a, b) = key.split_once("->").ok_or_else(bad)?;
    let i = a.trim().parse().map_err(|_| bad())?;
    let j = b.trim().parse().map_err(|_| bad())?;
    Ok((i, j))
}

fn pairs<T>(map: BTreeMap<String, T>, field: &str) -> Result<BTreeMap<(usize, usize), T>> {
    map.into_iter()
        .map(|(k, v)| Ok((parse_pair(&k, field)?, v)))
        .collect()
}

fn unpairs<T: Clone>(map: &BTreeMap<(usize, usize), T>) -> BTreeMap<String, T> {
    map.iter().map(|(&(i, j), v)| (pair_key(i, j), v.clone())).collect()
}

impl ModelDoc {
    fn into_model(self) -> Result<Model> {
        let reserve_dependence = match self.reserve_dependence {
            None => None,
            Some(d) => Some(ReserveDependence {
                pairs: pairs(d.pairs, "reserve_dependence.pairs")?,
                states: d.states,
            }),
        };
        Ok(Model {
            states: StateSpace {
                states: self.states,
                absorbing_hint: self.absorbing,
            },
            alpha: self.alpha,
            lambda: pairs(self.lambda, "lambda")?,
            phi: self.phi,
            cashflow: CashFlow {
                sojourn: self.sojourn,
                transition: pairs(self.transition, "transition")?,
                reserve_dependence,
            },
            horizon: self.horizon,
        })
    }

    fn from_model(model: &Model) -> Self {
        Self {
            states: model.states.states.clone(),
            alpha: model.alpha.clone(),
            horizon: model.horizon,
            lambda: unpairs(&model.lambda),
            phi: model.phi.clone(),
            sojourn: model.cashflow.sojourn.clone(),
            transition: unpairs(&model.cashflow.transition),
            reserve_dependence: model.cashflow.reserve_dependence.as_ref().map(|d| DependenceDoc {
                pairs: unpairs(&d.pairs),
                states: d.states.clone(),
            }),
            absorbing: model.states.absorbing_hint.clone(),
        }
    }
}

/// Parse a model document without validating it.
pub fn parse_model(text: &str) -> Result<Model> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ModelDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let path = e.path().to_string();
        Error::Schema {
            path: if path == "." { String::new() } else { path },
            message: format!("{inner}"),
        }
    })?;
    doc.into_model()
}

/// Pretty JSON in the model file layout.
pub fn model_to_json(model: &Model) -> Result<String> {
    serde_json::to_string_pretty(&ModelDoc::from_model(model))
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Input(format!("model cannot be serialized: {e}")))
}

fn kind_name(kind: ViolationKind) -> String {
    match serde_json::to_value(kind) {
        Ok(serde_json::Value::String(s)) => s,
        _ => format!("{kind:?}"),
    }
}

/// Parse and validate. Invalid models are refused; `allow_invalid` lets
/// everything through except cycles of unbounded rates.
pub fn load_model_str(text: &str, allow_invalid: bool) -> Result<Model> {
    let model = parse_model(text)?;
    let report = validate_model(&model)?;
    let blocking: Vec<_> = report
        .violations
        .iter()
        .filter(|v| !allow_invalid || v.kind == ViolationKind::UnboundedCycle)
        .map(|v| format!("{}: {}", kind_name(v.kind), v.message))
        .collect();
    if !blocking.is_empty() {
        return Err(Error::Invalid(blocking.join("; ")));
    }
    Ok(model)
}

pub fn load_model(file: &std::path::Path, allow_invalid: bool) -> Result<Model> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| Error::Io(format!("{}: {e}", file.display())))?;
    load_model_str(&text, allow_invalid)
}

/// One row per jump: `path_id,time,from,to`.
pub fn paths_to_csv(paths: &[Path]) -> String {
    let mut out = String::from("path_id,time,from,to\n");
    for (id, p) in paths.iter().enumerate() {
        for w in p.points.windows(2) {
            let _ = writeln!(out, "{id},{},{},{}", fmt_num(w[1].0), w[0].1, w[1].1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::RateCurve;

    const TERM: &str = r#"{
        "states": [0, 1],
        "alpha": [1, 0],
        "horizon": 10,
        "lambda": {"0->1": {"segments": [{"start": 0, "end": 10, "shape": {"constant": 0.1}}]}},
        "phi": {"0": {"segments": [{"start": 0, "end": 10, "shape": {"constant": 0.05}}]},
                "1": {"segments": [{"start": 0, "end": 10, "shape": {"constant": 0.05}}]}},
        "transition": {"0->1": [{"start": 0, "end": 10, "shape": {"constant": 1}}]}
    }"#;

    #[test]
    fn term_insurance_loads() {
        let m = load_model_str(TERM, false).unwrap();
        assert_eq!(m.labels(), &[0, 1]);
        assert_eq!(m.lambda[&(0, 1)], CumulativeRate::markov(RateCurve::constant(0.1, 10.0)));
    }

    #[test]
    fn round_trip() {
        let m = parse_model(TERM).unwrap();
        let again = parse_model(&model_to_json(&m).unwrap()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn schema_error_has_path() {
        let bad = TERM.replace("\"constant\": 0.1", "\"constant\": \"x\"");
        match parse_model(&bad) {
            Err(Error::Schema { path, .. }) => assert!(path.starts_with("lambda"), "{path}"),
            other => panic!("{other:?}"),
        }
        match parse_model(&TERM.replace("\"0->1\": {\"seg", "\"0-1\": {\"seg")) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "lambda.0-1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn alpha_must_sum_to_one() {
        let bad = TERM.replace("[1, 0]", "[0.9, 0]");
        match load_model_str(&bad, false) {
            Err(Error::Invalid(msg)) => assert!(msg.contains("alpha"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(load_model_str(&bad, true).is_ok());
    }

    #[test]
    fn path_dump() {
        let p = Path::new(vec![(0.0, 0), (1.5, 1)]).unwrap();
        assert_eq!(
            paths_to_csv(&[Path::start(0), p]),
            "path_id,time,from,to\n1,1.5000000000000000e0,0,1\n"
        );
    }
}
