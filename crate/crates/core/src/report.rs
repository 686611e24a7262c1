//! Serialization of results: JSON with 17 significant digits, Table-style
//! CSV reports and the provenance header attached to every output.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::{json, Map, Value};

use crate::error::Result;
use crate::rng::RNG_NAME;
use crate::simulation::{Method, MetricsReport};

/// Formats every `f64` with 17 significant digits so values survive a
/// text round trip bit for bit. Non-finite values become `null`.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExactFloatFormatter;

impl Formatter for ExactFloatFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        if value.is_finite() {
            write!(writer, "{}", format_f64(value))
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.write_f64(writer, f64::from(value))
    }
}

/// `{:.16e}`: 17 significant digits, valid as a JSON number.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serialize `value` as compact JSON using [`ExactFloatFormatter`].
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloatFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| crate::Error::InvalidArgument(format!("serialization failed: {e}")))?;
    // the formatter only emits ASCII
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}

/// Tool version, seed, generator and the effective flag set of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub rng: String,
    pub flags: Map<String, Value>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, flags: Map<String, Value>) -> Self {
        Provenance {
            tool: "ralasso".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            rng: RNG_NAME.into(),
            flags,
        }
    }

    /// `# key: value` lines for CSV outputs.
    pub fn csv_header(&self) -> String {
        let flags = to_json_string(&self.flags).unwrap_or_else(|_| "{}".into());
        format!(
            "# tool: {} {}\n# command: {}\n# seed: {}\n# rng: {}\n# flags: {}\n",
            self.tool, self.version, self.command, self.seed, self.rng, flags
        )
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_else(|| "NA".into())
}

impl MetricsReport {
    /// One row per method × metric: `l2`, `l1`, `fp`, `fn`, and for the
    /// competitors of RA-Lasso `rg_l2`, `rg_l1` (RA-Lasso's relative gain
    /// over that method). Tuned parameters follow as `lambda` / `alpha`.
    pub fn to_csv(&self, provenance: &Provenance) -> String {
        let mut out = provenance.csv_header();
        out.push_str(&format!(
            "# scenario: model={:?} error={} n={} p={} replications={} n_validation={}\n",
            self.scenario.model,
            self.scenario.error.name(),
            self.scenario.n,
            self.scenario.p,
            self.scenario.replications,
            self.scenario.grid.n_validation
        ));
        let join = |v: &[f64]| v.iter().map(|x| format_f64(*x)).collect::<Vec<_>>().join(" ");
        out.push_str(&format!("# lambda_grid: {}\n", join(&self.scenario.grid.lambda)));
        out.push_str(&format!("# alpha_grid: {}\n", join(&self.scenario.grid.alpha)));
        out.push_str("method,metric,value\n");
        for s in &self.methods {
            let name = s.method.name();
            for (metric, value) in [("l2", s.l2), ("l1", s.l1), ("fp", s.fp), ("fn", s.fn_)] {
                out.push_str(&format!("{name},{metric},{}\n", format_f64(value)));
            }
            if let Some(g) = self.gain(s.method) {
                out.push_str(&format!("{name},rg_l2,{}\n", opt(g.l2)));
                out.push_str(&format!("{name},rg_l1,{}\n", opt(g.l1)));
            }
            if let Some(pt) = s.tuned {
                out.push_str(&format!("{name},lambda,{}\n", format_f64(pt.lambda)));
                if let Some(a) = pt.alpha {
                    out.push_str(&format!("{name},alpha,{}\n", format_f64(a)));
                }
            }
        }
        out
    }

    /// JSON mirror of the table: per-method metrics plus the relative gains
    /// keyed `A,L`, `A,R` and `A,C`.
    pub fn to_json(&self, provenance: &Provenance) -> Result<String> {
        let mut methods = Map::new();
        for s in &self.methods {
            methods.insert(
                s.method.name().into(),
                json!({
                    "l2": s.l2,
                    "l1": s.l1,
                    "fp": s.fp,
                    "fn": s.fn_,
                    "lambda": s.tuned.map(|p| p.lambda),
                    "alpha": s.tuned.and_then(|p| p.alpha),
                }),
            );
        }
        let mut gains = Map::new();
        for g in &self.gains {
            let key = match g.versus {
                Method::Lasso => "A,L",
                Method::RLasso => "A,R",
                Method::CatoniLasso => "A,C",
                _ => continue,
            };
            gains.insert(key.into(), json!({ "l2": g.l2, "l1": g.l1 }));
        }
        let doc = json!({
            "provenance": provenance,
            "scenario": self.scenario,
            "methods": methods,
            "relative_gain": gains,
        });
        to_json_string(&doc)
    }
}

/// Residuals sorted ascending, one per line under a `residual` header.
pub fn sorted_residuals_csv(residuals: &[f64], provenance: &Provenance) -> String {
    let mut r = residuals.to_vec();
    r.sort_by(f64::total_cmp);
    let mut out = provenance.csv_header();
    out.push_str("residual\n");
    for v in r {
        out.push_str(&format_f64(v));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_f64(1.0), "1.0000000000000000e0");
        assert_eq!(format_f64(-0.1), "-1.0000000000000001e-1");
        let s = to_json_string(&json!({"a": [0.1, f64::NAN, 3]})).unwrap();
        assert_eq!(s, r#"{"a":[1.0000000000000001e-1,null,3]}"#);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"][0].as_f64(), Some(0.1));
    }

    proptest! {
        #[test]
        fn json_round_trip_is_exact(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = to_json_string(&vec![v]).unwrap();
            let back: Vec<f64> = serde_json::from_str(&s).unwrap();
            prop_assert_eq!(back[0].to_bits(), v.to_bits());
        }
    }
}
