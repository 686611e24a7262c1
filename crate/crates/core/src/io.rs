//! CSV ingestion and scenario files.
//!
//! CSV dialect: comma separated, UTF-8, header row required, `.` decimal
//! point, scientific notation accepted. `NaN` and infinities are rejected.
//! Dataset files carry the response in a leading `y` column.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::regression::Dataset;
use crate::simulation::{
    default_beta_star, default_noise_scale, ErrorLaw, Method, Model, Scenario, SolverSettings, TuningGrid,
};

/// Header names and numeric body of a CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub values: Array2<f64>,
}

fn parse_err(path: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Parse a numeric CSV table from `reader`; `name` labels error messages.
pub fn read_table<R: Read>(reader: R, name: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(str::to_string).collect(),
        Err(e) => return Err(parse_err(name, 1, format!("unreadable header: {e}"))),
    };
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(parse_err(name, 1, "missing header row"));
    }
    let width = headers.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(name, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(parse_err(
                name,
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(
                    name,
                    line,
                    format!("column `{}`: `{field}` is not a number", headers[col]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    name,
                    line,
                    format!("column `{}`: non-finite value `{field}`", headers[col]),
                ));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(name, 2, "no data rows"));
    }
    let values = Array2::from_shape_vec((rows, width), data).expect("rows have uniform width");
    Ok(Table { headers, values })
}

fn open(path: &Path) -> Result<(File, String)> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| parse_err(&name, 0, format!("cannot open: {e}")))?;
    Ok((file, name))
}

pub fn read_table_file(path: &Path) -> Result<Table> {
    let (file, name) = open(path)?;
    read_table(file, &name)
}

/// Dataset from a table whose first column is `y`.
pub fn dataset_from_table(table: Table, name: &str) -> Result<Dataset> {
    if table.headers[0] != "y" {
        return Err(parse_err(
            name,
            1,
            format!("first column must be `y`, found `{}`", table.headers[0]),
        ));
    }
    if table.headers.len() < 2 {
        return Err(parse_err(name, 1, "no feature columns after `y`"));
    }
    let y: Array1<f64> = table.values.column(0).to_owned();
    let x = table.values.slice(ndarray::s![.., 1..]).to_owned();
    Dataset::new(x, y)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let (file, name) = open(path)?;
    dataset_from_table(read_table(file, &name)?, &name)
}

/// Feature matrix for prediction; a leading `y` column is dropped.
pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    let table = read_table_file(path)?;
    if table.headers[0] == "y" {
        if table.headers.len() < 2 {
            return Err(parse_err(
                &path.display().to_string(),
                1,
                "no feature columns after `y`",
            ));
        }
        Ok(table.values.slice(ndarray::s![.., 1..]).to_owned())
    } else {
        Ok(table.values)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BetaStarSpec {
    /// Number of leading nonzero coefficients.
    nonzero: usize,
    value: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    lambda: Option<Vec<f64>>,
    alpha: Option<Vec<f64>>,
    n_validation: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    model: Model,
    error: ErrorLaw,
    n: usize,
    p: usize,
    beta_star: Option<Vec<f64>>,
    beta_star_spec: Option<BetaStarSpec>,
    replications: usize,
    seed: u64,
    #[serde(default)]
    grid: GridFile,
    methods: Option<Vec<Method>>,
    tol: Option<f64>,
    max_iters: Option<usize>,
    rho: Option<f64>,
}

/// Parse and validate a scenario JSON document.
///
/// Required fields: `model`, `error`, `n`, `p`, `replications`, `seed`.
/// Coefficients come from `beta_star` or `beta_star_spec`
/// (`{"nonzero": s, "value": v}`); with neither, the first `min(20, p)`
/// entries are 3. A missing `grid` falls back to the default grid.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let f: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
    let beta_star = match (f.beta_star, f.beta_star_spec) {
        (Some(_), Some(_)) => {
            return Err(Error::Scenario(
                "fields `beta_star` and `beta_star_spec` are mutually exclusive".into(),
            ))
        }
        (Some(b), None) => b,
        (None, Some(spec)) => {
            if spec.nonzero > f.p {
                return Err(Error::Scenario(format!(
                    "field `beta_star_spec.nonzero`: {} exceeds p = {}",
                    spec.nonzero, f.p
                )));
            }
            default_beta_star(f.p, spec.nonzero, spec.value)
        }
        (None, None) => default_beta_star(f.p, 20.min(f.p), 3.0),
    };
    let defaults = TuningGrid::default_for(f.n.max(1), f.p, default_noise_scale(&beta_star));
    let grid = TuningGrid {
        lambda: f.grid.lambda.unwrap_or(defaults.lambda),
        alpha: f.grid.alpha.unwrap_or(defaults.alpha),
        n_validation: f.grid.n_validation.unwrap_or(defaults.n_validation),
    };
    let solver_defaults = SolverSettings::default();
    let scenario = Scenario {
        model: f.model,
        error: f.error,
        n: f.n,
        p: f.p,
        beta_star,
        replications: f.replications,
        seed: f.seed,
        grid,
        methods: f
            .methods
            .unwrap_or_else(|| vec![Method::Lasso, Method::RLasso, Method::RaLasso, Method::Oracle]),
        solver: SolverSettings {
            tol: f.tol.unwrap_or(solver_defaults.tol),
            max_iters: f.max_iters.unwrap_or(solver_defaults.max_iters),
            rho: f.rho.unwrap_or(solver_defaults.rho),
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_dataset() {
        let csv = "y,a,b\n1.5,1e-3,2\n-2,0.5,-1.25E2\n";
        let t = read_table(csv.as_bytes(), "mem").unwrap();
        let d = dataset_from_table(t, "mem").unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.p(), 2);
        assert_eq!(d.x()[[1, 1]], -125.0);
        assert_eq!(d.y()[0], 1.5);
    }

    #[test]
    fn ragged_row_names_line() {
        let csv = "y,a\n1,2\n3\n4,5\n";
        let err = read_table(csv.as_bytes(), "mem").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_and_garbage() {
        for (csv, bad_line) in [("y,a\n1,NaN\n", 2), ("y,a\n1,2\n1,inf\n", 3), ("y,a\n1,2\n1,x\n", 3)] {
            match read_table(csv.as_bytes(), "mem").unwrap_err() {
                Error::Parse { line, .. } => assert_eq!(line, bad_line, "{csv}"),
                other => panic!("{other:?}"),
            }
        }
        assert!(read_table("".as_bytes(), "mem").is_err());
        assert!(read_table("y,a\n".as_bytes(), "mem").is_err());
        let t = read_table("a,y\n1,2\n".as_bytes(), "mem").unwrap();
        assert!(dataset_from_table(t, "mem").is_err());
    }

    #[test]
    fn scenario_parsing() {
        let s = parse_scenario(
            r#"{"model":"homoscedastic","error":"lognormal","n":50,"p":20,
                "beta_star_spec":{"nonzero":3,"value":2.0},"replications":2,"seed":7,
                "grid":{"lambda":[0.1,0.2],"alpha":[1.0],"n_validation":3}}"#,
        )
        .unwrap();
        assert_eq!(s.error, ErrorLaw::LogNormal);
        assert_eq!(s.beta_star.iter().filter(|b| **b == 2.0).count(), 3);
        assert_eq!(s.grid.n_validation, 3);

        let err = parse_scenario(r#"{"model":"homoscedastic","error":"cauchy","n":5,"p":2,"replications":1,"seed":1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("cauchy"), "{err}");
        let err = parse_scenario(r#"{"model":"homoscedastic","error":"weibull","p":2,"replications":1,"seed":1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("`n`"), "{err}");
        let err = parse_scenario(
            r#"{"model":"homoscedastic","error":"weibull","n":5,"p":2,"beta_star":[1],"replications":1,"seed":1}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("beta_star"), "{err}");
    }
}
