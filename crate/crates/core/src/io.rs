//! Loading and re-validating output documents.
//!
//! JSON documents are told apart by their keys, so files written by any
//! subcommand can be handed to [`parse_document`] without a type hint.
//! CSV outputs are recognized by their header line.

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::doa::DoaEstimate;
use crate::dynamics::{classify, SystemDef, VectorField};
use crate::error::{Error, Result};
use crate::ftlf::{self, FtCertificate};
use crate::linalg::Vector;
use crate::lyap::{LyapExport, LyapFunction};
use crate::ode::{self, IntegratorCfg};
use crate::pipeline::{EquilibriaReport, RunConfig};
use crate::reproduce::{ExampleReport, EXAMPLE_IDS};

#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Certificate(Box<FtCertificate>),
    Lyapunov(Box<LyapExport>),
    Estimate(Box<DoaEstimate>),
    Report(Box<ExampleReport>),
    Equilibria(Box<EquilibriaReport>),
    Config(Box<RunConfig>),
    Contour(CsvTable),
    Trajectory(CsvTable),
}

impl Document {
    pub fn kind(&self) -> &'static str {
        match self {
            Document::Certificate(_) => "certificate",
            Document::Lyapunov(_) => "lyapunov function",
            Document::Estimate(_) => "DOA estimate",
            Document::Report(_) => "example report",
            Document::Equilibria(_) => "equilibria report",
            Document::Config(_) => "run configuration",
            Document::Contour(_) => "contour CSV",
            Document::Trajectory(_) => "trajectory CSV",
        }
    }
}

/// Numeric CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn typed<T: DeserializeOwned>(v: Value) -> Result<Box<T>> {
    Ok(Box::new(serde_json::from_value(v)?))
}

pub fn parse_document(text: &str) -> Result<Document> {
    let trimmed = text.trim_start();
    if !trimmed.starts_with('{') {
        return parse_csv(text);
    }
    let v: Value = serde_json::from_str(text)?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Validation("expected a JSON object".into()))?;
    let has = |k: &str| obj.contains_key(k);
    if has("C_V") {
        Ok(Document::Certificate(typed(v)?))
    } else if has("lyapunov") && has("C") {
        Ok(Document::Estimate(typed(v)?))
    } else if has("kind") && has("base") {
        Ok(Document::Lyapunov(typed(v)?))
    } else if has("example") && has("checks") {
        Ok(Document::Report(typed(v)?))
    } else if has("equilibria") {
        Ok(Document::Equilibria(typed(v)?))
    } else {
        let cfg = RunConfig::parse(text)?;
        Ok(Document::Config(Box::new(cfg)))
    }
}

/// Reads a numeric CSV and classifies it as a contour or trajectory.
pub fn parse_csv(text: &str) -> Result<Document> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Validation(format!("bad CSV header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Validation(format!("bad CSV row {}: {e}", line + 2)))?;
        let row = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Validation(format!("row {}: `{f}` is not a number", line + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let table = CsvTable { header, rows };
    let h = &table.header;
    let coords = |from: usize| h[from..].iter().enumerate().all(|(i, c)| *c == format!("x{}", i + 1));
    if h.len() == 3 && h[0] == "polyline_id" && coords(1) {
        Ok(Document::Contour(table))
    } else if h.len() >= 2 && h[0] == "t" && coords(1) {
        Ok(Document::Trajectory(table))
    } else if !h.is_empty() && coords(0) {
        Ok(Document::Contour(table))
    } else {
        Err(Error::Validation(format!("unrecognized CSV header {h:?}")))
    }
}

/// One re-validation result.
#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

fn finding(name: &str, ok: bool, detail: impl Into<String>) -> Finding {
    Finding {
        name: name.into(),
        ok,
        detail: detail.into(),
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

/// Recomputes what a document records and compares.
///
/// A parse or rebuild error is returned as `Err`; disagreements are
/// returned as failing findings.
pub fn check_document(doc: &Document) -> Result<Vec<Finding>> {
    match doc {
        Document::Certificate(c) => check_certificate(c),
        Document::Lyapunov(e) => check_lyapunov(e),
        Document::Estimate(e) => check_estimate(e),
        Document::Report(r) => Ok(check_report(r)),
        Document::Equilibria(r) => check_equilibria(r),
        Document::Config(c) => {
            c.validate()?;
            Ok(vec![finding("configuration fields", true, "valid")])
        }
        Document::Contour(t) => Ok(check_contour(t)),
        Document::Trajectory(t) => Ok(check_trajectory(t)),
    }
}

fn check_certificate(c: &FtCertificate) -> Result<Vec<Finding>> {
    let sys = SystemDef::from_spec(&c.system)?;
    let n = sys.dim();
    if c.p.dim() != n || c.bounds.dim() != n || c.argmax.len() != n || c.equilibrium.len() != n {
        return Err(Error::Dimension("certificate fields disagree on dimension".into()));
    }
    let zero = Vector::zeros(n);
    let residual = sys.eval(&zero).amax();
    let a = sys.jacobian(&zero)?;
    let (pass, norm) = ftlf::check_linear_ft(&a, &c.p, c.d)?;
    let mu = ftlf::mu_certificate(&a, &c.p, c.d)?.mu();
    let x = Vector::from_column_slice(&c.argmax);
    let dv = match ode::flow(&sys, &x, c.d, &IntegratorCfg::default()) {
        Ok(y) => c.p.eval(&y) - c.p.eval(&x),
        Err(Error::FiniteEscape { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let expected_pass = c.escape.is_none() && c.max_decrease < 0.0;
    Ok(vec![
        finding("equilibrium at the origin", residual <= 1e-9, format!("|f(0)| = {residual:.3e}")),
        finding(
            "linear norm",
            close(norm, c.linear_norm, 1e-9) && pass == c.linear_pass,
            format!("recomputed {norm:.12} against {:.12}", c.linear_norm),
        ),
        finding("log-norm", close(mu, c.mu, 1e-9), format!("recomputed {mu:.12} against {:.12}", c.mu)),
        finding(
            "decrease at argmax",
            close(dv, c.max_decrease, 1e-6),
            format!("recomputed {dv:.6e} against {:.6e}", c.max_decrease),
        ),
        finding(
            "verdict",
            expected_pass == c.nonlinear_pass,
            format!("recorded {} for max decrease {:.3e}", c.nonlinear_pass, c.max_decrease),
        ),
    ])
}

fn check_lyapunov(e: &LyapExport) -> Result<Vec<Finding>> {
    let w = LyapFunction::from_export(e)?;
    let w0 = w.value(&Vector::zeros(w.dim()))?;
    Ok(vec![
        finding("rebuild", true, format!("{:?} in dimension {}", w.kind(), w.dim())),
        finding("vanishes at the equilibrium", w0.abs() <= 1e-12, format!("W(0) = {w0:.3e}")),
    ])
}

fn check_estimate(e: &DoaEstimate) -> Result<Vec<Finding>> {
    let w = LyapFunction::from_export(&e.lyapunov)?;
    let n = w.dim();
    if e.system != e.lyapunov.system {
        return Err(Error::Validation("estimate and W refer to different systems".into()));
    }
    if e.bounds.dim() != n || e.equilibrium.len() != n {
        return Err(Error::Dimension("estimate fields disagree on dimension".into()));
    }
    let mut out = vec![finding(
        "verdict",
        e.verdict == (e.max_wdot < 0.0 && !e.touches_box),
        format!("recorded {} with max Wdot {:.3e}, touches box {}", e.verdict, e.max_wdot, e.touches_box),
    )];
    if e.argmax.len() == n {
        let x = Vector::from_column_slice(&e.argmax);
        let (wx, wdot) = w.value_and_wdot(&x)?;
        out.push(finding(
            "Wdot at argmax",
            close(wdot, e.max_wdot, 1e-6),
            format!("recomputed {wdot:.6e} against {:.6e}", e.max_wdot),
        ));
        out.push(finding(
            "argmax inside the level set",
            wx <= e.c * (1.0 + 1e-9) + 1e-12,
            format!("W = {wx:.6e}, C = {:.6e}", e.c),
        ));
    } else if !e.argmax.is_empty() {
        return Err(Error::Dimension("argmax has the wrong dimension".into()));
    }
    let best_trial = e
        .trials
        .iter()
        .filter(|t| t.pass)
        .map(|t| t.level)
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(finding(
        "level is the best passing trial",
        !e.verdict || best_trial == e.c,
        format!("C = {}, best passing trial {best_trial}", e.c),
    ));
    if let Some(c) = &e.containment {
        out.push(finding(
            "containment record",
            c.contained == (!c.truncated && c.samples > 0 && c.worst_excess <= 1e-6),
            format!("worst excess {:.3e} over {} samples", c.worst_excess, c.samples),
        ));
    }
    Ok(out)
}

fn check_report(r: &ExampleReport) -> Vec<Finding> {
    let required_pass = r.checks.iter().all(|c| c.pass || c.informational);
    vec![
        finding("known example", EXAMPLE_IDS.contains(&r.example.as_str()), r.example.clone()),
        finding(
            "summary matches checks",
            required_pass == r.pass,
            format!("recorded {}, checks give {required_pass}", r.pass),
        ),
    ]
}

fn check_equilibria(r: &EquilibriaReport) -> Result<Vec<Finding>> {
    let sys = SystemDef::from_spec(&r.system)?;
    let mut out = Vec::new();
    for (i, e) in r.equilibria.iter().enumerate() {
        if e.x.len() != sys.dim() {
            return Err(Error::Dimension(format!("equilibrium {i} has the wrong dimension")));
        }
        let name = format!("equilibrium {}", i + 1);
        match classify(&sys, &e.point()) {
            Ok(again) => out.push(finding(
                &name,
                again.classification == e.classification,
                format!("{:?}", again.classification),
            )),
            Err(err) => out.push(finding(&name, false, err.to_string())),
        }
    }
    Ok(out)
}

fn all_finite(t: &CsvTable) -> bool {
    t.rows.iter().flatten().all(|v| v.is_finite())
}

fn widths_match(t: &CsvTable) -> bool {
    t.rows.iter().all(|r| r.len() == t.header.len())
}

fn check_contour(t: &CsvTable) -> Vec<Finding> {
    let mut out = vec![
        finding("row widths", widths_match(t), format!("{} columns", t.header.len())),
        finding("finite coordinates", all_finite(t), format!("{} rows", t.rows.len())),
    ];
    if t.header[0] == "polyline_id" {
        let ids_ok = t.rows.windows(2).all(|w| w[1][0] == w[0][0] || w[1][0] == w[0][0] + 1.0)
            && t.rows.first().is_none_or(|r| r[0] == 0.0);
        out.push(finding("polyline ids", ids_ok, "consecutive from 0"));
    }
    out
}

fn check_trajectory(t: &CsvTable) -> Vec<Finding> {
    let increasing = t.rows.windows(2).all(|w| w[1][0] > w[0][0]);
    vec![
        finding("row widths", widths_match(t), format!("{} columns", t.header.len())),
        finding("finite values", all_finite(t), format!("{} rows", t.rows.len())),
        finding("increasing time", increasing, "strictly increasing first column"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_kinds() {
        let c = parse_document("polyline_id,x1,x2\n0,1,0\n0,0,1\n1,2,2\n").unwrap();
        assert_eq!(c.kind(), "contour CSV");
        assert!(check_document(&c).unwrap().iter().all(|f| f.ok));
        let t = parse_document("t,x1\n0,1\n0.5,0.6\n").unwrap();
        assert_eq!(t.kind(), "trajectory CSV");
        let bad = parse_document("t,x1\n0,1\n0,0.6\n").unwrap();
        assert!(check_document(&bad).unwrap().iter().any(|f| !f.ok));
        assert!(parse_document("a,b\n1,2\n").is_err());
        assert!(parse_document("x1,x2\n1,oops\n").is_err());
    }

    #[test]
    fn config_is_the_fallback() {
        let d = parse_document(r#"{"system":"ring3d","seed":3}"#).unwrap();
        assert_eq!(d.kind(), "run configuration");
        assert!(parse_document(r#"{"colour":"red"}"#).is_err());
        assert!(parse_document("[1,2]").is_err());
    }
}
