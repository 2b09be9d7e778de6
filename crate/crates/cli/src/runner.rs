//! Command implementations: each builds a JSON (or CSV) document from a
//! resolved configuration and emits it canonically.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use holonomy_core::catalog::{self, ChartDescriptor};
use holonomy_core::cone;
use holonomy_core::report::{to_canonical_json, write_atomic};
use holonomy_core::transport::{self, HolonomySample};
use holonomy_core::{analysis, Tolerances};
use nalgebra::DVector;
use serde_json::{json, Map, Value};

use crate::config::{CliError, CliResult, Resolved};

/// Emits a finished document: canonical JSON with sorted keys and 17
/// significant digits, to stdout or atomically to `out`.
pub fn emit_json(mut body: Map<String, Value>, out: Option<&Path>, no_meta: bool) -> CliResult<()> {
    if !no_meta {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        body.insert(
            "meta".into(),
            json!({"timestamp": timestamp, "version": env!("CARGO_PKG_VERSION")}),
        );
    }
    let text = to_canonical_json(&Value::Object(body))
        .map_err(|e| CliError::Numerical(format!("cannot serialize report: {e}")))?;
    emit_text(&text, out)
}

pub fn emit_text(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => write_atomic(path, text)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
                Ok(()) => Ok(()),
                // The reader hung up (e.g. piped into `head`); that ends
                // the run normally rather than as an error.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
                Err(e) => Err(CliError::Numerical(format!("cannot write report: {e}"))),
            }
        }
    }
}

fn to_value<T: serde::Serialize>(value: &T) -> CliResult<Value> {
    serde_json::to_value(value)
        .map_err(|e| CliError::Numerical(format!("cannot serialize report: {e}")))
}

fn vec_json(v: &DVector<f64>) -> Value {
    Value::from(v.iter().copied().collect::<Vec<f64>>())
}

/// Shared provenance block: manifold, base, step, tolerances.
fn provenance(run: &Resolved, command: &str) -> CliResult<Map<String, Value>> {
    let mut body = Map::new();
    body.insert("command".into(), Value::from(command));
    body.insert("manifold".into(), Value::from(run.name.clone()));
    body.insert("base".into(), vec_json(&run.base));
    body.insert("step".into(), to_value(&run.step)?);
    body.insert("tolerances".into(), to_value(&run.tol)?);
    Ok(body)
}

pub fn sample_json(sample: &HolonomySample<f64>) -> CliResult<Value> {
    Ok(json!({
        "element": to_value(&sample.element)?,
        "development": vec_json(&sample.development),
        "arc_length": sample.arc_length,
        "endpoint_gap": sample.endpoint_gap,
        "speed_drift": sample.speed_drift,
        "orthogonality_defect": sample.orthogonality_defect,
        "label": sample.label,
        "kind": to_value(&sample.kind)?,
        "base": vec_json(&sample.base),
    }))
}

pub fn catalog_list() -> String {
    let mut out = String::new();
    for entry in catalog::entries() {
        let dim = entry
            .descriptor
            .build::<f64>()
            .map(|c| c.dim().to_string())
            .unwrap_or_else(|_| "?".into());
        let base = entry
            .base
            .iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(", ");
        out.push_str(&format!(
            "{:<20} dim {:<2} base [{}]\n{:<20} {}\n",
            entry.name, dim, base, "", entry.summary
        ));
    }
    out
}

/// `holonomy`: develop the configured loop and report its affine element.
pub fn run_holonomy(run: &Resolved, out: Option<&Path>, no_meta: bool) -> CliResult<()> {
    let spec = run.curve_spec()?;
    let frame_order = run
        .protocol
        .as_ref()
        .and_then(|p| p.frame_order.clone());
    let sample = transport::develop_loop(
        &run.chart,
        &spec,
        frame_order.as_deref(),
        run.step,
        &run.tol,
    )
    .map_err(CliError::numerical)?;
    let mut body = provenance(run, "holonomy")?;
    body.insert("report".into(), sample_json(&sample)?);
    emit_json(body, out, no_meta)
}

/// `classify`: sample loops, classify the local holonomy, and probe
/// translation growth.
pub fn run_classify(run: &Resolved, out: Option<&Path>, no_meta: bool) -> CliResult<()> {
    let protocol = run.protocol_required()?;
    let samples = transport::sample_holonomy(&run.chart, &run.base, &protocol, run.step, &run.tol)
        .map_err(CliError::numerical)?;
    let report = analysis::classify(&samples, &run.tol).map_err(CliError::numerical)?;
    let mut body = provenance(run, "classify")?;
    body.insert("protocol".into(), to_value(&protocol)?);
    body.insert("report".into(), to_value(&report)?);
    if run.k_max > 0 {
        let growth = analysis::global_noncompactness_evidence(
            &run.chart,
            &run.base,
            run.k_max,
            protocol.frame_order.as_deref(),
            run.step,
            &run.tol,
        )
        .map_err(CliError::numerical)?;
        body.insert("growth".into(), to_value(&growth)?);
    }
    emit_json(body, out, no_meta)
}

/// Inward radial apex candidate for charts built as cones: the first
/// coordinate is the radial distance and the first frame vector is the
/// unit radial direction, so the apex sits at `(-r0, 0, …)` in frame
/// coordinates.
pub fn analytic_apex(descriptor: &ChartDescriptor, base: &DVector<f64>) -> Option<DVector<f64>> {
    match descriptor {
        ChartDescriptor::Cone { .. } => {
            let mut p = DVector::zeros(base.len());
            p[0] = -base[0];
            Some(p)
        }
        _ => None,
    }
}

/// `cone-check`: certify or refute local cone structure.
pub fn run_cone_check(run: &Resolved, out: Option<&Path>, no_meta: bool) -> CliResult<()> {
    let (p_star, source) = match (&run.p_star, analytic_apex(&run.descriptor, &run.base)) {
        (Some(p), _) => (Some(p.clone()), "config"),
        (None, Some(p)) => (Some(p), "radial"),
        (None, None) => (None, "solved"),
    };
    // Sampling only happens without a candidate; only then is a seeded
    // protocol demanded.
    let protocol = match (&p_star, &run.protocol) {
        (_, Some(p)) => p.clone(),
        (Some(_), None) => transport::SamplingProtocol::with_seed(0),
        (None, None) => run.protocol_required()?,
    };
    let cert = cone::certify_cone(
        &run.chart,
        &run.base,
        p_star.as_ref(),
        &protocol,
        run.step,
        &run.tol,
    )
    .map_err(CliError::numerical)?;
    let mut body = provenance(run, "cone-check")?;
    body.insert("p_star_source".into(), Value::from(source));
    if p_star.is_none() {
        body.insert("protocol".into(), to_value(&protocol)?);
    }
    body.insert("certificate".into(), to_value(&cert)?);
    emit_json(body, out, no_meta)
}

/// `develop`: emit the development trace of the configured curve as CSV
/// with columns `t, dev_1..dev_m, pos_1..pos_m`.
pub fn run_develop(run: &Resolved, out: Option<&Path>) -> CliResult<()> {
    let spec = run.curve_spec()?;
    let frame_order = run
        .protocol
        .as_ref()
        .and_then(|p| p.frame_order.clone());
    let trace = transport::develop_curve(
        &run.chart,
        &spec.base,
        &spec.segments,
        frame_order.as_deref(),
        run.step,
        &run.tol,
    )
    .map_err(CliError::numerical)?;
    let m = run.chart.dim();
    let mut csv = String::from("t");
    for k in 1..=m {
        csv.push_str(&format!(",dev_{k}"));
    }
    for k in 1..=m {
        csv.push_str(&format!(",pos_{k}"));
    }
    csv.push('\n');
    for ((t, dev), pos) in trace
        .arc
        .iter()
        .zip(trace.dev_points.iter())
        .zip(trace.positions.iter())
    {
        csv.push_str(&format!("{t:.16e}"));
        for x in dev.iter().chain(pos.iter()) {
            csv.push_str(&format!(",{x:.16e}"));
        }
        csv.push('\n');
    }
    emit_text(&csv, out)
}

/// Context shared by commands that need defaults when no config is given.
pub fn default_tolerances() -> Tolerances {
    Tolerances::default()
}
