//! Serialization of reports: JSON with every float written to 17 significant
//! digits, and CSV tables for the grid, simulation and bootstrap outputs.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::analysis::{BootstrapReport, CoverageGrid, MinCoverageResult, SimulationReport};
use crate::error::{Error, Result};

/// `x` with 17 significant digits, enough to round-trip any f64.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Pretty printer that writes floats through [`format_f64`].
struct Digits17<'a>(PrettyFormatter<'a>);

impl Formatter for Digits17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with 17-significant-digit floats and a trailing newline.
/// Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| Error::Numerical(format!("serializing report: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writes UTF-8"))
}

/// Matrix layout: first column `norm_lambda`, one column per `psi` value.
/// Failed cells are written as `NaN`.
pub fn grid_csv(g: &CoverageGrid) -> Result<String> {
    let mut rows = Vec::with_capacity(g.norm_lambda.len() + 1);
    let mut head = vec!["norm_lambda".to_string()];
    head.extend(g.psi.iter().map(|p| format!("psi={}", format_f64(*p))));
    rows.push(head);
    for (l, vals) in g.norm_lambda.iter().zip(&g.values) {
        let mut r = vec![format_f64(*l)];
        r.extend(vals.iter().map(|v| format_f64(v.unwrap_or(f64::NAN))));
        rows.push(r);
    }
    csv_string(rows)
}

pub fn simulation_csv(s: &SimulationReport) -> Result<String> {
    let q = s.points.first().map_or(0, |p| p.gamma.len());
    let mut head: Vec<String> = Vec::new();
    if s.gamma_path.gamma_both.is_some() {
        head.push("gamma_both".into());
    }
    head.extend((1..=q).map(|i| format!("gamma_{i}")));
    for h in [
        "finite_sample_cp",
        "std_error",
        "covered",
        "kept",
        "discarded",
        "rejection_rate",
        "norm_lambda",
        "psi",
        "large_sample_cp",
    ] {
        head.push(h.into());
    }
    let mut rows = vec![head];
    for (i, p) in s.points.iter().enumerate() {
        let mut r = Vec::new();
        if let Some(b) = &s.gamma_path.gamma_both {
            r.push(format_f64(b[i]));
        }
        r.extend(p.gamma.iter().map(|g| format_f64(*g)));
        r.extend([
            format_f64(p.finite_sample_cp),
            format_f64(p.std_error),
            p.covered.to_string(),
            p.kept.to_string(),
            p.discarded.to_string(),
            format_f64(p.rejection_rate),
            format_f64(p.norm_lambda),
            format_f64(p.psi),
            format_f64(p.large_sample_cp),
        ]);
        rows.push(r);
    }
    csv_string(rows)
}

pub fn bootstrap_csv(b: &BootstrapReport) -> Result<String> {
    let mut rows = vec![vec!["resample".to_string(), "norm_b".into(), "min_coverage".into()]];
    for (i, (nb, v)) in b.norm_b_resamples.iter().zip(&b.resamples).enumerate() {
        rows.push(vec![(i + 1).to_string(), format_f64(*nb), format_f64(*v)]);
    }
    csv_string(rows)
}

/// The search trace, one evaluation per row.
pub fn min_trace_csv(m: &MinCoverageResult) -> Result<String> {
    let mut rows = vec![vec!["stage".to_string(), "norm_lambda".into(), "psi".into(), "value".into()]];
    for t in &m.search_trace {
        let stage = serde_json::to_value(t.stage).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        rows.push(vec![stage, format_f64(t.norm_lambda), format_f64(t.psi), format_f64(t.value)]);
    }
    csv_string(rows)
}
