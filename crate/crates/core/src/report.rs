//! Report and artifact rendering: CSV tables, gnuplot-ready columnar data,
//! and text summaries. Every report opens with comment lines carrying the
//! seed, a digest of the run configuration, and the tool version, so a
//! report file is traceable to the run that produced it.

use std::fmt::Write as _;

use crate::audit::{AuditReport, OutcomeReport};
use crate::error::{Error, Result};
use crate::ieat::IeatResult;
use crate::metrics::GroupStats;
use crate::textio::{fmt17, parse_f64};

/// Provenance stamped into every emitted report.
#[derive(Clone, Debug)]
pub struct ReportMeta {
    pub seed: u64,
    pub config_digest: String,
    pub version: String,
}

impl ReportMeta {
    fn header(&self) -> String {
        format!(
            "# seed={}\n# config={}\n# version={}\n",
            self.seed, self.config_digest, self.version
        )
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Dataset audit
// ---------------------------------------------------------------------------

/// Reference (dataset) audit as CSV. Missing concepts appear in the text
/// summary, not here, so the row count equals the number of concepts with
/// a non-empty relevant subset.
pub fn render_audit_csv(report: &AuditReport, meta: &ReportMeta) -> String {
    let mut out = meta.header();
    out.push_str("concept,n_relevant,n_labeled,rate,corrected_rate,truth_rate,parity_gap,in_boundary\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.concept,
            r.n_relevant,
            r.n_labeled,
            r.rate,
            r.corrected_rate,
            r.truth_rate,
            opt(r.parity_gap),
            r.in_boundary
        );
    }
    out
}

pub fn render_audit_text(report: &AuditReport, meta: &ReportMeta) -> String {
    let mut out = meta.header();
    let _ = writeln!(
        out,
        "dataset audit: {} concepts measured, {} missing",
        report.rows.len(),
        report.missing.len()
    );
    let _ = writeln!(
        out,
        "fair boundary: {} +/- {}",
        report.boundary.target, report.boundary.half_width
    );
    let _ = writeln!(
        out,
        "attribute classifier held-out accuracy: {}",
        report.kappa_accuracy
    );
    out.push_str(&confusion_text(&report.confusion));
    for r in &report.rows {
        let _ = writeln!(
            out,
            "  {}: rate {} (corrected {}, truth {}) over {} relevant [{}] -- \"{}\"",
            r.concept,
            r.rate,
            r.corrected_rate,
            r.truth_rate,
            r.n_relevant,
            if r.in_boundary { "within boundary" } else { "outside boundary" },
            r.prompt
        );
    }
    for m in &report.missing {
        let _ = writeln!(out, "  {m}: no relevant samples (reported as missing)");
    }
    out.push_str(&groups_text(&report.groups));
    out
}

// ---------------------------------------------------------------------------
// Outcome comparison
// ---------------------------------------------------------------------------

/// Collated rates table: reference rate, plain-sampling outcome rate, and
/// the fair-guided rate where available. The verdict classifies the plain
/// outcome against the reference; `in_boundary` tests the rightmost
/// available rate (fair if present, else plain) against the boundary.
pub fn render_rates_csv(
    reference: &AuditReport,
    plain: &OutcomeReport,
    fair: Option<&OutcomeReport>,
    meta: &ReportMeta,
) -> String {
    let mut out = meta.header();
    let _ = writeln!(
        out,
        "# verdict: plain outcome vs reference; in_boundary: {} rate vs boundary",
        if fair.is_some() { "fair" } else { "plain" }
    );
    let _ = writeln!(
        out,
        "# verdict-percent amplified={} reflected={} mitigated={}",
        plain.verdict_percent[0], plain.verdict_percent[1], plain.verdict_percent[2]
    );
    out.push_str("concept,ref_rate,out_rate,fair_rate,verdict,in_boundary\n");
    for r in &reference.rows {
        let plain_row = plain.rows.iter().find(|o| o.concept == r.concept);
        let fair_row = fair.and_then(|f| f.rows.iter().find(|o| o.concept == r.concept));
        let boundary_row = if fair.is_some() {
            fair_row.map(|f| f.in_boundary)
        } else {
            plain_row.map(|p| p.in_boundary)
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.concept,
            r.rate,
            opt(plain_row.map(|p| p.rate)),
            opt(fair_row.map(|f| f.rate)),
            plain_row.map(|p| p.verdict.to_string()).unwrap_or_default(),
            boundary_row.map(|b| b.to_string()).unwrap_or_default()
        );
    }
    out
}

/// The same rates as whitespace-separated columns for plotting; missing
/// values become `nan`.
pub fn render_rates_dat(
    reference: &AuditReport,
    plain: &OutcomeReport,
    fair: Option<&OutcomeReport>,
    meta: &ReportMeta,
) -> String {
    let mut out = meta.header();
    out.push_str("# index concept ref_rate out_rate fair_rate\n");
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "nan".into());
    for (i, r) in reference.rows.iter().enumerate() {
        let plain_rate = plain.rows.iter().find(|o| o.concept == r.concept).map(|o| o.rate);
        let fair_rate =
            fair.and_then(|f| f.rows.iter().find(|o| o.concept == r.concept).map(|o| o.rate));
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            i,
            r.concept,
            r.rate,
            num(plain_rate),
            num(fair_rate)
        );
    }
    out
}

pub fn render_outcome_text(
    reference: &AuditReport,
    plain: &OutcomeReport,
    fair: Option<&OutcomeReport>,
    meta: &ReportMeta,
) -> String {
    let mut out = meta.header();
    let _ = writeln!(
        out,
        "outcome audit: {} concepts with data, {} missing",
        plain.rows.len(),
        plain.missing.len()
    );
    let _ = writeln!(
        out,
        "verdicts over plain sampling: amplified {}%, reflected {}%, mitigated {}%",
        plain.verdict_percent[0], plain.verdict_percent[1], plain.verdict_percent[2]
    );
    let _ = writeln!(
        out,
        "attribute classifier held-out accuracy: {}",
        plain.kappa_accuracy
    );
    out.push_str(&confusion_text(&plain.confusion));
    for r in &plain.rows {
        let fair_note = fair
            .and_then(|f| f.rows.iter().find(|o| o.concept == r.concept))
            .map(|f| {
                format!(
                    ", fair {} [{}]",
                    f.rate,
                    if f.in_boundary { "within boundary" } else { "outside boundary" }
                )
            })
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "  {}: ref {} -> out {} over {} of {} kept ({}){}",
            r.concept, r.ref_rate, r.rate, r.n_labeled, r.n, r.verdict, fair_note
        );
    }
    for m in &plain.missing {
        let _ = writeln!(out, "  {m}: nothing generated (reported as missing)");
    }
    out.push_str("plain-outcome groups:\n");
    out.push_str(&groups_text(&plain.groups));
    if let Some(f) = fair {
        out.push_str("fair-outcome groups:\n");
        out.push_str(&groups_text(&f.groups));
    }
    let _ = writeln!(
        out,
        "reference boundary: {} +/- {}",
        reference.boundary.target, reference.boundary.half_width
    );
    out
}

// ---------------------------------------------------------------------------
// Group boxes
// ---------------------------------------------------------------------------

pub fn render_box_csv(groups: &[GroupStats<f64>], meta: &ReportMeta) -> String {
    let mut out = meta.header();
    out.push_str("group,min,q1,median,q3,max,lo_whisker,hi_whisker\n");
    for g in groups {
        let s = &g.stats;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            g.label, s.min, s.q1, s.median, s.q3, s.max, s.lo_whisker, s.hi_whisker
        );
    }
    out
}

pub fn render_box_dat(groups: &[GroupStats<f64>], meta: &ReportMeta) -> String {
    let mut out = meta.header();
    out.push_str("# group min q1 median q3 max lo_whisker hi_whisker\n");
    for g in groups {
        let s = &g.stats;
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            g.label, s.min, s.q1, s.median, s.q3, s.max, s.lo_whisker, s.hi_whisker
        );
    }
    out
}

fn groups_text(groups: &[GroupStats<f64>]) -> String {
    let mut out = String::new();
    for g in groups {
        let _ = writeln!(
            out,
            "  group {} ({} members): median {}, quartiles [{}, {}], whiskers [{}, {}]",
            g.label,
            g.members.len(),
            g.stats.median,
            g.stats.q1,
            g.stats.q3,
            g.stats.lo_whisker,
            g.stats.hi_whisker
        );
    }
    out
}

fn confusion_text(confusion: &[Vec<usize>]) -> String {
    let mut out = String::from("confusion matrix (rows: true, columns: predicted):\n");
    for row in confusion {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "  {}", cells.join(" "));
    }
    out
}

// ---------------------------------------------------------------------------
// Association test
// ---------------------------------------------------------------------------

pub fn render_ieat_csv(result: &IeatResult<f64>, meta: &ReportMeta) -> String {
    let mut out = meta.header();
    out.push_str("S,p,d,method,partitions,se\n");
    let _ = writeln!(
        out,
        "{},{},{},{},{},{}",
        result.statistic,
        result.p,
        result.d,
        result.method,
        result.partitions,
        opt(result.se)
    );
    out
}

// ---------------------------------------------------------------------------
// Generated-sample artifacts
// ---------------------------------------------------------------------------

/// Generated vectors, one block per requested concept:
/// `id,concept,x0,...,x{D-1}` with full-precision features.
pub fn render_generated_csv(outputs: &[(String, Vec<Vec<f64>>)], dim: usize) -> String {
    let mut out = String::from("id,concept");
    for j in 0..dim {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for (concept, vectors) in outputs {
        for (i, v) in vectors.iter().enumerate() {
            let _ = write!(out, "{concept}-g{i:04},{concept}");
            for x in v {
                let _ = write!(out, ",{}", fmt17(*x));
            }
            out.push('\n');
        }
    }
    out
}

/// Parse a generated CSV back into per-concept blocks (insertion order).
pub fn parse_generated_csv(text: &str, path: &str) -> Result<Vec<(String, Vec<Vec<f64>>)>> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 1,
            col: 1,
            msg: "empty file".into(),
        });
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "concept" {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 1,
            col: 1,
            msg: format!("unexpected header {header:?}"),
        });
    }
    let dim = cols.len() - 2;
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("x{j}") {
            return Err(Error::Parse {
                path: path.to_string(),
                line: 1,
                col: 1,
                msg: format!("unexpected feature column {c:?}"),
            });
        }
    }
    let mut outputs: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::Parse {
                path: path.to_string(),
                line: line_no,
                col: 1,
                msg: format!("expected {} fields, found {}", dim + 2, fields.len()),
            });
        }
        let concept = fields[1].to_string();
        let features: Vec<f64> = fields[2..]
            .iter()
            .map(|t| parse_f64(t, "feature"))
            .collect::<Result<_>>()
            .map_err(|e| Error::Parse {
                path: path.to_string(),
                line: line_no,
                col: 1,
                msg: e.to_string(),
            })?;
        match outputs.last_mut() {
            Some((c, vs)) if *c == concept => vs.push(features),
            _ => {
                if outputs.iter().any(|(c, _)| *c == concept) {
                    return Err(Error::Parse {
                        path: path.to_string(),
                        line: line_no,
                        col: 1,
                        msg: format!("concept {concept:?} rows are not contiguous"),
                    });
                }
                outputs.push((concept, vec![features]));
            }
        }
    }
    Ok(outputs)
}

/// Per-sample direction log: `id,side,u` with side in {1, 2}.
pub fn render_direction_log(
    concept: &str,
    draws: &[crate::guidance::DirectionDraw],
) -> String {
    let mut out = String::from("id,side,u\n");
    for (i, d) in draws.iter().enumerate() {
        let _ = writeln!(
            out,
            "{concept}-g{i:04},{},{}",
            if d.side1 { 1 } else { 2 },
            fmt17(d.u)
        );
    }
    out
}

/// Plain vector set `id,x0,...,x{D-1}` used for association-test inputs.
pub fn render_vector_csv(ids: &[String], vectors: &[Vec<f64>]) -> String {
    assert_eq!(ids.len(), vectors.len());
    let dim = vectors.first().map_or(0, Vec::len);
    let mut out = String::from("id");
    for j in 0..dim {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for (id, v) in ids.iter().zip(vectors) {
        let _ = write!(out, "{id}");
        for x in v {
            let _ = write!(out, ",{}", fmt17(*x));
        }
        out.push('\n');
    }
    out
}

pub fn parse_vector_csv(text: &str, path: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 1,
            col: 1,
            msg: "empty file".into(),
        });
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if cols.len() < 2 || cols[0] != "id" {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 1,
            col: 1,
            msg: format!("unexpected header {header:?}"),
        });
    }
    let dim = cols.len() - 1;
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::Parse {
                path: path.to_string(),
                line: line_no,
                col: 1,
                msg: format!("expected {} fields, found {}", dim + 1, fields.len()),
            });
        }
        ids.push(fields[0].to_string());
        let v: Vec<f64> = fields[1..]
            .iter()
            .map(|t| parse_f64(t, "vector value"))
            .collect::<Result<_>>()
            .map_err(|e| Error::Parse {
                path: path.to_string(),
                line: line_no,
                col: 1,
                msg: e.to_string(),
            })?;
        vectors.push(v);
    }
    Ok((ids, vectors))
}
