//! Output schemas: result and guideline CSVs, comparison CSV, and JSON-lines
//! transcripts. Reals are written in shortest round-trip decimal.

use std::io::{self, Write};

use serde::Serialize;

use crate::harness::{ComparisonRow, ExperimentResult};
use crate::protocol::{RoundRecord, Transcript};

pub const RESULT_HEADER: &str = "n,epsilon,mechanism,param_mode,x_min,mean_abs_err,q05,q95,reps,seed";
pub const GUIDELINE_HEADER: &str = "epsilon,n,guideline_value";
pub const COMPARISON_HEADER: &str = "n,epsilon,binary_search_err,baseline_err,ratio";

/// Shortest decimal that parses back to the same `f64`; ±inf as `inf`/`-inf`.
pub fn fmt_real(v: f64) -> String {
    format!("{v}")
}

pub fn write_results_csv<W: Write>(mut w: W, result: &ExperimentResult) -> io::Result<()> {
    writeln!(w, "{RESULT_HEADER}")?;
    for r in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n,
            fmt_real(r.epsilon),
            r.mechanism.label(),
            r.param_mode.label(),
            fmt_real(r.worst.x_min),
            fmt_real(r.worst.mean_abs_err),
            fmt_real(r.worst.q05),
            fmt_real(r.worst.q95),
            r.worst.reps,
            r.seed
        )?;
    }
    Ok(())
}

pub fn write_guideline_csv<W: Write>(mut w: W, rows: &[(f64, usize, f64)]) -> io::Result<()> {
    writeln!(w, "{GUIDELINE_HEADER}")?;
    for &(e, n, v) in rows {
        writeln!(w, "{},{},{}", fmt_real(e), n, fmt_real(v))?;
    }
    Ok(())
}

pub fn write_comparison_csv<W: Write>(mut w: W, rows: &[ComparisonRow]) -> io::Result<()> {
    writeln!(w, "{COMPARISON_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.n,
            fmt_real(r.epsilon),
            fmt_real(r.binary_search_err),
            fmt_real(r.baseline_err),
            fmt_real(r.ratio)
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TranscriptTail {
    estimate: f64,
    depth: usize,
    n: usize,
    degenerate: bool,
    reflected: bool,
}

/// One `RoundRecord` object per line, then a closing line carrying the
/// estimate.
pub fn write_transcript_jsonl<W: Write>(mut w: W, t: &Transcript) -> io::Result<()> {
    for r in &t.rounds {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    let tail = TranscriptTail {
        estimate: t.estimate,
        depth: t.depth,
        n: t.n,
        degenerate: t.degenerate,
        reflected: t.reflected,
    };
    serde_json::to_writer(&mut w, &tail)?;
    writeln!(w)
}

/// Reads back the round lines of a JSON-lines transcript.
pub fn parse_transcript_rounds(text: &str) -> serde_json::Result<Vec<RoundRecord>> {
    text.lines()
        .filter(|l| l.contains("\"round\""))
        .map(serde_json::from_str)
        .collect()
}
