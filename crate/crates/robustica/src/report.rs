//! Extraction traces as a line-oriented log and as CSV.

use std::io::{self, Write};

use robustica_core::deflation::Separation;
use robustica_core::robustica::ExtractionReport;
use robustica_core::Scalar;

/// One summary line per source followed by one line per pass.
pub fn write_log<S: Scalar>(w: &mut impl Write, algorithm: &str, sep: &Separation<S>) -> io::Result<()> {
    let ledger = &sep.ledger;
    writeln!(
        w,
        "algorithm={algorithm} sources={} flops_per_iteration={} surcharge={} total_flops={}",
        sep.reports.len(),
        ledger.per_iteration,
        ledger.surcharge,
        ledger.total
    )?;
    for (k, r) in sep.reports.iter().enumerate() {
        writeln!(
            w,
            "source={k} iterations={} passes={} stop={} kurtosis={} flops={}{}",
            r.iterations,
            r.passes,
            r.stop_reason.name(),
            r.final_kurtosis().unwrap_or(f64::NAN),
            r.flops,
            if r.sign_mismatch { " sign_mismatch" } else { "" }
        )?;
        for (i, (mu, kurt)) in trace(r).enumerate() {
            writeln!(w, "  pass={} mu={mu} kurtosis={kurt}", i + 1)?;
        }
    }
    Ok(())
}

/// Header `source,iteration,mu,kurtosis,flops`; iteration 0 is the
/// starting point and `flops` accumulates per source.
pub fn write_csv<S: Scalar>(w: &mut impl Write, sep: &Separation<S>) -> io::Result<()> {
    writeln!(w, "source,iteration,mu,kurtosis,flops")?;
    let per_iteration = sep.ledger.per_iteration;
    for (k, r) in sep.reports.iter().enumerate() {
        writeln!(w, "{k},0,0,{},0", r.contrast_trajectory[0])?;
        for (i, (mu, kurt)) in trace(r).enumerate() {
            let done = (i + 1).min(r.iterations) as u64;
            writeln!(w, "{k},{},{mu},{kurt},{}", i + 1, per_iteration * done)?;
        }
    }
    Ok(())
}

fn trace<S: Scalar>(r: &ExtractionReport<S>) -> impl Iterator<Item = (f64, f64)> + '_ {
    r.mu_trajectory
        .iter()
        .copied()
        .zip(r.contrast_trajectory.iter().skip(1).copied())
}
