//! CSV serialization of run results. All numbers are written with fixed
//! precision so identical runs produce byte-identical files.

use crate::metrics::Report;
use crate::net::{QueueSample, RunOutput};
use std::io::{self, Write};
use std::path::Path;

fn opt(x: Option<f64>, prec: usize) -> String {
    match x {
        Some(v) => format!("{v:.prec$}"),
        None => String::new(),
    }
}

/// Per-circuit fairness table plus a totals row.
pub fn write_summary(mut w: impl Write, report: &Report) -> io::Result<()> {
    writeln!(
        w,
        "vc,threshold_cells,goodput_mbps,expected_mbps,ratio,max_queue_cells"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{:.4},{},{},{}",
            r.vc,
            r.threshold_cells,
            r.goodput_mbps,
            opt(r.expected_mbps, 4),
            opt(r.ratio, 4),
            r.max_queue_cells
        )?;
    }
    let threshold_total: u64 = report.rows.iter().map(|r| r.threshold_cells).sum();
    writeln!(
        w,
        "total,{},{:.4},{},,{}",
        threshold_total,
        report.total_goodput_mbps,
        opt(
            report
                .rows
                .iter()
                .map(|r| r.expected_mbps)
                .try_fold(0.0, |acc, e| e.map(|v| acc + v)),
            4
        ),
        report.max_queue_cells
    )?;
    Ok(())
}

/// One connection's congestion-window trace.
pub fn write_cwnd_trace(mut w: impl Write, trace: &[(f64, u64)]) -> io::Result<()> {
    writeln!(w, "time_s,cwnd_bytes")?;
    for &(t, v) in trace {
        writeln!(w, "{t:.6},{v}")?;
    }
    Ok(())
}

/// Bottleneck buffer trace: total occupancy and one column per circuit.
pub fn write_queue_trace(mut w: impl Write, samples: &[QueueSample]) -> io::Result<()> {
    let vcs = samples.first().map_or(0, |s| s.per_vc_cells.len());
    write!(w, "time_s,total_cells")?;
    for i in 0..vcs {
        write!(w, ",vc{i}_cells")?;
    }
    writeln!(w)?;
    for s in samples {
        write!(w, "{:.6},{}", s.t, s.total_cells)?;
        for v in &s.per_vc_cells {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Group-ratio matrix across several runs (thresholds down, runs across).
pub fn write_ratio_matrix(
    mut w: impl Write,
    row_labels: &[String],
    columns: &[(String, Vec<Option<f64>>)],
) -> io::Result<()> {
    write!(w, "group")?;
    for (name, _) in columns {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (i, label) in row_labels.iter().enumerate() {
        write!(w, "{label}")?;
        for (name, ratios) in columns {
            let cell = ratios.get(i).copied().flatten();
            assert!(
                ratios.len() == row_labels.len(),
                "run {name} reported {} groups, expected {}",
                ratios.len(),
                row_labels.len()
            );
            write!(w, ",{}", opt(cell, 4))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Write the full result set of one run into a directory: `summary.csv`,
/// `queue_bottleneck.csv`, and one `cwnd_conn<N>.csv` per connection.
pub fn write_run_dir(dir: &Path, run: &RunOutput, report: &Report) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_summary(std::fs::File::create(dir.join("summary.csv"))?, report)?;
    write_queue_trace(
        std::fs::File::create(dir.join("queue_bottleneck.csv"))?,
        &run.queue_trace,
    )?;
    for (i, trace) in run.cwnd_traces.iter().enumerate() {
        write_cwnd_trace(
            std::fs::File::create(dir.join(format!("cwnd_conn{i}.csv")))?,
            trace,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::VcId;
    use crate::metrics::{GroupRow, VcRow};

    fn small_report() -> Report {
        let rows = vec![
            VcRow {
                vc: VcId(0),
                threshold_cells: 100,
                goodput_mbps: 31.25,
                expected_mbps: Some(31.5),
                ratio: Some(31.25 / 31.5),
                max_queue_cells: 140,
            },
            VcRow {
                vc: VcId(1),
                threshold_cells: 300,
                goodput_mbps: 94.75,
                expected_mbps: Some(94.5),
                ratio: Some(94.75 / 94.5),
                max_queue_cells: 419,
            },
        ];
        Report {
            groups: vec![GroupRow {
                threshold_cells: 100,
                vcs: vec![VcId(0)],
                goodput_mbps: 31.25,
                expected_mbps: Some(31.5),
                ratio: Some(31.25 / 31.5),
            }],
            rows,
            total_goodput_mbps: 126.0,
            utilization: 0.98,
            max_queue_cells: 512,
        }
    }

    #[test]
    fn summary_has_header_rows_and_total() {
        let mut buf = Vec::new();
        write_summary(&mut buf, &small_report()).expect("writes");
        let text = String::from_utf8(buf).expect("utf8");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "vc,threshold_cells,goodput_mbps,expected_mbps,ratio,max_queue_cells"
        );
        assert_eq!(lines[1], "vc0,100,31.2500,31.5000,0.9921,140");
        assert_eq!(lines[3], "total,400,126.0000,126.0000,,512");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn queue_trace_grows_one_column_per_circuit() {
        let samples = vec![
            QueueSample {
                t: 0.0,
                total_cells: 5,
                per_vc_cells: vec![2, 3],
            },
            QueueSample {
                t: 0.01,
                total_cells: 7,
                per_vc_cells: vec![3, 4],
            },
        ];
        let mut buf = Vec::new();
        write_queue_trace(&mut buf, &samples).expect("writes");
        let text = String::from_utf8(buf).expect("utf8");
        assert!(text.starts_with("time_s,total_cells,vc0_cells,vc1_cells\n"));
        assert!(text.contains("0.010000,7,3,4"));
    }

    #[test]
    fn ratio_matrix_lines_up_runs() {
        let labels = vec!["100".to_string(), "300".to_string()];
        let cols = vec![
            ("a".to_string(), vec![Some(0.99), Some(1.01)]),
            ("b".to_string(), vec![Some(1.02), None]),
        ];
        let mut buf = Vec::new();
        write_ratio_matrix(&mut buf, &labels, &cols).expect("writes");
        let text = String::from_utf8(buf).expect("utf8");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "group,a,b");
        assert_eq!(lines[1], "100,0.9900,1.0200");
        assert_eq!(lines[2], "300,1.0100,");
    }

    #[test]
    fn run_dir_contains_all_files() {
        use crate::net::RunOutput;
        let dir = tempfile::tempdir().expect("tempdir");
        let run = RunOutput {
            per_conn: Vec::new(),
            per_vc: Vec::new(),
            total_goodput_mbps: 126.0,
            utilization: 0.98,
            max_queue_cells: 512,
            cwnd_traces: vec![vec![(0.0, 1024), (0.01, 2048)]; 2],
            queue_trace: vec![QueueSample {
                t: 0.0,
                total_cells: 0,
                per_vc_cells: vec![0],
            }],
            events_processed: 0,
            duration_s: 10.0,
            warmup_s: 1.0,
        };
        write_run_dir(dir.path(), &run, &small_report()).expect("writes");
        for f in [
            "summary.csv",
            "queue_bottleneck.csv",
            "cwnd_conn0.csv",
            "cwnd_conn1.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
    }
}
