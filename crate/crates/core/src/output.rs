//! Serialization of run results to plot-ready CSV and JSON files.
//!
//! Files are deterministic functions of the run manifest: float columns are
//! printed at 17 significant digits, rows use LF endings, map keys are sorted,
//! and the manifest is written last with a sha256 checksum per emitted file.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{sha256_hex, RunManifest, ScenarioResult, SinglePath};
use crate::market::TimeGrid;
use crate::metrics::{PathReport, QuartileSeries, SummaryStats};

/// 17 significant digits: enough to reproduce any f64 exactly.
fn fmt(value: f64) -> String {
    format!("{value:.16e}")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(String, String)> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok((name.to_string(), sha256_hex(contents.as_bytes())))
}

fn series_csv(times: &[f64], stats: &QuartileSeries, survival: &[f64]) -> String {
    let mut out = String::from("time,mean,median,q25,q75,survival\n");
    for i in 0..times.len() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt(times[i]),
            fmt(stats.mean[i]),
            fmt(stats.median[i]),
            fmt(stats.q25[i]),
            fmt(stats.q75[i]),
            fmt(survival[i]),
        ));
    }
    out
}

fn eair_csv(summary: &SummaryStats) -> String {
    let mut out = String::from("t,y_bf,y_min,delta\n");
    for row in &summary.eair {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt(row.t),
            fmt(row.y_bf),
            fmt(row.y_min),
            fmt(row.delta),
        ));
    }
    out
}

fn histogram_csv(edges: &[f64], counts: &[u64]) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, count) in counts.iter().enumerate() {
        out.push_str(&format!("{},{},{count}\n", fmt(edges[i]), fmt(edges[i + 1])));
    }
    out
}

fn tau_csv(reports: &[PathReport], horizon: f64) -> String {
    let mut out = String::from("path_index,tau,censored\n");
    for report in reports {
        let censored = report.tau > horizon;
        out.push_str(&format!(
            "{},{},{}\n",
            report.path_index,
            fmt(report.tau.min(horizon)),
            u8::from(censored),
        ));
    }
    out
}

fn per_path_csv(reports: &[PathReport], times: &[f64]) -> String {
    let mut out = String::from(
        "path_index,time,fund,zu,p_star,p_min,surplus,relative_surplus,benefit_ratio,risky_fraction,solvent\n",
    );
    for report in reports {
        for (i, &t) in times.iter().enumerate() {
            out.push_str(&format!("{},{}", report.path_index, fmt(t)));
            for series in &report.series {
                out.push(',');
                out.push_str(&fmt(series[i]));
            }
            out.push_str(&format!(",{}\n", u8::from(report.solvent[i])));
        }
    }
    out
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    manifest: &'a RunManifest,
    summary: &'a SummaryStats,
}

/// Writes the result bundle for one Monte Carlo run into `out_dir`:
/// `summary.json`, one CSV per tracked series and conditioning, the EAIR
/// table, the per-path depletion times, the pension histograms, optionally a
/// per-path dump of the first `dump_paths` paths, and `manifest.json` with
/// checksums of everything written.
pub fn emit_results(
    result: &ScenarioResult,
    out_dir: &Path,
    dump_paths: Option<usize>,
) -> Result<RunManifest> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let summary = &result.summary;
    let mut checksums = Vec::new();

    for (name, conditioned) in &summary.series {
        for (suffix, stats) in [
            ("", &conditioned.unconditional),
            ("_solvent", &conditioned.solvent),
            ("_depleted", &conditioned.depleted),
        ] {
            let contents = series_csv(&summary.times, stats, &summary.survival);
            checksums.push(write_file(
                out_dir,
                &format!("series_{name}{suffix}.csv"),
                &contents,
            )?);
        }
    }

    checksums.push(write_file(out_dir, "eair.csv", &eair_csv(summary))?);
    checksums.push(write_file(
        out_dir,
        "tau.csv",
        &tau_csv(&result.reports, summary.tau.horizon),
    )?);

    for histogram in &summary.histograms {
        let name = format!(
            "hist_{}_t{}_{}.csv",
            histogram.series, histogram.t as u32, histogram.conditioning
        );
        checksums.push(write_file(
            out_dir,
            &name,
            &histogram_csv(&histogram.edges, &histogram.counts),
        )?);
    }

    if let Some(limit) = dump_paths {
        let subset = &result.reports[..limit.min(result.reports.len())];
        checksums.push(write_file(
            out_dir,
            "paths.csv",
            &per_path_csv(subset, &summary.times),
        )?);
    }

    let mut manifest = result.manifest.clone();
    let doc = SummaryDocument {
        manifest: &manifest,
        summary,
    };
    let summary_json =
        serde_json::to_string_pretty(&doc).expect("summary serializes") + "\n";
    checksums.push(write_file(out_dir, "summary.json", &summary_json)?);

    for (name, checksum) in checksums {
        manifest.output_checksums.insert(name, checksum);
    }
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(out_dir, "manifest.json", &manifest_json)?;
    Ok(manifest)
}

/// Writes the full-resolution time series of one path (market, preference and
/// policy state) plus a small JSON sidecar with the depletion time.
pub fn emit_single_path(single: &SinglePath, grid: &TimeGrid, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let mut out = String::from(
        "time,s,nu,r,wage,eta,z,omega,xi,zu,depletion_integral,fund,p_star,p_min,pi_star,phi_star,risky_fraction,surplus_y,k_bound\n",
    );
    let market = &single.market;
    let prefs = &single.preferences;
    let policy = &single.policy;
    for k in 0..market.n_points() {
        let row = [
            grid.time(k),
            market.s[k],
            market.nu[k],
            market.r[k],
            market.wage[k],
            market.eta[k],
            prefs.z[k],
            prefs.omega[k],
            prefs.xi[k],
            prefs.zu[k],
            prefs.depletion_integral[k],
            policy.fund[k],
            policy.p_star[k],
            policy.p_min[k],
            policy.pi_star[k],
            policy.phi_star[k],
            policy.risky_fraction[k],
            policy.surplus_y[k],
            policy.k_bound[k],
        ];
        let mut line = String::with_capacity(row.len() * 24);
        for (i, value) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&fmt(*value));
        }
        line.push('\n');
        out.push_str(&line);
    }
    write_file(out_dir, "path_series.csv", &out)?;

    #[derive(Serialize)]
    struct PathSummary {
        path_index: u64,
        tau: f64,
        depleted: bool,
    }
    let sidecar = serde_json::to_string_pretty(&PathSummary {
        path_index: single.path_index,
        tau: single.preferences.tau,
        depleted: single.preferences.tau.is_finite(),
    })
    .expect("sidecar serializes")
        + "\n";
    write_file(out_dir, "path_summary.json", &sidecar)?;
    Ok(())
}
