use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::metrics::FairnessReport;
use crate::rerank::SweepResult;
use crate::reweight::WeightTable;

use super::commands::require;
use super::config::Settings;
use super::manifest::ManifestBuilder;
use super::CliError;

const STAGE: &str = "report";
const ACCURACY_K: usize = 5;

#[derive(Deserialize)]
struct EvalFile {
    method: String,
    reports: Vec<FairnessReport>,
}

fn eval_files(out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(out_dir).map_err(|e| CliError::missing(STAGE, out_dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("eval_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::missing(STAGE, path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(STAGE, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::internal(STAGE, format!("{}: {e}", path.display())))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

fn row(scheme: &str, method: &str, reports: &[FairnessReport], ks: &[usize]) -> String {
    let at = |k: usize| reports.iter().find(|r| r.k == k);
    let mut cells = vec![scheme.to_string(), method.to_string()];
    cells.extend(ks.iter().map(|&k| cell(at(k).map(|r| r.mgu))));
    cells.extend(ks.iter().map(|&k| cell(at(k).map(|r| r.dgu))));
    cells.push(cell(at(ACCURACY_K).map(|r| r.ndcg)));
    cells.push(cell(at(ACCURACY_K).map(|r| r.hr)));
    cells.join(",")
}

/// Side-by-side bars of history and slate proportions per group.
pub fn bar_chart(title: &str, groups: &[(&str, f64, f64)]) -> String {
    let (w, h, pad) = (640.0, 320.0, 40.0);
    let top = groups
        .iter()
        .flat_map(|(_, a, b)| [*a, *b])
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let slot = (w - 2.0 * pad) / groups.len().max(1) as f64;
    let bar = slot * 0.35;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<text x="{pad}" y="20" font-size="14">{title}</text>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{}" y="14" width="10" height="10" fill="#8aa"/><text x="{}" y="23">history</text><rect x="{}" y="14" width="10" height="10" fill="#c64"/><text x="{}" y="23">slates</text>"##,
        w - 160.0,
        w - 146.0,
        w - 90.0,
        w - 76.0
    );
    let base = h - pad;
    for (i, (g, a, b)) in groups.iter().enumerate() {
        let x = pad + slot * i as f64 + slot * 0.15;
        for (j, (v, color)) in [(*a, "#8aa"), (*b, "#c64")].into_iter().enumerate() {
            let bh = v / top * (h - 2.0 * pad - 10.0);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.1}" y="{:.1}" width="{bar:.1}" height="{bh:.1}" fill="{color}"/>"#,
                x + bar * j as f64,
                base - bh
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{g}</text>"#,
            x + bar,
            base + 14.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        w - pad
    );
    svg.push_str("</svg>\n");
    svg
}

pub(super) fn report(s: &Settings) -> Result<(), CliError> {
    let mut m = ManifestBuilder::new(STAGE, s.seed, &s.out_dir);
    let ks = &s.ks;
    let mut table = String::from("scheme,method");
    for name in ["MGU", "DGU"] {
        for k in ks {
            let _ = write!(table, ",{name}@{k}");
        }
    }
    let _ = writeln!(table, ",NDCG@{ACCURACY_K},HR@{ACCURACY_K}");

    let files = eval_files(&s.out_dir)?;
    let sweep_path = s.path("sweep.json");
    if files.is_empty() && !sweep_path.exists() {
        return Err(CliError::missing(
            STAGE,
            &s.path("eval_grounding.json"),
            "no evaluation outputs",
        ));
    }
    let mut outputs = Vec::new();
    for path in &files {
        m.input(path)?;
        let eval: EvalFile = read_json(path)?;
        let Some(scheme) = eval.reports.first().map(|r| r.scheme.clone()) else {
            continue;
        };
        let _ = writeln!(table, "{}", row(&scheme, &eval.method, &eval.reports, ks));
        for r in &eval.reports {
            let stem = format!("dist_{}_k{}", eval.method, r.k);
            let mut csv = String::from("group,gh,gp\n");
            let mut bars = Vec::new();
            for (g, gh) in &r.gh {
                let gp = r.gp.get(g).copied().unwrap_or(0.0);
                let _ = writeln!(csv, "{g},{gh:.6},{gp:.6}");
                bars.push((g.as_str(), *gh, gp));
            }
            let csv_path = s.path(&format!("{stem}.csv"));
            write(&csv_path, &csv)?;
            let svg_path = s.path(&format!("{stem}.svg"));
            write(
                &svg_path,
                &bar_chart(&format!("{} at k = {} ({})", eval.method, r.k, scheme), &bars),
            )?;
            outputs.push(csv_path);
            outputs.push(svg_path);
        }
    }

    if sweep_path.exists() {
        m.input(&sweep_path)?;
        let sweep: SweepResult = read_json(&sweep_path)?;
        for r in &sweep.rows {
            let scheme = r.reports.first().map_or("", |x| x.scheme.as_str());
            let _ = writeln!(
                table,
                "{}",
                row(scheme, &format!("rerank(alpha={})", r.alpha), &r.reports, ks)
            );
        }
    }

    if s.reweight {
        let weights = s.path("weights.tsv");
        let sample = s.path("train_sample.jsonl");
        let scheme = s.path("scheme.json");
        if weights.exists() {
            m.input(&weights)?;
            m.input(&require(STAGE, &sample)?)?;
            m.input(&require(STAGE, &scheme)?)?;
            let seqs = crate::dataset::read_sequences(&sample).map_err(|e| CliError::from_lib(STAGE, e))?;
            let scheme = crate::grouping::GroupScheme::load(&scheme).map_err(|e| CliError::from_lib(STAGE, e))?;
            let w = WeightTable::build(&seqs, &scheme).map_err(|e| CliError::from_lib(STAGE, e))?;
            let mut csv = String::from("group,gh_tr,gh_ta,weight\n");
            for (g, wg) in &w.group_weights {
                let _ = writeln!(csv, "{g},{:.6},{:.6},{wg:.6}", w.gh_tr[g], w.gh_ta[g]);
            }
            let p = s.path("group_weights.csv");
            write(&p, &csv)?;
            outputs.push(p);
        }
    }

    let report_path = s.path("report.csv");
    write(&report_path, &table)?;
    outputs.push(report_path);
    m.param("k", ks).param("reweight", s.reweight);
    for p in &outputs {
        m.output(p)?;
    }
    m.write()?;
    print!("{table}");
    Ok(())
}
