//! The four subcommands. Each writes its artifacts before reporting a
//! scheme failure, so partial runs can still be inspected.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use wforge_core::analysis::{
    brouwer_degree, bump_battery, degree_formula_residual, perturbed_degree, target_density, weak_hessian_residual_fn,
    DegreeQuery, TestFunction,
};
use wforge_core::field::grid::Grid;
use wforge_core::scheme::{run_full_outcome, solve_a0_from_f, RunArtifacts};
use wforge_core::{sym2, Field, Sym};

use crate::config::RunConfig;
use crate::CliError;

/// Command-line flags that override configuration values.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub stages: Option<usize>,
    pub resolution: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(o) = &self.out {
            cfg.output.dir = o.to_string_lossy().into_owned();
        }
        if let Some(s) = self.seed {
            cfg.scheme.seed = s;
        }
        if let Some(s) = self.stages {
            cfg.scheme.max_stages = s;
        }
        if let Some(r) = self.resolution {
            cfg.output.resolution = r;
        }
        cfg.normalize().map_err(|message| CliError::Config(crate::ConfigError { line: None, column: None, message }))
    }
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_grid(field: &Field, cfg: &RunConfig, path: &Path) -> Result<(), CliError> {
    let n = cfg.output.resolution;
    Grid::sample(field, &cfg.scheme.domain.rect, n, n).write(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn target_a0(cfg: &RunConfig) -> Result<Sym, CliError> {
    let fields = cfg.fields()?;
    match (fields.a0, fields.f) {
        (Some(a), _) => Ok(a),
        (None, Some(f)) => Ok(solve_a0_from_f(&f, &cfg.scheme.domain, cfg.scheme.c_extra, cfg.scheme.poisson_modes)?),
        (None, None) => Err(CliError::Config(crate::ConfigError { line: None, column: None, message: "no A0 or f".into() })),
    }
}

fn target_f(cfg: &RunConfig) -> Result<Field, CliError> {
    let fields = cfg.fields()?;
    match (fields.f, fields.a0) {
        (Some(f), _) => Ok(f),
        (None, Some(a)) => Ok(target_density(&a)),
        (None, None) => Err(CliError::Config(crate::ConfigError { line: None, column: None, message: "no A0 or f".into() })),
    }
}

fn phase_of(art: &RunArtifacts, stage: usize) -> &str {
    art.phases.iter().rev().find(|p| p.first_stage <= stage).map_or("", |p| p.phase.as_str())
}

fn write_artifacts(art: &RunArtifacts, cfg: &RunConfig, error: Option<&wforge_core::Error>, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), CliError> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io_at(&p))?;
        written.push(p);
        Ok(())
    };
    put("config.toml", cfg.to_toml())?;

    let mut log = String::new();
    for (k, rep) in art.stage_reports.iter().enumerate() {
        let line = json!({ "stage": k + 1, "phase": phase_of(art, k), "report": rep });
        log.push_str(&line.to_string());
        log.push('\n');
    }
    let summary = json!({
        "event": "summary",
        "status": if error.is_some() { "error" } else { "ok" },
        "error": error.map(|e| e.to_string()),
        "defect_trace": art.defect_trace,
        "trace_labels": art.trace_labels,
        "grad_increments": art.grad_increments,
        "v_drift": art.v_drift,
        "c1_distance": art.c1_distance,
        "proxy_probes": art.proxy_probes,
        "weak_hessian_trace": art.weak_hessian_trace,
        "weak_hessian_floor": art.weak_hessian_floor,
    });
    log.push_str(&summary.to_string());
    log.push('\n');
    put("run.jsonl", log)?;

    let mut csv = String::from("index,label,defect\n");
    for (i, (d, l)) in art.defect_trace.iter().zip(&art.trace_labels).enumerate() {
        csv.push_str(&format!("{i},{l},{d}\n"));
    }
    put("defect_trace.csv", csv)?;

    let mut csv = String::from("index,max_residual\n");
    for (i, r) in art.weak_hessian_trace.iter().enumerate() {
        csv.push_str(&format!("{i},{r}\n"));
    }
    put("weak_hessian.csv", csv)?;

    for (name, f) in [("v.wfg", &art.v_final), ("w1.wfg", &art.w_final[0]), ("w2.wfg", &art.w_final[1])] {
        let p = dir.join(name);
        write_grid(f, cfg, &p)?;
        written.push(p);
    }
    for (i, v) in art.v_history.iter().enumerate() {
        let p = dir.join(format!("v_{i:03}.wfg"));
        write_grid(v, cfg, &p)?;
        written.push(p);
    }
    Ok(written)
}

/// Run the full pipeline and write the run log, traces and grids to the
/// output directory. A scheme failure is returned after the partial
/// artifacts are on disk.
pub fn construct(cfg: &RunConfig, quiet: bool) -> Result<RunArtifacts, CliError> {
    let fields = cfg.fields()?;
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let outcome = run_full_outcome(&fields.v0, &fields.w0, fields.a0.as_ref(), fields.f.as_ref(), &cfg.scheme)?;
    let mut art = outcome.artifacts;
    art.exports = write_artifacts(&art, cfg, outcome.error.as_ref(), &dir)?;
    if !quiet {
        for ((i, d), l) in art.defect_trace.iter().enumerate().zip(&art.trace_labels) {
            println!("{i:>3} {l:<8} defect {d:.6e}");
        }
        match &outcome.error {
            Some(e) => println!("stopped: {e}"),
            None => println!("completed"),
        }
        println!("artifacts in {}", dir.display());
    }
    match outcome.error {
        Some(e) => Err(CliError::Core(e)),
        None => Ok(art),
    }
}

fn read_grid(path: &Path) -> Result<Grid, CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!("{}: missing artifact", path.display())));
    }
    Ok(Grid::read(path)?)
}

/// `sup |f(p) - f(q)| / |p - q|^alpha` over axis and diagonal neighbours at
/// dyadic distances, on every `step`-th grid point.
fn grid_holder(g: &Grid, alpha: f64, step: usize) -> f64 {
    let nx = (g.nx - 1) / step + 1;
    let ny = (g.ny - 1) / step + 1;
    let at = |i: usize, j: usize| (g.get(i * step, j * step), g.point(i * step, j * step));
    let mut best = 0.0f64;
    let mut d = 1;
    while d < nx.max(ny) {
        for (di, dj) in [(d as isize, 0isize), (0, d as isize), (d as isize, d as isize), (d as isize, -(d as isize))] {
            for j in 0..ny as isize {
                for i in 0..nx as isize {
                    let (i2, j2) = (i + di, j + dj);
                    if i2 < 0 || j2 < 0 || i2 >= nx as isize || j2 >= ny as isize {
                        continue;
                    }
                    let (a, p) = at(i as usize, j as usize);
                    let (b, q) = at(i2 as usize, j2 as usize);
                    let r = (p[0] - q[0]).hypot(p[1] - q[1]);
                    best = best.max((a - b).abs() / r.powf(alpha));
                }
            }
        }
        d *= 2;
    }
    best
}

/// One row of the verification report.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyRow {
    pub stage: String,
    pub quantity: &'static str,
    pub test: String,
    pub resolution: usize,
    pub value: f64,
}

/// Weak-Hessian residuals of every stored `v` grid against the battery,
/// plus defect and Holder estimates of the final fields. Writes
/// `verify.csv` into the artifact directory.
pub fn verify(cfg: &RunConfig, artifacts: &Path, quiet: bool) -> Result<Vec<VerifyRow>, CliError> {
    let f = target_f(cfg)?;
    let domain = cfg.scheme.domain;
    let battery = bump_battery(&domain, cfg.scheme.seed);
    let res = cfg.scheme.weak_resolution;
    let mut files: Vec<PathBuf> = fs::read_dir(artifacts)
        .map_err(io_at(artifacts))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("v_") && n.ends_with(".wfg")))
        .collect();
    files.sort();
    let final_v = artifacts.join("v.wfg");
    let mut targets: Vec<(String, PathBuf)> = files
        .iter()
        .map(|p| (p.file_stem().unwrap().to_string_lossy().trim_start_matches("v_").to_string(), p.clone()))
        .collect();
    targets.push(("final".into(), final_v.clone()));

    let mut rows = Vec::new();
    for (stage, path) in &targets {
        let g = read_grid(path)?;
        let [g1, g2] = g.gradient()?;
        for n in [res, 2 * res] {
            for (t, phi) in battery.iter().enumerate() {
                let r = weak_hessian_residual_fn(|p| [g1.interpolate(p), g2.interpolate(p)], |p| f.eval(p), phi, &domain, n)?;
                rows.push(VerifyRow { stage: stage.clone(), quantity: "weak_hessian", test: format!("bump{t}"), resolution: n, value: r });
            }
        }
    }

    let v = read_grid(&final_v)?;
    let [v1, v2] = v.gradient()?;
    let w1 = read_grid(&artifacts.join("w1.wfg"))?.gradient()?;
    let w2 = read_grid(&artifacts.join("w2.wfg"))?.gradient()?;
    let a = target_a0(cfg)?;
    let mut sup = 0.0f64;
    for j in 0..v.ny {
        for i in 0..v.nx {
            let p = v.point(i, j);
            let am = a.eval(p);
            let (d1, d2) = (v1.get(i, j), v2.get(i, j));
            let k = j * v.nx + i;
            let d = [
                am[0][0] - (0.5 * d1 * d1 + w1[0].values[k]),
                am[0][1] - (0.5 * d1 * d2 + 0.5 * (w1[1].values[k] + w2[0].values[k])),
                am[1][1] - (0.5 * d2 * d2 + w2[1].values[k]),
            ];
            sup = sup.max(sym2::spectral(d));
        }
    }
    rows.push(VerifyRow { stage: "final".into(), quantity: "defect_sup", test: "-".into(), resolution: v.nx, value: sup });
    let alpha = cfg.scheme.alpha;
    for step in [1, 2] {
        let n = (v.nx - 1) / step + 1;
        let h = grid_holder(&v1, alpha, step).max(grid_holder(&v2, alpha, step));
        rows.push(VerifyRow { stage: "final".into(), quantity: "holder_grad_v", test: format!("alpha={alpha}"), resolution: n, value: h });
    }

    let mut csv = String::from("stage,quantity,test,resolution,value\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.stage, r.quantity, r.test, r.resolution, r.value));
    }
    let out = artifacts.join("verify.csv");
    fs::write(&out, &csv).map_err(io_at(&out))?;
    if !quiet {
        print!("{csv}");
    }
    Ok(rows)
}

/// Arguments of the degree subcommand.
#[derive(Clone, Debug)]
pub struct DegreeArgs {
    pub polygon: Vec<[f64; 2]>,
    pub y: [f64; 2],
    pub delta: Option<f64>,
    /// Test bump `g` for the degree formula.
    pub g: Option<TestFunction>,
    pub resolution: usize,
}

/// Degree of `grad v0` (or its rotation-perturbed version) as a JSON answer.
/// A clearance failure still produces a JSON answer, then the error.
pub fn degree(cfg: &RunConfig, args: &DegreeArgs, quiet: bool) -> Result<serde_json::Value, CliError> {
    let fields = cfg.fields()?;
    let mut query = DegreeQuery::new(args.polygon.clone(), args.y);
    query.max_depth = 24;
    let rect = cfg.scheme.domain.rect;
    if let Some(p) = args.polygon.iter().find(|p| !rect.contains(**p)) {
        return Err(CliError::Core(wforge_core::Error::Argument(format!("polygon vertex {p:?} lies outside the domain"))));
    }
    let result = match args.delta {
        Some(d) => perturbed_degree(&fields.v0, d, &query),
        None => brouwer_degree(&fields.v0.grad(), &query),
    };
    let mut answer = json!({
        "query": { "polygon": args.polygon, "y": args.y, "delta": args.delta },
    });
    let outcome = match result {
        Ok(r) => {
            answer["degree"] = json!(r.degree);
            answer["clearance"] = json!(r.clearance);
            answer["tolerance"] = json!(r.tolerance);
            if let Some(g) = &args.g {
                let f = target_f(cfg).unwrap_or_else(|_| Field::zero());
                let fr = degree_formula_residual(&fields.v0, &f, &query, g, args.resolution)?;
                answer["formula"] = json!(fr);
            }
            Ok(())
        }
        Err(e) => {
            answer["degree"] = serde_json::Value::Null;
            answer["error"] = json!("degree-undefined");
            if let wforge_core::Error::DegreeUndefined { clearance, tolerance } = &e {
                answer["clearance"] = json!(clearance);
                answer["tolerance"] = json!(tolerance);
            }
            Err(CliError::Core(e))
        }
    };
    if !quiet {
        println!("{answer}");
    }
    outcome.map(|_| answer)
}

/// Markdown summary of a construct output directory; also written to `report.md`.
pub fn report(artifacts: &Path, quiet: bool) -> Result<String, CliError> {
    let log_path = artifacts.join("run.jsonl");
    let log = fs::read_to_string(&log_path).map_err(io_at(&log_path))?;
    let mut out = String::from("| stage | phase | defect before | defect after | max lambda | l |\n|---|---|---|---|---|---|\n");
    let mut summary = None;
    for (n, line) in log.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| CliError::Core(wforge_core::Error::Format { field: "run.jsonl", reason: format!("line {}: {e}", n + 1) }))?;
        if v.get("event").and_then(|e| e.as_str()) == Some("summary") {
            summary = Some(v);
            continue;
        }
        let r = &v["report"];
        let max_lambda = r["lambdas"].as_array().map_or(0.0, |a| a.iter().filter_map(|x| x.as_f64()).fold(0.0, f64::max));
        out.push_str(&format!(
            "| {} | {} | {:.4e} | {:.4e} | {:.3e} | {} |\n",
            v["stage"],
            v["phase"].as_str().unwrap_or(""),
            r["defect_before"]["value"].as_f64().unwrap_or(f64::NAN),
            r["defect_after"]["value"].as_f64().unwrap_or(f64::NAN),
            max_lambda,
            r["l"].as_f64().map_or("-".to_string(), |l| format!("{l:.3e}")),
        ));
    }
    if let Some(s) = summary {
        out.push_str(&format!("\nstatus: {}\n", s["status"].as_str().unwrap_or("?")));
        if let Some(e) = s["error"].as_str() {
            out.push_str(&format!("error: {e}\n"));
        }
        out.push_str(&format!("sup drift of v: {}\n", s["v_drift"]));
        out.push_str(&format!("weak-Hessian trace: {}\n", s["weak_hessian_trace"]));
        out.push_str(&format!("weak-Hessian floor: {}\n", s["weak_hessian_floor"]));
    }
    let path = artifacts.join("report.md");
    fs::write(&path, &out).map_err(io_at(&path))?;
    if !quiet {
        print!("{out}");
    }
    Ok(out)
}
