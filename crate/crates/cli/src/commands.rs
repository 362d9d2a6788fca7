//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::Path;

use blowuplab::feller::{classify_feller, prepare, ScaleSide};
use blowuplab::grid::log_spaced;
use blowuplab::gallery::GALLERY;
use blowuplab::mc::{simulate_path_recorded, McError, SimConfig};
use blowuplab::model::{load_model, SdeModel};
use blowuplab::report::{classify, Outcome, lyapunov_evidence, mc_evidence, model_digest, LyapunovEvidence, McEvidence, SCHEMA_VERSION};
use blowuplab::Verdict;
use serde::Serialize;

use crate::manifest::OutputDir;
use crate::{text, Cli, Command, CommonArgs, Failure, SimArgs, Status};

fn load(path: &Path) -> Result<SdeModel, Failure> {
    load_model(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn sim_config(m: &SdeModel, sim: &SimArgs, seed: Option<u64>) -> Result<SimConfig, Failure> {
    let mut cfg = SimConfig::from_model(m);
    if let Some(p) = sim.paths {
        cfg.n_paths = p;
    }
    if let Some(t) = sim.horizon {
        cfg.horizon = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate(m).map_err(|e| match e {
        McError::InvalidConfig { .. } => Failure::Config(e.to_string()),
        other => Failure::Engine(other.to_string()),
    })?;
    Ok(cfg)
}

fn emit_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Engine(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn open_out(common: &CommonArgs, argv: &[String], config: Option<&Path>, seed: Option<u64>) -> Result<Option<OutputDir>, Failure> {
    common.out.as_deref().map(|dir| OutputDir::create(dir, argv, config, seed)).transpose()
}

pub fn run(cli: Cli, argv: &[String]) -> Result<Status, Failure> {
    match cli.command {
        Command::Classify { model, sim, common } => {
            let m = load(&model.config)?;
            let cfg = sim_config(&m, &sim, common.seed)?;
            eprintln!("classifying {}", m.name);
            let report = classify(&m, Some(&cfg));
            if let Some(mut out) = open_out(&common, argv, Some(&model.config), Some(cfg.seed))? {
                out.write_json("report.json", &report)?;
                out.finish()?;
            }
            if common.json {
                emit_json(&report)?;
            } else {
                print!("{}", text::evidence(&report));
            }
            Ok(if report.final_verdict == Verdict::Inconclusive && !report.contradictions.is_empty() {
                Status::Contradiction
            } else {
                Status::Ok
            })
        }
        Command::Feller { model, anchor, csv, common } => {
            let m = load(&model.config)?;
            let r = classify_feller(&m, anchor).map_err(|e| Failure::Engine(e.to_string()))?;
            if let Some(mut out) = open_out(&common, argv, Some(&model.config), common.seed)? {
                out.write_json("feller.json", &r)?;
                if csv {
                    let setup = prepare(&m, anchor).map_err(|e| Failure::Engine(e.to_string()))?;
                    let mut s = String::from("side,y,log_w\n");
                    for (name, side) in [("left", &setup.left), ("right", &setup.right)] {
                        // Beyond the first failed point the quadrature only fails again, slowly.
                        for y in profile_grid(side) {
                            let lw = side.log_outer_integrand(y);
                            if lw.is_nan() {
                                break;
                            }
                            let _ = writeln!(s, "{name},{:e},{lw:e}", side.original(y));
                        }
                    }
                    out.write("outer_integrand.csv", s.as_bytes())?;
                }
                out.finish()?;
            }
            if common.json {
                emit_json(&r)?;
            } else {
                print!("{}", text::feller(&r));
            }
            Ok(Status::Ok)
        }
        Command::Lyapunov { model, csv, common } => {
            let m = load(&model.config)?;
            eprintln!("checking Lyapunov conditions for {}", m.name);
            let ev = lyapunov_evidence(&m);
            let doc = LyapunovOutput { schema_version: SCHEMA_VERSION, model_name: &m.name, model_digest: model_digest(&m), conditions: &ev };
            if let Some(mut out) = open_out(&common, argv, Some(&model.config), common.seed)? {
                out.write_json("lyapunov.json", &doc)?;
                if csv {
                    out.write("shells.csv", shells_csv(&ev).as_bytes())?;
                }
                out.finish()?;
            }
            if common.json {
                emit_json(&doc)?;
            } else {
                print!("{}", text::lyapunov(&ev));
            }
            Ok(Status::Ok)
        }
        Command::Simulate { model, sim, csv, csv_paths, common } => {
            let m = load(&model.config)?;
            let cfg = sim_config(&m, &sim, common.seed)?;
            eprintln!("simulating {} paths of {}", cfg.n_paths, m.name);
            let ev = mc_evidence(&m, &cfg, &[]);
            if let Outcome::NotApplicable { reason } = &ev.explosion {
                return Err(Failure::Engine(reason.clone()));
            }
            let doc = SimulateOutput { schema_version: SCHEMA_VERSION, model_name: &m.name, model_digest: model_digest(&m), simulation: &ev };
            if let Some(mut out) = open_out(&common, argv, Some(&model.config), Some(cfg.seed))? {
                out.write_json("simulation.json", &doc)?;
                if csv {
                    out.write("paths.csv", trajectories_csv(&m, &cfg, csv_paths)?.as_bytes())?;
                }
                out.finish()?;
            }
            if common.json {
                emit_json(&doc)?;
            } else {
                print!("{}", text::simulation(&ev));
            }
            Ok(Status::Ok)
        }
        Command::Gallery { only, sim, common } => {
            for name in &only {
                if !GALLERY.iter().any(|e| &e.name == name) {
                    let known: Vec<&str> = GALLERY.iter().map(|e| e.name).collect();
                    return Err(Failure::Usage(format!("unknown gallery model `{name}`; known: {}", known.join(", "))));
                }
            }
            let mut out = open_out(&common, argv, None, common.seed)?;
            let mut rows = Vec::new();
            for entry in GALLERY.iter().filter(|e| only.is_empty() || only.iter().any(|n| n == e.name)) {
                let m = entry.model().map_err(|e| Failure::Config(format!("{}: {e}", entry.name)))?;
                let cfg = sim_config(&m, &sim, common.seed)?;
                eprintln!("classifying {}", entry.name);
                let report = classify(&m, Some(&cfg));
                if let Some(out) = out.as_mut() {
                    out.write_json(&format!("{}.json", entry.name), &report)?;
                }
                rows.push(GalleryRow {
                    model: entry.name.to_string(),
                    expected: entry.expected.to_string(),
                    label: report.label.clone(),
                    verdict: report.final_verdict,
                    matches: report.label == entry.expected,
                    contradictions: report.contradictions.len(),
                });
            }
            if let Some(out) = out {
                out.finish()?;
            }
            if common.json {
                emit_json(&rows)?;
            } else {
                print!("{}", gallery_table(&rows));
            }
            if rows.iter().any(|r| r.contradictions > 0 && r.verdict == Verdict::Inconclusive) {
                return Ok(Status::Contradiction);
            }
            if let Some(r) = rows.iter().find(|r| !r.matches) {
                return Err(Failure::Engine(format!("{}: expected `{}`, got `{}`", r.model, r.expected, r.label)));
            }
            Ok(Status::Ok)
        }
    }
}

#[derive(Serialize)]
struct LyapunovOutput<'a> {
    schema_version: u32,
    model_name: &'a str,
    model_digest: String,
    conditions: &'a [LyapunovEvidence],
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    schema_version: u32,
    model_name: &'a str,
    model_digest: String,
    simulation: &'a McEvidence,
}

#[derive(Debug, Serialize)]
struct GalleryRow {
    model: String,
    expected: String,
    label: String,
    verdict: Verdict,
    matches: bool,
    contradictions: usize,
}

fn gallery_table(rows: &[GalleryRow]) -> String {
    let w = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let l = rows.iter().map(|r| r.label.len().max(r.expected.len())).max().unwrap_or(8).max(8);
    let mut s = format!("{:w$}  {:l$}  {:l$}  match\n", "model", "expected", "verdict");
    for r in rows {
        let _ = writeln!(s, "{:w$}  {:l$}  {:l$}  {}", r.model, r.expected, r.label, if r.matches { "yes" } else { "NO" });
    }
    s
}

/// `path,t,x1,...,xd` rows for the first `count` paths.
fn trajectories_csv(m: &SdeModel, cfg: &SimConfig, count: u64) -> Result<String, Failure> {
    let mut s = String::from("path,t");
    for i in 1..=m.dim {
        let _ = write!(s, ",x{i}");
    }
    s.push('\n');
    for p in 0..count.min(cfg.n_paths as u64) {
        let (_, traj) = simulate_path_recorded(m, cfg, p).map_err(|e| Failure::Engine(e.to_string()))?;
        for (t, x) in traj {
            let _ = write!(s, "{p},{t:e}");
            for v in x {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
    }
    Ok(s)
}

/// Oriented points from just past the anchor towards the endpoint, denser
/// near both ends.
fn profile_grid(side: &ScaleSide) -> Vec<f64> {
    if side.end.is_infinite() {
        log_spaced(1e-3, 1e4, 6).into_iter().map(|d| side.anchor + d).collect()
    } else {
        let span = side.end - side.anchor;
        log_spaced(1e-8, 1.0 - 1e-3, 6).into_iter().rev().map(|u| side.end - span * u).collect()
    }
}

/// `condition,candidate,radius,sup,inf` for every evaluated condition.
fn shells_csv(ev: &[LyapunovEvidence]) -> String {
    let mut s = String::from("condition,candidate,radius,sup,inf\n");
    for e in ev {
        let Outcome::Done { report } = &e.result else { continue };
        let cond = serde_json::to_value(e.condition).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let cand = e.candidate.as_deref().unwrap_or("");
        for row in &report.shells {
            let _ = writeln!(s, "{cond},{cand},{:e},{:e},{:e}", row.radius, row.sup, row.inf);
        }
    }
    s
}
