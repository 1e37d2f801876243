use std::fs;
use std::path::{Path, PathBuf};

use lyapgen::doa::{self, ContourSet};
use lyapgen::dynamics::Bounds;
use lyapgen::error::Error;
use lyapgen::ftlf::FtCertificate;
use lyapgen::io;
use lyapgen::lyap::{self, LyapExport, LyapFunction};
use lyapgen::pipeline::{self, Budgets, EquilibriumSel, PSpec, RunConfig, SystemRef};
use lyapgen::reproduce::{self, EXAMPLE_IDS};
use serde::Serialize;

use crate::{Cli, Command, Target};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let hint = match e {
            Error::HorizonNotFound { .. } => "; try another P, for example --p lyapunov:10",
            _ => "",
        };
        Failure {
            code: e.exit_code() as u8,
            message: format!("{e}{hint}"),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type Outcome = Result<u8, Failure>;

/// Caps the worker pool at `LYAPGEN_THREADS` when set.
pub fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("LYAPGEN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("LYAPGEN_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn parse_list(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| usage(format!("`{v}` is not a number"))))
        .collect()
}

fn parse_box(s: &str) -> Result<Bounds, Failure> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| usage("box must look like `l1,l2:u1,u2`"))?;
    Ok(Bounds::new(parse_list(lo)?, parse_list(hi)?)?)
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), Failure>
where
    F: FnOnce(&mut Vec<u8>) -> lyapgen::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn load_w(path: &Path) -> Result<LyapFunction, Failure> {
    let export: LyapExport = serde_json::from_str(&read(path)?).map_err(Error::from)?;
    Ok(LyapFunction::from_export(&export)?)
}

fn load_certificate(path: &Path) -> Result<FtCertificate, Failure> {
    if !path.is_file() {
        return Err(Failure {
            code: 2,
            message: format!("no certificate at {}; run `lyapgen verify` first", path.display()),
        });
    }
    Ok(serde_json::from_str(&read(path)?).map_err(Error::from)?)
}

fn target_layer(t: &Target) -> Result<RunConfig, Failure> {
    Ok(RunConfig {
        system: t.system.clone().map(SystemRef::Named),
        bounds: t.bounds.as_deref().map(parse_box).transpose()?,
        ..Default::default()
    })
}

struct Env {
    cfg: RunConfig,
    out_dir: PathBuf,
}

impl Env {
    fn out(&self, explicit: Option<PathBuf>, default: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.out_dir.join(default))
    }

    fn with(&self, layer: RunConfig) -> Result<RunConfig, Failure> {
        let cfg = self.cfg.clone().merged(layer);
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Outcome {
    let file_cfg = match &cli.config {
        Some(path) => RunConfig::parse(&read(path)?)?,
        None => RunConfig::default(),
    };
    let cfg = file_cfg.merged(RunConfig {
        seed: cli.seed,
        ..Default::default()
    });
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(|e| usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let env = Env { cfg, out_dir };

    match cli.command {
        Command::Equilibria { target, out } => equilibria(&env, &target, out),
        Command::Verify {
            target,
            eq_index,
            eq_point,
            p,
            d,
            margin,
            level,
            out,
        } => {
            let mut layer = target_layer(&target)?;
            layer.equilibrium = match (eq_index, eq_point) {
                (Some(i), _) => Some(EquilibriumSel::Index(i)),
                (None, Some(x)) => Some(EquilibriumSel::Point(parse_list(&x)?)),
                (None, None) => None,
            };
            layer.p = p.as_deref().map(str::parse::<PSpec>).transpose()?;
            layer.d = d;
            layer.margin = margin;
            layer.level = level;
            verify(&env, layer, out)
        }
        Command::Build { cert, flow, expand, out } => build(&env, &cert, flow, &expand, out),
        Command::Doa {
            w,
            bounds,
            c_range,
            expand,
            within,
            grid,
            out,
            contour,
        } => {
            let c_range = match c_range {
                Some(s) => match parse_list(&s)?.as_slice() {
                    [lo, hi] => Some([*lo, *hi]),
                    _ => return Err(usage("--c-range takes `lo,hi`")),
                },
                None => None,
            };
            let layer = RunConfig {
                bounds: bounds.as_deref().map(parse_box).transpose()?,
                c_range,
                expand: (!expand.is_empty()).then_some(expand),
                budgets: grid.map(|g| Budgets {
                    doa_grid: Some(g),
                    ..Default::default()
                }),
                ..Default::default()
            };
            doa_cmd(&env, &w, layer, within.as_deref(), out, contour)
        }
        Command::Expand { w, alpha, out } => {
            let w1 = lyap::expand_w(&load_w(&w)?, alpha)?;
            let path = env.out(out, "w-expanded.json");
            write_json(&path, &w1.to_export())?;
            println!("expanded W (alpha chain {:?}) written to {}", w1.alpha_chain(), path.display());
            Ok(0)
        }
        Command::Trace { target, x0, t, out } => {
            let cfg = env.with(target_layer(&target)?)?;
            let (sys, _) = cfg.resolve_system()?;
            let traj = pipeline::trace(&sys, &parse_list(&x0)?, t)?;
            let path = env.out(out, "trajectory.csv");
            write_with(&path, |buf| traj.write_csv(buf))?;
            let end: Vec<String> = traj.last().iter().map(|v| format!("{v:.6}")).collect();
            println!("x({t}) = ({}); {} samples written to {}", end.join(", "), traj.times.len(), path.display());
            Ok(0)
        }
        Command::Export {
            w,
            level,
            bounds,
            resolution,
            all,
            out,
        } => {
            let w = load_w(&w)?;
            let cfg = env.with(RunConfig {
                bounds: bounds.as_deref().map(parse_box).transpose()?,
                ..Default::default()
            })?;
            let bx = cfg.bounds.clone().unwrap_or_else(|| w.system().default_box());
            let res = resolution.unwrap_or_else(|| cfg.contour_resolution(w.dim()));
            let set = doa::export_contour(&w, level, &bx.shifted(w.system().offset()), res, !all)?;
            let path = env.out(out, "contour.csv");
            write_contour(&path, &set)?;
            Ok(0)
        }
        Command::Reproduce { examples, contours } => reproduce_cmd(&env, &examples, contours),
        Command::Check { files } => Ok(check(&files)),
    }
}

fn write_contour(path: &Path, set: &ContourSet) -> Result<(), Failure> {
    write_with(path, |buf| set.write_csv(buf))?;
    let count = if set.dim == 2 { set.polylines.len() } else { set.points.len() };
    let what = if set.dim == 2 { "curves" } else { "surface points" };
    println!("contour of level {} ({count} {what}) written to {}", set.level, path.display());
    Ok(())
}

fn equilibria(env: &Env, target: &Target, out: Option<PathBuf>) -> Outcome {
    let cfg = env.with(target_layer(target)?)?;
    let (sys, bounds) = cfg.resolve_system()?;
    let report = pipeline::equilibria(&sys, &bounds)?;
    println!("{:>3}  {:<40} {:<14} eigenvalues", "#", "x", "class");
    for (i, e) in report.equilibria.iter().enumerate() {
        let x: Vec<String> = e.x.iter().map(|v| format!("{v:.6}")).collect();
        let ev: Vec<String> = e
            .eigenvalues
            .iter()
            .map(|(re, im)| if *im == 0.0 { format!("{re:.4}") } else { format!("{re:.4}{im:+.4}i") })
            .collect();
        println!(
            "{:>3}  {:<40} {:<14} {}",
            i,
            format!("({})", x.join(", ")),
            format!("{:?}", e.classification).to_lowercase(),
            ev.join(" ")
        );
    }
    let path = env.out(out, "equilibria.json");
    write_json(&path, &report)?;
    Ok(0)
}

fn verify(env: &Env, layer: RunConfig, out: Option<PathBuf>) -> Outcome {
    let cfg = env.with(layer)?;
    let cert = pipeline::verify(&cfg)?;
    let path = env.out(out, "certificate.json");
    write_json(&path, &cert)?;
    println!("equilibrium      {:?}", cert.equilibrium);
    println!("d                {}", cert.d);
    println!("linear norm      {:.6} ({})", cert.linear_norm, verdict(cert.linear_pass));
    println!("weighted mu      {:.6}", cert.mu);
    println!("candidate level  {}", cert.c_v);
    println!("max decrease     {:.6e} over {} samples", cert.max_decrease, cert.samples);
    if let Some(x) = &cert.escape {
        println!("finite escape    from {x:?}");
    }
    println!("nonlinear check  {}", verdict(cert.nonlinear_pass));
    println!("certificate written to {}", path.display());
    Ok(if cert.passed() { 0 } else { 2 })
}

fn build(env: &Env, cert: &Path, flow: bool, expand: &[f64], out: Option<PathBuf>) -> Outcome {
    let cert = load_certificate(cert)?;
    let mut w = pipeline::build(&cert, flow || env.cfg.flow.unwrap_or(false))?;
    for &alpha in expand {
        w = lyap::expand_w(&w, alpha)?;
    }
    let path = env.out(out, "w.json");
    write_json(&path, &w.to_export())?;
    println!("{:?} W with d = {} written to {}", w.kind(), w.d(), path.display());
    Ok(0)
}

fn doa_cmd(
    env: &Env,
    w: &Path,
    layer: RunConfig,
    within: Option<&Path>,
    out: Option<PathBuf>,
    contour: Option<PathBuf>,
) -> Outcome {
    let cfg = env.with(layer)?;
    let w = load_w(w)?;
    let cert = within.map(load_certificate).transpose()?;
    let (est, set) = pipeline::doa(&w, &cfg, cert.as_ref())?;
    let path = env.out(out, "doa.json");
    write_json(&path, &est)?;
    write_contour(&env.out(contour, "contour.csv"), &set)?;
    println!("C                {:.6}", est.c);
    println!("max Wdot         {:.6e}", est.max_wdot);
    println!("touches box      {}", est.touches_box);
    let contained = est.containment.as_ref().is_none_or(|c| c.contained);
    if let Some(c) = &est.containment {
        println!(
            "containment      {} (worst excess {:.3e} over {} samples)",
            verdict(c.contained),
            c.worst_excess,
            c.samples
        );
    }
    println!("verdict          {}", verdict(est.verdict));
    println!("estimate written to {}", path.display());
    Ok(if est.verdict && contained { 0 } else { 2 })
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' })
        .collect()
}

fn reproduce_cmd(env: &Env, examples: &[String], contours: bool) -> Outcome {
    let ids: Vec<String> = if examples.iter().any(|e| e == "all") {
        EXAMPLE_IDS.iter().map(|s| s.to_string()).collect()
    } else {
        examples.to_vec()
    };
    if let Some(bad) = ids.iter().find(|id| !EXAMPLE_IDS.contains(&id.as_str())) {
        return Err(usage(format!("unknown example `{bad}`; expected one of {}", EXAMPLE_IDS.join(", "))));
    }
    let mut all_pass = true;
    for id in &ids {
        let run = reproduce::reproduce(id, env.cfg.seed())?;
        let report = &run.report;
        println!("example {id} ({})", report.system);
        for c in &report.checks {
            let tag = match (c.pass, c.informational) {
                (true, _) => "ok",
                (false, false) => "FAIL",
                (false, true) => "note",
            };
            let value = c.value.map(|v| format!(" [{v:.6}]")).unwrap_or_default();
            println!("  {tag:<4} {}{value}: {}", c.name, c.expected);
        }
        println!("  => {}", verdict(report.pass));
        write_json(&env.out_dir.join(format!("report-{id}.json")), report)?;
        if contours {
            for level in &run.levels {
                let res = env.cfg.contour_resolution(level.w.dim());
                let set = doa::export_contour(&level.w, level.level, &level.bounds, res, true)?;
                let name = format!("contour-{id}-{}.csv", file_label(&level.label));
                write_contour(&env.out_dir.join(name), &set)?;
            }
        }
        all_pass &= report.pass;
    }
    Ok(if all_pass { 0 } else { 2 })
}

fn check(files: &[PathBuf]) -> u8 {
    let mut code = 0;
    for path in files {
        let loaded = fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|text| io::parse_document(&text))
            .and_then(|doc| io::check_document(&doc).map(|f| (doc, f)));
        match loaded {
            Ok((doc, findings)) => {
                println!("{}: {}", path.display(), doc.kind());
                for f in &findings {
                    println!("  {:<4} {}: {}", if f.ok { "ok" } else { "FAIL" }, f.name, f.detail);
                }
                if findings.iter().any(|f| !f.ok) && code == 0 {
                    code = 2;
                }
            }
            Err(e) => {
                println!("{}: unreadable: {e}", path.display());
                code = 1;
            }
        }
    }
    code
}
