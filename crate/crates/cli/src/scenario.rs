//! Scenario files: sections of `key = value` lines (a TOML subset).
//!
//! ```toml
//! name = "demo"
//!
//! [geometry]
//! case = "sphere"        # interval, circle, disk, sphere, cylinder, torus, box2d
//! L = 3.141592653589793
//! R = "sin(s)"
//! grid_n = 400
//!
//! [fields]
//! f = "cos(s)"
//! q = "0"
//! c = 1.0
//!
//! [observation]
//! omega = [[0.0, 0.3], [2.8, 3.141592653589793]]
//!
//! [sweep]
//! ks = [10, 14, 20, 28, 40]
//! Ts = [1.0, 2.0]
//!
//! [run]
//! kernel = false
//! ```
//!
//! A built-in construction replaces the geometry, fields and observation
//! sections by `builtin = "<name>"` and an optional `[params]` table.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use gradobs::geometry::{build_surface, Case, SurfaceConfig};
use gradobs::observability::{build_named_scenario, Scenario, DELTA_FIT, EPS_FLOOR};
use gradobs::region::Region;
use gradobs::SurfaceSpecF64;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRaw {
    name: Option<String>,
    builtin: Option<String>,
    params: Option<BTreeMap<String, f64>>,
    geometry: Option<GeometryRaw>,
    fields: Option<FieldsRaw>,
    observation: Option<ObservationRaw>,
    sweep: Option<SweepRaw>,
    run: Option<RunRaw>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryRaw {
    case: String,
    #[serde(rename = "L")]
    length: f64,
    #[serde(rename = "R")]
    profile: Option<String>,
    origin: Option<f64>,
    grid_n: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldsRaw {
    f: String,
    q: Option<String>,
    c: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationRaw {
    omega: Option<Vec<Vec<f64>>>,
    boxes: Option<Vec<Vec<f64>>>,
    balls: Option<Vec<Vec<f64>>>,
    whole: Option<bool>,
    boundary: Option<bool>,
    theta: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepRaw {
    epsilons: Option<Vec<f64>>,
    ks: Option<Vec<i64>>,
    #[serde(rename = "Ts")]
    ts: Option<Vec<f64>>,
    delta_fit: Option<f64>,
    modes: Option<i64>,
    sources: Option<i64>,
    t_cap: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRaw {
    flow: Option<bool>,
    agmon: Option<bool>,
    spectral: Option<bool>,
    observability: Option<bool>,
    kernel: Option<bool>,
}

/// Input error, with the offending line when known.
#[derive(Debug)]
pub struct InputError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {}: {}", l, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for InputError {}

#[derive(Debug, Clone, Copy)]
pub struct Analyses {
    pub flow: bool,
    pub agmon: bool,
    pub spectral: bool,
    pub observability: bool,
    pub kernel: bool,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: String,
    pub builtin: Option<String>,
    pub scenario: Scenario,
    /// `(k, ε)` with ε strictly decreasing.
    pub cells: Vec<(u32, f64)>,
    pub ts: Vec<f64>,
    pub delta_fit: f64,
    pub modes: usize,
    pub sources: usize,
    pub t_cap: f64,
    pub run: Analyses,
}

/// Line (1-based) of `key` inside `[section]`, or of the section header
/// when `key` is empty. Falls back to the header, then to nothing.
fn locate(src: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') && !line.starts_with("[[") {
            let name = line.trim_start_matches('[').split(']').next().unwrap_or("").trim().to_string();
            if section == Some(name.as_str()) {
                header = Some(i + 1);
            }
            current = Some(name);
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if !key.is_empty() && k.trim() == key {
                return Some(i + 1);
            }
        }
    }
    header
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: Option<&str>, key: &str, message: impl Into<String>) -> InputError {
        InputError {
            line: locate(self.src, section, key),
            message: message.into(),
        }
    }
}

pub fn load(path: &Path) -> Result<Resolved, InputError> {
    let src = std::fs::read_to_string(path).map_err(|e| InputError {
        line: None,
        message: format!("cannot read {}: {}", path.display(), e),
    })?;
    parse(&src)
}

pub fn parse(src: &str) -> Result<Resolved, InputError> {
    let raw: FileRaw = toml::from_str(src).map_err(|e| InputError {
        line: e.span().map(|s| line_of_offset(src, s.start)),
        message: e.message().trim().to_string(),
    })?;
    resolve(raw, &Ctx { src })
}

fn resolve(raw: FileRaw, cx: &Ctx) -> Result<Resolved, InputError> {
    let (scenario, builtin) = match &raw.builtin {
        Some(b) => {
            for (present, sec) in [
                (raw.geometry.is_some(), "geometry"),
                (raw.fields.is_some(), "fields"),
                (raw.observation.is_some(), "observation"),
            ] {
                if present {
                    return Err(cx.err(Some(sec), "", format!("[{}] cannot be combined with a builtin", sec)));
                }
            }
            let params = raw.params.clone().unwrap_or_default();
            let defaults = build_named_scenario(b, &BTreeMap::new()).map_err(|e| cx.err(None, "builtin", e.to_string()))?;
            for key in params.keys() {
                if !defaults.params.contains_key(key) {
                    return Err(cx.err(
                        Some("params"),
                        key,
                        format!(
                            "unknown parameter `{}` for {} (known: {})",
                            key,
                            b,
                            defaults.params.keys().cloned().collect::<Vec<_>>().join(", ")
                        ),
                    ));
                }
            }
            let sc = build_named_scenario(b, &params).map_err(|e| cx.err(Some("params"), "", e.to_string()))?;
            (sc, Some(b.clone()))
        }
        None => {
            if raw.params.is_some() {
                return Err(cx.err(Some("params"), "", "[params] needs a builtin"));
            }
            (explicit(&raw, cx)?, None)
        }
    };

    // geometry and expressions
    if scenario.surface.grid_n < 64 {
        return Err(cx.err(Some("geometry"), "grid_n", format!("grid_n must be at least 64, got {}", scenario.surface.grid_n)));
    }
    let spec: SurfaceSpecF64 =
        build_surface(&scenario.surface).map_err(|e| cx.err(Some("geometry"), "case", e.to_string()))?;
    scenario.f_expr().map_err(|e| cx.err(Some("fields"), "f", e.to_string()))?;
    scenario.q_expr().map_err(|e| cx.err(Some("fields"), "q", e.to_string()))?;
    let om_key = match &scenario.omega {
        Region::Boxes(_) => "boxes",
        Region::Balls(_) => "balls",
        Region::Whole => "whole",
        Region::Intervals(_) => "omega",
    };
    if !scenario.boundary {
        scenario
            .omega
            .validate(&spec)
            .map_err(|e| cx.err(Some("observation"), om_key, e.to_string()))?;
    }
    inside_domain(&scenario.omega, &spec).map_err(|m| cx.err(Some("observation"), om_key, m))?;
    if let Some(o) = &raw.observation {
        if let Some(th) = &o.theta {
            check_theta(th, &spec, cx)?;
        }
    }

    // sweep
    let sweep = raw.sweep.as_ref();
    let c = scenario.c;
    let cells = cells(sweep, c, spec.case, cx)?;
    let ts = sweep.and_then(|s| s.ts.clone()).unwrap_or_default();
    if ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(cx.err(Some("sweep"), "Ts", "horizons must be positive"));
    }
    if ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(cx.err(Some("sweep"), "Ts", "horizons must increase"));
    }
    let delta_fit = sweep.and_then(|s| s.delta_fit).unwrap_or(DELTA_FIT);
    if !(delta_fit >= 0.0) {
        return Err(cx.err(Some("sweep"), "delta_fit", "delta_fit must be nonnegative"));
    }
    let modes = sweep.and_then(|s| s.modes).unwrap_or(64);
    if modes < 1 {
        return Err(cx.err(Some("sweep"), "modes", "modes must be positive"));
    }
    let sources = sweep.and_then(|s| s.sources).unwrap_or(10);
    if sources < 1 {
        return Err(cx.err(Some("sweep"), "sources", "sources must be positive"));
    }
    let t_cap = sweep.and_then(|s| s.t_cap).unwrap_or(100.0);
    if !(t_cap > 0.0) {
        return Err(cx.err(Some("sweep"), "t_cap", "t_cap must be positive"));
    }

    let has_sweep = !cells.is_empty();
    let r = raw.run.as_ref();
    let run = Analyses {
        flow: r.and_then(|r| r.flow).unwrap_or(true),
        agmon: r.and_then(|r| r.agmon).unwrap_or(true),
        spectral: r.and_then(|r| r.spectral).unwrap_or(has_sweep),
        observability: r.and_then(|r| r.observability).unwrap_or(has_sweep && !ts.is_empty()),
        kernel: r.and_then(|r| r.kernel).unwrap_or(false),
    };
    if (run.spectral || run.observability || run.kernel) && !has_sweep {
        return Err(cx.err(Some("run"), "", "the requested analyses need [sweep] epsilons or ks"));
    }
    if (run.observability || run.kernel) && (cells.len() < 4 || ts.is_empty()) {
        return Err(cx.err(
            Some("sweep"),
            "",
            "observability and kernel analyses need at least four sweep cells and one horizon in Ts",
        ));
    }
    if (run.spectral || run.observability) && spec.case == Case::Box2d {
        return Err(cx.err(Some("run"), "", "spectral and observability analyses need a one-dimensional or rotational domain"));
    }
    if run.kernel && spec.case == Case::Box2d {
        return Err(cx.err(Some("run"), "kernel", "the kernel analysis needs a one-dimensional or rotational domain"));
    }

    Ok(Resolved {
        name: raw.name.clone().unwrap_or_else(|| builtin.clone().unwrap_or_else(|| "scenario".into())),
        builtin,
        scenario,
        cells,
        ts,
        delta_fit,
        modes: modes as usize,
        sources: sources as usize,
        t_cap,
        run,
    })
}

fn explicit(raw: &FileRaw, cx: &Ctx) -> Result<Scenario, InputError> {
    let g = raw
        .geometry
        .as_ref()
        .ok_or_else(|| cx.err(None, "", "missing [geometry] section (or a builtin)"))?;
    let fl = raw
        .fields
        .as_ref()
        .ok_or_else(|| cx.err(None, "", "missing [fields] section"))?;
    let o = raw
        .observation
        .as_ref()
        .ok_or_else(|| cx.err(None, "", "missing [observation] section"))?;
    if g.grid_n < 64 {
        return Err(cx.err(Some("geometry"), "grid_n", format!("grid_n must be at least 64, got {}", g.grid_n)));
    }
    let set = [o.omega.is_some(), o.boxes.is_some(), o.balls.is_some(), o.whole == Some(true)];
    if set.iter().filter(|b| **b).count() != 1 {
        return Err(cx.err(Some("observation"), "", "give exactly one of omega, boxes, balls or whole = true"));
    }
    let omega = if let Some(iv) = &o.omega {
        let mut out = Vec::with_capacity(iv.len());
        for w in iv {
            if w.len() != 2 {
                return Err(cx.err(Some("observation"), "omega", "each interval is [a, b]"));
            }
            out.push((w[0], w[1]));
        }
        Region::Intervals(out)
    } else if let Some(bx) = &o.boxes {
        let mut out = Vec::with_capacity(bx.len());
        for b in bx {
            if b.len() != 4 {
                return Err(cx.err(Some("observation"), "boxes", "each box is [x1_lo, x1_hi, x2_lo, x2_hi]"));
            }
            out.push([b[0], b[1], b[2], b[3]]);
        }
        Region::Boxes(out)
    } else if let Some(bl) = &o.balls {
        let mut out = Vec::with_capacity(bl.len());
        for b in bl {
            if b.len() != 3 {
                return Err(cx.err(Some("observation"), "balls", "each ball is [x1, x2, radius]"));
            }
            out.push(([b[0], b[1]], b[2]));
        }
        Region::Balls(out)
    } else {
        Region::Whole
    };
    let boundary = o.boundary.unwrap_or(false);
    if boundary {
        let Region::Intervals(iv) = &omega else {
            return Err(cx.err(Some("observation"), "boundary", "boundary observation takes omega intervals at the ends"));
        };
        let (lo, hi) = (g.origin.unwrap_or(0.0), g.origin.unwrap_or(0.0) + g.length);
        let at_end = |x: f64| (x - lo).abs() <= 1e-12 * g.length || (x - hi).abs() <= 1e-12 * g.length;
        if !iv.iter().all(|(a, b)| a == b && at_end(*a)) {
            return Err(cx.err(Some("observation"), "omega", "boundary observation lists ends as degenerate intervals [e, e]"));
        }
    }
    Ok(Scenario {
        name: raw.name.clone().unwrap_or_else(|| "scenario".into()),
        surface: SurfaceConfig {
            case: g.case.clone(),
            length: g.length,
            origin: g.origin,
            profile: g.profile.clone(),
            grid_n: g.grid_n as usize,
        },
        f: fl.f.clone(),
        q: fl.q.clone().unwrap_or_else(|| "0".into()),
        c: fl.c.unwrap_or(0.0),
        omega,
        boundary,
        params: BTreeMap::new(),
        predicted: BTreeMap::new(),
    })
}

/// Endpoints must lie in the coordinate range even on periodic domains,
/// where a wrapping arc is written `[a, b]` with `a > b`.
fn inside_domain(omega: &Region<f64>, spec: &SurfaceSpecF64) -> Result<(), String> {
    let (lo, hi) = (spec.origin, spec.end());
    let slack = 1e-12 * spec.length;
    let inside = |x: f64| x >= lo - slack && x <= hi + slack;
    match omega {
        Region::Intervals(iv) => {
            for (a, b) in iv {
                if !inside(*a) || !inside(*b) {
                    return Err(format!("interval [{}, {}] leaves the domain [{}, {}]", a, b, lo, hi));
                }
            }
        }
        Region::Boxes(bx) => {
            for b in bx {
                if !b.iter().all(|x| inside(*x)) || b[0] > b[1] || b[2] > b[3] {
                    return Err(format!("box {:?} is not inside the domain [{}, {}]²", b, lo, hi));
                }
            }
        }
        Region::Balls(bl) => {
            for (c, r) in bl {
                if !(c.iter().all(|x| inside(*x)) && *r > 0.0) {
                    return Err(format!("ball at {:?} with radius {} is not inside the domain", c, r));
                }
            }
        }
        Region::Whole => {}
    }
    Ok(())
}

/// Only the full circle is supported: the analyses live in Fourier sectors,
/// so observation sets are products `I × S¹`.
fn check_theta(th: &[f64], spec: &SurfaceSpecF64, cx: &Ctx) -> Result<(), InputError> {
    if !spec.case.is_revolution() {
        return Err(cx.err(Some("observation"), "theta", "theta applies to surfaces of revolution only"));
    }
    let full = th.len() == 2 && th[0].abs() <= 1e-12 && (th[1] - 2.0 * PI).abs() <= 1e-12;
    if !full {
        return Err(cx.err(
            Some("observation"),
            "theta",
            "only the full angular support [0, 2π] is supported",
        ));
    }
    Ok(())
}

fn cells(sweep: Option<&SweepRaw>, c: f64, case: Case, cx: &Ctx) -> Result<Vec<(u32, f64)>, InputError> {
    let Some(s) = sweep else { return Ok(vec![]) };
    let ks: Option<Vec<u32>> = match &s.ks {
        Some(v) => {
            if v.iter().any(|k| *k < 0 || *k > 10_000) {
                return Err(cx.err(Some("sweep"), "ks", "ks must be nonnegative integers"));
            }
            if v.iter().any(|k| *k > 0) && !case.is_revolution() {
                return Err(cx.err(Some("sweep"), "ks", "Fourier modes need a surface of revolution"));
            }
            Some(v.iter().map(|k| *k as u32).collect())
        }
        None => None,
    };
    let (cells, key) = match (ks, &s.epsilons) {
        (None, None) => return Ok(vec![]),
        (None, Some(e)) => (e.iter().map(|e| (0, *e)).collect::<Vec<_>>(), "epsilons"),
        (Some(k), Some(e)) => {
            if k.len() != e.len() {
                return Err(cx.err(Some("sweep"), "ks", "ks and epsilons must have the same length"));
            }
            (k.into_iter().zip(e.iter().copied()).collect(), "epsilons")
        }
        (Some(k), None) => {
            if !(c > 0.0) || k.iter().any(|k| *k == 0) {
                return Err(cx.err(Some("sweep"), "ks", "ε_k = c/k needs c > 0 and k ≥ 1; give epsilons otherwise"));
            }
            (k.into_iter().map(|k| (k, c / k as f64)).collect(), "ks")
        }
    };
    for (_, e) in &cells {
        if !(*e >= EPS_FLOOR) {
            return Err(cx.err(Some("sweep"), key, format!("ε = {} is below the floor {}", e, EPS_FLOOR)));
        }
    }
    if cells.windows(2).any(|w| !(w[1].1 < w[0].1)) {
        return Err(cx.err(Some("sweep"), key, "ε must strictly decrease along the sweep"));
    }
    Ok(cells)
}
