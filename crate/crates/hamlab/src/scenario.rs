//! Config-driven experiment runner: a line-oriented scenario format with
//! `[section]` headers and `key = value` entries, static validation
//! (references, cycles, expression binding), and task execution that writes
//! one JSON report and one CSV table per task.
//!
//! Tasks run sequentially in declaration order with per-task seeds derived
//! from the scenario seed, so identical inputs produce byte-identical
//! artifacts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::derived::{pde36_residual, FamilySweep, SeedGrid};
use crate::flow::family::IsotopyFamily;
use crate::flow::FlowConfig;
use crate::geom::{Manifold, Point, QuadratureRule, Window};
use crate::hamalg::{bar, poisson, reparam, sharp, HamPath, ReparamProfile};
use crate::hamdsl::{parse, parse_family, Hamiltonian, NormalizationTag};
use crate::monodromy::{
    fourier_probe_loop, lemma23_shift, monodromy_value, verify_homomorphism,
    verify_isotopy_constancy, CappedLoop, HamLoop, Lift, MonodromyOptions, VerificationReport,
};
use crate::num::PeriodicSpline;
use crate::orbits::{canonical_capping, spectrum, PeriodicOrbit, SpectrumOptions};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default residual tolerance for spectrum/monodromy expectation checks.
const EXPECT_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// raw line-oriented parsing

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

#[derive(Debug, Clone)]
struct Section {
    line: usize,
    kind: String,
    name: String,
    entries: Vec<Entry>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| {
            Error::scenario(
                self.line,
                format!("section [{} {}] is missing `{key}`", self.kind, self.name),
            )
        })
    }

    fn str_or(&self, key: &str, default: &str) -> String {
        self.get(key)
            .map(|e| e.value.clone())
            .unwrap_or_else(|| default.to_string())
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => parse_f64(e),
        }
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(parse_f64).transpose()
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => match e.value.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Error::scenario(
                    e.line,
                    format!("`{}` is not a boolean: {}", e.key, e.value),
                )),
            },
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e.value.parse::<usize>().map_err(|_| {
                Error::scenario(e.line, format!("`{}` is not an integer: {}", e.key, e.value))
            }),
        }
    }
}

fn parse_f64(e: &Entry) -> Result<f64> {
    let v = match e.value.as_str() {
        "pi" => return Ok(std::f64::consts::PI),
        "-pi" => return Ok(-std::f64::consts::PI),
        "2*pi" => return Ok(std::f64::consts::TAU),
        "-2*pi" => return Ok(-std::f64::consts::TAU),
        other => other,
    };
    v.parse::<f64>()
        .map_err(|_| Error::scenario(e.line, format!("`{}` is not a number: {}", e.key, e.value)))
}

fn parse_point(e: &Entry) -> Result<(f64, f64)> {
    let parts: Vec<&str> = e.value.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(Error::scenario(
            e.line,
            format!("`{}` needs two coordinates, got `{}`", e.key, e.value),
        ));
    }
    let a = parts[0].parse::<f64>();
    let b = parts[1].parse::<f64>();
    match (a, b) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        _ => Err(Error::scenario(
            e.line,
            format!("`{}` has non-numeric coordinates: {}", e.key, e.value),
        )),
    }
}

/// Strip a trailing comment, respecting double-quoted strings.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let header = header.strip_suffix(']').ok_or_else(|| {
                Error::scenario(line_no, "unterminated section header (missing `]`)")
            })?;
            let mut parts = header.split_whitespace();
            let kind = parts
                .next()
                .ok_or_else(|| Error::scenario(line_no, "empty section header"))?
                .to_string();
            let name = parts.next().unwrap_or("").to_string();
            if parts.next().is_some() {
                return Err(Error::scenario(
                    line_no,
                    "section header has more than two words",
                ));
            }
            sections.push(Section {
                line: line_no,
                kind,
                name,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::scenario(line_no, format!("expected `key = value`, got `{line}`"))
        })?;
        let key = key.trim().to_string();
        let mut value = value.trim().to_string();
        if value.starts_with('"') && value.ends_with('"') && value.len() >= 2 {
            value = value[1..value.len() - 1].to_string();
        }
        let section = sections.last_mut().ok_or_else(|| {
            Error::scenario(line_no, "entry appears before any [section] header")
        })?;
        section.entries.push(Entry {
            line: line_no,
            key,
            value,
        });
    }
    Ok(sections)
}

// ---------------------------------------------------------------------------
// scenario model

#[derive(Debug, Clone)]
enum DefSpec {
    Hamiltonian {
        expr: String,
        normalization: String,
        line: usize,
    },
    Sharp {
        left: String,
        right: String,
        line: usize,
    },
    Bar {
        base: String,
        line: usize,
    },
    Reparam {
        base: String,
        a: f64,
        line: usize,
    },
    Shift {
        base: String,
        offset: f64,
        line: usize,
    },
}

impl DefSpec {
    fn line(&self) -> usize {
        match self {
            DefSpec::Hamiltonian { line, .. }
            | DefSpec::Sharp { line, .. }
            | DefSpec::Bar { line, .. }
            | DefSpec::Reparam { line, .. }
            | DefSpec::Shift { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsotopySpec {
    base: String,
    kind: String,
    s_count: usize,
    a: f64,
    offset: f64,
    line: usize,
}

#[derive(Debug, Clone)]
pub struct LoopSpec {
    generator: String,
    contraction: Option<String>,
    line: usize,
}

#[derive(Debug, Clone)]
pub struct LiftSpec {
    mode: String,
    basepoint: (f64, f64),
    cap_area: f64,
    sheet: i64,
}

#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub enum TaskKind {
    Spectrum {
        hamiltonian: String,
        seeds_per_axis: usize,
        orbit_samples: usize,
        expect: Option<Vec<f64>>,
        tolerance: f64,
        allow_unnormalized: bool,
    },
    Monodromy {
        loop_name: String,
        lift: String,
        n_s: usize,
        n_t: usize,
        basepoints: usize,
        expect: Option<f64>,
        tolerance: f64,
    },
    Lemma23 {
        f: String,
        g: String,
        lift: String,
        contraction: Option<String>,
        probes: usize,
        amplitude: f64,
        n_s: usize,
        n_t: usize,
        expect: f64,
        tolerance: f64,
    },
    Theorem1 {
        family: String,
        orbit_point: (f64, f64),
        orbit_samples: usize,
        expect_drift: Option<f64>,
        tolerance: f64,
        allow_unnormalized: bool,
    },
    Pde36 {
        family: String,
        grid: usize,
        s_count: usize,
        t_count: usize,
        tolerance: f64,
        c_tolerance: f64,
        expect_c: f64,
    },
    Homomorphism {
        loop1: String,
        loop2: String,
        lift1: String,
        lift2: String,
        n_s: usize,
        n_t: usize,
        basepoints: usize,
    },
    Liouville {
        pairs: usize,
        quadrature: usize,
    },
}

impl TaskKind {
    fn label(&self) -> &'static str {
        match self {
            TaskKind::Spectrum { .. } => "spectrum",
            TaskKind::Monodromy { .. } => "monodromy",
            TaskKind::Lemma23 { .. } => "lemma23",
            TaskKind::Theorem1 { .. } => "theorem1",
            TaskKind::Pde36 { .. } => "pde36",
            TaskKind::Homomorphism { .. } => "homomorphism",
            TaskKind::Liouville { .. } => "liouville",
        }
    }
}

/// A parsed, statically validated scenario with all named Hamiltonian paths
/// resolved (cycles, dangling references, and expression binding are all
/// caught at load time; no flows are integrated here).
#[derive(Debug)]
pub struct Scenario {
    pub manifold: Manifold<f64>,
    pub seed: u64,
    pub step: Option<f64>,
    pub out_dir: Option<String>,
    pub tasks: Vec<TaskSpec>,
    paths: HashMap<String, HamPath<f64>>,
    isotopies: HashMap<String, IsotopySpec>,
    families: HashMap<String, (String, usize)>,
    loops: HashMap<String, LoopSpec>,
    lifts: HashMap<String, LiftSpec>,
}

fn wrap_parse_error(line: usize, name: &str, err: Error) -> Error {
    Error::scenario(line, format!("in expression `{name}`: {err}"))
}

impl Scenario {
    pub fn load(text: &str) -> Result<Self> {
        let sections = parse_sections(text)?;
        let mut manifold: Option<Manifold<f64>> = None;
        let mut seed = 0u64;
        let mut step = None;
        let mut out_dir = None;
        let mut window: Option<(f64, f64)> = None;

        let mut defs: BTreeMap<String, DefSpec> = BTreeMap::new();
        let mut isotopies = HashMap::new();
        let mut families = HashMap::new();
        let mut loops = HashMap::new();
        let mut lifts = HashMap::new();
        let mut tasks: Vec<TaskSpec> = Vec::new();

        let named = |s: &Section| -> Result<String> {
            if s.name.is_empty() {
                Err(Error::scenario(
                    s.line,
                    format!("[{}] section needs a name", s.kind),
                ))
            } else {
                Ok(s.name.clone())
            }
        };

        for s in &sections {
            match s.kind.as_str() {
                "scenario" => {
                    if let Some(e) = s.get("seed") {
                        seed = e.value.parse::<u64>().map_err(|_| {
                            Error::scenario(e.line, format!("seed is not an integer: {}", e.value))
                        })?;
                    }
                    step = s.opt_f64("step")?;
                    out_dir = s.get("out").map(|e| e.value.clone());
                    if let Some(e) = s.get("window") {
                        window = Some(parse_point(e)?);
                    }
                    let e = s.require("manifold")?;
                    manifold = Some(match e.value.as_str() {
                        "sphere" => Manifold::sphere(),
                        "torus" => Manifold::torus(),
                        "plane" => match window {
                            Some((lo, hi)) => Manifold::plane(Window::new(lo, hi)),
                            None => Manifold::plane_default(),
                        },
                        other => {
                            return Err(Error::scenario(
                                e.line,
                                format!("unknown manifold `{other}` (sphere|torus|plane)"),
                            ))
                        }
                    });
                }
                "hamiltonian" => {
                    let name = named(s)?;
                    defs.insert(
                        name,
                        DefSpec::Hamiltonian {
                            expr: s.require("expr")?.value.clone(),
                            normalization: s.str_or("normalization", "unchecked"),
                            line: s.line,
                        },
                    );
                }
                "composite" => {
                    let name = named(s)?;
                    let op = s.require("op")?;
                    let spec = match op.value.as_str() {
                        "sharp" => DefSpec::Sharp {
                            left: s.require("left")?.value.clone(),
                            right: s.require("right")?.value.clone(),
                            line: s.line,
                        },
                        "bar" => DefSpec::Bar {
                            base: s.require("base")?.value.clone(),
                            line: s.line,
                        },
                        "reparam" => DefSpec::Reparam {
                            base: s.require("base")?.value.clone(),
                            a: s.f64_or("a", 0.5)?,
                            line: s.line,
                        },
                        "shift" => DefSpec::Shift {
                            base: s.require("base")?.value.clone(),
                            offset: s.f64_or("offset", 0.0)?,
                            line: s.line,
                        },
                        other => {
                            return Err(Error::scenario(
                                op.line,
                                format!("unknown composite op `{other}` (sharp|bar|reparam|shift)"),
                            ))
                        }
                    };
                    defs.insert(name, spec);
                }
                "isotopy" => {
                    let name = named(s)?;
                    isotopies.insert(
                        name,
                        IsotopySpec {
                            base: s.require("base")?.value.clone(),
                            kind: s.str_or("kind", "reparam"),
                            s_count: s.usize_or("s_count", 9)?,
                            a: s.f64_or("a", 0.5)?,
                            offset: s.f64_or("offset", 0.0)?,
                            line: s.line,
                        },
                    );
                }
                "family" => {
                    let name = named(s)?;
                    families.insert(name, (s.require("expr")?.value.clone(), s.line));
                }
                "loop" => {
                    let name = named(s)?;
                    loops.insert(
                        name,
                        LoopSpec {
                            generator: s.require("generator")?.value.clone(),
                            contraction: s.get("contraction").map(|e| e.value.clone()),
                            line: s.line,
                        },
                    );
                }
                "lift" => {
                    let name = named(s)?;
                    let mode = s.str_or("mode", "basepoint");
                    if mode != "basepoint" && mode != "canonical" {
                        return Err(Error::scenario(
                            s.line,
                            format!("unknown lift mode `{mode}` (basepoint|canonical)"),
                        ));
                    }
                    let basepoint = match s.get("basepoint") {
                        Some(e) => parse_point(e)?,
                        None => (0.0, 0.0),
                    };
                    lifts.insert(
                        name,
                        LiftSpec {
                            mode,
                            basepoint,
                            cap_area: s.f64_or("cap_area", 0.0)?,
                            sheet: s.f64_or("sheet", 0.0)? as i64,
                        },
                    );
                }
                "task" => {
                    let name = named(s)?;
                    let kind_entry = s.require("kind")?;
                    let kind = match kind_entry.value.as_str() {
                        "spectrum" => TaskKind::Spectrum {
                            hamiltonian: s.require("hamiltonian")?.value.clone(),
                            seeds_per_axis: s.usize_or("seeds_per_axis", 64)?,
                            orbit_samples: s.usize_or("orbit_samples", 256)?,
                            expect: match s.get("expect") {
                                None => None,
                                Some(e) => Some(parse_float_list(e)?),
                            },
                            tolerance: s.f64_or("tolerance", EXPECT_TOL)?,
                            allow_unnormalized: s.bool_or("allow_unnormalized", false)?,
                        },
                        "monodromy" => TaskKind::Monodromy {
                            loop_name: s.require("loop")?.value.clone(),
                            lift: s.require("lift")?.value.clone(),
                            n_s: s.usize_or("n_s", 64)?,
                            n_t: s.usize_or("n_t", 256)?,
                            basepoints: s.usize_or("basepoints", 10)?,
                            expect: s.opt_f64("expect")?,
                            tolerance: s.f64_or("tolerance", EXPECT_TOL)?,
                        },
                        "lemma23" => TaskKind::Lemma23 {
                            f: s.require("f")?.value.clone(),
                            g: s.require("g")?.value.clone(),
                            lift: s.require("lift")?.value.clone(),
                            contraction: s.get("contraction").map(|e| e.value.clone()),
                            probes: s.usize_or("probes", 10)?,
                            amplitude: s.f64_or("amplitude", 0.12)?,
                            n_s: s.usize_or("n_s", 8)?,
                            n_t: s.usize_or("n_t", 64)?,
                            expect: s.f64_or("expect", 0.0)?,
                            tolerance: s.f64_or("tolerance", 1e-4)?,
                        },
                        "theorem1" => TaskKind::Theorem1 {
                            family: s.require("family")?.value.clone(),
                            orbit_point: parse_point(s.require("orbit_point")?)?,
                            orbit_samples: s.usize_or("orbit_samples", 64)?,
                            expect_drift: s.opt_f64("expect_drift")?,
                            tolerance: s.f64_or(
                                "tolerance",
                                if s.get("expect_drift").is_some() {
                                    1e-3
                                } else {
                                    crate::monodromy::ISOTOPY_DRIFT_TOL
                                },
                            )?,
                            allow_unnormalized: s.bool_or("allow_unnormalized", false)?,
                        },
                        "pde36" => {
                            let grid = s.usize_or("grid", 16)?;
                            let s_count = s.usize_or("s_count", 33)?;
                            let t_count = s.usize_or("t_count", 129)?;
                            if grid < 8 {
                                return Err(Error::scenario(s.line, "pde36 needs grid >= 8"));
                            }
                            if s_count < 3 || t_count < 3 {
                                return Err(Error::scenario(
                                    s.line,
                                    "pde36 needs s_count >= 3 and t_count >= 3",
                                ));
                            }
                            TaskKind::Pde36 {
                                family: s.require("family")?.value.clone(),
                                grid,
                                s_count,
                                t_count,
                                tolerance: s.f64_or("tolerance", 5e-4)?,
                                c_tolerance: s.f64_or("c_tolerance", 1e-5)?,
                                expect_c: s.f64_or("expect_c", 0.0)?,
                            }
                        }
                        "homomorphism" => TaskKind::Homomorphism {
                            loop1: s.require("loop1")?.value.clone(),
                            loop2: s.require("loop2")?.value.clone(),
                            lift1: s.require("lift1")?.value.clone(),
                            lift2: s.require("lift2")?.value.clone(),
                            n_s: s.usize_or("n_s", 16)?,
                            n_t: s.usize_or("n_t", 64)?,
                            basepoints: s.usize_or("basepoints", 10)?,
                        },
                        "liouville" => TaskKind::Liouville {
                            pairs: s.usize_or("pairs", 20)?,
                            quadrature: s.usize_or("quadrature", 128)?,
                        },
                        other => {
                            return Err(Error::scenario(
                                kind_entry.line,
                                format!("unknown task kind `{other}`"),
                            ))
                        }
                    };
                    if tasks.iter().any(|t| t.name == name) {
                        return Err(Error::scenario(
                            s.line,
                            format!("duplicate task name `{name}`"),
                        ));
                    }
                    tasks.push(TaskSpec {
                        name,
                        kind,
                        line: s.line,
                    });
                }
                other => {
                    return Err(Error::scenario(
                        s.line,
                        format!("unknown section kind `{other}`"),
                    ))
                }
            }
        }

        let manifold = manifold.ok_or_else(|| {
            Error::scenario(1, "missing [scenario] section with `manifold = ...`")
        })?;

        // resolve the named paths, detecting cycles and dangling references
        let mut paths: HashMap<String, HamPath<f64>> = HashMap::new();
        let mut visiting: Vec<String> = Vec::new();
        for name in defs.keys().cloned().collect::<Vec<_>>() {
            resolve_path(&name, &defs, &manifold, &mut paths, &mut visiting, 0)?;
        }

        // expression binding of parametrized families
        let families: HashMap<String, (String, usize)> = families;
        for (name, (expr, line)) in &families {
            parse_family::<f64>(expr, &manifold)
                .map_err(|e| wrap_parse_error(*line, name, e))?;
        }

        // reference checks
        for (name, spec) in &isotopies {
            if !paths.contains_key(&spec.base) {
                return Err(Error::scenario(
                    spec.line,
                    format!("isotopy `{name}` references undefined `{}`", spec.base),
                ));
            }
            if spec.s_count < 3 {
                return Err(Error::scenario(spec.line, "isotopy needs s_count >= 3"));
            }
            if !matches!(spec.kind.as_str(), "reparam" | "contraction" | "constant") {
                return Err(Error::scenario(
                    spec.line,
                    format!(
                        "unknown isotopy kind `{}` (reparam|contraction|constant)",
                        spec.kind
                    ),
                ));
            }
        }
        for (name, spec) in &loops {
            if !paths.contains_key(&spec.generator) {
                return Err(Error::scenario(
                    spec.line,
                    format!("loop `{name}` references undefined `{}`", spec.generator),
                ));
            }
            if let Some(c) = &spec.contraction {
                if !isotopies.contains_key(c) {
                    return Err(Error::scenario(
                        spec.line,
                        format!("loop `{name}` references undefined isotopy `{c}`"),
                    ));
                }
            }
        }

        let scn = Self {
            manifold,
            seed,
            step,
            out_dir,
            tasks,
            paths,
            isotopies,
            families,
            loops,
            lifts,
        };
        scn.check_task_references()?;
        Ok(scn)
    }

    fn check_task_references(&self) -> Result<()> {
        let path_ref = |line: usize, name: &str| -> Result<()> {
            if self.paths.contains_key(name) {
                Ok(())
            } else {
                Err(Error::scenario(
                    line,
                    format!("undefined Hamiltonian `{name}`"),
                ))
            }
        };
        let normalized = |line: usize, name: &str, allow: bool| -> Result<()> {
            if allow || self.paths[name].normalization() != NormalizationTag::Unchecked {
                Ok(())
            } else {
                Err(Error::scenario(
                    line,
                    format!(
                        "`{name}` is not normalized; tag it or set allow_unnormalized = true"
                    ),
                ))
            }
        };
        for t in &self.tasks {
            match &t.kind {
                TaskKind::Spectrum {
                    hamiltonian,
                    allow_unnormalized,
                    ..
                } => {
                    path_ref(t.line, hamiltonian)?;
                    normalized(t.line, hamiltonian, *allow_unnormalized)?;
                }
                TaskKind::Monodromy {
                    loop_name, lift, ..
                } => {
                    self.loop_ref(t.line, loop_name)?;
                    self.lift_ref(t.line, lift)?;
                }
                TaskKind::Lemma23 {
                    f,
                    g,
                    lift,
                    contraction,
                    ..
                } => {
                    path_ref(t.line, f)?;
                    path_ref(t.line, g)?;
                    self.lift_ref(t.line, lift)?;
                    if let Some(c) = contraction {
                        self.isotopy_ref(t.line, c)?;
                    }
                }
                TaskKind::Theorem1 {
                    family,
                    allow_unnormalized,
                    ..
                } => {
                    self.isotopy_ref(t.line, family)?;
                    let spec = &self.isotopies[family];
                    if !allow_unnormalized {
                        normalized(t.line, &spec.base, false)?;
                        if spec.offset != 0.0 {
                            return Err(Error::scenario(
                                t.line,
                                format!(
                                    "isotopy `{family}` carries a de-normalizing offset; set allow_unnormalized = true"
                                ),
                            ));
                        }
                    }
                }
                TaskKind::Pde36 { family, .. } => {
                    if !self.families.contains_key(family) {
                        return Err(Error::scenario(
                            t.line,
                            format!("undefined family `{family}`"),
                        ));
                    }
                }
                TaskKind::Homomorphism {
                    loop1,
                    loop2,
                    lift1,
                    lift2,
                    ..
                } => {
                    self.loop_ref(t.line, loop1)?;
                    self.loop_ref(t.line, loop2)?;
                    self.lift_ref(t.line, lift1)?;
                    self.lift_ref(t.line, lift2)?;
                }
                TaskKind::Liouville { .. } => {}
            }
        }
        Ok(())
    }

    fn loop_ref(&self, line: usize, name: &str) -> Result<()> {
        if self.loops.contains_key(name) {
            Ok(())
        } else {
            Err(Error::scenario(line, format!("undefined loop `{name}`")))
        }
    }

    fn lift_ref(&self, line: usize, name: &str) -> Result<()> {
        if self.lifts.contains_key(name) {
            Ok(())
        } else {
            Err(Error::scenario(line, format!("undefined lift `{name}`")))
        }
    }

    fn isotopy_ref(&self, line: usize, name: &str) -> Result<()> {
        if self.isotopies.contains_key(name) {
            Ok(())
        } else {
            Err(Error::scenario(line, format!("undefined isotopy `{name}`")))
        }
    }

    fn build_isotopy(&self, name: &str) -> IsotopyFamily<f64> {
        let spec = &self.isotopies[name];
        let base = self.paths[&spec.base].clone();
        let members = (0..spec.s_count)
            .map(|i| {
                let s = i as f64 / (spec.s_count - 1) as f64;
                let member = match spec.kind.as_str() {
                    "reparam" => reparam(base.clone(), ReparamProfile::new(spec.a * s)),
                    "contraction" => sharp(
                        base.clone(),
                        bar(reparam(base.clone(), ReparamProfile::new(spec.a * s))),
                    )
                    .expect("same manifold"),
                    _ => base.clone(),
                };
                if spec.offset == 0.0 {
                    member
                } else {
                    HamPath::Shifted {
                        base: Box::new(member),
                        shift: PeriodicSpline::new(vec![-spec.offset * s; 4]),
                        tag: NormalizationTag::Unchecked,
                    }
                }
            })
            .collect();
        IsotopyFamily::new(members)
    }

    fn build_loop(&self, name: &str, cfg: &FlowConfig<f64>) -> Result<HamLoop<f64>> {
        let spec = &self.loops[name];
        let mut h = HamLoop::new(self.paths[&spec.generator].clone(), cfg)?;
        if let Some(c) = &spec.contraction {
            h = h.with_contraction(self.build_isotopy(c), cfg)?;
        }
        Ok(h)
    }

    fn build_lift(&self, name: &str) -> Lift<f64> {
        let spec = &self.lifts[name];
        match spec.mode.as_str() {
            "canonical" => Lift::CanonicalFromContraction,
            _ => Lift::BasepointCapping {
                basepoint: Point::new(spec.basepoint.0, spec.basepoint.1),
                cap_area: spec.cap_area,
                sheet: spec.sheet,
            },
        }
    }
}

fn parse_float_list(e: &Entry) -> Result<Vec<f64>> {
    e.value
        .split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<f64>().map_err(|_| {
                Error::scenario(e.line, format!("`{}` has a non-numeric entry: {part}", e.key))
            })
        })
        .collect()
}

fn resolve_path(
    name: &str,
    defs: &BTreeMap<String, DefSpec>,
    manifold: &Manifold<f64>,
    cache: &mut HashMap<String, HamPath<f64>>,
    visiting: &mut Vec<String>,
    ref_line: usize,
) -> Result<HamPath<f64>> {
    if let Some(p) = cache.get(name) {
        return Ok(p.clone());
    }
    if visiting.iter().any(|v| v == name) {
        return Err(Error::scenario(
            ref_line,
            format!(
                "cyclic definition: {} -> {name}",
                visiting.join(" -> ")
            ),
        ));
    }
    let spec = defs.get(name).ok_or_else(|| {
        Error::scenario(ref_line, format!("undefined Hamiltonian `{name}`"))
    })?;
    visiting.push(name.to_string());
    let line = spec.line();
    let path = match spec.clone() {
        DefSpec::Hamiltonian {
            expr,
            normalization,
            ..
        } => {
            let ham = parse::<f64>(&expr, manifold).map_err(|e| wrap_parse_error(line, name, e))?;
            build_leaf(ham, &normalization, manifold, line, name)?
        }
        DefSpec::Sharp { left, right, .. } => sharp(
            resolve_path(&left, defs, manifold, cache, visiting, line)?,
            resolve_path(&right, defs, manifold, cache, visiting, line)?,
        )?,
        DefSpec::Bar { base, .. } => bar(resolve_path(&base, defs, manifold, cache, visiting, line)?),
        DefSpec::Reparam { base, a, .. } => reparam(
            resolve_path(&base, defs, manifold, cache, visiting, line)?,
            ReparamProfile::new(a),
        ),
        DefSpec::Shift { base, offset, .. } => HamPath::Shifted {
            base: Box::new(resolve_path(&base, defs, manifold, cache, visiting, line)?),
            shift: PeriodicSpline::new(vec![-offset; 4]),
            tag: NormalizationTag::Unchecked,
        },
    };
    visiting.pop();
    cache.insert(name.to_string(), path.clone());
    Ok(path)
}

/// Builds a leaf path, verifying a claimed normalization tag numerically
/// (pointwise evaluations only; no flows).
fn build_leaf(
    ham: Hamiltonian<f64>,
    normalization: &str,
    manifold: &Manifold<f64>,
    line: usize,
    name: &str,
) -> Result<HamPath<f64>> {
    let cfg = FlowConfig::<f64>::default();
    match normalization {
        "unchecked" => Ok(HamPath::Leaf(ham)),
        "mean_zero" => {
            let rule = QuadratureRule::new(manifold, 48);
            if !manifold.is_closed() {
                return Err(Error::scenario(
                    line,
                    format!("`{name}`: mean_zero applies to closed manifolds only"),
                ));
            }
            for t in [0.0, 0.37, 0.81] {
                let mean = rule.integrate(|p| ham.eval(p, t))? / manifold.total_area;
                if mean.abs() > 1e-6 {
                    return Err(Error::scenario(
                        line,
                        format!("`{name}` is tagged mean_zero but has mean {mean:e} at t = {t}"),
                    ));
                }
            }
            Ok(HamPath::Leaf(ham.tagged(NormalizationTag::MeanZero)))
        }
        "compact_support" => {
            let rule = QuadratureRule::new(manifold, 48);
            let path = HamPath::Leaf(ham.tagged(NormalizationTag::CompactSupport));
            if !path.check_compact_support(&rule, &cfg)? {
                return Err(Error::scenario(
                    line,
                    format!("`{name}` is tagged compact_support but does not vanish near the window boundary"),
                ));
            }
            Ok(path)
        }
        "normalize" => {
            let rule = QuadratureRule::new(manifold, 48);
            HamPath::Leaf(ham).normalize_mean_zero(&rule, 16, &cfg)
        }
        other => Err(Error::scenario(
            line,
            format!("unknown normalization `{other}` (unchecked|mean_zero|compact_support|normalize)"),
        )),
    }
}

// ---------------------------------------------------------------------------
// execution

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub step: Option<f64>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub lines: Vec<String>,
    pub all_pass: bool,
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    let one_way = |from: &[f64], to: &[f64]| -> f64 {
        from.iter()
            .map(|x| {
                to.iter()
                    .map(|y| (x - y).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    one_way(a, b).max(one_way(b, a))
}

/// Executes every task in declaration order, writing `<task>.report.json`
/// and `<task>.csv` into the output directory.
pub fn run_scenario(scn: &Scenario, overrides: &Overrides) -> Result<RunSummary> {
    let step = overrides.step.or(scn.step).unwrap_or(1.0 / 512.0);
    let cfg = FlowConfig::with_step(step);
    let seed = overrides.seed.unwrap_or(scn.seed);
    let out_dir: PathBuf = overrides
        .out
        .clone()
        .or_else(|| scn.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)?;

    let mut lines = Vec::new();
    let mut all_pass = true;
    for task in &scn.tasks {
        let task_seed = seed ^ fnv64(task.name.as_bytes());
        let (report, csv) = run_task(scn, task, task_seed, &cfg)?;
        write_artifacts(&out_dir, &task.name, &report, &csv)?;
        all_pass &= report.pass;
        lines.push(format!(
            "{}: {} {} residual={:e} tolerance={:e}",
            task.name,
            task.kind.label(),
            if report.pass { "pass" } else { "FAIL" },
            report.residual,
            report.tolerance,
        ));
    }
    Ok(RunSummary { lines, all_pass })
}

fn write_artifacts(
    out_dir: &Path,
    name: &str,
    report: &VerificationReport,
    csv: &str,
) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(out_dir.join(format!("{name}.report.json")), json)?;
    std::fs::write(out_dir.join(format!("{name}.csv")), csv)?;
    Ok(())
}

fn run_task(
    scn: &Scenario,
    task: &TaskSpec,
    task_seed: u64,
    cfg: &FlowConfig<f64>,
) -> Result<(VerificationReport, String)> {
    match &task.kind {
        TaskKind::Spectrum {
            hamiltonian,
            seeds_per_axis,
            orbit_samples,
            expect,
            tolerance,
            ..
        } => {
            let opts = SpectrumOptions {
                seeds_per_axis: *seeds_per_axis,
                orbit_samples: *orbit_samples,
                cfg: *cfg,
            };
            let table = spectrum(&scn.paths[hamiltonian], hamiltonian, &opts)?;
            let actions: Vec<f64> = table.entries.iter().map(|e| e.base_action).collect();
            let residual = match expect {
                Some(want) => hausdorff(&actions, want),
                None => 0.0,
            };
            let report = VerificationReport::new(
                "spectrum",
                &[hamiltonian.clone(), format!("{actions:?}")],
                residual,
                *tolerance,
            );
            Ok((report, table.to_csv()))
        }
        TaskKind::Monodromy {
            loop_name,
            lift,
            n_s,
            n_t,
            basepoints,
            expect,
            tolerance,
        } => {
            let h = scn.build_loop(loop_name, cfg)?;
            let lift = scn.build_lift(lift);
            let opts = MonodromyOptions {
                n_s: *n_s,
                n_t: *n_t,
                basepoints: *basepoints,
                seed: task_seed,
            };
            let value = monodromy_value(&h, &lift, &opts, cfg)?;
            let residual = expect.map(|want| (value - want).abs()).unwrap_or(0.0);
            let report = VerificationReport::new(
                "monodromy_value",
                &[loop_name.clone(), format!("{lift:?}")],
                residual,
                *tolerance,
            );
            let mut csv = String::from("quantity,value\n");
            let _ = writeln!(csv, "value,{value}");
            let _ = writeln!(csv, "coset_generator,{}", scn.manifold.gamma_omega_generator);
            Ok((report, csv))
        }
        TaskKind::Lemma23 {
            f,
            g,
            lift,
            contraction,
            probes,
            amplitude,
            n_s,
            n_t,
            expect,
            tolerance,
        } => {
            let contraction_fam = contraction.as_ref().map(|c| scn.build_isotopy(c));
            // canonical lifts need the radial grid to match the contraction
            let n_s = match &contraction_fam {
                Some(fam) if scn.lifts[lift].mode == "canonical" => fam.s_count() - 1,
                _ => *n_s,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
            let probe_loops: Vec<CappedLoop<f64>> = (0..*probes)
                .map(|_| {
                    let gamma = fourier_probe_loop(&scn.manifold, &mut rng, *amplitude, *n_t)?;
                    CappedLoop::cone(gamma, n_s)
                })
                .collect::<Result<_>>()?;
            let shift = lemma23_shift(
                &scn.paths[f],
                &scn.paths[g],
                &scn.build_lift(lift),
                contraction_fam,
                &probe_loops,
                cfg,
            )?;
            let report = VerificationReport::new(
                "lemma23_shift",
                &[f.clone(), g.clone(), lift.clone()],
                (shift - expect).abs(),
                *tolerance,
            );
            let mut csv = String::from("quantity,value\n");
            let _ = writeln!(csv, "shift,{shift}");
            Ok((report, csv))
        }
        TaskKind::Theorem1 {
            family,
            orbit_point,
            orbit_samples,
            expect_drift,
            tolerance,
            ..
        } => {
            let fam = scn.build_isotopy(family);
            let orbit = PeriodicOrbit::from_fixed_point(
                &fam.members[0],
                Point::new(orbit_point.0, orbit_point.1),
                *orbit_samples,
                cfg,
            )?;
            let cap = canonical_capping(&orbit)?;
            let trace = verify_isotopy_constancy(&fam, &orbit, &cap, cfg)?;
            let residual = match expect_drift {
                Some(want) => (trace.max_drift - want).abs(),
                None => trace.max_drift,
            };
            let report = VerificationReport::new(
                "isotopy_action_constancy",
                &[family.clone(), format!("{orbit_point:?}")],
                residual,
                *tolerance,
            );
            let mut csv = String::from("s,chi\n");
            for (i, chi) in trace.chi.iter().enumerate() {
                let s = i as f64 / (trace.chi.len() - 1) as f64;
                let _ = writeln!(csv, "{s},{chi}");
            }
            Ok((report, csv))
        }
        TaskKind::Pde36 {
            family,
            grid,
            s_count,
            t_count,
            tolerance,
            c_tolerance,
            expect_c,
        } => {
            let dt = 1.0 / (*t_count as f64 - 1.0);
            let per = dt / cfg.step;
            if per < 1.0 - 1e-9 || (per - per.round()).abs() > 1e-9 {
                return Err(Error::scenario(
                    task.line,
                    format!("flow step {} must divide the t-grid spacing {dt}", cfg.step),
                ));
            }
            let fam = parse_family::<f64>(&scn.families[family].0, &scn.manifold)?;
            let seeds = SeedGrid::for_manifold(&scn.manifold, *grid, *grid);
            let sweep = FamilySweep::build(fam, seeds, *s_count, *t_count, cfg)?;
            let out = pde36_residual(&sweep)?;
            let c_defect = (out.max_abs_c - expect_c).abs();
            let pass = out.max_residual < *tolerance && c_defect < *c_tolerance;
            let report = VerificationReport {
                check: "pde_residual".into(),
                inputs_digest: crate::monodromy::fnv_digest(&[
                    family.clone(),
                    format!("{grid}x{s_count}x{t_count}"),
                ]),
                residual: out.max_residual,
                tolerance: *tolerance,
                pass,
            };
            let mut csv = String::from("quantity,value\n");
            let _ = writeln!(csv, "max_residual,{}", out.max_residual);
            let _ = writeln!(csv, "max_abs_c,{}", out.max_abs_c);
            let _ = writeln!(csv, "k_endpoint_max,{}", out.k_endpoint_max);
            Ok((report, csv))
        }
        TaskKind::Homomorphism {
            loop1,
            loop2,
            lift1,
            lift2,
            n_s,
            n_t,
            basepoints,
        } => {
            let h1 = scn.build_loop(loop1, cfg)?;
            let h2 = scn.build_loop(loop2, cfg)?;
            let opts = MonodromyOptions {
                n_s: *n_s,
                n_t: *n_t,
                basepoints: *basepoints,
                seed: task_seed,
            };
            let report = verify_homomorphism(
                &h1,
                &h2,
                &scn.build_lift(lift1),
                &scn.build_lift(lift2),
                &opts,
                cfg,
            )?;
            let mut csv = String::from("quantity,value\n");
            let _ = writeln!(csv, "residual,{}", report.residual);
            Ok((report, csv))
        }
        TaskKind::Liouville { pairs, quadrature } => {
            liouville_task(&scn.manifold, *pairs, *quadrature, task_seed)
        }
    }
}

// ---------------------------------------------------------------------------
// Liouville task: random bracket pairs

fn join_terms(terms: Vec<String>) -> String {
    terms.join(" + ")
}

fn random_expr(m: &Manifold<f64>, rng: &mut ChaCha8Rng) -> String {
    use crate::geom::ManifoldKind;
    let coeff = |rng: &mut ChaCha8Rng| -> f64 {
        let c: f64 = rng.gen_range(0.05..0.5);
        if rng.gen_bool(0.5) {
            -c
        } else {
            c
        }
    };
    match m.kind {
        ManifoldKind::Torus2 => {
            let terms = (0..3)
                .map(|_| {
                    let k = rng.gen_range(1..=2u32);
                    let l = rng.gen_range(1..=2u32);
                    let t1 = if rng.gen_bool(0.5) { "sin" } else { "cos" };
                    let t2 = if rng.gen_bool(0.5) { "sin" } else { "cos" };
                    format!(
                        "({})*{t1}(2*pi*{k}*x)*{t2}(2*pi*{l}*y)",
                        coeff(rng)
                    )
                })
                .collect();
            join_terms(terms)
        }
        ManifoldKind::Sphere2 => {
            // every term has zero mean, and the theta-harmonic terms carry a
            // (1 - z^2) factor so they are regular at the poles (otherwise
            // the bracket integral picks up pole boundary terms)
            let mut terms: Vec<String> = (0..2)
                .map(|_| {
                    let p = rng.gen_range(0..=2u32);
                    let trig = if rng.gen_bool(0.5) { "sin" } else { "cos" };
                    format!("({})*(1 - z^2)*z^{p}*{trig}(theta)", coeff(rng))
                })
                .collect();
            let p = if rng.gen_bool(0.5) { 1 } else { 3 };
            terms.push(format!("({})*z^{p}", coeff(rng)));
            join_terms(terms)
        }
        ManifoldKind::PlaneR2 => {
            // gentle transition region: the bracket differentiates two bumps,
            // so steep shoulders would defeat the grid quadrature
            let cx: f64 = rng.gen_range(-1.0..1.0);
            let cy: f64 = rng.gen_range(-1.0..1.0);
            let lo: f64 = rng.gen_range(0.3..0.6);
            let hi: f64 = rng.gen_range(3.0..5.0);
            format!(
                "({})*bump2((x - ({cx}))^2 + (y - ({cy}))^2; {lo}, {hi})",
                coeff(rng)
            )
        }
    }
}

/// Random Poisson-bracket pairs: on closed manifolds the first operand is
/// mean-zero and the bracket integral must vanish; on the plane the bracket
/// must additionally stay compactly supported inside the window.
pub fn liouville_task(
    m: &Manifold<f64>,
    pairs: usize,
    quadrature: usize,
    seed: u64,
) -> Result<(VerificationReport, String)> {
    let rule = QuadratureRule::new(m, quadrature);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("pair,residual\n");
    let mut worst = 0.0f64;
    let mut contained = true;
    let mut digest_parts = Vec::new();
    for i in 0..pairs {
        let fe = random_expr(m, &mut rng);
        let ge = random_expr(m, &mut rng);
        let f = parse::<f64>(&fe, m)?;
        let g = parse::<f64>(&ge, m)?;
        let br = poisson(&f, &g)?;
        let integral = rule.integrate(|p| br.eval(p, 0.0))?.abs();
        if m.is_closed() {
            // the generator only emits mean-zero terms; hold it to that
            let f_mean = rule.integrate(|p| f.eval(p, 0.0))?.abs() / m.total_area;
            if f_mean > 1e-8 {
                contained = false;
            }
        } else if !rule.vanishes_on_boundary_ring(|p| br.eval(p, 0.0)) {
            contained = false;
        }
        worst = worst.max(integral);
        let _ = writeln!(csv, "{i},{integral}");
        digest_parts.push(fe);
        digest_parts.push(ge);
    }
    let area = if m.is_closed() {
        m.total_area
    } else {
        let w = m.window.expect("plane manifold carries a window");
        w.side() * w.side()
    };
    let tolerance = 1e-6 * area;
    let mut report = VerificationReport::new("liouville_bracket", &digest_parts, worst, tolerance);
    report.pass &= contained;
    Ok((report, csv))
}
