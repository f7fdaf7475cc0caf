use crate::output::{self, f, Header, Table};
use crate::{Cli, Command, DistortOp, Format, Global, NetOp};
use clap::Args;
use sepnet::density::{self, Density, NestedFamilies, Offsets, Schedule};
use sepnet::distortion::{self, HeuristicOpts, Objective};
use sepnet::geomlab::{self, SampledHomeo, Slab, VolumeMode, VolumeStatus};
use sepnet::moduli::{self, Modulus};
use sepnet::netgen::{self, NetCube, PointCloud};
use sepnet::params::{self, RSearch};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; exit 2.
    Config(String),
    /// An invariant check failed; exit 1.
    Assertion(String),
    /// Anything else that stopped the run; exit 1.
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Assertion(_) | CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(s) => write!(fm, "configuration error: {s}"),
            CliError::Assertion(s) => write!(fm, "check failed: {s}"),
            CliError::Runtime(s) => write!(fm, "{s}"),
        }
    }
}

fn cfg<E: fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn io<E: fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn density_err(e: density::DensityError) -> CliError {
    match e {
        density::DensityError::Margin { .. } => CliError::Assertion(e.to_string()),
        other => cfg(other),
    }
}

fn geom_err(e: geomlab::GeomError) -> CliError {
    match e {
        geomlab::GeomError::Inconsistent { .. } | geomlab::GeomError::Reliability { .. } => {
            CliError::Assertion(e.to_string())
        }
        other => cfg(other),
    }
}

// ---------------------------------------------------------------------------
// Context and config resolution

struct Ctx {
    seed: u64,
    out: PathBuf,
    format: Format,
    config: Map<String, Value>,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => {
            if !o.is_null() {
                *b = o;
            }
        }
    }
}

/// Defaults, then the config section `name`, then explicit flags.
fn resolve<R: Serialize + DeserializeOwned + Default, A: Serialize>(
    ctx: &Ctx,
    name: &str,
    args: &A,
) -> Result<(R, Value), CliError> {
    let mut v = serde_json::to_value(R::default()).map_err(io)?;
    if let Some(section) = ctx.config.get(name) {
        if !section.is_object() {
            return Err(CliError::Config(format!(
                "config section `{name}` must be an object"
            )));
        }
        merge(&mut v, section.clone());
    }
    merge(&mut v, serde_json::to_value(args).map_err(io)?);
    let r: R = serde_json::from_value(v).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
    let resolved = serde_json::to_value(&r).map_err(io)?;
    Ok((r, resolved))
}

struct Emit<'a> {
    ctx: &'a Ctx,
    name: String,
    header: Header,
    config: Value,
}

impl<'a> Emit<'a> {
    fn new(ctx: &'a Ctx, name: &str, config: Value) -> Self {
        let full = json!({ "command": name, "seed": ctx.seed, "config": config });
        Emit {
            ctx,
            name: name.to_string(),
            header: Header::new(name, &full, ctx.seed),
            config,
        }
    }

    fn path(&self, ext: &str) -> PathBuf {
        self.ctx
            .out
            .join(format!("{}.{ext}", self.name.replace(' ', "-")))
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        output::write_atomic(path, bytes)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// JSON summary always; the table as CSV or inside the JSON.
    fn finish(&self, result: Value, table: Option<&Table>) -> Result<(), CliError> {
        let mut doc = json!({
            "header": self.header,
            "config": self.config,
            "result": result,
        });
        if let Some(t) = table {
            if self.ctx.format == Format::Json {
                doc["table"] = t.json();
            } else {
                self.write(
                    &self.path("csv"),
                    t.csv(&self.header.comment_lines()).as_bytes(),
                )?;
            }
        }
        let text = serde_json::to_string_pretty(&doc).map_err(io)? + "\n";
        self.write(&self.path("json"), text.as_bytes())
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let Global {
        seed,
        threads,
        out,
        format,
        config,
    } = cli.global;
    let config = match config {
        Some(p) => {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            match serde_json::from_str::<Value>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            {
                Value::Object(m) => m,
                _ => return Err(CliError::Config("config must be a JSON object".into())),
            }
        }
        None => Map::new(),
    };
    let pick = |k: &str| config.get(k).cloned();
    let seed = match seed {
        Some(s) => s,
        None => pick("seed")
            .map(serde_json::from_value)
            .transpose()
            .map_err(cfg)?
            .unwrap_or(0),
    };
    let threads: Option<usize> = match threads {
        Some(t) => Some(t),
        None => pick("threads")
            .map(serde_json::from_value)
            .transpose()
            .map_err(cfg)?,
    };
    let out: PathBuf = match out {
        Some(o) => o,
        None => pick("out")
            .map(serde_json::from_value)
            .transpose()
            .map_err(cfg)?
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let format: Format = match format {
        Some(fm) => fm,
        None => match pick("format").as_ref().and_then(|v| v.as_str()) {
            Some("csv") | None => Format::Csv,
            Some("json") => Format::Json,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "format `{other}` is not csv or json"
                )))
            }
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(io)?;
    }
    let ctx = Ctx {
        seed,
        out,
        format,
        config,
    };
    match cli.command {
        Command::ModuliCheck(a) => moduli_check(&ctx, &a),
        Command::Params(a) => params_cmd(&ctx, &a),
        Command::Families(a) => families(&ctx, &a, false),
        Command::Chessboard(a) => families(&ctx, &a, true),
        Command::Net { op } => match op {
            NetOp::Build(a) => net_build(&ctx, &a),
            NetOp::Audit(a) => net_audit(&ctx, &a),
            NetOp::Discrepancy(a) => net_discrepancy(&ctx, &a),
        },
        Command::Distort { op } => match op {
            DistortOp::Exact(a) => distort(&ctx, &a, true),
            DistortOp::Heuristic(a) => distort(&ctx, &a, false),
            DistortOp::Profile(a) => profile(&ctx, &a),
        },
        Command::FeigeLs(a) => feige_ls(&ctx, &a),
        Command::FeigeCn(a) => feige_cn(&ctx, &a),
        Command::Dichotomy(a) => dichotomy(&ctx, &a),
        Command::B1Trace(a) => b1(&ctx, &a),
        Command::VolumeCheck(a) => volume(&ctx, &a),
        Command::Symdiff(a) => symdiff(&ctx, &a),
        Command::BoundaryMeasure(a) => boundary(&ctx, &a),
    }
}

// ---------------------------------------------------------------------------
// Parsing helpers

fn modulus(spec: &str) -> Result<Modulus, CliError> {
    spec.parse::<Modulus>()
        .map_err(|e| CliError::Config(format!("modulus `{spec}`: {e}")))
}

fn check_eps(eps: f64) -> Result<(), CliError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "ε = {eps} must satisfy ε ∈ (0,1)"
        )))
    }
}

/// `lo:hi` for every axis, or one `lo:hi` per axis separated by commas.
fn window(spec: &str, d: usize) -> Result<Vec<(f64, f64)>, CliError> {
    let parts: Vec<&str> = spec.split(',').collect();
    let axes: Result<Vec<(f64, f64)>, CliError> = parts
        .iter()
        .map(|p| {
            let (a, b) = p
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("window axis `{p}` is not lo:hi")))?;
            let lo: f64 = a.trim().parse().map_err(cfg)?;
            let hi: f64 = b.trim().parse().map_err(cfg)?;
            if !(lo < hi) {
                return Err(CliError::Config(format!("window axis `{p}` needs lo < hi")));
            }
            Ok((lo, hi))
        })
        .collect();
    let axes = axes?;
    match axes.len() {
        1 => Ok(vec![axes[0]; d]),
        n if n == d => Ok(axes),
        n => Err(CliError::Config(format!("window has {n} axes for d = {d}"))),
    }
}

fn int_window(spec: &str, d: usize) -> Result<Vec<(i64, i64)>, CliError> {
    window(spec, d)?
        .into_iter()
        .map(|(a, b)| {
            if a.fract() != 0.0 || b.fract() != 0.0 {
                Err(CliError::Config(
                    "lattice window bounds must be integers".into(),
                ))
            } else {
                Ok((a as i64, b as i64))
            }
        })
        .collect()
}

/// `x,y;x,y;…`
fn points(spec: &str) -> Result<Vec<Vec<f64>>, CliError> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|p| {
            p.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(cfg))
                .collect()
        })
        .collect()
}

/// `identity[:d]`, inline JSON, or `@path` to a JSON file.
fn map_spec(spec: &str) -> Result<SampledHomeo, CliError> {
    let s = spec.trim();
    if let Some(rest) = s.strip_prefix("identity") {
        let d = match rest.strip_prefix(':') {
            Some(v) => v.parse().map_err(cfg)?,
            None if rest.is_empty() => 2,
            None => return Err(CliError::Config(format!("map `{s}`"))),
        };
        return Ok(SampledHomeo::identity(vec![(0.0, 1.0); d]));
    }
    let text = match s.strip_prefix('@') {
        Some(path) => {
            std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{path}: {e}")))?
        }
        None => s.to_string(),
    };
    let h: SampledHomeo =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("map: {e}")))?;
    SampledHomeo::new(h.d, h.domain, h.kind).map_err(cfg)
}

fn read_cloud(path: &Path) -> Result<PointCloud, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(netgen::NETF_MAGIC) {
        netgen::from_netf(&bytes).map_err(cfg)
    } else {
        netgen::from_csv(&String::from_utf8_lossy(&bytes)).map_err(cfg)
    }
}

// ---------------------------------------------------------------------------
// moduli-check

#[derive(Args, Debug, Serialize)]
pub struct ModuliCheckArgs {
    /// identity | holder:A | logpow:A | scaled:L:<inner>, optionally @a
    #[arg(long)]
    modulus: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    decades: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModuliCheckCfg {
    modulus: String,
    n: usize,
    decades: f64,
    tol: f64,
}

impl Default for ModuliCheckCfg {
    fn default() -> Self {
        ModuliCheckCfg {
            modulus: "logpow:0.5".into(),
            n: 64,
            decades: 12.0,
            tol: 1e-12,
        }
    }
}

fn moduli_check(ctx: &Ctx, a: &ModuliCheckArgs) -> Result<(), CliError> {
    let (c, v): (ModuliCheckCfg, _) = resolve(ctx, "moduli-check", a)?;
    let m = modulus(&c.modulus)?;
    let r = moduli::check_class_m(&m, c.n, c.decades, c.tol);
    let e = Emit::new(ctx, "moduli-check", v);
    let mut t = Table::new(["property", "s", "t", "margin"]);
    for vi in &r.violations {
        t.push(vec![
            format!("{:?}", vi.property),
            f(vi.s),
            f(vi.t),
            f(vi.margin),
        ]);
    }
    e.finish(serde_json::to_value(&r).map_err(io)?, Some(&t))?;
    println!(
        "{}: {} checks, {} violations",
        r.modulus,
        r.checks,
        r.violations.len()
    );
    if r.passed() {
        Ok(())
    } else {
        Err(CliError::Assertion(format!(
            "{} class-M violations",
            r.violations.len()
        )))
    }
}

// ---------------------------------------------------------------------------
// params

#[derive(Args, Debug, Serialize)]
pub struct ParamsArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    modulus: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// Levels to tabulate.
    #[arg(long, alias = "levels")]
    max_levels: Option<usize>,
    /// Skip the iteration count search.
    #[arg(long)]
    no_r: Option<bool>,
    /// Also compute κ with factor L√k and constant π.
    #[arg(long)]
    kappa: Option<bool>,
    #[arg(long)]
    l: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    pi: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsCfg {
    d: usize,
    modulus: String,
    eps: f64,
    c: f64,
    max_levels: usize,
    no_r: bool,
    kappa: bool,
    l: f64,
    k: usize,
    pi: f64,
}

impl Default for ParamsCfg {
    fn default() -> Self {
        ParamsCfg {
            d: 2,
            modulus: "identity".into(),
            eps: 0.1,
            c: 0.1,
            max_levels: 30,
            no_r: false,
            kappa: false,
            l: 1.0,
            k: 1,
            pi: 1.0,
        }
    }
}

fn params_cmd(ctx: &Ctx, a: &ParamsArgs) -> Result<(), CliError> {
    let (c, v): (ParamsCfg, _) = resolve(ctx, "params", a)?;
    check_eps(c.eps)?;
    let m = modulus(&c.modulus)?;
    let trace = params::param_sequence(c.d, &m, c.eps, c.c, c.max_levels).map_err(cfg)?;
    let mut t = Table::new(["i", "log_c_i", "N_i", "M_i", "log_ell_i", "upsilon_i"]);
    let count = |x: &params::Count| x.exact.map_or(format!("exp({})", x.ln), |v| v.to_string());
    for l in &trace.levels {
        let ups = params::upsilon_ln(c.d, &m, c.pi, c.eps, l.ln_ell)
            .map_or(String::new(), |u| f(u.exp()));
        t.push(vec![
            l.i.to_string(),
            f(l.ln_c),
            count(&l.n),
            count(&l.m),
            f(l.ln_ell),
            ups,
        ]);
    }
    let r = if c.no_r {
        Value::Null
    } else {
        match params::compute_r(c.d, &m, c.eps, c.c, &RSearch::default()) {
            Ok(cert) => serde_json::to_value(cert).map_err(io)?,
            Err(e) => json!({ "error": e.to_string() }),
        }
    };
    let kappa = if c.kappa {
        let k =
            params::kappa(c.d, &m, c.l, c.k, c.eps, c.c, c.pi, &RSearch::default()).map_err(cfg)?;
        serde_json::to_value(k).map_err(io)?
    } else {
        Value::Null
    };
    let theta = if c.d >= 2 {
        serde_json::to_value(params::theta(c.d, &m, c.eps).map_err(cfg)?).map_err(io)?
    } else {
        Value::Null
    };
    let summary = json!({
        "modulus": m.name(),
        "phi": trace.ln_phi.exp(),
        "ln_phi": trace.ln_phi,
        "theta": theta,
        "clamped": trace.clamped,
        "ln_beta": params::quadratic_beta_ln(&trace),
        "envelope": params::superquadratic_envelope(&trace),
        "r": r,
        "kappa": kappa,
    });
    Emit::new(ctx, "params", v).finish(summary, Some(&t))
}

// ---------------------------------------------------------------------------
// families / chessboard

#[derive(Args, Debug, Serialize)]
pub struct FamiliesArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    modulus: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    /// Custom schedule N_1,N_2,… (with --m) instead of the derived one.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<u64>>,
    /// zero | seeded
    #[arg(long)]
    offsets: Option<String>,
    #[arg(long)]
    tuple_cap: Option<usize>,
    #[arg(long)]
    xi: Option<f64>,
    /// Smoothing width relative to the deepest side length.
    #[arg(long)]
    delta_rel: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamiliesCfg {
    d: usize,
    modulus: String,
    eps: f64,
    c: f64,
    levels: usize,
    n: Option<Vec<u64>>,
    m: Option<Vec<u64>>,
    offsets: String,
    tuple_cap: usize,
    xi: f64,
    delta_rel: f64,
}

impl Default for FamiliesCfg {
    fn default() -> Self {
        FamiliesCfg {
            d: 2,
            modulus: "identity".into(),
            eps: 0.1,
            c: 0.1,
            levels: 3,
            n: None,
            m: None,
            offsets: "zero".into(),
            tuple_cap: 10_000,
            xi: 0.1,
            delta_rel: 0.01,
        }
    }
}

fn offsets(spec: &str, seed: u64) -> Result<Offsets, CliError> {
    match spec {
        "zero" => Ok(Offsets::Zero),
        "seeded" => Ok(Offsets::Seeded(seed)),
        o => Err(CliError::Config(format!(
            "offsets `{o}` is not zero or seeded"
        ))),
    }
}

fn build_families(c: &FamiliesCfg, seed: u64) -> Result<NestedFamilies, CliError> {
    check_eps(c.eps)?;
    let rule = offsets(&c.offsets, seed)?;
    let origin = vec![0.0; c.d];
    match (&c.n, &c.m) {
        (Some(n), Some(m)) => {
            let s = Schedule::custom(c.c, n, m).map_err(cfg)?;
            density::build_from_schedule(c.d, &s, c.levels, rule, &origin).map_err(density_err)
        }
        (None, None) => {
            let m = modulus(&c.modulus)?;
            density::build_nested_families(
                c.d,
                &m,
                c.eps,
                c.c,
                c.levels,
                rule,
                &origin,
                &RSearch::default(),
            )
            .map_err(density_err)
        }
        _ => Err(CliError::Config(
            "give both n and m for a custom schedule".into(),
        )),
    }
}

fn family_svg(nf: &NestedFamilies, cap: usize, comments: &[String]) -> Option<String> {
    use num_traits::ToPrimitive;
    if nf.d != 2 {
        return None;
    }
    let mut rects = Vec::new();
    for fam in &nf.families {
        for row in &fam.rows {
            if rects.len() >= cap {
                break;
            }
            let x = fam.origin[0] + row.start[0].to_f64()? * fam.lambda;
            let y = fam.origin[1] + row.start[1].to_f64()? * fam.lambda;
            rects.push((x, y, row.len.to_f64()? * fam.lambda, fam.lambda, fam.level));
        }
    }
    Some(output::svg_rects(&rects, comments))
}

fn families(ctx: &Ctx, a: &FamiliesArgs, board: bool) -> Result<(), CliError> {
    let name = if board { "chessboard" } else { "families" };
    let (c, v): (FamiliesCfg, _) = resolve(ctx, name, a)?;
    let nf = build_families(&c, ctx.seed)?;
    for w in &nf.warnings {
        eprintln!("warning: {w}");
    }
    let e = Emit::new(ctx, name, v);
    if !board {
        let rep = density::nesting_measure_report(&nf).map_err(density_err)?;
        let mut t = Table::new(["level", "max_ratio", "bound", "within_bound"]);
        for l in &rep.levels {
            t.push(vec![
                l.level.to_string(),
                l.max_ratio.clone(),
                l.bound.clone().unwrap_or_default(),
                l.within_bound.to_string(),
            ]);
        }
        if let Some(svg) = family_svg(&nf, 20_000, &e.header.comment_lines()) {
            e.write(&e.path("svg"), svg.as_bytes())?;
        }
        e.finish(
            json!({ "families": nf.json(c.tuple_cap), "nesting": rep }),
            Some(&t),
        )?;
        println!("nested: {}", rep.nested);
        return if rep.passed() {
            Ok(())
        } else {
            Err(CliError::Assertion(
                "nesting or overlap bound failed".into(),
            ))
        };
    }
    let deepest = nf.families.last().map(|fam| fam.lambda).unwrap_or(0.0);
    let res = density::chessboard_psi(&nf, c.xi, c.delta_rel * deepest);
    let (rep, err) = match res {
        Ok((_, rep)) => (rep, None),
        Err(density::DensityError::Margin { .. }) => {
            let b = density::Chessboard::from_families(
                &nf,
                c.xi,
                c.delta_rel * deepest,
                density::CUBE_BUDGET,
            )
            .map_err(density_err)?;
            (
                density::board_report(&b),
                Some("property (2) margin below ξ"),
            )
        }
        Err(other) => return Err(density_err(other)),
    };
    let mut t = Table::new(["level", "pairs", "min_normalized_diff", "holds"]);
    for l in &rep.levels {
        t.push(vec![
            l.level.to_string(),
            l.pairs.to_string(),
            f(l.min_normalized_diff),
            l.holds.to_string(),
        ]);
    }
    e.finish(serde_json::to_value(&rep).map_err(io)?, Some(&t))?;
    println!(
        "property1: {}, min normalized difference {}",
        rep.property1, rep.min_normalized_diff
    );
    match (rep.property1, err) {
        (true, None) => Ok(()),
        (false, _) => Err(CliError::Assertion("property (1) failed".into())),
        (_, Some(msg)) => Err(CliError::Assertion(msg.into())),
    }
}

// ---------------------------------------------------------------------------
// net

#[derive(Args, Debug, Serialize)]
pub struct DensityArgs {
    /// Constant part of ρ.
    #[arg(long)]
    base: Option<f64>,
    /// Chessboard schedule on the unit cube: N_1,N_2,…
    #[arg(long, value_delimiter = ',')]
    board_n: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    board_m: Option<Vec<u64>>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    delta_rel: Option<f64>,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct DensityCfg {
    base: f64,
    board_n: Option<Vec<u64>>,
    board_m: Option<Vec<u64>>,
    xi: f64,
    delta_rel: f64,
}

impl Default for DensityCfg {
    fn default() -> Self {
        DensityCfg {
            base: 1.0,
            board_n: None,
            board_m: None,
            xi: 0.1,
            delta_rel: 0.01,
        }
    }
}

fn density_of(c: &DensityCfg, d: usize) -> Result<Density, CliError> {
    match (&c.board_n, &c.board_m) {
        (None, None) => Density::constant(c.base).map_err(cfg),
        (Some(n), Some(m)) => {
            let s = Schedule::custom(1.0, n, m).map_err(cfg)?;
            let nf = density::build_from_schedule(d, &s, n.len(), Offsets::Zero, &vec![0.0; d])
                .map_err(density_err)?;
            let deepest = nf.families.last().map(|fam| fam.lambda).unwrap_or(0.0);
            let b = density::Chessboard::from_families(
                &nf,
                c.xi,
                c.delta_rel * deepest,
                density::CUBE_BUDGET,
            )
            .map_err(density_err)?;
            Density::with_board(c.base, b).map_err(cfg)
        }
        _ => Err(CliError::Config("give both board_n and board_m".into())),
    }
}

#[derive(Args, Debug, Serialize)]
pub struct NetBuildArgs {
    #[arg(long)]
    d: Option<usize>,
    /// lo:hi (all axes) or lo:hi,lo:hi,…
    #[arg(long)]
    window: Option<String>,
    /// Construction cubes `x,y,…:side`, separated by `;`; default is the window itself.
    #[arg(long)]
    cubes: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    /// Also write the binary NETF file.
    #[arg(long)]
    netf: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    density: DensityArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetBuildCfg {
    d: usize,
    window: String,
    cubes: Option<String>,
    m: usize,
    netf: bool,
    #[serde(flatten)]
    density: DensityCfg,
}

impl Default for NetBuildCfg {
    fn default() -> Self {
        NetBuildCfg {
            d: 2,
            window: "0:10".into(),
            cubes: None,
            m: 2,
            netf: false,
            density: DensityCfg::default(),
        }
    }
}

fn cubes(spec: &Option<String>, w: &[(f64, f64)], m: usize) -> Result<Vec<NetCube>, CliError> {
    match spec {
        None => {
            let side = w[0].1 - w[0].0;
            if w.iter().any(|&(a, b)| (b - a - side).abs() > 1e-12 * side) {
                return Err(CliError::Config(
                    "window is not a cube; give cubes explicitly".into(),
                ));
            }
            Ok(vec![NetCube {
                corner: w.iter().map(|p| p.0).collect(),
                side,
                m,
            }])
        }
        Some(s) => s
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                let (corner, side) = p
                    .split_once(':')
                    .ok_or_else(|| CliError::Config(format!("cube `{p}` is not corner:side")))?;
                let corner: Result<Vec<f64>, _> =
                    corner.split(',').map(|v| v.trim().parse::<f64>()).collect();
                Ok(NetCube {
                    corner: corner.map_err(cfg)?,
                    side: side.trim().parse().map_err(cfg)?,
                    m,
                })
            })
            .collect(),
    }
}

fn net_build(ctx: &Ctx, a: &NetBuildArgs) -> Result<(), CliError> {
    let (c, v): (NetBuildCfg, _) = resolve(ctx, "net-build", a)?;
    let w = window(&c.window, c.d)?;
    let rho = density_of(&c.density, c.d)?;
    let cs = cubes(&c.cubes, &w, c.m)?;
    let cloud = netgen::construct_net_window(&rho, &cs, &w).map_err(cfg)?;
    let e = Emit::new(ctx, "net-build", v);
    let comments = e.header.comment_lines();
    if ctx.format == Format::Csv {
        e.write(&e.path("csv"), netgen::to_csv(&cloud, &comments).as_bytes())?;
    }
    if c.netf {
        e.write(&e.path("netf"), &netgen::to_netf(&cloud))?;
    }
    if c.d == 2 {
        e.write(
            &e.path("svg"),
            output::svg_points(&cloud.points, &cloud.window, &comments).as_bytes(),
        )?;
    }
    let mut result = json!({ "points": cloud.len(), "window": cloud.window });
    if ctx.format == Format::Json {
        result["cloud"] = serde_json::to_value(&cloud).map_err(io)?;
    }
    println!("{} points", cloud.len());
    e.finish(result, None)
}

#[derive(Args, Debug, Serialize)]
pub struct NetAuditArgs {
    /// CSV or NETF point file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Audit window; default is the file's window.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    res: Option<usize>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct NetAuditCfg {
    input: Option<PathBuf>,
    window: Option<String>,
    res: Option<usize>,
}

fn net_audit(ctx: &Ctx, a: &NetAuditArgs) -> Result<(), CliError> {
    let (c, v): (NetAuditCfg, _) = resolve(ctx, "net-audit", a)?;
    let input = c
        .input
        .ok_or_else(|| CliError::Config("net audit needs --input".into()))?;
    let cloud = read_cloud(&input)?;
    let w = match &c.window {
        Some(s) => window(s, cloud.dim())?,
        None => cloud.window.clone(),
    };
    let rep = netgen::audit_net(&cloud, &w, c.res.unwrap_or(512)).map_err(cfg)?;
    println!(
        "s = {}, b in [{}, {}]",
        rep.s,
        rep.b_grid,
        rep.b_grid + rep.slack
    );
    Emit::new(ctx, "net-audit", v).finish(serde_json::to_value(&rep).map_err(io)?, None)
}

#[derive(Args, Debug, Serialize)]
pub struct NetDiscrepancyArgs {
    #[arg(long)]
    d: Option<usize>,
    /// The construction cube `x,y,…:side`.
    #[arg(long)]
    cube: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    /// Points to test; default is the construction's own net.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    density: DensityArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetDiscrepancyCfg {
    d: usize,
    cube: String,
    m: usize,
    input: Option<PathBuf>,
    #[serde(flatten)]
    density: DensityCfg,
}

impl Default for NetDiscrepancyCfg {
    fn default() -> Self {
        NetDiscrepancyCfg {
            d: 2,
            cube: "0,0:10".into(),
            m: 2,
            input: None,
            density: DensityCfg::default(),
        }
    }
}

fn net_discrepancy(ctx: &Ctx, a: &NetDiscrepancyArgs) -> Result<(), CliError> {
    let (c, v): (NetDiscrepancyCfg, _) = resolve(ctx, "net-discrepancy", a)?;
    let rho = density_of(&c.density, c.d)?;
    let cube = cubes(&Some(c.cube.clone()), &[], c.m)?.remove(0);
    if cube.corner.len() != c.d {
        return Err(CliError::Config(
            "cube corner dimension differs from d".into(),
        ));
    }
    let cloud = match &c.input {
        Some(p) => read_cloud(p)?,
        None => netgen::construct_net_cube(&rho, &cube).map_err(cfg)?.cloud,
    };
    let rep = netgen::discrepancy_report(&cloud, &rho, &cube).map_err(cfg)?;
    let mut t = Table::new(["cell", "count", "integral", "discrepancy"]);
    for cell in &rep.cells {
        let idx: Vec<String> = cell.index.iter().map(|i| i.to_string()).collect();
        t.push(vec![
            idx.join(" "),
            cell.count.to_string(),
            f(cell.integral),
            f(cell.discrepancy),
        ]);
    }
    Emit::new(ctx, "net-discrepancy", v)
        .finish(serde_json::to_value(&rep).map_err(io)?, Some(&t))?;
    println!("max |discrepancy| {} (bound {})", rep.max_abs, rep.bound);
    if rep.upper_holds && rep.lower_holds {
        Ok(())
    } else {
        Err(CliError::Assertion(
            "discrepancy outside [-bound, 0]".into(),
        ))
    }
}

// ---------------------------------------------------------------------------
// distort

#[derive(Args, Debug, Serialize)]
pub struct DistortArgs {
    /// Source points (CSV or NETF).
    #[arg(long)]
    x: Option<PathBuf>,
    /// Target points (CSV or NETF).
    #[arg(long)]
    y: Option<PathBuf>,
    /// bilip | lip
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    node_limit: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistortCfg {
    x: Option<PathBuf>,
    y: Option<PathBuf>,
    objective: String,
    node_limit: u64,
    restarts: usize,
}

impl Default for DistortCfg {
    fn default() -> Self {
        DistortCfg {
            x: None,
            y: None,
            objective: "bilip".into(),
            node_limit: 100_000_000,
            restarts: 8,
        }
    }
}

fn objective(s: &str) -> Result<Objective, CliError> {
    match s {
        "bilip" => Ok(Objective::BiLip),
        "lip" => Ok(Objective::Lip),
        o => Err(CliError::Config(format!(
            "objective `{o}` is not bilip or lip"
        ))),
    }
}

fn distort(ctx: &Ctx, a: &DistortArgs, exact: bool) -> Result<(), CliError> {
    let name = if exact {
        "distort-exact"
    } else {
        "distort-heuristic"
    };
    let (c, v): (DistortCfg, _) = resolve(ctx, name, a)?;
    let xp =
        c.x.as_ref()
            .ok_or_else(|| CliError::Config("--x is required".into()))?;
    let yp =
        c.y.as_ref()
            .ok_or_else(|| CliError::Config("--y is required".into()))?;
    let x = read_cloud(xp)?.points;
    let y = read_cloud(yp)?.points;
    let obj = objective(&c.objective)?;
    if exact && x.len() > distortion::EXACT_THRESHOLD {
        return Err(CliError::Config(format!(
            "exact search is limited to {} points; use heuristic",
            distortion::EXACT_THRESHOLD
        )));
    }
    let rep = if exact {
        distortion::min_distortion_exact(&x, &y, obj, c.node_limit)
    } else {
        let opts = HeuristicOpts {
            seed: ctx.seed,
            restarts: c.restarts,
            ..HeuristicOpts::default()
        };
        distortion::min_distortion_heuristic(&x, &y, obj, &opts)
    }
    .map_err(cfg)?;
    let mut t = Table::new(["source", "target"]);
    for (i, p) in rep.perm.iter().enumerate() {
        t.push(vec![i.to_string(), p.to_string()]);
    }
    Emit::new(ctx, name, v).finish(serde_json::to_value(&rep).map_err(io)?, Some(&t))?;
    println!(
        "{:?} {:?} = {} (lower bound {})",
        rep.method, rep.objective, rep.value, rep.lower_bound
    );
    if rep.lower_bound <= rep.upper_bound * (1.0 + distortion::TOL) {
        Ok(())
    } else {
        Err(CliError::Assertion(
            "lower bound exceeds upper bound".into(),
        ))
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ProfileArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long)]
    modulus: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    density: DensityArgs,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileCfg {
    d: usize,
    scales: Vec<f64>,
    modulus: String,
    m: usize,
    restarts: usize,
    #[serde(flatten)]
    density: DensityCfg,
}

impl Default for ProfileCfg {
    fn default() -> Self {
        ProfileCfg {
            d: 2,
            scales: vec![2.0, 4.0, 6.0],
            modulus: "identity".into(),
            m: 2,
            restarts: 4,
            density: DensityCfg::default(),
        }
    }
}

fn profile(ctx: &Ctx, a: &ProfileArgs) -> Result<(), CliError> {
    let (c, v): (ProfileCfg, _) = resolve(ctx, "distort-profile", a)?;
    if c.scales.windows(2).any(|w| !(w[0] < w[1])) || c.scales.iter().any(|s| !(*s > 0.0)) {
        return Err(CliError::Config(
            "scales must be positive and increasing".into(),
        ));
    }
    let rho = density_of(&c.density, c.d)?;
    let m = modulus(&c.modulus)?;
    let opts = distortion::ProfileOpts {
        m: c.m,
        heuristic: HeuristicOpts {
            seed: ctx.seed,
            restarts: c.restarts,
            ..HeuristicOpts::default()
        },
        ..distortion::ProfileOpts::default()
    };
    let rows =
        distortion::distortion_growth_profile(&rho, c.d, &c.scales, &m, &opts).map_err(cfg)?;
    let mut t = Table::new([
        "R",
        "points",
        "R_lattice",
        "shell_left_out",
        "bilip_upper",
        "lower_bound",
        "displacement",
        "homogeneous_omega",
    ]);
    for r in &rows {
        t.push(vec![
            f(r.r),
            r.points.to_string(),
            f(r.r_lattice),
            r.shell_left_out.to_string(),
            f(r.bilip_upper),
            f(r.lower_bound),
            f(r.displacement),
            f(r.homogeneous_omega),
        ]);
    }
    Emit::new(ctx, "distort-profile", v).finish(serde_json::to_value(&rows).map_err(io)?, Some(&t))
}

// ---------------------------------------------------------------------------
// Feige

#[derive(Args, Debug, Serialize)]
pub struct FeigeLsArgs {
    /// Lattice points `x,y;x,y;…`.
    #[arg(long)]
    points: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FeigeLsCfg {
    points: Option<String>,
    n: Option<usize>,
    d: Option<usize>,
}

fn feige_ls(ctx: &Ctx, a: &FeigeLsArgs) -> Result<(), CliError> {
    let (c, v): (FeigeLsCfg, _) = resolve(ctx, "feige-ls", a)?;
    let pts = points(
        c.points
            .as_deref()
            .ok_or_else(|| CliError::Config("--points is required".into()))?,
    )?;
    let d = c.d.unwrap_or_else(|| pts.first().map_or(0, |p| p.len()));
    let n =
        c.n.ok_or_else(|| CliError::Config("--n is required".into()))?;
    let s: Vec<Vec<i64>> = pts
        .iter()
        .map(|p| {
            p.iter()
                .map(|&x| {
                    if x.fract() == 0.0 {
                        Ok(x as i64)
                    } else {
                        Err(CliError::Config(format!("{x} is not an integer")))
                    }
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let r = distortion::feige_ls(&s, n, d).map_err(cfg)?;
    println!(
        "L_S = {} ({})",
        r.value,
        if r.exact { "exact" } else { "upper bound" }
    );
    Emit::new(ctx, "feige-ls", v).finish(serde_json::to_value(&r).map_err(io)?, None)
}

#[derive(Args, Debug, Serialize)]
pub struct FeigeCnArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Integer window lo:hi (all axes) or per axis.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    budget: Option<u64>,
    /// Random subsets instead of exhaustive search (lower bound).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeigeCnCfg {
    n: usize,
    d: usize,
    window: String,
    budget: u64,
    samples: Option<usize>,
}

impl Default for FeigeCnCfg {
    fn default() -> Self {
        FeigeCnCfg {
            n: 2,
            d: 2,
            window: "0:3".into(),
            budget: distortion::CN_BUDGET,
            samples: None,
        }
    }
}

fn feige_cn(ctx: &Ctx, a: &FeigeCnArgs) -> Result<(), CliError> {
    let (c, v): (FeigeCnCfg, _) = resolve(ctx, "feige-cn", a)?;
    let w = int_window(&c.window, c.d)?;
    let r = match c.samples {
        Some(k) => distortion::feige_cn_sampled(c.n, c.d, &w, k, ctx.seed),
        None => distortion::feige_cn_window(c.n, c.d, &w, c.budget),
    }
    .map_err(cfg)?;
    let mut t = Table::new((1..=c.d).map(|i| format!("x{i}")));
    for p in &r.maximizer {
        t.push(p.iter().map(|x| x.to_string()).collect());
    }
    println!(
        "C = {} over {} subsets ({})",
        r.value,
        r.subsets,
        if r.exact {
            "exact"
        } else {
            "sampled lower bound"
        }
    );
    Emit::new(ctx, "feige-cn", v).finish(serde_json::to_value(&r).map_err(io)?, Some(&t))
}

// ---------------------------------------------------------------------------
// geomlab

#[derive(Args, Debug, Serialize)]
pub struct DichotomyArgs {
    /// identity[:d], inline JSON or @file.json
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    modulus: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    m: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DichotomyCfg {
    map: String,
    modulus: String,
    c: f64,
    n: u64,
    m: u64,
    eps: f64,
    phi: f64,
    res: usize,
    budget: u64,
}

impl Default for DichotomyCfg {
    fn default() -> Self {
        DichotomyCfg {
            map: "identity".into(),
            modulus: "identity".into(),
            c: 1.0,
            n: 4,
            m: 2,
            eps: 0.1,
            phi: 0.1,
            res: 17,
            budget: 4_000_000,
        }
    }
}

fn dichotomy(ctx: &Ctx, a: &DichotomyArgs) -> Result<(), CliError> {
    let (c, v): (DichotomyCfg, _) = resolve(ctx, "dichotomy", a)?;
    check_eps(c.eps)?;
    let h = map_spec(&c.map)?;
    let m = modulus(&c.modulus)?;
    let slab = Slab::new(h.d, c.c, c.n);
    let r =
        geomlab::dichotomy(&h, &slab, c.m, c.eps, c.phi, &m, c.res, c.budget).map_err(geom_err)?;
    let mut t = Table::new(["i", "residual", "margin", "in_omega"]);
    for (k, (res, mar)) in r
        .statement1
        .residual
        .iter()
        .zip(&r.statement1.margin)
        .enumerate()
    {
        t.push(vec![
            (k + 1).to_string(),
            f(*res),
            f(*mar),
            (*mar >= 0.0).to_string(),
        ]);
    }
    Emit::new(ctx, "dichotomy", v).finish(serde_json::to_value(&r).map_err(io)?, Some(&t))?;
    println!("branch {}", r.branch);
    if r.branch == 0 {
        Err(CliError::Assertion(
            "neither statement certified on the grids".into(),
        ))
    } else {
        Ok(())
    }
}

#[derive(Args, Debug, Serialize)]
pub struct B1Args {
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    modulus: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<u64>>,
    #[arg(long)]
    r_bound: Option<u64>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct B1Cfg {
    map: String,
    modulus: String,
    eps: f64,
    phi: f64,
    c: f64,
    n: Vec<u64>,
    m: Vec<u64>,
    r_bound: Option<u64>,
    res: usize,
    max_iters: usize,
}

impl Default for B1Cfg {
    fn default() -> Self {
        B1Cfg {
            map: "identity".into(),
            modulus: "identity".into(),
            eps: 0.1,
            phi: 0.1,
            c: 1.0,
            n: vec![4, 4, 4],
            m: vec![2, 2, 2],
            r_bound: None,
            res: 17,
            max_iters: 64,
        }
    }
}

fn b1(ctx: &Ctx, a: &B1Args) -> Result<(), CliError> {
    let (c, v): (B1Cfg, _) = resolve(ctx, "b1-trace", a)?;
    check_eps(c.eps)?;
    let h = map_spec(&c.map)?;
    let m = modulus(&c.modulus)?;
    let s = Schedule::custom(c.c, &c.n, &c.m).map_err(cfg)?;
    let opts = geomlab::B1Opts {
        test_res: c.res,
        max_iters: c.max_iters,
        ..geomlab::B1Opts::default()
    };
    let tr =
        geomlab::run_algorithm_b1(&h, &m, c.eps, c.phi, &s, c.r_bound, &opts).map_err(geom_err)?;
    let mut t = Table::new([
        "i",
        "c",
        "N",
        "M",
        "omega_size",
        "statement1",
        "z_next",
        "admissible",
    ]);
    for st in &tr.steps {
        let z = st.z_next.as_ref().map_or(String::new(), |z| {
            z.iter().map(|v| f(*v)).collect::<Vec<_>>().join(" ")
        });
        t.push(vec![
            st.i.to_string(),
            f(st.c),
            st.n.to_string(),
            st.m.to_string(),
            st.omega_size.to_string(),
            st.statement1.to_string(),
            z,
            st.admissible.map_or(String::new(), |b| b.to_string()),
        ]);
    }
    Emit::new(ctx, "b1-trace", v).finish(serde_json::to_value(&tr).map_err(io)?, Some(&t))?;
    println!(
        "p = {}, final branch {}, biL_ω = {}",
        tr.p, tr.final_branch, tr.bilip_omega
    );
    if !tr.bilip_ok {
        eprintln!("warning: sampled biL_ω = {} exceeds 1", tr.bilip_omega);
    }
    if tr.steps.iter().any(|s| s.admissible == Some(false)) {
        return Err(CliError::Assertion(
            "recentered at an inadmissible point".into(),
        ));
    }
    if tr.bilip_ok && tr.within_r == Some(false) {
        return Err(CliError::Assertion("iteration exceeded r".into()));
    }
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct VolumeArgs {
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    modulus: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    /// Slab index i ∈ [N-1]; S_{i+1} is its e₁ neighbour.
    #[arg(long)]
    i: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    pi: Option<f64>,
    /// mc | grid
    #[arg(long)]
    mode: Option<String>,
    /// Total Monte Carlo samples, split between the two cubes.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    grid_res: Option<usize>,
    #[arg(long)]
    res: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VolumeCfg {
    map: String,
    modulus: String,
    c: f64,
    n: u64,
    i: u64,
    eps: f64,
    pi: Option<f64>,
    mode: String,
    samples: usize,
    grid_res: usize,
    res: usize,
}

impl Default for VolumeCfg {
    fn default() -> Self {
        VolumeCfg {
            map: "identity".into(),
            modulus: "identity".into(),
            c: 1.0,
            n: 4,
            i: 1,
            eps: 0.1,
            pi: None,
            mode: "mc".into(),
            samples: 1_000_000,
            grid_res: 256,
            res: 17,
        }
    }
}

fn volume(ctx: &Ctx, a: &VolumeArgs) -> Result<(), CliError> {
    let (c, v): (VolumeCfg, _) = resolve(ctx, "volume-check", a)?;
    check_eps(c.eps)?;
    let h = map_spec(&c.map)?;
    let m = modulus(&c.modulus)?;
    let mode = match c.mode.as_str() {
        "mc" => VolumeMode::MonteCarlo {
            samples: c.samples / 2,
            seed: ctx.seed,
        },
        "grid" => VolumeMode::Grid { res: c.grid_res },
        o => return Err(CliError::Config(format!("mode `{o}` is not mc or grid"))),
    };
    let slab = Slab::new(h.d, c.c, c.n);
    let r = geomlab::volume_diff_check(&h, &slab, c.i, c.eps, &m, c.pi, &mode, c.res)
        .map_err(geom_err)?;
    Emit::new(ctx, "volume-check", v).finish(serde_json::to_value(&r).map_err(io)?, None)?;
    println!(
        "lhs {} rhs {} (error {}): {:?}",
        r.lhs, r.rhs, r.error, r.status
    );
    if r.status == VolumeStatus::Fail {
        Err(CliError::Assertion(
            "volume difference exceeds the bound".into(),
        ))
    } else {
        Ok(())
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SymdiffArgs {
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    g: Option<String>,
    #[arg(long)]
    res: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymdiffCfg {
    f: String,
    g: String,
    res: usize,
}

impl Default for SymdiffCfg {
    fn default() -> Self {
        SymdiffCfg {
            f: "identity".into(),
            g: "identity".into(),
            res: 64,
        }
    }
}

fn symdiff(ctx: &Ctx, a: &SymdiffArgs) -> Result<(), CliError> {
    let (c, v): (SymdiffCfg, _) = resolve(ctx, "symdiff", a)?;
    let r = geomlab::symdiff_bound_check(&map_spec(&c.f)?, &map_spec(&c.g)?, c.res)
        .map_err(geom_err)?;
    Emit::new(ctx, "symdiff", v).finish(serde_json::to_value(&r).map_err(io)?, None)?;
    println!(
        "{} symmetric-difference cells, {} violations",
        r.symdiff_cells, r.violations
    );
    if r.violations == 0 {
        Ok(())
    } else {
        Err(CliError::Assertion(format!(
            "{} raster violations",
            r.violations
        )))
    }
}

#[derive(Args, Debug, Serialize)]
pub struct BoundaryArgs {
    #[arg(long)]
    f: Option<String>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    res: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryCfg {
    f: String,
    eps: Vec<f64>,
    res: usize,
}

impl Default for BoundaryCfg {
    fn default() -> Self {
        BoundaryCfg {
            f: "identity".into(),
            eps: vec![0.1, 0.05, 0.02],
            res: 1024,
        }
    }
}

fn boundary(ctx: &Ctx, a: &BoundaryArgs) -> Result<(), CliError> {
    let (c, v): (BoundaryCfg, _) = resolve(ctx, "boundary-measure", a)?;
    let rows = geomlab::boundary_neighborhood_measure(&map_spec(&c.f)?, &c.eps, c.res)
        .map_err(geom_err)?;
    let mut t = Table::new(["eps", "measure", "raster_error"]);
    for r in &rows {
        t.push(vec![f(r.eps), f(r.measure), f(r.raster_error)]);
    }
    Emit::new(ctx, "boundary-measure", v)
        .finish(serde_json::to_value(&rows).map_err(io)?, Some(&t))?;
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    if sorted.windows(2).all(|w| w[0].measure <= w[1].measure) {
        Ok(())
    } else {
        Err(CliError::Assertion("measure is not monotone in ε".into()))
    }
}
