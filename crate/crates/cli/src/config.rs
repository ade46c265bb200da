//! Flat `key = value` experiment configs.
//!
//! One entry per line, `#` starts a comment, keys are dotted paths such as
//! `model.alpha_left`. A file may define several plans with
//! `plans = a, b`; keys prefixed by a plan name (`a.model.beta`) apply to
//! that plan only, unprefixed keys are shared.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ncf_core::exec::Backend;
use ncf_core::innovations::{InnovationLaw, MomentOrder};
use ncf_core::lattice::Coord;
use ncf_core::model::{Activation, ModelSpec};
use ncf_core::montecarlo::{ExperimentKind, ExperimentPlan, IndexSpec};
use ncf_core::statistics::{Cost, PredictionLoss, Predictor, Phi};

use crate::CliError;

/// Every key a plan understands.
pub const PLAN_KEYS: &[&str] = &[
    "name",
    "seed",
    "model.type",
    "model.alpha_left",
    "model.alpha_right",
    "model.beta",
    "model.offsets",
    "model.coefficients",
    "model.k",
    "model.p",
    "model.matrix",
    "model.activation",
    "noise.law",
    "noise.mean",
    "noise.sd",
    "noise.low",
    "noise.high",
    "noise.clip",
    "statistic.phi",
    "statistic.delta",
    "statistic.value",
    "statistic.predictor",
    "statistic.weights",
    "statistic.intercept",
    "statistic.cost",
    "statistic.huber_delta",
    "statistic.include_center",
    "index.type",
    "index.start",
    "index.len",
    "index.lo",
    "index.hi",
    "index.points",
    "depths.approx",
    "depths.stat",
    "depths.swap",
    "depths.deviation",
    "depths.reference",
    "picard.iterations",
    "picard.tolerance",
    "picard.margin",
    "picard.init",
    "mc.replicates",
    "mc.replicates.approx",
    "mc.replicates.swap",
    "mc.replicates.stat",
    "mc.replicates.deviation",
    "mc.moments",
    "mc.epsilon_points",
    "mc.moment_samples",
    "mc.experiments",
    "mc.backend",
];

/// Keys that are not per plan.
pub const GLOBAL_KEYS: &[&str] = &["plans", "output.dir", "output.verbose"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected 'key = value'", no + 1)));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", no + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key '{key}'", no + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::Config(format!("config not found: {}", path.display()))
            } else {
                CliError::Config(format!("cannot read {}: {e}", path.display()))
            }
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Sets or replaces an entry.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.trim().to_string(), value.trim().to_string());
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn plan_names(&self) -> Vec<String> {
        match self.get("plans") {
            Some(list) => split_list(list).map(str::to_string).collect(),
            None => vec![self.get("name").unwrap_or("default").to_string()],
        }
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    split_list(value).map(|x| parse_scalar(key, x)).collect()
}

/// `a..=b`, `a..b`, or a comma list.
fn parse_depths(key: &str, value: &str) -> Result<Vec<u64>, CliError> {
    let v = value.trim();
    if let Some((a, b)) = v.split_once("..=") {
        let (a, b): (u64, u64) = (parse_scalar(key, a)?, parse_scalar(key, b)?);
        return Ok((a..=b).collect());
    }
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (u64, u64) = (parse_scalar(key, a)?, parse_scalar(key, b)?);
        return Ok((a..b).collect());
    }
    parse_list(key, v)
}

/// `x,y; x,y; …`
fn parse_points(key: &str, value: &str) -> Result<Vec<Coord>, CliError> {
    value
        .split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse_list(key, p))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(CliError::Config(format!("{key}: expected a boolean, got '{other}'"))),
    }
}

fn parse_moment(key: &str, value: &str) -> Result<MomentOrder, CliError> {
    match value.trim() {
        "inf" | "infinity" => Ok(MomentOrder::Infinite),
        other => {
            let m: u32 = parse_scalar(key, other)?;
            if m == 0 {
                return Err(CliError::Config(format!("{key}: moment order must be >= 1")));
            }
            Ok(MomentOrder::Finite(m))
        }
    }
}

fn join<T: Display>(xs: &[T], sep: &str) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

fn join_points(points: &[Coord]) -> String {
    points.iter().map(|p| join(p, ",")).collect::<Vec<_>>().join("; ")
}

/// Reads one plan's keys, remembering which were consumed.
struct PlanView<'a> {
    cfg: &'a ConfigFile,
    prefix: Option<String>,
    used: &'a RefCell<BTreeSet<String>>,
}

impl PlanView<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        if let Some(p) = &self.prefix {
            let full = format!("{p}.{key}");
            if let Some(v) = self.cfg.get(&full) {
                self.used.borrow_mut().insert(full);
                return Some(v);
            }
        }
        let v = self.cfg.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v)
    }

    fn scalar<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.raw(key).map_or(Ok(default), |v| parse_scalar(key, v))
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = self
            .raw(key)
            .ok_or_else(|| CliError::Config(format!("missing key '{key}'")))?;
        parse_scalar(key, v)
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: Display,
    {
        self.raw(key).map(|v| parse_list(key, v)).transpose()
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub backend: Option<Backend>,
    /// Seed used when neither flag nor file sets one (`NCF_SEED`).
    pub env_seed: Option<u64>,
}

/// Builds every plan of a config.
pub fn resolve_plans(cfg: &ConfigFile, overrides: &Overrides) -> Result<Vec<ExperimentPlan>, CliError> {
    let names = cfg.plan_names();
    if names.is_empty() {
        return Err(CliError::Config("'plans' lists no plan".into()));
    }
    let multi = cfg.get("plans").is_some();
    let used = RefCell::new(BTreeSet::new());
    let mut plans = Vec::new();
    for name in &names {
        if !multi && name.contains('/') {
            return Err(CliError::Config("plan names cannot contain '/'".into()));
        }
        let view = PlanView {
            cfg,
            prefix: multi.then(|| name.clone()),
            used: &used,
        };
        let mut plan = plan_from_view(&view)?;
        plan.name = name.clone();
        plan.seed = match overrides.seed {
            Some(s) => s,
            None => match view.raw("seed") {
                Some(v) => parse_scalar("seed", v)?,
                None => overrides.env_seed.unwrap_or(0),
            },
        };
        if let Some(r) = overrides.replicates {
            plan.replicates = r;
            plan.approx_replicates = None;
            plan.swap_replicates = None;
            plan.stat_replicates = None;
            plan.deviation_replicates = None;
        }
        if let Some(b) = overrides.backend {
            plan.backend = b;
        }
        plans.push(plan);
    }
    let used = used.into_inner();
    for (key, _) in cfg.entries() {
        if used.contains(key) || GLOBAL_KEYS.contains(&key) || (key == "name" && !multi) {
            continue;
        }
        let known = PLAN_KEYS.contains(&key)
            || (multi
                && names.iter().any(|n| {
                    key.strip_prefix(n.as_str())
                        .and_then(|r| r.strip_prefix('.'))
                        .is_some_and(|r| PLAN_KEYS.contains(&r))
                }));
        if !known {
            return Err(CliError::Config(format!("unknown key '{key}'")));
        }
    }
    Ok(plans)
}

fn plan_from_view(v: &PlanView<'_>) -> Result<ExperimentPlan, CliError> {
    let base = ExperimentPlan::desk();
    v.raw("name");
    let model = match v.raw("model.type").unwrap_or("ar") {
        "ar" => ModelSpec::Ar {
            alpha_left: v.scalar("model.alpha_left", 0.2)?,
            alpha_right: v.scalar("model.alpha_right", 0.2)?,
            beta: v.scalar("model.beta", 0.3)?,
        },
        "linear" => {
            let offsets = v
                .raw("model.offsets")
                .map(|s| parse_points("model.offsets", s))
                .transpose()?
                .ok_or_else(|| CliError::Config("missing key 'model.offsets'".into()))?;
            ModelSpec::Linear {
                offsets,
                coefficients: v
                    .list("model.coefficients")?
                    .ok_or_else(|| CliError::Config("missing key 'model.coefficients'".into()))?,
                beta: v.required("model.beta")?,
            }
        }
        "brnn" => ModelSpec::Brnn {
            k: v.scalar("model.k", 1)?,
            p: v.required("model.p")?,
            matrix: v
                .list("model.matrix")?
                .ok_or_else(|| CliError::Config("missing key 'model.matrix'".into()))?,
            beta: v.required("model.beta")?,
            activation: v.scalar::<Activation>("model.activation", Activation::Tanh)?,
        },
        other => return Err(CliError::Config(format!("model.type: unknown model '{other}'"))),
    };
    let law = match v.raw("noise.law").unwrap_or("truncated_gaussian") {
        "gaussian" => InnovationLaw::Gaussian {
            mean: v.scalar("noise.mean", 0.0)?,
            sd: v.scalar("noise.sd", 1.0)?,
        },
        "uniform" => InnovationLaw::Uniform {
            low: v.scalar("noise.low", -1.0)?,
            high: v.scalar("noise.high", 1.0)?,
        },
        "truncated_gaussian" => InnovationLaw::TruncatedGaussian {
            mean: v.scalar("noise.mean", 0.0)?,
            sd: v.scalar("noise.sd", 1.0)?,
            clip: v.scalar("noise.clip", 3.0)?,
        },
        other => return Err(CliError::Config(format!("noise.law: unknown law '{other}'"))),
    };
    let phi = match v.raw("statistic.phi").unwrap_or("center") {
        "center" => Phi::Center,
        "sum" => Phi::Sum,
        "max" => Phi::Max,
        "center_cubed" => Phi::CenterCubed,
        "constant" => Phi::Constant(v.required("statistic.value")?),
        "risk" => {
            let predictor = match v.raw("statistic.predictor").unwrap_or("neighbor_mean") {
                "zero" => Predictor::Zero,
                "neighbor_mean" => Predictor::NeighborMean,
                "linear" => Predictor::Linear {
                    weights: v
                        .list("statistic.weights")?
                        .ok_or_else(|| CliError::Config("missing key 'statistic.weights'".into()))?,
                    intercept: v.scalar("statistic.intercept", 0.0)?,
                },
                other => {
                    return Err(CliError::Config(format!("statistic.predictor: unknown predictor '{other}'")))
                }
            };
            let cost = match v.raw("statistic.cost").unwrap_or("absolute") {
                "absolute" => Cost::Absolute,
                "huber" => Cost::Huber {
                    delta: v.scalar("statistic.huber_delta", 1.0)?,
                },
                other => return Err(CliError::Config(format!("statistic.cost: unknown cost '{other}'"))),
            };
            let include_center = match v.raw("statistic.include_center") {
                Some(s) => parse_bool("statistic.include_center", s)?,
                None => false,
            };
            Phi::Risk(PredictionLoss {
                predictor,
                cost,
                include_center,
            })
        }
        other => return Err(CliError::Config(format!("statistic.phi: unknown statistic '{other}'"))),
    };
    let statistic_delta = v.list("statistic.delta")?.unwrap_or(vec![1]);
    let index = match v.raw("index.type").unwrap_or("interval") {
        "interval" => IndexSpec::Interval {
            start: v.scalar("index.start", 0)?,
            len: v.scalar("index.len", 64)?,
        },
        "box" => IndexSpec::Boxed {
            lo: v
                .list("index.lo")?
                .ok_or_else(|| CliError::Config("missing key 'index.lo'".into()))?,
            hi: v
                .list("index.hi")?
                .ok_or_else(|| CliError::Config("missing key 'index.hi'".into()))?,
        },
        "explicit" => IndexSpec::Explicit(
            v.raw("index.points")
                .map(|s| parse_points("index.points", s))
                .transpose()?
                .ok_or_else(|| CliError::Config("missing key 'index.points'".into()))?,
        ),
        other => return Err(CliError::Config(format!("index.type: unknown index set '{other}'"))),
    };
    let depths = |key: &str, default: Vec<u64>| -> Result<Vec<u64>, CliError> {
        v.raw(key).map_or(Ok(default), |s| parse_depths(key, s))
    };
    let moments = match v.raw("mc.moments") {
        Some(s) => split_list(s)
            .map(|m| parse_moment("mc.moments", m))
            .collect::<Result<Vec<_>, _>>()?,
        None => base.moments.clone(),
    };
    let experiments = match v.raw("mc.experiments") {
        Some(s) if s.trim() == "all" => ExperimentKind::ALL.to_vec(),
        Some(s) => split_list(s)
            .map(|e| e.parse::<ExperimentKind>().map_err(|e| CliError::Config(format!("mc.experiments: {e}"))))
            .collect::<Result<Vec<_>, _>>()?,
        None => base.experiments.clone(),
    };
    let backend = match v.raw("mc.backend") {
        Some(s) => s
            .parse::<Backend>()
            .map_err(|e| CliError::Config(format!("mc.backend: {e}")))?,
        None => base.backend,
    };
    let opt = |key: &str| -> Result<Option<usize>, CliError> { v.raw(key).map(|s| parse_scalar(key, s)).transpose() };
    Ok(ExperimentPlan {
        name: base.name.clone(),
        model,
        law,
        phi,
        statistic_delta,
        index,
        approx_depths: depths("depths.approx", base.approx_depths.clone())?,
        stat_depths: depths("depths.stat", base.stat_depths.clone())?,
        swap_depth: v.scalar("depths.swap", base.swap_depth)?,
        deviation_depth: v.scalar("depths.deviation", base.deviation_depth)?,
        replicates: v.scalar("mc.replicates", base.replicates)?,
        approx_replicates: opt("mc.replicates.approx")?,
        swap_replicates: opt("mc.replicates.swap")?,
        stat_replicates: opt("mc.replicates.stat")?,
        deviation_replicates: opt("mc.replicates.deviation")?,
        seed: base.seed,
        reference_depth: v.raw("depths.reference").map(|s| parse_scalar("depths.reference", s)).transpose()?,
        picard_iterations: opt("picard.iterations")?,
        picard_tolerance: v.scalar("picard.tolerance", base.picard_tolerance)?,
        picard_margin: v.scalar("picard.margin", base.picard_margin)?,
        picard_init: v.scalar("picard.init", base.picard_init)?,
        moments,
        epsilon_points: v.scalar("mc.epsilon_points", base.epsilon_points)?,
        moment_samples: v.scalar("mc.moment_samples", base.moment_samples)?,
        experiments,
        backend,
    })
}

/// Every effective key of a plan, in schema order.
pub fn plan_entries(plan: &ExperimentPlan) -> Vec<(&'static str, String)> {
    let mut out: Vec<(&'static str, String)> = vec![("seed", plan.seed.to_string())];
    match &plan.model {
        ModelSpec::Ar {
            alpha_left,
            alpha_right,
            beta,
        } => {
            out.push(("model.type", "ar".into()));
            out.push(("model.alpha_left", alpha_left.to_string()));
            out.push(("model.alpha_right", alpha_right.to_string()));
            out.push(("model.beta", beta.to_string()));
        }
        ModelSpec::Linear {
            offsets,
            coefficients,
            beta,
        } => {
            out.push(("model.type", "linear".into()));
            out.push(("model.offsets", join_points(offsets)));
            out.push(("model.coefficients", join(coefficients, ", ")));
            out.push(("model.beta", beta.to_string()));
        }
        ModelSpec::Brnn {
            k,
            p,
            matrix,
            beta,
            activation,
        } => {
            out.push(("model.type", "brnn".into()));
            out.push(("model.k", k.to_string()));
            out.push(("model.p", p.to_string()));
            out.push(("model.matrix", join(matrix, ", ")));
            out.push(("model.beta", beta.to_string()));
            out.push(("model.activation", activation.name().into()));
        }
    }
    match plan.law {
        InnovationLaw::Gaussian { mean, sd } => {
            out.push(("noise.law", "gaussian".into()));
            out.push(("noise.mean", mean.to_string()));
            out.push(("noise.sd", sd.to_string()));
        }
        InnovationLaw::Uniform { low, high } => {
            out.push(("noise.law", "uniform".into()));
            out.push(("noise.low", low.to_string()));
            out.push(("noise.high", high.to_string()));
        }
        InnovationLaw::TruncatedGaussian { mean, sd, clip } => {
            out.push(("noise.law", "truncated_gaussian".into()));
            out.push(("noise.mean", mean.to_string()));
            out.push(("noise.sd", sd.to_string()));
            out.push(("noise.clip", clip.to_string()));
        }
    }
    let phi = match &plan.phi {
        Phi::Center => "center",
        Phi::Sum => "sum",
        Phi::Max => "max",
        Phi::CenterCubed => "center_cubed",
        Phi::Constant(_) => "constant",
        Phi::Risk(_) => "risk",
    };
    out.push(("statistic.phi", phi.into()));
    out.push(("statistic.delta", join(&plan.statistic_delta, ", ")));
    match &plan.phi {
        Phi::Constant(c) => out.push(("statistic.value", c.to_string())),
        Phi::Risk(loss) => {
            match &loss.predictor {
                Predictor::Zero => out.push(("statistic.predictor", "zero".into())),
                Predictor::NeighborMean => out.push(("statistic.predictor", "neighbor_mean".into())),
                Predictor::Linear { weights, intercept } => {
                    out.push(("statistic.predictor", "linear".into()));
                    out.push(("statistic.weights", join(weights, ", ")));
                    out.push(("statistic.intercept", intercept.to_string()));
                }
            }
            match loss.cost {
                Cost::Absolute => out.push(("statistic.cost", "absolute".into())),
                Cost::Huber { delta } => {
                    out.push(("statistic.cost", "huber".into()));
                    out.push(("statistic.huber_delta", delta.to_string()));
                }
            }
            out.push(("statistic.include_center", loss.include_center.to_string()));
        }
        _ => {}
    }
    match &plan.index {
        IndexSpec::Interval { start, len } => {
            out.push(("index.type", "interval".into()));
            out.push(("index.start", start.to_string()));
            out.push(("index.len", len.to_string()));
        }
        IndexSpec::Boxed { lo, hi } => {
            out.push(("index.type", "box".into()));
            out.push(("index.lo", join(lo, ", ")));
            out.push(("index.hi", join(hi, ", ")));
        }
        IndexSpec::Explicit(points) => {
            out.push(("index.type", "explicit".into()));
            out.push(("index.points", join_points(points)));
        }
    }
    out.push(("depths.approx", join(&plan.approx_depths, ", ")));
    out.push(("depths.stat", join(&plan.stat_depths, ", ")));
    out.push(("depths.swap", plan.swap_depth.to_string()));
    out.push(("depths.deviation", plan.deviation_depth.to_string()));
    if let Some(d) = plan.reference_depth {
        out.push(("depths.reference", d.to_string()));
    }
    if let Some(k) = plan.picard_iterations {
        out.push(("picard.iterations", k.to_string()));
    }
    out.push(("picard.tolerance", plan.picard_tolerance.to_string()));
    out.push(("picard.margin", plan.picard_margin.to_string()));
    out.push(("picard.init", plan.picard_init.to_string()));
    out.push(("mc.replicates", plan.replicates.to_string()));
    for (key, r) in [
        ("mc.replicates.approx", plan.approx_replicates),
        ("mc.replicates.swap", plan.swap_replicates),
        ("mc.replicates.stat", plan.stat_replicates),
        ("mc.replicates.deviation", plan.deviation_replicates),
    ] {
        if let Some(r) = r {
            out.push((key, r.to_string()));
        }
    }
    out.push(("mc.moments", join(&plan.moments, ", ")));
    out.push(("mc.epsilon_points", plan.epsilon_points.to_string()));
    out.push(("mc.moment_samples", plan.moment_samples.to_string()));
    out.push((
        "mc.experiments",
        plan.experiments.iter().map(|e| e.name()).collect::<Vec<_>>().join(", "),
    ));
    out.push(("mc.backend", plan.backend.name()));
    out
}

/// Resolved config text that reproduces `plans` when parsed again.
pub fn render_resolved(plans: &[ExperimentPlan], output_dir: &Path) -> String {
    let mut text = String::from("# resolved configuration\n");
    text.push_str(&format!("output.dir = {}\n", output_dir.display()));
    let multi = plans.len() > 1;
    if multi {
        let names: Vec<&str> = plans.iter().map(|p| p.name.as_str()).collect();
        text.push_str(&format!("plans = {}\n", names.join(", ")));
    } else if let Some(p) = plans.first() {
        text.push_str(&format!("name = {}\n", p.name));
    }
    for plan in plans {
        text.push('\n');
        for (key, value) in plan_entries(plan) {
            if multi {
                text.push_str(&format!("{}.{key} = {value}\n", plan.name));
            } else {
                text.push_str(&format!("{key} = {value}\n"));
            }
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_duplicates() {
        let c = ConfigFile::parse("# top\n\nmodel.beta = 0.3  # trailing\n").unwrap();
        assert_eq!(c.get("model.beta"), Some("0.3"));
        assert!(ConfigFile::parse("a = 1\na = 2\n").is_err());
        assert!(ConfigFile::parse("just text\n").is_err());
    }

    #[test]
    fn defaults_are_the_desk_plan() {
        let plans = resolve_plans(&ConfigFile::default(), &Overrides::default()).unwrap();
        let desk = ExperimentPlan {
            name: "default".into(),
            ..ExperimentPlan::desk()
        };
        assert_eq!(plans, vec![desk]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let c = ConfigFile::parse("model.bta = 0.3\n").unwrap();
        assert!(matches!(resolve_plans(&c, &Overrides::default()), Err(CliError::Config(_))));
    }

    #[test]
    fn seed_precedence() {
        let c = ConfigFile::parse("seed = 5\n").unwrap();
        let o = |seed, env| Overrides {
            seed,
            env_seed: env,
            ..Overrides::default()
        };
        assert_eq!(resolve_plans(&c, &o(Some(7), Some(9))).unwrap()[0].seed, 7);
        assert_eq!(resolve_plans(&c, &o(None, Some(9))).unwrap()[0].seed, 5);
        let empty = ConfigFile::default();
        assert_eq!(resolve_plans(&empty, &o(None, Some(9))).unwrap()[0].seed, 9);
        assert_eq!(resolve_plans(&empty, &o(None, None)).unwrap()[0].seed, 0);
    }

    #[test]
    fn multi_plan_keys() {
        let text = "plans = a, b\nmc.replicates = 10\nb.model.type = brnn\nb.model.p = 1\n\
                    b.model.matrix = 0.1, 0.2\nb.model.beta = 0.2\na.depths.approx = 0..=3\n";
        let plans = resolve_plans(&ConfigFile::parse(text).unwrap(), &Overrides::default()).unwrap();
        assert_eq!(plans.len(), 2);
        assert_eq!(plans[0].approx_depths, vec![0, 1, 2, 3]);
        assert!(matches!(plans[1].model, ModelSpec::Brnn { p: 1, .. }));
        assert!(plans.iter().all(|p| p.replicates == 10));
        let bad = ConfigFile::parse("plans = a\nc.model.beta = 0.1\n").unwrap();
        assert!(resolve_plans(&bad, &Overrides::default()).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = "plans = x, y\nx.model.type = linear\nx.model.offsets = 1,0; -1,0; 0,1; 0,-1\n\
                    x.model.coefficients = 0.1, 0.1, 0.1, 0.1\nx.model.beta = 0.5\nx.statistic.delta = 1, 1\n\
                    x.index.type = box\nx.index.lo = 0, 0\nx.index.hi = 3, 3\ny.statistic.phi = risk\n\
                    y.statistic.cost = huber\ny.noise.law = uniform\ny.mc.moments = 2, inf\n\
                    y.mc.replicates.swap = 50\ny.mc.backend = sequential\n";
        let o = Overrides {
            seed: Some(11),
            ..Overrides::default()
        };
        let plans = resolve_plans(&ConfigFile::parse(text).unwrap(), &o).unwrap();
        let rendered = render_resolved(&plans, Path::new("out"));
        let again = ConfigFile::parse(&rendered).unwrap();
        assert_eq!(again.get("output.dir"), Some("out"));
        assert_eq!(resolve_plans(&again, &Overrides::default()).unwrap(), plans);
    }
}
