//! Coupled Monte Carlo checks of every bound, with reproducible seeding.
//!
//! Replicate `r` of experiment `e` draws its innovations from
//! `split_seed(root, stream_id(plan/e), r)`, so any replicate can be
//! re-run alone. Replicates are computed by a [`Backend`], collected in
//! order and reduced sequentially, hence results do not depend on the
//! number of workers.

use std::io::Write;

use crate::bounds::{
    approx_error_bound, deviation_bound_s, deviation_bound_tilde, deviation_threshold,
    site_approx_bound, swap_filling_h_bound, swap_filling_s_bound, swap_marginal_h_bound,
    swap_marginal_s_bound, BoundParams,
};
use crate::error::{Error, Result};
use crate::exec::Backend;
use crate::innovations::{
    moment_vm, split_seed, stream_id, FieldView, InnovationLaw, InnovationSource, MomentOrder,
    NoiseCache, SwapVar,
};
use crate::lattice::{Coord, GridBox, IndexSet, Orthotope};
use crate::model::{picard_evaluate, FieldModel, ModelSpec, PicardConfig};
use crate::statistics::{Aggregate, Phi, SeparableStatistic};

/// Mean, spread and extremes of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub sd: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

/// Neumaier-compensated sum, in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                count: 0,
                mean: f64::NAN,
                sd: f64::NAN,
                stderr: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = if min == max {
            min
        } else {
            compensated_sum(values.iter().copied()) / n as f64
        };
        let ss = compensated_sum(values.iter().map(|x| (x - mean) * (x - mean)));
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        Self {
            count: n,
            mean,
            sd,
            stderr: sd / (n as f64).sqrt(),
            min,
            max,
        }
    }
}

/// `(E|X|^m)^{1/m}` and its delta-method standard error from the mean of
/// `|X|^m` and that mean's standard error.
pub fn norm_from_power_mean(mean: f64, stderr: f64, m: u32) -> (f64, f64) {
    let inv = 1.0 / m as f64;
    if mean <= 0.0 {
        return (0.0, stderr.max(0.0).powf(inv));
    }
    let value = mean.powf(inv);
    (value, inv * value / mean * stderr)
}

/// `‖X‖_m` estimate from samples of `|X|`; `m = ∞` gives the sample max.
pub fn moment_estimate(gaps: &[f64], m: MomentOrder) -> (f64, f64) {
    match m {
        MomentOrder::Finite(k) => {
            let powers: Vec<f64> = gaps.iter().map(|g| g.powi(k as i32)).collect();
            let s = Summary::from_values(&powers);
            norm_from_power_mean(s.mean, s.stderr, k)
        }
        MomentOrder::Infinite => (gaps.iter().copied().fold(0.0, f64::max), 0.0),
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let i = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[i]
}

#[derive(Debug, Clone, PartialEq)]
pub enum IndexSpec {
    /// `{start, …, start + len − 1}` on ℤ.
    Interval { start: i64, len: usize },
    /// All points of the box `[lo, hi]`.
    Boxed { lo: Vec<i64>, hi: Vec<i64> },
    Explicit(Vec<Coord>),
}

impl IndexSpec {
    pub fn build(&self) -> Result<IndexSet> {
        match self {
            IndexSpec::Interval { start, len } => IndexSet::interval(*start, *len),
            IndexSpec::Boxed { lo, hi } => IndexSet::boxed(lo.clone(), hi.clone()),
            IndexSpec::Explicit(points) => IndexSet::new(points.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExperimentKind {
    Moments,
    ApproxDecay,
    Swap,
    StatApprox,
    Deviation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Moments,
        ExperimentKind::ApproxDecay,
        ExperimentKind::Swap,
        ExperimentKind::StatApprox,
        ExperimentKind::Deviation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Moments => "vm",
            ExperimentKind::ApproxDecay => "approx",
            ExperimentKind::Swap => "swap",
            ExperimentKind::StatApprox => "stat_approx",
            ExperimentKind::Deviation => "deviation",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown experiment '{s}'")))
    }
}

/// Everything an experiment run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub name: String,
    pub model: ModelSpec,
    pub law: InnovationLaw,
    pub phi: Phi,
    /// `δ̄`.
    pub statistic_delta: Vec<u32>,
    pub index: IndexSpec,
    pub approx_depths: Vec<u64>,
    pub stat_depths: Vec<u64>,
    pub swap_depth: u64,
    pub deviation_depth: u64,
    pub replicates: usize,
    pub approx_replicates: Option<usize>,
    pub swap_replicates: Option<usize>,
    pub stat_replicates: Option<usize>,
    pub deviation_replicates: Option<usize>,
    pub seed: u64,
    /// Depth of the truncation used in place of the exact field; defaults
    /// to `T − 1`, where truncation and exact field coincide on the pyramid.
    pub reference_depth: Option<u64>,
    /// Fixed `K`; otherwise derived from `picard_tolerance`.
    pub picard_iterations: Option<usize>,
    pub picard_tolerance: f64,
    pub picard_margin: usize,
    pub picard_init: f64,
    pub moments: Vec<MomentOrder>,
    pub epsilon_points: usize,
    pub moment_samples: usize,
    pub experiments: Vec<ExperimentKind>,
    pub backend: Backend,
}

impl ExperimentPlan {
    /// κ = 1, 𝓘 = {0..63}, AR(0.2, 0.2, 0.3), truncated Gaussian innovations.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            model: ModelSpec::Ar {
                alpha_left: 0.2,
                alpha_right: 0.2,
                beta: 0.3,
            },
            law: InnovationLaw::TruncatedGaussian {
                mean: 0.0,
                sd: 1.0,
                clip: 3.0,
            },
            phi: Phi::Center,
            statistic_delta: vec![1],
            index: IndexSpec::Interval { start: 0, len: 64 },
            approx_depths: (0..=8).collect(),
            stat_depths: vec![0, 2, 4],
            swap_depth: 4,
            deviation_depth: 4,
            replicates: 2000,
            approx_replicates: None,
            swap_replicates: None,
            stat_replicates: None,
            deviation_replicates: None,
            seed: 0,
            reference_depth: None,
            picard_iterations: None,
            picard_tolerance: 1e-12,
            picard_margin: 0,
            picard_init: 0.0,
            moments: vec![MomentOrder::Finite(1), MomentOrder::Finite(2), MomentOrder::Infinite],
            epsilon_points: 12,
            moment_samples: 100_000,
            experiments: ExperimentKind::ALL.to_vec(),
            backend: Backend::default(),
        }
    }

    fn replicates_for(&self, kind: ExperimentKind) -> usize {
        match kind {
            ExperimentKind::ApproxDecay => self.approx_replicates,
            ExperimentKind::Swap => self.swap_replicates,
            ExperimentKind::StatApprox => self.stat_replicates,
            ExperimentKind::Deviation => self.deviation_replicates,
            ExperimentKind::Moments => None,
        }
        .unwrap_or(self.replicates)
    }

    fn setup(&self) -> Result<Setup> {
        let model = self.model.build()?;
        self.law.validate()?;
        let stat = SeparableStatistic::new(self.phi.clone(), Orthotope::new(self.statistic_delta.clone())?)?;
        let index = self.index.build()?;
        let mut cfg = match self.picard_iterations {
            Some(k) => PicardConfig::new(k)?,
            None => PicardConfig::for_model(&model, &self.law, self.picard_tolerance)?,
        };
        cfg = cfg.with_margin(self.picard_margin).with_init(self.picard_init);
        let reference_depth = self.reference_depth.unwrap_or(cfg.exact_depth());
        let replicates = [
            ExperimentKind::ApproxDecay,
            ExperimentKind::Swap,
            ExperimentKind::StatApprox,
            ExperimentKind::Deviation,
        ]
        .map(|k| self.replicates_for(k));
        if replicates.iter().any(|&r| r < 2) {
            return Err(Error::invalid("replicate counts must be >= 2"));
        }
        if let Some(d) = self
            .approx_depths
            .iter()
            .chain(&self.stat_depths)
            .find(|&&d| d >= reference_depth)
        {
            return Err(Error::invalid(format!(
                "depth {d} is not below the reference depth {reference_depth}"
            )));
        }
        if self.moments.is_empty() {
            return Err(Error::invalid("moment grid is empty"));
        }
        if self.epsilon_points == 0 {
            return Err(Error::invalid("epsilon grid needs at least one point"));
        }
        let dim = model.dim();
        let init_gap = model.magnitude_bound(&self.law) + self.picard_init.abs() * (dim as f64).sqrt();
        let picard_error = model.rho().powi(cfg.sweeps() as i32) * init_gap;
        Ok(Setup {
            model,
            stat,
            index,
            cfg,
            reference_depth,
            picard_error,
        })
    }

    fn experiment_seed(&self, experiment: &str, replicate: usize) -> u64 {
        split_seed(self.seed, stream_id(&format!("{}/{experiment}", self.name)), replicate as u64)
    }

    fn source(&self, experiment: &str, replicate: usize, dim: usize) -> Result<InnovationSource> {
        InnovationSource::new(self.experiment_seed(experiment, replicate), self.law, dim)
    }

    /// `V` for order `m`: closed form when one exists, else a Monte Carlo
    /// estimate inflated by three standard errors. `None` for `V_∞` of an
    /// unbounded law.
    fn moment_value(&self, m: MomentOrder, dim: usize) -> Result<Option<f64>> {
        if let Some(v) = self.law.v_m(m, dim) {
            return Ok(Some(v));
        }
        if m == MomentOrder::Infinite {
            return Ok(None);
        }
        let src = self.source("vm-estimate", 0, dim)?;
        let p = moment_vm(&src, m, self.moment_samples.max(2))?;
        Ok(Some(p.value + 3.0 * p.stderr))
    }

    /// 0.999-quantile of `‖ε − ε′‖`, used in place of `V_∞` for unbounded
    /// scalar Gaussians.
    fn gaussian_q999(&self, dim: usize) -> Option<f64> {
        use statrs::distribution::{ContinuousCDF, Normal};
        match self.law {
            InnovationLaw::Gaussian { sd, .. } if dim == 1 => {
                let z = Normal::new(0.0, 1.0).ok()?.inverse_cdf(1.0 - 0.0005);
                Some(2f64.sqrt() * sd * z)
            }
            _ => None,
        }
    }
}

struct Setup {
    model: FieldModel,
    stat: SeparableStatistic,
    index: IndexSet,
    cfg: PicardConfig,
    reference_depth: u64,
    /// Bound on `‖X⁽ᵀ⁾ − H‖` for one Picard evaluation.
    picard_error: f64,
}

impl Setup {
    fn origin(&self) -> Coord {
        vec![0; self.model.kappa()]
    }

    fn site_region(&self, center: &[i64]) -> GridBox {
        self.model.neighborhood().region(self.cfg.sweeps() as u64, center)
    }

    fn params(&self, d: u64, v_m: f64, v_inf: f64) -> Result<BoundParams> {
        BoundParams::from_geometry(
            &self.index,
            self.model.neighborhood(),
            self.stat.window(),
            self.model.rho(),
            v_m,
            v_inf,
            d,
        )
    }

    fn n_terms(&self) -> f64 {
        self.index.len() as f64 * self.stat.n_bbar() as f64
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub experiment: String,
    pub d: Option<u64>,
    pub m: Option<MomentOrder>,
    pub epsilon: Option<f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    /// The value the estimate is compared with.
    pub threshold: f64,
    pub pass: bool,
}

/// `estimate ≤ bound + budget + 3·SE`.
fn dominance(
    experiment: impl Into<String>,
    d: Option<u64>,
    m: Option<MomentOrder>,
    estimate: f64,
    stderr: f64,
    bound: f64,
    budget: f64,
) -> Row {
    let threshold = bound + budget + 3.0 * stderr;
    Row {
        experiment: experiment.into(),
        d,
        m,
        epsilon: None,
        estimate,
        stderr,
        bound,
        threshold,
        pass: estimate <= threshold,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
}

impl ExperimentResult {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

/// Rows for the moment grid of one family of coupled gaps.
struct GapFamily<'a> {
    experiment: String,
    d: Option<u64>,
    gaps: &'a [f64],
    /// Bound as a function of `V`.
    bound: &'a dyn Fn(f64) -> Result<f64>,
    /// Budget as a function of `V`.
    budget: &'a dyn Fn(f64) -> f64,
}

fn gap_rows(plan: &ExperimentPlan, dim: usize, family: GapFamily<'_>, notes: &mut Vec<String>) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &m in &plan.moments {
        match plan.moment_value(m, dim)? {
            Some(v) => {
                let (est, se) = moment_estimate(family.gaps, m);
                rows.push(dominance(
                    family.experiment.clone(),
                    family.d,
                    Some(m),
                    est,
                    se,
                    (family.bound)(v)?,
                    (family.budget)(v),
                ));
            }
            None => match plan.gaussian_q999(dim) {
                Some(q) => {
                    let mut sorted = family.gaps.to_vec();
                    sorted.sort_by(f64::total_cmp);
                    let est = quantile_sorted(&sorted, 0.999);
                    rows.push(dominance(
                        format!("{}_q999", family.experiment),
                        family.d,
                        None,
                        est,
                        0.0,
                        (family.bound)(q)?,
                        (family.budget)(q),
                    ));
                    if !notes.iter().any(|n| n.contains("q999")) {
                        notes.push(
                            "V_inf is infinite for Gaussian innovations; *_q999 rows compare 0.999-quantiles \
                             with the bound at the 0.999-quantile of |e - e'| (a heuristic, not a theorem)"
                                .into(),
                        );
                    }
                }
                None => notes.push(format!(
                    "{}: m = inf skipped, V_inf is infinite for this law",
                    family.experiment
                )),
            },
        }
    }
    Ok(rows)
}

/// Monte Carlo `V_m` against its closed form (agreement within 4 SE), and
/// the sample maximum of `‖ε − ε′‖` against `V_∞`.
pub fn run_moments(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    let dim = plan.model.dim();
    let src = plan.source("vm", 0, dim)?;
    let samples = plan.moment_samples.max(2);
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &m in &plan.moments {
        match m {
            MomentOrder::Finite(_) => {
                let p = moment_vm(&src, m, samples)?;
                match p.closed_form {
                    Some(cf) => {
                        let tol = 4.0 * p.stderr + 1e-12;
                        rows.push(Row {
                            experiment: "vm".into(),
                            d: None,
                            m: Some(m),
                            epsilon: None,
                            estimate: p.value,
                            stderr: p.stderr,
                            bound: cf,
                            threshold: cf + tol,
                            pass: (p.value - cf).abs() <= tol,
                        });
                    }
                    None => notes.push(format!("vm: no closed form for m = {m}")),
                }
            }
            MomentOrder::Infinite => {
                let Some(v_inf) = plan.law.v_infinity(dim) else {
                    notes.push("vm: V_inf is infinite for this law".into());
                    continue;
                };
                let partner = src.with_seed(split_seed(src.seed(), stream_id("moment-partner"), 0));
                let (mut a, mut b) = (vec![0.0; dim], vec![0.0; dim]);
                let mut max_gap: f64 = 0.0;
                for i in 0..samples {
                    use crate::innovations::NoiseField;
                    src.epsilon_into(&[i as i64], &mut a);
                    partner.epsilon_into(&[i as i64], &mut b);
                    let g = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                    max_gap = max_gap.max(g);
                }
                rows.push(dominance("vm", None, Some(m), max_gap, 0.0, v_inf, 1e-12));
            }
        }
    }
    Ok(ExperimentResult {
        name: "vm".into(),
        rows,
        notes,
    })
}

/// `‖H(ξ_0) − H(ξ̃_0^[d])‖_m ≤ ρ^{d+1} V_m` for every depth of the grid.
pub fn run_approx_decay(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    let setup = plan.setup()?;
    let (model, cfg) = (&setup.model, &setup.cfg);
    let origin = setup.origin();
    let region = setup.site_region(&origin);
    let trunc = model.neighborhood();
    let dim = model.dim();
    let depths = &plan.approx_depths;
    let per_rep = plan.backend.try_map(plan.replicates_for(ExperimentKind::ApproxDecay), |r| {
        let src = plan.source("approx", r, dim)?;
        let cache = NoiseCache::new(&src, region.clone());
        let view = FieldView::truncated(&cache, trunc, &origin, setup.reference_depth);
        let reference = picard_evaluate(model, &view, &origin, cfg)?;
        depths
            .iter()
            .map(|&d| {
                let view = FieldView::truncated(&cache, trunc, &origin, d);
                let h = picard_evaluate(model, &view, &origin, cfg)?;
                Ok(euclid(&reference, &h))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let rho = model.rho();
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (k, &d) in depths.iter().enumerate() {
        let gaps: Vec<f64> = per_rep.iter().map(|g| g[k]).collect();
        let bound = move |v: f64| Ok(site_approx_bound(rho, d, v));
        let budget = |v: f64| site_approx_bound(rho, setup.reference_depth, v) + 2.0 * setup.picard_error;
        rows.extend(gap_rows(
            plan,
            dim,
            GapFamily {
                experiment: "approx_decay".into(),
                d: Some(d),
                gaps: &gaps,
                bound: &bound,
                budget: &budget,
            },
            &mut notes,
        )?);
    }
    if let Some(slope) = log_slope(&rows, MomentOrder::Finite(2)) {
        notes.push(format!(
            "approx_decay: fitted log-gap slope {slope:.4} per unit depth (ln rho = {:.4})",
            rho.ln()
        ));
    }
    Ok(ExperimentResult {
        name: "approx".into(),
        rows,
        notes,
    })
}

fn log_slope(rows: &[Row], m: MomentOrder) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.m == Some(m) && r.estimate > 1e-300)
        .filter_map(|r| r.d.map(|d| (d as f64, r.estimate.ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Single-variable swaps: per-site shells, the site's own filling, an
/// untouched marginal, and one marginal and one filling of the statistic.
pub fn run_swap_sensitivity(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    let setup = plan.setup()?;
    let (model, cfg) = (&setup.model, &setup.cfg);
    let d = plan.swap_depth;
    let trunc = model.neighborhood();
    let dim = model.dim();
    let origin = setup.origin();
    let axis = trunc.delta().iter().position(|&w| w > 0);
    let shell_point = |c: u64| -> Coord {
        let mut t = origin.clone();
        if let Some(a) = axis {
            t[a] += c as i64 * trunc.delta()[a] as i64;
        }
        t
    };
    let shells: Vec<u64> = match axis {
        Some(_) => (0..=d).collect(),
        None => vec![0],
    };
    let outside = axis.map(|_| shell_point(d + 1));

    let agg = Aggregate::new(&setup.stat, model, &setup.index, *cfg)?;
    let middle = setup.index.points()[setup.index.len() / 2].clone();
    let s_marginal = SwapVar::Marginal(middle.clone());
    let s_filling = SwapVar::Filling(middle);
    let noise_region = agg.noise_region().hull_with(&setup.site_region(&origin));

    let per_rep = plan.backend.try_map(plan.replicates_for(ExperimentKind::Swap), |r| {
        let src = plan.source("swap", r, dim)?;
        let cache = NoiseCache::new(&src, noise_region.clone());
        let base_view = FieldView::truncated(&cache, trunc, &origin, d);
        let base = picard_evaluate(model, &base_view, &origin, cfg)?;
        let swap_gap = |var: SwapVar| -> Result<f64> {
            let view = FieldView::swapped(&cache, trunc, &origin, d, var);
            Ok(euclid(&base, &picard_evaluate(model, &view, &origin, cfg)?))
        };
        let mut gaps = Vec::with_capacity(shells.len() + 4);
        for &c in &shells {
            gaps.push(swap_gap(SwapVar::Marginal(shell_point(c)))?);
        }
        gaps.push(swap_gap(SwapVar::Filling(origin.clone()))?);
        gaps.push(match &outside {
            Some(t) => swap_gap(SwapVar::Marginal(t.clone()))?,
            None => 0.0,
        });
        let sites = agg.site_values(&cache, d)?;
        let s = agg.combine(&sites);
        for var in [&s_marginal, &s_filling] {
            let swapped = agg.combine(&agg.swapped_site_values(&cache, d, &sites, var)?);
            gaps.push((swapped - s).abs());
        }
        Ok(gaps)
    })?;

    let column = |k: usize| -> Vec<f64> { per_rep.iter().map(|g| g[k]).collect() };
    let rho = model.rho();
    let picard = 2.0 * setup.picard_error;
    let stat_picard = 2.0 * setup.n_terms() * setup.picard_error;
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (k, &c) in shells.iter().enumerate() {
        let gaps = column(k);
        let bound = move |v: f64| Ok(swap_marginal_h_bound(rho, c, v));
        rows.extend(gap_rows(
            plan,
            dim,
            GapFamily {
                experiment: format!("swap_h_marginal_c{c}"),
                d: Some(d),
                gaps: &gaps,
                bound: &bound,
                budget: &|_| picard,
            },
            &mut notes,
        )?);
        if c == 0 {
            if let Some(v2) = plan.moment_value(MomentOrder::Finite(2), dim)? {
                let (est, _) = moment_estimate(&gaps, MomentOrder::Finite(2));
                notes.push(format!(
                    "swap_h_marginal_c0: m=2 gap {est:.6} vs eta*V_2 = {:.6} (diagnostic; neighbours feed the swap back)",
                    model.eta() * v2
                ));
            }
        }
    }
    let k = shells.len();
    let filling = column(k);
    let bound = move |v: f64| Ok(swap_filling_h_bound(rho, d, v));
    rows.extend(gap_rows(
        plan,
        dim,
        GapFamily {
            experiment: "swap_h_filling".into(),
            d: Some(d),
            gaps: &filling,
            bound: &bound,
            budget: &|_| picard,
        },
        &mut notes,
    )?);
    let outside_max = column(k + 1).into_iter().fold(0.0, f64::max);
    rows.push(Row {
        experiment: "swap_h_outside".into(),
        d: Some(d),
        m: Some(MomentOrder::Infinite),
        epsilon: None,
        estimate: outside_max,
        stderr: 0.0,
        bound: 0.0,
        threshold: 0.0,
        pass: outside_max == 0.0,
    });

    let v_inf = plan.law.v_infinity(dim).unwrap_or(0.0);
    let params = |v: f64| setup.params(d, v, v_inf);
    let s_marg = column(k + 2);
    let bound = |v: f64| swap_marginal_s_bound(&params(v)?, v);
    rows.extend(gap_rows(
        plan,
        dim,
        GapFamily {
            experiment: "swap_s_marginal".into(),
            d: Some(d),
            gaps: &s_marg,
            bound: &bound,
            budget: &|_| stat_picard,
        },
        &mut notes,
    )?);
    let s_fill = column(k + 3);
    let bound = |v: f64| Ok(swap_filling_s_bound(&params(v)?, v));
    rows.extend(gap_rows(
        plan,
        dim,
        GapFamily {
            experiment: "swap_s_filling".into(),
            d: Some(d),
            gaps: &s_fill,
            bound: &bound,
            budget: &|_| stat_picard,
        },
        &mut notes,
    )?);
    Ok(ExperimentResult {
        name: "swap".into(),
        rows,
        notes,
    })
}

/// `‖S − S̃^[d]‖_m ≤ n n_B̄ ρ^{d+1} V_m`.
pub fn run_stat_approx(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    let setup = plan.setup()?;
    let agg = Aggregate::new(&setup.stat, &setup.model, &setup.index, setup.cfg)?;
    let region = agg.noise_region();
    let dim = setup.model.dim();
    let depths = &plan.stat_depths;
    let per_rep = plan.backend.try_map(plan.replicates_for(ExperimentKind::StatApprox), |r| {
        let src = plan.source("stat_approx", r, dim)?;
        let cache = NoiseCache::new(&src, region.clone());
        let reference = agg.s_tilde(&cache, setup.reference_depth)?;
        depths
            .iter()
            .map(|&d| Ok((reference - agg.s_tilde(&cache, d)?).abs()))
            .collect::<Result<Vec<f64>>>()
    })?;
    let v_inf = plan.law.v_infinity(dim).unwrap_or(0.0);
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (k, &d) in depths.iter().enumerate() {
        let gaps: Vec<f64> = per_rep.iter().map(|g| g[k]).collect();
        let bound = |v: f64| Ok(approx_error_bound(&setup.params(d, v, v_inf)?, false).value);
        let budget = |v: f64| {
            setup.n_terms() * site_approx_bound(setup.model.rho(), setup.reference_depth, v)
                + 2.0 * setup.n_terms() * setup.picard_error
        };
        rows.extend(gap_rows(
            plan,
            dim,
            GapFamily {
                experiment: "stat_approx".into(),
                d: Some(d),
                gaps: &gaps,
                bound: &bound,
                budget: &budget,
            },
            &mut notes,
        )?);
    }
    Ok(ExperimentResult {
        name: "stat_approx".into(),
        rows,
        notes,
    })
}

/// Empirical CCDF at `ε − 3·SE(mean)`, with its binomial standard error.
fn ccdf(devs: &[f64], at: f64) -> (f64, f64) {
    let n = devs.len() as f64;
    let p = devs.iter().filter(|&&x| x >= at).count() as f64 / n;
    (p, (p * (1.0 - p) / n).sqrt())
}

/// ε grid: quantiles of the deviations at tail probabilities from 1/2 down
/// to 10/R, plus 1.5 times the largest deviation.
fn epsilon_grid(sorted_devs: &[f64], points: usize) -> Vec<f64> {
    let r = sorted_devs.len() as f64;
    let lo = 10.0 / r;
    let mut grid: Vec<f64> = (0..points)
        .map(|k| {
            let t = if points == 1 { 0.0 } else { k as f64 / (points - 1) as f64 };
            let p = 0.5 * (lo / 0.5).powf(t);
            quantile_sorted(sorted_devs, 1.0 - p)
        })
        .chain(std::iter::once(1.5 * sorted_devs[sorted_devs.len() - 1]))
        .filter(|&e| e > 0.0)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.is_empty() {
        grid.push(1.0);
    }
    grid
}

/// McDiarmid bounds for `S̃^[d]` and `S` against empirical tail frequencies.
pub fn run_deviation(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    let setup = plan.setup()?;
    let dim = setup.model.dim();
    let v_inf = plan.law.v_infinity(dim).ok_or_else(|| {
        Error::Unsupported("deviation bounds need a bounded innovation law (V_inf < inf)".into())
    })?;
    let replicates = plan.replicates_for(ExperimentKind::Deviation);
    if replicates < 20 {
        return Err(Error::InsufficientReplicates {
            replicates,
            probability: 0.5,
            required: 20,
        });
    }
    let d = plan.deviation_depth;
    let agg = Aggregate::new(&setup.stat, &setup.model, &setup.index, setup.cfg)?;
    let region = agg.noise_region();
    let pairs = plan.backend.try_map(replicates, |r| {
        let src = plan.source("deviation", r, dim)?;
        let cache = NoiseCache::new(&src, region.clone());
        Ok((agg.s_tilde(&cache, d)?, agg.s_tilde(&cache, setup.reference_depth)?))
    })?;
    let params = setup.params(d, v_inf, v_inf)?;
    let mut rows = Vec::new();
    let mut notes = Vec::new();

    let mut family = |name: &str, values: Vec<f64>, shift: f64| -> Result<()> {
        let s = Summary::from_values(&values);
        let mut devs: Vec<f64> = values.iter().map(|x| (x - s.mean).abs()).collect();
        devs.sort_by(f64::total_cmp);
        let grid = epsilon_grid(&devs, plan.epsilon_points);
        notes.push(format!(
            "{name}: mean {:.6e} (se {:.3e}), max deviation {:.6e}",
            s.mean,
            s.stderr,
            devs[devs.len() - 1]
        ));
        for g in grid {
            let eps = shift + g;
            let (p, se) = ccdf(&devs, eps - shift - 3.0 * s.stderr);
            let bound = if name == "deviation_tilde" {
                deviation_bound_tilde(eps, &params)?.value
            } else {
                deviation_bound_s(eps, &params)?.value
            };
            let threshold = bound + 3.0 * se;
            rows.push(Row {
                experiment: name.into(),
                d: Some(d),
                m: None,
                epsilon: Some(eps),
                estimate: p,
                stderr: se,
                bound,
                threshold,
                pass: p <= threshold,
            });
        }
        Ok(())
    };
    family("deviation_tilde", pairs.iter().map(|p| p.0).collect(), 0.0)?;
    let shift = deviation_threshold(&params);
    family("deviation_s", pairs.iter().map(|p| p.1).collect(), shift)?;
    notes.push(format!("deviation_s: validity threshold 2 n n_B' rho^(d+1) V_inf = {shift:.6e}"));
    Ok(ExperimentResult {
        name: "deviation".into(),
        rows,
        notes,
    })
}

/// All requested experiments of one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub plan: String,
    pub results: Vec<ExperimentResult>,
    /// Experiments that could not run, with the reason.
    pub skipped: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn pass(&self) -> bool {
        self.results.iter().all(ExperimentResult::pass)
    }

    pub fn rows(&self) -> impl Iterator<Item = &Row> {
        self.results.iter().flat_map(|r| r.rows.iter())
    }
}

pub fn run_experiment(plan: &ExperimentPlan, kind: ExperimentKind) -> Result<ExperimentResult> {
    match kind {
        ExperimentKind::Moments => run_moments(plan),
        ExperimentKind::ApproxDecay => run_approx_decay(plan),
        ExperimentKind::Swap => run_swap_sensitivity(plan),
        ExperimentKind::StatApprox => run_stat_approx(plan),
        ExperimentKind::Deviation => run_deviation(plan),
    }
}

pub fn run_all(plan: &ExperimentPlan) -> Result<RunReport> {
    plan.setup()?;
    let mut report = RunReport {
        plan: plan.name.clone(),
        results: Vec::new(),
        skipped: Vec::new(),
        warnings: Vec::new(),
    };
    let mut kinds = plan.experiments.clone();
    kinds.sort();
    kinds.dedup();
    for kind in kinds {
        if kind != ExperimentKind::Moments {
            let r = plan.replicates_for(kind);
            if r < 30 {
                report.warnings.push(format!(
                    "{}: R = {r} < 30, standard errors are not statistically meaningful",
                    kind.name()
                ));
            }
        }
        match run_experiment(plan, kind) {
            Ok(result) => report.results.push(result),
            Err(e @ (Error::Unsupported(_) | Error::InsufficientReplicates { .. })) => {
                report.skipped.push((kind.name().into(), e.to_string()))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

pub const CSV_HEADER: &str = "experiment,d,m,epsilon,estimate,stderr,bound,threshold,pass";

/// 17 significant digits.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_line(row: &Row, prefix: Option<&str>) -> String {
    let name = match prefix {
        Some(p) => format!("{p}/{}", row.experiment),
        None => row.experiment.clone(),
    };
    format!(
        "{name},{},{},{},{},{},{},{},{}",
        row.d.map(|d| d.to_string()).unwrap_or_default(),
        row.m.map(|m| m.to_string()).unwrap_or_default(),
        row.epsilon.map(format_number).unwrap_or_default(),
        format_number(row.estimate),
        format_number(row.stderr),
        format_number(row.bound),
        format_number(row.threshold),
        row.pass
    )
}

/// Header plus one line per row, LF endings.
pub fn write_csv<'a, W: Write>(
    out: &mut W,
    rows: impl IntoIterator<Item = (&'a Row, Option<&'a str>)>,
) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for (row, prefix) in rows {
        writeln!(out, "{}", csv_line(row, prefix))?;
    }
    Ok(())
}
