//! Innovation fields ξ = (ε_t) addressed by lattice coordinate.
//!
//! Every value is a pure function of `(seed, stream, coordinate)`: the
//! coordinate key is hashed into a fresh generator, so fields are random
//! access and evaluation order never matters. Three independent streams
//! exist per seed:
//!
//! * the marginals `ε_t`,
//! * one filling variable `ε̄ˢ` per truncation site `s`,
//! * independent copies used when a single variable is swapped.
//!
//! On top of the streams, [`FieldView`] realises the exact field, the
//! truncated field `ξ̃ₛ^[d]` and the single-swap field `ξ̃ₛ^[d,i]`.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution as _, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::lattice::{union_points, Coord, GridBox, Orthotope};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const KEY_SALT: u64 = 0x6E63_665F_6B65_7973;
const SPLIT_SALT: u64 = 0x6E63_665F_7370_6C74;

const STREAM_EPSILON: u64 = 1;
const STREAM_FILLING: u64 = 2;
const STREAM_SWAP_MARGINAL: u64 = 3;
const STREAM_SWAP_FILLING: u64 = 4;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn absorb(h: u64, x: u64) -> u64 {
    mix64(h.rotate_left(23) ^ mix64(x.wrapping_add(GOLDEN)))
}

fn coordinate_key(seed: u64, stream: u64, t: &[i64]) -> u64 {
    let mut h = absorb(mix64(seed ^ KEY_SALT), stream);
    h = absorb(h, t.len() as u64);
    for &c in t {
        h = absorb(h, c as u64);
    }
    h
}

/// Stable 64-bit identifier for a named experiment stream.
pub fn stream_id(name: &str) -> u64 {
    // FNV-1a, then a finaliser
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    mix64(h)
}

/// Seed of replicate `replicate` of experiment `experiment` under `root`.
///
/// Re-running one replicate in isolation reproduces it exactly.
pub fn split_seed(root: u64, experiment: u64, replicate: u64) -> u64 {
    absorb(absorb(mix64(root ^ SPLIT_SALT), experiment), replicate)
}

/// Order of an m-norm, possibly `m = ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentOrder {
    Finite(u32),
    Infinite,
}

impl MomentOrder {
    pub fn finite(self) -> Option<u32> {
        match self {
            MomentOrder::Finite(m) => Some(m),
            MomentOrder::Infinite => None,
        }
    }
}

impl std::fmt::Display for MomentOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MomentOrder::Finite(m) => write!(f, "{m}"),
            MomentOrder::Infinite => f.write_str("inf"),
        }
    }
}

/// Marginal law μ_ε of one innovation component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnovationLaw {
    Gaussian { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    /// Gaussian conditioned on `|ε − mean| ≤ clip·sd`.
    TruncatedGaussian { mean: f64, sd: f64, clip: f64 },
}

impl InnovationLaw {
    pub fn standard_gaussian() -> Self {
        InnovationLaw::Gaussian { mean: 0.0, sd: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            InnovationLaw::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            InnovationLaw::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            InnovationLaw::TruncatedGaussian { mean, sd, clip } => {
                mean.is_finite() && sd.is_finite() && sd >= 0.0 && clip.is_finite() && clip > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid innovation law {self:?}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            InnovationLaw::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            InnovationLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            InnovationLaw::TruncatedGaussian { mean, sd, clip } => loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= clip {
                    break mean + sd * z;
                }
            },
        }
    }

    /// `V_∞ = sup_m ‖ε − ε′‖_m` (the essential sup of `|ε − ε′|`).
    /// `None` for the unbounded Gaussian, whose m-norms grow without bound.
    pub fn v_infinity(&self, dim: usize) -> Option<f64> {
        let scale = (dim as f64).sqrt();
        match *self {
            InnovationLaw::Gaussian { sd: 0.0, .. } => Some(0.0),
            InnovationLaw::Gaussian { .. } => None,
            InnovationLaw::Uniform { low, high } => Some((high - low) * scale),
            InnovationLaw::TruncatedGaussian { sd, clip, .. } => Some(2.0 * clip * sd * scale),
        }
    }

    /// Closed form (or deterministic quadrature) for `V_m = ‖ε − ε′‖_m`
    /// with the Euclidean norm on `dim` i.i.d. components.
    ///
    /// Gaussian: `ε − ε′ ~ N(0, 2σ² I)`, so `E‖D‖^m = (2σ²)^{m/2} 2^{m/2}
    /// Γ((p+m)/2)/Γ(p/2)`. Uniform (scalar): `E|D|^m = 2w^m/((m+1)(m+2))`.
    pub fn v_m(&self, m: MomentOrder, dim: usize) -> Option<f64> {
        let m = match m {
            MomentOrder::Finite(m) => m as f64,
            MomentOrder::Infinite => return self.v_infinity(dim),
        };
        let p = dim as f64;
        match *self {
            InnovationLaw::Gaussian { sd, .. } => {
                if sd == 0.0 {
                    return Some(0.0);
                }
                let log_moment = ln_gamma((p + m) / 2.0) - ln_gamma(p / 2.0);
                Some(sd * 2f64.sqrt() * 2f64.sqrt() * (log_moment / m).exp())
            }
            InnovationLaw::Uniform { low, high } if dim == 1 => {
                let w = high - low;
                Some(w * (2.0 / ((m + 1.0) * (m + 2.0))).powf(1.0 / m))
            }
            InnovationLaw::TruncatedGaussian { sd, clip, .. } if dim == 1 => {
                Some(sd * truncated_abs_diff_moment(clip, m).powf(1.0 / m))
            }
            _ => None,
        }
    }
}

/// `E|X − Y|^m` for i.i.d. standard normals truncated to `[−c, c]`, by
/// composite Simpson quadrature on the square.
fn truncated_abs_diff_moment(c: f64, m: f64) -> f64 {
    const N: usize = 600;
    let h = 2.0 * c / N as f64;
    let weight = |i: usize| -> f64 {
        if i == 0 || i == N {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let xs: Vec<f64> = (0..=N).map(|i| -c + i as f64 * h).collect();
    let dens: Vec<f64> = xs.iter().map(|x| (-0.5 * x * x).exp() * weight(0)).collect();
    let mut num = 0.0;
    let mut mass = 0.0;
    for i in 0..=N {
        let wi = weight(i) * dens[i];
        mass += wi;
        let mut row = 0.0;
        for j in 0..=N {
            row += weight(j) * dens[j] * (xs[i] - xs[j]).abs().powf(m);
        }
        num += wi * row;
    }
    num / (mass * mass)
}

/// Deterministic, seed-addressable innovation field with values in ℝ^dim.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationSource {
    seed: u64,
    law: InnovationLaw,
    dim: usize,
}

impl InnovationSource {
    pub fn new(seed: u64, law: InnovationLaw, dim: usize) -> Result<Self> {
        law.validate()?;
        if dim == 0 {
            return Err(Error::Dimension("innovation dimension must be >= 1".into()));
        }
        Ok(Self { seed, law, dim })
    }

    pub fn scalar(seed: u64, law: InnovationLaw) -> Result<Self> {
        Self::new(seed, law, 1)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn law(&self) -> &InnovationLaw {
        &self.law
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    fn draw(&self, stream: u64, t: &[i64], out: &mut [f64]) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(coordinate_key(self.seed, stream, t));
        for v in out.iter_mut() {
            *v = self.law.sample(&mut rng);
        }
    }

    /// `ε_t` as an owned vector.
    pub fn epsilon_at(&self, t: &[i64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.draw(STREAM_EPSILON, t, &mut out);
        out
    }
}

/// A random-access innovation realisation: marginals, fillings, swap copies.
pub trait NoiseField: Sync {
    fn dim(&self) -> usize;
    fn epsilon_into(&self, t: &[i64], out: &mut [f64]);
    fn filling_into(&self, site: &[i64], out: &mut [f64]);
    fn copy_into(&self, var: &SwapVar, out: &mut [f64]);
}

impl NoiseField for InnovationSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn epsilon_into(&self, t: &[i64], out: &mut [f64]) {
        self.draw(STREAM_EPSILON, t, out);
    }

    fn filling_into(&self, site: &[i64], out: &mut [f64]) {
        self.draw(STREAM_FILLING, site, out);
    }

    fn copy_into(&self, var: &SwapVar, out: &mut [f64]) {
        match var {
            SwapVar::Marginal(t) => self.draw(STREAM_SWAP_MARGINAL, t, out),
            SwapVar::Filling(s) => self.draw(STREAM_SWAP_FILLING, s, out),
        }
    }
}

/// Marginals of a source precomputed on a box; values outside fall back to
/// the source, so the cache never changes a single bit of any view.
#[derive(Debug, Clone)]
pub struct NoiseCache<'a> {
    source: &'a InnovationSource,
    grid: GridBox,
    values: Vec<f64>,
}

impl<'a> NoiseCache<'a> {
    pub fn new(source: &'a InnovationSource, grid: GridBox) -> Self {
        let dim = source.dim;
        let mut values = vec![0.0; grid.len() * dim];
        for (chunk, t) in values.chunks_exact_mut(dim).zip(grid.iter()) {
            source.epsilon_into(&t, chunk);
        }
        Self { source, grid, values }
    }

    pub fn source(&self) -> &InnovationSource {
        self.source
    }
}

impl NoiseField for NoiseCache<'_> {
    fn dim(&self) -> usize {
        self.source.dim
    }

    fn epsilon_into(&self, t: &[i64], out: &mut [f64]) {
        match self.grid.index_of(t) {
            Some(i) => out.copy_from_slice(&self.values[i * out.len()..(i + 1) * out.len()]),
            None => self.source.epsilon_into(t, out),
        }
    }

    fn filling_into(&self, site: &[i64], out: &mut [f64]) {
        self.source.filling_into(site, out);
    }

    fn copy_into(&self, var: &SwapVar, out: &mut [f64]) {
        self.source.copy_into(var, out);
    }
}

/// One random variable of the truncated statistic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SwapVar {
    /// The marginal `ε_t`.
    Marginal(Coord),
    /// The filling `ε̄ˢ` of the truncation centred at `s`.
    Filling(Coord),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViewKind {
    Exact,
    Truncated { site: Coord, depth: u64 },
    Swapped { site: Coord, depth: u64, var: SwapVar },
}

/// A fully specified innovation configuration consumed by the Picard
/// evaluator.
#[derive(Debug, Clone)]
pub struct FieldView<'a, N: NoiseField> {
    noise: &'a N,
    kind: ViewKind,
    truncation: Orthotope,
    filling: Vec<f64>,
    swapped: Vec<f64>,
}

impl<'a, N: NoiseField> FieldView<'a, N> {
    pub fn exact(noise: &'a N, truncation: &Orthotope) -> Self {
        Self {
            noise,
            kind: ViewKind::Exact,
            truncation: truncation.clone(),
            filling: Vec::new(),
            swapped: Vec::new(),
        }
    }

    /// `ξ̃ₛ^[d]`: `ε_t` on `V(d·δ, s)`, the single filling `ε̄ˢ` elsewhere.
    pub fn truncated(noise: &'a N, truncation: &Orthotope, site: &[i64], depth: u64) -> Self {
        let mut filling = vec![0.0; noise.dim()];
        noise.filling_into(site, &mut filling);
        Self {
            noise,
            kind: ViewKind::Truncated {
                site: site.to_vec(),
                depth,
            },
            truncation: truncation.clone(),
            filling,
            swapped: Vec::new(),
        }
    }

    /// `ξ̃ₛ^[d,i]`: the truncated view with variable `var` replaced by its
    /// independent copy.
    pub fn swapped(
        noise: &'a N,
        truncation: &Orthotope,
        site: &[i64],
        depth: u64,
        var: SwapVar,
    ) -> Self {
        let mut view = Self::truncated(noise, truncation, site, depth);
        let mut copy = vec![0.0; noise.dim()];
        noise.copy_into(&var, &mut copy);
        view.swapped = copy;
        view.kind = ViewKind::Swapped {
            site: site.to_vec(),
            depth,
            var,
        };
        view
    }

    pub fn kind(&self) -> &ViewKind {
        &self.kind
    }

    pub fn noise(&self) -> &'a N {
        self.noise
    }

    pub fn dim(&self) -> usize {
        self.noise.dim()
    }

    /// Whether the view is distinguishable from the exact field on `region`.
    /// When it is not, the view's values coincide with [`ViewKind::Exact`].
    pub fn is_exact_on(&self, region: &GridBox) -> bool {
        match &self.kind {
            ViewKind::Exact => true,
            ViewKind::Truncated { site, depth } => {
                let window = self.truncation.region(*depth, site);
                region
                    .lo()
                    .iter()
                    .zip(region.hi())
                    .zip(window.lo().iter().zip(window.hi()))
                    .all(|((a, b), (wa, wb))| wa <= a && b <= wb)
            }
            ViewKind::Swapped { .. } => false,
        }
    }

    pub fn value_into(&self, t: &[i64], out: &mut [f64]) {
        match &self.kind {
            ViewKind::Exact => self.noise.epsilon_into(t, out),
            ViewKind::Truncated { site, depth } => {
                if self.truncation.contains(*depth, site, t) {
                    self.noise.epsilon_into(t, out);
                } else {
                    out.copy_from_slice(&self.filling);
                }
            }
            ViewKind::Swapped { site, depth, var } => {
                let inside = self.truncation.contains(*depth, site, t);
                let hit = match var {
                    SwapVar::Marginal(m) => inside && m.as_slice() == t,
                    SwapVar::Filling(s) => !inside && s == site,
                };
                if hit {
                    out.copy_from_slice(&self.swapped);
                } else if inside {
                    self.noise.epsilon_into(t, out);
                } else {
                    out.copy_from_slice(&self.filling);
                }
            }
        }
    }

    /// Convenience owned form of [`FieldView::value_into`].
    pub fn value(&self, t: &[i64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.value_into(t, &mut out);
        out
    }

    /// Values on every point of `grid`, row-major, `dim` per point.
    pub fn fill_grid(&self, grid: &GridBox, out: &mut Vec<f64>) {
        let dim = self.dim();
        out.clear();
        out.resize(grid.len() * dim, 0.0);
        for (chunk, t) in out.chunks_exact_mut(dim).zip(grid.iter()) {
            self.value_into(&t, chunk);
        }
    }
}

/// Enumeration ψ of the distinct variables in the truncated statistic.
///
/// The statistic evaluates `H(ξ̃_u^[d])` on every `u ∈ U = ⋃_{s∈𝓘} (B̄ + s)`.
/// Those views read the marginals `⋃_{u∈U} V(d·δ, u)` (the set 𝓡, indices
/// `0..marginal_count()`) and one filling per `u` (the remaining indices).
/// Both blocks are in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapEnumeration {
    evaluated_sites: Vec<Coord>,
    vars: Vec<SwapVar>,
    marginal_count: usize,
}

impl SwapEnumeration {
    pub fn build(
        measurement: &[Coord],
        statistic_window: &Orthotope,
        truncation: &Orthotope,
        depth: u64,
    ) -> Self {
        let evaluated_sites = union_points(measurement, statistic_window, 1);
        let marginals = union_points(&evaluated_sites, truncation, depth);
        let marginal_count = marginals.len();
        let vars = marginals
            .into_iter()
            .map(SwapVar::Marginal)
            .chain(evaluated_sites.iter().cloned().map(SwapVar::Filling))
            .collect();
        Self {
            evaluated_sites,
            vars,
            marginal_count,
        }
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn marginal_count(&self) -> usize {
        self.marginal_count
    }

    pub fn filling_count(&self) -> usize {
        self.vars.len() - self.marginal_count
    }

    /// Sites `u` whose fixed point enters the statistic.
    pub fn evaluated_sites(&self) -> &[Coord] {
        &self.evaluated_sites
    }

    pub fn get(&self, index: usize) -> Result<&SwapVar> {
        self.vars.get(index).ok_or(Error::SwapIndex {
            index,
            len: self.vars.len(),
        })
    }

    pub fn is_marginal(&self, index: usize) -> bool {
        index < self.marginal_count
    }

    pub fn index_of(&self, var: &SwapVar) -> Option<usize> {
        match var {
            SwapVar::Marginal(_) => self.vars[..self.marginal_count].binary_search(var).ok(),
            SwapVar::Filling(_) => self.vars[self.marginal_count..]
                .binary_search(var)
                .ok()
                .map(|i| i + self.marginal_count),
        }
    }

    pub fn vars(&self) -> &[SwapVar] {
        &self.vars
    }
}

/// Estimate of `V_m = ‖ε − ε′‖_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile {
    pub order: MomentOrder,
    pub value: f64,
    pub stderr: f64,
    pub closed_form: Option<f64>,
}

/// Monte Carlo `‖ε^a_t − ε^b_t‖_m` over `samples` coordinates, coupling the
/// two sources coordinate by coordinate.
pub fn moment_between(
    a: &InnovationSource,
    b: &InnovationSource,
    m: MomentOrder,
    samples: usize,
) -> Result<MomentProfile> {
    let order = m.finite().ok_or_else(|| {
        Error::Unsupported("V_inf cannot be estimated by Monte Carlo; use the law's closed form".into())
    })?;
    if order == 0 {
        return Err(Error::invalid("moment order must be >= 1"));
    }
    if samples < 2 {
        return Err(Error::invalid("moment estimation needs at least 2 samples"));
    }
    if a.dim != b.dim {
        return Err(Error::Dimension("sources differ in dimension".into()));
    }
    let kappa = 1;
    let mut powers = Vec::with_capacity(samples);
    let (mut x, mut y) = (vec![0.0; a.dim], vec![0.0; a.dim]);
    for i in 0..samples {
        let t = vec![i as i64; kappa];
        a.epsilon_into(&t, &mut x);
        b.epsilon_into(&t, &mut y);
        let gap = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        powers.push(gap.powi(order as i32));
    }
    let stats = crate::montecarlo::Summary::from_values(&powers);
    let (value, stderr) = crate::montecarlo::norm_from_power_mean(stats.mean, stats.stderr, order);
    Ok(MomentProfile {
        order: m,
        value,
        stderr,
        closed_form: a.law.v_m(m, a.dim),
    })
}

/// `V_m` for the law of `src`, by Monte Carlo over independent pairs.
pub fn moment_vm(src: &InnovationSource, m: MomentOrder, samples: usize) -> Result<MomentProfile> {
    let partner = src.with_seed(split_seed(src.seed, stream_id("moment-partner"), 0));
    moment_between(src, &partner, m, samples)
}
