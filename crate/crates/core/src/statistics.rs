//! Lipschitz-separable statistics `Φ` over `B̄`, the aggregate
//! `S_𝓘 = Σ_{s∈𝓘} Φ((H(ξ_{s+t}))_{t∈B̄})`, its truncation `S̃_𝓘^[d]` and the
//! single-swap statistic `S̃_𝓘^[d,i]`.
//!
//! `Φ` reads the first component of vector-valued fields; that projection
//! is 1-Lipschitz for the Euclidean norm, so separability is preserved.

use rand::SeedableRng;
use rand_distr::{Distribution as _, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::innovations::{FieldView, NoiseField, SwapEnumeration, SwapVar};
use crate::lattice::{union_points, Coord, GridBox, IndexSet, Orthotope};
use crate::model::{evaluate_points, picard_evaluate, FieldModel, PicardConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Zero,
    /// Mean of the inputs.
    NeighborMean,
    /// `intercept + Σ wᵢ xᵢ` over the inputs in offset order.
    Linear { weights: Vec<f64>, intercept: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost {
    Absolute,
    /// `r²/2` for `|r| ≤ δ`, `δ(|r| − δ/2)` beyond; `δ`-Lipschitz.
    Huber { delta: f64 },
}

impl Cost {
    fn eval(self, r: f64) -> f64 {
        match self {
            Cost::Absolute => r.abs(),
            Cost::Huber { delta } => {
                if r.abs() <= delta {
                    0.5 * r * r
                } else {
                    delta * (r.abs() - 0.5 * delta)
                }
            }
        }
    }

    fn lipschitz(self) -> f64 {
        match self {
            Cost::Absolute => 1.0,
            Cost::Huber { delta } => delta,
        }
    }
}

/// `c(f̂(neighbors), X_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLoss {
    pub predictor: Predictor,
    pub cost: Cost,
    /// Whether `f̂` also sees `X_s` itself. Off by default.
    pub include_center: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Phi {
    /// `X_s`.
    Center,
    /// `Σ_{t∈B̄} X_{s+t}`.
    Sum,
    /// `max_{t∈B̄} X_{s+t}`.
    Max,
    Constant(f64),
    /// `X_s³`; not Lipschitz, kept as a negative control.
    CenterCubed,
    Risk(PredictionLoss),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableStatistic {
    phi: Phi,
    window: Orthotope,
    offsets: Vec<Coord>,
    center: usize,
    inputs: Vec<usize>,
}

impl SeparableStatistic {
    pub fn new(phi: Phi, window: Orthotope) -> Result<Self> {
        let origin = vec![0; window.kappa()];
        let offsets = window.points(1, &origin);
        let center = offsets.binary_search(&origin).expect("orthotope contains its center");
        let include = matches!(&phi, Phi::Risk(l) if l.include_center);
        let inputs: Vec<usize> = (0..offsets.len()).filter(|&i| include || i != center).collect();
        if let Phi::Risk(loss) = &phi {
            if let Predictor::Linear { weights, intercept } = &loss.predictor {
                if weights.len() != inputs.len() {
                    return Err(Error::Dimension(format!(
                        "predictor has {} weights for {} inputs",
                        weights.len(),
                        inputs.len()
                    )));
                }
                if weights.iter().chain([intercept]).any(|w| !w.is_finite()) {
                    return Err(Error::invalid("predictor weights must be finite"));
                }
            }
            if let Cost::Huber { delta } = loss.cost {
                if !(delta > 0.0 && delta.is_finite()) {
                    return Err(Error::invalid("Huber delta must be > 0"));
                }
            }
            if matches!(loss.predictor, Predictor::NeighborMean) && inputs.is_empty() {
                return Err(Error::invalid("neighbor mean over an empty neighborhood"));
            }
        }
        if let Phi::Constant(c) = phi {
            if !c.is_finite() {
                return Err(Error::invalid("constant statistic must be finite"));
            }
        }
        Ok(Self {
            phi,
            window,
            offsets,
            center,
            inputs,
        })
    }

    pub fn phi(&self) -> &Phi {
        &self.phi
    }

    /// `B̄ = B(δ̄)`.
    pub fn window(&self) -> &Orthotope {
        &self.window
    }

    /// `B̄` offsets in lexicographic order; `Φ` receives values in this order.
    pub fn offsets(&self) -> &[Coord] {
        &self.offsets
    }

    pub fn n_bbar(&self) -> usize {
        self.offsets.len()
    }

    /// Per-offset Lipschitz constants of `Φ` (`∞` when there is none).
    pub fn lipschitz_constants(&self) -> Vec<f64> {
        let n = self.offsets.len();
        let mut l = vec![0.0; n];
        match &self.phi {
            Phi::Center => l[self.center] = 1.0,
            Phi::Sum | Phi::Max => l.iter_mut().for_each(|x| *x = 1.0),
            Phi::Constant(_) => {}
            Phi::CenterCubed => l[self.center] = f64::INFINITY,
            Phi::Risk(loss) => {
                let lc = loss.cost.lipschitz();
                let k = self.inputs.len();
                for (j, &i) in self.inputs.iter().enumerate() {
                    l[i] = lc
                        * match &loss.predictor {
                            Predictor::Zero => 0.0,
                            Predictor::NeighborMean => 1.0 / k as f64,
                            Predictor::Linear { weights, .. } => weights[j].abs(),
                        };
                }
                l[self.center] += lc;
            }
        }
        l
    }

    /// Lipschitz in each coordinate with constant 1.
    pub fn lipschitz_certified(&self) -> bool {
        self.lipschitz_constants().iter().all(|&l| l <= 1.0 + 1e-12)
    }

    /// `Φ` on one neighborhood: `values` holds `dim` numbers per offset.
    pub fn evaluate(&self, values: &[f64], dim: usize) -> f64 {
        let x = |i: usize| values[i * dim];
        match &self.phi {
            Phi::Center => x(self.center),
            Phi::Sum => (0..self.offsets.len()).map(x).sum(),
            Phi::Max => (0..self.offsets.len()).map(x).fold(f64::NEG_INFINITY, f64::max),
            Phi::Constant(c) => *c,
            Phi::CenterCubed => x(self.center).powi(3),
            Phi::Risk(loss) => {
                let prediction = match &loss.predictor {
                    Predictor::Zero => 0.0,
                    Predictor::NeighborMean => {
                        self.inputs.iter().map(|&i| x(i)).sum::<f64>() / self.inputs.len() as f64
                    }
                    Predictor::Linear { weights, intercept } => {
                        let mut acc = *intercept;
                        for (w, &i) in weights.iter().zip(&self.inputs) {
                            acc += w * x(i);
                        }
                        acc
                    }
                };
                loss.cost.eval(prediction - x(self.center))
            }
        }
    }
}

/// Wraps a loss as `Φ = c(f̂(·), X_s)`; `S_𝓘/n` is then the empirical risk.
pub fn make_risk_statistic(loss: PredictionLoss, window: Orthotope) -> Result<SeparableStatistic> {
    SeparableStatistic::new(Phi::Risk(loss), window)
}

/// The statistic over a fixed index set, with the evaluation sites
/// `U = ⋃_{s∈𝓘} (B̄ + s)` resolved once.
#[derive(Debug, Clone)]
pub struct Aggregate<'a> {
    stat: &'a SeparableStatistic,
    model: &'a FieldModel,
    index: &'a IndexSet,
    cfg: PicardConfig,
    sites: Vec<Coord>,
    terms: Vec<usize>,
}

impl<'a> Aggregate<'a> {
    pub fn new(
        stat: &'a SeparableStatistic,
        model: &'a FieldModel,
        index: &'a IndexSet,
        cfg: PicardConfig,
    ) -> Result<Self> {
        let kappa = model.kappa();
        if stat.window.kappa() != kappa || index.kappa() != kappa {
            return Err(Error::Dimension(format!(
                "model is {kappa}-dimensional, statistic window {} and index set {}",
                stat.window.kappa(),
                index.kappa()
            )));
        }
        let sites = union_points(index.points(), &stat.window, 1);
        let mut terms = Vec::with_capacity(index.len() * stat.n_bbar());
        for s in index.points() {
            for o in &stat.offsets {
                let t: Coord = s.iter().zip(o).map(|(a, b)| a + b).collect();
                terms.push(sites.binary_search(&t).expect("site in union"));
            }
        }
        Ok(Self {
            stat,
            model,
            index,
            cfg,
            sites,
            terms,
        })
    }

    pub fn sites(&self) -> &[Coord] {
        &self.sites
    }

    pub fn config(&self) -> &PicardConfig {
        &self.cfg
    }

    pub fn index(&self) -> &IndexSet {
        self.index
    }

    /// Every marginal any evaluation may read.
    pub fn noise_region(&self) -> GridBox {
        let hull = GridBox::hull(self.sites.iter()).expect("non-empty");
        let widths: Vec<i64> = self
            .model
            .neighborhood()
            .delta()
            .iter()
            .map(|&w| w as i64 * self.cfg.sweeps() as i64)
            .collect();
        hull.dilate(&widths)
    }

    pub fn enumeration(&self, depth: u64) -> SwapEnumeration {
        SwapEnumeration::build(self.index.points(), &self.stat.window, self.model.neighborhood(), depth)
    }

    /// `H(ξ̃_u^[depth])` for every `u ∈ U`, `dim` values per site.
    ///
    /// From `depth ≥ T − 1` on, every truncated view is the exact field on
    /// its pyramid, and one shared pyramid gives the same bits.
    pub fn site_values<N: NoiseField>(&self, noise: &N, depth: u64) -> Result<Vec<f64>> {
        let trunc = self.model.neighborhood();
        if depth >= self.cfg.exact_depth() {
            let view = FieldView::exact(noise, trunc);
            return Ok(evaluate_points(self.model, &view, &self.sites, &self.cfg)?.concat());
        }
        let mut out = Vec::with_capacity(self.sites.len() * self.model.dim());
        for u in &self.sites {
            let view = FieldView::truncated(noise, trunc, u, depth);
            out.extend(picard_evaluate(self.model, &view, u, &self.cfg)?);
        }
        Ok(out)
    }

    /// Sites whose truncated view reads `var`.
    pub fn affected_sites(&self, depth: u64, var: &SwapVar) -> Vec<usize> {
        let trunc = self.model.neighborhood();
        match var {
            SwapVar::Marginal(t) => (0..self.sites.len())
                .filter(|&i| trunc.contains(depth, &self.sites[i], t))
                .collect(),
            SwapVar::Filling(s) => self.sites.binary_search(s).into_iter().collect(),
        }
    }

    /// Site values of `S̃^[d,i]` obtained from those of `S̃^[d]` by
    /// re-evaluating only the sites that read `var`.
    pub fn swapped_site_values<N: NoiseField>(
        &self,
        noise: &N,
        depth: u64,
        base: &[f64],
        var: &SwapVar,
    ) -> Result<Vec<f64>> {
        let p = self.model.dim();
        let mut out = base.to_vec();
        for i in self.affected_sites(depth, var) {
            let u = &self.sites[i];
            let view = FieldView::swapped(noise, self.model.neighborhood(), u, depth, var.clone());
            let h = picard_evaluate(self.model, &view, u, &self.cfg)?;
            out[i * p..(i + 1) * p].copy_from_slice(&h);
        }
        Ok(out)
    }

    /// `Σ_{s∈𝓘} Φ(...)` from site values, summed in index order.
    pub fn combine(&self, site_values: &[f64]) -> f64 {
        let p = self.model.dim();
        let nb = self.stat.n_bbar();
        let mut buf = vec![0.0; nb * p];
        let mut total = 0.0;
        for term in self.terms.chunks_exact(nb) {
            for (slot, &i) in term.iter().enumerate() {
                buf[slot * p..(slot + 1) * p].copy_from_slice(&site_values[i * p..(i + 1) * p]);
            }
            total += self.stat.evaluate(&buf, p);
        }
        total
    }

    pub fn s_tilde<N: NoiseField>(&self, noise: &N, depth: u64) -> Result<f64> {
        Ok(self.combine(&self.site_values(noise, depth)?))
    }

    /// `S̃^[d,i]` evaluated from scratch, every site through its swapped view.
    pub fn s_tilde_swapped<N: NoiseField>(&self, noise: &N, depth: u64, index: usize) -> Result<f64> {
        let enumeration = self.enumeration(depth);
        let var = enumeration.get(index)?;
        let mut values = Vec::with_capacity(self.sites.len() * self.model.dim());
        for u in &self.sites {
            let view = FieldView::swapped(noise, self.model.neighborhood(), u, depth, var.clone());
            values.extend(picard_evaluate(self.model, &view, u, &self.cfg)?);
        }
        Ok(self.combine(&values))
    }
}

/// Reference value of `S_𝓘`: the truncation at depth `reference_depth`.
pub fn s_exact<N: NoiseField>(
    stat: &SeparableStatistic,
    model: &FieldModel,
    noise: &N,
    index: &IndexSet,
    reference_depth: u64,
    cfg: &PicardConfig,
) -> Result<f64> {
    Aggregate::new(stat, model, index, *cfg)?.s_tilde(noise, reference_depth)
}

/// `S̃_𝓘^[d]`, each evaluated site using its own truncation.
pub fn s_tilde<N: NoiseField>(
    stat: &SeparableStatistic,
    model: &FieldModel,
    noise: &N,
    index: &IndexSet,
    depth: u64,
    cfg: &PicardConfig,
) -> Result<f64> {
    Aggregate::new(stat, model, index, *cfg)?.s_tilde(noise, depth)
}

/// `S̃_𝓘^[d,i]` for swap index `i` of [`Aggregate::enumeration`].
pub fn s_tilde_swapped<N: NoiseField>(
    stat: &SeparableStatistic,
    model: &FieldModel,
    noise: &N,
    index: &IndexSet,
    depth: u64,
    swap: usize,
    cfg: &PicardConfig,
) -> Result<f64> {
    Aggregate::new(stat, model, index, *cfg)?.s_tilde_swapped(noise, depth, swap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzCheck {
    pub m: u32,
    /// `‖Φ(U) − Φ(V)‖_m` over the sampled pairs.
    pub lhs: f64,
    /// `Σ_t ‖U_t − V_t‖_m` over the same pairs.
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub trials: usize,
    pub checks: Vec<LipschitzCheck>,
    pub pass: bool,
}

/// Samples coupled neighborhoods `U ~ N(0, I)`, `V = U + scale·Z` and checks
/// `‖Φ(U) − Φ(V)‖_m ≤ Σ_t ‖U_t − V_t‖_m` for `m = 1, 2` under the empirical
/// measure. Minkowski holds exactly there, so a separable `Φ` passes up to
/// rounding and any failure is a genuine violation.
pub fn check_lipschitz_separable(
    stat: &SeparableStatistic,
    trials: usize,
    scale: f64,
    seed: u64,
) -> Result<LipschitzReport> {
    if trials < 100 {
        return Err(Error::invalid("Lipschitz check needs at least 100 trials"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid("coupling scale must be > 0"));
    }
    let nb = stat.n_bbar();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut u = vec![0.0; nb];
    let mut v = vec![0.0; nb];
    let mut lhs = [0.0f64; 2];
    let mut coord = vec![[0.0f64; 2]; nb];
    for _ in 0..trials {
        for i in 0..nb {
            let a: f64 = StandardNormal.sample(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            u[i] = a;
            v[i] = a + scale * z;
        }
        let gap = (stat.evaluate(&u, 1) - stat.evaluate(&v, 1)).abs();
        lhs[0] += gap;
        lhs[1] += gap * gap;
        for i in 0..nb {
            let g = (u[i] - v[i]).abs();
            coord[i][0] += g;
            coord[i][1] += g * g;
        }
    }
    let n = trials as f64;
    let checks: Vec<LipschitzCheck> = [1u32, 2]
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let root = |x: f64| (x / n).powf(1.0 / m as f64);
            let l = root(lhs[k]);
            let r: f64 = coord.iter().map(|c| root(c[k])).sum();
            LipschitzCheck {
                m,
                lhs: l,
                rhs: r,
                pass: l <= r * (1.0 + 1e-12) + 1e-300,
            }
        })
        .collect();
    let pass = checks.iter().all(|c| c.pass);
    Ok(LipschitzReport {
        trials,
        checks,
        pass,
    })
}
