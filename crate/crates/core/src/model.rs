//! The functional equation `X_t = F((X_{t+s})_{s∈B}, ε_t)` and its fixed
//! point, evaluated by Banach–Picard iteration on a shrinking pyramid.
//!
//! Sweep `j` of `T` only updates sites within `(T − j)·δ` of the requested
//! window, so the value returned at a site depends on exactly the
//! innovations its dependency cone reaches and on nothing else. Batched
//! windows therefore agree bit for bit with single-site evaluations.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::innovations::{FieldView, InnovationLaw, NoiseField};
use crate::lattice::{Coord, GridBox, Orthotope};

/// Largest number of lattice sites one pyramid level may hold.
const MAX_WINDOW: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// Serializable description of a model. Building it checks the contraction condition.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// `X_t = α₋₁ X_{t−1} + α₁ X_{t+1} + β ε_t` on ℤ.
    Ar {
        alpha_left: f64,
        alpha_right: f64,
        beta: f64,
    },
    /// `X_t = Σ_j a_j X_{t+o_j} + β ε_t` on ℤ^κ.
    Linear {
        offsets: Vec<Coord>,
        coefficients: Vec<f64>,
        beta: f64,
    },
    /// `X_t = f(A 𝒳_t) + β ε_t` with `𝒳_t = (X_{t−k}, …, X_{t−1}, X_{t+1}, …, X_{t+k})`
    /// and `A` a `p × 2kp` matrix stored row-major.
    Brnn {
        k: usize,
        p: usize,
        matrix: Vec<f64>,
        beta: f64,
        activation: Activation,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    /// `ρ = Σ λ_t`.
    pub rho: f64,
    pub eta: f64,
    pub total: f64,
    /// `‖A‖_op` for neural models.
    pub operator_norm: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Rule {
    Linear { coefficients: Vec<f64>, beta: f64 },
    Brnn { matrix: Vec<f64>, beta: f64, activation: Activation },
}

/// A contractive update function `F` with its Lipschitz weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    spec: ModelSpec,
    neighborhood: Orthotope,
    offsets: Vec<Coord>,
    lambda: Vec<f64>,
    eta: f64,
    dim: usize,
    rule: Rule,
}

fn finite_all(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

fn spectral_norm(rows: usize, cols: usize, data: &[f64]) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    DMatrix::from_row_slice(rows, cols, data)
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

fn brnn_offsets(k: usize) -> Vec<Coord> {
    let k = k as i64;
    (-k..0).chain(1..=k).map(|o| vec![o]).collect()
}

fn brnn_blocks(k: usize, p: usize, matrix: &[f64]) -> Vec<f64> {
    let cols = 2 * k * p;
    (0..2 * k)
        .map(|j| {
            let mut block = Vec::with_capacity(p * p);
            for r in 0..p {
                block.extend_from_slice(&matrix[r * cols + j * p..r * cols + (j + 1) * p]);
            }
            spectral_norm(p, p, &block)
        })
        .collect()
}

impl ModelSpec {
    pub fn kappa(&self) -> usize {
        match self {
            ModelSpec::Linear { offsets, .. } => offsets.first().map_or(1, Vec::len),
            _ => 1,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Brnn { p, .. } => *p,
            _ => 1,
        }
    }

    fn validate_shape(&self) -> Result<()> {
        match self {
            ModelSpec::Ar {
                alpha_left,
                alpha_right,
                beta,
            } => {
                if !finite_all(&[*alpha_left, *alpha_right, *beta]) {
                    return Err(Error::invalid("AR coefficients must be finite"));
                }
            }
            ModelSpec::Linear {
                offsets,
                coefficients,
                beta,
            } => {
                if offsets.is_empty() {
                    return Err(Error::invalid("linear model needs at least one offset"));
                }
                if offsets.len() != coefficients.len() {
                    return Err(Error::Dimension(format!(
                        "{} offsets but {} coefficients",
                        offsets.len(),
                        coefficients.len()
                    )));
                }
                let kappa = offsets[0].len();
                if kappa == 0 || offsets.iter().any(|o| o.len() != kappa) {
                    return Err(Error::Dimension("offsets must share one dimension >= 1".into()));
                }
                let mut sorted = offsets.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != offsets.len() {
                    return Err(Error::invalid("duplicate offset in linear model"));
                }
                if !finite_all(coefficients) || !beta.is_finite() {
                    return Err(Error::invalid("linear coefficients must be finite"));
                }
            }
            ModelSpec::Brnn {
                k, p, matrix, beta, ..
            } => {
                if *k == 0 || *p == 0 {
                    return Err(Error::Dimension("BRNN needs k >= 1 and p >= 1".into()));
                }
                if matrix.len() != p * 2 * k * p {
                    return Err(Error::Dimension(format!(
                        "BRNN matrix must be {p} x {} ({} entries), got {}",
                        2 * k * p,
                        p * 2 * k * p,
                        matrix.len()
                    )));
                }
                if !finite_all(matrix) || !beta.is_finite() {
                    return Err(Error::invalid("BRNN parameters must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Contraction check for this specification, without building the model.
    pub fn contraction(&self) -> Result<ContractionReport> {
        self.validate_shape()?;
        let (rho, eta, operator_norm) = match self {
            ModelSpec::Ar {
                alpha_left,
                alpha_right,
                beta,
            } => (alpha_left.abs() + alpha_right.abs(), beta.abs(), None),
            ModelSpec::Linear {
                coefficients, beta, ..
            } => (coefficients.iter().map(|a| a.abs()).sum(), beta.abs(), None),
            ModelSpec::Brnn {
                k, p, matrix, beta, ..
            } => {
                let rho = brnn_blocks(*k, *p, matrix).iter().sum();
                let op = spectral_norm(*p, 2 * k * p, matrix);
                (rho, beta.abs(), Some(op))
            }
        };
        let total = rho + eta;
        let pass = total < 1.0 && operator_norm.is_none_or(|op| op + eta < 1.0);
        Ok(ContractionReport {
            rho,
            eta,
            total,
            operator_norm,
            pass,
        })
    }

    pub fn build(&self) -> Result<FieldModel> {
        let report = self.contraction()?;
        if !report.pass {
            return Err(Error::NonContractive {
                rho: report.rho,
                eta: report.eta,
            });
        }
        let (offsets, lambda, rule) = match self {
            ModelSpec::Ar {
                alpha_left,
                alpha_right,
                beta,
            } => (
                vec![vec![-1], vec![1]],
                vec![alpha_left.abs(), alpha_right.abs()],
                Rule::Linear {
                    coefficients: vec![*alpha_left, *alpha_right],
                    beta: *beta,
                },
            ),
            ModelSpec::Linear {
                offsets,
                coefficients,
                beta,
            } => (
                offsets.clone(),
                coefficients.iter().map(|a| a.abs()).collect(),
                Rule::Linear {
                    coefficients: coefficients.clone(),
                    beta: *beta,
                },
            ),
            ModelSpec::Brnn {
                k,
                p,
                matrix,
                beta,
                activation,
            } => (
                brnn_offsets(*k),
                brnn_blocks(*k, *p, matrix),
                Rule::Brnn {
                    matrix: matrix.clone(),
                    beta: *beta,
                    activation: *activation,
                },
            ),
        };
        let kappa = self.kappa();
        let delta = (0..kappa)
            .map(|a| offsets.iter().map(|o| o[a].unsigned_abs() as u32).max().unwrap_or(0))
            .collect();
        Ok(FieldModel {
            spec: self.clone(),
            neighborhood: Orthotope::new(delta)?,
            offsets,
            lambda,
            eta: report.eta,
            dim: self.dim(),
            rule,
        })
    }
}

/// AR model on ℤ; signed coefficients give `λ = |α|`.
pub fn ar_model(alpha_left: f64, alpha_right: f64, beta: f64) -> Result<FieldModel> {
    ModelSpec::Ar {
        alpha_left,
        alpha_right,
        beta,
    }
    .build()
}

pub fn linear_model(offsets: Vec<Coord>, coefficients: Vec<f64>, beta: f64) -> Result<FieldModel> {
    ModelSpec::Linear {
        offsets,
        coefficients,
        beta,
    }
    .build()
}

/// Bidirectional RNN with window half-width `k` and state dimension `p`.
pub fn brnn_model(
    matrix: Vec<f64>,
    beta: f64,
    activation: Activation,
    k: usize,
    p: usize,
) -> Result<FieldModel> {
    ModelSpec::Brnn {
        k,
        p,
        matrix,
        beta,
        activation,
    }
    .build()
}

/// Contraction report for a specification: pass iff `ρ + η < 1` (and, for the
/// BRNN, `‖A‖_op + β < 1`).
pub fn check_contraction(spec: &ModelSpec) -> Result<ContractionReport> {
    spec.contraction()
}

impl FieldModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// The neighborhood `B = B(δ)` of `F`; also the truncation orthotope.
    pub fn neighborhood(&self) -> &Orthotope {
        &self.neighborhood
    }

    /// Offsets with a non-zero slot in `F`, in the order `F` reads them.
    pub fn offsets(&self) -> &[Coord] {
        &self.offsets
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn rho(&self) -> f64 {
        self.lambda.iter().sum()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn kappa(&self) -> usize {
        self.neighborhood.kappa()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contraction(&self) -> ContractionReport {
        self.spec.contraction().expect("built models have valid shape")
    }

    /// `F(neighbors, ε)`; `neighbors` holds one `dim`-vector per offset.
    #[inline]
    pub fn apply(&self, neighbors: &[f64], eps: &[f64], out: &mut [f64]) {
        let p = self.dim;
        match &self.rule {
            Rule::Linear { coefficients, beta } => {
                for c in 0..p {
                    let mut acc = 0.0;
                    for (j, a) in coefficients.iter().enumerate() {
                        acc += a * neighbors[j * p + c];
                    }
                    out[c] = acc + beta * eps[c];
                }
            }
            Rule::Brnn {
                matrix,
                beta,
                activation,
            } => {
                let cols = neighbors.len();
                for r in 0..p {
                    let row = &matrix[r * cols..(r + 1) * cols];
                    let mut acc = 0.0;
                    for (a, x) in row.iter().zip(neighbors) {
                        acc += a * x;
                    }
                    out[r] = activation.apply(acc) + beta * eps[r];
                }
            }
        }
    }

    /// A bound `C₀` on `sup ‖H‖` for innovations of law `law`, used as the
    /// initial Picard gap from the zero field. Gaussian tails are cut at 8σ.
    pub fn magnitude_bound(&self, law: &InnovationLaw) -> f64 {
        let scale = (self.dim as f64).sqrt();
        let eps = match *law {
            InnovationLaw::Gaussian { mean, sd } => mean.abs() + 8.0 * sd,
            InnovationLaw::Uniform { low, high } => low.abs().max(high.abs()),
            InnovationLaw::TruncatedGaussian { mean, sd, clip } => mean.abs() + clip * sd,
        } * scale;
        let zeros = vec![0.0; self.offsets.len() * self.dim];
        let mut f0 = vec![0.0; self.dim];
        self.apply(&zeros, &vec![0.0; self.dim], &mut f0);
        let f0 = f0.iter().map(|x| x * x).sum::<f64>().sqrt();
        (f0 + self.eta * eps) / (1.0 - self.rho())
    }
}

/// Picard schedule shared by every evaluation of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    /// `K ≥ 1`.
    pub iterations: usize,
    /// Extra sweeps (and window dilations) beyond `K`.
    pub window_margin: usize,
    /// Constant initial field `X⁽⁰⁾`, every component.
    pub init_value: f64,
}

impl PicardConfig {
    pub fn new(iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::invalid("Picard iterations must be >= 1"));
        }
        Ok(Self {
            iterations,
            window_margin: 0,
            init_value: 0.0,
        })
    }

    /// `K = ⌈ln(target/C₀)/ln ρ⌉`, at least 1.
    pub fn for_error_budget(rho: f64, target: f64, initial_gap: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1), got {rho}")));
        }
        if !(target > 0.0) || !(initial_gap >= 0.0) {
            return Err(Error::invalid("error target must be > 0 and initial gap >= 0"));
        }
        if rho == 0.0 || initial_gap <= target {
            return Self::new(1);
        }
        let k = ((target / initial_gap).ln() / rho.ln()).ceil();
        Self::new((k as usize).max(1))
    }

    /// Schedule for `model` driven by `law`, with residual error below `target`.
    pub fn for_model(model: &FieldModel, law: &InnovationLaw, target: f64) -> Result<Self> {
        Self::for_error_budget(model.rho(), target, model.magnitude_bound(law))
    }

    pub fn with_margin(mut self, margin: usize) -> Self {
        self.window_margin = margin;
        self
    }

    pub fn with_init(mut self, init: f64) -> Self {
        self.init_value = init;
        self
    }

    /// Total number of sweeps `T = K + margin`.
    pub fn sweeps(&self) -> usize {
        self.iterations + self.window_margin
    }

    /// Depth from which a truncated view reads only true marginals on the
    /// whole pyramid: `T − 1`.
    pub fn exact_depth(&self) -> u64 {
        self.sweeps().saturating_sub(1) as u64
    }
}

fn level(hull: &GridBox, delta: &[u32], steps: usize) -> GridBox {
    let widths: Vec<i64> = delta.iter().map(|&w| w as i64 * steps as i64).collect();
    hull.dilate(&widths)
}

fn checked_len(grid: &GridBox) -> Result<usize> {
    let mut len: usize = 1;
    for w in grid.shape() {
        len = len
            .checked_mul(w)
            .filter(|&l| l <= MAX_WINDOW)
            .ok_or_else(|| Error::invalid(format!("Picard window exceeds {MAX_WINDOW} sites")))?;
    }
    Ok(len)
}

fn offset_of(grid: &GridBox, t: &[i64]) -> usize {
    let strides = grid.strides();
    t.iter()
        .zip(grid.lo())
        .zip(&strides)
        .map(|((c, lo), s)| (c - lo) as usize * s)
        .sum()
}

/// Runs the pyramid for the hull `hull`; returns values on `hull`
/// (row-major, `dim` per site). `trace` collects the sup-norm residual of
/// every sweep.
fn pyramid<N: NoiseField>(
    model: &FieldModel,
    view: &FieldView<'_, N>,
    hull: &GridBox,
    cfg: &PicardConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Vec<f64>> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("Picard iterations must be >= 1"));
    }
    if view.dim() != model.dim {
        return Err(Error::Dimension(format!(
            "innovations have dimension {} but the model expects {}",
            view.dim(),
            model.dim
        )));
    }
    if hull.kappa() != model.kappa() {
        return Err(Error::Dimension(format!(
            "window is {}-dimensional but the model lives on Z^{}",
            hull.kappa(),
            model.kappa()
        )));
    }
    let p = model.dim;
    let kappa = hull.kappa();
    let delta = model.neighborhood.delta();
    let t_total = cfg.sweeps();

    let mut prev_grid = level(hull, delta, t_total);
    let mut prev = vec![cfg.init_value; checked_len(&prev_grid)? * p];
    let eps_grid = level(hull, delta, t_total - 1);
    checked_len(&eps_grid)?;
    let mut eps = Vec::new();
    view.fill_grid(&eps_grid, &mut eps);
    let eps_strides = eps_grid.strides();

    let mut gather = vec![0.0; model.offsets.len() * p];
    for j in 1..=t_total {
        let grid = level(hull, delta, t_total - j);
        let shape = grid.shape();
        let prev_strides = prev_grid.strides();
        let rel: Vec<isize> = model
            .offsets
            .iter()
            .map(|o| o.iter().zip(&prev_strides).map(|(&c, &s)| c as isize * s as isize).sum())
            .collect();
        let mut next = vec![0.0; grid.len() * p];
        let mut residual: f64 = 0.0;
        let last = shape[kappa - 1];
        let rows = grid.len() / last.max(1);
        let mut row = vec![0usize; kappa - 1];
        let mut out_base = 0;
        for _ in 0..rows {
            let mut prev_base = 0usize;
            let mut eps_base = 0usize;
            for a in 0..kappa {
                let c = grid.lo()[a] + if a + 1 < kappa { row[a] as i64 } else { 0 };
                prev_base += (c - prev_grid.lo()[a]) as usize * prev_strides[a];
                eps_base += (c - eps_grid.lo()[a]) as usize * eps_strides[a];
            }
            for i in 0..last {
                let pi = prev_base + i;
                for (slot, r) in rel.iter().enumerate() {
                    let src = (pi as isize + r) as usize * p;
                    gather[slot * p..(slot + 1) * p].copy_from_slice(&prev[src..src + p]);
                }
                let e = (eps_base + i) * p;
                let o = (out_base + i) * p;
                model.apply(&gather, &eps[e..e + p], &mut next[o..o + p]);
                if trace.is_some() {
                    let gap: f64 = (0..p)
                        .map(|c| (next[o + c] - prev[pi * p + c]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    residual = residual.max(gap);
                }
            }
            out_base += last;
            for a in (0..kappa - 1).rev() {
                row[a] += 1;
                if row[a] < shape[a] {
                    break;
                }
                row[a] = 0;
            }
        }
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { iteration: j });
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(residual);
        }
        prev = next;
        prev_grid = grid;
    }
    Ok(prev)
}

/// `X⁽ᵀ⁾_center`, the Picard approximation of `H(θ_center(view))`.
pub fn picard_evaluate<N: NoiseField>(
    model: &FieldModel,
    view: &FieldView<'_, N>,
    center: &[i64],
    cfg: &PicardConfig,
) -> Result<Vec<f64>> {
    let hull = GridBox::new(center.to_vec(), center.to_vec())?;
    pyramid(model, view, &hull, cfg, None)
}

/// Picard value together with the sup-norm residual
/// `‖X⁽ᵏ⁾ − X⁽ᵏ⁻¹⁾‖∞` of every sweep on its pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardTrace {
    pub value: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl PicardTrace {
    /// Successive residual ratios `r_k / r_{k−1}` while `r_{k−1} > floor`.
    pub fn ratios(&self, floor: f64) -> Vec<f64> {
        self.residuals
            .windows(2)
            .filter(|w| w[0] > floor)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

pub fn picard_trace<N: NoiseField>(
    model: &FieldModel,
    view: &FieldView<'_, N>,
    center: &[i64],
    cfg: &PicardConfig,
) -> Result<PicardTrace> {
    let hull = GridBox::new(center.to_vec(), center.to_vec())?;
    let mut residuals = Vec::with_capacity(cfg.sweeps());
    let value = pyramid(model, view, &hull, cfg, Some(&mut residuals))?;
    Ok(PicardTrace { value, residuals })
}

/// Values at `centers`, in input order, from one shared pyramid over
/// their bounding box.
pub fn evaluate_points<N: NoiseField>(
    model: &FieldModel,
    view: &FieldView<'_, N>,
    centers: &[Coord],
    cfg: &PicardConfig,
) -> Result<Vec<Vec<f64>>> {
    let Some(hull) = GridBox::hull(centers.iter()) else {
        return Ok(Vec::new());
    };
    let p = model.dim;
    let values = pyramid(model, view, &hull, cfg, None)?;
    Ok(centers
        .iter()
        .map(|t| {
            let i = offset_of(&hull, t) * p;
            values[i..i + p].to_vec()
        })
        .collect())
}

/// Batched [`picard_evaluate`]; bit-identical to independent calls.
pub fn evaluate_window<N: NoiseField>(
    model: &FieldModel,
    view: &FieldView<'_, N>,
    window: &[Coord],
    cfg: &PicardConfig,
) -> Result<BTreeMap<Coord, Vec<f64>>> {
    let values = evaluate_points(model, view, window, cfg)?;
    Ok(window.iter().cloned().zip(values).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovations::{InnovationSource, NoiseCache};

    fn src(seed: u64) -> InnovationSource {
        InnovationSource::scalar(seed, InnovationLaw::standard_gaussian()).unwrap()
    }

    fn constant(value: f64) -> InnovationSource {
        InnovationSource::scalar(
            0,
            InnovationLaw::Uniform {
                low: value,
                high: value,
            },
        )
        .unwrap()
    }

    #[test]
    fn contraction_reports() {
        let ok = check_contraction(&ModelSpec::Ar {
            alpha_left: 0.2,
            alpha_right: 0.2,
            beta: 0.3,
        })
        .unwrap();
        assert!(ok.pass);
        assert!((ok.total - 0.7).abs() < 1e-15);
        let bad = check_contraction(&ModelSpec::Ar {
            alpha_left: 0.5,
            alpha_right: 0.5,
            beta: 0.1,
        })
        .unwrap();
        assert!(!bad.pass);
        assert!((bad.total - 1.1).abs() < 1e-12);
        assert!(matches!(ar_model(0.5, 0.5, 0.1), Err(Error::NonContractive { .. })));
        assert!(matches!(ar_model(0.5, 0.0, 0.5), Err(Error::NonContractive { .. })));
    }

    #[test]
    fn brnn_operator_norm() {
        let spec = ModelSpec::Brnn {
            k: 1,
            p: 1,
            matrix: vec![0.3, 0.3],
            beta: 0.3,
            activation: Activation::Tanh,
        };
        let r = spec.contraction().unwrap();
        assert!((r.operator_norm.unwrap() - 0.18f64.sqrt()).abs() < 1e-12);
        assert!((r.rho - 0.6).abs() < 1e-12);
        assert!(r.pass);
        assert!(spec.build().is_ok());
        let wrong = ModelSpec::Brnn {
            k: 1,
            p: 2,
            matrix: vec![0.1; 6],
            beta: 0.1,
            activation: Activation::Tanh,
        };
        assert!(matches!(wrong.build(), Err(Error::Dimension(_))));
    }

    #[test]
    fn pure_noise_model_is_immediate() {
        let m = ar_model(0.0, 0.0, 0.5).unwrap();
        let s = src(3);
        let o = m.neighborhood().clone();
        let v = FieldView::exact(&s, &o);
        let h = picard_evaluate(&m, &v, &[4], &PicardConfig::new(1).unwrap()).unwrap();
        assert_eq!(h[0], 0.5 * s.epsilon_at(&[4])[0]);
    }

    #[test]
    fn constant_innovations_reach_scalar_fixed_point() {
        let m = ar_model(0.2, 0.2, 0.3).unwrap();
        let s = constant(1.0);
        let v = FieldView::exact(&s, m.neighborhood());
        let cfg = PicardConfig::new(40).unwrap();
        let h = picard_evaluate(&m, &v, &[0], &cfg).unwrap();
        assert!((h[0] - 0.5).abs() <= 0.4f64.powi(40));
        let z = constant(0.0);
        let v = FieldView::exact(&z, m.neighborhood());
        assert_eq!(picard_evaluate(&m, &v, &[0], &cfg).unwrap()[0], 0.0);
    }

    #[test]
    fn a_posteriori_banach_bound() {
        let m = ar_model(0.2, 0.2, 0.3).unwrap();
        let s = src(11);
        let v = FieldView::exact(&s, m.neighborhood());
        let k = 12;
        let a = picard_trace(&m, &v, &[0], &PicardConfig::new(k).unwrap()).unwrap();
        let b = picard_evaluate(&m, &v, &[0], &PicardConfig::new(k + 10).unwrap()).unwrap();
        let rho: f64 = 0.4;
        let c = a.residuals[0] / (1.0 - rho);
        assert!((a.value[0] - b[0]).abs() <= rho.powi(k as i32) * c + 1e-15);
    }

    #[test]
    fn residual_ratios_respect_rho() {
        let m = ar_model(0.2, 0.2, 0.3).unwrap();
        for seed in 0..10 {
            let s = src(seed);
            let v = FieldView::exact(&s, m.neighborhood());
            let t = picard_trace(&m, &v, &[0], &PicardConfig::new(20).unwrap()).unwrap();
            for r in t.ratios(1e-12) {
                assert!(r <= 0.4 + 1e-9, "ratio {r}");
            }
        }
    }

    #[test]
    fn identity_brnn_matches_ar() {
        let ar = ar_model(0.25, -0.15, 0.4).unwrap();
        let nn = brnn_model(vec![0.25, -0.15], 0.4, Activation::Identity, 1, 1).unwrap();
        let s = src(5);
        let cfg = PicardConfig::new(15).unwrap();
        let va = FieldView::exact(&s, ar.neighborhood());
        let vb = FieldView::exact(&s, nn.neighborhood());
        for t in -3..3 {
            let a = picard_evaluate(&ar, &va, &[t], &cfg).unwrap();
            let b = picard_evaluate(&nn, &vb, &[t], &cfg).unwrap();
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn zero_matrix_brnn_is_scaled_noise() {
        let nn = brnn_model(vec![0.0; 8], 0.5, Activation::Tanh, 1, 2).unwrap();
        let s = InnovationSource::new(9, InnovationLaw::standard_gaussian(), 2).unwrap();
        let v = FieldView::exact(&s, nn.neighborhood());
        let h = picard_evaluate(&nn, &v, &[2], &PicardConfig::new(3).unwrap()).unwrap();
        let e = s.epsilon_at(&[2]);
        assert_eq!(h, vec![0.5 * e[0], 0.5 * e[1]]);
    }

    #[test]
    fn window_is_bit_identical_to_single_calls() {
        let m = ar_model(0.2, 0.2, 0.3).unwrap();
        let s = src(21);
        let cfg = PicardConfig::new(18).unwrap();
        let v = FieldView::exact(&s, m.neighborhood());
        let window: Vec<Coord> = (0..100).map(|i| vec![i * 3 - 50]).collect();
        let batch = evaluate_window(&m, &v, &window, &cfg).unwrap();
        assert_eq!(batch.len(), 100);
        for t in &window {
            let single = picard_evaluate(&m, &v, t, &cfg).unwrap();
            assert_eq!(batch[t][0].to_bits(), single[0].to_bits());
        }
        assert!(evaluate_window(&m, &v, &[], &cfg).unwrap().is_empty());
        let one = evaluate_window(&m, &v, &[vec![0]], &cfg).unwrap();
        assert_eq!(one[&vec![0]], picard_evaluate(&m, &v, &[0], &cfg).unwrap());
    }

    #[test]
    fn planar_window_matches_single_calls() {
        let m = linear_model(
            vec![vec![-1, 0], vec![1, 0], vec![0, -1], vec![0, 1]],
            vec![0.15, 0.15, 0.1, 0.1],
            0.3,
        )
        .unwrap();
        assert_eq!(m.neighborhood().delta(), &[1, 1]);
        let s = src(2);
        let cache = NoiseCache::new(&s, GridBox::new(vec![-30, -30], vec![30, 30]).unwrap());
        let v = FieldView::exact(&cache, m.neighborhood());
        let cfg = PicardConfig::new(10).unwrap();
        let window = vec![vec![0, 0], vec![2, -1], vec![-3, 4]];
        let batch = evaluate_points(&m, &v, &window, &cfg).unwrap();
        for (t, b) in window.iter().zip(&batch) {
            assert_eq!(&picard_evaluate(&m, &v, t, &cfg).unwrap(), b);
        }
    }

    #[test]
    fn budget_iterations() {
        let cfg = PicardConfig::for_error_budget(0.5, 1e-3, 1.0).unwrap();
        assert_eq!(cfg.iterations, 10);
        assert_eq!(PicardConfig::for_error_budget(0.5, 2.0, 1.0).unwrap().iterations, 1);
        assert!(PicardConfig::new(0).is_err());
        assert_eq!(cfg.with_margin(3).sweeps(), 13);
    }

    #[test]
    fn blow_up_is_reported() {
        let m = ar_model(0.2, 0.2, 0.3).unwrap();
        let s = src(1);
        let v = FieldView::exact(&s, m.neighborhood());
        let cfg = PicardConfig::new(5).unwrap().with_init(f64::INFINITY);
        let err = picard_evaluate(&m, &v, &[0], &cfg);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }
}
