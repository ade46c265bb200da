//! Closed-form bounds: `Υ_{κ,ρ}`, approximation errors, bounded
//! differences and the McDiarmid deviation bounds for `S̃` and `S`.

use crate::error::{Error, Result};
use crate::lattice::{union_count, IndexSet, Orthotope};

fn check_domain(kappa: u32, rho: f64) -> Result<()> {
    if kappa == 0 {
        return Err(Error::invalid("kappa must be >= 1"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `Σ_{i=0}^{κ−1} x^i / i!`
fn exp_partial(kappa: u32, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..kappa {
        term *= x / i as f64;
        sum += term;
    }
    sum
}

/// `((κ−1)/(ln(1/ρ)·e))^{κ−1}` with `0⁰ = 1`: the largest value of
/// `t^{κ−1} ρ^t` over `t ≥ 0`.
fn peak(kappa: u32, ln: f64) -> f64 {
    if kappa == 1 {
        1.0
    } else {
        ((kappa - 1) as f64 / (ln * std::f64::consts::E)).powi(kappa as i32 - 1)
    }
}

/// `⌊(κ−1)/ln(1/ρ)⌋`, the branch point of `Υ`.
pub fn upsilon_branch_point(kappa: u32, rho: f64) -> Result<u64> {
    check_domain(kappa, rho)?;
    Ok(((kappa - 1) as f64 / (1.0 / rho).ln()).floor() as u64)
}

/// `Υ_{κ,ρ}(d)`, which dominates `Σ_{c=1}^{d} c^{κ−1} ρ^c`.
pub fn upsilon(kappa: u32, rho: f64, d: u64) -> Result<f64> {
    let branch = upsilon_branch_point(kappa, rho)?;
    let ln = (1.0 / rho).ln();
    let scale = factorial(kappa - 1) / ln.powi(kappa as i32);
    let tail = |x: u64| rho.powf(x as f64) * exp_partial(kappa, x as f64 * ln);
    Ok(if d < branch {
        scale * (1.0 - tail(d + 1))
    } else if d == branch {
        scale * (1.0 - tail(branch)) + peak(kappa, ln)
    } else {
        scale * (1.0 - tail(d)) + peak(kappa, ln)
    })
}

/// `υ_{κ,ρ} = (κ−1)!/ln(1/ρ)^κ + ((κ−1)/(ln(1/ρ)e))^{κ−1}`, a bound on
/// `Υ_{κ,ρ}(d)` uniform in `d`.
pub fn upsilon_sup(kappa: u32, rho: f64) -> Result<f64> {
    check_domain(kappa, rho)?;
    let ln = (1.0 / rho).ln();
    Ok(factorial(kappa - 1) / ln.powi(kappa as i32) + peak(kappa, ln))
}

/// Brute-force `Σ_{c=1}^{d} c^{κ−1} ρ^c`.
pub fn shell_sum(kappa: u32, rho: f64, d: u64) -> f64 {
    (1..=d).map(|c| (c as f64).powi(kappa as i32 - 1) * rho.powf(c as f64)).sum()
}

/// `I_p = ∫_a^b t^p ρ^t dt` in closed form.
pub fn incomplete_integral(p: u32, rho: f64, a: f64, b: f64) -> Result<f64> {
    check_domain(1, rho)?;
    let ln = (1.0 / rho).ln();
    let term = |x: f64| -> f64 {
        // Σ_{i=0}^{p} x^i ρ^x ln^i / i!
        rho.powf(x) * exp_partial(p + 1, x * ln)
    };
    Ok(factorial(p) / ln.powi(p as i32 + 1) * (term(a) - term(b)))
}

/// Symbols shared by every bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    /// `n = card(𝓘)`.
    pub n: u64,
    /// `n_B = card(B)`.
    pub n_b: u64,
    /// `n_B̄ = card(B̄)`.
    pub n_bbar: u64,
    /// `n_d = card(V(dδ))`.
    pub n_d: u64,
    pub n1: u64,
    pub n2: u64,
    pub kappa: u32,
    pub rho: f64,
    pub v_m: f64,
    pub v_inf: f64,
    pub d: u64,
}

impl BoundParams {
    /// Counts derived from the geometry: `N₁ = card ⋃ V(δ̄, t)` and
    /// `N₂ = card ⋃ V(dδ̄, t)` over `t ∈ 𝓘`.
    pub fn from_geometry(
        index: &IndexSet,
        model: &Orthotope,
        statistic: &Orthotope,
        rho: f64,
        v_m: f64,
        v_inf: f64,
        d: u64,
    ) -> Result<Self> {
        let p = Self {
            n: index.len() as u64,
            n_b: model.cardinality(1)?,
            n_bbar: statistic.cardinality(1)?,
            n_d: model.cardinality(d)?,
            n1: union_count(index, statistic, 1),
            n2: union_count(index, statistic, d),
            kappa: model.kappa() as u32,
            rho,
            v_m,
            v_inf,
            d,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_depth(&self, d: u64) -> Self {
        Self { d, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        check_domain(self.kappa, self.rho)?;
        if [self.n, self.n_b, self.n_bbar, self.n_d, self.n1, self.n2].contains(&0) {
            return Err(Error::invalid("all counts must be >= 1"));
        }
        if self.n > self.n1 {
            return Err(Error::invalid("need n <= N1"));
        }
        if !(self.v_m >= 0.0 && self.v_inf >= 0.0) {
            return Err(Error::invalid("moments must be >= 0"));
        }
        Ok(())
    }

    fn tail(&self) -> f64 {
        self.rho.powf(self.d as f64 + 1.0)
    }
}

/// One evaluated bound with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub quantity: &'static str,
    /// The formula as printed.
    pub value: f64,
    /// `min(value, 1)` for probabilities.
    pub clamped: Option<f64>,
    pub epsilon: Option<f64>,
    /// Validity threshold on `ε`, when the bound has one.
    pub threshold: Option<f64>,
    pub valid: bool,
    pub params: BoundParams,
}

impl BoundReport {
    fn plain(quantity: &'static str, value: f64, params: &BoundParams) -> Self {
        Self {
            quantity,
            value,
            clamped: None,
            epsilon: None,
            threshold: None,
            valid: true,
            params: *params,
        }
    }

    fn probability(quantity: &'static str, value: f64, epsilon: f64, params: &BoundParams) -> Self {
        Self {
            clamped: Some(value.min(1.0)),
            epsilon: Some(epsilon),
            ..Self::plain(quantity, value, params)
        }
    }
}

/// `‖H(ξ_t) − H(ξ̃_t^[d])‖_m ≤ ρ^{d+1} V_m`.
pub fn site_approx_bound(rho: f64, d: u64, v: f64) -> f64 {
    rho.powf(d as f64 + 1.0) * v
}

/// `‖S − S̃^[d]‖_m ≤ n n_B̄ ρ^{d+1} V_m`; with `almost_sure` the `V_∞` form.
pub fn approx_error_bound(params: &BoundParams, almost_sure: bool) -> BoundReport {
    let v = if almost_sure { params.v_inf } else { params.v_m };
    let value = params.n as f64 * params.n_bbar as f64 * params.tail() * v;
    let name = if almost_sure { "approx_error_as" } else { "approx_error" };
    BoundReport::plain(name, value, params)
}

/// Swap of a marginal in shell `c` of the site: `ρ^c V`.
pub fn swap_marginal_h_bound(rho: f64, c: u64, v: f64) -> f64 {
    rho.powf(c as f64) * v
}

/// Swap of the site's own filling: `ρ^{d+1} V`.
pub fn swap_filling_h_bound(rho: f64, d: u64, v: f64) -> f64 {
    site_approx_bound(rho, d, v)
}

/// `|S̃^[d,i] − S̃^[d]| ≤ n_B̄² ρ^{d+1} V` for a filling variable `i`.
pub fn swap_filling_s_bound(params: &BoundParams, v: f64) -> f64 {
    (params.n_bbar as f64).powi(2) * params.tail() * v
}

/// `|S̃^[d,i] − S̃^[d]| ≤ n_B̄ n_B κ V Υ_{κ,ρ}(d)` for a marginal `i`.
pub fn swap_marginal_s_bound(params: &BoundParams, v: f64) -> Result<f64> {
    Ok(params.n_bbar as f64
        * params.n_b as f64
        * params.kappa as f64
        * v
        * upsilon(params.kappa, params.rho, params.d)?)
}

fn deviation_denominator(params: &BoundParams) -> Result<f64> {
    let nbar = params.n_bbar as f64;
    let filling = params.n1 as f64 * (nbar * params.tail()).powi(2);
    let marginal = params.n2 as f64
        * (params.n_b as f64 * params.kappa as f64 * upsilon(params.kappa, params.rho, params.d)?)
            .powi(2);
    Ok((nbar * params.v_inf).powi(2) * (filling + marginal))
}

fn gaussian_tail(eps: f64, denominator: f64) -> f64 {
    if denominator == 0.0 {
        return if eps == 0.0 { 2.0 } else { 0.0 };
    }
    2.0 * (-2.0 * eps * eps / denominator).exp()
}

/// `P(|S̃ − E S̃| ≥ ε) ≤ 2 exp(−2ε² / ((n_B̄V∞)² (N₁(n_B̄ρ^{d+1})² + N₂(n_B κ Υ)²)))`.
pub fn deviation_bound_tilde(epsilon: f64, params: &BoundParams) -> Result<BoundReport> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    params.validate()?;
    let value = gaussian_tail(epsilon, deviation_denominator(params)?);
    Ok(BoundReport::probability("deviation_tilde", value, epsilon, params))
}

/// `2 n n_B̄ ρ^{d+1} V∞`, below which the bound for `S` says nothing.
pub fn deviation_threshold(params: &BoundParams) -> f64 {
    2.0 * params.n as f64 * params.n_bbar as f64 * params.tail() * params.v_inf
}

/// The tilde bound at `ε − 2 n n_B̄ ρ^{d+1} V∞`; `valid` is false below the
/// threshold, where the shifted formula is still reported.
pub fn deviation_bound_s(epsilon: f64, params: &BoundParams) -> Result<BoundReport> {
    params.validate()?;
    let threshold = deviation_threshold(params);
    let shifted = epsilon - threshold;
    let value = gaussian_tail(shifted, deviation_denominator(params)?);
    Ok(BoundReport {
        threshold: Some(threshold),
        valid: epsilon >= threshold,
        ..BoundReport::probability("deviation_s", value, epsilon, params)
    })
}

/// Bound on `P(|S − E S|/n ≥ ε)` with `N₂ ≤ N₁ n_d` and `n_d ≤ d^κ n_B`.
pub fn normalized_bound(epsilon: f64, params: &BoundParams) -> Result<BoundReport> {
    params.validate()?;
    let n = params.n as f64;
    let nbar = params.n_bbar as f64;
    let kappa = params.kappa as f64;
    let threshold = 2.0 * nbar * params.tail() * params.v_inf / n;
    let shifted = epsilon - threshold;
    let ups = upsilon(params.kappa, params.rho, params.d)?;
    let denominator = (nbar * params.v_inf).powi(2)
        * params.n1 as f64
        * ((nbar * params.tail()).powi(2)
            + (params.d as f64).powf(kappa) * (params.n_b as f64).powi(3) * (kappa * ups).powi(2));
    let value = gaussian_tail(n * shifted, denominator);
    Ok(BoundReport {
        threshold: Some(threshold),
        valid: epsilon >= threshold,
        ..BoundReport::probability("normalized", value, epsilon, params)
    })
}

/// `d = ⌈ln(n)^{1/κ}⌉`, with a relative tolerance of 1e-9 before the ceiling
/// so that exact powers such as `n = e⁹, κ = 2` give `3` and not `4`.
pub fn recommend_d(n: f64, kappa: u32) -> Result<u64> {
    if !(n >= 2.0) || kappa == 0 {
        return Err(Error::invalid("recommend_d needs n >= 2 and kappa >= 1"));
    }
    let x = n.ln().powf(1.0 / kappa as f64);
    Ok((x * (1.0 - 1e-9)).ceil().max(1.0) as u64)
}

/// Earlier, coarser form: `2 exp(−2ε²n² / ((N₁ + N₂)(𝓛 n_B̄ V∞)²))` with
/// `𝓛 = min(n, n_B̄ n_d)`, for the normalized statistic. For comparison only.
pub fn legacy_deviation_bound(epsilon: f64, params: &BoundParams) -> Result<BoundReport> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    params.validate()?;
    let n = params.n as f64;
    let l = n.min(params.n_bbar as f64 * params.n_d as f64);
    let denominator =
        (params.n1 + params.n2) as f64 * (l * params.n_bbar as f64 * params.v_inf).powi(2);
    let value = gaussian_tail(epsilon * n, denominator);
    Ok(BoundReport::probability("legacy_deviation", value, epsilon, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn desk() -> BoundParams {
        let idx = IndexSet::interval(0, 64).unwrap();
        let o = Orthotope::new(vec![1]).unwrap();
        BoundParams::from_geometry(&idx, &o, &o, 0.4, 2f64.sqrt(), 6.0, 4).unwrap()
    }

    #[test]
    fn upsilon_examples() {
        let v = upsilon(1, 0.5, 10).unwrap();
        assert_relative_eq!(v, (1.0 - 0.5f64.powi(10)) / 2f64.ln() + 1.0, epsilon = 1e-14);
        assert!((v - 2.4412).abs() < 1e-4);
        assert!(shell_sum(1, 0.5, 10) <= v);
        assert_eq!(upsilon_branch_point(2, 0.3).unwrap(), 0);
        assert!(upsilon(2, 0.3, 5).unwrap() >= shell_sum(2, 0.3, 5));
        assert!((shell_sum(2, 0.3, 5) - 0.60555).abs() < 1e-12);
        assert!(upsilon(3, 0.5, 0).unwrap() >= 0.0);
        assert!(upsilon(1, 1.0, 3).is_err());
        assert!(upsilon(0, 0.5, 3).is_err());
    }

    #[test]
    fn upsilon_sup_examples() {
        assert_relative_eq!(upsilon_sup(1, 0.5).unwrap(), 1.0 / 2f64.ln() + 1.0, epsilon = 1e-14);
        let near_one = upsilon_sup(3, 1.0 - 1e-9).unwrap();
        assert!(near_one.is_finite() && near_one > 1e20);
    }

    #[test]
    fn each_branch_is_reached() {
        // κ = 3, ρ = 0.8: branch point ⌊2/ln 1.25⌋ = 8
        assert_eq!(upsilon_branch_point(3, 0.8).unwrap(), 8);
        for d in [3, 8, 20] {
            assert!(upsilon(3, 0.8, d).unwrap() >= shell_sum(3, 0.8, d));
        }
    }

    #[test]
    fn incomplete_integral_matches_quadrature() {
        for (p, rho, a, b) in [(0, 0.5f64, 0.0, 3.0), (2, 0.7, 1.0, 9.0), (4, 0.3, 0.0, 12.0)] {
            let n = 20_000;
            let h = (b - a) / n as f64;
            let f = |t: f64| t.powi(p as i32) * rho.powf(t);
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let quad = s * h / 3.0;
            assert_relative_eq!(incomplete_integral(p, rho, a, b).unwrap(), quad, max_relative = 1e-9);
        }
    }

    #[test]
    fn approximation_bound_arithmetic() {
        let p = BoundParams {
            n: 100,
            n_bbar: 3,
            d: 4,
            rho: 0.4,
            v_m: 2f64.sqrt(),
            ..desk()
        };
        assert!((approx_error_bound(&p, false).value - 4.344).abs() < 1e-3);
        let zero = BoundParams { n: 1, n1: 3, v_m: 0.0, ..p };
        assert_eq!(approx_error_bound(&zero, false).value, 0.0);
        let mut last = f64::INFINITY;
        for d in 0..50 {
            let v = approx_error_bound(&p.with_depth(d), false).value;
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn deviation_limits_and_monotonicity() {
        let p = desk();
        assert!(deviation_bound_tilde(0.0, &p).is_err());
        let tiny = deviation_bound_tilde(1e-9, &p).unwrap();
        assert!((tiny.value - 2.0).abs() < 1e-9);
        assert_eq!(tiny.clamped, Some(1.0));
        assert!(deviation_bound_tilde(1e6, &p).unwrap().value < 1e-300);
        let a = deviation_bound_tilde(10.0, &p).unwrap().value;
        let b = deviation_bound_tilde(20.0, &p).unwrap().value;
        assert!(b < a);
        let more = BoundParams { n2: p.n2 * 2, ..p };
        assert!(deviation_bound_tilde(10.0, &more).unwrap().value > a);
    }

    #[test]
    fn desk_deviation_independent_arithmetic() {
        let p = desk();
        assert_eq!((p.n, p.n_b, p.n_bbar, p.n1, p.n2, p.n_d), (64, 3, 3, 66, 72, 9));
        let eps = 30.0;
        // written out by hand, κ = 1 so Υ = (1 − ρ⁴)/ln(2.5) + 1
        let ups = (1.0 - 0.4f64.powi(4)) / 2.5f64.ln() + 1.0;
        let den = (3.0f64 * 6.0).powi(2) * (66.0 * (3.0 * 0.4f64.powi(5)).powi(2) + 72.0 * (3.0 * ups).powi(2));
        let expected = 2.0 * (-2.0 * eps * eps / den).exp();
        assert_relative_eq!(deviation_bound_tilde(eps, &p).unwrap().value, expected, max_relative = 1e-13);
    }

    #[test]
    fn deviation_for_s_at_threshold() {
        let p = desk();
        let t = deviation_threshold(&p);
        assert_relative_eq!(t, 2.0 * 64.0 * 3.0 * 0.4f64.powi(5) * 6.0, max_relative = 1e-14);
        let at = deviation_bound_s(t, &p).unwrap();
        assert_eq!(at.value, 2.0);
        assert!(at.valid);
        assert!(!deviation_bound_s(t * 0.5, &p).unwrap().valid);
        assert!(deviation_threshold(&p.with_depth(8)) < t);
    }

    #[test]
    fn recommended_depths() {
        assert_eq!(recommend_d(10f64.exp(), 1).unwrap(), 10);
        assert_eq!(recommend_d(9f64.exp(), 2).unwrap(), 3);
        assert_eq!(recommend_d(100.0, 1).unwrap(), 5);
        assert!(recommend_d(1.0, 1).is_err());
    }

    #[test]
    fn normalized_and_legacy_are_probabilities() {
        let p = desk();
        let d = recommend_d(p.n as f64, 1).unwrap();
        let q = p.with_depth(d);
        let r = normalized_bound(0.5, &q).unwrap();
        assert!(r.value >= 0.0 && r.value <= 2.0);
        assert!(q.rho.powf(d as f64) <= 1.0);
        let l = legacy_deviation_bound(0.5, &q).unwrap();
        assert!(l.value >= 0.0 && l.value <= 2.0);
    }
}
