//! Fast invariant checks shared by `selfcheck` and the acceptance suite.

use ncf_core::bounds::{shell_sum, upsilon_sup};
use ncf_core::innovations::{FieldView, InnovationLaw, InnovationSource, NoiseCache};
use ncf_core::lattice::{union_count, Coord, IndexSet, Orthotope};
use ncf_core::model::{picard_trace, Activation, FieldModel, ModelSpec, PicardConfig};
use ncf_core::statistics::{check_lipschitz_separable, Phi, SeparableStatistic};
use ncf_core::Result;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// `(κ, ρ, d) ↦ Υ_{κ,ρ}(d)`.
pub type UpsilonFn<'a> = &'a dyn Fn(u32, f64, u64) -> Result<f64>;

pub const RHO_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Brute-force shell sums never exceed Υ (slack 1e-12).
pub fn upsilon_dominance(upsilon: UpsilonFn<'_>, d_max: u64) -> bool {
    (1..=3u32).all(|kappa| {
        RHO_GRID.iter().all(|&rho| {
            (0..=d_max).all(|d| match upsilon(kappa, rho, d) {
                Ok(v) => shell_sum(kappa, rho, d) <= v + 1e-12,
                Err(_) => false,
            })
        })
    })
}

/// Υ never exceeds its supremum.
pub fn upsilon_below_sup(upsilon: UpsilonFn<'_>, d_max: u64) -> bool {
    (1..=3u32).all(|kappa| {
        RHO_GRID.iter().all(|&rho| {
            let Ok(sup) = upsilon_sup(kappa, rho) else {
                return false;
            };
            (0..=d_max).all(|d| upsilon(kappa, rho, d).is_ok_and(|v| v <= sup + 1e-12))
        })
    })
}

fn random_orthotope(rng: &mut Xoshiro256PlusPlus, kappa: usize) -> Orthotope {
    Orthotope::new((0..kappa).map(|_| rng.random_range(0..=2)).collect()).expect("valid widths")
}

fn random_index(rng: &mut Xoshiro256PlusPlus, kappa: usize) -> IndexSet {
    let n = rng.random_range(1..=12);
    let mut pts: Vec<Coord> = (0..n)
        .map(|_| (0..kappa).map(|_| rng.random_range(-6..=6)).collect())
        .collect();
    pts.sort();
    pts.dedup();
    IndexSet::new(pts).expect("non-empty")
}

/// Product formula against enumeration, shell sizes against `n_B κ c^{κ−1}`.
pub fn dilation_and_shells(cases: usize, seed: u64) -> bool {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..cases).all(|i| {
        let kappa = 1 + i % 3;
        let o = random_orthotope(&mut rng, kappa);
        let center: Coord = (0..kappa).map(|_| rng.random_range(-3..=3)).collect();
        let n_b = o.cardinality(1).expect("small");
        let max_c = if kappa == 3 { 6 } else { 12 };
        (0..=max_c).all(|d| o.cardinality(d).ok() == Some(o.points(d, &center).len() as u64))
            && (1..=max_c).all(|c| {
                let shell = o.shell_points(c, &center).len() as f64;
                shell <= n_b as f64 * kappa as f64 * (c as f64).powi(kappa as i32 - 1)
            })
    })
}

/// `n ≤ N₁ ≤ n·n_B̄` and `N₁ ≤ N₂ ≤ N₁·n_d` on random index sets.
pub fn union_chain(cases: usize, seed: u64) -> bool {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..cases).all(|i| {
        let kappa = 1 + i % 3;
        let o = random_orthotope(&mut rng, kappa);
        let index = random_index(&mut rng, kappa);
        let d = rng.random_range(1..=4u64);
        let n = index.len() as u64;
        let n_bbar = o.cardinality(1).expect("small");
        let n_d = o.cardinality(d).expect("small");
        let n1 = union_count(&index, &o, 1);
        let n2 = union_count(&index, &o, d);
        n <= n1 && n1 <= n * n_bbar && n1 <= n2 && n2 <= n1 * n_d
    })
}

/// The desk BRNN: `k = 1`, `p = 2`, `β = 0.3`, tanh.
pub fn desk_brnn() -> ModelSpec {
    ModelSpec::Brnn {
        k: 1,
        p: 2,
        matrix: vec![0.2, -0.1, 0.15, 0.05, 0.05, 0.2, -0.1, 0.15],
        beta: 0.3,
        activation: Activation::Tanh,
    }
}

pub fn desk_ar() -> ModelSpec {
    ModelSpec::Ar {
        alpha_left: 0.2,
        alpha_right: 0.2,
        beta: 0.3,
    }
}

/// Largest successive-residual ratio minus `ρ` over `runs` seeded runs;
/// residuals below `1e-13` are ignored.
pub fn picard_ratio_excess(spec: &ModelSpec, runs: usize, iterations: usize) -> Result<f64> {
    let model: FieldModel = spec.build()?;
    let cfg = PicardConfig::new(iterations)?;
    let law = InnovationLaw::standard_gaussian();
    let origin = vec![0i64; model.kappa()];
    let region = model.neighborhood().region(cfg.sweeps() as u64, &origin);
    let mut worst = f64::NEG_INFINITY;
    for r in 0..runs {
        let src = InnovationSource::new(r as u64, law, model.dim())?;
        let cache = NoiseCache::new(&src, region.clone());
        let view = FieldView::exact(&cache, model.neighborhood());
        let trace = picard_trace(&model, &view, &origin, &cfg)?;
        for q in trace.ratios(1e-13) {
            worst = worst.max(q - model.rho());
        }
    }
    Ok(worst)
}

pub fn picard_converges(spec: &ModelSpec, runs: usize) -> bool {
    picard_ratio_excess(spec, runs, 30).is_ok_and(|excess| excess <= 0.05)
}

/// `ρ + η ≥ 1` must be refused when the model is built.
pub fn non_contractive_rejected() -> bool {
    let ar = ModelSpec::Ar {
        alpha_left: 0.4,
        alpha_right: 0.4,
        beta: 0.2,
    };
    let brnn = ModelSpec::Brnn {
        k: 1,
        p: 1,
        matrix: vec![0.6, 0.3],
        beta: 0.2,
        activation: Activation::Tanh,
    };
    ar.build().is_err() && brnn.build().is_err()
}

/// `Φ = X_s³` fails the sampled Lipschitz check while `Φ = X_s` passes.
pub fn lipschitz_controls() -> bool {
    let window = Orthotope::new(vec![1]).expect("valid");
    let run = |phi: Phi| -> Option<bool> {
        let stat = SeparableStatistic::new(phi, window.clone()).ok()?;
        check_lipschitz_separable(&stat, 200, 1.0, 17).ok().map(|r| r.pass)
    };
    run(Phi::CenterCubed) == Some(false) && run(Phi::Center) == Some(true)
}

/// Named selfcheck outcomes, in a fixed order.
pub fn selfcheck_with(upsilon: UpsilonFn<'_>) -> Vec<(&'static str, bool)> {
    vec![
        ("upsilon_dominance", upsilon_dominance(upsilon, 50)),
        ("upsilon_supremum", upsilon_below_sup(upsilon, 200)),
        ("dilation_and_shells", dilation_and_shells(60, 1)),
        ("union_chain", union_chain(200, 2)),
        ("picard_ar", picard_converges(&desk_ar(), 20)),
        ("picard_brnn", picard_converges(&desk_brnn(), 20)),
        ("contraction_rejection", non_contractive_rejected()),
        ("lipschitz_controls", lipschitz_controls()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use ncf_core::bounds::upsilon;

    #[test]
    fn checks_pass_on_the_real_implementation() {
        for (name, ok) in selfcheck_with(&upsilon) {
            assert!(ok, "{name}");
        }
    }

    #[test]
    fn a_broken_branch_is_caught() {
        let broken = |k: u32, rho: f64, d: u64| -> Result<f64> {
            if k == 2 && d > 3 {
                Ok(0.5 * upsilon(k, rho, d)?)
            } else {
                upsilon(k, rho, d)
            }
        };
        assert!(!upsilon_dominance(&broken, 50));
    }
}
