//! Acceptance criteria 1-10, one PASS/FAIL line each.

use std::path::Path;
use std::time::{Duration, Instant};

use ncf_cli::checks;
use ncf_core::bounds::upsilon;
use ncf_core::innovations::MomentOrder;
use ncf_core::montecarlo::{
    run_approx_decay, run_deviation, run_stat_approx, run_swap_sensitivity, ExperimentPlan, ExperimentResult,
};

fn desk(replicates: usize, moments: Vec<MomentOrder>) -> ExperimentPlan {
    ExperimentPlan {
        name: "acceptance".into(),
        replicates,
        moments,
        seed: 20240601,
        ..ExperimentPlan::desk()
    }
}

fn rows_pass(result: &ExperimentResult, detail: &mut Vec<String>) -> bool {
    for row in result.failures() {
        detail.push(format!(
            "  failing row {} d={:?} m={:?} eps={:?}: estimate {:.6e} > threshold {:.6e}",
            row.experiment, row.d, row.m, row.epsilon, row.estimate, row.threshold
        ));
    }
    !result.rows.is_empty() && result.pass()
}

fn c1(_: &mut Vec<String>) -> bool {
    checks::upsilon_dominance(&upsilon, 50)
}

fn c2(_: &mut Vec<String>) -> bool {
    checks::upsilon_below_sup(&upsilon, 200)
}

fn c3(_: &mut Vec<String>) -> bool {
    checks::dilation_and_shells(200, 3) && checks::union_chain(200, 4)
}

fn c4(detail: &mut Vec<String>) -> bool {
    [("ar", checks::desk_ar()), ("brnn", checks::desk_brnn())]
        .iter()
        .all(|(name, spec)| match checks::picard_ratio_excess(spec, 100, 30) {
            Ok(excess) => {
                detail.push(format!("  {name}: max ratio - rho = {excess:.4}"));
                excess <= 0.05
            }
            Err(e) => {
                detail.push(format!("  {name}: {e}"));
                false
            }
        })
}

fn c5(detail: &mut Vec<String>) -> bool {
    let plan = ExperimentPlan {
        approx_depths: (0..=8).collect(),
        ..desk(10_000, vec![MomentOrder::Finite(2)])
    };
    match run_approx_decay(&plan) {
        Ok(r) => rows_pass(&r, detail) && r.rows.len() == 9,
        Err(e) => {
            detail.push(format!("  {e}"));
            false
        }
    }
}

fn c6(detail: &mut Vec<String>) -> bool {
    let plan = ExperimentPlan {
        swap_depth: 4,
        ..desk(
            4_000,
            vec![MomentOrder::Finite(1), MomentOrder::Finite(2), MomentOrder::Infinite],
        )
    };
    match run_swap_sensitivity(&plan) {
        Ok(r) => rows_pass(&r, detail),
        Err(e) => {
            detail.push(format!("  {e}"));
            false
        }
    }
}

fn c7(detail: &mut Vec<String>) -> bool {
    let plan = ExperimentPlan {
        stat_depths: vec![0, 2, 4],
        ..desk(2_000, vec![MomentOrder::Finite(1)])
    };
    match run_stat_approx(&plan) {
        Ok(r) => rows_pass(&r, detail) && r.rows.len() == 3,
        Err(e) => {
            detail.push(format!("  {e}"));
            false
        }
    }
}

fn c8(detail: &mut Vec<String>) -> bool {
    let plan = ExperimentPlan {
        deviation_depth: 4,
        ..desk(20_000, vec![MomentOrder::Infinite])
    };
    match run_deviation(&plan) {
        Ok(r) => {
            let tilde = r.rows.iter().filter(|x| x.experiment == "deviation_tilde").count();
            let s = r.rows.iter().filter(|x| x.experiment == "deviation_s").count();
            rows_pass(&r, detail) && tilde > 0 && s > 0
        }
        Err(e) => {
            detail.push(format!("  {e}"));
            false
        }
    }
}

fn run_cli(config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        "ncf".to_string(),
        "run-all".into(),
        "--config".into(),
        config.display().to_string(),
        "--output-dir".into(),
        out.display().to_string(),
        "--seed".into(),
        "7".into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    ncf_cli::main_with_args(args, &mut std::io::sink(), &mut std::io::sink())
}

fn c9(detail: &mut Vec<String>) -> bool {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("plan.cfg");
    std::fs::write(
        &config,
        "plans = ar, brnn\nmc.replicates = 60\nindex.len = 16\nmc.moment_samples = 5000\n\
         brnn.model.type = brnn\nbrnn.model.p = 2\n\
         brnn.model.matrix = 0.2, -0.1, 0.15, 0.05, 0.05, 0.2, -0.1, 0.15\nbrnn.model.beta = 0.3\n\
         brnn.mc.experiments = approx, swap, stat_approx\n",
    )
    .expect("write config");
    let runs = [
        ("a", vec!["--backend", "parallel:2"]),
        ("b", vec!["--backend", "parallel:2"]),
        ("c", vec!["--backend", "sequential"]),
        ("d", vec!["--backend", "parallel:3"]),
    ];
    let mut csv = Vec::new();
    for (name, extra) in &runs {
        let out = dir.path().join(name);
        let code = run_cli(&config, &out, extra);
        if code == 2 {
            detail.push(format!("  run {name} exited with 2"));
            return false;
        }
        csv.push(std::fs::read_to_string(out.join("results.csv")).unwrap_or_default());
    }
    let byte_identical = !csv[0].is_empty() && csv[0] == csv[1];
    let values_close = |a: &str, b: &str| -> bool {
        let (la, lb): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
        la.len() == lb.len()
            && la.iter().zip(&lb).all(|(x, y)| {
                x.split(',').zip(y.split(',')).all(|(u, v)| {
                    u == v
                        || match (u.parse::<f64>(), v.parse::<f64>()) {
                            (Ok(p), Ok(q)) => (p - q).abs() <= 1e-12 * p.abs().max(q.abs()).max(1.0),
                            _ => false,
                        }
                })
            })
    };
    let across_workers = values_close(&csv[0], &csv[2]) && values_close(&csv[0], &csv[3]);
    detail.push(format!(
        "  byte-identical at fixed workers: {byte_identical}; within 1e-12 across workers: {across_workers}"
    ));
    byte_identical && across_workers
}

fn c10(_: &mut Vec<String>) -> bool {
    checks::non_contractive_rejected() && checks::lipschitz_controls()
}

type Criterion = (u32, &'static str, Duration, fn(&mut Vec<String>) -> bool);

fn main() {
    let secs = Duration::from_secs;
    let criteria: [Criterion; 10] = [
        (1, "upsilon dominance", secs(1), c1),
        (2, "upsilon supremum", secs(1), c2),
        (3, "combinatorics oracles", secs(5), c3),
        (4, "picard geometric convergence", secs(10), c4),
        (5, "approximation decay", secs(120), c5),
        (6, "swap sensitivity", secs(120), c6),
        (7, "statistic approximation", secs(180), c7),
        (8, "deviation dominance", secs(600), c8),
        (9, "reproducibility", secs(600), c9),
        (10, "negative controls", secs(60), c10),
    ];
    let mut all = true;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let mut detail = Vec::new();
        let ok = check(&mut detail);
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = ok && in_time;
        all &= pass;
        println!(
            "criterion {id:>2} {name}: {} ({:.2}s{})",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over time limit" }
        );
        for line in detail {
            println!("{line}");
        }
    }
    if !all {
        std::process::exit(1);
    }
}
