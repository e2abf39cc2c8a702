//! Self-check suites behind `statetrack verify`, keyed by the result they
//! exercise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::compile::{
    cascade_to_lrnn, compile_cyclic, compile_cyclic_with, compile_mod_reflections, compile_parity, compile_parity_with,
    compile_permutation_group, CompileOptions,
};
use crate::fsa::{all_permutations, word_problem_oracle, Cascade, Group};
use crate::linalg::{gh_factorize, gh_product_eigenvalues, spectral_norm, GhFactor, GhProduct, Matrix};
use crate::lrnn::{model_run, model_run_cast, EigenRange};
use crate::phenom::{demo_theorem, random_negative_layer, random_positive_layer, rotation_demo_layer, CastMode, DemoKind};
use crate::precision::CastGrid;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub key: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Every key, in report order.
pub const SUITE_KEYS: [&str; 8] = ["T1", "T2", "P1.1", "P1.2", "P1.3", "T3", "T4", "AppE"];

/// Suites selectable by name: `all`, `prop1`, `thm1`, `thm2`, `thm3`, `thm4`,
/// `appe`, or a single key.
pub fn suite_keys(suite: &str) -> Option<Vec<&'static str>> {
    let keys: Vec<&'static str> = match suite.to_ascii_lowercase().as_str() {
        "all" => SUITE_KEYS.to_vec(),
        "prop1" => vec!["P1.1", "P1.2", "P1.3"],
        "thm1" | "t1" => vec!["T1"],
        "thm2" | "t2" => vec!["T2"],
        "thm3" | "t3" => vec!["T3"],
        "thm4" | "t4" => vec!["T4"],
        "appe" => vec!["AppE"],
        "p1.1" => vec!["P1.1"],
        "p1.2" => vec!["P1.2"],
        "p1.3" => vec!["P1.3"],
        _ => return None,
    };
    Some(keys)
}

pub fn run_suite(suite: &str, seed: u64) -> Option<Vec<CheckResult>> {
    let keys = suite_keys(suite)?;
    Some(keys.into_iter().map(|k| run_check(k, seed)).collect())
}

pub fn run_check(key: &'static str, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (name, outcome) = match key {
        "T1" => ("no parity with eigenvalues in [0, 1]", check_t1(&mut rng)),
        "T2" => ("real eigenvalues give period at most 2", check_t2(&mut rng)),
        "P1.1" => ("GH products are non-expansive", check_p1_1(&mut rng, 500)),
        "P1.2" => ("norm-bounded matrices factor into 3n GH factors", check_p1_2(&mut rng, 200)),
        "P1.3" => ("GH product spectra", check_p1_3(&mut rng, 500)),
        "T3" => ("group automata compile to one layer", check_t3(&mut rng)),
        "T4" => ("permutation-reset cascades compile layer by layer", check_t4(&mut rng)),
        "AppE" => ("two-layer reflection adder", check_appe(&mut rng)),
        _ => ("unknown", Err("unknown check".to_string())),
    };
    CheckResult {
        key,
        name,
        passed: outcome.is_ok(),
        detail: match outcome {
            Ok(s) | Err(s) => s,
        },
    }
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn unit_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Random GH product of `k` factors in dimension `n` with `β` drawn from
/// `beta_range`.
pub fn random_gh_product<R: Rng>(rng: &mut R, n: usize, k: usize, beta: std::ops::RangeInclusive<f64>) -> GhProduct<f64> {
    let factors = (0..k)
        .map(|_| GhFactor::new(unit_vec(rng, n), rng.gen_range(beta.clone())).expect("unit vector"))
        .collect();
    GhProduct::new(n, factors).expect("shared dimension")
}

fn check_p1_1<R: Rng>(rng: &mut R, count: usize) -> Outcome {
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=6);
        let p = random_gh_product(rng, n, k, 0.0..=2.0);
        worst = worst.max(spectral_norm(&p.to_matrix()));
    }
    ensure(worst <= 1.0 + 1e-10, || format!("norm {worst}"))?;
    Ok(format!("{count} products, max norm {worst:.12}"))
}

fn check_p1_2<R: Rng>(rng: &mut R, count: usize) -> Outcome {
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.gen_range(1..=8);
        let m = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let target = rng.gen_range(0.05..=1.0);
        let m = m.scale(target / spectral_norm(&m));
        let p = gh_factorize(&m).map_err(|e| e.to_string())?;
        ensure(p.len() <= 3 * n, || format!("{} factors for n = {n}", p.len()))?;
        worst = worst.max(p.to_matrix().max_abs_diff(&m));
    }
    ensure(worst <= 1e-6, || format!("residual {worst}"))?;
    Ok(format!("{count} matrices, max residual {worst:.2e}"))
}

fn check_p1_3<R: Rng>(rng: &mut R, count: usize) -> Outcome {
    for _ in 0..count {
        let n = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=5);
        // eigenvalues of the factors in (−1, 1]
        let p = random_gh_product(rng, n, k, 0.0..=1.999_999);
        for z in gh_product_eigenvalues(&p).map_err(|e| e.to_string())? {
            ensure(z.norm() < 1.0 + 1e-8 || (z - 1.0).norm() <= 1e-8, || format!("eigenvalue {z}"))?;
        }
        let k2 = rng.gen_range(1..=2);
        let p = random_gh_product(rng, n, k2, 0.0..=1.0);
        for z in gh_product_eigenvalues(&p).map_err(|e| e.to_string())? {
            ensure(z.im.abs() <= 1e-8 && z.re >= -1e-8 && z.re <= 1.0 + 1e-8, || {
                format!("eigenvalue {z} of a two-factor [0, 1] product")
            })?;
        }
    }
    Ok(format!("{count} products of each kind"))
}

fn check_t1<R: Rng>(rng: &mut R) -> Outcome {
    let unit = CompileOptions {
        range: EigenRange::UnitInterval,
        strict_gh: false,
    };
    ensure(compile_parity_with::<f64>(unit).is_err(), || "parity compiled with [0, 1] eigenvalues".into())?;
    let grid = CastGrid::default_demo();
    let count = 50;
    for i in 0..count {
        let layer = random_positive_layer::<f64, _>(rng, 1 + i % 4, i % 2 == 1).map_err(|e| e.to_string())?;
        let r = demo_theorem(DemoKind::PositiveEigs, &layer, &grid, 20_000, CastMode::PerStep).map_err(|e| e.to_string())?;
        ensure(r.passed(), || format!("layer {i}: {r:?}"))?;
    }
    let parity = compile_parity::<f64>().map_err(|e| e.to_string())?;
    let word: Vec<usize> = (0..10_000).map(|_| rng.gen_range(0..2)).collect();
    let a = model_run(&parity, &word).map_err(|e| e.to_string())?;
    let b = model_run_cast(&parity, &word, &grid).map_err(|e| e.to_string())?;
    ensure(a == b, || "cast changed parity outputs".into())?;
    Ok(format!("{count} random layers settle; [0, 1] parity rejected"))
}

fn check_t2<R: Rng>(rng: &mut R) -> Outcome {
    let grid = CastGrid::default_demo();
    let count = 50;
    for i in 0..count {
        let layer = random_negative_layer::<f64, _>(rng, 1 + i % 4);
        for mode in [CastMode::PerStep, CastMode::PowerCast] {
            let r = demo_theorem(DemoKind::NegativeReal, &layer, &grid, 20_000, mode).map_err(|e| e.to_string())?;
            ensure(r.passed(), || format!("layer {i}: {r:?}"))?;
        }
    }
    for m in [3, 4, 5] {
        let layer = rotation_demo_layer::<f64>(m).map_err(|e| e.to_string())?;
        let r = demo_theorem(DemoKind::Rotation { m }, &layer, &grid, 20_000, CastMode::PerStep).map_err(|e| e.to_string())?;
        ensure(r.passed(), || format!("rotation {m}: {r:?}"))?;
    }
    let unit = CompileOptions {
        range: EigenRange::UnitInterval,
        strict_gh: false,
    };
    ensure(compile_cyclic_with::<f64>(3, unit).is_err(), || "mod-3 counter compiled with [0, 1]".into())?;
    Ok(format!("{count} negative layers within period 2; rotations 3, 4, 5 exact"))
}

fn check_t3<R: Rng>(rng: &mut R) -> Outcome {
    let gens = all_permutations(5);
    let model = compile_permutation_group::<f64>(&gens).map_err(|e| e.to_string())?;
    for _ in 0..20 {
        let w: Vec<usize> = (0..200).map(|_| rng.gen_range(0..120)).collect();
        let want = word_problem_oracle(Group::Symmetric { n: 5 }, &w).map_err(|e| e.to_string())?;
        ensure(model_run(&model, &w).map_err(|e| e.to_string())? == want, || "S5 mismatch".into())?;
    }
    for m in [2, 3, 5, 12, 60] {
        let model = compile_cyclic::<f64>(m).map_err(|e| e.to_string())?;
        let w: Vec<usize> = (0..2000).map(|_| rng.gen_range(0..m)).collect();
        let want = word_problem_oracle(Group::Cyclic { m }, &w).map_err(|e| e.to_string())?;
        ensure(model_run(&model, &w).map_err(|e| e.to_string())? == want, || format!("Z{m} mismatch"))?;
    }
    Ok("S5 and Z_m for m in {2, 3, 5, 12, 60}".into())
}

fn check_t4<R: Rng>(rng: &mut R) -> Outcome {
    for c in [Cascade::parity(), Cascade::no_double_zero()] {
        let model = cascade_to_lrnn::<f64>(&c, CompileOptions::default()).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let w: Vec<usize> = (0..100).map(|_| rng.gen_range(0..c.alphabet_size)).collect();
            let want: Vec<usize> = c
                .run(&w)
                .map_err(|e| e.to_string())?
                .iter()
                .zip(&w)
                .map(|(j, &x)| c.encode(x, j))
                .collect();
            ensure(model_run(&model, &w).map_err(|e| e.to_string())? == want, || "cascade mismatch".into())?;
        }
    }
    Ok("parity and no-00 cascades".into())
}

fn check_appe<R: Rng>(rng: &mut R) -> Outcome {
    for m in [3, 5, 12] {
        let model = compile_mod_reflections::<f64>(m).map_err(|e| e.to_string())?;
        for t in &model.layers[1].transitions {
            let a = t.to_matrix(2);
            let err = a.matmul(&a).map_err(|e| e.to_string())?.max_abs_diff(&Matrix::identity(2));
            ensure(err <= 1e-12, || format!("H² − I = {err}"))?;
        }
        let w: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..m)).collect();
        let want = word_problem_oracle(Group::Cyclic { m }, &w).map_err(|e| e.to_string())?;
        ensure(model_run(&model, &w).map_err(|e| e.to_string())? == want, || format!("m = {m} mismatch"))?;
    }
    Ok("m in {3, 5, 12}".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prop1_suite_passes() {
        for r in run_suite("prop1", 1).unwrap() {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn suite_names() {
        assert_eq!(suite_keys("all").unwrap().len(), 8);
        assert!(suite_keys("nope").is_none());
    }
}
