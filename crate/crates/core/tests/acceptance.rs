//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use qlattice_core::amplitude::{self, relative_deviation, FuzzReport};
use qlattice_core::born::{
    self, convergence_scan, overlap_exact, overlap_gaussian, overlap_window, BornExperiment,
    ProjectorWindow,
};
use qlattice_core::composite::{self, composite_amplitude, CompositeSetup};
use qlattice_core::evolution::{linearity_check, schrodinger_residual, Hamiltonian};
use qlattice_core::lattice::{
    expm, random_complex_kernel, random_unitary_kernel, tight_binding_hamiltonian, Kernel,
    LatticeConfig, WaveFunction,
};
use qlattice_core::regrade::{
    self, affine_fit, associativity_residual, catalog, product_rule_residual, recover_regrade,
    BinaryOpSampler, MonotoneGenerator,
};
use qlattice_core::setup::{
    self, fill_sigma, insert_sigma, sample_and_pair, sample_or_pair, sample_setup,
};
use qlattice_core::{amplitude as psi, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
type Oracle = (&'static str, fn(f64) -> f64);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn kernel_for(i: usize, n: usize, rng: &mut ChaCha8Rng) -> Kernel {
    if i.is_multiple_of(2) {
        random_unitary_kernel(n, rng)
    } else {
        random_complex_kernel(n, rng)
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_complex(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

fn consistency_fuzz() -> Outcome {
    let config = LatticeConfig::ring(8, 6).map_err(|e| e.to_string())?;
    let FuzzReport {
        rows,
        max_deviation,
        samples,
    } = amplitude::fuzz(7, 1000, &config).map_err(|e| e.to_string())?;
    let brute = rows
        .iter()
        .filter(|r| r.strategy_pair.contains("brute"))
        .count();
    let decomposed = rows
        .iter()
        .filter(|r| r.strategy_pair.contains("decompose"))
        .count();
    check(
        samples == 1000 && brute > 0 && decomposed > 0 && max_deviation <= 1e-10,
        format!(
            "{samples} setups, {} pairs, max deviation {max_deviation:.2e} <= 1e-10",
            rows.len()
        ),
    )
}

fn sum_and_product_rules() -> Outcome {
    let config = LatticeConfig::ring(8, 6).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_or, mut worst_and) = (0.0f64, 0.0f64);
    for i in 0..500 {
        let k = kernel_for(i, 8, &mut rng);
        let (a, b) = sample_or_pair(&config, &mut rng).map_err(|e| e.to_string())?;
        let merged = setup::or_compose(&a, &b).map_err(|e| e.to_string())?;
        let lhs = psi(&merged, &k).map_err(|e| e.to_string())?.value;
        let rhs = psi(&a, &k).unwrap().value + psi(&b, &k).unwrap().value;
        worst_or = worst_or.max(relative_deviation(lhs, rhs));

        let (e, l) = sample_and_pair(&config, &mut rng).map_err(|e| e.to_string())?;
        let joined = setup::and_compose(&e, &l).map_err(|e| e.to_string())?;
        let lhs = psi(&joined, &k).unwrap().value;
        let rhs = psi(&e, &k).unwrap().value * psi(&l, &k).unwrap().value;
        worst_and = worst_and.max(relative_deviation(lhs, rhs));
    }
    check(
        worst_or <= 1e-12 && worst_and <= 1e-12,
        format!("500 or-pairs max {worst_or:.2e}, 500 and-pairs max {worst_and:.2e} (<= 1e-12 relative)"),
    )
}

fn sigma_invariance() -> Outcome {
    let config = LatticeConfig::ring(8, 6).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut insertions = 0;
    for i in 0..200 {
        let k = kernel_for(i, 8, &mut rng);
        let a = sample_setup(&config, 5, &mut rng).map_err(|e| e.to_string())?;
        let base = psi(&a, &k).unwrap().value;
        let filled = fill_sigma(&a, 8).map_err(|e| e.to_string())?;
        worst = worst.max(relative_deviation(psi(&filled, &k).unwrap().value, base));
        for t in a.free_times() {
            let one = insert_sigma(&a, t, 8).map_err(|e| e.to_string())?;
            worst = worst.max(relative_deviation(psi(&one, &k).unwrap().value, base));
            insertions += 1;
        }
    }
    check(
        worst <= 1e-12,
        format!(
            "200 setups, {insertions} single insertions plus full fills, max {worst:.2e} <= 1e-12"
        ),
    )
}

fn linearity_and_schrodinger() -> Outcome {
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut masked = 0;
    for i in 0..1000 {
        let mut k = kernel_for(i, n, &mut rng);
        if i % 4 >= 2 {
            let holes = setup::random_holes(n, &mut rng);
            k = k
                .masked(&holes.into_iter().collect::<Vec<_>>())
                .map_err(|e| e.to_string())?;
            masked += 1;
        }
        let p1 = WaveFunction::random(n, 0, &mut rng);
        let p2 = WaveFunction::random(n, 0, &mut rng);
        let (alpha, beta) = (random_complex(&mut rng, 2.0), random_complex(&mut rng, 2.0));
        let steps = rng.gen_range(1..=8);
        worst = worst
            .max(linearity_check(&k, &p1, &p2, alpha, beta, steps).map_err(|e| e.to_string())?);
    }

    let config = LatticeConfig::ring(n, 1).map_err(|e| e.to_string())?;
    let onsite: Vec<f64> = (0..n).map(|j| (j as f64 * 0.4).cos()).collect();
    let hm = tight_binding_hamiltonian(&config, c(1.0, 0.0), &onsite).map_err(|e| e.to_string())?;
    let h = Hamiltonian::new(hm.clone()).map_err(|e| e.to_string())?;
    let psi0 = WaveFunction::random(n, 0, &mut rng);
    let residual = |dt: f64| -> Result<f64, String> {
        let k = Kernel::new(expm(&(&hm * c(0.0, -dt))), "tb").map_err(|e| e.to_string())?;
        schrodinger_residual(&psi0, &h, &k, dt, 1.0).map_err(|e| e.to_string())
    };
    let mut ratios = Vec::new();
    for dt in [1e-2, 1e-3, 1e-4] {
        ratios.push(residual(dt / 2.0)? / residual(dt)?);
    }
    let ratios_ok = ratios.iter().all(|r| (0.4..=0.6).contains(r));
    check(
        worst <= 1e-12 && ratios_ok,
        format!(
            "1000 draws ({masked} masked) max {worst:.2e} <= 1e-12; residual ratios {:.4?} in [0.4, 0.6]",
            ratios
        ),
    )
}

fn born_concentration() -> Outcome {
    let rows =
        convergence_scan(0.36, 0.36, 0.02, &[100, 1000, 10_000]).map_err(|e| e.to_string())?;
    let ov: Vec<f64> = rows.iter().map(|r| r.overlap_exact).collect();
    let monotone = ov[0] <= ov[1] && ov[1] <= ov[2];
    let outside =
        overlap_exact(&BornExperiment::new(0.36, 10_000, 0.46, 0.02).map_err(|e| e.to_string())?);
    let e = BornExperiment::new(0.36, 10_000, 0.36, 0.02).map_err(|e| e.to_string())?;
    let gauss_gap = (overlap_gaussian(&e).map_err(|e| e.to_string())? - overlap_exact(&e)).abs();
    check(
        monotone && ov[2] >= 0.9999 && outside <= 1e-12 && gauss_gap <= 0.01,
        format!(
            "overlaps {:.6?} ascending, final >= 0.9999; f=0.46 gives {outside:.2e} <= 1e-12; gaussian gap {gauss_gap:.2e} <= 0.01",
            ov
        ),
    )
}

fn born_small_n_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for _ in 0..50 {
        let len = rng.gen_range(1..=4);
        let psi_state = WaveFunction::random(len, 0, &mut rng);
        let k = rng.gen_range(0..len);
        let p = born::detection_probability(&psi_state, k).map_err(|e| e.to_string())?;
        for n in 1..=8u64 {
            for lo in 0..=n {
                for hi in lo..=n {
                    let w = ProjectorWindow::new(lo, hi, n).map_err(|e| e.to_string())?;
                    let direct = born::small_n_direct(&psi_state, k, w, n as usize)
                        .map_err(|e| e.to_string())?;
                    worst = worst.max((direct - overlap_window(p, n, w)).abs());
                    cases += 1;
                }
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("50 states, {cases} (N, window) cases, max |direct - exact| {worst:.2e} <= 1e-12"),
    )
}

fn born_single_replica() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let len = rng.gen_range(1..=16);
        let psi_state = WaveFunction::random(len, 0, &mut rng);
        let k = rng.gen_range(0..len);
        let born_p = psi_state.coeffs()[k].norm_sqr();
        let w = ProjectorWindow::single(1);
        let exact = overlap_window(born_p, 1, w);
        let direct = born::small_n_direct(&psi_state, k, w, 1).map_err(|e| e.to_string())?;
        worst = worst
            .max((exact - born_p).abs())
            .max((direct - born_p).abs());
    }
    check(
        worst <= 1e-14,
        format!("500 states, max |overlap - |A_k|^2| {worst:.2e} <= 1e-14"),
    )
}

fn regrade_recovery() -> Outcome {
    let err = |e: Error| e.to_string();
    let mut notes = Vec::new();
    let mut ok = true;

    let add = catalog("add", &[]).map_err(err)?;
    let r = recover_regrade(&add).map_err(err)?;
    let add_res = r.residual_stats.map_or(f64::INFINITY, |s| s.max);
    let add_fit = affine_fit(&r.nodes, &r.xi).max_dev;
    ok &= r.assoc_residual == 0.0 && add_res == 0.0 && add_fit == 0.0;
    notes.push(format!(
        "add assoc {:.1e} additivity {add_res:.1e} fit {add_fit:.1e}",
        r.assoc_residual
    ));

    let oracles: [Oracle; 2] = [("cubic-mean", |u| u * u * u), ("uv-shift", f64::ln_1p)];
    for (name, oracle) in oracles {
        let s = catalog(name, &[]).map_err(err)?;
        let assoc = associativity_residual(&s).map_err(err)?.max_residual;
        let r = recover_regrade(&s).map_err(err)?;
        let additivity = r.residual_stats.map_or(f64::INFINITY, |s| s.max);
        let xs: Vec<f64> = r.nodes.iter().map(|&u| oracle(u)).collect();
        let fit = affine_fit(&xs, &r.xi).max_dev;
        ok &= assoc <= 1e-12 && additivity <= 1e-6 && fit <= 1e-6;
        notes.push(format!(
            "{name} assoc {assoc:.1e} additivity {additivity:.1e} fit {fit:.1e}"
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_eta = 0.0f64;
    for _ in 0..20 {
        let eta = MonotoneGenerator::random(&mut rng);
        let s = eta.sampler((0.1, 1.0)).map_err(err)?;
        let r = recover_regrade(&s).map_err(err)?;
        let xs: Vec<f64> = r.nodes.iter().map(|&u| eta.eval(u)).collect();
        worst_eta = worst_eta.max(affine_fit(&xs, &r.xi).max_dev);
    }
    ok &= worst_eta <= 1e-5;
    notes.push(format!("20 eta round trips max {worst_eta:.1e}"));

    let broken = catalog("broken-assoc", &[]).map_err(err)?;
    let rejected = matches!(recover_regrade(&broken), Err(Error::NonAssociative(_)));
    ok &= rejected;
    notes.push(format!("u+v^2 rejected: {rejected}"));
    check(ok, notes.join("; "))
}

fn product_rule_uniqueness() -> Outcome {
    let err = |e: Error| e.to_string();
    let uv = product_rule_residual(&catalog("product", &[]).map_err(err)?).map_err(err)?;
    let uv_ok = uv.left_dist == 0.0 && uv.right_dist == 0.0 && uv.assoc == 0.0;
    let add = BinaryOpSampler::new("u+v", |u, v| u + v, (0.5, 1.5), (0.5, 1.5)).map_err(err)?;
    let worst = |r: regrade::ProductRuleReport| r.left_dist.max(r.right_dist).max(r.assoc);
    let add_res = worst(product_rule_residual(&add).map_err(err)?);
    let shifted =
        worst(product_rule_residual(&catalog("product", &[1.0, 0.1]).map_err(err)?).map_err(err)?);
    check(
        uv_ok && add_res >= 0.05 && shifted >= 0.05,
        format!(
            "uv residuals ({:.1e}, {:.1e}, {:.1e}); u+v worst {add_res:.3}; uv+0.1 worst {shifted:.3} (>= 0.05)",
            uv.left_dist, uv.right_dist, uv.assoc
        ),
    )
}

fn composite_systems() -> Outcome {
    let err = |e: Error| e.to_string();
    let config = LatticeConfig::ring(6, 5).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut worst_prod, mut worst_bilinear) = (0.0f64, 0.0f64);
    for i in 0..200 {
        let k1 = kernel_for(i, 6, &mut rng);
        let k2 = kernel_for(i + 1, 6, &mut rng);
        let (a1, a2) = sample_or_pair(&config, &mut rng).map_err(err)?;
        let b = sample_setup(&config, 4, &mut rng).map_err(err)?;

        let pair = CompositeSetup::new(vec![(a1.clone(), k1.clone()), (b.clone(), k2.clone())])
            .map_err(err)?;
        let oracle = amplitude::amplitude_bruteforce(&a1, &k1)
            .map_err(err)?
            .value
            * amplitude::amplitude_bruteforce(&b, &k2).map_err(err)?.value;
        worst_prod = worst_prod.max(relative_deviation(
            composite_amplitude(&pair).map_err(err)?.value,
            oracle,
        ));

        let other = CompositeSetup::new(vec![(a2.clone(), k1.clone()), (b.clone(), k2.clone())])
            .map_err(err)?;
        let merged = composite::or_compose(&pair, &other).map_err(err)?;
        let lhs = composite_amplitude(&merged).map_err(err)?.value;
        let rhs = composite_amplitude(&pair).map_err(err)?.value
            + composite_amplitude(&other).map_err(err)?.value;
        worst_bilinear = worst_bilinear.max(relative_deviation(lhs, rhs));

        // linear in the second slot too
        let left =
            CompositeSetup::new(vec![(b.clone(), k2.clone()), (a1, k1.clone())]).map_err(err)?;
        let right = CompositeSetup::new(vec![(b, k2), (a2, k1)]).map_err(err)?;
        let merged = composite::or_compose(&left, &right).map_err(err)?;
        let lhs = composite_amplitude(&merged).map_err(err)?.value;
        let rhs = composite_amplitude(&left).map_err(err)?.value
            + composite_amplitude(&right).map_err(err)?.value;
        worst_bilinear = worst_bilinear.max(relative_deviation(lhs, rhs));
    }
    check(
        worst_prod <= 1e-12 && worst_bilinear <= 1e-12,
        format!("200 composites, product max {worst_prod:.2e}, bilinearity max {worst_bilinear:.2e} (<= 1e-12)"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("consistency fuzz", consistency_fuzz),
        ("sum and product rules", sum_and_product_rules),
        ("sigma invariance", sigma_invariance),
        ("linearity and Schrodinger order", linearity_and_schrodinger),
        ("Born concentration", born_concentration),
        ("Born small-N oracle", born_small_n_oracle),
        ("N=1 Born identity", born_single_replica),
        ("regrade recovery", regrade_recovery),
        ("product-rule uniqueness", product_rule_uniqueness),
        ("composite systems", composite_systems),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!(
            "[{tag}] {:>2}. {name}: {detail} ({:.1}s)",
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
