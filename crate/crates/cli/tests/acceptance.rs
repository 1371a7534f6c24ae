//! Acceptance gate for the whole toolkit: eight independent checks, each
//! printing one `criterion N (...): PASS`/`FAIL` verdict line (visible with
//! `--nocapture`, or automatically for a failing test). Every tolerance and
//! runtime bound is pinned right here in the code.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::Rng;

use disco_core::evalviz::encode_dataset;
use disco_core::gen_backend::{make_oracle_generator, GeneratorHandle, OracleKind};
use disco_core::losses::{
    bce_logits_loss, bce_logits_loss_grad, domination_loss, domination_loss_grad,
    flipped_bce_loss, flipped_bce_loss_grad, nce_loss, nce_loss_grad, total_loss_grad,
    LossInputs,
};
use disco_core::metrics::forest::ForestConfig;
use disco_core::metrics::{
    dci, dci_disentanglement, factorial_design, mig, mutual_info_discrete,
};
use disco_core::navigator::{init_navigator, NavigatorKind};
use disco_core::rng::seed_stream;
use disco_core::sampler::{draw_spec, SamplerConfig};
use disco_core::trainer::fit;
use disco_core::{LossConfig, LossVariant, RunConfig};

fn verdict(number: usize, name: &str, failures: &[String]) {
    if failures.is_empty() {
        println!("criterion {number} ({name}): PASS");
    } else {
        println!("criterion {number} ({name}): FAIL");
        for f in failures {
            println!("  - {f}");
        }
        panic!("criterion {number} ({name}) failed: {}", failures.join("; "));
    }
}

fn check(failures: &mut Vec<String>, ok: bool, msg: String) {
    if !ok {
        failures.push(msg);
    }
}

// ---------------------------------------------------------------------------
// criterion 1: loss values against independent scalar oracles
// ---------------------------------------------------------------------------

fn oracle_nce(q: &[Array1<f64>], kp: &[Array1<f64>], kn: &[Array1<f64>], tau: f64) -> f64 {
    let mut loss = 0.0;
    for qi in q {
        let lse = |set: &[Array1<f64>]| {
            set.iter().map(|k| (qi.dot(k) / tau).exp()).sum::<f64>().ln()
        };
        loss -= (lse(kp) - lse(kn)) / q.len() as f64;
    }
    loss
}

fn oracle_bce(q: &[Array1<f64>], kp: &[Array1<f64>], kn: &[Array1<f64>], tau: f64) -> f64 {
    let sp = |x: f64| (1.0 + x.exp()).ln();
    let mut loss = 0.0;
    for qi in q {
        for k in kp {
            loss += sp(-(qi.dot(k) / tau)) / q.len() as f64;
        }
        for k in kn {
            loss += sp(qi.dot(k) / tau) / q.len() as f64;
        }
    }
    loss
}

fn oracle_domination(q: &[Array1<f64>], kp: &[Array1<f64>]) -> f64 {
    let n = q[0].len();
    let count = (q.len() + kp.len()) as f64;
    let mut c = vec![0.0; n];
    for v in q.iter().chain(kp.iter()) {
        for (a, &b) in c.iter_mut().zip(v.iter()) {
            *a += b / count;
        }
    }
    let z: f64 = c.iter().map(|&v| v.exp()).sum();
    -c.iter().map(|&v| (v.exp() / z) * (v.exp() / z).ln()).sum::<f64>()
}

fn oracle_flipped(
    q: &[Array1<f64>],
    kp: &[Array1<f64>],
    kn: &[Array1<f64>],
    tau: f64,
    t: f64,
) -> (f64, usize) {
    let sp = |x: f64| (1.0 + x.exp()).ln();
    let mut loss = 0.0;
    let mut flipped = 0;
    for qi in q {
        for k in kp {
            loss += sp(-(qi.dot(k) / tau)) / q.len() as f64;
        }
        for k in kn {
            let a = qi.dot(k) / tau;
            if a < t {
                loss += sp(a) / q.len() as f64;
            } else {
                flipped += 1;
                loss += (a * tau).clamp(0.0, 1.0) * sp(-a) / q.len() as f64;
            }
        }
    }
    (loss, flipped)
}

fn small_fixture() -> (Vec<Array1<f64>>, Vec<Array1<f64>>, Vec<Array1<f64>>) {
    let v = |a: f64, b: f64, c: f64| Array1::from(vec![a, b, c]);
    (
        vec![v(0.9, 0.1, -0.2), v(-0.3, 0.7, 0.4)],
        vec![v(0.8, 0.2, 0.1), v(0.1, 0.9, -0.1)],
        vec![v(-0.5, 0.3, 0.6), v(0.2, -0.4, 0.7), v(0.6, 0.6, 0.0)],
    )
}

#[test]
fn criterion_1_loss_value_oracles() {
    let t0 = Instant::now();
    let mut failures = Vec::new();
    let tol = 1e-10;
    let (q, kp, kn) = small_fixture();

    for &tau in &[1.0, 0.25] {
        let got = nce_loss(&q, &kp, &kn, tau).unwrap();
        let want = oracle_nce(&q, &kp, &kn, tau);
        check(&mut failures, (got - want).abs() <= tol, format!("nce tau={tau}: {got} vs {want}"));

        let got = bce_logits_loss(&q, &kp, &kn, tau).unwrap();
        let want = oracle_bce(&q, &kp, &kn, tau);
        check(&mut failures, (got - want).abs() <= tol, format!("bce tau={tau}: {got} vs {want}"));

        for &t in &[0.5, 2.0] {
            let (got, gn) = flipped_bce_loss(&q, &kp, &kn, tau, t).unwrap();
            let (want, wn) = oracle_flipped(&q, &kp, &kn, tau, t);
            check(
                &mut failures,
                (got - want).abs() <= tol && gn == wn,
                format!("flipped tau={tau} t={t}: {got}/{gn} vs {want}/{wn}"),
            );
        }
    }
    let got = domination_loss(&q, &kp).unwrap();
    let want = oracle_domination(&q, &kp);
    check(&mut failures, (got - want).abs() <= tol, format!("domination: {got} vs {want}"));

    // Hand-computable scalar cases.
    let e = |i: usize| Array1::from_shape_fn(3, |j| if i == j { 1.0 } else { 0.0 });
    let got = nce_loss(&[e(0)], &[e(0)], &[e(1)], 1.0).unwrap();
    check(&mut failures, (got + 1.0).abs() <= tol, format!("nce unit case: {got} vs -1"));

    let got = bce_logits_loss(&[e(0)], &[e(1)], &[e(2)], 1.0).unwrap();
    let want = 2.0 * 2f64.ln(); // two zero logits, softplus(0) each
    check(&mut failures, (got - want).abs() <= tol, format!("bce zero-logit case: {got} vs {want}"));

    let flat = Array1::from(vec![0.5, 0.5, 0.5, 0.5]);
    let got = domination_loss(&[flat.clone()], &[flat]).unwrap();
    check(&mut failures, (got - 4f64.ln()).abs() <= tol, format!("uniform entropy: {got} vs ln 4"));

    // One flipped negative: cosine 0.9 at tau = 0.1 gives logit 9 >= t = 5,
    // so the term is 0.9 * softplus(-9); the positive contributes ln 2.
    let kneg = Array1::from(vec![0.9, 0.1, 0.0]);
    let (got, n) = flipped_bce_loss(&[e(0)], &[e(2)], &[kneg], 0.1, 5.0).unwrap();
    let want = 2f64.ln() + 0.9 * (1.0 + (-9.0f64).exp()).ln();
    check(
        &mut failures,
        (got - want).abs() <= tol && n == 1,
        format!("flipped hand case: {got}/{n} vs {want}/1"),
    );

    let elapsed = t0.elapsed();
    check(&mut failures, elapsed < Duration::from_secs(1), format!("runtime {elapsed:?} >= 1s"));
    verdict(1, "loss value oracles", &failures);
}

// ---------------------------------------------------------------------------
// criterion 2: analytic gradients vs central finite differences
// ---------------------------------------------------------------------------

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn random_sets(
    rng: &mut impl Rng,
    dim: usize,
) -> (Vec<Array1<f64>>, Vec<Array1<f64>>, Vec<Array1<f64>>) {
    let mut draw = |count: usize| {
        (0..count)
            .map(|_| Array1::from_shape_fn(dim, |_| rng.gen_range(-0.8..0.8)))
            .collect::<Vec<_>>()
    };
    (draw(2), draw(2), draw(3))
}

/// Fixture is unusable for finite differences if any negative logit sits on
/// the flip threshold or a pseudo-label clamp kink.
fn near_kink(q: &[Array1<f64>], kn: &[Array1<f64>], tau: f64, t: f64) -> bool {
    q.iter().any(|qi| {
        kn.iter().any(|k| {
            let a = qi.dot(k) / tau;
            (a - t).abs() < 5e-2 || (a * tau).abs() < 2e-2 || (a * tau - 1.0).abs() < 2e-2
        })
    })
}

#[test]
fn criterion_2_gradients_vs_finite_differences() {
    let t0 = Instant::now();
    let mut failures = Vec::new();
    let mut rng = seed_stream(42, "fd-probes");
    let (dim, tau, t, h, tol) = (6usize, 0.25, 1.0, 1e-5, 1e-4);
    let mut max_err = 0.0f64;
    let mut probes = 0usize;

    // 60 loss-input probes split across the three contrastive losses.
    for probe in 0..60 {
        let (mut q, mut kp, mut kn) = loop {
            let sets = random_sets(&mut rng, dim);
            if !near_kink(&sets.0, &sets.2, tau, t) {
                break sets;
            }
        };
        let set_idx = rng.gen_range(0..3usize);
        let elem = rng.gen_range(0..[q.len(), kp.len(), kn.len()][set_idx]);
        let coord = rng.gen_range(0..dim);
        let kind = probe % 3;

        let analytic = {
            let grads = match kind {
                0 => nce_loss_grad(&q, &kp, &kn, tau).unwrap().1,
                1 => bce_logits_loss_grad(&q, &kp, &kn, tau).unwrap().1,
                _ => flipped_bce_loss_grad(&q, &kp, &kn, tau, t).unwrap().2,
            };
            match set_idx {
                0 => grads.gq[elem][coord],
                1 => grads.gpos[elem][coord],
                _ => grads.gneg[elem][coord],
            }
        };
        let eval = |q: &[Array1<f64>], kp: &[Array1<f64>], kn: &[Array1<f64>]| match kind {
            0 => nce_loss(q, kp, kn, tau).unwrap(),
            1 => bce_logits_loss(q, kp, kn, tau).unwrap(),
            _ => flipped_bce_loss(q, kp, kn, tau, t).unwrap().0,
        };
        let target = match set_idx {
            0 => &mut q[elem],
            1 => &mut kp[elem],
            _ => &mut kn[elem],
        };
        let orig = target[coord];
        target[coord] = orig + h;
        let (qr, kpr, knr) = (q.clone(), kp.clone(), kn.clone());
        let up = eval(&qr, &kpr, &knr);
        let target = match set_idx {
            0 => &mut q[elem],
            1 => &mut kp[elem],
            _ => &mut kn[elem],
        };
        target[coord] = orig - h;
        let (qr, kpr, knr) = (q.clone(), kp.clone(), kn.clone());
        let down = eval(&qr, &kpr, &knr);
        let fd = (up - down) / (2.0 * h);
        let err = rel_err(analytic, fd);
        max_err = max_err.max(err);
        probes += 1;
        check(&mut failures, err <= tol, format!("loss probe {probe}: rel err {err:.3e}"));
    }

    // 15 domination probes (q and k+ share one mean gradient).
    for probe in 0..15 {
        let (mut q, kp, _) = random_sets(&mut rng, dim);
        let elem = rng.gen_range(0..q.len());
        let coord = rng.gen_range(0..dim);
        let (_, gq, _) = domination_loss_grad(&q, &kp).unwrap();
        let analytic = gq[coord];
        let orig = q[elem][coord];
        q[elem][coord] = orig + h;
        let up = domination_loss(&q, &kp).unwrap();
        q[elem][coord] = orig - h;
        let down = domination_loss(&q, &kp).unwrap();
        let fd = (up - down) / (2.0 * h);
        let err = rel_err(analytic, fd);
        max_err = max_err.max(err);
        probes += 1;
        check(&mut failures, err <= tol, format!("domination probe {probe}: rel err {err:.3e}"));
    }

    // 25 navigator shift probes: directional derivative of g . shift(d, eps)
    // with respect to one parameter, across all three navigator kinds.
    let kinds = [NavigatorKind::UnitColumns, NavigatorKind::Orthonormal, NavigatorKind::Mlp3];
    for probe in 0..25 {
        let kind = kinds[probe % kinds.len()];
        let (d_count, latent) = (5usize, 7usize);
        let mut nav = init_navigator(kind, d_count, latent, &mut rng).unwrap();
        let d = rng.gen_range(0..d_count);
        let eps = loop {
            let e: f64 = rng.gen_range(-2.0..2.0);
            if e.abs() > 0.05 {
                break e;
            }
        };
        let g = Array1::from_shape_fn(latent, |_| rng.gen_range(-1.0..1.0));

        let (_, cache) = nav.shift_train(d, eps).unwrap();
        let mut grad = nav.grad_zeros();
        nav.shift_backward(&cache, &g, &mut grad);
        let mut flat_grad = Vec::new();
        grad.write_flat(&mut flat_grad);

        let mut params = Vec::new();
        nav.write_flat(&mut params);
        let idx = rng.gen_range(0..params.len());
        let analytic = flat_grad[idx];

        let orig = params[idx];
        params[idx] = orig + h;
        nav.read_flat(&params);
        let up = g.dot(&nav.shift(d, eps).unwrap());
        params[idx] = orig - h;
        nav.read_flat(&params);
        let down = g.dot(&nav.shift(d, eps).unwrap());
        let fd = (up - down) / (2.0 * h);
        let err = rel_err(analytic, fd);
        max_err = max_err.max(err);
        probes += 1;
        check(
            &mut failures,
            err <= tol,
            format!("shift probe {probe} ({kind:?}): rel err {err:.3e}"),
        );
    }

    check(&mut failures, probes == 100, format!("expected 100 probes, ran {probes}"));
    let elapsed = t0.elapsed();
    check(&mut failures, elapsed < Duration::from_secs(30), format!("runtime {elapsed:?} >= 30s"));
    println!("  gradient probes: {probes}, max rel err {max_err:.3e}");
    verdict(2, "loss and navigator gradients vs finite differences", &failures);
}

// ---------------------------------------------------------------------------
// criterion 3: reduction identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_reduction_identities() {
    let mut failures = Vec::new();
    let mut rng = seed_stream(3, "identities");

    for trial in 0..20 {
        let (q, kp, kn) = random_sets(&mut rng, 5);

        // Flipping with an infinite threshold is plain BCE.
        let (flipped, count) = flipped_bce_loss(&q, &kp, &kn, 0.2, f64::INFINITY).unwrap();
        let bce = bce_logits_loss(&q, &kp, &kn, 0.2).unwrap();
        check(
            &mut failures,
            (flipped - bce).abs() <= 1e-12 && count == 0,
            format!("trial {trial}: flipped(T=inf) {flipped} vs bce {bce}, count {count}"),
        );

        // total = contrastive + lambda * domination, for both variants.
        for &variant in &[LossVariant::BceLogits, LossVariant::Nce] {
            let cfg = LossConfig {
                variant,
                tau: 0.2,
                lambda: 0.7,
                flip_threshold: 1.0,
                flipping_enabled: variant == LossVariant::BceLogits,
            };
            let inputs = LossInputs::from_slices(&q, &kp, &kn);
            let (report, _) = total_loss_grad(&inputs, &cfg).unwrap();
            let recomposed = report.contrastive_part + cfg.lambda * report.domination_part;
            check(
                &mut failures,
                (report.total - recomposed).abs() <= 1e-10,
                format!("trial {trial} {variant:?}: total {} vs parts {recomposed}", report.total),
            );
            let dom = domination_loss(&q, &kp).unwrap();
            check(
                &mut failures,
                (report.domination_part - dom).abs() <= 1e-12,
                format!("trial {trial} {variant:?}: domination part mismatch"),
            );
        }
    }

    // Projection idempotence: project once from a random point, then again.
    for &kind in &[NavigatorKind::UnitColumns, NavigatorKind::Orthonormal] {
        let mut nav = init_navigator(kind, 4, 6, &mut rng).unwrap();
        let mut params = Vec::new();
        nav.write_flat(&mut params);
        for p in params.iter_mut() {
            *p += rng.gen_range(-0.3..0.3);
        }
        nav.read_flat(&params);
        nav.project_constraints().unwrap();
        let mut once = Vec::new();
        nav.write_flat(&mut once);
        nav.project_constraints().unwrap();
        let mut twice = Vec::new();
        nav.write_flat(&mut twice);
        let drift = once
            .iter()
            .zip(&twice)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        check(&mut failures, drift <= 1e-10, format!("{kind:?} projection drift {drift:.3e}"));
    }

    verdict(3, "reduction identities", &failures);
}

// ---------------------------------------------------------------------------
// criterion 4: sampler exclusion, uniformity, reproducibility
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_sampler_properties() {
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    let mut failures = Vec::new();
    let gen = make_oracle_generator(4, OracleKind::Linear, 0, false).unwrap();
    let cfg = SamplerConfig { b: 1, n: 1, m: 2, eps_max: 3.0 };
    let d_count = 8usize;
    let draws = 100_000usize;

    let mut rng = seed_stream(7, "sampler-acceptance");
    let mut counts = vec![0usize; d_count];
    let mut violations = 0usize;
    for _ in 0..draws {
        let spec = draw_spec(&mut rng, &gen, d_count, &cfg).unwrap();
        counts[spec.d] += 1;
        violations += spec.neg_dirs.iter().filter(|&&nd| nd == spec.d).count();
    }
    check(&mut failures, violations == 0, format!("{violations} negative-direction collisions"));

    let expected = draws as f64 / d_count as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((d_count - 1) as f64).unwrap().cdf(stat);
    check(&mut failures, p > 0.01, format!("chi-square p = {p:.4} <= 0.01 (stat {stat:.2})"));

    let specs_a: Vec<_> = {
        let mut r = seed_stream(9, "sampler-repro");
        (0..50).map(|_| draw_spec(&mut r, &gen, d_count, &cfg).unwrap()).collect()
    };
    let specs_b: Vec<_> = {
        let mut r = seed_stream(9, "sampler-repro");
        (0..50).map(|_| draw_spec(&mut r, &gen, d_count, &cfg).unwrap()).collect()
    };
    check(&mut failures, specs_a == specs_b, "seeded re-draw differs".to_string());

    println!("  sampler: chi-square p = {p:.4}");
    verdict(4, "sampler exclusion, uniformity, reproducibility", &failures);
}

// ---------------------------------------------------------------------------
// criterion 5: metric oracles
// ---------------------------------------------------------------------------

fn oracle_mi(x: &[usize], y: &[usize]) -> f64 {
    let (nx, ny) = (x.iter().max().unwrap() + 1, y.iter().max().unwrap() + 1);
    let n = x.len() as f64;
    let mut joint = vec![vec![0.0; ny]; nx];
    for (&a, &b) in x.iter().zip(y) {
        joint[a][b] += 1.0 / n;
    }
    let px: Vec<f64> = joint.iter().map(|row| row.iter().sum()).collect();
    let py: Vec<f64> = (0..ny).map(|j| joint.iter().map(|row| row[j]).sum()).collect();
    let mut mi = 0.0;
    for a in 0..nx {
        for b in 0..ny {
            if joint[a][b] > 0.0 {
                mi += joint[a][b] * (joint[a][b] / (px[a] * py[b])).ln();
            }
        }
    }
    mi
}

#[test]
fn criterion_5_metric_oracles() {
    let t0 = Instant::now();
    let mut failures = Vec::new();
    let mut rng = seed_stream(5, "metric-oracles");

    for trial in 0..5 {
        let x: Vec<usize> = (0..40).map(|_| rng.gen_range(0..3)).collect();
        let y: Vec<usize> = (0..40).map(|_| rng.gen_range(0..3)).collect();
        let got = mutual_info_discrete(&x, &y).unwrap();
        let want = oracle_mi(&x, &y);
        check(
            &mut failures,
            (got - want).abs() <= 1e-12,
            format!("mi trial {trial}: {got} vs {want}"),
        );
    }

    // Identity codes on an exact factorial grid: cross-factor mutual
    // information vanishes exactly, so the gap is the whole entropy.
    let factors = factorial_design(10, 3);
    let mig_identity = mig(&factors.clone(), &factors, 10).unwrap();
    check(
        &mut failures,
        (mig_identity - 1.0).abs() <= 1e-9,
        format!("identity mig {mig_identity} != 1"),
    );

    let s = 10_000usize;
    let codes = Array2::from_shape_fn((s, 3), |_| rng.gen_range(0.0..1.0));
    let factors = Array2::from_shape_fn((s, 3), |_| rng.gen_range(0.0..1.0));
    let mig_noise = mig(&codes, &factors, 20).unwrap();
    check(&mut failures, mig_noise < 0.05, format!("noise mig {mig_noise} >= 0.05"));

    let eye = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 1.0 } else { 0.0 });
    let got = dci_disentanglement(&eye).unwrap();
    check(&mut failures, (got - 1.0).abs() <= 1e-12, format!("identity dci {got} != 1"));

    let uniform = Array2::from_elem((3, 3), 1.0 / 3.0);
    let got = dci_disentanglement(&uniform).unwrap();
    check(&mut failures, got.abs() <= 1e-12, format!("uniform dci {got} != 0"));

    let mixed = ndarray::arr2(&[[0.9, 0.1], [0.1, 0.9]]);
    let got = dci_disentanglement(&mixed).unwrap();
    let h = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
    let want = 1.0 - h / 2f64.ln();
    check(&mut failures, (got - want).abs() <= 1e-12, format!("mixed dci {got} vs {want}"));
    check(&mut failures, (got - 0.531).abs() <= 1e-3, format!("mixed dci {got} not near 0.531"));

    let elapsed = t0.elapsed();
    check(&mut failures, elapsed < Duration::from_secs(60), format!("runtime {elapsed:?} >= 60s"));
    println!("  metrics: noise mig {mig_noise:.4}, mixed dci {got:.4}");
    verdict(5, "metric oracles", &failures);
}

// ---------------------------------------------------------------------------
// criterion 6: end-to-end direction recovery and ablation ordering
// ---------------------------------------------------------------------------

/// The pinned desk-scale recovery setup: entangled linear oracle, K = 4
/// factors, D = 8 unit-norm directions, 4 code dimensions, 5000 steps.
fn recovery_config(ablation: &str, lambda: f64, flipping: bool) -> String {
    format!(
        r#"{{
  "backend": {{"kind": "oracle_linear", "factors": 4, "mixing_seed": 9, "entangle": true}},
  "navigator": {{"kind": "unit_columns", "directions": 8}},
  "encoder": {{"n": 4}},
  "sampler": {{"eps_max": 1.0}},
  "loss": {{"lambda": {lambda}, "flipping_enabled": {flipping}}},
  "trainer": {{"steps": 5000, "learning_rate": 0.001, "seed": 0, "ablation_mode": "{ablation}"}}
}}"#
    )
}

fn train_and_score(config_json: &str) -> (f64, f64, GeneratorHandle, Array2<f64>) {
    let cfg = RunConfig::from_json(config_json).unwrap();
    let gen = cfg.build_generator(None).unwrap();
    let resolved = cfg.resolve(&gen).unwrap();
    let state = fit(&resolved, &gen, None, |_, _| Ok(())).unwrap();

    let mut rng = seed_stream(resolved.trainer.seed, "eval");
    let (codes, factors) = encode_dataset(&state.enc, &gen, 5000, &mut rng).unwrap();
    let mig_score = mig(&codes, &factors, 20).unwrap();
    let dci_score =
        dci(&codes, &factors, &ForestConfig { trees: 10, max_depth: 8, seed: 0 }).unwrap();
    let nav_matrix = state.nav.matrix().unwrap().to_owned();
    (mig_score, dci_score, gen, nav_matrix)
}

#[test]
fn criterion_6_end_to_end_recovery_and_ablations() {
    let mut failures = Vec::new();

    let t0 = Instant::now();
    let (mig_full, dci_full, gen, nav) =
        train_and_score(&recovery_config("contrast_variation", 100.0, true));
    let full_runtime = t0.elapsed();

    // (a) every ground-truth mixing column is matched by some learned
    // direction with |cosine| >= 0.95.
    let mixing = gen.oracle_mixing().unwrap();
    let mut worst_best = f64::INFINITY;
    for k in 0..mixing.ncols() {
        let r = mixing.column(k);
        let rn = r.dot(&r).sqrt();
        let mut best = 0.0f64;
        for d in 0..nav.ncols() {
            let a = nav.column(d);
            let cos = (r.dot(&a) / (rn * a.dot(&a).sqrt())).abs();
            best = best.max(cos);
        }
        worst_best = worst_best.min(best);
        check(
            &mut failures,
            best >= 0.95,
            format!("factor {k}: best |cos| {best:.4} < 0.95"),
        );
    }

    // (b) desk-scale disentanglement scores on 5000 held-out samples.
    check(&mut failures, mig_full >= 0.6, format!("full mig {mig_full:.4} < 0.6"));
    check(&mut failures, dci_full >= 0.7, format!("full dci {dci_full:.4} < 0.7"));
    check(
        &mut failures,
        full_runtime < Duration::from_secs(600),
        format!("full run took {full_runtime:?} (>= 10 min)"),
    );

    // (c) ablation ordering on MIG, plus variation beating concatenation.
    let (mig_nodom, _, _, _) = train_and_score(&recovery_config("contrast_variation", 0.0, true));
    let (mig_noflip, _, _, _) =
        train_and_score(&recovery_config("contrast_variation", 0.0, false));
    let (mig_classify, _, _, _) =
        train_and_score(&recovery_config("classify_variation", 100.0, true));
    let (mig_concat, _, _, _) = train_and_score(&recovery_config("contrast_concat", 100.0, true));

    check(
        &mut failures,
        mig_full >= mig_nodom,
        format!("full {mig_full:.4} < no-domination {mig_nodom:.4}"),
    );
    check(
        &mut failures,
        mig_nodom >= mig_noflip,
        format!("no-domination {mig_nodom:.4} < no-flipping {mig_noflip:.4}"),
    );
    check(
        &mut failures,
        mig_noflip >= mig_classify,
        format!("no-flipping {mig_noflip:.4} < classification {mig_classify:.4}"),
    );
    check(
        &mut failures,
        mig_full > mig_concat,
        format!("variation {mig_full:.4} <= concatenation {mig_concat:.4}"),
    );

    println!(
        "  recovery: worst best-|cos| {worst_best:.4}, mig {mig_full:.4}, dci {dci_full:.4}, \
         train {:.1}s",
        full_runtime.as_secs_f64()
    );
    println!(
        "  ablation mig: full {mig_full:.4} >= no-dom {mig_nodom:.4} >= no-flip {mig_noflip:.4} \
         >= classify {mig_classify:.4}; concat {mig_concat:.4}"
    );
    verdict(6, "end-to-end direction recovery and ablation ordering", &failures);
}

// ---------------------------------------------------------------------------
// criterion 7: README reproducibility disclosure
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_readme_disclosure() {
    let mut failures = Vec::new();
    let readme_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let text = fs::read_to_string(&readme_path).unwrap_or_default();
    let lower = text.to_lowercase();

    check(
        &mut failures,
        text.contains("0.512 ± 0.068"),
        "README does not quote the published Shapes3D GAN MIG figure".to_string(),
    );
    check(
        &mut failures,
        lower.contains("not reproducible"),
        "README does not state that published numbers are not reproducible here".to_string(),
    );
    check(
        &mut failures,
        lower.contains("criterion 6"),
        "README does not point to criterion 6 as the substitute check".to_string(),
    );
    verdict(7, "readme reproducibility disclosure", &failures);
}

// ---------------------------------------------------------------------------
// criterion 8: train/eval determinism through the CLI binary
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_cli_determinism() {
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.json");
    fs::write(
        &config_path,
        r#"{
  "backend": {"kind": "oracle_linear", "factors": 4, "mixing_seed": 3, "entangle": false},
  "navigator": {"kind": "unit_columns", "directions": 6},
  "sampler": {"b": 6, "n": 6, "m": 12, "eps_max": 3.0},
  "trainer": {"steps": 40, "learning_rate": 0.001, "seed": 11},
  "eval": {"samples": 400}
}"#,
    )
    .unwrap();

    let bin = env!("CARGO_BIN_EXE_disco");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "disco {:?} failed: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
    };

    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&out_a, &out_b] {
        run(&["train", "--config", config_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    }

    let hash_of = |out: &Path| {
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("checkpoint/manifest.json")).unwrap())
                .unwrap();
        manifest["param_sha256"].as_str().unwrap().to_string()
    };
    let (ha, hb) = (hash_of(&out_a), hash_of(&out_b));
    check(&mut failures, ha == hb, format!("parameter hashes differ: {ha} vs {hb}"));

    let checkpoint = out_a.join("checkpoint");
    let (rep_a, rep_b) = (dir.path().join("report_a.json"), dir.path().join("report_b.json"));
    for rep in [&rep_a, &rep_b] {
        run(&[
            "eval",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--out",
            rep.to_str().unwrap(),
        ]);
    }
    let (bytes_a, bytes_b) = (fs::read(&rep_a).unwrap(), fs::read(&rep_b).unwrap());
    check(&mut failures, bytes_a == bytes_b, "eval reports are not byte-identical".to_string());
    check(&mut failures, !bytes_a.is_empty(), "eval report is empty".to_string());

    println!("  determinism: param hash {ha}");
    verdict(8, "train/eval determinism", &failures);
}
