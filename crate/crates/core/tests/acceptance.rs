//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topa_core::aaw::{compute_weights, AawConfig};
use topa_core::datagen::{gen_core_series, synth_tts, CoreModel, SynthConfig};
use topa_core::engine::{
    initial_state, objective, predict_next, stage1_fit, sweep, CoreUpdateMode, Hyperparams, PredictorState,
};
use topa_core::evalio::{decode_tts, encode_tts, mean, nrmse, AnyTts, TtsRecord};
use topa_core::linalg::procrustes;
use topa_core::matrix::DenseMatrix;
use topa_core::regression::{fit_ar, ArParams, ArSpec};
use topa_core::runner::{run_bench, BenchConfig, Method, StreamConfig};
use topa_core::scalar::Scalar;
use topa_core::tensor::DenseTensor;

// Criterion 1 and 2.
const BENCH_SEEDS: u64 = 100;
const NRMSE_BAND: (f64, f64) = (0.05, 0.13);
const NRMSE_GAP: f64 = 0.01;
const STAGE1_BUDGET: usize = 20;
const SPEEDUP: f64 = 0.8;
// Criterion 3.
const DRIFT_SEEDS: u64 = 50;
const DRIFT_ANGLE: f64 = 0.007;
const AAW_WIN_SHARE: f64 = 0.70;
// Criterion 4.
const DESCENT_INSTANCES: u64 = 100;
const DESCENT_SLACK: f64 = 1e-9;
// Criterion 5.
const RECOVERY_OBJECTIVE: f64 = 1e-6;
const RECOVERY_NRMSE: f64 = 1e-3;
const RECOVERY_COEFF: f64 = 1e-6;
// Criterion 6.
const KERNEL_BUDGET_SECS: f64 = 60.0;
// Criterion 7.
const SCALING_BAND: (f64, f64) = (1.5, 2.5);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn bench_hyper() -> Hyperparams {
    let mut hyper = Hyperparams::new(vec![4, 4, 4], ArSpec::new(3, 1).unwrap());
    hyper.max_iter_stage1 = STAGE1_BUDGET;
    hyper
}

fn bench_stream() -> StreamConfig {
    StreamConfig {
        t0: 20,
        hyper: bench_hyper(),
        aaw: AawConfig::new(8, 0.9, 0.6),
        seed: 0,
    }
}

fn accuracy_and_speed() -> (Outcome, Outcome) {
    let cfg = BenchConfig {
        synth: SynthConfig::new(vec![20, 20, 20], vec![4, 4, 4], 70, 0),
        stream: bench_stream(),
        methods: vec![Method::Topa, Method::OfflineRefit],
        seeds: (0..BENCH_SEEDS).collect(),
    };
    let report = run_bench(&cfg).expect("benchmark runs");
    let topa = report.summary(Method::Topa).unwrap();
    let off = report.summary(Method::OfflineRefit).unwrap();
    let gap = (topa.mean_nrmse - off.mean_nrmse).abs();
    let in_band = (NRMSE_BAND.0..=NRMSE_BAND.1).contains(&topa.mean_nrmse);
    let c1 = outcome(
        in_band && gap <= NRMSE_GAP,
        format!(
            "{} seeds: mean NRMSE topa {:.5} (band [{}, {}]), offline {:.5}, gap {:.2e} (<= {})",
            topa.runs, topa.mean_nrmse, NRMSE_BAND.0, NRMSE_BAND.1, off.mean_nrmse, gap, NRMSE_GAP
        ),
    );
    let ratio = topa.mean_step_micros / off.mean_step_micros;
    let c2 = outcome(
        ratio <= SPEEDUP,
        format!(
            "step time topa {:.3} ms vs offline {:.3} ms (budget {} iters): ratio {:.3} (<= {})",
            topa.mean_step_micros / 1e3,
            off.mean_step_micros / 1e3,
            STAGE1_BUDGET,
            ratio,
            SPEEDUP
        ),
    );
    (c1, c2)
}

fn aaw_under_drift() -> Outcome {
    let mut synth = SynthConfig::new(vec![20, 20, 20], vec![4, 4, 4], 70, 0);
    synth.drift_angle = DRIFT_ANGLE;
    let cfg = BenchConfig {
        synth,
        stream: bench_stream(),
        methods: vec![Method::Topa, Method::TopaAaw, Method::TopaInit],
        seeds: (0..DRIFT_SEEDS).collect(),
    };
    let report = run_bench(&cfg).expect("drift benchmark runs");
    let topa = report.summary(Method::Topa).unwrap();
    let aaw = report.summary(Method::TopaAaw).unwrap();
    let wins = topa
        .run_nrmse
        .iter()
        .zip(&aaw.run_nrmse)
        .filter(|(t, a)| a < t)
        .count();
    let share = wins as f64 / topa.runs as f64;

    // Calibration echo: growth of the frozen predictor's error over the stream.
    let probe = SynthConfig {
        seed: 0,
        ..cfg.synth.clone()
    };
    let xs = synth_tts::<f64>(&probe).unwrap().record.into_tensors();
    let init = topa_core::runner::run_stream(&xs, Method::TopaInit, &cfg.stream)
        .unwrap()
        .report;
    let growth = mean(&init.nrmse[38..]) / mean(&init.nrmse[..12]);

    outcome(
        share >= AAW_WIN_SHARE,
        format!(
            "angle {DRIFT_ANGLE} rad/step (topa-init last/first quartile x{growth:.2} on seed 0): \
             aaw beats topa in {wins}/{} seeds ({:.0}% >= {:.0}%); means aaw {:.4}, topa {:.4}",
            topa.runs,
            share * 100.0,
            AAW_WIN_SHARE * 100.0,
            aaw.mean_nrmse,
            topa.mean_nrmse
        ),
    )
}

fn gaussian_series<S: Scalar>(dims: &[usize], len: usize, rng: &mut ChaCha8Rng) -> Vec<DenseTensor<S>> {
    (0..len)
        .map(|_| DenseTensor::from_fn(dims, |_| S::gaussian(rng)).unwrap())
        .collect()
}

/// Checks both proof inequalities along every Stage I iterate of one instance.
fn descent_instance<S: Scalar>(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let order = rng.gen_range(2..=3);
    let dims: Vec<usize> = (0..order).map(|_| rng.gen_range(2..=6)).collect();
    let ranks: Vec<usize> = dims.iter().map(|&i| rng.gen_range(1..=i)).collect();
    let spec = ArSpec::new(rng.gen_range(1..=2), rng.gen_range(0..=1)).unwrap();
    let len = rng.gen_range(spec.lag() + 2..=10);
    let mut hyper = Hyperparams::new(ranks, spec);
    hyper.core_update_mode = CoreUpdateMode::ExactBlock;
    hyper.varphi = rng.gen_range(1.0..10.0);
    hyper.lambda = rng.gen_range(0.1..2.0);
    let xs = gaussian_series::<S>(&dims, len, rng);
    let mut state: PredictorState<S> = initial_state(&xs, &hyper, rng.gen()).map_err(|e| e.to_string())?;
    let f0 = objective(&state, &hyper, None).unwrap();
    let bound: Vec<f64> = xs.iter().map(|x| 2.0 * f0 + 2.0 * x.frob_norm_sq()).collect();
    let check_bound = |st: &PredictorState<S>, k: usize| -> Result<(), String> {
        for (t, g) in st.cores.iter().enumerate() {
            if g.frob_norm_sq() > bound[t] * (1.0 + 1e-12) {
                return Err(format!("core bound violated at iterate {k}, t={t}"));
            }
        }
        Ok(())
    };
    check_bound(&state, 0)?;
    let mut f_prev = f0;
    let iters = 30;
    for k in 1..=iters {
        let stats = sweep(&mut state, &hyper, None).map_err(|e| e.to_string())?;
        let lhs = stats.objective + hyper.lambda / 2.0 * stats.change_sq;
        if lhs > f_prev + DESCENT_SLACK * (1.0 + f_prev) {
            return Err(format!(
                "descent violated at iterate {k}: {lhs:.12e} > {f_prev:.12e} (dims {dims:?}, {spec:?})"
            ));
        }
        check_bound(&state, k)?;
        f_prev = stats.objective;
    }
    Ok(iters)
}

fn descent_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for k in 0..DESCENT_INSTANCES {
        // A quarter of the instances are complex.
        let res = if k % 4 == 3 {
            descent_instance::<Complex64>(&mut rng)
        } else {
            descent_instance::<f64>(&mut rng)
        };
        match res {
            Ok(n) => checked += n,
            Err(e) => return outcome(false, format!("instance {k}: {e}")),
        }
    }
    outcome(
        true,
        format!("{DESCENT_INSTANCES} instances, {checked} iterates: descent and core bound hold"),
    )
}

fn exact_recovery() -> Outcome {
    let mut worst_obj = 0.0f64;
    let mut worst_err = 0.0f64;
    for seed in 0..5 {
        let mut cfg = SynthConfig::new(vec![6, 5, 4], vec![2, 2, 2], 13, seed);
        cfg.rho = 0.0;
        cfg.core = CoreModel {
            coeffs: vec![0.95],
            d: 0,
        };
        cfg.innovation_scale = 0.0;
        cfg.init_scale = 1.0;
        cfg.burn_in = 0;
        let xs = synth_tts::<f64>(&cfg).unwrap().record.into_tensors();
        let mut hyper = Hyperparams::new(vec![2, 2, 2], ArSpec::new(1, 0).unwrap());
        hyper.eps = 1e-14;
        hyper.max_iter_stage1 = 500;
        let state = stage1_fit(&xs[..12], &hyper, seed).unwrap();
        worst_obj = worst_obj.max(state.objective);
        let pred = predict_next(&state, &hyper).unwrap();
        worst_err = worst_err.max(nrmse(&pred, &xs[12]).unwrap());
    }

    let planted = [0.6, -0.2, 0.1];
    let mut worst_coeff = 0.0f64;
    for seed in 0..5 {
        let mut cfg = SynthConfig::new(vec![3, 3], vec![3, 3], 30, seed);
        cfg.core = CoreModel {
            coeffs: planted.to_vec(),
            d: 0,
        };
        cfg.innovation_scale = 0.0;
        cfg.init_scale = 1.0;
        cfg.burn_in = 0;
        let g = gen_core_series::<f64>(&cfg).unwrap();
        let fit = fit_ar(&g, ArSpec::new(3, 0).unwrap(), 0.0, &ArParams::zeros(3)).unwrap();
        for (a, b) in fit.alpha.iter().zip(planted) {
            worst_coeff = worst_coeff.max((a - b).abs());
        }
    }
    outcome(
        worst_obj <= RECOVERY_OBJECTIVE && worst_err <= RECOVERY_NRMSE && worst_coeff <= RECOVERY_COEFF,
        format!(
            "max objective {worst_obj:.2e} (<= {RECOVERY_OBJECTIVE}), max NRMSE {worst_err:.2e} \
             (<= {RECOVERY_NRMSE}), max coefficient error {worst_coeff:.2e} (<= {RECOVERY_COEFF})"
        ),
    )
}

fn kernel_suites() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();

    for _ in 0..200 {
        let order = rng.gen_range(1..=4);
        let dims: Vec<usize> = (0..order).map(|_| rng.gen_range(1..=5)).collect();
        let x = DenseTensor::from_fn(&dims, |_| Complex64::gaussian(&mut rng)).unwrap();
        let m = rng.gen_range(0..order);
        let unf = x.unfold(m).unwrap();
        if DenseTensor::fold(&unf, m, &dims).unwrap() != x {
            failures.push("fold(unfold) round trip");
        }
        let u = DenseMatrix::from_fn(rng.gen_range(1..=4), dims[m], |_, _| Complex64::gaussian(&mut rng));
        let lhs = x.mode_product(&u, m).unwrap().unfold(m).unwrap();
        let rhs = u.matmul(&unf).unwrap();
        if lhs.dist_sq(&rhs).unwrap().sqrt() > 1e-12 * (1.0 + rhs.frob_norm()) {
            failures.push("mode product vs unfolding");
        }
    }

    for _ in 0..20 {
        let rows = rng.gen_range(2..=8);
        let cols = rng.gen_range(1..=rows);
        let w = DenseMatrix::from_fn(rows, cols, |_, _| f64::gaussian(&mut rng));
        let u = procrustes(&w).unwrap();
        if u.orthonormality_error() > 1e-10 {
            failures.push("procrustes orthonormality");
        }
        let best = u.re_inner(&w).unwrap();
        for _ in 0..1000 {
            let v = procrustes(&DenseMatrix::from_fn(rows, cols, |_, _| f64::gaussian(&mut rng))).unwrap();
            if v.re_inner(&w).unwrap() > best + 1e-10 {
                failures.push("procrustes sampled optimality");
                break;
            }
        }
    }

    let cfg = AawConfig::new(4, 0.5, 0.4);
    let wv = compute_weights(&cfg, 10, &[Some(0.1), Some(0.9), Some(0.0)]).unwrap();
    if *wv.weights.last().unwrap() != 1.0 {
        failures.push("newest weight is not 1");
    }
    if (wv.weights[0] - 0.45).abs() > 1e-15 {
        failures.push("weight spot value 0.45");
    }
    if (wv.weights[1] - (1.0 - 0.25) * 0.4).abs() > 1e-15 {
        failures.push("weight floor activation");
    }

    for k in 0..100 {
        let order = rng.gen_range(1..=3);
        let dims: Vec<usize> = (0..order).map(|_| rng.gen_range(1..=4)).collect();
        let len = rng.gen_range(0..=4);
        let ok = if k % 2 == 0 {
            let rec = TtsRecord::new(dims.clone(), gaussian_series::<f64>(&dims, len, &mut rng), None).unwrap();
            decode_tts(&encode_tts(&rec).unwrap()).unwrap() == AnyTts::Real(rec)
        } else {
            let ts = Some((0..len).map(|i| i as f64 * 0.5).collect());
            let rec = TtsRecord::new(dims.clone(), gaussian_series::<Complex64>(&dims, len, &mut rng), ts).unwrap();
            decode_tts(&encode_tts(&rec).unwrap()).unwrap() == AnyTts::Complex(rec)
        };
        if !ok {
            failures.push("file round trip");
        }
    }

    let secs = start.elapsed().as_secs_f64();
    failures.dedup();
    outcome(
        failures.is_empty() && secs < KERNEL_BUDGET_SECS,
        format!(
            "unfold/fold, mode product, procrustes, weights, file round trips in {secs:.2} s (< {KERNEL_BUDGET_SECS} s){}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failures: {failures:?}")
            }
        ),
    )
}

/// Median time of one weighted sweep over a window of `tau` active entries.
fn sweep_time(tau: usize, reps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let hyper = bench_hyper();
    let lag = hyper.spec.lag();
    let xs = gaussian_series::<f64>(&[20, 20, 20], tau + lag, &mut rng);
    let mut state = initial_state(&xs, &hyper, 1).unwrap();
    state.active_start = lag;
    let weights = vec![0.9; tau];
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            sweep(&mut state, &hyper, Some(&weights)).unwrap();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[reps / 2]
}

fn window_scaling() -> Outcome {
    let tau = 16;
    sweep_time(tau, 5);
    let a = sweep_time(tau, 41);
    let b = sweep_time(2 * tau, 41);
    let ratio = b / a;
    outcome(
        (SCALING_BAND.0..=SCALING_BAND.1).contains(&ratio),
        format!(
            "median sweep {:.3} ms at tau={tau}, {:.3} ms at tau={}: ratio {ratio:.3} (in [{}, {}])",
            a * 1e3,
            b * 1e3,
            2 * tau,
            SCALING_BAND.0,
            SCALING_BAND.1
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let (c1, c2) = accuracy_and_speed();
    results.push((1, "synthetic accuracy band", c1));
    results.push((2, "online speedup", c2));
    results.push((3, "AAW advantage under drift", aaw_under_drift()));
    results.push((4, "descent property suite", descent_suite()));
    results.push((5, "exact recovery suite", exact_recovery()));
    results.push((6, "kernel property suites", kernel_suites()));
    results.push((7, "windowed cost scaling", window_scaling()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{tag} criterion {n} ({name}): {}", o.detail);
    }
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
