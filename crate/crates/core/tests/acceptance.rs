//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line and is
//! timed; tests hold a shared lock so runtimes are not inflated by each
//! other.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use num_complex::Complex;
use ultrakin::chaos::{self, ScanOptions};
use ultrakin::fock::{build_hamiltonian, FockCutoff};
use ultrakin::meanfield::{self, ClassicalState, MeanFieldState, NondimParams, VectorField};
use ultrakin::network::parse_network;
use ultrakin::ode::{StepOptions, Tolerances};
use ultrakin::quantum::{self, MicrocanonicalWindow, ObservableSeries, Propagator, QuantumOptions};
use ultrakin::workbench::{self, Format, Mode, RunConfig};

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn c(re: f64) -> Complex<f64> {
    Complex::new(re, 0.0)
}

/// Prints the verdict line and fails the test when a check failed.
fn report(id: u32, title: &str, checks: &[(&str, bool)], elapsed: Duration, limit: Duration) {
    let in_time = elapsed <= limit;
    let ok = in_time && checks.iter().all(|(_, ok)| *ok);
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(d, _)| *d).collect();
    println!(
        "criterion {id:>2} {}: {title} ({:.2} s of {:.0} s){}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!(" failed: {}", failed.join("; ")) }
    );
    for (detail, _) in checks {
        println!("    {detail}");
    }
    assert!(in_time, "criterion {id} exceeded its runtime");
    assert!(ok, "criterion {id} failed: {failed:?}");
}

fn max_abs_error(series: &ObservableSeries<f64>, exact: impl Fn(f64) -> f64) -> f64 {
    series
        .times
        .iter()
        .zip(&series.values)
        .map(|(&t, &v)| (v - exact(t)).abs())
        .fold(0.0, f64::max)
}

fn bare_options(tau_max: f64, dtau: f64) -> QuantumOptions {
    QuantumOptions {
        tau_max,
        dtau,
        entropy: false,
        meanfield: false,
        ..Default::default()
    }
}

#[test]
fn criterion_01_bath_source_grows_quadratically() {
    let _g = serial();
    let start = Instant::now();
    let net = parse_network("0 <k=1> A").unwrap();
    let opts = QuantumOptions {
        cutoff: Some(vec![64]),
        ..bare_options(2.0, 0.01)
    };
    let run = quantum::run_coherent(&net, &[c(0.0)], &opts).unwrap();
    let err = max_abs_error(&run.occupations[0], |t| t * t);
    report(
        1,
        "bath source from vacuum gives <N> = tau^2",
        &[(&format!("max |<N> - tau^2| = {err:.3e} < 1e-6"), err < 1e-6)],
        start.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_02_isomerization_oscillates() {
    let _g = serial();
    let start = Instant::now();
    let net = parse_network("A <k=1> B").unwrap();
    let run = quantum::run_coherent(&net, &[c(3.0), c(0.0)], &bare_options(10.0, 0.01)).unwrap();
    let err = max_abs_error(&run.occupations[0], |t| 9.0 * t.cos().powi(2));
    report(
        2,
        "A <-> B from |alpha|^2 = 9 gives <N_A> = 9 cos^2 tau",
        &[(&format!("max error = {err:.3e} < 1e-6"), err < 1e-6)],
        start.elapsed(),
        Duration::from_secs(5),
    );
}

#[test]
fn criterion_03_two_atom_sector() {
    let _g = serial();
    let start = Instant::now();
    let net = parse_network("A + A <k=1> A2").unwrap();
    let layout = quantum::sector_layout(&net, &[2]).unwrap();
    let block = build_hamiltonian::<f64>(&net, layout[0].clone()).unwrap();
    let mut expect = [[0.0; 2]; 2];
    let (i20, i01) = (layout[0].position(&[2, 0]).unwrap(), layout[0].position(&[0, 1]).unwrap());
    expect[i20][i01] = 2f64.sqrt();
    expect[i01][i20] = 2f64.sqrt();
    let block_err = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (block.matrix[(i, j)] - expect[i][j]).abs())
        .fold(0.0, f64::max);

    let psi = quantum::QuantumState::from_occupations(&layout, &[(vec![2, 0], c(1.0))]).unwrap();
    let blocks = quantum::hamiltonian_blocks::<f64>(&net, &layout).unwrap();
    let eig = Arc::new(quantum::diagonalize(&blocks).unwrap());
    let p = Propagator::new(eig.clone(), &psi).unwrap();
    let times = ultrakin::ode::uniform_grid(0.0, 200.0, 0.01).unwrap();
    let states = quantum::evolve(eig, &psi, &times).unwrap();
    let values: Vec<f64> = states.iter().map(|s| quantum::number_expectation(s, 0)).collect();
    let in_range = values.iter().all(|&v| (-1e-12..=2.0 + 1e-12).contains(&v));
    let (mean, var) = quantum::time_average(&ObservableSeries::new(times, values).unwrap(), 0.0, 200.0).unwrap();
    let (d_mean, d_fluct) = quantum::diagonal_ensemble(&p, 0).unwrap();
    report(
        3,
        "charge-2 diatomic block and its dynamics",
        &[
            (&format!("block deviation from [[0,sqrt2],[sqrt2,0]] = {block_err:.1e}"), block_err < 1e-14),
            ("<N_A> stays in [0, 2]", in_range),
            (&format!("time average {mean:.5} = 1 +- 1%"), (mean - 1.0).abs() < 0.01),
            (&format!("time variance {var:.5} = 0.5 +- 5%"), (var - 0.5).abs() < 0.025),
            (&format!("diagonal ensemble ({d_mean:.15}, {d_fluct:.15}) = (1, 0.5)"), (d_mean - 1.0).abs() < 1e-12 && (d_fluct - 0.5).abs() < 1e-12),
        ],
        start.elapsed(),
        Duration::from_secs(1),
    );
}

struct Quench {
    tau_mf: f64,
    max_rel_dev: f64,
    var_ratio: f64,
}

fn diatomic_quench(n: f64) -> Quench {
    let opts = QuantumOptions {
        entropy: false,
        ..Default::default()
    };
    let run = quantum::run_coherent(&quantum::diatomic_network(n), &[c(n.sqrt()), c(0.0)], &opts).unwrap();
    let tau_mf = run.tau_mf.expect("mean field breaks down within the run");
    let q = &run.occupations[0];
    let mf = &run.meanfield.as_ref().unwrap()[0];
    let max_rel_dev = (0..q.len())
        .filter(|&i| q.times[i] < 0.5 * tau_mf)
        .map(|i| (q.values[i] - mf.values[i]).abs() / mf.values[i].abs())
        .fold(0.0, f64::max);
    let (_, evanescent) = quantum::time_average(q, tau_mf, 3.0 * tau_mf).unwrap();
    let (_, asymptotic) = quantum::time_average(q, 10.0, 20.0).unwrap();
    Quench {
        tau_mf,
        max_rel_dev,
        var_ratio: asymptotic / evanescent,
    }
}

#[test]
fn criterion_04_meanfield_breakdown_and_relaxation() {
    let _g = serial();
    let start = Instant::now();
    let runs: Vec<(f64, Quench)> = [25.0, 50.0, 100.0].into_iter().map(|n| (n, diatomic_quench(n))).collect();
    let big = &runs[2].1;
    let increasing = runs.windows(2).all(|w| w[1].1.tau_mf > w[0].1.tau_mf);
    let taus: Vec<String> = runs.iter().map(|(n, q)| format!("N={n}: {:.3}", q.tau_mf)).collect();
    report(
        4,
        "quantum vs mean-field atom number after a coherent quench",
        &[
            (&format!("N=100 max relative deviation before 0.5 tau_MF = {:.4} < 0.02", big.max_rel_dev), big.max_rel_dev < 0.02),
            (&format!("N=100 asymptotic/evanescent variance = {:.4} < 0.1", big.var_ratio), big.var_ratio < 0.1),
            (&format!("tau_MF strictly increasing: {}", taus.join(", ")), increasing),
        ],
        start.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_05_entanglement_growth() {
    let _g = serial();
    let start = Instant::now();
    let n = 100.0;
    let net = quantum::diatomic_network(n);
    let amps = [c(n.sqrt()), c(0.0)];
    let run = quantum::run_coherent(&net, &amps, &QuantumOptions::default()).unwrap();
    let tau_mf = run.tau_mf.unwrap();
    let s = run.entropy.as_ref().unwrap();
    let (early, _) = quantum::time_average(s, 0.0, 0.3 * tau_mf).unwrap();
    let (late, _) = quantum::time_average(s, 2.0 * tau_mf, 4.0 * tau_mf).unwrap();
    let cutoff = FockCutoff::for_coherent(&[n, 0.0], ultrakin::fock::DEFAULT_TAIL_MASS);
    let psi = quantum::coherent_product_state(&net, &amps, &cutoff, ultrakin::fock::DEFAULT_TAIL_MASS).unwrap();
    let support = |species: usize| -> usize {
        psi.layout()
            .iter()
            .flat_map(|b| b.occupations_of(species))
            .collect::<BTreeSet<u32>>()
            .len()
    };
    let bound = (support(0).min(support(1)) as f64).ln();
    let s_max = s.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    report(
        5,
        "atomic entanglement entropy grows after the breakdown",
        &[
            (&format!("S(0) = {:.2e} < 0.05", s.values[0]), s.values[0] < 0.05),
            (&format!("late mean {late:.4} >= 5 x early mean {early:.4}"), late >= 5.0 * early),
            (&format!("max S = {s_max:.4} <= ln(min subsystem dim) = {bound:.4}"), s_max <= bound + 1e-12),
        ],
        start.elapsed(),
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_06_relative_fluctuations_shrink() {
    let _g = serial();
    let start = Instant::now();
    let ns = [20.0, 50.0, 100.0, 200.0];
    let rel: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let (mean, fluct) = workbench::ensemble_point(n, ultrakin::fock::DEFAULT_TAIL_MASS, None).unwrap();
            fluct / mean
        })
        .collect();
    let decreasing = rel.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = ns.iter().zip(&rel).map(|(n, r)| format!("N={n}: {r:.4}")).collect();
    report(
        6,
        "relative temporal fluctuations decrease with N",
        &[(&format!("sqrt(dN^2)/N strictly decreasing: {}", shown.join(", ")), decreasing)],
        start.elapsed(),
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_07_no_thermalization() {
    let _g = serial();
    let start = Instant::now();
    let n = 100.0;
    let net = quantum::diatomic_network(n);
    let tail = ultrakin::fock::DEFAULT_TAIL_MASS;
    let psi = quantum::coherent_product_state(&net, &[c(n.sqrt()), c(0.0)], &FockCutoff::for_coherent(&[n, 0.0], tail), tail).unwrap();
    let blocks = quantum::hamiltonian_blocks::<f64>(&net, &psi.layout()).unwrap();
    let p = Propagator::new(Arc::new(quantum::diagonalize(&blocks).unwrap()), &psi).unwrap();
    let r = quantum::ensemble_report(&p, 0, &MicrocanonicalWindow::default()).unwrap();
    let gap = (r.mean_diag - r.mean_micro).abs();
    let bound = 3.0 * r.fluct_sq.sqrt();
    report(
        7,
        "diagonal ensemble differs from the microcanonical average",
        &[(
            &format!("|{:.4} - {:.4}| = {gap:.4} > 3 sqrt(dN^2) = {bound:.4}", r.mean_diag, r.mean_micro),
            gap > bound,
        )],
        start.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_08_raman_rate() {
    let _g = serial();
    let start = Instant::now();
    // 10 mW / 0.25 mm² = 4000 mW/cm²; Rabi frequencies scale with √I
    let two_pi = 2.0 * std::f64::consts::PI;
    let root_intensity = (10.0 / 0.25e-2f64).sqrt();
    let k1 = two_pi * 1.17e6 * root_intensity;
    let k2 = two_pi * 0.4e3 * root_intensity;
    let k = quantum::raman_rate(k1, k2, two_pi * 750e6).unwrap() / two_pi;
    report(
        8,
        "two-photon Raman rate",
        &[(&format!("k = {:.4} kHz = 1.25 kHz +- 5%", k / 1e3), (k / 1.25e3 - 1.0).abs() < 0.05)],
        start.elapsed(),
        Duration::from_millis(100),
    );
}

#[test]
fn criterion_09_meanfield_conservation() {
    let _g = serial();
    let start = Instant::now();
    let opts = StepOptions::from(Tolerances { rel: 1e-12, abs: 1e-14 });
    let mut checks = Vec::new();
    for c1 in [0.0, 0.1] {
        let params = NondimParams::<f64>::from_couplings(c1, 1.1);
        let initial = chaos::sample_energy_surface(100.0, &params, 1, 2).unwrap()[0].to_state();
        let field = meanfield::nondim_vector_field(params);
        let tr = meanfield::integrate(&field, &initial, 1000.0, 1.0, opts).unwrap();
        let e_drift = tr.relative_energy_drift();

        let closed = meanfield::nondim_vector_field(params).without_bath();
        assert_eq!(closed.modes(), 2);
        let tr = meanfield::integrate(&closed, &initial, 1000.0, 1.0, opts).unwrap();
        let n_tot = |s: &MeanFieldState<f64>| s.occupation(0) + 2.0 * s.occupation(1);
        let n0 = n_tot(&tr.states[0]);
        let n_drift = tr.states.iter().map(|s| (n_tot(s) - n0).abs() / n0).fold(0.0, f64::max);
        checks.push((format!("c1 = {c1}: relative energy drift = {e_drift:.2e} < 1e-8"), e_drift < 1e-8));
        checks.push((format!("c1 = {c1}: relative N_tot drift without bath = {n_drift:.2e} < 1e-9"), n_drift < 1e-9));
    }
    let checks: Vec<(&str, bool)> = checks.iter().map(|(d, ok)| (d.as_str(), *ok)).collect();
    report(
        9,
        "mean-field invariants over tau in [0, 1000] at rel 1e-12, abs 1e-14",
        &checks,
        start.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_10_modulation_scaling() {
    let _g = serial();
    let start = Instant::now();
    let (a0, c2) = (1000.0, 1.1);
    let grid = [1e-7, 3e-7, 1e-6, 3e-6, 1e-5];
    let mut logs = Vec::new();
    let mut freqs = Vec::new();
    let mut ratios = Vec::new();
    let mut valid = true;
    for c1 in grid {
        let params = NondimParams::<f64>::from_couplings(c1, c2);
        let field = meanfield::nondim_vector_field(params);
        let initial = MeanFieldState::new(vec![c(a0), c(0.0)]);
        let tr = meanfield::integrate(&field, &initial, 500.0, 0.05, StepOptions::default()).unwrap();
        let fit = chaos::measure_modulation(&tr.times, &tr.occupations(0)).unwrap();
        let pred = meanfield::perturbative_modulation(c1, c2, a0).unwrap();
        valid &= pred.valid;
        logs.push((c1.ln(), fit.amplitude.ln()));
        freqs.push(fit.frequency);
        ratios.push(fit.amplitude / pred.amplitude);
    }
    let n = logs.len() as f64;
    let (mx, my) = (logs.iter().map(|p| p.0).sum::<f64>() / n, logs.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let freq_ok = freqs.iter().all(|w| (w / 0.1 - 1.0).abs() < 0.05);
    let ratio_ok = ratios.iter().all(|r| (r - 1.0).abs() < 0.1);
    report(
        10,
        "modulation amplitude scales as c1^2 at c2 = 1.1",
        &[
            ("all c1 inside the validity region", valid),
            (&format!("fitted exponent p = {slope:.4} = 2.0 +- 0.1"), (slope - 2.0).abs() < 0.1),
            (&format!("omega_mod = {freqs:.5?} = 0.1 +- 5%"), freq_ok),
            (&format!("measured/predicted amplitude = {ratios:.4?} within 10%"), ratio_ok),
        ],
        start.elapsed(),
        Duration::from_secs(60),
    );
}

fn interior_max(v: &[f64]) -> bool {
    let (i, _) = v.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b });
    i > 0 && i + 1 < v.len()
}

#[test]
fn criterion_11_chaos_regimes() {
    let _g = serial();
    let start = Instant::now();
    let opts = ScanOptions::default();
    let points = chaos::regime_scan(&opts).unwrap();
    let baseline = chaos::regime_scan(&ScanOptions {
        c1_grid: vec![0.0],
        ..opts.clone()
    })
    .unwrap()[0]
        .lambda_max
        .abs();
    let lambdas: Vec<f64> = points.iter().map(|p| p.lambda_max).collect();
    let fills: Vec<f64> = points.iter().map(|p| p.filling_fraction).collect();
    let (first, last) = (lambdas[0], lambdas[lambdas.len() - 1]);
    let peak = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for p in &points {
        println!("    c1 = {:>7.1e}: lambda_max = {:>10.3e}, filling = {:.4}", p.c1, p.lambda_max, p.filling_fraction);
    }
    report(
        11,
        "regular-chaotic-regular sequence over the c1 grid at E = 100, c2 = 1.1",
        &[
            ("lambda_max has an interior maximum", interior_max(&lambdas)),
            ("filling fraction has an interior maximum", interior_max(&fills)),
            (&format!("endpoint lambda_max {first:.2e}, {last:.2e} < 1e-3"), first < 1e-3 && last < 1e-3),
            (&format!("peak lambda_max {peak:.3e} >= 10 x c1=0 baseline {baseline:.2e}"), peak >= 10.0 * baseline),
        ],
        start.elapsed(),
        Duration::from_secs(600),
    );
}

#[test]
fn criterion_12_classical_relaxation() {
    let _g = serial();
    let start = Instant::now();
    let net = parse_network("A + A <k=1> A2").unwrap();
    let field = meanfield::classical_rate_field::<f64>(&net);
    let tr = meanfield::integrate_classical(
        &field,
        &ClassicalState { concentrations: vec![1.0, 0.0] },
        50.0,
        0.5,
        StepOptions::default(),
    )
    .unwrap();
    let last = &tr.states.last().unwrap().concentrations;
    report(
        12,
        "rate equations relax to the fixed point",
        &[(
            &format!("[A] = {:.9}, [A2] = {:.9} vs (0.5, 0.25) within 1e-6", last[0], last[1]),
            (last[0] - 0.5).abs() < 1e-6 && (last[1] - 0.25).abs() < 1e-6,
        )],
        start.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_13_determinism() {
    let _g = serial();
    let start = Instant::now();
    let configs = {
        let mut poincare = RunConfig::new(Mode::Poincare);
        poincare.trajectories = 4;
        poincare.tau_max = Some(500.0);
        poincare.seed = Some(2024);
        let mut quantum = RunConfig::new(Mode::Quantum);
        quantum.n = 30.0;
        quantum.tau_max = Some(5.0);
        quantum.seed = Some(1);
        let mut lyap = RunConfig::new(Mode::Lyapunov);
        lyap.trajectories = 3;
        lyap.tau_max = Some(200.0);
        lyap.seed = Some(77);
        [poincare, quantum, lyap]
    };
    let mut checks = Vec::new();
    for cfg in &configs {
        let export = || {
            let dir = tempfile::tempdir().unwrap();
            let bundle = workbench::run(cfg).unwrap();
            let files = workbench::export(&bundle, dir.path(), &[Format::Csv]).unwrap();
            files
                .iter()
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
                .collect::<Vec<_>>()
        };
        let (a, b) = (export(), export());
        checks.push((format!("{} mode: {} CSV files byte-identical", cfg.mode, a.len()), !a.is_empty() && a == b));
    }
    let checks: Vec<(&str, bool)> = checks.iter().map(|(d, ok)| (d.as_str(), *ok)).collect();
    report(13, "re-runs with the same seed", &checks, start.elapsed(), Duration::from_secs(60));
}
