//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL without failing
//! the process; set `QLIMITS_ACCEPTANCE_STRICT=1` to make every FAIL fatal.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use qlimits::build;
use qlimits::config::{
    AmplitudeSource, CompositeConfig, DeviceSource, EnergySource, OperatorSource, Phases,
};
use qlimits::manifest::RunManifest;
use qlimits::{exit, run_experiment, RunRequest};
use qlimits_core::fidelity::{
    bound_points, characteristic_time, fit_bound_constant, mixing_matrix, peres_condition_check,
    speed_limit_check, BoundOptions, CoarseningSpec, PeresThresholds,
};
use qlimits_core::measurement::{
    build_device, exact_oracle_readout, free_readout, gamma_phase, interacting_readout, quality,
    CompositeModel, MeasurementDevice,
};
use qlimits_core::peres::{ensemble_echo, sample_gue, BaseHamiltonian, EchoOrdering, EnsembleSpec};
use qlimits_core::seeding::rng;
use qlimits_core::truncation::{
    determinant_modulus, make_truncation, minimal_rank_for_epsilon, truncated_evolution,
    truncation_error, Basis,
};
use qlimits_core::{
    evolve, operator_norm, spectral_decompose, Complex64, ComplexMatrix, ComplexVector,
    HermitianOperator, OperatorRole, PhaseSign, SpectralDecomposition, StateVector, TimeGrid,
};
use rand::Rng;
use rand_distr::StandardNormal;

const KNOWN_FAILURES: &[u32] = &[6];

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_state(dim: usize, seed: u64) -> StateVector {
    let mut r = rng(seed);
    let v = ComplexVector::from_fn(dim, |_, _| {
        Complex64::new(r.sample(StandardNormal), r.sample(StandardNormal))
    });
    StateVector::normalized(v).unwrap()
}

fn random_device(channels: usize, dim: usize, seed: u64) -> MeasurementDevice {
    let mut r = rng(seed);
    let raw = DMatrix::from_fn(channels, dim, |_, _| r.random::<f64>() + 0.05);
    let sums: Vec<f64> = (0..dim).map(|k| raw.column(k).sum()).collect();
    build_device(DMatrix::from_fn(channels, dim, |a, k| {
        raw[(a, k)] / sums[k]
    }))
    .unwrap()
}

fn exp_i(m: &ComplexMatrix, t: f64) -> ComplexMatrix {
    (m * Complex64::new(0.0, t)).exp()
}

fn c1_unitarity() -> Check {
    let dim = 128;
    let delta = 1e-3;
    let mut worst_defect = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for seed in 0..50 {
        let h = sample_gue(dim, 1.0, 1000 + seed);
        let norm = operator_norm(h.matrix()).map_err(|e| e.to_string())?;
        let dec = spectral_decompose(&h).map_err(|e| e.to_string())?;
        for &t in &[0.3, 2.0, 17.0] {
            let u = dec.propagator(t, PhaseSign::Positive);
            let eye = ComplexMatrix::identity(dim, dim);
            let defect = operator_norm(&(u.adjoint() * &u - eye)).unwrap();
            worst_defect = worst_defect.max(defect);
            let step =
                operator_norm(&(dec.propagator(t + delta, PhaseSign::Positive) - &u)).unwrap();
            let bound = delta * norm + delta * delta * norm * norm;
            worst_ratio = worst_ratio.max(step / bound);
        }
    }
    ensure(worst_defect <= 1e-10, || {
        format!("unitarity defect {worst_defect:e}")
    })?;
    ensure(worst_ratio <= 1.0, || {
        format!("step / bound = {worst_ratio}")
    })?;
    Ok(format!(
        "max ||U*U - I|| = {worst_defect:.1e}, max step/bound = {worst_ratio:.3}"
    ))
}

/// Random phases with weights `exp(-k / 12)` on the eigenvectors of `dec`, ascending energy.
fn low_energy_state(dec: &SpectralDecomposition, seed: u64) -> StateVector {
    let mut r = rng(seed);
    let coeffs = ComplexVector::from_fn(dec.dim(), |k, _| {
        Complex64::from_polar(
            (-(k as f64) / 12.0).exp(),
            r.random::<f64>() * std::f64::consts::TAU,
        )
    });
    StateVector::normalized(dec.eigenvectors() * coeffs).unwrap()
}

fn c2_minimal_rank() -> Check {
    let dim = 256;
    let eps = 1e-3;
    let grid = TimeGrid::uniform(2.0, 101).unwrap();
    let mut ranks = Vec::new();
    let mut worst_full = 0.0f64;
    for seed in 0..20 {
        let h = sample_gue(dim, 1.0, 2000 + seed);
        let a0 = sample_gue(dim, 1.0, 3000 + seed);
        let dec = spectral_decompose(&h).unwrap();
        let psi = low_energy_state(&dec, 4000 + seed);
        let search =
            minimal_rank_for_epsilon(&psi, &a0, &h, &grid, eps).map_err(|e| e.to_string())?;
        ensure(search.rank <= dim, || {
            format!("seed {seed}: rank {}", search.rank)
        })?;
        let pair = make_truncation(Basis::Eigen(&dec), search.rank).unwrap();
        let verified = truncation_error(&psi, &a0, &h, &pair, &grid)
            .unwrap()
            .max_error;
        ensure(verified <= eps, || {
            format!("seed {seed}: error {verified:e} at rank {}", search.rank)
        })?;
        let full = make_truncation(Basis::Eigen(&dec), dim).unwrap();
        let full_error = truncation_error(&psi, &a0, &h, &full, &grid)
            .unwrap()
            .max_error;
        worst_full = worst_full.max(full_error);
        ranks.push(search.rank);
    }
    ensure(worst_full <= 1e-12, || {
        format!("error at n = D is {worst_full:e}")
    })?;
    Ok(format!(
        "ranks {}..={} of {dim}, max error at n = D {worst_full:.1e}",
        ranks.iter().min().unwrap(),
        ranks.iter().max().unwrap()
    ))
}

fn c3_determinant() -> Check {
    let dim = 32;
    let mut tested = 0;
    let mut worst_det = 0.0f64;
    for seed in 0..5 {
        let h = sample_gue(dim, 1.0, 5000 + seed);
        let dec = spectral_decompose(&h).unwrap();
        for &t in &[0.4, 3.0] {
            let u = evolve(&h, t, PhaseSign::Positive).unwrap();
            let det = determinant_modulus(&u);
            worst_det = worst_det.max((det - 1.0).abs());
            for n in 0..dim {
                for basis in [Basis::Eigen(&dec), Basis::Computational(dim)] {
                    let pair = make_truncation(basis, n).unwrap();
                    let ev = truncated_evolution(&h, t, &pair).map_err(|e| e.to_string())?;
                    ensure(ev.near_zero >= dim - n, || {
                        format!(
                            "seed {seed}, t {t}, n {n}: {} vanishing singular values",
                            ev.near_zero
                        )
                    })?;
                    tested += 1;
                }
            }
        }
    }
    ensure(worst_det <= 1e-10, || {
        format!("| |det U| - 1 | = {worst_det:e}")
    })?;
    Ok(format!(
        "{tested} truncations rank deficient, max | |det U| - 1 | = {worst_det:.1e}"
    ))
}

/// Term-by-term readout with `W = exp(iVt)` from the matrix exponential.
fn readout_oracle(
    model: &CompositeModel,
    dev: &MeasurementDevice,
    t: f64,
) -> (Vec<Complex64>, Vec<f64>) {
    let w = exp_i(model.interaction().matrix(), t);
    let e = model.energies();
    let n = model.n_apparatus();
    let dim = model.dim();
    let mut inter = Vec::new();
    let mut free = Vec::new();
    for alpha in 0..dev.channels() {
        let mut diag = 0.0;
        for k in 0..dim {
            diag += model.amplitude(k).norm_sqr() * dev.weight(alpha, k) * w[(k, k)].norm_sqr();
        }
        let mut cross = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in n..dim {
                let m = model.amplitude(i) * model.amplitude(j).conj() * gamma_phase(e[i], e[j], t);
                cross += (m + m.conj()) * dev.weight(alpha, i) * w[(i, j)].norm_sqr();
            }
        }
        inter.push(cross + diag);
        free.push(diag);
    }
    (inter, free)
}

fn small_model(seed: u64, v: HermitianOperator) -> CompositeModel {
    let energies: Vec<f64> = (0..8)
        .map(|k| 0.45 * k as f64 + 0.03 * (k * k) as f64)
        .collect();
    CompositeModel::from_state(&random_state(8, seed), 3, energies, v).unwrap()
}

fn c4_readout() -> Check {
    let grid = TimeGrid::uniform(4.0, 41).unwrap();
    let mut worst = 0.0f64;
    let mut worst_im = 0.0f64;
    for seed in 0..10 {
        let model = small_model(6000 + seed, sample_gue(8, 0.5, 6100 + seed));
        let dev = random_device(3, 8, 6200 + seed);
        let inter = interacting_readout(&model, &dev, &grid, 8).map_err(|e| e.to_string())?;
        let free = free_readout(&model, &dev, &grid).map_err(|e| e.to_string())?;
        worst_im = worst_im.max(inter.max_imaginary);
        for (k, &t) in grid.points().iter().enumerate() {
            let (oi, of) = readout_oracle(&model, &dev, t);
            for alpha in 0..3 {
                worst_im = worst_im.max(oi[alpha].im.abs());
                worst = worst
                    .max((inter.probabilities[alpha][k] - oi[alpha].re).abs())
                    .max((free.probabilities[alpha][k] - of[alpha]).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("oracle deviation {worst:e}"))?;
    ensure(worst_im <= 1e-12, || format!("imaginary part {worst_im:e}"))?;

    let zero_v = small_model(6300, HermitianOperator::zeros(8, OperatorRole::Interaction));
    let generic = small_model(6301, sample_gue(8, 0.5, 6302));
    let dev = random_device(2, 8, 6303);
    let origin = TimeGrid::from_points(vec![0.0]).unwrap();
    for (model, g) in [(&zero_v, &grid), (&generic, &origin)] {
        let q = quality(
            &interacting_readout(model, &dev, g, 8).unwrap(),
            &free_readout(model, &dev, g).unwrap(),
        )
        .unwrap();
        ensure(q.aggregate == 0.0, || {
            format!("Q = {:e} in a null case", q.aggregate)
        })?;
    }
    Ok(format!(
        "max oracle deviation {worst:.1e}, max imaginary {worst_im:.1e}, Q = 0 for V = 0 and t = {{0}}"
    ))
}

fn c5_factorization() -> Check {
    let grid = TimeGrid::uniform(6.0, 61).unwrap();
    let mut worst = 0.0f64;
    let mut generic = Vec::new();
    for seed in 0..10 {
        let mut r = rng(7000 + seed);
        let diag: Vec<f64> = (0..8).map(|_| r.sample(StandardNormal)).collect();
        let dev = random_device(3, 8, 7100 + seed);
        let commuting = small_model(
            7200 + seed,
            HermitianOperator::from_diagonal(&diag, OperatorRole::Interaction),
        );
        let cmp = exact_oracle_readout(&commuting, &dev, &grid).map_err(|e| e.to_string())?;
        worst = worst.max(cmp.max_deviation);
        let other = small_model(7300 + seed, sample_gue(8, 0.5, 7400 + seed));
        generic.push(
            exact_oracle_readout(&other, &dev, &grid)
                .unwrap()
                .max_deviation,
        );
    }
    ensure(worst <= 1e-10, || format!("commuting deviation {worst:e}"))?;
    let max_generic = generic.iter().copied().fold(0.0, f64::max);
    Ok(format!(
        "commuting max deviation {worst:.1e}; non-commuting deviation up to {max_generic:.3} (reported)"
    ))
}

fn bound_model_config() -> CompositeConfig {
    CompositeConfig {
        dim: 64,
        n_apparatus: 4,
        energies: EnergySource::Random { scale: 1.0 },
        interaction: OperatorSource::Gue { scale: 1.0 },
        apparatus: AmplitudeSource::Random,
        particle: AmplitudeSource::PowerLaw {
            exponent: 2.0,
            phases: Phases::Random,
        },
        device: DeviceSource::Random { channels: 3 },
    }
}

fn c6_linear_bound() -> Check {
    let cfg = bound_model_config();
    let n1 = 16;
    let mut points = 0usize;
    let mut satisfied = 0usize;
    let mut max_a = 0.0f64;
    let mut rows = 0usize;
    let mut chain_failures = 0usize;
    let mut models_with_failures = 0usize;
    let mut k_required = 0.0f64;
    let mut second_link_failures = 0usize;
    for seed in 0..100 {
        let (model, dev) = build::composite(&cfg, seed).map_err(|e| format!("{e:#}"))?;
        let spec = CoarseningSpec::new(&model, n1).unwrap();
        let t0 = characteristic_time(&model, spec).unwrap().t0;
        let grid = TimeGrid::uniform(0.95 * t0, 51).unwrap();
        let fit = fit_bound_constant(&model, &dev, &grid, spec, BoundOptions::default())
            .map_err(|e| e.to_string())?;
        let (_, dense, _) = bound_points(&model, &dev, &grid.refined(2), spec).unwrap();
        points += dense.len();
        satisfied += dense.iter().filter(|p| p.satisfied(fit.a)).count();
        max_a = max_a.max(fit.a);
        rows += fit.chains.iter().map(|c| c.rows.len()).sum::<usize>();
        chain_failures += fit.chain_violations.len();
        second_link_failures += fit
            .chains
            .iter()
            .flat_map(|c| &c.rows)
            .filter(|r| !r.second_link(fit.k))
            .count();
        models_with_failures += usize::from(!fit.chain_holds());
        k_required = k_required.max(fit.k_required);
    }
    let fraction = satisfied as f64 / points as f64;
    let detail = format!(
        "bound holds at {:.2}% of {points} denser-grid points, max A = {max_a:.3e}; \
         chain fails on {chain_failures} of {rows} rows in {models_with_failures} models \
         (second link on {second_link_failures}, K needed {k_required:.2})",
        100.0 * fraction
    );
    ensure(fraction >= 0.95, || detail.clone())?;
    ensure(max_a <= 1e3, || detail.clone())?;
    ensure(chain_failures == 0, || detail.clone())?;
    Ok(detail)
}

fn c7_characteristic_time() -> Check {
    let cfg = bound_model_config();
    let mut worst_sub = 0.0f64;
    let mut worst_hom = 0.0f64;
    for seed in 0..10 {
        let (model, dev) = build::composite(&cfg, 100 + seed).unwrap();
        for n1 in [5, 16, 40, 64] {
            let spec = CoarseningSpec::new(&model, n1).unwrap();
            let ct = characteristic_time(&model, spec).unwrap();
            let v = model.interaction().matrix();
            let mut v_max = 0.0f64;
            for i in 0..4 {
                for j in (n1 - 1)..64 {
                    v_max = v_max.max(v[(i, j)].norm());
                }
            }
            worst_sub = worst_sub.max((ct.t0 * v_max - std::f64::consts::FRAC_PI_2).abs());
            for kappa in [0.1, 3.0, 250.0] {
                let scaled =
                    characteristic_time(&model.with_interaction_scaled(kappa), spec).unwrap();
                worst_hom = worst_hom.max((scaled.t0 * kappa / ct.t0 - 1.0).abs());
            }
        }
        let spec = CoarseningSpec::new(&model, 16).unwrap();
        let t0 = characteristic_time(&model, spec).unwrap().t0;
        let grid = TimeGrid::uniform(2.0 * t0, 41).unwrap();
        let fit = fit_bound_constant(&model, &dev, &grid, spec, BoundOptions::default()).unwrap();
        let beyond: Vec<f64> = grid.points().iter().copied().filter(|&t| t >= t0).collect();
        let flagged: Vec<f64> = fit.excluded.iter().map(|x| x.t).collect();
        ensure(flagged == beyond, || {
            format!("seed {seed}: excluded {flagged:?}")
        })?;
        ensure(fit.points.iter().all(|p| p.t < t0), || {
            "fit used t >= t0".into()
        })?;
    }
    ensure(worst_sub <= 1e-12, || {
        format!("substitution residual {worst_sub:e}")
    })?;
    ensure(worst_hom <= 1e-12, || {
        format!("homogeneity residual {worst_hom:e}")
    })?;
    Ok(format!(
        "substitution residual {worst_sub:.1e}, homogeneity residual {worst_hom:.1e}, times >= t0 excluded and flagged"
    ))
}

/// `max_i max(|sum Re M_ij|, |sum Im M_ij|)` over `j >= n1`, summed directly.
fn tail_oracle(model: &CompositeModel, t: f64, n1: usize) -> f64 {
    let e = model.energies();
    let mut best = 0.0f64;
    for i in 0..model.n_apparatus() {
        let mut re = 0.0;
        let mut im = 0.0;
        for j in n1..model.dim() {
            let m = model.amplitude(i) * model.amplitude(j).conj() * gamma_phase(e[i], e[j], t);
            re += m.re;
            im += m.im;
        }
        best = best.max(re.abs()).max(im.abs());
    }
    best
}

fn tail_model(particle: AmplitudeSource, seed: u64) -> CompositeModel {
    let cfg = CompositeConfig {
        particle,
        ..bound_model_config()
    };
    build::composite(&cfg, seed).unwrap().0
}

fn c8_peres_condition() -> Check {
    let grid = TimeGrid::uniform(3.0, 31).unwrap();
    let mut worst = 0.0f64;
    let mut decayed = Vec::new();
    for seed in 0..5 {
        let decaying = tail_model(
            AmplitudeSource::PowerLaw {
                exponent: 2.0,
                phases: Phases::Random,
            },
            8000 + seed,
        );
        let constant = tail_model(
            AmplitudeSource::Constant {
                phases: Phases::Aligned,
            },
            8100 + seed,
        );
        for model in [&decaying, &constant] {
            for &t in grid.points() {
                let profile = mixing_matrix(model, t).tail_profile();
                for n1 in 4..=64 {
                    worst = worst.max((profile[n1 - 4] - tail_oracle(model, t, n1)).abs());
                }
            }
        }
        let good = peres_condition_check(&decaying, &grid, PeresThresholds::default()).unwrap();
        ensure(good.verdict, || {
            format!("seed {seed}: decaying tail judged divergent")
        })?;
        let tail_end = *good.max_epsilon.last().unwrap();
        ensure(
            tail_end == 0.0 && good.max_epsilon[0] > good.max_epsilon[40],
            || format!("seed {seed}: profile does not decay"),
        )?;
        decayed.push(good.decayed_from.unwrap());

        let bad = peres_condition_check(&constant, &grid, PeresThresholds::default()).unwrap();
        ensure(!bad.verdict, || {
            format!("seed {seed}: constant aligned tail judged convergent")
        })?;
    }
    ensure(worst <= 1e-12, || format!("oracle deviation {worst:e}"))?;
    Ok(format!(
        "decaying tails below 1e-2 from N1 = {}..={}, constant aligned tails never decay, oracle deviation {worst:.1e}",
        decayed.iter().min().unwrap(),
        decayed.iter().max().unwrap()
    ))
}

fn spread_state(dim: usize) -> StateVector {
    let v = ComplexVector::from_fn(dim, |k, _| Complex64::from_polar(1.0, 0.7 * (k * k) as f64));
    StateVector::normalized(v).unwrap()
}

const ECHO_CONFIG: &str = r#"
experiment = "peres-echo"
seed = 41

[grid]
t_max = 4.0
steps = 41

[echo]
dim = 64
members = 50
delta = 0.05
relative = true
hamiltonian = { source = "gue" }
state = { profile = "random" }
"#;

fn c9_echo() -> Check {
    let psi = spread_state(64);
    let grid = TimeGrid::uniform(3.0, 31).unwrap();
    let spec = |delta: f64| EnsembleSpec {
        dim: 64,
        members: 50,
        delta,
        seed: 9000,
        base: BaseHamiltonian::Gue { scale: 1.0 },
        ordering: EchoOrdering::ForwardPerturbed,
    };
    let norm = operator_norm(spec(0.0).base_hamiltonian().matrix()).unwrap();
    let still = ensemble_echo(&spec(0.0), &psi, &grid).map_err(|e| e.to_string())?;
    let flat = still
        .members
        .iter()
        .flatten()
        .map(|e| (e - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(flat <= 1e-10, || {
        format!("delta = 0 echo deviates by {flat:e}")
    })?;
    let ladder = [0.01, 0.02, 0.05, 0.1, 0.2];
    let means: Vec<f64> = ladder
        .iter()
        .map(|f| {
            ensemble_echo(&spec(f * norm), &psi, &grid)
                .unwrap()
                .time_averaged_mean()
        })
        .collect();
    ensure(means.windows(2).all(|w| w[1] <= w[0]), || {
        format!("ladder means {means:?}")
    })?;

    let tmp = tempfile::TempDir::new().unwrap();
    let cfg = tmp.path().join("echo.toml");
    fs::write(&cfg, ECHO_CONFIG).unwrap();
    let runs: Vec<_> = (0..2)
        .map(|k| {
            let out = tmp.path().join(format!("run{k}"));
            let res = run_experiment(&RunRequest {
                config: cfg.clone(),
                out: Some(out.clone()),
                ..Default::default()
            });
            (res.exit_code, data_files(&out))
        })
        .collect();
    ensure(runs[0].0 == exit::OK, || {
        format!("echo run exited {}", runs[0].0)
    })?;
    ensure(runs[0] == runs[1], || "reruns differ".into())?;
    Ok(format!(
        "delta = 0 deviation {flat:.1e}; mean echo {} along the ladder; reruns byte-identical",
        means
            .iter()
            .map(|m| format!("{m:.4}"))
            .collect::<Vec<_>>()
            .join(" >= ")
    ))
}

fn c10_speed_limit() -> Check {
    let grid = TimeGrid::uniform(3.0, 301).unwrap();
    let mut admissible = 0usize;
    for seed in 0..20 {
        let h = sample_gue(16, 1.0, 10_000 + seed);
        let psi = random_state(16, 10_100 + seed);
        let r = speed_limit_check(&h, &psi, &grid).map_err(|e| e.to_string())?;
        ensure(r.holds(), || {
            format!("seed {seed}: violated at {:?}", r.violations)
        })?;
        admissible += r.admissible.iter().filter(|&&a| a).count();
    }
    let mut worst = 0.0f64;
    for omega in [0.3, 1.0, 2.7] {
        let h = HermitianOperator::from_diagonal(&[0.4, 0.4 + omega], OperatorRole::Hamiltonian);
        let psi =
            StateVector::from_slice(&[Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
        let r = speed_limit_check(&h, &psi, &grid).unwrap();
        // |0.36 + 0.64 e^{i omega t}|^2
        for (k, &t) in grid.points().iter().enumerate() {
            let exact = 0.36f64.powi(2) + 0.64f64.powi(2) + 2.0 * 0.36 * 0.64 * (omega * t).cos();
            worst = worst.max((r.survival[k] - exact).abs());
        }
        ensure((r.delta_e - 0.48 * omega).abs() <= 1e-12, || {
            format!("dE = {}", r.delta_e)
        })?;
    }
    ensure(worst <= 1e-10, || format!("two-level deviation {worst:e}"))?;
    Ok(format!(
        "bound holds at {admissible} admissible points, two-level deviation {worst:.1e}"
    ))
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    RunManifest::read(dir)
        .map(|m| {
            m.outputs
                .iter()
                .map(|o| (o.path.clone(), fs::read(dir.join(&o.path)).unwrap()))
                .collect()
        })
        .unwrap_or_default()
}

const DETERMINISM_CONFIGS: &[(&str, &str)] = &[
    ("echo", ECHO_CONFIG),
    (
        "fidelity",
        r#"
experiment = "fidelity"
seed = 12
[grid]
t_max = 0.5
steps = 26
[composite]
dim = 64
n_apparatus = 4
energies = { source = "random" }
interaction = { source = "gue", scale = 0.2 }
apparatus = { profile = "random" }
particle = { profile = "power-law", exponent = 2.0 }
device = { source = "random", channels = 3 }
[fidelity]
n1 = 16
"#,
    ),
    (
        "readout",
        r#"
experiment = "readout"
seed = 13
[grid]
t_max = 5.0
steps = 51
[composite]
dim = 32
n_apparatus = 4
energies = { source = "random" }
interaction = { source = "gue", scale = 0.3 }
apparatus = { profile = "random" }
particle = { profile = "random" }
device = { source = "random", channels = 2 }
"#,
    ),
    (
        "truncate",
        r#"
experiment = "truncate-sweep"
seed = 14
[grid]
t_max = 2.0
steps = 41
[truncation]
dim = 48
hamiltonian = { source = "gue" }
observable = { source = "gue" }
state = { profile = "random" }
"#,
    ),
];

fn c11_determinism() -> Check {
    let tmp = tempfile::TempDir::new().unwrap();
    let mut files = 0;
    for (name, text) in DETERMINISM_CONFIGS {
        let cfg = tmp.path().join(format!("{name}.toml"));
        fs::write(&cfg, text).unwrap();
        let runs: Vec<_> = [1usize, 2, 8]
            .iter()
            .map(|&threads| {
                let out = tmp.path().join(format!("{name}-{threads}"));
                let res = run_experiment(&RunRequest {
                    config: cfg.clone(),
                    out: Some(out.clone()),
                    threads: Some(threads),
                    ..Default::default()
                });
                (res.exit_code, data_files(&out))
            })
            .collect();
        ensure(!runs[0].1.is_empty(), || format!("{name}: no outputs"))?;
        ensure(runs.iter().all(|r| *r == runs[0]), || {
            format!("{name}: outputs depend on the worker count")
        })?;
        files += runs[0].1.len();
    }
    Ok(format!(
        "{files} output files identical across 1, 2 and 8 workers"
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "unitarity and smoothness",
            budget: Some(Duration::from_secs(30)),
            run: c1_unitarity,
        },
        Criterion {
            id: 2,
            name: "minimal truncation rank",
            budget: Some(Duration::from_secs(120)),
            run: c2_minimal_rank,
        },
        Criterion {
            id: 3,
            name: "truncated propagator determinant",
            budget: None,
            run: c3_determinant,
        },
        Criterion {
            id: 4,
            name: "readout oracles",
            budget: None,
            run: c4_readout,
        },
        Criterion {
            id: 5,
            name: "factorization audit",
            budget: None,
            run: c5_factorization,
        },
        Criterion {
            id: 6,
            name: "linear-in-time fidelity bound",
            budget: Some(Duration::from_secs(300)),
            run: c6_linear_bound,
        },
        Criterion {
            id: 7,
            name: "characteristic time",
            budget: None,
            run: c7_characteristic_time,
        },
        Criterion {
            id: 8,
            name: "tail decay condition",
            budget: None,
            run: c8_peres_condition,
        },
        Criterion {
            id: 9,
            name: "echo ensemble",
            budget: Some(Duration::from_secs(120)),
            run: c9_echo,
        },
        Criterion {
            id: 10,
            name: "speed limit",
            budget: None,
            run: c10_speed_limit,
        },
        Criterion {
            id: 11,
            name: "determinism across workers",
            budget: None,
            run: c11_determinism,
        },
    ];
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let strict = std::env::var("QLIMITS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut unexpected = Vec::new();
    for c in criteria
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
    {
        let start = Instant::now();
        let mut result = (c.run)();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(budget)) = (&result, c.budget) {
            if elapsed > budget {
                result = Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}"));
            }
        }
        match result {
            Ok(detail) => println!("PASS {:>2} {}: {detail} [{elapsed:.1?}]", c.id, c.name),
            Err(detail) => {
                let known = KNOWN_FAILURES.contains(&c.id);
                let tag = if known { " (known)" } else { "" };
                println!("FAIL {:>2} {}{tag}: {detail} [{elapsed:.1?}]", c.id, c.name);
                if strict || !known {
                    unexpected.push(c.id);
                }
            }
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failing criteria: {unexpected:?}");
        ExitCode::FAILURE
    }
}
