//! One runner per experiment kind. Each writes its data files and returns a
//! human summary plus any violated invariants.

use anyhow::{Context, Result};
use serde::Serialize;

use qlimits_core::fidelity::{
    fidelity_gap, fit_bound_constant, peres_condition_check, speed_limit_check, BoundOptions,
    CoarseningSpec, PeresThresholds,
};
use qlimits_core::measurement::{exact_oracle_readout, free_readout, interacting_readout, quality};
use qlimits_core::peres::{ensemble_echo, BaseHamiltonian, EnsembleSpec, ECHO_UPPER_SLACK};
use qlimits_core::seeding::Stream;
use qlimits_core::truncation::{
    make_truncation, minimal_rank_in_basis, truncated_evolution, truncation_error, Basis,
    BasisChoice, RANK_TOLERANCE,
};
use qlimits_core::{operator_norm, spectral_decompose, Error as CoreError, OperatorRole, TimeGrid};

use crate::build;
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::output::{csv_bytes, Artifacts, Cell};

/// Imaginary parts of readouts above this are reported.
const REALNESS_TOLERANCE: f64 = 1e-12;
/// Rank-`D` truncation must reproduce the observable to this level.
const FULL_RANK_TOLERANCE: f64 = 1e-12;
/// `|det U|` must be one to this level.
const UNIMODULAR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: Vec<String>,
    pub violations: Vec<String>,
}

/// Input problems detected while running, reported with exit status 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

pub fn run(config: &ExperimentConfig, artifacts: &mut Artifacts) -> Result<Outcome> {
    let grid = build::grid(&config.grid)?;
    let internal = grid.scaled(1.0 / config.hbar);
    match config.experiment {
        ExperimentKind::TruncateSweep => truncate_sweep(config, &grid, &internal, artifacts),
        ExperimentKind::Readout => readout(config, &grid, &internal, artifacts),
        ExperimentKind::Fidelity => fidelity_run(config, &internal, artifacts),
        ExperimentKind::PeresCondition => peres_condition(config, &grid, &internal, artifacts),
        ExperimentKind::PeresEcho => peres_echo(config, &grid, &internal, artifacts),
        ExperimentKind::SpeedLimit => speed_limit(config, &grid, &internal, artifacts),
    }
}

#[derive(Serialize)]
struct Certificate {
    t: f64,
    rank: usize,
    singular_values: Vec<f64>,
    near_zero: usize,
    required_near_zero: usize,
    det_truncated: f64,
    det_full: f64,
}

#[derive(Serialize)]
struct TruncationSummary {
    seed: u64,
    dim: usize,
    epsilon: f64,
    basis: BasisChoice,
    minimal_rank: usize,
    error_at_minimal_rank: f64,
    rank: usize,
    max_error: f64,
    rank_profile: Vec<f64>,
    certificate: Option<Certificate>,
}

fn truncate_sweep(
    config: &ExperimentConfig,
    grid: &TimeGrid,
    internal: &TimeGrid,
    artifacts: &mut Artifacts,
) -> Result<Outcome> {
    let tc = config.truncation.as_ref().context("missing [truncation]")?;
    let seed = config.seed;
    let h = build::operator(
        &tc.hamiltonian,
        tc.dim,
        OperatorRole::Hamiltonian,
        seed,
        Stream::Hamiltonian,
    )?;
    let a0 = build::operator(
        &tc.observable,
        tc.dim,
        OperatorRole::Observable,
        seed,
        Stream::Observable,
    )?;
    let psi = build::state(&tc.state, tc.dim, seed)?;

    let search = minimal_rank_in_basis(&psi, &a0, &h, internal, tc.epsilon, tc.basis)?;
    let rank = tc.rank.unwrap_or(search.rank);
    let dec = spectral_decompose(&h)?;
    let basis = match tc.basis {
        BasisChoice::Energy => Basis::Eigen(&dec),
        BasisChoice::Computational => Basis::Computational(tc.dim),
    };
    let pair = make_truncation(basis, rank)?;
    let report = truncation_error(&psi, &a0, &h, &pair, internal)?;

    let mut outcome = Outcome::default();
    let full_error = search.profile[tc.dim];
    if full_error > FULL_RANK_TOLERANCE {
        outcome.violations.push(format!(
            "rank {} error {full_error:e} exceeds {FULL_RANK_TOLERANCE:e}",
            tc.dim
        ));
    }
    if search.error_at_rank > tc.epsilon {
        outcome.violations.push(format!(
            "minimal rank {} verified error {:e} exceeds epsilon {:e}",
            search.rank, search.error_at_rank, tc.epsilon
        ));
    }

    let certificate = if rank < tc.dim {
        let t_int = internal.t_max();
        let ev = truncated_evolution(&h, t_int, &pair)?;
        let det_full = qlimits_core::truncation::determinant_modulus(&ev.full);
        let required = tc.dim - rank;
        if !ev.determinant_vanishes() {
            outcome.violations.push(format!(
                "P U P has {} singular values <= {RANK_TOLERANCE:e} sigma_max, expected >= {required}",
                ev.near_zero
            ));
        }
        if (det_full - 1.0).abs() > UNIMODULAR_TOLERANCE {
            outcome
                .violations
                .push(format!("|det U| = {det_full} is not 1"));
        }
        Some(Certificate {
            t: grid.t_max(),
            rank,
            det_truncated: ev.singular_values.iter().product(),
            singular_values: ev.singular_values,
            near_zero: ev.near_zero,
            required_near_zero: required,
            det_full,
        })
    } else {
        None
    };

    let rows = report.points.iter().zip(grid.points()).map(|(p, &t)| {
        vec![
            Cell::F(t),
            Cell::F(p.error),
            Cell::F(p.term_qq),
            Cell::F(p.term_cross),
            Cell::F(p.term_comm),
        ]
    });
    artifacts.write(
        "truncation.csv",
        &csv_bytes(&["t", "error", "termQQ", "termCross", "termComm"], rows)?,
    )?;
    outcome.summary.push(format!(
        "minimal rank for epsilon {:e}: {} of {} (verified error {:e})",
        tc.epsilon, search.rank, tc.dim, search.error_at_rank
    ));
    outcome.summary.push(format!(
        "rank {rank}: max error over grid {:e}",
        report.max_error
    ));
    artifacts.write_json(
        "truncation.json",
        &TruncationSummary {
            seed,
            dim: tc.dim,
            epsilon: tc.epsilon,
            basis: tc.basis,
            minimal_rank: search.rank,
            error_at_minimal_rank: search.error_at_rank,
            rank,
            max_error: report.max_error,
            rank_profile: search.profile,
            certificate,
        },
    )?;
    Ok(outcome)
}

#[derive(Serialize)]
struct ChannelQ {
    alpha: usize,
    #[serde(rename = "Q")]
    q: f64,
    t_at_max: f64,
}

#[derive(Serialize)]
struct ReadoutSummary {
    seed: u64,
    #[serde(rename = "D")]
    dim: usize,
    #[serde(rename = "N")]
    n: usize,
    cutoff: usize,
    channels: Vec<ChannelQ>,
    max_imaginary: f64,
    exact_oracle_max_deviation: f64,
}

fn readout(
    config: &ExperimentConfig,
    grid: &TimeGrid,
    internal: &TimeGrid,
    artifacts: &mut Artifacts,
) -> Result<Outcome> {
    let cc = config.composite.as_ref().context("missing [composite]")?;
    let (model, device) = build::composite(cc, config.seed)?;
    let cutoff = config
        .readout
        .as_ref()
        .and_then(|r| r.cutoff)
        .unwrap_or(cc.dim);
    let inter = interacting_readout(&model, &device, internal, cutoff)?;
    let free = free_readout(&model, &device, internal)?;
    let q = quality(&inter, &free)?;
    let exact = exact_oracle_readout(&model, &device, internal)?;

    let mut rows = Vec::new();
    for (k, &t) in grid.points().iter().enumerate() {
        for alpha in 0..device.channels() {
            let p = inter.probabilities[alpha][k];
            let f = free.probabilities[alpha][k];
            rows.push(vec![
                Cell::F(t),
                Cell::U(alpha),
                Cell::F(p),
                Cell::F(f),
                Cell::F((p - f).abs()),
            ]);
        }
    }
    artifacts.write(
        "readout.csv",
        &csv_bytes(&["t", "channel", "P_interacting", "P_free", "|diff|"], rows)?,
    )?;

    let mut outcome = Outcome::default();
    if inter.max_imaginary > REALNESS_TOLERANCE {
        outcome.violations.push(format!(
            "readout imaginary part {:e} exceeds {REALNESS_TOLERANCE:e}",
            inter.max_imaginary
        ));
    }
    outcome
        .summary
        .push(format!("quality Q = {:e} (max over channels)", q.aggregate));
    outcome.summary.push(format!(
        "exact Born readout differs by at most {:e} (informational)",
        exact.max_deviation
    ));
    artifacts.write_json(
        "readout.json",
        &ReadoutSummary {
            seed: config.seed,
            dim: cc.dim,
            n: cc.n_apparatus,
            cutoff,
            channels: q
                .channels
                .iter()
                .map(|c| ChannelQ {
                    alpha: c.alpha,
                    q: c.q,
                    t_at_max: c.t_at_max * config.hbar,
                })
                .collect(),
            max_imaginary: inter.max_imaginary,
            exact_oracle_max_deviation: exact.max_deviation,
        },
    )?;
    Ok(outcome)
}

#[derive(Serialize)]
struct FidelityChannel {
    alpha: usize,
    #[serde(rename = "Q")]
    q: f64,
    #[serde(rename = "Qt")]
    q_coarse: f64,
    #[serde(rename = "F")]
    f: f64,
    max_gap: f64,
    row_sum: f64,
}

#[derive(Serialize)]
struct ExcludedOut {
    t: f64,
    chain_violated: bool,
}

#[derive(Serialize)]
struct FidelitySummary {
    seed: u64,
    #[serde(rename = "D")]
    dim: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "N1")]
    n1: usize,
    t0: f64,
    #[serde(rename = "A_fitted")]
    a_fitted: f64,
    #[serde(rename = "K")]
    k: f64,
    ceiling: f64,
    verdict: bool,
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "C_tilde")]
    c_tilde: f64,
    k_required: f64,
    epsilon_profile: Vec<(usize, f64)>,
    channels: Vec<FidelityChannel>,
    aggregate_f: f64,
    excluded_times: Vec<ExcludedOut>,
    chain_rows: usize,
    chain_violations: usize,
    violations: Vec<String>,
}

fn fidelity_run(
    config: &ExperimentConfig,
    internal: &TimeGrid,
    artifacts: &mut Artifacts,
) -> Result<Outcome> {
    let cc = config.composite.as_ref().context("missing [composite]")?;
    let fc = config.fidelity.as_ref().context("missing [fidelity]")?;
    let hbar = config.hbar;
    let (model, device) = build::composite(cc, config.seed)?;
    let spec = CoarseningSpec::new(&model, fc.n1)?;
    let options = BoundOptions {
        k: fc.k,
        ceiling: fc.ceiling,
    };
    let fit = match fit_bound_constant(&model, &device, internal, spec, options) {
        Err(CoreError::NoAdmissibleTimes { t0, first }) => {
            return Err(InputError(format!(
                "no admissible times: t0 = {} but the first nonzero grid time is {}",
                t0 * hbar,
                first * hbar
            ))
            .into())
        }
        other => other?,
    };
    let admissible: Vec<f64> = internal
        .points()
        .iter()
        .copied()
        .filter(|&t| t < fit.t0)
        .collect();
    let admissible_grid = TimeGrid::from_points(admissible)?;
    let gap = fidelity_gap(&model, &device, &admissible_grid, spec)?;

    let mut violations = gap.violations.clone();
    if !fit.verdict {
        violations.push(format!(
            "A_fitted = {:e} exceeds ceiling {:e}",
            fit.a / hbar,
            fc.ceiling
        ));
    }
    for &(t, alpha, i) in &fit.chain_violations {
        violations.push(format!(
            "chain fails at t = {}, channel {alpha}, row {i}",
            t * hbar
        ));
    }
    let chain_rows: usize = fit.chains.iter().map(|c| c.rows.len()).sum();

    // Slope in physical time: F <= (A / hbar) * t_phys * eps.
    let a_phys = fit.a / hbar;
    let rows = fit.points.iter().map(|p| {
        vec![
            Cell::F(p.t * hbar),
            Cell::U(p.alpha),
            Cell::F(p.f),
            Cell::F(fit.a * p.t * p.epsilon),
        ]
    });
    artifacts.write(
        "fidelity.csv",
        &csv_bytes(&["t", "channel", "F", "A*t*eps"], rows)?,
    )?;

    // Largest tail measure over the admissible times, per cutoff.
    let tails = peres_condition_check(&model, &admissible_grid, PeresThresholds::default())?;
    let epsilon_profile = tails
        .n1_values
        .iter()
        .copied()
        .zip(tails.max_epsilon.iter().copied())
        .collect();

    let summary = FidelitySummary {
        seed: config.seed,
        dim: cc.dim,
        n: cc.n_apparatus,
        n1: fc.n1,
        t0: fit.t0 * hbar,
        a_fitted: a_phys,
        k: fc.k,
        ceiling: fc.ceiling,
        verdict: fit.verdict,
        c: fit.c_fitted / hbar,
        c_tilde: fit.c_tilde_fitted / hbar,
        k_required: fit.k_required,
        epsilon_profile,
        channels: gap
            .channels
            .iter()
            .map(|c| FidelityChannel {
                alpha: c.alpha,
                q: c.q,
                q_coarse: c.q_coarse,
                f: c.f,
                max_gap: c.triangle_bound,
                row_sum: c.row_sum,
            })
            .collect(),
        aggregate_f: gap.aggregate,
        excluded_times: fit
            .excluded
            .iter()
            .map(|e| ExcludedOut {
                t: e.t * hbar,
                chain_violated: e.chain_violated,
            })
            .collect(),
        chain_rows,
        chain_violations: fit.chain_violations.len(),
        violations: violations.clone(),
    };
    artifacts.write_json("fidelity.json", &summary)?;

    let mut outcome = Outcome::default();
    outcome.summary.push(format!(
        "t0 = {}, A_fitted = {:e} (ceiling {:e}), F = {:e}",
        fit.t0 * hbar,
        a_phys,
        fc.ceiling,
        gap.aggregate
    ));
    outcome.summary.push(format!(
        "{} grid times beyond t0 excluded; chain held on {} of {} admissible rows (K = {}, K needed {:e})",
        fit.excluded.len(),
        chain_rows - fit.chain_violations.len(),
        chain_rows,
        fc.k,
        fit.k_required
    ));
    outcome.violations = violations;
    Ok(outcome)
}

#[derive(Serialize)]
struct PeresSummary {
    seed: u64,
    n1_values: Vec<usize>,
    max_epsilon: Vec<f64>,
    threshold: f64,
    decayed_from: Option<usize>,
    verdict: bool,
    plateau_onset: Vec<Option<usize>>,
    series_converges: bool,
}

fn peres_condition(
    config: &ExperimentConfig,
    grid: &TimeGrid,
    internal: &TimeGrid,
    artifacts: &mut Artifacts,
) -> Result<Outcome> {
    let cc = config.composite.as_ref().context("missing [composite]")?;
    let (model, _) = build::composite(cc, config.seed)?;
    let thresholds = config
        .peres_condition
        .as_ref()
        .map(|p| PeresThresholds {
            epsilon: p.epsilon,
            plateau: p.plateau,
        })
        .unwrap_or_default();
    let profile = peres_condition_check(&model, internal, thresholds)?;

    let mut rows = Vec::new();
    for (k, &t) in grid.points().iter().enumerate() {
        for (m, &n1) in profile.n1_values.iter().enumerate() {
            rows.push(vec![
                Cell::F(t),
                Cell::U(n1),
                Cell::F(profile.epsilon[k][m]),
            ]);
        }
    }
    artifacts.write(
        "peres_condition.csv",
        &csv_bytes(&["t", "N1", "epsilon"], rows)?,
    )?;
    artifacts.write_json(
        "peres_condition.json",
        &PeresSummary {
            seed: config.seed,
            n1_values: profile.n1_values.clone(),
            max_epsilon: profile.max_epsilon.clone(),
            threshold: thresholds.epsilon,
            decayed_from: profile.decayed_from,
            verdict: profile.verdict,
            plateau_onset: profile.plateau_onset.clone(),
            series_converges: profile.series_converges(),
        },
    )?;
    let mut outcome = Outcome::default();
    outcome.summary.push(match profile.decayed_from {
        Some(n1) if profile.verdict => {
            format!("tail below {:e} from N1 = {n1} on", thresholds.epsilon)
        }
        _ => format!(
            "tail never drops below {:e} before N1 = D",
            thresholds.epsilon
        ),
    });
    Ok(outcome)
}

#[derive(Serialize)]
struct EchoSummary {
    seed: u64,
    dim: usize,
    members: usize,
    delta: f64,
    time_averaged_mean: f64,
    final_mean: f64,
}

fn peres_echo(
    config: &ExperimentConfig,
    grid: &TimeGrid,
    internal: &TimeGrid,
    artifacts: &mut Artifacts,
) -> Result<Outcome> {
    let ec = config.echo.as_ref().context("missing [echo]")?;
    let h = build::operator(
        &ec.hamiltonian,
        ec.dim,
        OperatorRole::Hamiltonian,
        config.seed,
        Stream::Hamiltonian,
    )?;
    let delta = if ec.relative {
        ec.delta * operator_norm(h.matrix())?
    } else {
        ec.delta
    };
    let spec = EnsembleSpec {
        dim: ec.dim,
        members: ec.members,
        delta,
        seed: config.seed,
        base: BaseHamiltonian::Explicit(h),
        ordering: ec.ordering,
    };
    let psi = build::state(&ec.state, ec.dim, config.seed)?;
    let curve = ensemble_echo(&spec, &psi, internal)?;

    let mut outcome = Outcome::default();
    if curve
        .mean
        .first()
        .is_some_and(|_| grid.points()[0] == 0.0 && curve.mean[0] != 1.0)
    {
        outcome.violations.push("echo(0) differs from 1".to_owned());
    }
    let out_of_range = curve
        .members
        .iter()
        .flatten()
        .filter(|&&e| !(0.0..=1.0 + ECHO_UPPER_SLACK).contains(&e))
        .count();
    if out_of_range > 0 {
        outcome.violations.push(format!(
            "{out_of_range} echo values outside [0, 1 + {ECHO_UPPER_SLACK:e}]"
        ));
    }

    let rows = (0..grid.len()).map(|k| {
        vec![
            Cell::F(grid.points()[k]),
            Cell::F(curve.mean[k]),
            Cell::F(curve.std[k]),
            Cell::F(curve.min[k]),
            Cell::F(curve.max[k]),
        ]
    });
    artifacts.write(
        "echo.csv",
        &csv_bytes(&["t", "mean_echo", "std_echo", "min", "max"], rows)?,
    )?;
    let final_mean = *curve.mean.last().unwrap_or(&1.0);
    artifacts.write_json(
        "echo.json",
        &EchoSummary {
            seed: config.seed,
            dim: ec.dim,
            members: ec.members,
            delta,
            time_averaged_mean: curve.time_averaged_mean(),
            final_mean,
        },
    )?;
    outcome.summary.push(format!(
        "mean echo falls to {final_mean} (time average {}) with delta = {delta}",
        curve.time_averaged_mean()
    ));
    Ok(outcome)
}

fn speed_limit(
    config: &ExperimentConfig,
    grid: &TimeGrid,
    internal: &TimeGrid,
    artifacts: &mut Artifacts,
) -> Result<Outcome> {
    let sc = config
        .speed_limit
        .as_ref()
        .context("missing [speed_limit]")?;
    let h = build::operator(
        &sc.hamiltonian,
        sc.dim,
        OperatorRole::Hamiltonian,
        config.seed,
        Stream::Hamiltonian,
    )?;
    let psi = build::state(&sc.state, sc.dim, config.seed)?;
    let report = speed_limit_check(&h, &psi, internal)?;
    let rows = (0..grid.len()).map(|k| {
        vec![
            Cell::F(grid.points()[k]),
            Cell::F(report.survival[k]),
            Cell::F(report.bound[k]),
            Cell::B(report.admissible[k]),
        ]
    });
    artifacts.write(
        "speed_limit.csv",
        &csv_bytes(&["t", "survival", "bound", "admissible"], rows)?,
    )?;
    let mut outcome = Outcome::default();
    for &t in &report.violations {
        outcome.violations.push(format!(
            "survival below cos^2(dE t / hbar) at t = {}",
            t * config.hbar
        ));
    }
    outcome.summary.push(format!(
        "dE = {}, bound checked on {} of {} grid times",
        report.delta_e,
        report.admissible.iter().filter(|&&a| a).count(),
        grid.len()
    ));
    Ok(outcome)
}
