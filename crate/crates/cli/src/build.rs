//! Turns config sources into core objects with seeded sub-streams.

use anyhow::{bail, Context, Result};
use rand::Rng;
use rand_distr::StandardNormal;

use nalgebra::DMatrix;
use qlimits_core::measurement::{build_device, CompositeModel, MeasurementDevice};
use qlimits_core::peres::sample_gue;
use qlimits_core::seeding::{derive_seed, stream_rng, Stream};
use qlimits_core::{
    Complex64, ComplexVector, HermitianOperator, OperatorRole, StateVector, TimeGrid,
};

use crate::config::{
    AmplitudeSource, CompositeConfig, DeviceSource, EnergySource, GridConfig, OperatorSource,
    Phases,
};

/// Grid in physical time units.
pub fn grid(config: &GridConfig) -> Result<TimeGrid> {
    let grid = match (&config.points, config.t_max) {
        (Some(points), _) => TimeGrid::from_points(points.clone())?,
        (None, Some(t_max)) => TimeGrid::uniform(t_max, config.steps)?,
        (None, None) => bail!("grid needs `points` or `t_max`"),
    };
    Ok(grid)
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

pub fn operator(
    source: &OperatorSource,
    dim: usize,
    role: OperatorRole,
    master: u64,
    stream: Stream,
) -> Result<HermitianOperator> {
    let seed = derive_seed(master, stream, 0);
    Ok(match source {
        OperatorSource::Explicit { re, im } => {
            let re = to_matrix(re);
            let im = im
                .as_deref()
                .map_or_else(|| DMatrix::<f64>::zeros(dim, dim), to_matrix);
            HermitianOperator::from_parts(&re, &im, role).context("explicit matrix")?
        }
        OperatorSource::Gue { scale } => sample_gue(dim, *scale, seed).with_role(role),
        OperatorSource::Zero => HermitianOperator::zeros(dim, role),
        OperatorSource::DiagonalRandom { scale } => {
            let mut r = stream_rng(master, stream, 0);
            let values: Vec<f64> = (0..dim)
                .map(|_| scale * r.sample::<f64, _>(StandardNormal))
                .collect();
            HermitianOperator::from_diagonal(&values, role)
        }
    })
}

/// Unnormalized amplitudes of a block of `len` states.
pub fn amplitudes(
    source: &AmplitudeSource,
    len: usize,
    master: u64,
    stream: Stream,
) -> Vec<Complex64> {
    let mut r = stream_rng(master, stream, 0);
    let mut phase = |phases: Phases| match phases {
        Phases::Aligned => Complex64::new(1.0, 0.0),
        Phases::Random => Complex64::from_polar(1.0, r.random::<f64>() * std::f64::consts::TAU),
    };
    match source {
        AmplitudeSource::Random => {
            let mut r = stream_rng(master, stream, 1);
            (0..len)
                .map(|_| Complex64::new(r.sample(StandardNormal), r.sample(StandardNormal)))
                .collect()
        }
        AmplitudeSource::PowerLaw { exponent, phases } => (1..=len)
            .map(|j| phase(*phases) * (j as f64).powf(-exponent))
            .collect(),
        AmplitudeSource::Constant { phases } => (0..len).map(|_| phase(*phases)).collect(),
        AmplitudeSource::Explicit { re, im } => (0..len)
            .map(|k| Complex64::new(re[k], im.as_ref().map_or(0.0, |im| im[k])))
            .collect(),
    }
}

pub fn state(source: &AmplitudeSource, dim: usize, master: u64) -> Result<StateVector> {
    let amps = amplitudes(source, dim, master, Stream::State);
    StateVector::normalized(ComplexVector::from_vec(amps)).context("initial state")
}

fn energies(source: &EnergySource, dim: usize, master: u64) -> Vec<f64> {
    match source {
        EnergySource::Random { scale } => {
            let mut r = stream_rng(master, Stream::Energies, 0);
            let mut e: Vec<f64> = (0..dim)
                .map(|_| scale * r.sample::<f64, _>(StandardNormal))
                .collect();
            e.sort_by(f64::total_cmp);
            e
        }
        EnergySource::Ladder { spacing } => (0..dim).map(|k| spacing * k as f64).collect(),
        EnergySource::Explicit { values } => values.clone(),
    }
}

pub fn device(source: &DeviceSource, dim: usize, master: u64) -> Result<MeasurementDevice> {
    Ok(match source {
        DeviceSource::Uniform { channels } => MeasurementDevice::uniform(*channels, dim)?,
        DeviceSource::Random { channels } => {
            let mut r = stream_rng(master, Stream::Device, 0);
            let raw = DMatrix::from_fn(*channels, dim, |_, _| r.random::<f64>() + 1e-3);
            let sums: Vec<f64> = (0..dim).map(|k| raw.column(k).sum()).collect();
            build_device(DMatrix::from_fn(*channels, dim, |a, k| {
                raw[(a, k)] / sums[k]
            }))?
        }
        DeviceSource::Explicit { weights } => {
            build_device(DMatrix::from_fn(weights.len(), dim, |a, k| weights[a][k]))
                .context("device weights")?
        }
    })
}

pub fn composite(
    config: &CompositeConfig,
    master: u64,
) -> Result<(CompositeModel, MeasurementDevice)> {
    let n = config.n_apparatus;
    let mut amps = amplitudes(&config.apparatus, n, master, Stream::Apparatus);
    amps.extend(amplitudes(
        &config.particle,
        config.dim - n,
        master,
        Stream::Particle,
    ));
    let psi = StateVector::normalized(ComplexVector::from_vec(amps)).context("composite state")?;
    let v = operator(
        &config.interaction,
        config.dim,
        OperatorRole::Interaction,
        master,
        Stream::Interaction,
    )?;
    let model =
        CompositeModel::from_state(&psi, n, energies(&config.energies, config.dim, master), v)?;
    let device = device(&config.device, config.dim, master)?;
    Ok((model, device))
}
