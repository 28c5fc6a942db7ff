//! Univariate nonlinear benchmark system with contaminated measurements.
//!
//! The state follows a damped sinusoidal growth recursion driven by Gamma
//! process noise; the measurement alternates every half-period between a
//! quadratic and a linear map of the state. Measurement noise is drawn from
//! the known standard Gaussian with probability `1 - P_o` and from a
//! two-component outlier mixture with probability `P_o`. Outlier arrival
//! times are recorded in the trajectory for evaluation but are never shown
//! to the filters.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{dvector, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dpm::{MixtureDensity, MixtureEvaluator};
use crate::error::{Error, Result};
use crate::filter::SystemModel;
use crate::kernels::{GammaParams, GaussianDensity, GaussianParams};
use crate::rng::SeedStream;

/// Full description of one simulated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesConfig {
    /// Number of measurements, `T`.
    pub horizon: usize,
    /// Probability that a measurement noise draw is an outlier.
    pub outlier_prob: f64,
    /// The contaminating distribution the filters never get to see.
    pub outlier_mixture: MixtureDensity,
    /// The known standard measurement noise.
    pub standard_noise: GaussianParams,
    /// Process noise (shape/scale Gamma).
    pub process_noise: GammaParams,
    /// Fixed initial state.
    pub x1: f64,
    /// Variance of the filters' initial-state prior, centered on `x1`.
    pub init_prior_var: f64,
}

impl Default for TimeSeriesConfig {
    fn default() -> Self {
        Self {
            horizon: 600,
            outlier_prob: 0.1,
            outlier_mixture: MixtureDensity::new(
                vec![0.5, 0.5],
                vec![
                    GaussianParams::scalar(20.0, 0.1).expect("static parameters"),
                    GaussianParams::scalar(22.0, 0.1).expect("static parameters"),
                ],
            )
            .expect("static parameters"),
            standard_noise: GaussianParams::scalar(0.0, 0.01).expect("static parameters"),
            // Gamma(3, 2) in the shape/rate convention of the original
            // benchmark: shape 3, scale 1/2, mean 1.5. The shape/scale
            // reading (mean 6) is one config change away.
            process_noise: GammaParams { shape: 3.0, scale: 0.5 },
            x1: 1.0,
            init_prior_var: 1.0,
        }
    }
}

impl TimeSeriesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return Err(Error::InvalidParameter(format!(
                "outlier probability must lie in [0, 1], got {}",
                self.outlier_prob
            )));
        }
        if !(self.init_prior_var > 0.0) {
            return Err(Error::InvalidParameter(
                "initial prior variance must be positive".into(),
            ));
        }
        self.outlier_mixture.validate()?;
        if self.outlier_mixture.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.outlier_mixture.dim(),
            });
        }
        self.standard_noise.validate()?;
        if self.standard_noise.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.standard_noise.dim(),
            });
        }
        GammaParams::new(self.process_noise.shape, self.process_noise.scale)?;
        Ok(())
    }
}

/// State recursion: `x_{t+1} = 1 + sin(4 pi mod(t+1, 60) / 100) + 0.5 x_t + u`.
///
/// `t` is the index of the source state, so the sine term is driven by the
/// target index `t + 1`.
pub fn transition(x: f64, t: usize, u: f64) -> f64 {
    let phase = ((t + 1) % 60) as f64;
    1.0 + (4.0 * std::f64::consts::PI * phase / 100.0).sin() + 0.5 * x + u
}

/// Measurement map: quadratic `0.2 x^2 + n` while `mod(t, 60) <= 30`, linear
/// `0.2 x - 2 + n` otherwise.
pub fn measure(x: f64, t: usize, n: f64) -> f64 {
    if t % 60 <= 30 {
        0.2 * x * x + n
    } else {
        0.2 * x - 2.0 + n
    }
}

/// Draw one measurement-noise realization and whether it came from the
/// outlier branch.
pub fn sample_noise(config: &TimeSeriesConfig, rng: &mut SeedStream) -> Result<(f64, bool)> {
    config.validate()?;
    let standard = GaussianDensity::new(&config.standard_noise)?;
    let outliers = config.outlier_mixture.evaluator()?;
    draw_noise(config.outlier_prob, &standard, &outliers, rng)
}

fn draw_noise(
    outlier_prob: f64,
    standard: &GaussianDensity,
    outliers: &MixtureEvaluator,
    rng: &mut SeedStream,
) -> Result<(f64, bool)> {
    let is_outlier = rng.random::<f64>() < outlier_prob;
    let value = if is_outlier {
        outliers.sample(rng)?[0]
    } else {
        standard.sample(rng)[0]
    };
    Ok((value, is_outlier))
}

/// One simulated ground-truth trajectory with its contaminated measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub measurements: Vec<f64>,
    pub outlier_flags: Vec<bool>,
    pub noise_values: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Measurements as the column vectors the filter API consumes.
    pub fn measurement_vectors(&self) -> Vec<DVector<f64>> {
        self.measurements.iter().map(|&y| dvector![y]).collect()
    }

    /// Write `t,x_true,y,is_outlier,n_true` rows (UTF-8, LF, header first).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"t,x_true,y,is_outlier,n_true\n")?;
        for t in 0..self.len() {
            writeln!(
                w,
                "{},{:?},{:?},{},{:?}",
                t + 1,
                self.states[t],
                self.measurements[t],
                self.outlier_flags[t],
                self.noise_values[t]
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parse a trajectory CSV produced by [`Trajectory::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let parse_err = |line: usize, msg: String| Error::ParseCsv {
            path: display.clone(),
            line,
            msg,
        };
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(parse_err(1, "empty file".into())),
        };
        if header.trim() != "t,x_true,y,is_outlier,n_true" {
            return Err(parse_err(1, format!("unexpected header `{header}`")));
        }
        let mut trajectory = Trajectory {
            states: Vec::new(),
            measurements: Vec::new(),
            outlier_flags: Vec::new(),
            noise_values: Vec::new(),
        };
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(parse_err(
                    line_no,
                    format!("expected 5 fields, got {}", fields.len()),
                ));
            }
            let t: usize = fields[0]
                .parse()
                .map_err(|e| parse_err(line_no, format!("bad time index: {e}")))?;
            if t != trajectory.len() + 1 {
                return Err(parse_err(
                    line_no,
                    format!("time index {t} out of order (expected {})", trajectory.len() + 1),
                ));
            }
            let float = |field: usize, name: &str| -> Result<f64> {
                fields[field]
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("bad {name}: {e}")))
            };
            let x = float(1, "x_true")?;
            let y = float(2, "y")?;
            let n = float(4, "n_true")?;
            let flag = match fields[3] {
                "true" => true,
                "false" => false,
                other => {
                    return Err(parse_err(line_no, format!("bad is_outlier `{other}`")));
                }
            };
            trajectory.states.push(x);
            trajectory.measurements.push(y);
            trajectory.outlier_flags.push(flag);
            trajectory.noise_values.push(n);
        }
        if trajectory.is_empty() {
            return Err(parse_err(2, "no data rows".into()));
        }
        Ok(trajectory)
    }
}

/// Generate a full trajectory: states by the transition recursion from the
/// fixed `x1`, measurements by the branch-switching map with contaminated
/// noise. Flags and realized noises are recorded for evaluation only.
pub fn simulate(config: &TimeSeriesConfig, rng: &mut SeedStream) -> Result<Trajectory> {
    config.validate()?;
    let standard = GaussianDensity::new(&config.standard_noise)?;
    let outliers = config.outlier_mixture.evaluator()?;

    let horizon = config.horizon;
    let mut trajectory = Trajectory {
        states: Vec::with_capacity(horizon),
        measurements: Vec::with_capacity(horizon),
        outlier_flags: Vec::with_capacity(horizon),
        noise_values: Vec::with_capacity(horizon),
    };
    for t in 1..=horizon {
        let x = if t == 1 {
            config.x1
        } else {
            let u = crate::kernels::sample_gamma(&config.process_noise, rng)?;
            transition(trajectory.states[t - 2], t - 1, u)
        };
        trajectory.states.push(x);
        let (n, is_outlier) = draw_noise(config.outlier_prob, &standard, &outliers, rng)?;
        trajectory.measurements.push(measure(x, t, n));
        trajectory.outlier_flags.push(is_outlier);
        trajectory.noise_values.push(n);
    }
    Ok(trajectory)
}

/// The benchmark bound to the [`SystemModel`] interface the filters consume.
#[derive(Debug, Clone)]
pub struct BenchmarkModel {
    standard_noise: GaussianParams,
    process_noise: rand_distr::Gamma<f64>,
    init_prior: GaussianDensity,
}

impl BenchmarkModel {
    pub fn new(config: &TimeSeriesConfig) -> Result<Self> {
        config.validate()?;
        let process_noise =
            rand_distr::Gamma::new(config.process_noise.shape, config.process_noise.scale)
                .map_err(|e| Error::InvalidParameter(format!("gamma: {e}")))?;
        let init_prior = GaussianDensity::new(&GaussianParams::scalar(
            config.x1,
            config.init_prior_var,
        )?)?;
        Ok(Self {
            standard_noise: config.standard_noise.clone(),
            process_noise,
            init_prior,
        })
    }
}

/// Bind a scenario to the filter-facing model abstraction.
pub fn as_system_model(config: &TimeSeriesConfig) -> Result<BenchmarkModel> {
    BenchmarkModel::new(config)
}

impl SystemModel for BenchmarkModel {
    fn state_dim(&self) -> usize {
        1
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn transition(&self, x: &DVector<f64>, t: usize) -> DVector<f64> {
        dvector![transition(x[0], t, 0.0)]
    }

    fn measurement(&self, x: &DVector<f64>, t: usize) -> DVector<f64> {
        dvector![measure(x[0], t, 0.0)]
    }

    fn sample_process_noise(&self, rng: &mut SeedStream) -> DVector<f64> {
        dvector![rng.sample(self.process_noise)]
    }

    fn sample_initial_state(&self, rng: &mut SeedStream) -> DVector<f64> {
        self.init_prior.sample(rng)
    }

    fn standard_noise(&self) -> &GaussianParams {
        &self.standard_noise
    }
}
