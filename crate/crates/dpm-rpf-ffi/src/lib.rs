//! C ABI for the robust particle filter.
//!
//! The surface follows the usual C-binding conventions: opaque handles,
//! plain status codes, caller-owned buffers, and a generated header
//! (`include/dpm_rpf.h`, written by the build script). Handles are not
//! thread-safe; use one per thread or synchronize externally.

use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use dpm_rpf::benchmark::{as_system_model, simulate, BenchmarkModel, TimeSeriesConfig};
use dpm_rpf::dpm::MixtureDensity;
use dpm_rpf::filter::{
    BaselineState, CollapsePolicy, FilterConfig, FilterState, RefineConfig, RefineTrigger,
    StepDiagnostics,
};
use dpm_rpf::kernels::{GammaParams, GaussianParams, NiwParams};
use dpm_rpf::{Error, SeedStream};
use nalgebra::dvector;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A configuration value was outside its valid domain.
    InvalidConfig = 2,
    /// Buffer or sequence lengths disagree.
    LengthMismatch = 3,
    /// Every particle's likelihood underflowed and the filter was configured
    /// to abort on collapse.
    WeightCollapse = 4,
    /// The requested data is not available yet (e.g. diagnostics before the
    /// first step).
    NotReady = 5,
    /// Any other runtime failure.
    Runtime = 6,
    /// A panic was caught at the boundary.
    Panic = 7,
}

/// Which filter a handle runs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrAlgorithm {
    DpmRpf = 0,
    BaselinePf = 1,
}

/// Refinement trigger policy.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrRefineTrigger {
    SizeMultiple = 0,
    NewClusterAndSizeMultiple = 1,
}

/// Benchmark scenario description.
///
/// Leave `outlier_means` null to use the built-in two-component
/// contamination mixture; otherwise `outlier_means`, `outlier_vars` and
/// `outlier_weights` must all point to `outlier_components` doubles.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DrScenario {
    pub outlier_prob: f64,
    pub x1: f64,
    pub init_prior_var: f64,
    pub standard_noise_mean: f64,
    pub standard_noise_var: f64,
    pub process_shape: f64,
    pub process_scale: f64,
    pub outlier_means: *const f64,
    pub outlier_vars: *const f64,
    pub outlier_weights: *const f64,
    pub outlier_components: usize,
}

/// Filter configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DrFilterOptions {
    pub algorithm: DrAlgorithm,
    /// Particle count `J`.
    pub particles: usize,
    /// Seed of the filter's random stream.
    pub seed: u64,
    /// DPM concentration.
    pub alpha: f64,
    /// NIW base-distribution hyper-parameters.
    pub mu0: f64,
    pub rho: f64,
    pub kappa: f64,
    pub w: f64,
    /// Gibbs-refinement schedule.
    pub refine_interval: usize,
    pub refine_sweeps: usize,
    pub refine_trigger: DrRefineTrigger,
    /// Initial mass of the standard-noise hypothesis.
    pub noise_pseudo_count: f64,
    /// Fail a step with `DR_STATUS_WEIGHT_COLLAPSE` instead of falling back
    /// to uniform weights when every likelihood underflows.
    pub abort_on_collapse: bool,
}

/// Last step's diagnostics.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DrDiagnostics {
    /// Time index of the consumed measurement.
    pub t: u64,
    /// Sampled hypothesis (0 = standard noise).
    pub selected_hypothesis: u64,
    /// Active outlier clusters after the step.
    pub active_clusters: u64,
    /// Effective sample size after the weight update.
    pub ess: f64,
    /// Whether the step fell back to uniform weights.
    pub fallback: bool,
}

enum Engine {
    Robust(FilterState),
    Baseline(BaselineState),
}

/// Opaque filter handle.
pub struct DrFilter {
    engine: Engine,
    model: BenchmarkModel,
    rng: SeedStream,
    last: Option<StepDiagnostics>,
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn dr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Human-readable description of a status code; static, do not free.
#[no_mangle]
pub extern "C" fn dr_status_message(status: DrStatus) -> *const c_char {
    let text: &'static str = match status {
        DrStatus::Ok => "ok\0",
        DrStatus::NullArgument => "required pointer argument was null\0",
        DrStatus::InvalidConfig => "configuration value outside its valid domain\0",
        DrStatus::LengthMismatch => "buffer or sequence lengths disagree\0",
        DrStatus::WeightCollapse => "all particle likelihoods underflowed\0",
        DrStatus::NotReady => "requested data is not available yet\0",
        DrStatus::Runtime => "runtime failure\0",
        DrStatus::Panic => "internal panic caught at the boundary\0",
    };
    text.as_ptr() as *const c_char
}

fn status_of(err: &Error) -> DrStatus {
    match err {
        Error::WeightCollapse { .. } | Error::TotalLikelihoodUnderflow => DrStatus::WeightCollapse,
        Error::LengthMismatch { .. } | Error::DimensionMismatch { .. } => DrStatus::LengthMismatch,
        Error::InvalidCovariance
        | Error::InvalidParameter(_)
        | Error::Config(_)
        | Error::InvalidClusterId { .. } => DrStatus::InvalidConfig,
        _ => DrStatus::Runtime,
    }
}

fn guarded(body: impl FnOnce() -> DrStatus) -> DrStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or(DrStatus::Panic)
}

/// Fill `out` with the reference scenario (built-in contamination mixture).
///
/// # Safety
/// `out` must be valid for writing one `DrScenario`.
#[no_mangle]
pub unsafe extern "C" fn dr_scenario_default(out: *mut DrScenario) -> DrStatus {
    guarded(|| {
        if out.is_null() {
            return DrStatus::NullArgument;
        }
        let reference = TimeSeriesConfig::default();
        unsafe {
            out.write(DrScenario {
                outlier_prob: reference.outlier_prob,
                x1: reference.x1,
                init_prior_var: reference.init_prior_var,
                standard_noise_mean: reference.standard_noise.mean[0],
                standard_noise_var: reference.standard_noise.cov[(0, 0)],
                process_shape: reference.process_noise.shape,
                process_scale: reference.process_noise.scale,
                outlier_means: std::ptr::null(),
                outlier_vars: std::ptr::null(),
                outlier_weights: std::ptr::null(),
                outlier_components: 0,
            });
        }
        DrStatus::Ok
    })
}

/// Fill `out` with the reference filter options for `algorithm`.
///
/// # Safety
/// `out` must be valid for writing one `DrFilterOptions`.
#[no_mangle]
pub unsafe extern "C" fn dr_filter_options_default(
    algorithm: DrAlgorithm,
    out: *mut DrFilterOptions,
) -> DrStatus {
    guarded(|| {
        if out.is_null() {
            return DrStatus::NullArgument;
        }
        unsafe {
            out.write(DrFilterOptions {
                algorithm,
                particles: 200,
                seed: 0,
                alpha: 1.0,
                mu0: 21.0,
                rho: 1.0,
                kappa: 10.0,
                w: 5.0,
                refine_interval: 10,
                refine_sweeps: 20,
                refine_trigger: DrRefineTrigger::SizeMultiple,
                noise_pseudo_count: 1.0,
                abort_on_collapse: false,
            });
        }
        DrStatus::Ok
    })
}

unsafe fn scenario_config(scenario: &DrScenario) -> Result<TimeSeriesConfig, Error> {
    let outlier_mixture = if scenario.outlier_means.is_null() {
        TimeSeriesConfig::default().outlier_mixture
    } else {
        if scenario.outlier_vars.is_null()
            || scenario.outlier_weights.is_null()
            || scenario.outlier_components == 0
        {
            return Err(Error::InvalidParameter(
                "outlier mixture arrays must all be present".into(),
            ));
        }
        let n = scenario.outlier_components;
        let means = unsafe { std::slice::from_raw_parts(scenario.outlier_means, n) };
        let vars = unsafe { std::slice::from_raw_parts(scenario.outlier_vars, n) };
        let weights = unsafe { std::slice::from_raw_parts(scenario.outlier_weights, n) };
        MixtureDensity::new(
            weights.to_vec(),
            means
                .iter()
                .zip(vars)
                .map(|(&m, &v)| GaussianParams::scalar(m, v))
                .collect::<Result<_, _>>()?,
        )?
    };
    Ok(TimeSeriesConfig {
        horizon: 1,
        outlier_prob: scenario.outlier_prob,
        outlier_mixture,
        standard_noise: GaussianParams::scalar(
            scenario.standard_noise_mean,
            scenario.standard_noise_var,
        )?,
        process_noise: GammaParams::new(scenario.process_shape, scenario.process_scale)?,
        x1: scenario.x1,
        init_prior_var: scenario.init_prior_var,
    })
}

/// Simulate `horizon` steps of the scenario into caller-owned buffers.
///
/// `states_out` and `measurements_out` are required; `outlier_flags_out` and
/// `noise_out` may be null. All provided buffers must hold `horizon` entries.
///
/// # Safety
/// `scenario` must point to a valid `DrScenario` (with mixture arrays of the
/// declared length, if set) and every non-null output buffer must be valid
/// for writing `horizon` elements.
#[no_mangle]
pub unsafe extern "C" fn dr_simulate(
    scenario: *const DrScenario,
    seed: u64,
    horizon: usize,
    states_out: *mut f64,
    measurements_out: *mut f64,
    outlier_flags_out: *mut bool,
    noise_out: *mut f64,
) -> DrStatus {
    guarded(|| {
        if scenario.is_null() || states_out.is_null() || measurements_out.is_null() {
            return DrStatus::NullArgument;
        }
        if horizon == 0 {
            return DrStatus::InvalidConfig;
        }
        let mut config = match unsafe { scenario_config(&*scenario) } {
            Ok(c) => c,
            Err(e) => return status_of(&e),
        };
        config.horizon = horizon;
        let mut rng = SeedStream::new(seed);
        let trajectory = match simulate(&config, &mut rng) {
            Ok(t) => t,
            Err(e) => return status_of(&e),
        };
        unsafe {
            std::ptr::copy_nonoverlapping(trajectory.states.as_ptr(), states_out, horizon);
            std::ptr::copy_nonoverlapping(
                trajectory.measurements.as_ptr(),
                measurements_out,
                horizon,
            );
            if !outlier_flags_out.is_null() {
                for (i, &flag) in trajectory.outlier_flags.iter().enumerate() {
                    outlier_flags_out.add(i).write(flag);
                }
            }
            if !noise_out.is_null() {
                std::ptr::copy_nonoverlapping(trajectory.noise_values.as_ptr(), noise_out, horizon);
            }
        }
        DrStatus::Ok
    })
}

fn filter_config(options: &DrFilterOptions) -> Result<FilterConfig, Error> {
    let config = FilterConfig {
        particles: options.particles,
        alpha: options.alpha,
        base: NiwParams::scalar(options.mu0, options.rho, options.kappa, options.w)?,
        refine: RefineConfig {
            interval: options.refine_interval,
            sweeps: options.refine_sweeps,
            trigger: match options.refine_trigger {
                DrRefineTrigger::SizeMultiple => RefineTrigger::SizeMultiple,
                DrRefineTrigger::NewClusterAndSizeMultiple => {
                    RefineTrigger::NewClusterAndSizeMultiple
                }
            },
        },
        noise_pseudo_count: options.noise_pseudo_count,
        collapse: if options.abort_on_collapse {
            CollapsePolicy::Error
        } else {
            CollapsePolicy::UniformFallback
        },
        ess_resample_threshold: None,
        propagate_first_step: false,
    };
    config.validate()?;
    Ok(config)
}

/// Create a filter over the scenario's system model.
///
/// On success `*out` owns the handle; release it with [`dr_filter_free`].
///
/// # Safety
/// `scenario` and `options` must point to valid structs and `out` must be
/// valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_filter_new(
    scenario: *const DrScenario,
    options: *const DrFilterOptions,
    out: *mut *mut DrFilter,
) -> DrStatus {
    guarded(|| {
        if scenario.is_null() || options.is_null() || out.is_null() {
            return DrStatus::NullArgument;
        }
        let config = match unsafe { scenario_config(&*scenario) } {
            Ok(c) => c,
            Err(e) => return status_of(&e),
        };
        let model = match as_system_model(&config) {
            Ok(m) => m,
            Err(e) => return status_of(&e),
        };
        let options = unsafe { &*options };
        let mut rng = SeedStream::new(options.seed);
        let engine = match options.algorithm {
            DrAlgorithm::DpmRpf => {
                match filter_config(options).and_then(|c| FilterState::new(&model, c, &mut rng)) {
                    Ok(state) => Engine::Robust(state),
                    Err(e) => return status_of(&e),
                }
            }
            DrAlgorithm::BaselinePf => {
                if options.particles == 0 {
                    return DrStatus::InvalidConfig;
                }
                match BaselineState::new(&model, options.particles, &mut rng) {
                    Ok(state) => Engine::Baseline(state),
                    Err(e) => return status_of(&e),
                }
            }
        };
        let handle = Box::new(DrFilter {
            engine,
            model,
            rng,
            last: None,
        });
        unsafe { out.write(Box::into_raw(handle)) };
        DrStatus::Ok
    })
}

/// Consume one measurement and write the state estimate.
///
/// # Safety
/// `filter` must be a live handle from [`dr_filter_new`]; `estimate_out`
/// must be valid for writing one double.
#[no_mangle]
pub unsafe extern "C" fn dr_filter_step(
    filter: *mut DrFilter,
    measurement: f64,
    estimate_out: *mut f64,
) -> DrStatus {
    guarded(|| {
        if filter.is_null() || estimate_out.is_null() {
            return DrStatus::NullArgument;
        }
        let handle = unsafe { &mut *filter };
        let y = dvector![measurement];
        let result = match &mut handle.engine {
            Engine::Robust(state) => state.step(&y, &handle.model, &mut handle.rng),
            Engine::Baseline(state) => state.step(&y, &handle.model, &mut handle.rng),
        };
        match result {
            Ok(output) => {
                unsafe { estimate_out.write(output.estimate[0]) };
                handle.last = Some(output.diagnostics);
                DrStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Fetch the diagnostics of the most recent step.
///
/// # Safety
/// `filter` must be a live handle; `out` must be valid for writing one
/// `DrDiagnostics`.
#[no_mangle]
pub unsafe extern "C" fn dr_filter_diagnostics(
    filter: *const DrFilter,
    out: *mut DrDiagnostics,
) -> DrStatus {
    guarded(|| {
        if filter.is_null() || out.is_null() {
            return DrStatus::NullArgument;
        }
        let handle = unsafe { &*filter };
        match &handle.last {
            Some(diag) => {
                unsafe {
                    out.write(DrDiagnostics {
                        t: diag.t as u64,
                        selected_hypothesis: diag.selected as u64,
                        active_clusters: diag.clusters as u64,
                        ess: diag.ess,
                        fallback: diag.fallback,
                    });
                }
                DrStatus::Ok
            }
            None => DrStatus::NotReady,
        }
    })
}

/// Serialize the robust filter's outlier model as NUL-terminated JSON.
///
/// Always writes the required size (including the NUL) to `required` when it
/// is non-null; copies the JSON only when `capacity` suffices. Baseline
/// handles have no outlier model and report `DR_STATUS_NOT_READY`.
///
/// # Safety
/// `filter` must be a live handle; `buffer` must be valid for `capacity`
/// bytes when non-null.
#[no_mangle]
pub unsafe extern "C" fn dr_filter_snapshot_json(
    filter: *const DrFilter,
    buffer: *mut c_char,
    capacity: usize,
    required: *mut usize,
) -> DrStatus {
    guarded(|| {
        if filter.is_null() {
            return DrStatus::NullArgument;
        }
        let handle = unsafe { &*filter };
        let state = match &handle.engine {
            Engine::Robust(state) => state,
            Engine::Baseline(_) => return DrStatus::NotReady,
        };
        let json = match state.dpm().to_json() {
            Ok(j) => j,
            Err(e) => return status_of(&e),
        };
        let needed = json.len() + 1;
        if !required.is_null() {
            unsafe { required.write(needed) };
        }
        if buffer.is_null() {
            return DrStatus::Ok;
        }
        if capacity < needed {
            return DrStatus::LengthMismatch;
        }
        unsafe {
            std::ptr::copy_nonoverlapping(json.as_ptr() as *const c_char, buffer, json.len());
            buffer.add(json.len()).write(0);
        }
        DrStatus::Ok
    })
}

/// Run a filter over a whole measurement array in one call.
///
/// # Safety
/// `scenario` and `options` must point to valid structs; `measurements` must
/// hold `len` doubles and `estimates_out` must be valid for writing `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn dr_run_filter(
    scenario: *const DrScenario,
    options: *const DrFilterOptions,
    measurements: *const f64,
    len: usize,
    estimates_out: *mut f64,
) -> DrStatus {
    guarded(|| {
        if measurements.is_null() || estimates_out.is_null() {
            return DrStatus::NullArgument;
        }
        if len == 0 {
            return DrStatus::InvalidConfig;
        }
        let mut handle: *mut DrFilter = std::ptr::null_mut();
        let status = unsafe { dr_filter_new(scenario, options, &mut handle) };
        if status != DrStatus::Ok {
            return status;
        }
        let ys = unsafe { std::slice::from_raw_parts(measurements, len) };
        for (i, &y) in ys.iter().enumerate() {
            let mut estimate = 0.0;
            let status = unsafe { dr_filter_step(handle, y, &mut estimate) };
            if status != DrStatus::Ok {
                unsafe { dr_filter_free(handle) };
                return status;
            }
            unsafe { estimates_out.add(i).write(estimate) };
        }
        unsafe { dr_filter_free(handle) };
        DrStatus::Ok
    })
}

/// Release a filter handle. Null is a no-op.
///
/// # Safety
/// `filter` must be null or a handle from [`dr_filter_new`] that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn dr_filter_free(filter: *mut DrFilter) {
    if !filter.is_null() {
        drop(unsafe { Box::from_raw(filter) });
    }
}
