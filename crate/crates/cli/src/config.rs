//! Experiment configuration: JSON schemas for every subcommand, eager
//! validation, and construction of the potential specification.
//!
//! Every numeric precondition that can be checked from the document alone is
//! checked here, before any artifact is written; violations surface as
//! [`ConfigError`] and exit code 2.

use qplab_core::potential::{sample_frequencies, PotentialSpec};
use serde::Deserialize;
use std::fmt;
use std::path::PathBuf;

/// Configuration-stage failure: printed to stderr, exit code 2, no artifacts.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

fn fail<T>(msg: impl Into<String>) -> ConfigResult<T> {
    Err(ConfigError(msg.into()))
}

fn require(cond: bool, msg: impl Into<String>) -> ConfigResult<()> {
    if cond {
        Ok(())
    } else {
        fail(msg)
    }
}

fn finite(value: f64, name: &str) -> ConfigResult<()> {
    require(value.is_finite(), format!("{name} must be finite, got {value}"))
}

fn positive(value: f64, name: &str) -> ConfigResult<()> {
    finite(value, name)?;
    require(value > 0.0, format!("{name} must be positive, got {value}"))
}

fn non_negative(value: f64, name: &str) -> ConfigResult<()> {
    finite(value, name)?;
    require(value >= 0.0, format!("{name} must be ≥ 0, got {value}"))
}

// Serde default helpers.
fn two() -> usize {
    2
}
fn three() -> usize {
    3
}
fn one_u32() -> u32 {
    1
}
fn two_u32() -> u32 {
    2
}
fn d720() -> usize {
    720
}
fn d256() -> usize {
    256
}
fn d50() -> f64 {
    50.0
}
fn d04() -> f64 {
    0.4
}
fn d005() -> f64 {
    0.05
}
fn d5() -> f64 {
    5.0
}
fn d25() -> f64 {
    2.5
}
fn d05() -> f64 {
    0.5
}

/// Where the potential comes from: a JSON document on disk, or sampled from a
/// seed. Sampled parameters default to the desk family (d = 2, l = 3 basic
/// frequencies, single-step support, three Hermitian pairs).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// Path to a potential document produced by the core serializer.
    #[serde(default)]
    pub spec_file: Option<PathBuf>,
    /// Seed for frequency and coefficient sampling.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Ambient dimension d.
    #[serde(default = "two")]
    pub dimension: usize,
    /// Number of basic frequencies l (must exceed d).
    #[serde(default = "three")]
    pub frequency_count: usize,
    /// Support radius Q of the Fourier data on the frequency lattice.
    #[serde(default = "one_u32")]
    pub coupling_radius: u32,
    /// Number of Hermitian coefficient pairs.
    #[serde(default = "three")]
    pub pair_count: usize,
}

impl PotentialConfig {
    /// Builds the potential, honouring a `--seed` override for sampled
    /// potentials. Any failure here is a configuration error.
    pub fn build(&self, seed_override: Option<u64>) -> ConfigResult<PotentialSpec> {
        if let Some(path) = &self.spec_file {
            if seed_override.is_some() {
                return fail("--seed cannot override a potential loaded from spec_file");
            }
            let text = std::fs::read_to_string(path).map_err(|e| {
                ConfigError(format!("cannot read potential file {}: {e}", path.display()))
            })?;
            return PotentialSpec::from_json(&text).map_err(|e| {
                ConfigError(format!("invalid potential document {}: {e}", path.display()))
            });
        }
        let Some(seed) = seed_override.or(self.seed) else {
            return fail("potential.seed is required for a sampled potential (or pass --seed)");
        };
        let freq = sample_frequencies(seed, self.dimension, self.frequency_count)
            .map_err(|e| ConfigError(format!("cannot sample frequencies: {e}")))?;
        PotentialSpec::random_normalized(seed, freq, self.coupling_radius, self.pair_count)
            .map_err(|e| ConfigError(format!("cannot sample potential: {e}")))
    }
}

/// Annulus scan for non-resonant quasi-momenta.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub potential: PotentialConfig,
    pub coupling: f64,
    /// Truncation size M of the operator window.
    #[serde(default = "two_u32")]
    pub truncation: u32,
    /// Inner and outer radius of the scanned annulus.
    pub annulus: [f64; 2],
    /// Scan grid spacing.
    pub step: f64,
    /// Spectral-gap floor coefficient (floor = coeff/|k|). Defaults to 1.0,
    /// or 0.0 when the coupling vanishes (nothing to protect against).
    #[serde(default)]
    pub gap_floor_coeff: Option<f64>,
}

impl ScanConfig {
    pub fn validate(&self) -> ConfigResult<()> {
        non_negative(self.coupling, "coupling")?;
        require(self.truncation >= 1, "truncation must be ≥ 1")?;
        positive(self.annulus[0], "annulus inner radius")?;
        finite(self.annulus[1], "annulus outer radius")?;
        require(
            self.annulus[1] > self.annulus[0],
            format!(
                "annulus outer radius {} must exceed inner radius {}",
                self.annulus[1], self.annulus[0]
            ),
        )?;
        positive(self.step, "step")?;
        if let Some(c) = self.gap_floor_coeff {
            non_negative(c, "gap_floor_coeff")?;
        }
        Ok(())
    }

    pub fn floor_coeff(&self) -> f64 {
        self.gap_floor_coeff
            .unwrap_or(if self.coupling == 0.0 { 0.0 } else { 1.0 })
    }
}

/// Isoenergetic-surface trace over sampled directions.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub potential: PotentialConfig,
    pub coupling: f64,
    #[serde(default = "two_u32")]
    pub truncation: u32,
    /// Energy level λ* of the surface.
    pub lambda_target: f64,
    /// Number of uniformly sampled directions.
    #[serde(default = "d720")]
    pub directions: usize,
    #[serde(default)]
    pub gap_floor_coeff: Option<f64>,
    /// Energies below this floor are rejected outright.
    #[serde(default = "d50")]
    pub lambda_floor: f64,
}

impl SurfaceConfig {
    pub fn validate(&self) -> ConfigResult<()> {
        non_negative(self.coupling, "coupling")?;
        require(self.truncation >= 1, "truncation must be ≥ 1")?;
        positive(self.lambda_target, "lambda_target")?;
        require(self.directions >= 4, "directions must be ≥ 4")?;
        non_negative(self.lambda_floor, "lambda_floor")?;
        require(
            self.lambda_target > self.lambda_floor,
            format!(
                "lambda_target {} must exceed lambda_floor {}",
                self.lambda_target, self.lambda_floor
            ),
        )?;
        if let Some(c) = self.gap_floor_coeff {
            non_negative(c, "gap_floor_coeff")?;
        }
        Ok(())
    }

    pub fn floor_coeff(&self) -> f64 {
        self.gap_floor_coeff
            .unwrap_or(if self.coupling == 0.0 { 0.0 } else { 1.0 })
    }
}

/// Energy-bounded projection region with a Gaussian witness profile.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub potential: PotentialConfig,
    pub coupling: f64,
    #[serde(default = "two_u32")]
    pub truncation: u32,
    /// Center of the quasi-momentum window.
    pub center: Vec<f64>,
    /// Window lattice spacing.
    pub spacing: f64,
    /// Half extent of the window in cells per axis.
    pub half_extent: i64,
    /// Optional momentum-ball restriction around the window center.
    #[serde(default)]
    pub ball_radius: Option<f64>,
    /// Energy cap of the region.
    pub lambda_cap: f64,
    #[serde(default)]
    pub gap_floor_coeff: Option<f64>,
    /// Witness Gaussian center; defaults to the window center.
    #[serde(default)]
    pub profile_center: Option<Vec<f64>>,
    /// Witness Gaussian momentum width.
    pub profile_sigma: f64,
    /// Box resolution per axis for the quadrature checks.
    #[serde(default = "d256")]
    pub n_points: usize,
}

impl ProjectConfig {
    pub fn validate(&self) -> ConfigResult<()> {
        non_negative(self.coupling, "coupling")?;
        require(self.truncation >= 1, "truncation must be ≥ 1")?;
        require(!self.center.is_empty(), "center must be a non-empty vector")?;
        for (i, c) in self.center.iter().enumerate() {
            finite(*c, &format!("center[{i}]"))?;
        }
        positive(self.spacing, "spacing")?;
        require(self.half_extent >= 1, "half_extent must be ≥ 1")?;
        if let Some(r) = self.ball_radius {
            positive(r, "ball_radius")?;
        }
        positive(self.lambda_cap, "lambda_cap")?;
        if let Some(c) = self.gap_floor_coeff {
            non_negative(c, "gap_floor_coeff")?;
        }
        if let Some(pc) = &self.profile_center {
            require(
                pc.len() == self.center.len(),
                "profile_center dimension must match center",
            )?;
            for (i, c) in pc.iter().enumerate() {
                finite(*c, &format!("profile_center[{i}]"))?;
            }
        }
        positive(self.profile_sigma, "profile_sigma")?;
        require(
            self.n_points >= 8 && self.n_points.is_power_of_two(),
            format!("n_points must be a power of two ≥ 8, got {}", self.n_points),
        )?;
        Ok(())
    }

    pub fn floor_coeff(&self) -> f64 {
        self.gap_floor_coeff
            .unwrap_or(if self.coupling == 0.0 { 0.0 } else { 0.1 })
    }
}

/// Wave-packet transport run with Abel/Cesàro averaging and a β fit.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub potential: PotentialConfig,
    pub coupling: f64,
    #[serde(default = "two_u32")]
    pub truncation: u32,
    /// Packet carrier momentum; also the momentum-window center.
    pub center: Vec<f64>,
    /// Quasi-momentum lattice spacing.
    pub spacing: f64,
    /// Half extent of the momentum window in cells per axis.
    pub half_extent: i64,
    /// Momentum-ball radius around the carrier.
    pub ball_radius: f64,
    /// Energy cap of the projection region.
    pub lambda_cap: f64,
    #[serde(default)]
    pub gap_floor_coeff: Option<f64>,
    /// Packet momentum width.
    pub sigma: f64,
    /// Taper width of the inner cutoff.
    #[serde(default = "d04")]
    pub delta: f64,
    /// Averaging window: T-grid geometric in [t_min, t_max].
    pub t_min: f64,
    pub t_max: f64,
    /// Sampling step of the raw second-moment record.
    #[serde(default = "d005")]
    pub dt: f64,
    /// The raw record extends to tail_factor·t_max so Abel tails converge.
    #[serde(default = "d5")]
    pub tail_factor: f64,
}

impl TransportConfig {
    pub fn validate(&self) -> ConfigResult<()> {
        non_negative(self.coupling, "coupling")?;
        require(self.truncation >= 1, "truncation must be ≥ 1")?;
        require(!self.center.is_empty(), "center must be a non-empty vector")?;
        for (i, c) in self.center.iter().enumerate() {
            finite(*c, &format!("center[{i}]"))?;
        }
        positive(self.spacing, "spacing")?;
        require(self.half_extent >= 1, "half_extent must be ≥ 1")?;
        positive(self.ball_radius, "ball_radius")?;
        positive(self.lambda_cap, "lambda_cap")?;
        if let Some(c) = self.gap_floor_coeff {
            non_negative(c, "gap_floor_coeff")?;
        }
        positive(self.sigma, "sigma")?;
        positive(self.delta, "delta")?;
        positive(self.t_min, "t_min")?;
        finite(self.t_max, "t_max")?;
        require(
            self.t_max > self.t_min,
            format!("t_max {} must exceed t_min {}", self.t_max, self.t_min),
        )?;
        positive(self.dt, "dt")?;
        require(
            self.tail_factor >= 2.0 && self.tail_factor.is_finite(),
            "tail_factor must be ≥ 2 so the Abel tail converges",
        )?;
        Ok(())
    }

    pub fn floor_coeff(&self) -> f64 {
        self.gap_floor_coeff
            .unwrap_or(if self.coupling == 0.0 { 0.0 } else { 0.1 })
    }
}

/// Oscillatory-integral comparison against the leading stationary-phase term.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    /// Required when coupling > 0; ignored for the free dispersion.
    #[serde(default)]
    pub potential: Option<PotentialConfig>,
    /// 0 selects the free dispersion |k|².
    #[serde(default)]
    pub coupling: f64,
    #[serde(default = "two_u32")]
    pub truncation: u32,
    /// Spatial ray z at which the phase ⟨k,z⟩ − λ(k)·1 is stationarized.
    pub z: Vec<f64>,
    /// Energy shell that seeds the stationary-point search.
    pub lambda_star: f64,
    /// Amplitude bump center; defaults to the stationary point.
    #[serde(default)]
    pub amplitude_center: Option<Vec<f64>>,
    /// Amplitude bump width.
    #[serde(default = "d05")]
    pub amplitude_sigma: f64,
    /// Evaluation times (ascending).
    pub times: Vec<f64>,
}

impl StationaryConfig {
    pub fn validate(&self) -> ConfigResult<()> {
        non_negative(self.coupling, "coupling")?;
        require(self.truncation >= 1, "truncation must be ≥ 1")?;
        if self.coupling > 0.0 {
            require(
                self.potential.is_some(),
                "potential is required when coupling > 0",
            )?;
        }
        require(
            self.z.len() == 2 || self.z.len() == 3,
            format!("z must have 2 or 3 components, got {}", self.z.len()),
        )?;
        for (i, c) in self.z.iter().enumerate() {
            finite(*c, &format!("z[{i}]"))?;
        }
        positive(self.lambda_star, "lambda_star")?;
        if let Some(ac) = &self.amplitude_center {
            require(
                ac.len() == self.z.len(),
                "amplitude_center dimension must match z",
            )?;
            for (i, c) in ac.iter().enumerate() {
                finite(*c, &format!("amplitude_center[{i}]"))?;
            }
        }
        positive(self.amplitude_sigma, "amplitude_sigma")?;
        require(!self.times.is_empty(), "times must be non-empty")?;
        for (i, t) in self.times.iter().enumerate() {
            positive(*t, &format!("times[{i}]"))?;
        }
        require(
            self.times.windows(2).all(|w| w[1] > w[0]),
            "times must be strictly increasing",
        )?;
        Ok(())
    }
}

/// Finite-window small-divisor margins of the basic frequencies.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiophantineConfig {
    pub potential: PotentialConfig,
    /// Largest window size N; margins are tabulated for every 1 ≤ n ≤ N.
    pub n_max: i64,
    /// Diophantine exponent τ in |nω|·|n|^τ.
    #[serde(default = "d25")]
    pub tau: f64,
}

impl DiophantineConfig {
    pub fn validate(&self) -> ConfigResult<()> {
        require(self.n_max >= 1, "n_max must be ≥ 1")?;
        require(
            self.n_max <= 60,
            format!(
                "n_max = {} enumerates (2N+1)^l lattice points; keep it ≤ 60",
                self.n_max
            ),
        )?;
        positive(self.tau, "tau")?;
        Ok(())
    }
}

/// Threads requested by a config document, if any.
pub fn config_threads(doc: &serde_json::Value) -> Option<usize> {
    doc.get("threads").and_then(|v| v.as_u64()).map(|v| v as usize)
}
