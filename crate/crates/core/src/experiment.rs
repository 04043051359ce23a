//! Batch experiments: load a JSON config, solve each risk-aversion level,
//! run the requested validations and write CSV and JSON artifacts.
//!
//! Every run is deterministic given its config and seed; reruns produce
//! byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{curve_csv, picard_apply, solve_with, table_csv, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::io::write_file;
use crate::model::MarketSpec;
use crate::ode::{SolveSettings, DEFAULT_STEPS};
use crate::report::{McReport, RngSpec};
use crate::simulate::{
    certify_with, default_certification_points, estimate_j_with, DiscountConvention, ProportionalStrategy,
    SlopeCertificate, DEFAULT_PATHS, DEFAULT_PATH_STEPS,
};

/// Risk-aversion levels of the reference experiment.
pub const REFERENCE_GAMMAS: [f64; 4] = [0.7, 0.0, -0.5, -1.0];

/// Which artifacts and validations a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub curves: bool,
    pub tables: bool,
    pub plot_script: bool,
    pub fixed_point: bool,
    pub mc_validation: bool,
    pub slope_certification: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { curves: true, tables: false, plot_script: false, fixed_point: false, mc_validation: false, slope_certification: false }
    }
}

impl Outputs {
    pub fn all() -> Self {
        Self { curves: true, tables: true, plot_script: true, fixed_point: true, mc_validation: true, slope_certification: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: MarketSpec,
    /// Overrides `spec.gamma`; one run per entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(default)]
    pub outputs: Outputs,
    /// Solver steps; defaults to 2048.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// Monte-Carlo paths; defaults to 100000.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Discount convention for Monte-Carlo values and slope certificates.
    #[serde(default)]
    pub discount: DiscountConvention,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// The reference two-regime market at all four risk-aversion levels.
    pub fn reference() -> Self {
        Self {
            spec: MarketSpec::reference(-1.0),
            gammas: Some(REFERENCE_GAMMAS.to_vec()),
            outputs: Outputs::default(),
            grid: None,
            paths: None,
            seed: 0,
            out_dir: default_out_dir(),
            discount: DiscountConvention::FrozenAtStart,
        }
    }

    /// Parses and validates; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.gammas.clone().unwrap_or_else(|| vec![self.spec.gamma])
    }

    /// Checks the market (for every requested gamma) and the overrides.
    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.spec.violations().into_iter().find(|v| !matches!(v, crate::error::SpecViolation::GammaTooLarge(_))) {
            return Err(Error::Config { path: format!("spec.{}", v.path()), message: v.to_string() });
        }
        if self.gammas.is_none() && !(self.spec.gamma < 1.0) {
            return Err(Error::Config { path: "spec.gamma".into(), message: format!("gamma = {} must be below 1", self.spec.gamma) });
        }
        for (k, &g) in self.gammas.iter().flatten().enumerate() {
            if !(g < 1.0) || !g.is_finite() {
                return Err(Error::Config { path: format!("gammas[{k}]"), message: format!("gamma = {g} must be finite and below 1") });
            }
        }
        if matches!(self.gammas.as_deref(), Some([])) {
            return Err(Error::Config { path: "gammas".into(), message: "empty list".into() });
        }
        if let Some(n) = self.grid.filter(|&n| n < 16) {
            return Err(Error::Config { path: "grid".into(), message: format!("{n} steps is below the minimum of 16") });
        }
        if let Some(n) = self.paths.filter(|&n| n < 1000) {
            return Err(Error::Config { path: "paths".into(), message: format!("{n} paths is below the minimum of 1000") });
        }
        Ok(())
    }

    fn settings(&self) -> SolveSettings {
        self.grid.map(SolveSettings::with_steps).unwrap_or_default()
    }
}

/// File-name label for a gamma, e.g. `gamma_-0.5`.
pub fn gamma_label(gamma: f64) -> String {
    format!("gamma_{gamma}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointCheck {
    pub sup_distance: f64,
    pub tolerance_floor: f64,
    pub sigmas: f64,
    pub n_paths: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueCheck {
    pub state: usize,
    pub value: f64,
    pub report: McReport,
    pub passed: bool,
}

/// Outcome of one gamma.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaReport {
    pub gamma: f64,
    pub branch: Option<String>,
    pub error: Option<String>,
    pub residual: Option<f64>,
    pub terminal_gap: Option<f64>,
    /// `C(0, i)` per regime.
    pub initial_rates: Vec<f64>,
    pub fixed_point: Option<FixedPointCheck>,
    pub value_checks: Vec<ValueCheck>,
    pub slope_certificates: Vec<SlopeCertificate>,
    pub files: Vec<String>,
    pub passed: bool,
}

impl GammaReport {
    fn failed(gamma: f64, err: &Error) -> Self {
        Self {
            gamma,
            branch: None,
            error: Some(err.to_string()),
            residual: None,
            terminal_gap: None,
            initial_rates: Vec::new(),
            fixed_point: None,
            value_checks: Vec::new(),
            slope_certificates: Vec::new(),
            files: Vec::new(),
            passed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub runs: Vec<GammaReport>,
    pub passed: bool,
}

impl RunSummary {
    /// 0 when every requested validation passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Residual norm accepted as a solved system at the default grid; centred
/// differencing of the stored table alone contributes a few 1e-6 there.
pub const RESIDUAL_TOLERANCE: f64 = 1e-5;

/// [`RESIDUAL_TOLERANCE`] scaled by the `h^2` error of the residual probe on
/// grids coarser than the default.
pub fn residual_tolerance(n_steps: usize) -> f64 {
    let ratio = DEFAULT_STEPS as f64 / n_steps as f64;
    RESIDUAL_TOLERANCE * ratio.max(1.0).powi(2)
}
/// Tolerance on `|C(T, i) - 1|`.
pub const TERMINAL_TOLERANCE: f64 = 1e-6;

/// Runs every gamma of `config` concurrently and writes artifacts under
/// `config.out_dir`. Failures of one gamma do not stop the others.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let gammas = config.gammas();
    let runs: Vec<GammaReport> = gammas
        .par_iter()
        .enumerate()
        .map(|(k, &gamma)| {
            let rng = RngSpec::new(config.seed).child(k as u64);
            run_gamma(config, gamma, &rng).unwrap_or_else(|e| GammaReport::failed(gamma, &e))
        })
        .collect();
    let summary = RunSummary { seed: config.seed, passed: runs.iter().all(|r| r.passed), runs };
    write_file(&config.out_dir.join("report.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(summary)
}

fn run_gamma(config: &ExperimentConfig, gamma: f64, rng: &RngSpec) -> Result<GammaReport> {
    let spec = config.spec.with_gamma(gamma);
    let sol = solve_with(&spec, &config.settings())?;
    let label = gamma_label(gamma);
    let dir = &config.out_dir;
    let outputs = &config.outputs;
    let mut files = Vec::new();
    let mut emit = |name: String, body: String| -> Result<()> {
        write_file(&dir.join(&name), &body)?;
        files.push(name);
        Ok(())
    };
    let metadata = format!("{},seed={}", sol.metadata(), config.seed);
    if outputs.curves {
        emit(format!("curve_{label}.csv"), sol.consumption_curve().to_csv(&metadata))?;
    }
    if outputs.tables {
        emit(format!("table_{label}.csv"), table_csv(&sol))?;
    }
    if outputs.plot_script {
        emit(format!("curve_{label}.gp"), plot_script(&format!("curve_{label}.csv"), spec.states, gamma))?;
    }
    let curve = sol.consumption_curve();
    let terminal_gap = curve.terminal_gap();
    let mut passed = sol.residual <= residual_tolerance(sol.settings.n_steps) && terminal_gap <= TERMINAL_TOLERANCE;
    let paths = config.paths.unwrap_or(DEFAULT_PATHS);

    let fixed_point = match (outputs.fixed_point, sol.g_table()) {
        (true, Some(g)) => {
            let est = picard_apply(&spec, g, paths, &rng.child(0))?;
            let (sup_distance, ok) = est.compare(g, 3.0, 2e-3);
            passed &= ok;
            Some(FixedPointCheck { sup_distance, tolerance_floor: 2e-3, sigmas: 3.0, n_paths: paths, passed: ok })
        }
        _ => None,
    };

    let mut value_checks = Vec::new();
    if outputs.mc_validation {
        let eq = ProportionalStrategy::equilibrium(&sol);
        for i in 0..spec.states {
            let value = sol.value_at(0.0, 1.0, i)?;
            let report = estimate_j_with(&eq, 0.0, 1.0, i, &spec, paths, DEFAULT_PATH_STEPS, config.discount, &rng.child(1 + i as u64))?
                .against(value);
            let ok = report.within_sigmas(3.0);
            passed &= ok;
            value_checks.push(ValueCheck { state: i, value, report, passed: ok });
        }
    }

    let slope_certificates = if outputs.slope_certification {
        let certs = certify_with(&sol, &default_certification_points(spec.horizon), 1e-6, config.discount)?;
        passed &= certs.iter().all(|c| c.passed);
        certs
    } else {
        Vec::new()
    };

    let mut report = GammaReport {
        gamma,
        branch: Some(if sol.preferences().is_log { "log" } else { "power" }.into()),
        error: None,
        residual: Some(sol.residual),
        terminal_gap: Some(terminal_gap),
        initial_rates: (0..spec.states).map(|i| sol.consumption_rate(0.0, i)).collect(),
        fixed_point,
        value_checks,
        slope_certificates,
        files: Vec::new(),
        passed,
    };
    let name = format!("report_{label}.json");
    files.push(name.clone());
    report.files = files;
    write_file(&dir.join(name), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(report)
}

/// Gnuplot script that draws one consumption CSV.
pub fn plot_script(csv: &str, states: usize, gamma: f64) -> String {
    let mut out = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\nset ylabel 'C(t,i)'\nset title 'gamma = {gamma}'\nplot"
    );
    for i in 0..states {
        let sep = if i == 0 { " " } else { ", \\\n     " };
        out.push_str(&format!("{sep}'{csv}' every ::1 using 1:{} with lines", i + 2));
    }
    out.push('\n');
    out
}

/// Qualitative checks of one reference curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Curve {
    pub gamma: f64,
    pub file: String,
    pub terminal_gap: f64,
    /// `C(t,0) > C(t,1)` at every grid time before `T`.
    pub ordering: bool,
    /// `max_t (C(t,0) - C(t,1))`.
    pub max_gap: f64,
    /// Both curves non-increasing on `[0, T)`.
    pub non_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Summary {
    pub curves: Vec<Fig1Curve>,
    pub ordering_passed: bool,
    pub terminal_passed: bool,
    /// Required at `gamma = 0.7` only.
    pub decreasing_passed: bool,
    /// Reported, not required: whether the regime gap at `gamma = 0.7` is
    /// smaller than at `gamma = -1`.
    pub gap_smaller_at_high_gamma: bool,
    pub fixed_point: Vec<(f64, FixedPointCheck)>,
    pub passed: bool,
}

fn non_increasing(sol: &EquilibriumSolution) -> bool {
    let curve = sol.consumption_curve();
    let rows = curve.table.rows();
    (0..curve.states()).all(|i| rows[..rows.len() - 1].windows(2).all(|w| w[1][i] <= w[0][i]))
}

/// Reference experiment: one consumption CSV (and gnuplot script) per
/// gamma plus `fig1_summary.json`. With a seed it also runs the Picard
/// fixed-point check for the power-utility curves; `None` keeps the run
/// purely deterministic.
pub fn reproduce_fig1(seed: Option<u64>, out_dir: &Path) -> Result<Fig1Summary> {
    fs::create_dir_all(out_dir)?;
    let solved: Vec<(f64, EquilibriumSolution)> = REFERENCE_GAMMAS
        .par_iter()
        .map(|&g| solve_with(&MarketSpec::reference(g), &SolveSettings::default()).map(|s| (g, s)))
        .collect::<Result<_>>()?;
    let mut curves = Vec::new();
    for (gamma, sol) in &solved {
        let file = format!("fig1_{}.csv", gamma_label(*gamma));
        write_file(&out_dir.join(&file), &curve_csv(sol))?;
        write_file(&out_dir.join(format!("fig1_{}.gp", gamma_label(*gamma))), &plot_script(&file, 2, *gamma))?;
        let curve = sol.consumption_curve();
        curves.push(Fig1Curve {
            gamma: *gamma,
            file,
            terminal_gap: curve.terminal_gap(),
            ordering: curve.strictly_above(0, 1),
            max_gap: curve.max_gap(0, 1),
            non_increasing: non_increasing(sol),
        });
    }
    let ordering_passed = curves.iter().all(|c| c.ordering);
    let terminal_passed = curves.iter().all(|c| c.terminal_gap <= TERMINAL_TOLERANCE);
    let decreasing_passed = curves.iter().filter(|c| c.gamma == 0.7).all(|c| c.non_increasing);
    let gap = |g: f64| curves.iter().find(|c| c.gamma == g).map(|c| c.max_gap).unwrap_or(f64::NAN);
    let gap_smaller_at_high_gamma = gap(0.7) < gap(-1.0);
    let mut fixed_point = Vec::new();
    if let Some(seed) = seed {
        for (k, (gamma, sol)) in solved.iter().enumerate() {
            if let Some(g) = sol.g_table() {
                let est = picard_apply(&sol.spec, g, DEFAULT_PATHS, &RngSpec::new(seed).child(k as u64))?;
                let (sup_distance, ok) = est.compare(g, 3.0, 2e-3);
                fixed_point.push((
                    *gamma,
                    FixedPointCheck { sup_distance, tolerance_floor: 2e-3, sigmas: 3.0, n_paths: DEFAULT_PATHS, passed: ok },
                ));
            }
        }
    }
    let passed = ordering_passed && terminal_passed && decreasing_passed && fixed_point.iter().all(|(_, f)| f.passed);
    let summary = Fig1Summary {
        curves,
        ordering_passed,
        terminal_passed,
        decreasing_passed,
        gap_smaller_at_high_gamma,
        fixed_point,
        passed,
    };
    write_file(&out_dir.join("fig1_summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(summary)
}
