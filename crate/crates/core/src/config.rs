//! Run configuration read from TOML.
//!
//! All rates and frequencies are in units of the atomic decay rate `γ42`.
//!
//! ```toml
//! task = "spectrum"
//!
//! [params]
//! pair_loss = 1e-2     # sets |g_a| = |g_b| so the pair-loss rate has this value
//! omega = 0.7e-2       # both drives
//! kappa = 1e-2         # both cavity loss rates
//!
//! [trunc]
//! cutoff = 10          # or n_a_max / n_b_max
//!
//! [spectrum]
//! phi = 1.5707963267948966
//! omega_max = 0.2
//! points = 801
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entanglement::OverlapMeasure;
use crate::error::{Error, Result};
use crate::fock::Truncation;
use crate::model::SystemParams;
use crate::steady::{SteadyMethod, CUTOFF_THRESHOLD};
use crate::c64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Steady,
    Populations,
    Negativity,
    Duan,
    CesFit,
    Spectrum,
    Validate,
    ChooseParams,
    Sweep,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Steady => "steady",
            Task::Populations => "populations",
            Task::Negativity => "negativity",
            Task::Duan => "duan",
            Task::CesFit => "ces-fit",
            Task::Spectrum => "spectrum",
            Task::Validate => "validate",
            Task::ChooseParams => "choose-params",
            Task::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncSection {
    pub cutoff: Option<usize>,
    pub n_a_max: Option<usize>,
    pub n_b_max: Option<usize>,
}

impl TruncSection {
    fn resolve(&self) -> Result<Truncation> {
        let na = self.n_a_max.or(self.cutoff);
        let nb = self.n_b_max.or(self.cutoff);
        match (na, nb) {
            (Some(a), Some(b)) => Ok(Truncation::new(a, b)),
            _ => Err(Error::Config("[trunc] needs `cutoff` or both `n_a_max` and `n_b_max`".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: SteadyMethod,
    pub tol: f64,
    /// Top-level Fock population above which the cutoff is flagged.
    pub cutoff_threshold: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { method: SteadyMethod::LinearSolve, tol: 1e-10, cutoff_threshold: CUTOFF_THRESHOLD }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct DuanSection {
    /// Fixed quadrature phase; minimized over when absent.
    pub phi: Option<f64>,
}


#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CesFitSection {
    pub measure: OverlapMeasure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub phi: f64,
    pub omega_max: f64,
    pub points: usize,
    /// Explicit grid, overriding `omega_max` and `points`.
    pub omega_grid: Option<Vec<f64>>,
    /// Width of the band averaged for the output-mode criterion.
    pub delta_omega: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { phi: std::f64::consts::FRAC_PI_2, omega_max: 0.2, points: 801, omega_grid: None, delta_omega: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub margin_factor: f64,
    /// Also solve the atom-field model and compare steady states.
    pub compare_full: bool,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self { margin_factor: crate::validation::DEFAULT_MARGIN_FACTOR, compare_full: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChooseSection {
    pub n: usize,
    pub gamma: f64,
    pub x: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Pair-loss rate, set through the coupling strengths.
    Gamma,
    /// Both drive amplitudes.
    Omega,
    /// Both cavity loss rates.
    Kappa,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    #[serde(default)]
    pub spacing: Spacing,
    /// Fixed quadrature phase for the variance column; minimized when absent.
    pub phi: Option<f64>,
}

impl SweepSection {
    pub fn grid(&self) -> Result<Vec<f64>> {
        let g = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => match self.spacing {
                Spacing::Linear => (0..n).map(|k| if n == 1 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 }).collect(),
                Spacing::Log => {
                    if !(a > 0.0 && b > 0.0) {
                        return Err(Error::Config("log spacing needs positive bounds".into()));
                    }
                    (0..n).map(|k| if n == 1 { a } else { a * (b / a).powf(k as f64 / (n - 1) as f64) }).collect()
                }
            },
            _ => return Err(Error::Config("[sweep] needs either `values` or `start`, `stop` and `points`".into())),
        };
        if g.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("sweep values must be finite and non-negative".into()));
        }
        let inc = g.windows(2).all(|w| w[1] > w[0]);
        let dec = g.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(Error::Config("sweep grid must be strictly monotone".into()));
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// File name stem for the envelope and tables.
    pub stem: String,
    /// Emit a plotting script next to the tables.
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { stem: "result".into(), plot: true }
    }
}

/// Raw file contents before shorthands are resolved.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    task: Task,
    #[serde(default)]
    params: toml::Table,
    trunc: Option<TruncSection>,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    duan: DuanSection,
    #[serde(default)]
    ces_fit: CesFitSection,
    #[serde(default)]
    spectrum: SpectrumSection,
    #[serde(default)]
    validate: ValidateSection,
    choose: Option<ChooseSection>,
    sweep: Option<SweepSection>,
    #[serde(default)]
    output: OutputSection,
}

/// Validated configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub params: SystemParams,
    pub trunc: Option<Truncation>,
    pub solver: SolverSection,
    pub duan: DuanSection,
    pub ces_fit: CesFitSection,
    pub spectrum: SpectrumSection,
    pub validate: ValidateSection,
    pub choose: Option<ChooseSection>,
    pub sweep: Option<SweepSection>,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let params = resolve_params(raw.params)?;
        let trunc = raw.trunc.as_ref().map(TruncSection::resolve).transpose()?;
        let cfg = Self {
            task: raw.task,
            params,
            trunc,
            solver: raw.solver,
            duan: raw.duan,
            ces_fit: raw.ces_fit,
            spectrum: raw.spectrum,
            validate: raw.validate,
            choose: raw.choose,
            sweep: raw.sweep,
            output: raw.output,
        };
        cfg.check()?;
        Ok(cfg)
    }

    /// Truncation required by every task except `choose-params`.
    pub fn truncation(&self) -> Result<Truncation> {
        self.trunc.ok_or_else(|| Error::Config(format!("task {} needs a [trunc] section", self.task.name())))
    }

    fn check(&self) -> Result<()> {
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver.tol must be positive".into()));
        }
        match self.task {
            Task::ChooseParams => {
                if self.choose.is_none() {
                    return Err(Error::Config("task choose-params needs a [choose] section".into()));
                }
            }
            Task::Sweep => {
                let s = self.sweep.as_ref().ok_or_else(|| Error::Config("task sweep needs a [sweep] section".into()))?;
                s.grid()?;
                self.truncation()?;
            }
            Task::Spectrum => {
                self.truncation()?;
                self.spectrum_grid()?;
            }
            _ => {
                self.truncation()?;
            }
        }
        Ok(())
    }

    pub fn spectrum_grid(&self) -> Result<Vec<f64>> {
        let s = &self.spectrum;
        let g = match &s.omega_grid {
            Some(g) => g.clone(),
            None => {
                if s.points == 0 || !(s.omega_max > 0.0) {
                    return Err(Error::Config("spectrum grid needs points > 0 and omega_max > 0".into()));
                }
                crate::spectra::symmetric_grid(s.omega_max, s.points)
            }
        };
        if g.is_empty() || g.windows(2).any(|w| !(w[1] > w[0])) || g.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("spectrum grid must be non-empty, finite and strictly increasing".into()));
        }
        Ok(g)
    }
}

/// Applies the `pair_loss`, `omega` and `kappa` shorthands of `[params]`.
fn resolve_params(mut t: toml::Table) -> Result<SystemParams> {
    let take = |t: &mut toml::Table, k: &str| -> Result<Option<f64>> {
        match t.remove(k) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(x)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(Error::Config(format!("params.{k} must be a number, got {v}"))),
        }
    };
    let pair_loss = take(&mut t, "pair_loss")?;
    let omega = take(&mut t, "omega")?;
    let kappa = take(&mut t, "kappa")?;
    for (short, long) in [("omega", ["omega_a", "omega_b"]), ("kappa", ["kappa_a", "kappa_b"])] {
        let given = if short == "omega" { omega } else { kappa };
        if given.is_some() && long.iter().any(|k| t.contains_key(*k)) {
            return Err(Error::Config(format!("params.{short} conflicts with {}/{}", long[0], long[1])));
        }
    }
    if pair_loss.is_some() && (t.contains_key("g_a") || t.contains_key("g_b")) {
        return Err(Error::Config("params.pair_loss conflicts with g_a/g_b".into()));
    }
    let mut p: SystemParams = toml::Value::Table(t).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if let Some(w) = omega {
        p.omega_a = c64::new(w, 0.0);
        p.omega_b = c64::new(w, 0.0);
    }
    if let Some(k) = kappa {
        p.kappa_a = k;
        p.kappa_b = k;
    }
    if let Some(g) = pair_loss {
        p.set_pair_loss(g).map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthands_resolve() {
        let cfg = RunConfig::from_toml(
            r#"
            task = "steady"
            [params]
            pair_loss = 0.01
            omega = 1.16e-3
            kappa = 1e-3
            [trunc]
            cutoff = 5
            "#,
        )
        .unwrap();
        let dc = crate::model::derived_couplings(&cfg.params).unwrap();
        assert!((dc.gamma - 0.01).abs() < 1e-14);
        assert_eq!(cfg.params.kappa_b, 1e-3);
        assert_eq!(cfg.trunc, Some(Truncation::symmetric(5)));
    }

    #[test]
    fn schema_errors() {
        for bad in [
            "task = \"steady\"\n[params]\nkappa = -1.0\n[trunc]\ncutoff = 2",
            "task = \"steady\"\n[params]\nbogus = 1.0\n[trunc]\ncutoff = 2",
            "task = \"fly\"",
            "task = \"steady\"",
            "task = \"sweep\"\n[trunc]\ncutoff = 2\n[sweep]\naxis = \"gamma\"\nvalues = []",
            "task = \"sweep\"\n[trunc]\ncutoff = 2\n[sweep]\naxis = \"gamma\"\nvalues = [0.1, 0.05, 0.2]",
            "task = \"steady\"\n[params]\nomega = 0.1\nomega_a = 0.2\n[trunc]\ncutoff = 2",
        ] {
            assert!(matches!(RunConfig::from_toml(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn log_grid() {
        let s = SweepSection {
            axis: SweepAxis::Gamma,
            values: None,
            start: Some(1e-4),
            stop: Some(1e-1),
            points: Some(4),
            spacing: Spacing::Log,
            phi: None,
        };
        let g = s.grid().unwrap();
        assert!((g[1] - 1e-3).abs() < 1e-15 && (g[3] - 1e-1).abs() < 1e-15);
    }
}
