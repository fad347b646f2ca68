//! Run configuration: command-line flags merged over an optional JSON file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use spiralwave::geometry::{make_custom, read_profile_csv, ProfileSample};
use spiralwave::kinetics::builtin;
use spiralwave::{BoundaryCondition, KineticsSpec, SurfaceOfRevolution};

use crate::CliError;

/// Every field is optional; unset fields take the documented defaults.
/// Flags override the same fields read from `--config`.
#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Surface: disk, sphere or custom (needs --profile).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
    /// CSV profile with header s,a,atilde for a custom surface.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<PathBuf>,
    /// Boundary condition: none, dirichlet, neumann or robin:A1,A2.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bc: Option<String>,
    /// Kinetics: cubic[:BETA] or cubic-omega[:BETA].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinetics: Option<String>,
    /// Number of arms (default 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Nodal index of the branch (default 0).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Largest nodal index for `eig` (default 5).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmax: Option<usize>,
    /// Bifurcation parameter of the base point.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// End of the continuation for `branch`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    /// Largest continuation step in lambda (default 0.25).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Pitchfork leg, +1 or -1 (default +1).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign: Option<f64>,
    /// Profiles written along a branch (default 0).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Diffusion parameter eta (default 0).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Kinetics parameter vector, comma separated (default from --kinetics).
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    /// eta grid for `sweep` as LO:HI:COUNT.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_range: Option<String>,
    /// Grid of the first kinetics parameter for `sweep` and `locus` as LO:HI:COUNT.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_range: Option<String>,
    /// Frequency threshold for `classify` (default 1e-8).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_tol: Option<f64>,
    /// Threshold on sup|p'| * s_star for `classify` (default 1e-6).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_tol: Option<f64>,
    /// Time for `render` (default 0).
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Samples per arm for `render` (default 200).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Output directory (default `out`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($self:ident, $other:ident; $($field:ident),*) => {
        RunConfig { $($field: $self.$field.or($other.$field)),* }
    };
}

impl RunConfig {
    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        overlay!(self, base; surface, profile, bc, kinetics, m, n, nmax, lambda, lambda_max,
            step, sign, samples, eta, b, eta_range, b_range, omega_tol, p_tol, t, points, out)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))
    }

    pub fn m(&self) -> Result<usize, CliError> {
        match self.m.unwrap_or(1) {
            0 => Err(CliError::Usage("--m must be at least 1".into())),
            m => Ok(m),
        }
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn step(&self) -> Result<f64, CliError> {
        positive("step", self.step.unwrap_or(0.25))
    }

    pub fn omega_tol(&self) -> Result<f64, CliError> {
        positive(
            "omega-tol",
            self.omega_tol.unwrap_or(spiralwave::pattern::OMEGA_TOL),
        )
    }

    pub fn p_tol(&self) -> Result<f64, CliError> {
        positive("p-tol", self.p_tol.unwrap_or(spiralwave::pattern::P_TOL))
    }

    pub fn require_lambda(&self) -> Result<f64, CliError> {
        let l = self
            .lambda
            .ok_or_else(|| CliError::Usage("--lambda is required".into()))?;
        positive("lambda", l)
    }

    pub fn profile_samples(&self) -> Result<Vec<ProfileSample>, CliError> {
        let path = self
            .profile
            .as_ref()
            .ok_or_else(|| CliError::Usage("a custom surface needs --profile".into()))?;
        read_profile_csv(path).map_err(CliError::from)
    }

    pub fn surface(&self) -> Result<SurfaceOfRevolution, CliError> {
        match self.surface.as_deref().unwrap_or("sphere") {
            "disk" => Ok(spiralwave::geometry::make_disk()),
            "sphere" => Ok(spiralwave::geometry::make_sphere()),
            "custom" => make_custom(&self.profile_samples()?).map_err(CliError::from),
            other => Err(CliError::Usage(format!("unknown surface `{other}`"))),
        }
    }

    /// Boundaryless surfaces default to `none`, others to `neumann`.
    pub fn boundary(&self, surface: &SurfaceOfRevolution) -> Result<BoundaryCondition, CliError> {
        let default = if surface.has_boundary() {
            "neumann"
        } else {
            "none"
        };
        let bc = parse_bc(self.bc.as_deref().unwrap_or(default))?;
        bc.check(surface).map_err(CliError::from)?;
        Ok(bc)
    }

    pub fn kinetics(&self) -> Result<KineticsSpec, CliError> {
        let text = self.kinetics.as_deref().unwrap_or("cubic:0");
        let (name, beta) = match text.split_once(':') {
            Some((name, beta)) => (name, parse_f64("kinetics parameter", beta)?),
            None => (text, 0.0),
        };
        builtin(name, beta).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// `--b`, or the kinetics' default parameter vector.
    pub fn parameters(&self, kinetics: &KineticsSpec) -> Result<Vec<f64>, CliError> {
        let b = self
            .b
            .clone()
            .unwrap_or_else(|| kinetics.default_b().to_vec());
        if b.len() != kinetics.param_dim() {
            return Err(CliError::Usage(format!(
                "--b has {} entries, kinetics `{}` expects {}",
                b.len(),
                kinetics.name(),
                kinetics.param_dim()
            )));
        }
        Ok(b)
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!(
            "--{name} must be positive, got {v}"
        )))
    }
}

fn parse_f64(what: &str, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid {what} `{s}`")))
}

pub fn parse_bc(s: &str) -> Result<BoundaryCondition, CliError> {
    match s {
        "none" => Ok(BoundaryCondition::NoBoundary),
        "dirichlet" => Ok(BoundaryCondition::dirichlet()),
        "neumann" => Ok(BoundaryCondition::neumann()),
        _ => {
            let coeffs = s
                .strip_prefix("robin:")
                .ok_or_else(|| CliError::Usage(format!("unknown boundary condition `{s}`")))?;
            let (a1, a2) = coeffs
                .split_once(',')
                .ok_or_else(|| CliError::Usage(format!("expected robin:A1,A2, got `{s}`")))?;
            BoundaryCondition::robin(parse_f64("alpha1", a1)?, parse_f64("alpha2", a2)?)
                .map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}

/// `LO:HI:COUNT` as `COUNT` evenly spaced values (a single value if COUNT is 1).
pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts[..] else {
        return Err(CliError::Usage(format!("expected LO:HI:COUNT, got `{s}`")));
    };
    let lo = parse_f64("range start", lo)?;
    let hi = parse_f64("range end", hi)?;
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid range count in `{s}`")))?;
    match count {
        0 => Err(CliError::Usage("range count must be positive".into())),
        1 => Ok(vec![lo]),
        _ => Ok((0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file = RunConfig {
            m: Some(2),
            lambda: Some(4.0),
            ..Default::default()
        };
        let flags = RunConfig {
            m: Some(3),
            ..Default::default()
        };
        let merged = flags.over(file);
        assert_eq!(merged.m, Some(3));
        assert_eq!(merged.lambda, Some(4.0));
    }

    #[test]
    fn ranges_and_boundaries_parse() {
        assert_eq!(parse_range("-0.1:0.1:3").unwrap(), vec![-0.1, 0.0, 0.1]);
        assert_eq!(parse_range("0.5:9:1").unwrap(), vec![0.5]);
        assert!(parse_range("0:1").is_err());
        assert_eq!(parse_bc("robin:0,1").unwrap(), BoundaryCondition::neumann());
        assert!(parse_bc("robin:1").is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig {
            surface: Some("disk".into()),
            b: Some(vec![0.05]),
            eta: Some(-0.02),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
