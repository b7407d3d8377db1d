use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analytics::TruncationPolicy;
use crate::error::{Error, Result};
use crate::model::{PhysicalParams, DEFAULT_DIM, DEFAULT_LAMBDA0};
use crate::trajectory::{uniform_grid, EnsembleConfig, DEFAULT_GRID_POINTS, DEFAULT_N_TRAJ};

/// Inverse temperature used when neither the file nor a preset sets one.
pub const DEFAULT_BETA: f64 = 2.0;
pub const DEFAULT_SEED: u64 = 1;

const KEYS: &[&str] = &[
    "preset", "gamma", "beta", "lambda0", "drive_time", "dim", "n_traj", "seed", "grid", "dt", "n_max", "m_max",
    "jumps_max", "out", "jump_dump",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Fig3,
    Fig4,
    Fig5a,
    Fig5b,
    Fig5c,
}

impl Preset {
    pub fn gamma(self) -> f64 {
        match self {
            Preset::Fig3 => 0.01 * DEFAULT_LAMBDA0,
            Preset::Fig4 => 0.1 * DEFAULT_LAMBDA0,
            Preset::Fig5a => 0.01,
            Preset::Fig5b => 0.05,
            Preset::Fig5c => 0.1,
        }
    }

    pub fn allowed_betas(self) -> &'static [f64] {
        match self {
            Preset::Fig3 => &[1.0, 2.0, 5.0],
            _ => &[2.0],
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            "fig5a" => Ok(Preset::Fig5a),
            "fig5b" => Ok(Preset::Fig5b),
            "fig5c" => Ok(Preset::Fig5c),
            other => Err(format!("unknown preset `{other}` (expected fig3, fig4, fig5a, fig5b or fig5c)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5a => "fig5a",
            Preset::Fig5b => "fig5b",
            Preset::Fig5c => "fig5c",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outputs {
    pub out: Option<PathBuf>,
    pub jump_dump: Option<PathBuf>,
}

/// Command-line values; each replaces the corresponding file entry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub n_traj: Option<usize>,
    pub dim: Option<usize>,
    pub out: Option<PathBuf>,
    pub grid: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub params: PhysicalParams,
    pub ensemble: EnsembleConfig,
    pub policy: TruncationPolicy,
    pub outputs: Outputs,
    pub preset: Option<Preset>,
}

impl ExperimentConfig {
    /// Comment lines echoing everything that determines the output.
    pub fn provenance(&self, command: &str) -> Vec<String> {
        let p = &self.params;
        let mut lines = vec![format!("qhocal {} {command}", env!("CARGO_PKG_VERSION"))];
        if let Some(preset) = self.preset {
            lines.push(format!("preset={preset}"));
        }
        lines.push(format!(
            "gamma={} beta={} lambda0={} drive_time={} dim={}",
            p.gamma, p.beta, p.lambda0, p.drive_time, p.dim
        ));
        lines.push(format!(
            "n_traj={} seed={} grid={} dt={}",
            self.ensemble.n_traj,
            self.ensemble.master_seed,
            self.ensemble.checkpoint_grid.len(),
            self.ensemble.dt.map_or_else(|| "auto".to_string(), |dt| dt.to_string())
        ));
        lines.push(format!(
            "n_max={} m_max={} jumps_max={}",
            self.policy.n_max, self.policy.m_max, self.policy.jumps_max
        ));
        lines
    }
}

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config { line, message: format!("expected key=value, found `{content}`") })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config { line, message: format!("unknown key `{key}`") });
            }
            if let Some((first, _)) = map.insert(key.to_string(), (line, value.trim().to_string())) {
                return Err(Error::Config { line, message: format!("`{key}` already set on line {first}") });
            }
        }
        Ok(Self(map))
    }

    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |(line, _)| *line)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some((line, value)) => value
                .parse()
                .map(Some)
                .map_err(|e| Error::Config { line: *line, message: format!("invalid value `{value}` for `{key}`: {e}") }),
        }
    }
}

fn reject(line: usize, message: String) -> Error {
    Error::Config { line, message }
}

/// Parses `key=value` lines (`#` starts a comment) and applies `overrides`.
/// Errors name the offending line; line 0 means the command line or a
/// cross-field check.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let entries = Entries::parse(text)?;
    let preset = match overrides.preset {
        Some(p) => Some(p),
        None => entries.get::<Preset>("preset")?,
    };

    let lambda0 = entries.get::<f64>("lambda0")?;
    let gamma = entries.get::<f64>("gamma")?;
    let drive_time = entries.get::<f64>("drive_time")?;
    if let Some(p) = preset {
        for (key, value, fixed) in [
            ("lambda0", lambda0, DEFAULT_LAMBDA0),
            ("gamma", gamma, p.gamma()),
            ("drive_time", drive_time, std::f64::consts::PI / DEFAULT_LAMBDA0),
        ] {
            if value.is_some_and(|v| v != fixed) {
                return Err(reject(entries.line(key), format!("`{key}` is fixed to {fixed} by preset {p}")));
            }
        }
    }
    let lambda0 = lambda0.unwrap_or(DEFAULT_LAMBDA0);
    if !(lambda0 >= 0.0 && lambda0.is_finite()) {
        return Err(reject(entries.line("lambda0"), format!("lambda0 must be finite and non-negative, got {lambda0}")));
    }
    let gamma = match (preset, gamma) {
        (Some(p), _) => p.gamma(),
        (None, Some(g)) => g,
        (None, None) => return Err(reject(0, "either `gamma` or a preset is required".into())),
    };
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(reject(entries.line("gamma"), format!("gamma must be finite and non-negative, got {gamma}")));
    }

    let beta = entries.get::<f64>("beta")?.unwrap_or(DEFAULT_BETA);
    if !(beta > 0.0) {
        return Err(reject(entries.line("beta"), format!("beta must be positive, got {beta}")));
    }
    if let Some(p) = preset {
        if !p.allowed_betas().contains(&beta) {
            return Err(reject(entries.line("beta"), format!("preset {p} allows beta in {:?}, got {beta}", p.allowed_betas())));
        }
    }

    let drive_time = drive_time.unwrap_or(if lambda0 > 0.0 { std::f64::consts::PI / lambda0 } else { 0.0 });
    if !(drive_time > 0.0 && drive_time.is_finite()) {
        return Err(reject(entries.line("drive_time"), "drive_time must be positive (set it explicitly when lambda0 = 0)".into()));
    }

    let dim = overrides.dim.map_or_else(|| entries.get::<usize>("dim"), |d| Ok(Some(d)))?.unwrap_or(DEFAULT_DIM);
    if dim < 2 {
        return Err(reject(if overrides.dim.is_some() { 0 } else { entries.line("dim") }, format!("dim must be at least 2, got {dim}")));
    }
    let n_traj = overrides.n_traj.map_or_else(|| entries.get::<usize>("n_traj"), |n| Ok(Some(n)))?.unwrap_or(DEFAULT_N_TRAJ);
    if n_traj < 2 {
        return Err(reject(if overrides.n_traj.is_some() { 0 } else { entries.line("n_traj") }, "n_traj must be at least 2".into()));
    }
    let seed = overrides.seed.map_or_else(|| entries.get::<u64>("seed"), |s| Ok(Some(s)))?.unwrap_or(DEFAULT_SEED);
    let points = overrides.grid.map_or_else(|| entries.get::<usize>("grid"), |g| Ok(Some(g)))?.unwrap_or(DEFAULT_GRID_POINTS);
    if points < 2 {
        return Err(reject(if overrides.grid.is_some() { 0 } else { entries.line("grid") }, "grid needs at least 2 points".into()));
    }
    let dt = entries.get::<f64>("dt")?;
    if dt.is_some_and(|dt| !(dt > 0.0)) {
        return Err(reject(entries.line("dt"), "dt must be positive".into()));
    }

    let defaults = TruncationPolicy::default();
    let policy = TruncationPolicy {
        n_max: entries.get("n_max")?.unwrap_or(defaults.n_max),
        m_max: entries.get("m_max")?.unwrap_or(defaults.m_max),
        jumps_max: entries.get("jumps_max")?.unwrap_or(defaults.jumps_max),
    };
    policy.validate().map_err(|e| reject(entries.line("n_max").max(entries.line("m_max")), e.to_string()))?;

    let params = PhysicalParams::new(gamma, beta).with_lambda0(lambda0).with_drive_time(drive_time).with_dim(dim);
    params.validate()?;
    let mut ensemble = EnsembleConfig::new(n_traj, seed, uniform_grid(drive_time, points));
    ensemble.dt = dt;

    let outputs = Outputs {
        out: overrides.out.clone().or(entries.get::<PathBuf>("out")?),
        jump_dump: entries.get::<PathBuf>("jump_dump")?,
    };
    Ok(ExperimentConfig { params, ensemble, policy, outputs, preset })
}

/// Reads the optional config file and parses it with `overrides`.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn line_of(err: Error) -> usize {
        match err {
            Error::Config { line, .. } => line,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn empty_config_demands_gamma() {
        let err = parse_config("", &Overrides::default()).unwrap_err();
        assert_eq!(line_of(err), 0);
    }

    #[test]
    fn defaults_applied() {
        let c = parse_config("gamma = 0.002\n", &Overrides::default()).unwrap();
        assert_eq!(c.params.lambda0, 0.01);
        assert_eq!(c.params.beta, DEFAULT_BETA);
        assert_eq!(c.params.dim, 10);
        assert_abs_diff_eq!(c.params.drive_time, PI / 0.01, epsilon = 1e-12);
        assert_eq!(c.ensemble.n_traj, 100_000);
        assert_eq!(c.ensemble.checkpoint_grid.len(), 101);
        assert_eq!(c.policy, TruncationPolicy::default());
    }

    #[test]
    fn fig4_preset() {
        let c = parse_config("preset=fig4", &Overrides::default()).unwrap();
        assert_abs_diff_eq!(c.params.gamma, 0.001, epsilon = 1e-15);
        assert_eq!(c.params.beta, 2.0);
        assert_abs_diff_eq!(c.params.drive_time, PI / 0.01, epsilon = 1e-12);
        assert_eq!(c.preset, Some(Preset::Fig4));
    }

    #[test]
    fn fig3_beta_choices() {
        for beta in [1.0, 2.0, 5.0] {
            let c = parse_config(&format!("preset=fig3\nbeta={beta}"), &Overrides::default()).unwrap();
            assert_eq!(c.params.beta, beta);
            assert_abs_diff_eq!(c.params.gamma, 1e-4, epsilon = 1e-18);
        }
        assert_eq!(line_of(parse_config("preset=fig3\nbeta=3", &Overrides::default()).unwrap_err()), 2);
        assert_eq!(line_of(parse_config("preset=fig5c\n\nbeta=1", &Overrides::default()).unwrap_err()), 3);
    }

    #[test]
    fn preset_fixed_parameters_cannot_change() {
        let err = parse_config("preset=fig4\ngamma=0.5", &Overrides::default()).unwrap_err();
        assert_eq!(line_of(err), 2);
        assert!(parse_config("preset=fig4\ngamma=0.001", &Overrides::default()).is_ok());
        assert!(parse_config("preset=fig5a\nlambda0=0.02", &Overrides::default()).is_err());
    }

    #[test]
    fn negative_beta_rejected_with_line() {
        let err = parse_config("gamma=0.01\n# comment\nbeta=-1", &Overrides::default()).unwrap_err();
        assert_eq!(line_of(err), 3);
    }

    #[test]
    fn unknown_and_malformed_lines() {
        assert_eq!(line_of(parse_config("gamma=0.1\ncolour=red", &Overrides::default()).unwrap_err()), 2);
        assert_eq!(line_of(parse_config("gamma", &Overrides::default()).unwrap_err()), 1);
        assert_eq!(line_of(parse_config("gamma=abc", &Overrides::default()).unwrap_err()), 1);
        assert_eq!(line_of(parse_config("gamma=1\ngamma=2", &Overrides::default()).unwrap_err()), 2);
    }

    #[test]
    fn flags_override_file() {
        let text = "preset=fig3\nseed=5\nn_traj=10\ndim=12\ngrid=11\nout=a.csv # trailing comment";
        let c = parse_config(text, &Overrides::default()).unwrap();
        assert_eq!((c.ensemble.master_seed, c.ensemble.n_traj, c.params.dim), (5, 10, 12));
        assert_eq!(c.outputs.out, Some(PathBuf::from("a.csv")));
        let flags = Overrides {
            preset: Some(Preset::Fig4),
            seed: Some(9),
            n_traj: Some(20),
            dim: Some(14),
            out: Some(PathBuf::from("b.csv")),
            grid: Some(21),
        };
        let c = parse_config(text, &flags).unwrap();
        assert_eq!(c.preset, Some(Preset::Fig4));
        assert_eq!((c.ensemble.master_seed, c.ensemble.n_traj, c.params.dim), (9, 20, 14));
        assert_eq!(c.ensemble.checkpoint_grid.len(), 21);
        assert_eq!(c.outputs.out, Some(PathBuf::from("b.csv")));
    }

    #[test]
    fn infinite_beta_and_policy_keys() {
        let c = parse_config("gamma=0.001\nbeta=inf\nn_max=2\nm_max=12\njumps_max=1", &Overrides::default()).unwrap();
        assert!(c.params.beta.is_infinite());
        assert_eq!(c.policy, TruncationPolicy { n_max: 2, m_max: 12, jumps_max: 1 });
        assert!(parse_config("gamma=0.001\nn_max=5\nm_max=3", &Overrides::default()).is_err());
    }

    #[test]
    fn provenance_is_stable() {
        let c = parse_config("preset=fig4\nseed=3", &Overrides::default()).unwrap();
        let lines = c.provenance("simulate");
        assert_eq!(lines, c.clone().provenance("simulate"));
        assert!(lines.iter().any(|l| l == "preset=fig4"));
        assert!(lines.iter().any(|l| l.contains("seed=3")));
    }
}
