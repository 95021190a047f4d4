//! TOML configuration file. Command-line flags take precedence over file
//! values, which take precedence over the built-in defaults.

use std::path::{Path, PathBuf};

use boapta_circuit::{parse_netlist, suite, Netlist, SolverParams};
use boapta_core::{AcquisitionKind, BoConfig, YTransform};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_ENV: &str = "BOA_PTA_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    /// Glob of netlist files used when no paths are given.
    pub circuits: Option<String>,
    pub output: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub acquisition: Option<AcquisitionKind>,
    pub ucb_beta: Option<f64>,
    pub restarts: Option<usize>,
    pub mes_samples: Option<usize>,
    pub budget_factor: Option<f64>,
    pub incumbent_budget_factor: Option<f64>,
    pub freeze_after: Option<usize>,
    pub learn_warp: Option<bool>,
    pub y_transform: Option<YTransform>,
    pub defaults: DefaultsTable,
}

/// Default solver parameters; unset entries keep the built-in values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefaultsTable {
    pub c: Option<f64>,
    pub l: Option<f64>,
    pub r0: Option<f64>,
    pub g0: Option<f64>,
    pub tau: Option<f64>,
}

impl DefaultsTable {
    pub fn apply(&self, base: SolverParams) -> SolverParams {
        SolverParams {
            c_pseudo: self.c.unwrap_or(base.c_pseudo),
            l_pseudo: self.l.unwrap_or(base.l_pseudo),
            r0: self.r0.unwrap_or(base.r0),
            g0: self.g0.unwrap_or(base.g0),
            tau: self.tau.unwrap_or(base.tau),
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Campaign settings after applying the file on top of the defaults.
    pub fn bo_config(&self) -> BoConfig {
        let mut c = BoConfig::default();
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.acquisition {
            c.acquisition.kind = v;
        }
        if let Some(v) = self.ucb_beta {
            c.acquisition.ucb_beta = v;
        }
        if let Some(v) = self.restarts {
            c.acquisition.restarts = v;
        }
        if let Some(v) = self.mes_samples {
            c.acquisition.mes_num_max_samples = v;
        }
        if let Some(v) = self.budget_factor {
            c.budget_factor = v;
        }
        if let Some(v) = self.incumbent_budget_factor {
            c.incumbent_budget_factor = v;
        }
        if let Some(v) = self.freeze_after {
            c.freeze_after = v;
        }
        if let Some(v) = self.learn_warp {
            c.surrogate.learn_warp = v;
        }
        if let Some(v) = self.y_transform {
            c.surrogate.y_transform = v;
        }
        c.defaults = self.defaults.apply(c.defaults);
        c
    }
}

/// Identifier of a netlist argument: the bundled name or the file stem.
fn circuit_id(arg: &str) -> String {
    match arg.strip_prefix("suite:") {
        Some(name) => name.to_string(),
        None => Path::new(arg).file_stem().map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned()),
    }
}

fn load_one(arg: &str) -> Result<Netlist, CliError> {
    if let Some(name) = arg.strip_prefix("suite:") {
        return suite::load(name).ok_or_else(|| {
            let known: Vec<&str> = suite::DECKS.iter().map(|(n, _)| *n).collect();
            CliError::Usage(format!("unknown bundled circuit '{name}' (available: {})", known.join(", ")))
        });
    }
    let text = std::fs::read_to_string(arg).map_err(|e| CliError::Usage(format!("cannot read {arg}: {e}")))?;
    parse_netlist(&text).map_err(|source| CliError::Parse { path: arg.to_string(), source })
}

/// Resolves and parses every circuit before anything runs. `suite:NAME` picks a
/// bundled deck; `all_bundled` adds the whole suite; with neither paths nor
/// the flag the config glob is used.
pub fn load_circuits(paths: &[String], all_bundled: bool, glob_pattern: Option<&str>) -> Result<Vec<(String, Netlist)>, CliError> {
    let mut args: Vec<String> = paths.to_vec();
    if all_bundled {
        args.extend(suite::DECKS.iter().map(|(n, _)| format!("suite:{n}")));
    }
    if args.is_empty() {
        if let Some(pattern) = glob_pattern {
            let entries = glob::glob(pattern).map_err(|e| CliError::Usage(format!("bad circuits glob '{pattern}': {e}")))?;
            for entry in entries {
                let p = entry.map_err(|e| CliError::Usage(e.to_string()))?;
                args.push(p.to_string_lossy().into_owned());
            }
            args.sort();
        }
    }
    if args.is_empty() {
        return Err(CliError::Usage("no netlists given".into()));
    }
    let mut out: Vec<(String, Netlist)> = Vec::with_capacity(args.len());
    for a in &args {
        let id = circuit_id(a);
        if out.iter().any(|(i, _)| *i == id) {
            return Err(CliError::Usage(format!("duplicate circuit id '{id}'")));
        }
        out.push((id, load_one(a)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults() {
        let f: FileConfig = toml::from_str("epochs = 3\nacquisition = \"ucb\"\nucb_beta = 0.1\n[defaults]\nc = 1e-2\n").unwrap();
        let c = f.bo_config();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.acquisition.kind, AcquisitionKind::Ucb);
        assert_eq!(c.defaults.c_pseudo, 1e-2);
        assert_eq!(c.defaults.l_pseudo, 1e-3);
    }

    #[test]
    fn out_of_range_default_is_rejected() {
        let f: FileConfig = toml::from_str("[defaults]\nr0 = 1e9\n").unwrap();
        assert!(f.bo_config().validate().is_err());
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(toml::from_str::<FileConfig>("epoch = 3").is_err());
    }

    #[test]
    fn ids_and_duplicates() {
        assert_eq!(circuit_id("a/b/amp.cir"), "amp");
        assert_eq!(circuit_id("suite:divider"), "divider");
        let dup = load_circuits(&["suite:divider".into(), "suite:divider".into()], false, None);
        assert!(matches!(dup, Err(CliError::Usage(_))));
        assert!(load_circuits(&[], false, None).is_err());
    }
}
