//! Run configuration: one TOML file with typed sections plus dotted-path overrides.
//!
//! ```toml
//! [experiment]
//! node_counts = [50, 100, 200, 400]
//! seeds = [1, 2, 3, 4, 5]
//!
//! [radio]
//! e_elec = 5e-8
//! ```
//!
//! Any key can be overridden as `section.key=value`, where `value` is a TOML
//! literal (`radio.e_elec=1e-8`, `experiment.protocols=["leach"]`); bare words
//! that are not valid TOML are taken as strings.

use serde::{Deserialize, Serialize};

use crate::energy::RadioParams;
use crate::engine::{Protocol, SimConfig, SimParams, TraceLevel};
use crate::error::{Error, Result};
use crate::leach::LeachParams;
use crate::lmeec::LmeecParams;
use crate::topology::TopologyParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentParams {
    pub node_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub protocols: Vec<Protocol>,
    /// Dispatch runs on a thread pool.
    pub parallel: bool,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            node_counts: vec![50, 100, 200, 400],
            seeds: vec![1, 2, 3, 4, 5],
            protocols: vec![Protocol::Lmeec, Protocol::Leach],
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: ExperimentParams,
    pub sim: SimParams,
    pub topology: TopologyParams,
    pub radio: RadioParams,
    pub lmeec: LmeecParams,
    pub leach: LeachParams,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration always serializes")
    }

    /// Applies one `dotted.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
        let path = path.trim();
        let value = parse_literal(raw.trim());

        let mut root = toml::Table::try_from(&*self).expect("configuration always serializes");
        let keys: Vec<&str> = path.split('.').collect();
        let (last, parents) = keys.split_last().expect("split yields at least one item");
        let mut table = &mut root;
        for key in parents {
            table = table
                .get_mut(*key)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| Error::config(path, format!("unknown section `{key}`")))?;
        }
        if !table.contains_key(*last) {
            return Err(Error::config(path, "unknown key"));
        }
        table.insert((*last).to_string(), value);
        *self = toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(path, e.message().to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.node_counts.is_empty() {
            return Err(Error::config("experiment.node_counts", "must not be empty"));
        }
        if e.node_counts.contains(&0) {
            return Err(Error::config("experiment.node_counts", "every count must be >= 1"));
        }
        if e.seeds.is_empty() {
            return Err(Error::config("experiment.seeds", "must not be empty"));
        }
        if e.protocols.is_empty() {
            return Err(Error::config("experiment.protocols", "must not be empty"));
        }
        self.sim_config(e.node_counts[0], e.seeds[0], e.protocols[0]).validate()
    }

    /// The single-run configuration for one (n, seed, protocol) triple.
    pub fn sim_config(&self, n: usize, seed: u64, protocol: Protocol) -> SimConfig {
        SimConfig {
            n,
            seed,
            protocol,
            sim: self.sim,
            topology: self.topology,
            radio: self.radio,
            lmeec: self.lmeec.clone(),
            leach: self.leach,
            trace: TraceLevel::Deaths,
        }
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Holder {
        v: toml::Value,
    }
    toml::from_str::<Holder>(&format!("v = {raw}"))
        .map(|h| h.v)
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = RunConfig::default();
        assert_eq!(c.experiment.node_counts, vec![50, 100, 200, 400]);
        assert_eq!(c.experiment.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(c.sim.duration, 500.0);
        assert_eq!(c.sim.sense_interval, 0.2);
        assert_eq!(c.sim.initial_energy, 2.0);
        assert_eq!(c.topology.comm_range, 25.0);
        assert_eq!(c.leach.p, 0.05);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn dump_round_trips() {
        let mut c = RunConfig::default();
        c.lmeec.gamma_by_layer = vec![0.25, 0.5];
        c.experiment.protocols = vec![Protocol::Leach];
        let text = c.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml_str("[radio]\ne_elec = 1e-8\n").unwrap();
        assert_eq!(c.radio.e_elec, 1e-8);
        assert_eq!(c.radio.eps_amp, RadioParams::default().eps_amp);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("[radio]\ne_elc = 1e-8\n").unwrap_err();
        assert!(err.to_string().contains("e_elc"), "{err}");
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::default();
        c.apply_override("radio.e_elec=1e-8").unwrap();
        c.apply_override("experiment.protocols=[\"leach\"]").unwrap();
        c.apply_override("experiment.node_counts = [10, 20]").unwrap();
        c.apply_override("lmeec.abs_degree_term=true").unwrap();
        c.apply_override("sim.duration=40").unwrap();
        assert_eq!(c.radio.e_elec, 1e-8);
        assert_eq!(c.experiment.protocols, vec![Protocol::Leach]);
        assert_eq!(c.experiment.node_counts, vec![10, 20]);
        assert!(c.lmeec.abs_degree_term);

        let err = c.apply_override("radio.nope=1").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "radio.nope"));
        let err = c.apply_override("radio.data_bits=\"many\"").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "radio.data_bits"));
        assert!(c.apply_override("noequals").is_err());
    }

    #[test]
    fn validation_reports_field_paths() {
        let mut c = RunConfig::default();
        c.experiment.seeds.clear();
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "experiment.seeds"));
        let mut c = RunConfig::default();
        c.lmeec.alpha = 1.0;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "lmeec.alpha"));
    }
}
