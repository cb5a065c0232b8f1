//! Game definition files (TOML).
//!
//! ```toml
//! [[nodes]]
//! actions = ["a1", "a2"]
//! utility = { kind = "log1p" }
//!
//! [[nodes]]
//! actions = ["a1", "a2"]
//! utility = { kind = "log-offset", offset = 0.01 }
//!
//! [[payoffs]]
//! profile = ["a1", "a1"]
//! values = [0.0001, 0.0001]
//! ```
//!
//! Every profile must appear exactly once. Tables with entries above 1 are
//! divided by their global maximum on load; the factor is reported in
//! `rescaled_by`. Saving always writes the normalized table, so
//! load → save → load is the identity.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameEnvironment;
use crate::utility::UtilitySpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub actions: Vec<String>,
    pub utility: UtilitySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffRow {
    pub profile: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Informational; written on save when a load rescaled the table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescaled_by: Option<f64>,
    pub nodes: Vec<NodeEntry>,
    pub payoffs: Vec<PayoffRow>,
}

/// A loaded game: payoff environment plus one utility per node.
#[derive(Debug, Clone)]
pub struct GameDefinition {
    pub name: Option<String>,
    pub env: GameEnvironment,
    pub utilities: Vec<UtilitySpec>,
}

impl GameDefinition {
    pub fn new(env: GameEnvironment, utilities: Vec<UtilitySpec>) -> Result<Self> {
        if utilities.len() != env.num_nodes() {
            return Err(Error::InvalidInput(format!(
                "{} utilities for {} nodes",
                utilities.len(),
                env.num_nodes()
            )));
        }
        for u in &utilities {
            u.validate()?;
        }
        Ok(Self { name: None, env, utilities })
    }

    /// The two-node illustration game with `log(1 + r)` utilities.
    pub fn two_node_example() -> Self {
        let env = GameEnvironment::two_node_example();
        Self {
            name: Some("two-node illustration".into()),
            env,
            utilities: vec![UtilitySpec::log1p(), UtilitySpec::log1p()],
        }
    }

    pub fn from_file_struct(file: GameFile) -> Result<Self> {
        if file.nodes.is_empty() {
            return Err(Error::Parse("game file declares no nodes".into()));
        }
        let n = file.nodes.len();
        let sizes: Vec<usize> = file.nodes.iter().map(|nd| nd.actions.len()).collect();
        let lookups: Vec<HashMap<&str, usize>> = file
            .nodes
            .iter()
            .enumerate()
            .map(|(i, nd)| {
                let mut m = HashMap::new();
                for (k, label) in nd.actions.iter().enumerate() {
                    if m.insert(label.as_str(), k).is_some() {
                        return Err(Error::Parse(format!("node {i} repeats action label {label:?}")));
                    }
                }
                Ok(m)
            })
            .collect::<Result<_>>()?;

        let total: usize = sizes.iter().product();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; total];
        for row in &file.payoffs {
            if row.profile.len() != n || row.values.len() != n {
                return Err(Error::Parse(format!(
                    "payoff row {:?} must list {n} actions and {n} values",
                    row.profile
                )));
            }
            let mut idx = 0usize;
            for (i, label) in row.profile.iter().enumerate() {
                let k = *lookups[i].get(label.as_str()).ok_or_else(|| {
                    Error::Parse(format!("unknown action {label:?} for node {i}"))
                })?;
                idx = idx * sizes[i] + k;
            }
            if rows[idx].replace(row.values.clone()).is_some() {
                return Err(Error::Parse(format!("profile {:?} listed twice", row.profile)));
            }
        }
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::Parse(format!("profile index {i} has no payoff row"))))
            .collect::<Result<_>>()?;

        let labels = file.nodes.iter().map(|nd| nd.actions.clone()).collect();
        let env = GameEnvironment::from_table(sizes, rows)?.with_labels(labels)?;
        let utilities = file.nodes.into_iter().map(|nd| nd.utility).collect();
        let mut def = Self::new(env, utilities)?;
        def.name = file.name;
        Ok(def)
    }

    pub fn to_file_struct(&self) -> Result<GameFile> {
        let table = self.env.tabulate(usize::MAX)?;
        let labels = self.env.labels();
        let nodes = labels
            .iter()
            .zip(&self.utilities)
            .map(|(acts, u)| NodeEntry { actions: acts.clone(), utility: u.clone() })
            .collect();
        let payoffs = self
            .env
            .space()
            .profiles()
            .zip(table)
            .map(|(p, values)| PayoffRow {
                profile: p.iter().enumerate().map(|(i, &a)| labels[i][a].clone()).collect(),
                values,
            })
            .collect();
        let rescale = self.env.rescale_factor();
        Ok(GameFile {
            name: self.name.clone(),
            rescaled_by: (rescale != 1.0).then_some(rescale),
            nodes,
            payoffs,
        })
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: GameFile = toml::from_str(s)?;
        Self::from_file_struct(file)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&self.to_file_struct()?).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_toml_string()?)?;
        Ok(())
    }
}
