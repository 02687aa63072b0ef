use serde::Deserialize;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

/// A base experiment plus a cartesian grid over its top-level keys.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepMatrix {
    #[serde(default)]
    pub base: toml::Table,
    #[serde(default)]
    pub grid: toml::Table,
}

impl SweepMatrix {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// One config per grid point, in lexicographic key order with the last
    /// key varying fastest. Each is named after its grid coordinates.
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        let mut axes: Vec<(&String, &Vec<toml::Value>)> = Vec::new();
        for (k, v) in &self.grid {
            match v {
                toml::Value::Array(values) if !values.is_empty() => axes.push((k, values)),
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "grid key {k} must be a non-empty array"
                    )))
                }
            }
        }
        let base_name = self
            .base
            .get("name")
            .and_then(|v| v.as_str())
            .unwrap_or("sweep")
            .to_string();
        let mut points: Vec<Vec<(&String, &toml::Value)>> = vec![Vec::new()];
        for (k, values) in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((*k, v));
                        q
                    })
                })
                .collect();
        }
        points
            .into_iter()
            .map(|point| {
                let mut table = self.base.clone();
                let mut name = base_name.clone();
                for (k, v) in &point {
                    table.insert((*k).clone(), (*v).clone());
                    let shown = match v {
                        toml::Value::String(s) => s.replace('/', "_"),
                        other => other.to_string(),
                    };
                    name.push_str(&format!("-{k}={shown}"));
                }
                table.insert("name".into(), toml::Value::String(name));
                let cfg: ExperimentConfig = toml::Value::Table(table)
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::AttackKind;

    #[test]
    fn cartesian_expansion() {
        let m = SweepMatrix::from_toml(
            r#"
            [base]
            name = "short"
            attack = "safety"
            seeds = [1, 2]
            [grid]
            attackers = [1, 2, 3]
            quota = ["1/3", "1"]
            "#,
        )
        .unwrap();
        let cfgs = m.expand().unwrap();
        assert_eq!(cfgs.len(), 6);
        assert_eq!(cfgs[0].name, "short-attackers=1-quota=1_3");
        assert_eq!(cfgs[1].quota, "1");
        assert_eq!(cfgs[5].attackers, 3);
        assert!(cfgs.iter().all(|c| c.attack == AttackKind::Safety && c.seeds == vec![1, 2]));
    }

    #[test]
    fn empty_grid_is_the_base_alone() {
        let m = SweepMatrix::from_toml("[base]\nradius = 40.0\n").unwrap();
        let cfgs = m.expand().unwrap();
        assert_eq!(cfgs.len(), 1);
        assert_eq!(cfgs[0].radius, 40.0);
    }

    #[test]
    fn bad_grid_values_are_reported() {
        let m = SweepMatrix::from_toml("[grid]\nradius = 40.0\n").unwrap();
        assert!(m.expand().is_err());
        let m = SweepMatrix::from_toml("[grid]\nattackers = [20]\n").unwrap();
        assert!(m.expand().is_err());
    }
}
