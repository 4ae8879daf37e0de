//! Declarative run configuration: one TOML file mirrors the experiment
//! shape, provider definitions, and role bindings. Secrets never live in
//! config files; credentials come from `PMAS_API_KEY_<PROVIDER>` and
//! endpoints may come from `PMAS_ENDPOINT_<PROVIDER>`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use pmas_core::bench::{ExperimentConfig, SupervisorMode, SystemKind};
use pmas_core::gateway::http::HttpChatProvider;
use pmas_core::gateway::{
    CallDefaults, FixtureSet, Gateway, Provider, RoleTag, ScriptedProvider, ThrottleConfig,
};
use pmas_core::prompt::PromptVariant;
use pmas_core::TemplateStore;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderConfig>,
    /// Role name (or "default") to provider name.
    #[serde(default)]
    pub roles: BTreeMap<String, String>,
    #[serde(default)]
    pub templates: TemplatesConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatesConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// "scripted" or "http-chat".
    pub kind: String,
    pub fixtures: Option<PathBuf>,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    #[serde(default)]
    pub options: toml::Table,
    pub max_concurrent: Option<usize>,
    pub min_interval_ms: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))
    }
}

/// Applies one `--set key=value` override onto the experiment config.
/// Unknown keys are an error naming the key.
pub fn apply_override(cfg: &mut ExperimentConfig, pair: &str) -> Result<()> {
    let (key, value) = pair
        .split_once('=')
        .ok_or_else(|| anyhow!("override '{pair}' is not key=value"))?;
    let parse_err = |what: &str| anyhow!("override '{key}': cannot parse '{value}' as {what}");
    match key {
        "system" => cfg.system = parse_system(value)?,
        "variant" => cfg.variant = parse_variant(value)?,
        "supervisor_mode" => cfg.supervisor_mode = parse_supervisor_mode(value)?,
        "runs_k" => cfg.runs_k = value.parse().map_err(|_| parse_err("integer"))?,
        "blueprint_cap" => cfg.blueprint_cap = value.parse().map_err(|_| parse_err("integer"))?,
        "debate_rounds" => cfg.debate_rounds = value.parse().map_err(|_| parse_err("integer"))?,
        "concurrency" => cfg.concurrency = value.parse().map_err(|_| parse_err("integer"))?,
        "temperature" => cfg.temperature = value.parse().map_err(|_| parse_err("number"))?,
        "max_output" => {
            cfg.max_output = if value.is_empty() || value == "none" {
                None
            } else {
                Some(value.parse().map_err(|_| parse_err("integer"))?)
            }
        }
        "shuffle_seed" => {
            cfg.shuffle_seed = if value.is_empty() || value == "none" {
                None
            } else {
                Some(value.parse().map_err(|_| parse_err("integer"))?)
            }
        }
        "sample_seed" => {
            cfg.sample_seed = if value.is_empty() || value == "none" {
                None
            } else {
                Some(value.parse().map_err(|_| parse_err("integer"))?)
            }
        }
        other => bail!("unknown config key '{other}' in --set override"),
    }
    Ok(())
}

pub fn parse_system(value: &str) -> Result<SystemKind> {
    match value {
        "partner-mas" => Ok(SystemKind::PartnerMas),
        "single" => Ok(SystemKind::Single),
        "debate" => Ok(SystemKind::Debate),
        other => bail!("unknown system '{other}' (expected partner-mas|single|debate)"),
    }
}

pub fn parse_variant(value: &str) -> Result<PromptVariant> {
    match value {
        "generic" => Ok(PromptVariant::Generic),
        "business" => Ok(PromptVariant::Business),
        other => bail!("unknown variant '{other}' (expected generic|business)"),
    }
}

pub fn parse_supervisor_mode(value: &str) -> Result<SupervisorMode> {
    match value {
        "deterministic" => Ok(SupervisorMode::Deterministic),
        "importance" => Ok(SupervisorMode::Importance),
        "weight" => Ok(SupervisorMode::Weight),
        "majority" => Ok(SupervisorMode::Majority),
        other => bail!(
            "unknown supervisor mode '{other}' (expected deterministic|importance|weight|majority)"
        ),
    }
}

pub fn load_templates(config: &FileConfig) -> Result<TemplateStore> {
    match &config.templates.dir {
        Some(dir) => TemplateStore::from_dir(dir)
            .with_context(|| format!("cannot load template dir {}", dir.display())),
        None => Ok(TemplateStore::builtin()),
    }
}

fn env_suffix(provider_name: &str) -> String {
    provider_name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect()
}

fn build_provider(name: &str, config: &ProviderConfig) -> Result<Arc<dyn Provider>> {
    match config.kind.as_str() {
        "scripted" => {
            let path = config
                .fixtures
                .as_ref()
                .ok_or_else(|| anyhow!("provider '{name}': scripted kind needs 'fixtures'"))?;
            let set = FixtureSet::from_path(path).map_err(|e| anyhow!("provider '{name}': {e}"))?;
            Ok(Arc::new(ScriptedProvider::new(set)))
        }
        "http-chat" => {
            let suffix = env_suffix(name);
            let endpoint = config
                .endpoint
                .clone()
                .or_else(|| std::env::var(format!("PMAS_ENDPOINT_{suffix}")).ok())
                .ok_or_else(|| {
                    anyhow!(
                        "provider '{name}': no endpoint in config and PMAS_ENDPOINT_{suffix} unset"
                    )
                })?;
            let model = config
                .model
                .clone()
                .ok_or_else(|| anyhow!("provider '{name}': http-chat kind needs 'model'"))?;
            let api_key = std::env::var(format!("PMAS_API_KEY_{suffix}")).ok();
            let options = toml_to_json_map(&config.options);
            Ok(Arc::new(HttpChatProvider::new(
                name, model, endpoint, api_key, options,
            )))
        }
        other => bail!("provider '{name}': unknown kind '{other}' (expected scripted|http-chat)"),
    }
}

fn toml_to_json_map(table: &toml::Table) -> serde_json::Map<String, serde_json::Value> {
    table
        .iter()
        .filter_map(|(k, v)| {
            serde_json::to_value(v.clone())
                .ok()
                .map(|json| (k.clone(), json))
        })
        .collect()
}

/// Roles a system actually calls, for upfront binding validation.
pub fn required_roles(cfg: &ExperimentConfig) -> Vec<RoleTag> {
    match cfg.system {
        SystemKind::PartnerMas => {
            let mut roles = vec![RoleTag::Planner, RoleTag::Specialist];
            if cfg.supervisor_mode != SupervisorMode::Deterministic {
                roles.push(RoleTag::Supervisor);
            }
            roles
        }
        SystemKind::Single => vec![RoleTag::Single],
        SystemKind::Debate => vec![RoleTag::DebateAgent, RoleTag::DebateSupervisor],
    }
}

/// Builds the gateway from config bindings, or from a fixture-file override
/// that scripts every role.
pub fn build_gateway(
    config: &FileConfig,
    experiment: &ExperimentConfig,
    fixture_override: Option<&Path>,
) -> Result<Gateway> {
    let defaults = CallDefaults {
        temperature: experiment.temperature,
        max_output: experiment.max_output,
    };
    if let Some(path) = fixture_override {
        let set = FixtureSet::from_path(path).map_err(|e| anyhow!("{e}"))?;
        let provider: Arc<dyn Provider> = Arc::new(ScriptedProvider::new(set));
        return Ok(Gateway::builder()
            .bind_all(provider)
            .call_defaults(defaults)
            .build());
    }

    let mut providers: BTreeMap<String, Arc<dyn Provider>> = BTreeMap::new();
    for (name, provider_config) in &config.providers {
        providers.insert(name.clone(), build_provider(name, provider_config)?);
    }

    for key in config.roles.keys() {
        let known = key == "default" || RoleTag::ALL.iter().any(|r| r.as_str() == key);
        if !known {
            bail!("unknown role '{key}' in [roles]");
        }
    }
    let default_name = config.roles.get("default");
    let mut builder = Gateway::builder();
    for role in RoleTag::ALL {
        let binding_name = config.roles.get(role.as_str()).or(default_name);
        if let Some(name) = binding_name {
            let provider = providers
                .get(name)
                .ok_or_else(|| anyhow!("role '{role}' is bound to unknown provider '{name}'"))?;
            let provider_config = &config.providers[name];
            builder = builder.bind_throttled(
                role,
                provider.clone(),
                ThrottleConfig {
                    max_concurrent: provider_config.max_concurrent,
                    min_interval_ms: provider_config.min_interval_ms,
                },
            );
        }
    }
    let gateway = builder.call_defaults(defaults).build();

    let bound = gateway.provider_ids();
    for role in required_roles(experiment) {
        if !bound.contains_key(&role) {
            bail!(
                "system '{}' needs a provider for role '{role}'; bind it under [roles] or pass --provider-fixtures",
                experiment.system.as_str()
            );
        }
    }
    Ok(gateway)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_and_reject_unknown_keys() {
        let mut cfg = ExperimentConfig::default();
        apply_override(&mut cfg, "runs_k=4").unwrap();
        apply_override(&mut cfg, "variant=generic").unwrap();
        apply_override(&mut cfg, "shuffle_seed=9").unwrap();
        assert_eq!(cfg.runs_k, 4);
        assert_eq!(cfg.variant, PromptVariant::Generic);
        assert_eq!(cfg.shuffle_seed, Some(9));
        let err = apply_override(&mut cfg, "no_such_key=1").unwrap_err();
        assert!(err.to_string().contains("no_such_key"));
        let err = apply_override(&mut cfg, "runs_k").unwrap_err();
        assert!(err.to_string().contains("key=value"));
    }

    #[test]
    fn config_file_round_trips_experiment_fields() {
        let text = r#"
            [experiment]
            system = "single"
            runs_k = 3
            variant = "generic"

            [providers.fix]
            kind = "scripted"
            fixtures = "f.json"

            [roles]
            default = "fix"
        "#;
        let parsed: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(parsed.experiment.system, SystemKind::Single);
        assert_eq!(parsed.experiment.runs_k, 3);
        // Unset fields fall back to defaults.
        assert_eq!(parsed.experiment.concurrency, 4);
        assert_eq!(parsed.roles["default"], "fix");
    }

    #[test]
    fn unknown_config_sections_are_rejected() {
        let err = toml::from_str::<FileConfig>("[nonsense]\nx = 1\n").unwrap_err();
        assert!(err.to_string().contains("nonsense"));
    }

    #[test]
    fn env_suffix_uppercases_and_sanitizes() {
        assert_eq!(env_suffix("main"), "MAIN");
        assert_eq!(env_suffix("gpt-4o.mini"), "GPT_4O_MINI");
    }

    #[test]
    fn required_roles_track_system_and_mode() {
        let mut cfg = ExperimentConfig::default();
        assert!(!required_roles(&cfg).contains(&RoleTag::Supervisor));
        cfg.supervisor_mode = SupervisorMode::Majority;
        assert!(required_roles(&cfg).contains(&RoleTag::Supervisor));
        cfg.system = SystemKind::Debate;
        assert_eq!(
            required_roles(&cfg),
            vec![RoleTag::DebateAgent, RoleTag::DebateSupervisor]
        );
    }
}
