//! Flat `key=value` simulation configs with `scenario.<name>.<key>` overrides.

use std::collections::BTreeMap;

use locequate::evaluation::Method;
use locequate::simulation::{Correlation, SimulationConfig};

use crate::error::{CliError, Result};

/// Every recognised key, in echo order.
pub const KEYS: [&str; 21] = [
    "items",
    "anchor_items",
    "sample_size",
    "theta_mean_p",
    "theta_mean_q",
    "theta_sd",
    "item_a_min",
    "item_a_max",
    "covariate_categories",
    "correlation",
    "covariate_a_min",
    "covariate_a_max",
    "beta",
    "strata",
    "replications",
    "theta_bins",
    "trim_alpha",
    "omission_threshold",
    "seed",
    "methods",
    "scenarios",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: SimulationConfig,
    pub methods: Vec<Method>,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

fn set(config: &mut SimulationConfig, methods: &mut Vec<Method>, key: &str, value: &str) -> std::result::Result<(), String> {
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("{key}: `{v}` is not a number"));
    let int = |v: &str| v.parse::<usize>().map_err(|_| format!("{key}: `{v}` is not a non-negative integer"));
    match key {
        "items" => config.items = int(value)?,
        "anchor_items" => config.anchor_items = int(value)?,
        "sample_size" => config.sample_size = int(value)?,
        "theta_mean_p" => config.theta_mean_p = num(value)?,
        "theta_mean_q" => config.theta_mean_q = num(value)?,
        "theta_sd" => config.theta_sd = num(value)?,
        "item_a_min" => config.item_a_range.0 = num(value)?,
        "item_a_max" => config.item_a_range.1 = num(value)?,
        "covariate_categories" => {
            config.covariate_categories = parse_list(value).ok_or_else(|| format!("{key}: `{value}`"))?
        }
        "correlation" => {
            config.correlation = match value {
                "weak" => Correlation::Weak,
                "medium" => Correlation::Medium,
                _ => return Err(format!("{key}: `{value}` is not weak or medium")),
            }
        }
        "covariate_a_min" | "covariate_a_max" => {
            let (mut lo, mut hi) = config.correlation.discrimination_range();
            if key == "covariate_a_min" {
                lo = num(value)?;
            } else {
                hi = num(value)?;
            }
            config.correlation = Correlation::Custom { a_min: lo, a_max: hi };
        }
        "beta" => config.beta = parse_list(value).ok_or_else(|| format!("{key}: `{value}`"))?,
        "strata" => config.strata = int(value)?,
        "replications" => config.replications = int(value)?,
        "theta_bins" => config.theta_bins = int(value)?,
        "trim_alpha" => config.trim_alpha = num(value)?,
        "omission_threshold" => config.omission_threshold = num(value)?,
        "seed" => config.seed = value.parse().map_err(|_| format!("{key}: `{value}` is not a seed"))?,
        "methods" => {
            *methods = value
                .split(',')
                .map(|m| Method::parse(m).ok_or_else(|| format!("{key}: unknown method `{}`", m.trim())))
                .collect::<std::result::Result<_, _>>()?
        }
        _ => return Err(key.to_string()),
    }
    Ok(())
}

/// Key/value pairs of a resolved scenario, all defaults materialized.
pub fn resolved_pairs(config: &SimulationConfig, methods: &[Method]) -> Vec<(&'static str, String)> {
    let (a_min, a_max) = config.correlation.discrimination_range();
    let mut pairs = vec![
        ("items", config.items.to_string()),
        ("anchor_items", config.anchor_items.to_string()),
        ("sample_size", config.sample_size.to_string()),
        ("theta_mean_p", config.theta_mean_p.to_string()),
        ("theta_mean_q", config.theta_mean_q.to_string()),
        ("theta_sd", config.theta_sd.to_string()),
        ("item_a_min", config.item_a_range.0.to_string()),
        ("item_a_max", config.item_a_range.1.to_string()),
        ("covariate_categories", join(&config.covariate_categories)),
    ];
    match config.correlation {
        Correlation::Weak => pairs.push(("correlation", "weak".into())),
        Correlation::Medium => pairs.push(("correlation", "medium".into())),
        Correlation::Custom { .. } => {
            pairs.push(("covariate_a_min", a_min.to_string()));
            pairs.push(("covariate_a_max", a_max.to_string()));
        }
    }
    pairs.extend([
        ("beta", join(&config.beta)),
        ("strata", config.strata.to_string()),
        ("replications", config.replications.to_string()),
        ("theta_bins", config.theta_bins.to_string()),
        ("trim_alpha", config.trim_alpha.to_string()),
        ("omission_threshold", config.omission_threshold.to_string()),
        ("seed", config.seed.to_string()),
        ("methods", join(methods)),
    ]);
    pairs
}

/// Resolved config echo: `scenario.<name>.<key>=<value>` for every key.
pub fn echo(scenarios: &[Scenario]) -> String {
    let mut out = format!("scenarios={}\n", scenarios.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(","));
    for s in scenarios {
        for (k, v) in resolved_pairs(&s.config, &s.methods) {
            out.push_str(&format!("scenario.{}.{k}={v}\n", s.name));
        }
    }
    out
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Parses a config. Top-level keys set defaults shared by every scenario;
/// `scenario.<name>.<key>` overrides one scenario. Scenarios run in the
/// order listed by `scenarios=` or, failing that, first mention. Without
/// scenario keys the config describes a single scenario named `default`.
pub fn parse_config(text: &str) -> Result<Vec<Scenario>> {
    let mut base = SimulationConfig::default();
    let mut base_methods = Method::LOCAL.to_vec();
    let mut order: Vec<String> = Vec::new();
    let mut listed: Option<Vec<String>> = None;
    let mut overrides: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    let mut errors = Vec::new();

    for (line_no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {}: expected key=value", line_no + 1));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if let Some(rest) = key.strip_prefix("scenario.") {
            match rest.split_once('.') {
                Some((name, k)) if valid_name(name) && KEYS.contains(&k) && k != "scenarios" => {
                    if !order.iter().any(|n| n == name) {
                        order.push(name.to_string());
                    }
                    overrides.entry(name.to_string()).or_default().push((k.to_string(), value.to_string()));
                }
                _ => errors.push(key.to_string()),
            }
        } else if key == "scenarios" {
            let names: Vec<String> = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            errors.extend(names.iter().filter(|n| !valid_name(n)).map(|n| format!("scenarios: `{n}`")));
            listed = Some(names);
        } else if let Err(e) = set(&mut base, &mut base_methods, key, value) {
            errors.push(e);
        }
    }

    let names = match listed {
        Some(names) => {
            errors.extend(order.iter().filter(|n| !names.contains(n)).map(|n| format!("scenario.{n} not listed in scenarios")));
            names
        }
        None if order.is_empty() => vec!["default".to_string()],
        None => order,
    };
    let mut scenarios = Vec::new();
    for name in names {
        let (mut config, mut methods) = (base.clone(), base_methods.clone());
        for (k, v) in overrides.get(&name).into_iter().flatten() {
            if let Err(e) = set(&mut config, &mut methods, k, v) {
                errors.push(format!("scenario.{name}.{e}"));
            }
        }
        if let Err(e) = config.validate() {
            errors.push(format!("scenario {name}: {e}"));
        }
        scenarios.push(Scenario { name, config, methods });
    }
    if errors.is_empty() {
        Ok(scenarios)
    } else {
        Err(CliError::Config(errors))
    }
}
