//! Optimizer ids and JSON strategy configs.
//!
//! Ids: `random-search`, `turbo-lite`, `gp-ei`, `de`,
//! `ensemble:a+b` (optionally `a*w+b*w`), `switch:a/b@12`, and `ws:<id>`
//! for the warm-start-aware variant of any of them.

use serde::{Deserialize, Serialize};

use super::de::DifferentialEvolution;
use super::ensemble::{PhaseSwitch, SlotSplit};
use super::gp_ei::GpEi;
use super::random::RandomSearch;
use super::turbo::TurboLite;
use super::warm::WarmStartAware;
use super::{Optimizer, OptimizerError};
use crate::seed::SeedKey;
use crate::space::SearchSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    RandomSearch,
    TurboLite,
    GpEi,
    De,
    Ensemble,
    PhaseSwitch,
}

impl StrategyKind {
    fn base_id(self) -> Option<&'static str> {
        Some(match self {
            StrategyKind::RandomSearch => "random-search",
            StrategyKind::TurboLite => "turbo-lite",
            StrategyKind::GpEi => "gp-ei",
            StrategyKind::De => "de",
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStrategy")]
pub struct StrategyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: StrategyKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<StrategyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch_batch: Option<usize>,
    #[serde(default)]
    pub warm_start: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawStrategy {
    Id(String),
    Full(FullStrategy),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FullStrategy {
    name: Option<String>,
    kind: StrategyKind,
    #[serde(default)]
    members: Vec<StrategyConfig>,
    weights: Option<Vec<f64>>,
    switch_batch: Option<usize>,
    #[serde(default)]
    warm_start: bool,
}

impl TryFrom<RawStrategy> for StrategyConfig {
    type Error = OptimizerError;

    fn try_from(raw: RawStrategy) -> Result<Self, Self::Error> {
        let cfg = match raw {
            RawStrategy::Id(s) => parse_strategy(&s)?,
            RawStrategy::Full(f) => StrategyConfig {
                name: f.name,
                kind: f.kind,
                members: f.members,
                weights: f.weights,
                switch_batch: f.switch_batch,
                warm_start: f.warm_start,
            },
        };
        cfg.check()?;
        Ok(cfg)
    }
}

impl StrategyConfig {
    pub fn base(kind: StrategyKind) -> Self {
        Self {
            name: None,
            kind,
            members: Vec::new(),
            weights: None,
            switch_batch: None,
            warm_start: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, OptimizerError> {
        serde_json::from_str(text).map_err(|e| OptimizerError::Config(e.to_string()))
    }

    fn check(&self) -> Result<(), OptimizerError> {
        let cfg = |m: String| Err(OptimizerError::Config(m));
        match self.kind {
            StrategyKind::Ensemble => {
                if self.members.is_empty() {
                    return cfg("ensemble needs members".into());
                }
                if let Some(w) = &self.weights {
                    if w.len() != self.members.len() {
                        return cfg(format!(
                            "{} ensemble members but {} weights",
                            self.members.len(),
                            w.len()
                        ));
                    }
                    super::ensemble::allocate_slots(1, w)?;
                }
            }
            StrategyKind::PhaseSwitch => {
                if self.members.len() != 2 {
                    return cfg("phase-switch needs exactly two members".into());
                }
                match self.switch_batch {
                    Some(b) if b >= 1 => {}
                    _ => return cfg("phase-switch needs switch_batch >= 1".into()),
                }
            }
            _ => {
                if !self.members.is_empty() {
                    return cfg(format!(
                        "`{}` takes no members",
                        self.kind.base_id().unwrap_or("?")
                    ));
                }
            }
        }
        self.members.iter().try_for_each(StrategyConfig::check)
    }

    /// Team id: the explicit name, else the canonical id string.
    pub fn id(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let core = match self.kind {
            StrategyKind::Ensemble => {
                let parts: Vec<String> = match &self.weights {
                    Some(w) if w.windows(2).any(|p| p[0] != p[1]) => self
                        .members
                        .iter()
                        .zip(w)
                        .map(|(m, w)| format!("{}*{w}", m.id()))
                        .collect(),
                    _ => self.members.iter().map(StrategyConfig::id).collect(),
                };
                format!("ensemble:{}", parts.join("+"))
            }
            StrategyKind::PhaseSwitch => format!(
                "switch:{}/{}@{}",
                self.members[0].id(),
                self.members[1].id(),
                self.switch_batch.unwrap_or(1)
            ),
            k => k.base_id().expect("base kind").to_string(),
        };
        if self.warm_start {
            format!("ws:{core}")
        } else {
            core
        }
    }
}

fn parse_base(s: &str) -> Result<StrategyConfig, OptimizerError> {
    let kind = match s {
        "random-search" => StrategyKind::RandomSearch,
        "turbo-lite" => StrategyKind::TurboLite,
        "gp-ei" => StrategyKind::GpEi,
        "de" => StrategyKind::De,
        _ => return Err(OptimizerError::Config(format!("unknown optimizer `{s}`"))),
    };
    Ok(StrategyConfig::base(kind))
}

/// Parses a registry id into a config.
pub fn parse_strategy(id: &str) -> Result<StrategyConfig, OptimizerError> {
    let id = id.trim();
    if let Some(rest) = id.strip_prefix("ws:") {
        let mut c = parse_strategy(rest)?;
        if c.warm_start {
            return Err(OptimizerError::Config(format!(
                "`{id}` wraps warm start twice"
            )));
        }
        c.warm_start = true;
        return Ok(c);
    }
    if let Some(rest) = id.strip_prefix("ensemble:") {
        let mut members = Vec::new();
        let mut weights = Vec::new();
        for part in rest.split('+') {
            let (m, w) = match part.split_once('*') {
                Some((m, w)) => (
                    m,
                    w.parse::<f64>().map_err(|_| {
                        OptimizerError::Config(format!("bad ensemble weight `{w}`"))
                    })?,
                ),
                None => (part, 1.0),
            };
            members.push(parse_base(m)?);
            weights.push(w);
        }
        let c = StrategyConfig {
            members,
            weights: Some(weights),
            ..StrategyConfig::base(StrategyKind::Ensemble)
        };
        c.check()?;
        return Ok(c);
    }
    if let Some(rest) = id.strip_prefix("switch:") {
        let bad = || OptimizerError::Config(format!("expected `switch:a/b@batch`, got `{id}`"));
        let (pair, at) = rest.rsplit_once('@').ok_or_else(bad)?;
        let (a, b) = pair.split_once('/').ok_or_else(bad)?;
        let c = StrategyConfig {
            members: vec![parse_base(a)?, parse_base(b)?],
            switch_batch: Some(at.parse().map_err(|_| bad())?),
            ..StrategyConfig::base(StrategyKind::PhaseSwitch)
        };
        c.check()?;
        return Ok(c);
    }
    parse_base(id)
}

/// Member 0 shares the parent seed; member `i > 0` gets a derived one.
fn member_seed(seed: u64, i: usize) -> u64 {
    if i == 0 {
        seed
    } else {
        SeedKey::new(seed).str("member").int(i as u64).finish()
    }
}

pub fn build_optimizer(
    cfg: &StrategyConfig,
    space: &SearchSpace,
    seed: u64,
) -> Result<Box<dyn Optimizer>, OptimizerError> {
    cfg.check()?;
    let sp = space.clone();
    let core: Box<dyn Optimizer> = match cfg.kind {
        StrategyKind::RandomSearch => Box::new(RandomSearch::new(sp, seed)),
        StrategyKind::TurboLite => Box::new(TurboLite::new(sp, seed)),
        StrategyKind::GpEi => Box::new(GpEi::new(sp, seed)),
        StrategyKind::De => Box::new(DifferentialEvolution::new(sp, seed)),
        StrategyKind::Ensemble => {
            let members = cfg
                .members
                .iter()
                .enumerate()
                .map(|(i, m)| build_optimizer(m, space, member_seed(seed, i)))
                .collect::<Result<Vec<_>, _>>()?;
            let weights = cfg
                .weights
                .clone()
                .unwrap_or_else(|| vec![1.0; members.len()]);
            Box::new(SlotSplit::new(members, weights)?)
        }
        StrategyKind::PhaseSwitch => Box::new(PhaseSwitch::new(
            build_optimizer(&cfg.members[0], space, member_seed(seed, 0))?,
            build_optimizer(&cfg.members[1], space, member_seed(seed, 1))?,
            cfg.switch_batch.expect("checked"),
        )?),
    };
    Ok(if cfg.warm_start {
        Box::new(WarmStartAware::new(core, space.signature()))
    } else {
        core
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Outcome;
    use crate::space::{ParamSpec, Warp};

    fn space() -> SearchSpace {
        SearchSpace::new(vec![
            ParamSpec::real("lr", 1e-4, 1.0, Warp::Log).unwrap(),
            ParamSpec::int("depth", 1, 8, Warp::Linear).unwrap(),
            ParamSpec::cat("kind", ["a", "b"]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn ids_round_trip() {
        for id in [
            "random-search",
            "turbo-lite",
            "gp-ei",
            "de",
            "ensemble:turbo-lite+gp-ei",
            "ensemble:turbo-lite*0.5+gp-ei*0.25+de*0.25",
            "switch:gp-ei/de@12",
            "ws:turbo-lite",
            "ws:ensemble:turbo-lite+gp-ei",
        ] {
            assert_eq!(parse_strategy(id).unwrap().id(), id);
        }
        assert!(parse_strategy("hyperband").is_err());
        assert!(parse_strategy("switch:de/gp-ei@0").is_err());
        assert!(parse_strategy("ws:ws:de").is_err());
    }

    #[test]
    fn json_configs() {
        let c = StrategyConfig::from_json(
            r#"{"name":"combo","kind":"ensemble","members":["turbo-lite",{"kind":"gp-ei"}],"weights":[3,1],"warm_start":true}"#,
        )
        .unwrap();
        assert_eq!(c.id(), "combo");
        assert_eq!(c.members[1].kind, StrategyKind::GpEi);
        assert!(build_optimizer(&c, &space(), 0).is_ok());
        let bad = StrategyConfig::from_json(
            r#"{"kind":"ensemble","members":["de","gp-ei"],"weights":[1]}"#,
        );
        assert!(matches!(bad, Err(OptimizerError::Config(_))));
        let bad =
            StrategyConfig::from_json(r#"{"kind":"ensemble","members":["de"],"weights":[0]}"#);
        assert!(bad.is_err());
        let back: StrategyConfig =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    /// Same seed and same observations give the same suggestion stream.
    #[test]
    fn every_optimizer_is_deterministic() {
        let sp = space();
        for id in [
            "random-search",
            "turbo-lite",
            "gp-ei",
            "de",
            "ensemble:turbo-lite+gp-ei",
            "switch:de/gp-ei@2",
        ] {
            let cfg = parse_strategy(id).unwrap();
            let run = || {
                let mut o = build_optimizer(&cfg, &sp, 42).unwrap();
                let mut all = Vec::new();
                for _ in 0..3 {
                    let batch = o.suggest(4).unwrap();
                    assert_eq!(batch.len(), 4, "{id}");
                    let obs: Vec<_> = batch
                        .iter()
                        .map(|s| {
                            let v = s.real("lr").unwrap().ln()
                                + s.get("depth").unwrap().as_f64().unwrap();
                            crate::optimizers::Observation::new(s.clone(), Outcome::Loss(v))
                        })
                        .collect();
                    o.observe(&obs).unwrap();
                    all.extend(batch);
                }
                all
            };
            let a = run();
            assert_eq!(a, run(), "{id}");
            assert!(a.iter().all(|s| sp.validate(s).is_ok()), "{id}");
        }
    }
}
