//! JSON space configuration:
//! `{"C": {"type": "real", "space": "log", "range": [1.0, 1000.0]}, "k": {"type": "cat", "values": ["a", "b"]}}`.
//!
//! Declaration order is the JSON key order.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value as Json};

use super::{ParamKind, ParamSpec, Result, SearchSpace, SpaceError, Warp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindTag {
    Real,
    Int,
    Cat,
    Bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    #[serde(rename = "type")]
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    space: Option<Warp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<String>>,
}

impl RawParam {
    fn into_spec(self, name: &str) -> Result<ParamSpec> {
        let invalid = |reason: &str| SpaceError::InvalidSpec {
            param: name.to_string(),
            reason: reason.to_string(),
        };
        match self.kind {
            KindTag::Real | KindTag::Int => {
                if self.values.is_some() {
                    return Err(invalid("numeric parameters take `range`, not `values`"));
                }
                let [lo, hi] = self.range.ok_or_else(|| invalid("missing `range`"))?;
                let warp = self.space.unwrap_or_default();
                if self.kind == KindTag::Real {
                    ParamSpec::real(name, lo, hi, warp)
                } else {
                    if lo.fract() != 0.0 || hi.fract() != 0.0 {
                        return Err(invalid("int range bounds must be integers"));
                    }
                    ParamSpec::int(name, lo as i64, hi as i64, warp)
                }
            }
            KindTag::Cat => {
                if self.range.is_some() || self.space.is_some() {
                    return Err(invalid("categorical parameters take only `values`"));
                }
                ParamSpec::cat(
                    name,
                    self.values.ok_or_else(|| invalid("missing `values`"))?,
                )
            }
            KindTag::Bool => {
                if self.range.is_some() || self.space.is_some() || self.values.is_some() {
                    return Err(invalid("bool parameters carry no range, space or values"));
                }
                ParamSpec::boolean(name)
            }
        }
    }

    fn from_spec(spec: &ParamSpec) -> Self {
        match spec.kind() {
            ParamKind::Real { lo, hi, warp } => Self {
                kind: KindTag::Real,
                space: Some(*warp),
                range: Some([*lo, *hi]),
                values: None,
            },
            ParamKind::Int { lo, hi, warp } => Self {
                kind: KindTag::Int,
                space: Some(*warp),
                range: Some([*lo as f64, *hi as f64]),
                values: None,
            },
            ParamKind::Cat { values } => Self {
                kind: KindTag::Cat,
                space: None,
                range: None,
                values: Some(values.clone()),
            },
            ParamKind::Bool => Self {
                kind: KindTag::Bool,
                space: None,
                range: None,
                values: None,
            },
        }
    }
}

fn space_from_map(map: Map<String, Json>) -> Result<SearchSpace> {
    let mut params = Vec::with_capacity(map.len());
    for (name, raw) in map {
        let raw: RawParam = serde_json::from_value(raw)
            .map_err(|e| SpaceError::Config(format!("parameter `{name}`: {e}")))?;
        params.push(raw.into_spec(&name)?);
    }
    SearchSpace::new(params)
}

/// Parses a space from its JSON text.
pub fn parse_space_config(text: &str) -> Result<SearchSpace> {
    let map: Map<String, Json> =
        serde_json::from_str(text).map_err(|e| SpaceError::Config(e.to_string()))?;
    space_from_map(map)
}

impl Serialize for SearchSpace {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = Map::new();
        for p in self.params() {
            let raw =
                serde_json::to_value(RawParam::from_spec(p)).map_err(serde::ser::Error::custom)?;
            map.insert(p.name().to_string(), raw);
        }
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = Map::<String, Json>::deserialize(deserializer)?;
        space_from_map(map).map_err(D::Error::custom)
    }
}
