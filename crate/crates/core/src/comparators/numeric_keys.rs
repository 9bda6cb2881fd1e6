//! Maps with integer keys, written as JSON objects with string keys. Needed
//! because internally tagged enums buffer their content and then refuse to
//! turn `"5"` back into an integer key.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use serde::de::Error;
use serde::{Deserialize, Deserializer, Serializer};

pub fn serialize<K, S>(map: &BTreeMap<K, f64>, s: S) -> Result<S::Ok, S::Error>
where
    K: Display,
    S: Serializer,
{
    s.collect_map(map.iter().map(|(k, v)| (k.to_string(), *v)))
}

pub fn deserialize<'de, K, D>(d: D) -> Result<BTreeMap<K, f64>, D::Error>
where
    K: FromStr + Ord,
    K::Err: Display,
    D: Deserializer<'de>,
{
    BTreeMap::<String, f64>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| {
            k.parse::<K>()
                .map(|k| (k, v))
                .map_err(|e| D::Error::custom(format!("key {k:?}: {e}")))
        })
        .collect()
}
