//! Plant models addressable by name, so experiments can pick one from config.
//!
//! A plant literal is a single-key JSON object whose key names the model and
//! whose value holds its parameters, e.g. `{"pendulum": {"m": 1.0, ...}}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::Value;

use super::{
    controller_storage, LinearPlant, NonlinearPlant, NullOutputPlant, Pendulum, PendulumParams,
    PendulumStorage, StorageFunction,
};
use crate::error::{Error, Result};
use crate::linsys::StateSpaceLiteral;

/// A plant together with its negative-imaginary storage function, when one is known.
#[derive(Debug, Clone)]
pub struct PlantModel {
    pub plant: Arc<dyn NonlinearPlant>,
    pub storage: Option<Arc<dyn StorageFunction>>,
}

pub type PlantFactory = fn(&Value) -> Result<PlantModel>;

#[derive(Debug, Clone)]
pub struct PlantRegistry {
    factories: BTreeMap<String, PlantFactory>,
}

impl Default for PlantRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("pendulum", build_pendulum);
        r.register("linear", build_linear);
        r.register("null_output", build_null_output);
        r
    }
}

impl PlantRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    /// Adds or replaces a factory.
    pub fn register(&mut self, name: &str, factory: PlantFactory) {
        self.factories.insert(name.to_owned(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, params: &Value) -> Result<PlantModel> {
        let factory = self.factories.get(name).ok_or_else(|| Error::Unknown {
            kind: "plant",
            name: name.to_owned(),
        })?;
        factory(params)
    }

    pub fn build_literal(&self, literal: &Value) -> Result<PlantModel> {
        let obj = literal
            .as_object()
            .filter(|o| o.len() == 1)
            .ok_or_else(|| Error::InvalidParameter("plant literal must be a single-key object".into()))?;
        let (name, params) = obj.iter().next().expect("length checked");
        self.build(name, params)
    }
}

fn parse<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn build_pendulum(v: &Value) -> Result<PlantModel> {
    let params: PendulumParams = parse(v)?;
    params.validate()?;
    Ok(PlantModel {
        plant: Arc::new(Pendulum::new(params)),
        storage: Some(Arc::new(PendulumStorage::new(params))),
    })
}

fn build_linear(v: &Value) -> Result<PlantModel> {
    let lit: StateSpaceLiteral = parse(v)?;
    let storage: Option<Arc<dyn StorageFunction>> = match &lit {
        StateSpaceLiteral::FirstOrder { first_order } => {
            Some(Arc::new(controller_storage(first_order.a, first_order.b)?))
        }
        StateSpaceLiteral::Full { .. } => None,
    };
    Ok(PlantModel { plant: Arc::new(LinearPlant::new(lit.build()?)?), storage })
}

fn build_null_output(v: &Value) -> Result<PlantModel> {
    let dim = v.get("dim").and_then(Value::as_u64).unwrap_or(1) as usize;
    if dim == 0 {
        return Err(Error::InvalidParameter("null_output dim must be positive".into()));
    }
    Ok(PlantModel { plant: Arc::new(NullOutputPlant::new(dim)), storage: None })
}
