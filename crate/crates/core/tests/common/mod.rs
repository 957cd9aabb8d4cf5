#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use recourse_core::attribution::{BackgroundSet, DEFAULT_BACKGROUND_SEED, DEFAULT_BACKGROUND_SIZE};
use recourse_core::{
    load_csv, train_logistic, Dataset, DisplaySelection, Engine, LogisticModel, TrainConfig,
};

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/credit_risk.csv");

pub fn dataset() -> Dataset {
    load_csv(FIXTURE).expect("fixture loads")
}

pub fn model() -> &'static LogisticModel {
    static MODEL: OnceLock<LogisticModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        train_logistic(&dataset(), &TrainConfig::default())
            .expect("fixture trains")
            .model
    })
}

pub fn background(ds: &Dataset) -> BackgroundSet {
    BackgroundSet::sample(ds, DEFAULT_BACKGROUND_SIZE, DEFAULT_BACKGROUND_SEED)
}

pub fn engine() -> &'static Engine {
    static ENGINE: OnceLock<Engine> = OnceLock::new();
    ENGINE.get_or_init(|| {
        let ds = dataset();
        let bg = background(&ds);
        Engine::build(
            ds,
            Arc::new(model().clone()),
            bg,
            DisplaySelection::ByImportance,
        )
        .expect("engine builds")
    })
}

/// Sigmoid of the weighted min/max-normalized features, written out longhand.
pub fn hand_score(model: &LogisticModel, ds: &Dataset, values: &[f64]) -> f64 {
    let mut z = model.bias;
    for (j, f) in ds.schema.features().iter().enumerate() {
        z += model.weights[j] * (values[j] - f.min) / (f.max - f.min);
    }
    1.0 / (1.0 + (-z).exp())
}
