//! Synthetic data: model input with known coefficients and a city of
//! simulated GPS panels.

mod city;
mod model_data;

pub use city::{
    generate_city, CitySpec, PlaceKind, ShockSpec, SyntheticCity, TrueColocation, TrueStay, OTHER_PLACES,
};
pub use model_data::{synth_model_data, ModelSynthConfig, SynthModelData};
