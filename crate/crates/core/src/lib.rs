pub mod attention;
pub mod data;
pub mod indicators;
pub mod metrics;
pub mod model;
pub mod recurrent;
pub mod series;
pub mod tensor;
