//! Data generators for the designed loss-matrix experiments and the ARMA
//! model-fitting experiment.

pub mod arma;
pub mod designs;

pub use arma::{
    arma_experiment_losses, fit_ar, fit_ma, gen_arma_series, hannan_rissanen, ArFit, ArmaFit,
    ArmaSpec, MaFit,
};
pub use designs::{gen_design, Design, DesignSpec};
