//! Experiment runner: dataset generation, training, evaluation and checks.

pub mod commands;
pub mod config;
