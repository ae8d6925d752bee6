//! Parameter set shared by the command line and the JSON config file.
//!
//! Config keys are the flag names without the leading dashes. Values from
//! `--config` are applied first; flags given on the command line win.

use std::path::Path;

use chase_escape::dynamics::{RateParams, StopPolicy};
use chase_escape::experiments::ModelParams;
use chase_escape::geometry::{BoxSpec, Topology};
use chase_escape::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Spatial dimension.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Connection radius.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Intensity of susceptible points.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_s: Option<f64>,
    /// Intensity of white-knight points.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_w: Option<f64>,
    /// Infection rate per infected neighbour.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_i: Option<f64>,
    /// Patch rate per white-knight neighbour.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_w: Option<f64>,
    /// Side length of the simulation box.
    #[arg(long = "box", global = true)]
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    pub box_side: Option<f64>,
    /// bounded or torus.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topology: Option<Topology>,
    /// Master seed.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Replications (samples for `saw`).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    /// Stop once this many nodes have ever been infected.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_infected: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_events: Option<u64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Comma-separated infection rates for `sweep`.
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    /// Comma-separated white-knight intensities for `sweep`.
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_w_grid: Option<Vec<f64>>,
    /// Comma-separated intensities for the `theta` percolation curve.
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_grid: Option<Vec<f64>>,
    /// Longest path length for `saw`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Monte Carlo points per volume integral in `local-survival`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume_samples: Option<u64>,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr, $($field:ident),*) => {
        Settings { $($field: $top.$field.or($base.$field)),* }
    };
}

pub const DEFAULT_LAMBDA_GRID: [f64; 10] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];
pub const DEFAULT_MU_W_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

impl Settings {
    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        overlay_fields!(
            self, top, dim, radius, mu_s, mu_w, lambda_i, lambda_w, box_side, topology, seed, reps, max_infected,
            max_events, max_time, threads, lambda_grid, mu_w_grid, mu_grid, n_max, volume_samples
        )
    }

    /// Reads a config file. A run manifest is accepted too: its `params`
    /// object is used.
    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)?;
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        if let Some(params) = value.get_mut("params") {
            value = params.take();
        }
        serde_json::from_value(value)
            .map_err(|e| Error::Parameter(format!("config {}: {e}", path.display())))
    }

    /// Fills the parameters every simulation needs.
    pub fn fill_model_defaults(&mut self) {
        self.dim.get_or_insert(2);
        self.radius.get_or_insert(1.0);
        self.mu_s.get_or_insert(1.0);
        self.mu_w.get_or_insert(0.5);
        self.lambda_i.get_or_insert(1.0);
        self.lambda_w.get_or_insert(1.0);
        self.box_side.get_or_insert(20.0);
        self.topology.get_or_insert(Topology::Bounded);
        self.seed.get_or_insert(0);
        self.reps.get_or_insert(1);
        if self.max_infected.is_none() && self.max_time.is_none() {
            self.max_events.get_or_insert(StopPolicy::default().max_events.unwrap_or(u64::MAX));
        }
    }

    pub fn require<T: Copy>(value: Option<T>, flag: &str) -> Result<T> {
        value.ok_or_else(|| Error::Parameter(format!("--{flag} is required")))
    }

    pub fn box_spec(&self) -> Result<BoxSpec> {
        BoxSpec::new(
            Self::require(self.dim, "dim")?,
            Self::require(self.box_side, "box")?,
            self.topology.unwrap_or(Topology::Bounded),
        )
    }

    pub fn model(&self) -> Result<ModelParams> {
        let params = ModelParams {
            box_spec: self.box_spec()?,
            radius: Self::require(self.radius, "radius")?,
            mu_s: Self::require(self.mu_s, "mu-s")?,
            mu_w: Self::require(self.mu_w, "mu-w")?,
            rates: RateParams::new(Self::require(self.lambda_i, "lambda-i")?, Self::require(self.lambda_w, "lambda-w")?)?,
            policy: StopPolicy {
                max_events: self.max_events,
                max_infected: self.max_infected,
                max_time: self.max_time,
                boundary_censoring: true,
            },
        };
        params.validate()?;
        Ok(params)
    }
}
