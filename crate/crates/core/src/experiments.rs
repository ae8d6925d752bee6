//! Replicated Monte Carlo experiments.
//!
//! Every replication draws a fresh point configuration, so estimates average
//! over both the random environment and the dynamics. Replication `k` of a
//! cell always uses `stream(master_seed, cell_key, k)`; results are collected
//! in replication order before any reduction, which makes every table
//! independent of the thread count.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{ball_volume, expected_saw_count, local_survival_bounds, rho, SurvivalBounds};
use crate::dynamics::{run, OutcomeClass, RateParams, SimOutcome, StopPolicy, StopReason};
use crate::error::{finite, parameter, Result};
use crate::geometry::{
    build_gilbert, cluster_of, count_saw_profile, estimate_theta_coupled, sample_ppp, thin_marks, BoxSpec,
    GilbertGraph, PointConfiguration, SawLimits, Topology,
};
use crate::reference_models::ProportionEstimate;
use crate::stream::{stream, CellKey, GENERATOR};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const LOCAL_DYNAMIC_TAG: u64 = 0x6c6f_6361_6c31;
const LOCAL_VOID_TAG: u64 = 0x6c6f_6361_6c32;
const SAW_TAG: u64 = 0x0073_6177;

/// Environment plus dynamics parameters for one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(rename = "box")]
    pub box_spec: BoxSpec,
    pub radius: f64,
    pub mu_s: f64,
    pub mu_w: f64,
    pub rates: RateParams,
    pub policy: StopPolicy,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.box_spec.validate()?;
        finite("radius", self.radius)?;
        if self.radius <= 0.0 {
            return Err(parameter("radius must be positive"));
        }
        for (name, v) in [("mu_s", self.mu_s), ("mu_w", self.mu_w)] {
            finite(name, v)?;
            if v < 0.0 {
                return Err(parameter(format!("{name} must be non-negative")));
            }
        }
        self.rates.validate()?;
        self.policy.validate()
    }

    /// Poisson process of intensity `mu_s + mu_w`, thinned with
    /// `p = mu_w / (mu_s + mu_w)`, plus the origin.
    pub fn sample_graph<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GilbertGraph> {
        let mu = self.mu_s + self.mu_w;
        let points = sample_ppp(mu, &self.box_spec, rng)?;
        let p = if mu > 0.0 { self.mu_w / mu } else { 0.0 };
        build_gilbert(thin_marks(&points, p, rng)?, self.radius)
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SimOutcome> {
        let graph = self.sample_graph(rng)?;
        run(&graph, self.rates, &self.policy, rng)
    }
}

/// `replications` independent runs of `params` on streams
/// `(master_seed, cell, 0..replications)`, in replication order.
pub fn replicate(params: &ModelParams, cell: CellKey, replications: u64, master_seed: u64) -> Result<Vec<SimOutcome>> {
    params.validate()?;
    (0..replications)
        .into_par_iter()
        .map(|rep| params.simulate(&mut stream(master_seed, cell, rep)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// `rates.lambda_i` and `mu_w` are overridden per cell.
    pub base: ModelParams,
    pub lambda_grid: Vec<f64>,
    pub mu_w_grid: Vec<f64>,
    pub replications: u64,
    pub master_seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.mu_w_grid.is_empty() {
            return Err(parameter("sweep grids must be non-empty"));
        }
        if self.replications == 0 {
            return Err(parameter("at least one replication is required"));
        }
        for (l, m) in self.cells() {
            self.cell_params(l, m).validate()?;
        }
        Ok(())
    }

    /// Cells in output order: `lambda_i` outer, `mu_w` inner.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lambda_grid.iter().flat_map(move |&l| self.mu_w_grid.iter().map(move |&m| (l, m)))
    }

    pub fn cell_params(&self, lambda_i: f64, mu_w: f64) -> ModelParams {
        let mut p = self.base;
        p.rates.lambda_i = lambda_i;
        p.mu_w = mu_w;
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda_i: f64,
    pub mu_w: f64,
    pub reps: u64,
    pub n_extinct: u64,
    pub n_local: u64,
    pub n_global_proxy: u64,
    /// Global-proxy runs stopped by the boundary shell.
    pub n_boundary: u64,
    /// Global-proxy runs stopped by a resource cap.
    pub n_cap: u64,
    pub frac_global: f64,
    pub stderr_global: f64,
    pub mean_total_infected: f64,
    pub stderr_total_infected: f64,
    /// Mean over the extinct runs; NaN when there are none.
    pub mean_extinction_time: f64,
}

impl SweepRow {
    pub fn aggregate(lambda_i: f64, mu_w: f64, outcomes: &[SimOutcome]) -> Self {
        let reps = outcomes.len() as u64;
        let count = |c: OutcomeClass| outcomes.iter().filter(|o| o.class == c).count() as u64;
        let stops = |s: StopReason| outcomes.iter().filter(|o| o.stop_reason == s).count() as u64;
        let n_global_proxy = count(OutcomeClass::GlobalProxy);
        let frac_global = n_global_proxy as f64 / reps as f64;
        let totals: Vec<f64> = outcomes.iter().map(|o| o.total_ever_infected as f64).collect();
        let (mean_total_infected, stderr_total_infected) = mean_and_stderr(&totals);
        let times: Vec<f64> = outcomes.iter().filter_map(|o| o.extinction_time).collect();
        SweepRow {
            lambda_i,
            mu_w,
            reps,
            n_extinct: count(OutcomeClass::Extinction),
            n_local: count(OutcomeClass::LocalSurvival),
            n_global_proxy,
            n_boundary: stops(StopReason::Boundary),
            n_cap: stops(StopReason::Cap),
            frac_global,
            stderr_global: (frac_global * (1.0 - frac_global) / reps as f64).sqrt(),
            mean_total_infected,
            stderr_total_infected,
            mean_extinction_time: mean_and_stderr(&times).0,
        }
    }
}

/// Sample mean and standard error of the mean (NaN mean for no data, zero
/// error for a single value).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Everything needed to reproduce a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub spec: SweepSpec,
    pub master_seed: u64,
    pub tool_version: String,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub manifest: SweepManifest,
}

pub const SWEEP_CSV_HEADER: &str =
    "lambda_i,mu_w,reps,n_extinct,n_local,n_global_proxy,frac_global,stderr_global,mean_total_infected,mean_extinction_time";

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SWEEP_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.lambda_i,
                r.mu_w,
                r.reps,
                r.n_extinct,
                r.n_local,
                r.n_global_proxy,
                r.frac_global,
                r.stderr_global,
                r.mean_total_infected,
                r.mean_extinction_time
            )?;
        }
        Ok(())
    }

    pub fn row(&self, lambda_i: f64, mu_w: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.lambda_i == lambda_i && r.mu_w == mu_w)
    }

    /// Heatmap of `frac_global` over the grid (λ_I horizontal, μ_W
    /// vertical) with the line `λ_I = ρ(μ_S κ_r)` when it falls inside the
    /// λ range.
    pub fn heatmap_svg(&self) -> String {
        let spec = &self.manifest.spec;
        let (nx, ny) = (spec.lambda_grid.len(), spec.mu_w_grid.len());
        let (cell, margin) = (40.0, 70.0);
        let width = margin * 2.0 + cell * nx as f64;
        let height = margin * 2.0 + cell * ny as f64;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (i, &l) in spec.lambda_grid.iter().enumerate() {
            for (j, &m) in spec.mu_w_grid.iter().enumerate() {
                let frac = self.row(l, m).map_or(0.0, |r| r.frac_global);
                // extinction green, survival red
                let red = (255.0 * frac).round() as u8;
                let green = (160.0 * (1.0 - frac)).round() as u8;
                let x = margin + cell * i as f64;
                let y = margin + cell * (ny - 1 - j) as f64;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({red},{green},60)"><title>lambda_i={l} mu_w={m} frac_global={frac}</title></rect>"#
                );
            }
        }
        for (i, &l) in spec.lambda_grid.iter().enumerate() {
            let x = margin + cell * (i as f64 + 0.5);
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{}" font-size="9" text-anchor="middle">{l}</text>"#,
                margin + cell * ny as f64 + 14.0
            );
        }
        for (j, &m) in spec.mu_w_grid.iter().enumerate() {
            let y = margin + cell * (ny - 1 - j) as f64 + cell * 0.5 + 3.0;
            let _ = writeln!(svg, r#"<text x="{}" y="{y}" font-size="9" text-anchor="end">{m}</text>"#, margin - 4.0);
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">infection rate lambda_i</text>"#,
            width / 2.0,
            height - 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 18 {})">white-knight intensity mu_w</text>"#,
            height / 2.0,
            height / 2.0
        );
        let x_threshold = spec.base.mu_s * ball_volume(spec.base.box_spec.dim, spec.base.radius);
        if let Ok(threshold) = rho(x_threshold) {
            if let Some(pos) = grid_coordinate(&spec.lambda_grid, threshold) {
                let x = margin + cell * (pos + 0.5);
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x}" y1="{margin}" x2="{x}" y2="{}" stroke="black" stroke-dasharray="4 3"><title>rho={threshold}</title></line>"#,
                    margin + cell * ny as f64
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Fractional grid index of `value` by linear interpolation between grid
/// points; `None` outside the grid.
fn grid_coordinate(grid: &[f64], value: f64) -> Option<f64> {
    if grid.len() == 1 {
        return (grid[0] == value).then_some(0.0);
    }
    grid.windows(2).enumerate().find_map(|(i, w)| {
        let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
        (a <= value && value <= b && a < b).then(|| {
            let t = (value - w[0]) / (w[1] - w[0]);
            i as f64 + t
        })
    })
}

/// Runs every cell of the grid.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let cells: Vec<(f64, f64)> = spec.cells().collect();
    let reps = spec.replications;
    let tasks: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| (0..reps).map(move |r| (c, r))).collect();
    let outcomes = tasks
        .into_par_iter()
        .map(|(c, rep)| {
            let (l, m) = cells[c];
            let params = spec.cell_params(l, m);
            params.simulate(&mut stream(spec.master_seed, CellKey::from_values(l, m), rep))
        })
        .collect::<Result<Vec<SimOutcome>>>()?;
    let rows = cells
        .iter()
        .zip(outcomes.chunks(reps as usize))
        .map(|(&(l, m), chunk)| SweepRow::aggregate(l, m, chunk))
        .collect();
    Ok(SweepTable {
        rows,
        manifest: SweepManifest {
            spec: spec.clone(),
            master_seed: spec.master_seed,
            tool_version: TOOL_VERSION.to_string(),
            generator: GENERATOR.to_string(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectiveRow {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub analytic: f64,
    /// `ln(mean) / n`; NaN for `n = 0`.
    pub growth_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectiveTable {
    pub rows: Vec<ConnectiveRow>,
    pub samples: u64,
    /// Samples dropped because the enumeration hit a cap.
    pub excluded: u64,
    /// `ln(μ_S κ_r)`.
    pub log_mu_kappa: f64,
}

/// Mean number of self-avoiding paths from the origin of the susceptible
/// Gilbert graph, for every length up to `n_max`, against `(μ_S κ_r)^n`.
/// The box has half-side `(n_max + 1) r`, so no path of length `≤ n_max`
/// is truncated by the box.
pub fn connective_constant_experiment(
    mu_s: f64,
    r: f64,
    dim: usize,
    n_max: usize,
    samples: u64,
    master_seed: u64,
    limits: SawLimits,
) -> Result<ConnectiveTable> {
    if samples == 0 {
        return Err(parameter("at least one sample is required"));
    }
    let box_spec = BoxSpec::bounded(dim, 2.0 * (n_max as f64 + 1.0) * r)?;
    let profiles = (0..samples)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(master_seed, CellKey::tagged(SAW_TAG, n_max as u64), rep);
            let points = sample_ppp(mu_s, &box_spec, &mut rng)?;
            let graph = build_gilbert(PointConfiguration::susceptible_with_origin(&points), r)?;
            count_saw_profile(&graph, 0, n_max, true, limits)
        })
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<&Vec<u64>> = profiles.iter().filter(|p| !p.capped).map(|p| &p.counts).collect();
    let rows = (0..=n_max)
        .map(|n| {
            let values: Vec<f64> = kept.iter().map(|c| c[n] as f64).collect();
            let (mean, stderr) = mean_and_stderr(&values);
            Ok(ConnectiveRow {
                n,
                mean,
                stderr,
                analytic: expected_saw_count(mu_s, r, dim, n as u32)?,
                growth_rate: if n == 0 { f64::NAN } else { mean.ln() / n as f64 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConnectiveTable {
        rows,
        samples,
        excluded: samples - kept.len() as u64,
        log_mu_kappa: (mu_s * ball_volume(dim, r)).ln(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSurvivalSpec {
    pub mu_s: f64,
    pub mu_w: f64,
    pub radius: f64,
    #[serde(rename = "box")]
    pub box_spec: BoxSpec,
    pub rates: RateParams,
    pub replications: u64,
    pub master_seed: u64,
    /// Monte Carlo points per volume integral.
    pub volume_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalSurvivalReport {
    /// Fraction of simulated runs classified as local survival.
    pub dynamic: ProportionEstimate,
    /// Mean of `exp(−μ_W |B_r(C_o^S)|)` over sampled susceptible clusters,
    /// with boundary-touching clusters contributing 0.
    pub void_estimate: f64,
    pub void_stderr: f64,
    /// Fraction of sampled susceptible clusters reaching the boundary shell.
    pub theta_hat: f64,
    pub boundary_clusters: u64,
    pub bounds: SurvivalBounds,
    /// `|dynamic − void| / sqrt(se_dynamic² + se_void²)`.
    pub z_score: f64,
}

/// Two estimators of the local-survival probability: direct simulation of
/// the dynamics, and the void-probability identity
/// `P(L) = E[exp(−μ_W |B_r(C_o^S)|); C_o^S finite]` with the union-of-balls
/// volume integrated by Monte Carlo.
pub fn local_survival_experiment(spec: &LocalSurvivalSpec) -> Result<LocalSurvivalReport> {
    if spec.replications == 0 || spec.volume_samples == 0 {
        return Err(parameter("replications and volume samples must be positive"));
    }
    if spec.box_spec.topology != Topology::Bounded {
        return Err(parameter("local survival needs a bounded box"));
    }
    let params = ModelParams {
        box_spec: spec.box_spec,
        radius: spec.radius,
        mu_s: spec.mu_s,
        mu_w: spec.mu_w,
        rates: spec.rates,
        policy: StopPolicy::default(),
    };
    let outcomes = replicate(&params, CellKey::tagged(LOCAL_DYNAMIC_TAG, 0), spec.replications, spec.master_seed)?;
    let local = outcomes.iter().filter(|o| o.class == OutcomeClass::LocalSurvival).count() as u64;
    let dynamic = ProportionEstimate::from_hits(local, spec.replications);

    let voids = (0..spec.replications)
        .into_par_iter()
        .map(|rep| -> Result<Option<f64>> {
            let mut rng = stream(spec.master_seed, CellKey::tagged(LOCAL_VOID_TAG, 0), rep);
            let points = sample_ppp(spec.mu_s, &spec.box_spec, &mut rng)?;
            let graph = build_gilbert(PointConfiguration::susceptible_with_origin(&points), spec.radius)?;
            let cluster = cluster_of(&graph, 0, true)?;
            if cluster.touches_boundary {
                return Ok(None);
            }
            let centres: Vec<&[f64]> = cluster.member_indices.iter().map(|&v| graph.config().position(v)).collect();
            let volume = union_of_balls_volume(&centres, spec.radius, spec.volume_samples, &mut rng);
            Ok(Some((-spec.mu_w * volume).exp()))
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let boundary_clusters = voids.iter().filter(|v| v.is_none()).count() as u64;
    let values: Vec<f64> = voids.iter().map(|v| v.unwrap_or(0.0)).collect();
    let (void_estimate, void_stderr) = mean_and_stderr(&values);
    let theta_hat = boundary_clusters as f64 / spec.replications as f64;
    let combined = (dynamic.stderr.powi(2) + void_stderr.powi(2)).sqrt();
    Ok(LocalSurvivalReport {
        dynamic,
        void_estimate,
        void_stderr,
        theta_hat,
        boundary_clusters,
        bounds: local_survival_bounds(spec.mu_s, spec.mu_w, spec.radius, spec.box_spec.dim, theta_hat)?,
        z_score: if combined > 0.0 { (dynamic.estimate - void_estimate).abs() / combined } else { 0.0 },
    })
}

/// Volume of `∪ B_r(c)`. Each sample picks a ball uniformly and a point `x`
/// uniformly inside it; `n κ_r E[1 / m(x)]`, with `m(x)` the number of
/// balls covering `x`, is the union volume. Exact for a single ball.
pub fn union_of_balls_volume<R: Rng + ?Sized>(centres: &[&[f64]], r: f64, samples: u64, rng: &mut R) -> f64 {
    let Some(first) = centres.first() else {
        return 0.0;
    };
    let dim = first.len();
    let n = centres.len();
    let ball = ball_volume(dim, r);
    if n == 1 {
        return ball;
    }
    let r2 = r * r;
    let mut x = vec![0.0; dim];
    let mut total = 0.0;
    for _ in 0..samples {
        let c = centres[rng.random_range(0..n)];
        uniform_in_ball(c, r, &mut x, rng);
        let m = centres.iter().filter(|c| c.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2).count();
        total += 1.0 / m.max(1) as f64;
    }
    n as f64 * ball * total / samples as f64
}

fn uniform_in_ball<R: Rng + ?Sized>(centre: &[f64], r: f64, out: &mut [f64], rng: &mut R) {
    let dim = centre.len();
    let mut norm = 0.0;
    for v in out.iter_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
        norm += *v * *v;
    }
    let scale = r * rng.random::<f64>().powf(1.0 / dim as f64) / norm.sqrt();
    for (v, c) in out.iter_mut().zip(centre) {
        *v = c + *v * scale;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub mu: f64,
    pub theta: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercolationReport {
    pub curve: Vec<ThetaPoint>,
    /// Smallest grid intensity with `theta > 0.5`.
    pub mu_c_hat: Option<f64>,
    /// `mu_c_hat · κ_r`.
    pub mu_c_kappa: Option<f64>,
}

/// Crossing threshold of the finite-box percolation estimate.
pub const PERCOLATION_CROSSING: f64 = 0.5;

/// Finite-box percolation curve under coupled thinning and the crossing
/// estimate of the critical intensity.
pub fn percolation_consistency(
    r: f64,
    box_spec: &BoxSpec,
    mu_grid: &[f64],
    replications: u64,
    master_seed: u64,
) -> Result<PercolationReport> {
    let estimates = estimate_theta_coupled(mu_grid, r, box_spec, replications, master_seed)?;
    let curve: Vec<ThetaPoint> = mu_grid
        .iter()
        .zip(&estimates)
        .map(|(&mu, e)| ThetaPoint { mu, theta: e.theta, stderr: e.stderr })
        .collect();
    let mu_c_hat = curve.iter().find(|p| p.theta > PERCOLATION_CROSSING).map(|p| p.mu);
    Ok(PercolationReport { curve, mu_c_hat, mu_c_kappa: mu_c_hat.map(|m| m * ball_volume(box_spec.dim, r)) })
}
