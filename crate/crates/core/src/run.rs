//! Batch computations behind the command-line subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::channel::SampleSource;
use crate::config::RunConfig;
use crate::outage::{estimate_case_probs, simulate_policy, CaseReport, PolicyOutcome};
use crate::rate::{LinkPairProblem, RatePoint};
use crate::regions::{
    bias_interval, individual_inst_member, inst_verdict, trace_instantaneous, BiasInterval, GridSpec,
    InstantaneousEvaluator, IndividualVerdict, OutageSpec, RegionBoundary, Scenario,
};
use crate::stat::{search_stat_boundary, StatSearch};
use crate::{Error, Link, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioVerdict {
    pub scenario: Scenario,
    pub member: bool,
    pub margins: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub r1: f64,
    pub r2: f64,
    pub seed: Option<u64>,
    pub cases: CaseReport,
    pub probability_sum: f64,
    pub verdicts: Vec<ScenarioVerdict>,
    pub individual: IndividualVerdict,
    pub bias_interval: BiasInterval,
}

/// Case estimates, membership in all six regions and the bias interval at
/// one rate point, over the config's sample stream.
pub fn run_point(config: &RunConfig, point: RatePoint) -> Result<PointReport> {
    run_point_with_source(config, &config.source()?, point)
}

/// [`run_point`] over an explicit sample source. Statistical-CSI verdicts
/// always come from the config's covariances.
pub fn run_point_with_source(config: &RunConfig, source: &SampleSource, point: RatePoint) -> Result<PointReport> {
    let probs = estimate_case_probs(source, point, config.noise());
    let mut verdicts = Vec::new();
    for scenario in [
        Scenario::CommonInst,
        Scenario::IndividualInst,
        Scenario::IndividualInstFixed1,
        Scenario::IndividualInstFixed2,
    ] {
        let v = inst_verdict(scenario, &config.spec_for(scenario), &probs)?;
        verdicts.push(ScenarioVerdict { scenario, member: v.member, margins: v.margins });
    }
    let stats = config.statistics()?;
    for scenario in [Scenario::CommonStat, Scenario::IndividualStat] {
        let spec = config.spec_for(scenario);
        let search = search_stat_boundary(&stats, &spec, &config.search_config())?;
        verdicts.push(ScenarioVerdict {
            scenario,
            member: search.member(point),
            margins: [Some(best_stat_margin(&search, point)), None, None],
        });
    }
    let (e1, e2) = config.spec_for(Scenario::IndividualInst).epsilons();
    let report = probs.report();
    Ok(PointReport {
        r1: point.r1,
        r2: point.r2,
        seed: source.seed(),
        probability_sum: report.p_a + report.p_b + report.p_c1 + report.p_c2 + report.p_d,
        cases: report,
        verdicts,
        individual: individual_inst_member(&probs, e1, e2),
        bias_interval: bias_interval(&probs, e1, e2),
    })
}

/// Largest slack over the collected pairs: `π1 π2 - (1-ε)` for common
/// outage, the smaller per-link slack for individual outage.
fn best_stat_margin(search: &StatSearch, point: RatePoint) -> f64 {
    search
        .pairs
        .iter()
        .map(|p| {
            let s = p.success(point);
            match search.spec {
                OutageSpec::Common { epsilon } => s[0] * s[1] - (1.0 - epsilon),
                OutageSpec::Individual { epsilon1, epsilon2 } => (s[0] - (1.0 - epsilon1)).min(s[1] - (1.0 - epsilon2)),
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub scenario: Scenario,
    pub spec: OutageSpec,
    pub points: usize,
    pub warnings: Vec<String>,
}

/// Run manifest. It holds everything needed to regenerate the outputs and
/// nothing that varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub scenario: Scenario,
    pub seed: u64,
    pub n_samples: u64,
    pub grid: Option<GridSpec>,
    pub beamformer_pairs: Option<usize>,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Debug, Clone)]
pub struct RegionRun {
    pub boundaries: Vec<RegionBoundary>,
    pub manifest: Manifest,
    pub files: Vec<PathBuf>,
    pub wall_time: Duration,
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument("worker count must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Computes the boundaries of the configured scenario. Individual
/// instantaneous runs also trace both fixed-choice variants on the same
/// stream and grid.
pub fn compute_region(config: &RunConfig) -> Result<(Vec<RegionBoundary>, Option<GridSpec>)> {
    let spec = config.spec();
    if config.scenario.is_statistical() {
        let search = search_stat_boundary(&config.statistics()?, &spec, &config.search_config())?;
        return Ok((vec![search.boundary], None));
    }
    let eval = InstantaneousEvaluator::new(&config.source()?, config.noise())?;
    let mut grid = eval.default_grid(&spec, config.grid_points());
    if let Some(g) = &config.grid {
        grid.r1_cap = g.r1_cap.unwrap_or(grid.r1_cap);
        grid.r2_cap = g.r2_cap.unwrap_or(grid.r2_cap);
    }
    let scenarios = match config.scenario {
        Scenario::IndividualInst => {
            vec![Scenario::IndividualInst, Scenario::IndividualInstFixed1, Scenario::IndividualInstFixed2]
        }
        s => vec![s],
    };
    let boundaries = scenarios
        .into_iter()
        .map(|s| trace_instantaneous(&eval, s, &spec, &grid))
        .collect::<Result<Vec<_>>>()?;
    Ok((boundaries, Some(grid)))
}

/// Traces the configured region and writes one CSV per boundary plus a
/// JSON manifest into `out_dir`. Files are written from this thread only.
pub fn run_region(config: &RunConfig, out_dir: &Path, workers: Option<usize>) -> Result<RegionRun> {
    let start = Instant::now();
    let (boundaries, grid) = with_workers(workers, || compute_region(config))??;
    fs::create_dir_all(out_dir)?;
    let prefix = config.prefix();
    let mut files = Vec::new();
    let mut outputs = Vec::new();
    for b in &boundaries {
        let name = format!("{prefix}_{}.csv", b.metadata.scenario);
        let path = out_dir.join(&name);
        fs::write(&path, b.to_csv())?;
        files.push(path);
        outputs.push(OutputRecord {
            file: name,
            scenario: b.metadata.scenario,
            spec: b.metadata.spec,
            points: b.points.len(),
            warnings: b.warnings.clone(),
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        scenario: config.scenario,
        seed: config.seed,
        n_samples: if config.scenario.is_statistical() { 0 } else { config.mc_samples as u64 },
        grid,
        beamformer_pairs: config.scenario.is_statistical().then(|| config.search_config().beamformer_pairs),
        outputs,
    };
    let path = out_dir.join(format!("{prefix}_manifest.json"));
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json)?;
    files.push(path);
    Ok(RegionRun { boundaries, manifest, files, wall_time: start.elapsed() })
}

/// CSV of both power frontiers of realization `sample` of the stream:
/// columns `tx, q, p` on a uniform grid of `points` leakage values.
pub fn frontier_dump(config: &RunConfig, sample: usize, points: usize) -> Result<String> {
    let source = config.source()?;
    if sample >= source.len() {
        return Err(Error::InvalidArgument(format!("sample {sample} is outside the stream of {} realizations", source.len())));
    }
    if points < 2 {
        return Err(Error::InvalidArgument("frontier dump needs at least 2 points".into()));
    }
    let problem = LinkPairProblem::new(&source.get(sample), config.noise());
    let mut out = String::from("tx,q,p\n");
    for (tx, f) in [(1, &problem.tx1), (2, &problem.tx2)] {
        for i in 0..points {
            let q = f.q_mrt * i as f64 / (points - 1) as f64;
            out.push_str(&format!("{tx},{q:.9e},{:.9e}\n", f.eval(q)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub r1: f64,
    pub r2: f64,
    pub bias: f64,
    pub coin_seed: u64,
    pub epsilon: [f64; 2],
    pub outcome: PolicyOutcome,
    pub outage_frequency: [f64; 2],
    pub standard_error: [f64; 2],
    pub bias_interval: BiasInterval,
}

/// Simulates the case policy with a constant coin bias over the config's
/// stream.
pub fn simulate(config: &RunConfig, point: RatePoint, bias: f64, coin_seed: u64) -> Result<SimulationReport> {
    let source = config.source()?;
    let noise = config.noise();
    let outcome = simulate_policy(&source, point, bias, noise, coin_seed)?;
    let (e1, e2) = config.spec_for(Scenario::IndividualInst).epsilons();
    let probs = estimate_case_probs(&source, point, noise);
    let outage = [outcome.outage_frequency(Link::One), outcome.outage_frequency(Link::Two)];
    let n = outcome.n_samples as f64;
    Ok(SimulationReport {
        r1: point.r1,
        r2: point.r2,
        bias,
        coin_seed,
        epsilon: [e1, e2],
        outcome,
        standard_error: outage.map(|p| (p * (1.0 - p) / n).sqrt()),
        outage_frequency: outage,
        bias_interval: bias_interval(&probs, e1, e2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelRealization;

    fn small(scenario: Scenario) -> RunConfig {
        let mut c = RunConfig::demo(scenario, 1500, 11);
        c.grid = Some(crate::config::GridConfig { points: 8, r1_cap: None, r2_cap: None });
        c.search = Some(crate::config::SearchConfig { beamformer_pairs: 100, curve_points: 10 });
        c
    }

    #[test]
    fn point_mass_point_report() {
        let mut config = small(Scenario::IndividualInst);
        config.epsilon_individual = Some([0.3, 0.8]);
        let h = ChannelRealization::from_real(&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        config.noise_variance = [1.0, 1.0];
        let source = SampleSource::explicit(vec![h]).unwrap();
        let report = run_point_with_source(&config, &source, RatePoint::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(report.cases.p_d, 1.0);
        assert!(report.individual.member);
        assert!((report.bias_interval.lo - 0.7).abs() < 1e-15 && (report.bias_interval.hi - 0.8).abs() < 1e-15);

        config.epsilon_individual = Some([0.3, 0.6]);
        let report = run_point_with_source(&config, &source, RatePoint::new(1.0, 1.0).unwrap()).unwrap();
        assert!(!report.individual.member && !report.bias_interval.nonempty);
    }

    #[test]
    fn origin_is_member_everywhere() {
        let config = small(Scenario::CommonInst);
        let report = run_point(&config, RatePoint::new(0.0, 0.0).unwrap()).unwrap();
        assert!(report.verdicts.iter().all(|v| v.member), "{:?}", report.verdicts);
        assert_eq!(report.verdicts.len(), 6);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let config = small(Scenario::CommonInst);
        let report = run_point(&config, RatePoint::new(1.3, 0.9).unwrap()).unwrap();
        assert!((report.probability_sum - 1.0).abs() < 1e-12);
        assert_eq!(report.cases.n_samples, 1500);
    }

    #[test]
    fn region_run_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_region(&small(Scenario::IndividualInst), dir.path(), None).unwrap();
        let names: Vec<String> = run.files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(
            names,
            [
                "region_individual-inst.csv",
                "region_individual-inst-fixed1.csv",
                "region_individual-inst-fixed2.csv",
                "region_manifest.json"
            ]
        );
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&run.files[3]).unwrap()).unwrap();
        assert_eq!(manifest, run.manifest);
        assert_eq!(manifest.config, small(Scenario::IndividualInst));
    }

    #[test]
    fn stat_region_run() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_region(&small(Scenario::CommonStat), dir.path(), Some(2)).unwrap();
        assert_eq!(run.boundaries.len(), 1);
        assert!(!run.boundaries[0].points.is_empty());
        assert_eq!(run.manifest.beamformer_pairs, Some(100));
    }

    #[test]
    fn frontier_dump_layout() {
        let csv = frontier_dump(&small(Scenario::CommonInst), 3, 5).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], "tx,q,p");
        assert!(lines[1].starts_with("1,0.000000000e0,"));
        assert!(frontier_dump(&small(Scenario::CommonInst), 5000, 5).is_err());
    }

    #[test]
    fn simulate_report() {
        let config = small(Scenario::IndividualInst);
        let r = simulate(&config, RatePoint::new(0.8, 0.8).unwrap(), 0.5, 1).unwrap();
        assert_eq!(r.outcome.n_samples, 1500);
        assert!(r.outage_frequency.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(with_workers(Some(0), || ()).is_err());
    }
}
