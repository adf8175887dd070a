use std::path::Path;
use std::process::ExitCode;

use log::info;
use serde::Serialize;
use sparse_hinf::ellipsoid::{synthesize_region, Stage1Objective, SynthesisOptions};
use sparse_hinf::experiments::{
    compute_metrics, gamma_floor, gen_dense_gaussian, gen_spatial_decay, perturbation_study,
    summarize, theta_sweep, DenseGaussianConfig, DesignMetrics, Method, PerturbationStudyConfig, SpatialDecayConfig,
    SweepCase, SweepConfig, SweepRow, SweepSummary, DEFAULT_GAMMA_CAP, DEFAULT_GAMMA_FACTOR,
};
use sparse_hinf::greedy::{self, GreedyCriterion, GreedyRecord};
use sparse_hinf::io;
use sparse_hinf::l1::{reweighted_l1, ReweightConfig, ReweightRecord, StopNorm};
use sparse_hinf::linalg::{lambda_max, lambda_min};
use sparse_hinf::lti::{close_loop, hinf_norm, hinf_norm_grid, log_grid, spectral_abscissa};
use sparse_hinf::sdp::ClarabelBackend;
use sparse_hinf::{Error, Gain, Region, Result, System};

use crate::{
    Cli, Command, CriterionArg, Family, GenArgs, GreedyArgs, HinfArgs, L1Args, NormArg, ObjectiveArg, PerturbArgs,
    PlantFlags, SweepArgs, SynthesisFlags, SynthesizeArgs,
};

/// Exit status when a result fails its H-infinity check.
const VERIFY_FAILED: u8 = 3;

/// Relative tolerance when searching for the smallest feasible level.
const FLOOR_TOL: f64 = 1e-3;

pub fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Synthesize(a) => synthesize(a),
        Command::SparsifyL1(a) => sparsify_l1(a),
        Command::SparsifyGreedy(a) => sparsify_greedy(a),
        Command::Gen(a) => gen(a, cli.seed),
        Command::Sweep(a) => sweep(a, cli.seed),
        Command::Perturb(a) => perturb(a, cli.seed),
        Command::Hinf(a) => hinf(a),
    }
}

fn synthesis_options(f: &SynthesisFlags) -> SynthesisOptions {
    SynthesisOptions {
        strictness_eps: f.strictness_eps,
        condition_cap: (f.condition_cap > 0.0).then_some(f.condition_cap),
        solver_tol: f.solver_tol,
        allow_theta_above_one: f.allow_theta_above_one,
        objective: match f.objective {
            ObjectiveArg::Feasibility => Stage1Objective::Feasibility,
            ObjectiveArg::MaxMargin => Stage1Objective::MaxMargin,
            ObjectiveArg::Ball => Stage1Objective::InscribedBall,
        },
        ..SynthesisOptions::default()
    }
}

fn backend(opts: &SynthesisOptions) -> ClarabelBackend {
    ClarabelBackend::with_tol(opts.solver_tol)
}

fn emit<T: Serialize>(path: Option<&Path>, report: &T) -> Result<()> {
    match path {
        Some(p) => io::write_json(p, report),
        None => {
            print!("{}", io::to_json(report));
            Ok(())
        }
    }
}

fn status(verified: Option<bool>) -> ExitCode {
    if verified == Some(false) {
        eprintln!("error: the result does not meet its H-infinity level");
        ExitCode::from(VERIFY_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

/// Level to use for `sys`: the given one, or the default multiple of the floor.
fn pick_gamma(sys: &System, gamma: Option<f64>, opts: &SynthesisOptions) -> Result<(f64, Option<f64>)> {
    match gamma {
        Some(g) => Ok((g, None)),
        None => {
            let floor = gamma_floor(sys, FLOOR_TOL, DEFAULT_GAMMA_CAP, opts, &backend(opts))?;
            info!("gamma floor {floor}");
            Ok((DEFAULT_GAMMA_FACTOR * floor, Some(floor)))
        }
    }
}

#[derive(Serialize)]
struct SynthesizeReport {
    gamma: f64,
    gamma_floor: Option<f64>,
    solver_status: String,
    n: usize,
    m: usize,
    center_hinf: f64,
    center_nnz: usize,
    margin: f64,
    cond_p: f64,
    r_eig_min: f64,
    r_eig_max: f64,
    z_eig_min: f64,
    z_eig_max: f64,
}

fn synthesize(a: &SynthesizeArgs) -> Result<ExitCode> {
    let sys = io::read_system(&a.system)?;
    let opts = synthesis_options(&a.synthesis);
    let (gamma, floor) = pick_gamma(&sys, a.gamma, &opts)?;
    let syn = synthesize_region(&sys, gamma, &opts, &backend(&opts))?;
    io::write_region(&a.out, &syn.region)?;
    let p = &syn.solution.p;
    let report = SynthesizeReport {
        gamma,
        gamma_floor: floor,
        solver_status: format!("{:?}", syn.solver_status),
        n: sys.n(),
        m: sys.m(),
        center_hinf: syn.center_hinf,
        center_nnz: syn.region.center().nnz(),
        margin: syn.solution.margin,
        cond_p: lambda_max(p) / lambda_min(p),
        r_eig_min: lambda_min(syn.region.r()),
        r_eig_max: lambda_max(syn.region.r()),
        z_eig_min: lambda_min(syn.region.z()),
        z_eig_max: lambda_max(syn.region.z()),
    };
    if let Some(r) = &a.report {
        io::write_json(r, &report)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn load_region(path: &Path, allow: bool) -> Result<Region> {
    Ok(io::read_region(path)?.allowing_theta_above_one(allow))
}

/// H-infinity check of a sparsified gain when the plant is known.
fn verify(system: Option<&Path>, region: &Region, f: &Gain) -> Result<Option<DesignMetrics>> {
    match system {
        Some(p) => Ok(Some(compute_metrics(f, region, &io::read_system(p)?)?)),
        None => Ok(None),
    }
}

#[derive(Serialize)]
struct L1Report<'a> {
    theta: f64,
    gamma: f64,
    converged: bool,
    iterations: &'a [ReweightRecord],
    restored_entries: usize,
    nnz: usize,
    nnz_center: usize,
    membership_slack: f64,
    metrics: Option<DesignMetrics>,
}

fn sparsify_l1(a: &L1Args) -> Result<ExitCode> {
    let region = load_region(&a.region, a.allow_theta_above_one)?;
    let cfg = ReweightConfig {
        theta: a.theta,
        zeta: a.zeta,
        eps_d: a.eps_d,
        max_iters: a.max_iters,
        reweight_iters: a.reweight_iters,
        truncation_threshold: a.truncation,
        norm: match a.norm {
            NormArg::Spectral => StopNorm::Spectral,
            NormArg::Frobenius => StopNorm::Frobenius,
        },
        ..ReweightConfig::default()
    };
    let (f, hist) = reweighted_l1(&region, &cfg, &ClarabelBackend::default())?;
    io::write_gain(&a.out, &f)?;
    let metrics = verify(a.system.as_deref(), &region, &f)?;
    let report = L1Report {
        theta: a.theta,
        gamma: region.gamma(),
        converged: hist.converged,
        iterations: &hist.records,
        restored_entries: hist.restored_entries,
        nnz: f.nnz(),
        nnz_center: region.center().nnz(),
        membership_slack: region.slack_min_eig(&f, a.theta)?,
        metrics,
    };
    if let Some(r) = &a.report {
        io::write_json(r, &report)?;
    }
    Ok(status(metrics.map(|m| m.verified)))
}

#[derive(Serialize)]
struct GreedyReport<'a> {
    theta: f64,
    gamma: f64,
    criterion: GreedyCriterion,
    steps: &'a [GreedyRecord],
    degenerate: bool,
    exhausted: bool,
    nnz: usize,
    nnz_center: usize,
    membership_slack: f64,
    metrics: Option<DesignMetrics>,
}

fn sparsify_greedy(a: &GreedyArgs) -> Result<ExitCode> {
    let region = load_region(&a.region, a.allow_theta_above_one)?;
    let criterion = match a.criterion {
        CriterionArg::Maxeig => GreedyCriterion::MaxEigOfInverse,
        CriterionArg::Trace => GreedyCriterion::SumEigOfInverse,
        CriterionArg::Logdet => GreedyCriterion::LogDetOfInverse,
    };
    let cfg = greedy::GreedyConfig {
        theta: a.theta,
        criterion,
        power_tol: a.power_tol,
        power_max_iters: a.power_max_iters,
        sparsity_budget: a.budget,
        recompute_period: a.recompute_period,
        ..Default::default()
    };
    let (f, hist) = greedy::run(&region, &cfg)?;
    io::write_gain(&a.out, &f)?;
    let metrics = verify(a.system.as_deref(), &region, &f)?;
    let report = GreedyReport {
        theta: a.theta,
        gamma: region.gamma(),
        criterion,
        steps: &hist.steps,
        degenerate: hist.degenerate,
        exhausted: hist.exhausted,
        nnz: f.nnz(),
        nnz_center: region.center().nnz(),
        membership_slack: region.slack_min_eig(&f, a.theta)?,
        metrics,
    };
    if let Some(r) = &a.report {
        io::write_json(r, &report)?;
    }
    Ok(status(metrics.map(|m| m.verified)))
}

/// Generated plant plus, for the spatial family, its coupling graph.
fn make_plant(family: Family, p: &PlantFlags, seed: u64) -> Result<(System, Option<String>)> {
    match family {
        Family::Gaussian => {
            let cfg = DenseGaussianConfig { n: p.n, m: p.m.unwrap_or(p.n), seed };
            Ok((gen_dense_gaussian(&cfg)?, None))
        }
        Family::Spatial => {
            let cfg = SpatialDecayConfig { n: p.n, alpha: p.alpha, beta: p.beta, r: p.r, bv_scale: p.bv_scale, seed };
            let s = gen_spatial_decay(&cfg)?;
            let edges = io::plant_edges_csv(&s);
            Ok((s.system, Some(edges)))
        }
    }
}

fn gen(a: &GenArgs, seed: u64) -> Result<ExitCode> {
    let (sys, edges) = make_plant(a.family, &a.plant, seed)?;
    io::write_system(&a.out, &sys)?;
    match (&a.edges, edges) {
        (Some(path), Some(csv)) => io::write_text(path, &csv)?,
        (Some(_), None) => return Err(Error::InvalidArgument("edge lists exist only for the spatial family".into())),
        _ => {}
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CaseInfo {
    seed: u64,
    gamma: f64,
    gamma_floor: Option<f64>,
}

#[derive(Serialize)]
struct SweepReport {
    cases: Vec<CaseInfo>,
    rows: Vec<SweepRow>,
    summary: Vec<SweepSummary>,
    failures: usize,
}

fn sweep(a: &SweepArgs, seed: u64) -> Result<ExitCode> {
    let opts = synthesis_options(&a.synthesis);
    let plants: Vec<(u64, System)> = match (&a.system, a.family) {
        (Some(p), _) => vec![(seed, io::read_system(p)?)],
        (None, Some(fam)) => {
            let seeds = if a.seeds.is_empty() { vec![seed] } else { a.seeds.clone() };
            seeds
                .into_iter()
                .map(|s| make_plant(fam, &a.plant, s).map(|(sys, _)| (s, sys)))
                .collect::<Result<_>>()?
        }
        (None, None) => return Err(Error::InvalidArgument("give --system or --family".into())),
    };
    let mut cases = Vec::new();
    let mut infos = Vec::new();
    for (s, sys) in plants {
        let (gamma, floor) = pick_gamma(&sys, a.gamma, &opts)?;
        infos.push(CaseInfo { seed: s, gamma, gamma_floor: floor });
        cases.push(SweepCase { seed: s, system: sys, gamma });
    }
    let methods = a.methods.iter().map(|m| m.parse::<Method>()).collect::<Result<Vec<_>>>()?;
    let cfg = SweepConfig { thetas: a.thetas.clone(), methods, synthesis: opts.clone(), ..SweepConfig::default() };
    let rows = theta_sweep(&cases, &cfg, &backend(&opts))?;
    io::write_text(&a.out, &io::sweep_csv(&rows))?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    let report = SweepReport { cases: infos, summary: summarize(&rows), rows, failures };
    if let Some(r) = &a.report {
        io::write_json(r, &report)?;
    }
    Ok(if failures > 0 { ExitCode::from(VERIFY_FAILED) } else { ExitCode::SUCCESS })
}

#[derive(Serialize)]
struct PerturbReport {
    samples: usize,
    magnitude: f64,
    seed: u64,
    baseline_hinf: f64,
    unstable: usize,
    median_sigma_p: f64,
    quantiles: Vec<(f64, f64)>,
}

fn perturb(a: &PerturbArgs, seed: u64) -> Result<ExitCode> {
    let sys = io::read_system(&a.system)?;
    let f = io::read_gain(&a.gain)?;
    let cfg = PerturbationStudyConfig { magnitude: a.magnitude, samples: a.samples, seed };
    let study = perturbation_study(&sys, &f, &cfg)?;
    if let Some(out) = &a.out {
        io::write_text(out, &io::perturbation_csv(&study, a.theta, &a.method, seed))?;
    }
    let cdf = study.empirical_cdf();
    let quantiles = [0.1, 0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|&q| {
            let k = ((q * cdf.len() as f64).ceil() as usize).clamp(1, cdf.len()) - 1;
            (q, cdf[k].0)
        })
        .collect();
    let report = PerturbReport {
        samples: a.samples,
        magnitude: a.magnitude,
        seed,
        baseline_hinf: study.baseline_hinf,
        unstable: study.unstable,
        median_sigma_p: study.median(),
        quantiles,
    };
    emit(a.report.as_deref(), &report)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct HinfReport {
    hinf: f64,
    converged: bool,
    peak_frequency: f64,
    stable: bool,
    spectral_abscissa: f64,
    grid_hinf: Option<f64>,
}

fn hinf(a: &HinfArgs) -> Result<ExitCode> {
    let sys = io::read_system(&a.system)?;
    let f = io::read_gain(&a.gain)?;
    let cl = close_loop(&sys, &f)?;
    let h = hinf_norm(&cl, a.tol)?;
    let abscissa = spectral_abscissa(&cl.a)?;
    let report = HinfReport {
        hinf: h.value,
        converged: h.converged,
        peak_frequency: h.peak_frequency,
        stable: h.value.is_finite(),
        spectral_abscissa: abscissa,
        grid_hinf: a.grid_points.map(|k| hinf_norm_grid(&cl, &log_grid(1e-4, 1e4, k))),
    };
    emit(a.report.as_deref(), &report)?;
    Ok(ExitCode::SUCCESS)
}
