//! Experiment orchestration: every config kind lowered to seed-parallel
//! runs with deterministic seed-order aggregation, producing in-memory
//! summaries plus artifact files.
//!
//! Seeds run fully independently (no shared mutable state); results are
//! collected in seed order, so outputs do not depend on the worker count.

use crate::chaos::{self, ChaosReport};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::output::{self, Manifest};
use crate::pde::{self, FpOptions, RadialField};
use crate::report::BalanceRow;
use crate::sde::{sample_initial, simulate, InitialDensity};
use crate::stats::{self, DiagnosticsRow, FisherOptions};
use crate::vec3::Vec3;
use crate::weakform::{self, standard_battery, WeakResidualReport};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))
}

/// One seed's share of a simulate ensemble.
pub struct SeedRun {
    pub seed: u64,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub balance: Vec<BalanceRow>,
}

/// Run the ensemble described by a simulate config; optionally persist
/// per-seed diagnostics, the combined balance table, and snapshots.
pub fn run_simulate(
    config: &ExperimentConfig,
    seeds: &[u64],
    out_dir: Option<&Path>,
    workers: usize,
) -> Result<(Vec<SeedRun>, Vec<String>)> {
    let n = single(config.n_values()?, "particles.n")?;
    let epsilon = single(config.epsilon_values()?, "particles.epsilon")?;
    let pool = build_pool(workers)?;
    let runs: Result<Vec<SeedRun>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let params = config.sim_params(n, epsilon, seed)?;
                let out = simulate(&params)?;
                seed_run_from_output(seed, &out, out_dir, config)
            })
            .collect()
    });
    let runs = runs?;
    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        for run in &runs {
            let name = format!("diagnostics_seed{}.csv", run.seed);
            output::write_diagnostics_csv(&dir.join(&name), &run.diagnostics)?;
            files.push(name);
        }
        let mut balance_rows: Vec<Vec<f64>> = Vec::new();
        for run in &runs {
            for b in &run.balance {
                balance_rows.push(vec![
                    b.seed as f64,
                    b.t,
                    b.n as f64,
                    b.energy_mollified,
                    b.work,
                    b.martingale,
                ]);
            }
        }
        output::write_csv(
            &dir.join("balance.csv"),
            "seed,t,n,energy_mollified,work_integral,martingale",
            &balance_rows,
        )?;
        files.push("balance.csv".to_string());
        // snapshot files are written inside seed_run_from_output
        match config.output.snapshot_format.as_str() {
            "csv" => {
                for seed in seeds {
                    files.push(format!("snapshots_seed{seed}.csv"));
                }
            }
            "binary" => {
                for seed in seeds {
                    files.push(format!("snapshots_seed{seed}.bin"));
                }
            }
            _ => {}
        }
    }
    Ok((runs, files))
}

fn seed_run_from_output(
    seed: u64,
    out: &crate::sde::SimulationOutput,
    out_dir: Option<&Path>,
    config: &ExperimentConfig,
) -> Result<SeedRun> {
    let kernel = Kernel::Mollified(out.trajectory.spec);
    let work = weakform::work_series(&out.trajectory, kernel)?;
    let balance: Vec<BalanceRow> = out
        .diagnostics
        .iter()
        .zip(&work)
        .map(|(row, w)| BalanceRow {
            seed,
            t: row.t,
            n: out.trajectory.n(),
            energy_mollified: row.energy_mollified,
            work: *w,
            martingale: row.martingale,
        })
        .collect();
    if let Some(dir) = out_dir {
        match config.output.snapshot_format.as_str() {
            "csv" => output::write_snapshots_csv(
                &dir.join(format!("snapshots_seed{seed}.csv")),
                &out.trajectory.times,
                &out.trajectory.positions,
            )?,
            "binary" => output::write_snapshots_binary(
                &dir.join(format!("snapshots_seed{seed}.bin")),
                &out.trajectory.times,
                &out.trajectory.positions,
            )?,
            _ => {}
        }
    }
    Ok(SeedRun {
        seed,
        diagnostics: out.diagnostics.clone(),
        balance,
    })
}

/// One (N, ε, seed) cell of a scan: residual reports for the full test
/// battery with both kernels, plus the terminal cloud for chaos metrics.
pub struct LadderPoint {
    pub n: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub t_final: f64,
    pub reports_mollified: Vec<WeakResidualReport>,
    pub reports_exact: Vec<WeakResidualReport>,
    pub terminal_positions: Vec<Vec3>,
}

/// Simulate the full (N-ladder × ε-ladder × seeds) product and evaluate the
/// weak-form battery on each trajectory. Trajectories are dropped as soon
/// as their derived quantities are extracted.
pub fn ladder_scan(
    config: &ExperimentConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<LadderPoint>> {
    let battery = standard_battery(config.weakform.battery_scale);
    let mut cells = Vec::new();
    for &n in &config.n_values()? {
        for &epsilon in &config.epsilon_values()? {
            for &seed in seeds {
                cells.push((n, epsilon, seed));
            }
        }
    }
    let pool = build_pool(workers)?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, epsilon, seed)| {
                let params = config.sim_params(n, epsilon, seed)?;
                let out = simulate(&params)?;
                let trajectory = &out.trajectory;
                let t = *trajectory.times.last().unwrap();
                let own = Kernel::Mollified(trajectory.spec);
                let mut reports_mollified = Vec::with_capacity(battery.len());
                let mut reports_exact = Vec::with_capacity(battery.len());
                for phi in &battery {
                    reports_mollified.push(weakform::weak_residual(trajectory, phi, own, t)?);
                    reports_exact
                        .push(weakform::weak_residual(trajectory, phi, Kernel::Exact, t)?);
                }
                Ok(LadderPoint {
                    n,
                    epsilon,
                    seed,
                    t_final: t,
                    reports_mollified,
                    reports_exact,
                    terminal_positions: trajectory.positions.last().unwrap().clone(),
                })
            })
            .collect()
    })
}

/// Persist a ladder scan as JSONL residual rows plus a per-(N, ε) summary.
pub fn write_weakform_outputs(points: &[LadderPoint], dir: &Path) -> Result<Vec<String>> {
    let jsonl = dir.join("weakform.jsonl");
    let _ = std::fs::remove_file(&jsonl);
    for point in points {
        output::append_jsonl(&jsonl, &point.reports_mollified)?;
        output::append_jsonl(&jsonl, &point.reports_exact)?;
    }
    let mut groups: std::collections::BTreeMap<(usize, u64), (Vec<f64>, Vec<f64>)> =
        std::collections::BTreeMap::new();
    for point in points {
        let entry = groups
            .entry((point.n, point.epsilon.to_bits()))
            .or_default();
        for r in &point.reports_mollified {
            entry.0.push(r.value.abs());
        }
        for r in &point.reports_exact {
            entry.1.push(r.mollification_gap_part.abs());
        }
    }
    let rows: Vec<Vec<f64>> = groups
        .iter()
        .map(|(&(n, eps_bits), (values, gaps))| {
            vec![
                n as f64,
                f64::from_bits(eps_bits),
                crate::report::median(values),
                crate::report::median(gaps),
            ]
        })
        .collect();
    output::write_csv(
        &dir.join("weakform_summary.csv"),
        "n,epsilon,median_abs_residual,median_abs_gap",
        &rows,
    )?;
    Ok(vec![
        "weakform.jsonl".to_string(),
        "weakform_summary.csv".to_string(),
    ])
}

/// Reference PDE solution for the config's initial density, on the
/// automatic truncation radius r_cloud + 8√(2T) unless overridden.
pub fn reference_solution(config: &ExperimentConfig) -> Result<RadialField> {
    let rho0 = config.initial_density()?;
    let t_final = config.particles.t_final;
    let r_max = if config.pde.r_max > 0.0 {
        config.pde.r_max
    } else {
        rho0.support_radius() + 8.0 * (2.0 * t_final).sqrt()
    };
    let density = rho0.radial_density();
    let field0 = RadialField::discretize(&*density, r_max, config.pde.cells, true)?;
    let result = pde::solve(&field0, t_final, config.pde.outputs, &FpOptions::default())?;
    Ok(result.series.into_iter().last().unwrap())
}

/// Chaos metrics per ladder rung against a reference radial density.
pub fn chaos_reports(
    points: &[LadderPoint],
    reference: &RadialField,
    config: &ExperimentConfig,
) -> Result<Vec<ChaosReport>> {
    let battery = standard_battery(config.weakform.battery_scale);
    let mut by_n: std::collections::BTreeMap<usize, Vec<&LadderPoint>> =
        std::collections::BTreeMap::new();
    for p in points {
        by_n.entry(p.n).or_default().push(p);
    }
    let mut reports = Vec::new();
    for (n, group) in by_n {
        let mut ks = Vec::new();
        let mut w1 = Vec::new();
        for p in &group {
            ks.push(chaos::radial_ks(&p.terminal_positions, reference)?);
            w1.push(chaos::sliced_w1(
                &p.terminal_positions,
                reference,
                config.weakform.directions,
                0xd1_5c,
            )?);
        }
        let clouds: Vec<Vec<Vec3>> = group
            .iter()
            .map(|p| p.terminal_positions.clone())
            .collect();
        let mut pair_cov = Vec::new();
        for phi in &battery {
            pair_cov.push((phi.id(), chaos::pair_covariance(&clouds, phi)?));
        }
        reports.push(ChaosReport {
            n,
            t: group[0].t_final,
            radial_ks: crate::report::median(&ks),
            sliced_w1: crate::report::median(&w1),
            pair_cov,
            seeds_used: group.len(),
        });
    }
    Ok(reports)
}

pub fn write_chaos_outputs(reports: &[ChaosReport], dir: &Path) -> Result<Vec<String>> {
    let jsonl = dir.join("chaos.jsonl");
    let _ = std::fs::remove_file(&jsonl);
    output::append_jsonl(&jsonl, reports)?;
    let rows: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| {
            let max_cov = r
                .pair_cov
                .iter()
                .map(|(_, v)| v.abs())
                .fold(0.0f64, f64::max);
            let med_cov = crate::report::median(
                &r.pair_cov.iter().map(|(_, v)| v.abs()).collect::<Vec<_>>(),
            );
            vec![
                r.n as f64,
                r.t,
                r.radial_ks,
                r.sliced_w1,
                med_cov,
                max_cov,
                r.seeds_used as f64,
            ]
        })
        .collect();
    output::write_csv(
        &dir.join("chaos_summary.csv"),
        "n,t,median_radial_ks,median_sliced_w1,median_abs_pair_cov,max_abs_pair_cov,seeds",
        &rows,
    )?;
    Ok(vec!["chaos.jsonl".to_string(), "chaos_summary.csv".to_string()])
}

/// Collision-probability scan over the ε ladder: (ε, hits, trials) with the
/// stopping threshold equal to the dynamics ε.
pub fn run_noncollision(
    config: &ExperimentConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<(f64, usize, usize)>> {
    let n = single(config.n_values()?, "particles.n")?;
    let pool = build_pool(workers)?;
    let mut rows = Vec::new();
    for &epsilon in &config.epsilon_values()? {
        let hits: Result<Vec<bool>> = pool.install(|| {
            seeds
                .par_iter()
                .map(|&seed| {
                    let mut params = config.sim_params(n, epsilon, seed)?;
                    params.track_min_every_step = true;
                    params.diagnostics.entropy = false;
                    params.diagnostics.fisher = false;
                    let out = simulate(&params)?;
                    Ok(out.stopping_time(epsilon).is_some())
                })
                .collect()
        });
        let hits = hits?;
        let count = hits.iter().filter(|h| **h).count();
        rows.push((epsilon, count, seeds.len()));
    }
    Ok(rows)
}

pub fn write_noncollision_outputs(rows: &[(f64, usize, usize)], dir: &Path) -> Result<Vec<String>> {
    let data: Vec<Vec<f64>> = rows
        .iter()
        .map(|&(eps, hits, trials)| {
            let p = hits as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            vec![eps, trials as f64, hits as f64, p, se]
        })
        .collect();
    output::write_csv(
        &dir.join("noncollision.csv"),
        "epsilon,trials,hits,p_hat,se",
        &data,
    )?;
    Ok(vec!["noncollision.csv".to_string()])
}

/// Radial PDE solve with functional series.
pub fn run_pde(config: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let rho0 = config.initial_density()?;
    let t_final = config.particles.t_final;
    let r_max = if config.pde.r_max > 0.0 {
        config.pde.r_max
    } else {
        rho0.support_radius() + 8.0 * (2.0 * t_final).sqrt()
    };
    let density = rho0.radial_density();
    let field0 = RadialField::discretize(&*density, r_max, config.pde.cells, true)?;
    let result = pde::solve(&field0, t_final, config.pde.outputs, &FpOptions::default())?;
    output::write_radial_series_csv(&dir.join("pde_series.csv"), &result.series)?;
    let rows: Vec<Vec<f64>> = result
        .series
        .iter()
        .map(|f| {
            vec![
                f.t,
                f.mass(),
                pde::continuum_energy(f),
                f.entropy(),
                f.fisher(),
                f.l2_squared(),
                f.max_value(),
            ]
        })
        .collect();
    output::write_csv(
        &dir.join("pde_functionals.csv"),
        "t,mass,energy,entropy,fisher,l2_squared,sup",
        &rows,
    )?;
    Ok(vec![
        "pde_series.csv".to_string(),
        "pde_functionals.csv".to_string(),
    ])
}

#[derive(Debug, Clone)]
pub struct CalibrationRow {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    /// interpreted as relative when target ≠ 0, absolute otherwise
    pub tolerance: f64,
    pub pass: bool,
}

/// Closed-form estimator calibration battery (entropy, Fisher, moments).
pub fn run_calibration() -> Result<Vec<CalibrationRow>> {
    let n = 100_000;
    let mut rows = Vec::new();
    let mut push = |name: &str, estimate: f64, target: f64, tolerance: f64| {
        let err = if target != 0.0 {
            ((estimate - target) / target).abs()
        } else {
            estimate.abs()
        };
        rows.push(CalibrationRow {
            name: name.to_string(),
            estimate,
            target,
            tolerance,
            pass: err <= tolerance,
        });
    };

    let gauss1 = sample_initial(&InitialDensity::Gaussian { sigma: 1.0 }, n, 9001)?.positions;
    let gauss2 = sample_initial(&InitialDensity::Gaussian { sigma: 2.0 }, n, 9002)?.positions;
    let ball = sample_initial(&InitialDensity::UniformBall { radius: 1.0 }, n, 9003)?.positions;

    let h_target = -1.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    push(
        "entropy_gaussian",
        stats::entropy_knn(&gauss1, 4, false)?,
        h_target,
        0.02,
    );

    let rng = crate::rng::Philox::new(9004);
    let cube: Vec<Vec3> = (0..n as u64)
        .map(|i| {
            let a = rng.uniforms2(crate::rng::Domain::InitialSample, i, 0, 0);
            let b = rng.uniforms2(crate::rng::Domain::InitialSample, i, 0, 1);
            [a[0], a[1], b[0]]
        })
        .collect();
    push(
        "entropy_uniform_cube",
        stats::entropy_knn(&cube, 4, false)?,
        0.0,
        0.05,
    );

    push(
        "fisher_gaussian_sigma1",
        stats::fisher_kde(&gauss1, &FisherOptions::default())?,
        3.0,
        0.10,
    );
    push(
        "fisher_gaussian_sigma2",
        stats::fisher_kde(&gauss2, &FisherOptions::default())?,
        0.75,
        0.10,
    );
    push("second_moment_gaussian", stats::second_moment(&gauss1), 3.0, 0.01);
    push("second_moment_ball", stats::second_moment(&ball), 0.6, 0.01);
    Ok(rows)
}

pub fn write_calibration_outputs(rows: &[CalibrationRow], dir: &Path) -> Result<Vec<String>> {
    use std::io::Write;
    let path = dir.join("calibration.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(w, "name,estimate,target,tolerance,pass")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.name,
            output::format_f64(row.estimate),
            output::format_f64(row.target),
            output::format_f64(row.tolerance),
            row.pass as u8
        )?;
    }
    w.flush()?;
    Ok(vec!["calibration.csv".to_string()])
}

/// Execute a validated config end to end, writing artifacts and a manifest.
pub fn run(
    config: &ExperimentConfig,
    config_text: &str,
    out_dir: &Path,
    workers: usize,
    seed_offset: u64,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let seeds = config.seed_list(seed_offset);
    let mut files = match config.kind {
        ExperimentKind::Simulate => {
            let (_, files) = run_simulate(config, &seeds, Some(out_dir), workers)?;
            files
        }
        ExperimentKind::PdeSolve => run_pde(config, out_dir)?,
        ExperimentKind::WeakformScan => {
            let points = ladder_scan(config, &seeds, workers)?;
            write_weakform_outputs(&points, out_dir)?
        }
        ExperimentKind::ChaosScan => {
            let points = ladder_scan(config, &seeds, workers)?;
            let reference = reference_solution(config)?;
            let reports = chaos_reports(&points, &reference, config)?;
            let mut files = write_chaos_outputs(&reports, out_dir)?;
            files.extend(write_weakform_outputs(&points, out_dir)?);
            files
        }
        ExperimentKind::NoncollisionScan => {
            let rows = run_noncollision(config, &seeds, workers)?;
            write_noncollision_outputs(&rows, out_dir)?
        }
        ExperimentKind::CalibrateEstimators => {
            let rows = run_calibration()?;
            write_calibration_outputs(&rows, out_dir)?
        }
    };
    files.sort();
    let manifest = Manifest {
        schema_version: crate::config::SCHEMA_VERSION,
        kind: config.kind.as_str().to_string(),
        config_hash: output::sha256_hex(config_text.as_bytes()),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_seconds: start.elapsed().as_secs_f64(),
        seeds,
        files,
    };
    output::write_manifest(out_dir, &manifest)
}

fn single<T: Copy>(values: Vec<T>, name: &str) -> Result<T> {
    if values.len() != 1 {
        return Err(Error::Config(format!(
            "{name}: this experiment kind takes a single value, got {}",
            values.len()
        )));
    }
    Ok(values[0])
}
