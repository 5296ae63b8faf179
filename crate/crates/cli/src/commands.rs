//! Subcommand implementations. Each writes its artifacts under the output
//! directory and returns the lines of a short text summary.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use noisespec::bandwidth::{
    compositions, cpmg_family, degeneracy_check, random_search, set_bandwidth, Objective, SearchConfig,
};
use noisespec::comb_inversion::{
    assemble_classical, assemble_gaussian, assemble_spinboson, enumerate_principal, solve, Branch, DesignMatrix,
    PrincipalDomainSet, ReconstructionResult, SolveOptions, SymmetryGroup, Truncation, UnknownKind,
};
use noisespec::experiments::{
    compare, mode_design, simulate_spinboson, simulate_square, spinboson_decay_comparison, Comparison, DataMode,
};
use noisespec::sequences::{SequenceSet, TimingConfig};
use noisespec::simulate::{
    monte_carlo_free_evolution, monte_carlo_observables, predict_free_evolution, read_observables_csv,
    square_noise_grid, write_observables_csv, FreeEvolutionPrediction, Method, MonteCarloOptions, ObservableRecord,
    SquareNoiseTimeDomain, StdErr,
};
use noisespec::spectrum::{Bispectrum, Psd};

use crate::config::{ConfigError, ExperimentConfig, Noise, SequenceSource, SimulationMethod};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core { context: String, source: noisespec::Error },
    Io(String),
}

impl CliError {
    /// 2 for anything the user can fix in the config or inputs, 3 for
    /// numerical failures downstream, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        use noisespec::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core { source, .. } => match source {
                E::QuadratureNonConvergence(_)
                | E::Aliasing { .. }
                | E::Underdetermined { .. }
                | E::RankDeficient { .. }
                | E::NoiseFloor { .. }
                | E::Infeasible(_) => 3,
                E::Io(_) => 1,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Core { context, source } => write!(f, "{context}: {source}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

trait Context<T> {
    fn context(self, what: &str) -> Result<T>;
}

impl<T> Context<T> for noisespec::Result<T> {
    fn context(self, what: &str) -> Result<T> {
        self.map_err(|source| CliError::Core {
            context: what.to_string(),
            source,
        })
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = out.join(name);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Sequence set of the config; searches report the design condition number.
pub fn build_set(cfg: &ExperimentConfig) -> Result<(SequenceSet, Option<f64>)> {
    let t = &cfg.timing;
    let m = t.repetitions;
    match cfg.sequences()? {
        SequenceSource::List(descs) => {
            let delta = t.delta.unwrap_or_default();
            let seqs = descs
                .iter()
                .map(|d| d.build(delta, t.tau).context(&format!("sequence `{}`", d.label)))
                .collect::<Result<Vec<_>>>()?;
            Ok((SequenceSet::new(seqs, m).context("sequence set")?, None))
        }
        SequenceSource::Search(s) => {
            let timing =
                TimingConfig::new(t.delta.unwrap_or_default(), t.tau, t.q.unwrap_or_default()).context("timing")?;
            let rec = cfg.reconstruction()?;
            let result = random_search(&SearchConfig {
                timing,
                partitions: compositions(timing.q(), s.max_parts, s.granularity),
                max_order: s.max_order,
                count: s.count,
                radius: rec.radius as u64,
                iterations: s.iterations,
                seed: cfg.seed,
                repetitions: m,
                objective: objective(cfg)?,
            })
            .context("sequence search")?;
            Ok((result.set, Some(result.condition)))
        }
        SequenceSource::CpmgFamily(n) => Ok((cpmg_family(*n, t.tau, m).context("CPMG family")?, None)),
    }
}

fn objective(cfg: &ExperimentConfig) -> Result<Objective> {
    let rec = cfg.reconstruction()?;
    Ok(match &cfg.noise {
        Some(Noise::Classical(model)) if model.mixing() != 0.0 => match rec.bispectrum_radius {
            Some(r) => Objective::Classical { bispectrum_radius: r },
            None => Objective::OrderOne,
        },
        Some(Noise::SpinBoson(model)) => Objective::SpinBoson {
            branch: spin_branch(model),
            fourth_radius: rec.trispectrum_radius,
        },
        _ => Objective::OrderOne,
    })
}

fn spin_branch(model: &noisespec::spinboson::SpinBosonModel) -> Branch {
    if model.state.is_separable() {
        Branch::SpinBosonSeparable
    } else {
        Branch::SpinBosonEntangled
    }
}

/// Unknowns of the inversion, chosen by the noise model.
enum Plan {
    Gaussian(PrincipalDomainSet),
    Classical([PrincipalDomainSet; 2]),
    SpinBoson {
        radius: i64,
        fourth: PrincipalDomainSet,
        branch: Branch,
    },
}

fn plan(cfg: &ExperimentConfig) -> Result<Plan> {
    let rec = cfg.reconstruction()?;
    let order_one =
        enumerate_principal(1, rec.radius, SymmetryGroup::Polyspectrum, Truncation::Box).context("PSD domain")?;
    Ok(match &cfg.noise {
        Some(Noise::Classical(model)) if model.mixing() != 0.0 => {
            let r = rec.bispectrum_radius.ok_or_else(|| {
                ConfigError::new(
                    "reconstruction.bispectrum_radius",
                    "is required for non-Gaussian classical noise",
                )
            })?;
            let two = enumerate_principal(2, r, SymmetryGroup::Polyspectrum, rec.bispectrum_shape)
                .context("bispectrum domain")?;
            Plan::Classical([order_one, two])
        }
        Some(Noise::SpinBoson(model)) => {
            let branch = spin_branch(model);
            let fourth = match branch {
                Branch::SpinBosonSeparable => {
                    enumerate_principal(1, rec.trispectrum_radius, SymmetryGroup::Polyspectrum, Truncation::Box)
                }
                _ => enumerate_principal(2, rec.trispectrum_radius, SymmetryGroup::Dihedral, Truncation::Box),
            }
            .context("trispectrum domain")?;
            Plan::SpinBoson {
                radius: rec.radius,
                fourth,
                branch,
            }
        }
        _ => Plan::Gaussian(order_one),
    })
}

fn assemble(plan: &Plan, set: &SequenceSet, mode: DataMode) -> Result<DesignMatrix> {
    match plan {
        Plan::Gaussian(d) => assemble_gaussian(set, d),
        Plan::Classical(ds) => assemble_classical(set, 1, ds),
        Plan::SpinBoson { radius, fourth, branch } => {
            mode_design(set, mode, |s| assemble_spinboson(s, *radius, fourth, *branch))
        }
    }
    .context("design matrix")
}

pub fn design(cfg: &ExperimentConfig, out: &Path) -> Result<(SequenceSet, Vec<String>)> {
    let (set, condition) = build_set(cfg)?;
    let mut w = create(out, "sequences.txt")?;
    writeln!(w, "# {}: {} sequences, M = {}", cfg.name, set.len(), set.repetitions()).map_err(io)?;
    for s in set.sequences() {
        match s.description() {
            Some(d) => writeln!(w, "{d}"),
            None => writeln!(
                w,
                "# {} pulses at grid points {:?} (q = {})",
                s.label(),
                s.pulses(),
                s.timing().q()
            ),
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    for s in set.sequences() {
        let f = create(out, &format!("switching/{}.csv", file_stem(s.label())))?;
        s.write_switching_csv(f).context("switching function")?;
    }
    let mut lines = vec![format!(
        "{} sequences on T = {:.6e} s (q = {}), M = {}",
        set.len(),
        set.timing().cycle(),
        set.timing().q(),
        set.repetitions()
    )];
    if let Some(c) = condition {
        lines.push(format!("search condition number {c:.4e}"));
    }
    if cfg.reconstruction.is_some() {
        let rec = cfg.reconstruction()?;
        let d = assemble(&plan(cfg)?, &set, rec.data)?;
        d.write_csv(create(out, "design.csv")?).context("design CSV")?;
        lines.push(format!("design matrix {} x {}", d.rows.len(), d.ncols()));
    }
    Ok((set, lines))
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn simulate(cfg: &ExperimentConfig, set: &SequenceSet, out: &Path) -> Result<Vec<ObservableRecord>> {
    let mode = cfg.reconstruction.as_ref().map(|r| r.data).unwrap_or_default();
    let records = match (cfg.noise()?, cfg.simulation.method) {
        (Noise::Classical(model), SimulationMethod::Quadrature) => {
            let grid = if model.mixing() == 0.0 {
                None
            } else {
                let nodes = cfg.reconstruction.as_ref().map(|r| r.grid_nodes).unwrap_or(24);
                Some(square_noise_grid(model, set.timing().cycle(), nodes).context("bispectrum grid")?)
            };
            simulate_square(model, set, grid.as_ref(), mode).context("quadrature simulation")?
        }
        (Noise::Classical(model), SimulationMethod::MonteCarlo) => {
            monte_carlo_records(model, set, mode, cfg.simulation.trajectories, cfg.seed)?
        }
        (Noise::SpinBoson(model), SimulationMethod::Quadrature) => {
            simulate_spinboson(model, set, mode).context("spin-boson simulation")?
        }
        (Noise::SpinBoson(_), SimulationMethod::MonteCarlo) => {
            return Err(
                ConfigError::new("simulation.method", "Monte Carlo is available for classical noise only").into(),
            )
        }
    };
    write_observables_csv(&records, create(out, "observables.csv")?).context("observables CSV")?;
    Ok(records)
}

/// Monte Carlo decay parameters; each sequence (and each repetition count in
/// differential mode) gets its own seed stream.
fn monte_carlo_records(
    model: &noisespec::classical_noise::SquareNoiseModel,
    set: &SequenceSet,
    mode: DataMode,
    trajectories: usize,
    seed: u64,
) -> Result<Vec<ObservableRecord>> {
    let m = set.repetitions();
    let mut out = Vec::with_capacity(set.len());
    for (i, s) in set.sequences().iter().enumerate() {
        let base = seed.wrapping_mul(1_000_003).wrapping_add(2 * i as u64);
        let opts = |k: u64| MonteCarloOptions::new(trajectories, base + k);
        let one = monte_carlo_observables(model, s, m, opts(0)).context("Monte Carlo")?;
        let mut rec = one.clone();
        if mode == DataMode::Differential {
            let two = monte_carlo_observables(model, s, 2 * m, opts(1)).context("Monte Carlo")?;
            rec = ObservableRecord::new(s.label(), m, two.chi - one.chi, two.phi - one.phi, Method::MonteCarlo)
                .context("Monte Carlo")?;
            rec.stderr = match (one.stderr, two.stderr) {
                (Some(a), Some(b)) => Some(StdErr {
                    chi: a.chi.hypot(b.chi),
                    phi: a.phi.hypot(b.phi),
                }),
                _ => None,
            };
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn reconstruct(
    cfg: &ExperimentConfig,
    set: &SequenceSet,
    records: &[ObservableRecord],
    out: &Path,
) -> Result<(ReconstructionResult, Vec<String>)> {
    let rec_cfg = cfg.reconstruction()?;
    let design = assemble(&plan(cfg)?, set, rec_cfg.data)?;
    let b = design
        .measurements(records)
        .context("matching observables to sequences")?;
    let opts = SolveOptions {
        truncation: rec_cfg.cutoff,
        ..SolveOptions::default()
    };
    let recon = solve(&design, &b, &opts).context("inversion")?;
    recon
        .write_csv(create(out, "reconstruction.csv")?)
        .context("reconstruction CSV")?;

    let comparisons: Vec<(UnknownKind, Vec<Comparison>)> = match &cfg.noise {
        Some(Noise::Classical(model)) => vec![
            (
                UnknownKind::Polyspectrum(1),
                compare(&recon, UnknownKind::Polyspectrum(1), |w| model.psd(w[0])),
            ),
            (
                UnknownKind::Polyspectrum(2),
                compare(&recon, UnknownKind::Polyspectrum(2), |w| model.bispectrum(w[0], w[1])),
            ),
        ],
        Some(Noise::SpinBoson(model)) => vec![
            (
                UnknownKind::EffectiveSpectrum,
                compare(&recon, UnknownKind::EffectiveSpectrum, |w| {
                    model.effective_spectrum(w[0])
                }),
            ),
            (
                UnknownKind::EffectiveTrispectrum,
                compare(&recon, UnknownKind::EffectiveTrispectrum, |w| {
                    model.effective_trispectrum(w[0], w[1])
                }),
            ),
            (
                UnknownKind::SeparableTrispectrum,
                compare(&recon, UnknownKind::SeparableTrispectrum, |w| {
                    model.separable_trispectrum(w[0])
                }),
            ),
        ],
        None => Vec::new(),
    };
    let comparisons: Vec<_> = comparisons.into_iter().filter(|(_, c)| !c.is_empty()).collect();

    let mut lines = vec![format!(
        "{} unknowns from {} rows, rank {}, condition {:.4e}, residual {:.3e}",
        recon.estimates.len(),
        design.rows.len(),
        recon.rank,
        recon.condition,
        recon.residual
    )];
    if !comparisons.is_empty() {
        let mut w = csv::Writer::from_writer(create(out, "comparison.csv")?);
        w.write_record(["kind", "indices", "frequencies", "estimate", "truth", "relative_error"])
            .map_err(|e| CliError::Io(e.to_string()))?;
        for (kind, cmp) in &comparisons {
            for c in cmp {
                let join = |v: Vec<String>| v.join(";");
                w.write_record([
                    kind.name(),
                    join(c.indices.iter().map(|i| i.to_string()).collect()),
                    join(c.omega.iter().map(|f| format!("{f:e}")).collect()),
                    format!("{:e}", c.estimate),
                    format!("{:e}", c.truth),
                    format!("{:e}", c.relative_error()),
                ])
                .map_err(|e| CliError::Io(e.to_string()))?;
            }
            let (worst, n) = noisespec::experiments::worst_above(cmp, 0.1);
            lines.push(format!(
                "{}: worst relative error {:.3}% over {n} points at >= 10% of peak",
                kind.name(),
                100.0 * worst
            ));
        }
        w.flush().map_err(io)?;
    }
    Ok((recon, lines))
}

pub fn read_records(path: &Path) -> Result<Vec<ObservableRecord>> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_observables_csv(f).context(&format!("reading {}", path.display()))
}

pub fn read_reconstruction(cfg: &ExperimentConfig, set: &SequenceSet, path: &Path) -> Result<ReconstructionResult> {
    let branch = match &cfg.noise {
        Some(Noise::SpinBoson(m)) => spin_branch(m),
        _ => Branch::Classical,
    };
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ReconstructionResult::read_csv(f, branch, set.timing().cycle(), set.repetitions())
        .context(&format!("reading {}", path.display()))
}

/// Free-evolution prediction plus the oracle curves the model allows.
pub fn predict(cfg: &ExperimentConfig, recon: &ReconstructionResult, out: &Path) -> Result<Vec<String>> {
    let p = cfg.prediction()?;
    let pred = predict_free_evolution(recon, p.step, p.count).context("prediction")?;
    pred.write_csv(create(out, "prediction.csv")?)
        .context("prediction CSV")?;
    let mut lines = vec![format!(
        "predicted {} times up to {:.4e} s",
        pred.times.len(),
        pred.times.last().copied().unwrap_or(0.0)
    )];
    match &cfg.noise {
        Some(Noise::Classical(model)) => lines.extend(classical_oracle(cfg, model, &pred, out)?),
        Some(Noise::SpinBoson(model)) => {
            let cmp = spinboson_decay_comparison(model, recon, p.step, p.count).context("exact mixture decay")?;
            let mut w = csv::Writer::from_writer(create(out, "oracle.csv")?);
            w.write_record(["t", "chi_predicted", "chi_gaussian", "chi_exact", "cumulant_ratio"])
                .map_err(|e| CliError::Io(e.to_string()))?;
            for i in 0..cmp.times.len() {
                w.write_record([
                    format!("{:e}", cmp.times[i]),
                    format!("{:e}", cmp.predicted[i]),
                    format!("{:e}", cmp.gaussian[i]),
                    format!("{:e}", cmp.exact[i]),
                    format!("{:e}", cmp.cumulant_ratio[i]),
                ])
                .map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush().map_err(io)?;
            let show = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{:.4e} s", t));
            lines.push(format!(
                "5% failure vs exact mixture: with fourth order {}, second order only {}",
                show(cmp.non_gaussian_failure(0.05)),
                show(cmp.gaussian_failure(0.05))
            ));
        }
        None => {}
    }
    Ok(lines)
}

fn classical_oracle(
    cfg: &ExperimentConfig,
    model: &noisespec::classical_noise::SquareNoiseModel,
    pred: &FreeEvolutionPrediction,
    out: &Path,
) -> Result<Vec<String>> {
    let p = cfg.prediction()?;
    let horizon = p.count as f64 * p.step;
    let engine = SquareNoiseTimeDomain::new(model, horizon).context("time-domain oracle")?;
    let third = model.mixing() == 0.0 || model.mixing() == 1.0;
    let mc = if p.trajectories > 0 {
        monte_carlo_free_evolution(model, p.step, p.count, MonteCarloOptions::new(p.trajectories, cfg.seed))
            .context("Monte Carlo oracle")?
    } else {
        Vec::new()
    };
    let mut w = csv::Writer::from_writer(create(out, "oracle.csv")?);
    w.write_record([
        "t",
        "chi_predicted",
        "phi_predicted",
        "chi_quadrature",
        "phi_quadrature",
        "chi_mc",
        "phi_mc",
        "chi_stderr",
        "phi_stderr",
    ])
    .map_err(|e| CliError::Io(e.to_string()))?;
    let mut worst_chi: f64 = 0.0;
    let mut within = 0;
    for i in 1..pred.times.len() {
        let t = pred.times[i];
        let chi_q = 0.5 * engine.upsilon2_free(t).context("oracle")?;
        let phi_q = if third {
            -engine.upsilon3_free(t).context("oracle")? / 6.0
        } else {
            f64::NAN
        };
        worst_chi = worst_chi.max(((pred.chi[i] - chi_q) / chi_q).abs());
        let mut row = vec![
            format!("{t:e}"),
            format!("{:e}", pred.chi[i]),
            format!("{:e}", pred.phi[i]),
            format!("{chi_q:e}"),
            if third { format!("{phi_q:e}") } else { String::new() },
        ];
        match mc.get(i - 1) {
            Some((_, r)) => {
                let se = r.stderr.unwrap_or(StdErr { chi: 0.0, phi: 0.0 });
                if (pred.chi[i] - r.chi).abs() <= 3.0 * se.chi && (pred.phi[i] - r.phi).abs() <= 3.0 * se.phi {
                    within += 1;
                }
                row.extend([
                    format!("{:e}", r.chi),
                    format!("{:e}", r.phi),
                    format!("{:e}", se.chi),
                    format!("{:e}", se.phi),
                ]);
            }
            None => row.extend([String::new(), String::new(), String::new(), String::new()]),
        }
        w.write_record(&row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(io)?;
    let mut lines = vec![format!(
        "largest chi deviation from second-order quadrature {:.3}%",
        100.0 * worst_chi
    )];
    if !mc.is_empty() {
        lines.push(format!(
            "prediction within 3 SE of Monte Carlo at {within}/{} times ({} trajectories)",
            mc.len(),
            p.trajectories
        ));
    }
    Ok(lines)
}

pub fn bandwidth(cfg: &ExperimentConfig, set: &SequenceSet, out: &Path) -> Result<Vec<String>> {
    let report = set_bandwidth(set);
    report
        .write_csv(create(out, "bandwidth.csv")?)
        .context("bandwidth CSV")?;
    let radius = cfg
        .reconstruction
        .as_ref()
        .map(|r| r.radius as u64)
        .unwrap_or(report.q_set / 2);
    let d = degeneracy_check(set, radius);
    let tau = set.timing().tau();
    let mut lines = vec![
        format!(
            "grid delta = {:.6e} s, tau = {:.6e} s, T = {:.6e} s",
            report.delta,
            tau,
            report.cycle()
        ),
        format!(
            "set switching period: dt_P = {:.6e} s = {:.6} tau ({} grid units), q_P = {}",
            report.delta_t,
            report.delta_t / tau,
            report.grid,
            report.q_set
        ),
        format!(
            "omega_max = pi/dt_P = {:.6e} rad/s = {:.4} pi/tau{}",
            report.omega_max,
            report.omega_max * tau / std::f64::consts::PI,
            if report.saturated {
                " (saturated at pi/delta)"
            } else {
                ""
            }
        ),
        format!(
            "practical limit: harmonic {} at {:.6e} rad/s = {:.4} pi/tau",
            report.practical_harmonic,
            report.practical_omega,
            report.practical_omega * tau / std::f64::consts::PI
        ),
        format!(
            "harmonics 0..={radius}: rank {}/{}, condition {:.4e}",
            d.rank,
            d.columns.len(),
            d.condition
        ),
    ];
    if d.flagged.is_empty() {
        lines.push("no harmonic flagged".into());
    } else {
        lines.push(format!("flagged harmonics: {}", ranges(&d.flagged)));
    }
    let mut w = csv::Writer::from_writer(create(out, "degeneracy.csv")?);
    w.write_record(["harmonic", "mirror", "flagged"])
        .map_err(|e| CliError::Io(e.to_string()))?;
    for &k in &d.columns {
        let mirror = d
            .pairs
            .iter()
            .find(|p| p.0 == k)
            .map(|p| p.1.to_string())
            .unwrap_or_default();
        w.write_record([k.to_string(), mirror, d.flagged.contains(&k).to_string()])
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(io)?;
    let mut f = create(out, "bandwidth.txt")?;
    for l in &lines {
        writeln!(f, "{l}").map_err(io)?;
    }
    f.flush().map_err(io)?;
    Ok(lines)
}

/// `[9, 10, 11, 14]` as `9..=11, 14`.
fn ranges(v: &[u64]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[j] + 1 {
            j += 1;
        }
        parts.push(if i == j {
            v[i].to_string()
        } else {
            format!("{}..={}", v[i], v[j])
        });
        i = j + 1;
    }
    parts.join(", ")
}

pub fn write_summary(out: &Path, sections: &[(&str, Vec<String>)]) -> Result<PathBuf> {
    let path = out.join("summary.txt");
    let mut f = create(out, "summary.txt")?;
    for (title, lines) in sections {
        writeln!(f, "[{title}]").map_err(io)?;
        for l in lines {
            writeln!(f, "{l}").map_err(io)?;
        }
    }
    f.flush().map_err(io)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_collapse_runs() {
        assert_eq!(ranges(&[9, 10, 11, 14, 16, 17]), "9..=11, 14, 16..=17");
        assert_eq!(ranges(&[]), "");
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("16:1+48:2"), "16_1_48_2");
    }

    #[test]
    fn exit_codes_split_validation_from_numerics() {
        let cfg = CliError::Config(ConfigError::new("timing.tau", "is required"));
        assert_eq!(cfg.exit_code(), 2);
        let bad = CliError::Core {
            context: "x".into(),
            source: noisespec::Error::InvalidTiming("t".into()),
        };
        assert_eq!(bad.exit_code(), 2);
        let num = CliError::Core {
            context: "x".into(),
            source: noisespec::Error::Underdetermined { rows: 1, cols: 2 },
        };
        assert_eq!(num.exit_code(), 3);
    }
}
