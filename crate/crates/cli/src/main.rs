use clap::{Args, Parser, Subcommand, ValueEnum};
use ssl_core::optimize::{self, FunctionalSpec, Schedule};
use ssl_core::pipeline::{self, PipelineConfig};
use ssl_core::ratio_bound;
use ssl_core::surgery::{self, ClassifyMode, ScanConfig, ScanMode, TheoryConstants};
use ssl_core::{sgrid, shapes, spectral, Error, GridDomain, SolverConfig};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Dirichlet eigenvalue laboratory on rasterized domains.
#[derive(Parser, Debug)]
#[command(name = "ssl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Number of eigenvalues.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Relative residual tolerance of the eigensolver.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Eigensolver iteration budget.
    #[arg(long, default_value_t = 4000)]
    budget: usize,
}

impl Common {
    fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iterations: self.budget,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct Constants {
    /// Threshold of condition (1).
    #[arg(long, default_value_t = 0.1)]
    nu: f64,
    /// Constant of condition (2).
    #[arg(long, default_value_t = 10.0)]
    c4: f64,
    /// Eigenvalue budget K (default: 1.05 times the normalized λ_k of the input).
    #[arg(long)]
    kmax: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Empirical)]
    mode: ModeArg,
    /// Grafted domains solved per scan before falling back to Rayleigh-Ritz bounds.
    #[arg(long, default_value_t = 2)]
    solve_budget: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Empirical,
    Theory,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum CutKind {
    Tail,
    Interior,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lowest eigenvalues of a domain.
    Eig {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Section scan and the chosen surgery along one axis.
    Surgery {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        constants: Constants,
        /// 1-based axis.
        #[arg(long, default_value_t = 1)]
        axis: usize,
        #[arg(long, value_enum, default_value_t = CutKind::Tail)]
        cut: CutKind,
        /// Interior quantile m̄.
        #[arg(long, default_value_t = 0.5)]
        mbar: f64,
    },
    /// Tail and interior surgeries along every axis.
    Pipeline {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        constants: Constants,
        /// Comma-separated 1-based axes.
        #[arg(long, value_delimiter = ',')]
        axis_order: Option<Vec<usize>>,
    },
    /// Quartile split certificate.
    Split {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Budget K for the normalized λ_1 (default: λ_1 itself).
        #[arg(long)]
        kmax: Option<f64>,
    },
    /// λ_k/λ_1 survey and recursive split certificates over a corpus.
    Ratio {
        /// SGRID files or directories of them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulated annealing on an increasing functional of the spectrum.
    Optimize {
        /// Initial domain (default: a 4:1 rectangle of about `--cells` cells).
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 3000)]
        cells: usize,
        /// single:J | sum:W1,W2,.. | product:K | max:K
        #[arg(long, default_value = "single:1")]
        functional: String,
        #[arg(long, default_value_t = 3000)]
        iterations: usize,
        /// Initial temperature relative to the initial F.
        #[arg(long, default_value_t = 2e-4)]
        t0: f64,
        #[arg(long, default_value_t = 1e-6)]
        t_end: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Seeded corpus of SGRID files.
    Gen {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Number of random blobs.
        #[arg(long, default_value_t = 10)]
        blobs: usize,
        /// Approximate cells per blob.
        #[arg(long, default_value_t = 3000)]
        blob_cells: usize,
    },
}

fn kind(e: &anyhow::Error) -> &'static str {
    match e.downcast_ref::<Error>() {
        Some(Error::Parse { .. }) => "parse",
        Some(Error::NotConverged { .. }) => "not_converged",
        Some(Error::Precondition(_)) => "precondition",
        Some(Error::DegenerateSplit(_)) => "degenerate_split",
        Some(Error::NoLegalMove(_)) => "no_legal_move",
        Some(Error::RankDeficient { .. }) => "rank_deficient",
        Some(Error::InvalidSpec(_)) => "invalid_spec",
        Some(Error::EmptyDomain) => "empty_domain",
        Some(Error::MeasureOutOfRange { .. }) => "measure_out_of_range",
        Some(Error::Incompatible(_)) => "incompatible",
        None if e.chain().any(|c| c.is::<std::io::Error>()) => "io",
        None => "usage",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error kind=usage message={e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error kind={} message={msg}", kind(&e));
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("SSL_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("SSL_THREADS={v} is not a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    println!("{}", path.display());
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<GridDomain> {
    let text = fs::read_to_string(path).map_err(|e| anyhow::Error::new(e).context(format!("cannot read {}", path.display())))?;
    Ok(sgrid::parse(&text)?)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "domain".into(), |s| s.to_string_lossy().into_owned())
}

fn check_common(c: &Common) -> anyhow::Result<()> {
    if c.k == 0 {
        return Err(Error::InvalidSpec("--k must be at least 1".into()).into());
    }
    if !(c.tol > 0.0) {
        return Err(Error::InvalidSpec("--tol must be positive".into()).into());
    }
    Ok(())
}

fn constants(c: &Constants, domain: &GridDomain, k: usize, solver: &SolverConfig) -> anyhow::Result<TheoryConstants> {
    let kmax = match c.kmax {
        Some(v) => v,
        None => {
            let s = spectral::spectrum_of(domain, k.min(domain.len()), solver)?;
            1.05 * spectral::normalized_eigenvalues(&s, domain).last().copied().unwrap_or(1.0)
        }
    };
    Ok(TheoryConstants::with(domain.dim(), kmax, c.nu, c.c4)?)
}

fn scan_config(c: &Constants, solver: SolverConfig) -> ScanConfig {
    ScanConfig {
        classify: match c.mode {
            ModeArg::Empirical => ClassifyMode::Empirical,
            ModeArg::Theory => ClassifyMode::Theory,
        },
        solver,
        solve_budget: c.solve_budget,
    }
}

fn run(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Eig { input, common } => {
            check_common(&common)?;
            let d = read(&input)?;
            let s = spectral::spectrum_of(&d, common.k, &common.solver())?;
            write(&common.out, &format!("{}.eig.csv", stem(&input)), &spectral::eigen_csv(&s, &d))
        }
        Command::Surgery {
            input,
            common,
            constants: c,
            axis,
            cut,
            mbar,
        } => {
            check_common(&common)?;
            let d = read(&input)?;
            if axis == 0 || axis > d.dim() {
                return Err(Error::InvalidSpec(format!("--axis {axis} not in 1..={}", d.dim())).into());
            }
            let solver = common.solver();
            let tc = constants(&c, &d, common.k, &solver)?;
            let s = spectral::spectrum_of(&d, common.k, &solver)?;
            let mode = match cut {
                CutKind::Tail => ScanMode::Tail,
                CutKind::Interior => ScanMode::Interior { mbar },
            };
            let report = surgery::scan(&d, &s, axis - 1, mode, &tc, &scan_config(&c, solver))?;
            let name = stem(&input);
            write(&common.out, &format!("{name}.scan.csv"), &surgery::scan_csv(&report))?;
            if let Some(res) = &report.best_result {
                write(&common.out, &format!("{name}.surgery.sgrid"), &sgrid::to_string(&res.grafted))?;
            }
            Ok(())
        }
        Command::Pipeline {
            input,
            common,
            constants: c,
            axis_order,
        } => {
            check_common(&common)?;
            let d = read(&input)?;
            let solver = common.solver();
            let tc = constants(&c, &d, common.k, &solver)?;
            let mut cfg = PipelineConfig::from_constants(common.k, tc)?;
            cfg.scan = scan_config(&c, solver);
            if let Some(order) = axis_order {
                if order.iter().any(|&a| a == 0 || a > d.dim()) {
                    return Err(Error::InvalidSpec(format!("--axis-order {order:?} out of range")).into());
                }
                cfg.axis_order = order.iter().map(|a| a - 1).collect();
            }
            let (out, report) = pipeline::bound_all(&d, &cfg)?;
            let name = stem(&input);
            write(&common.out, &format!("{name}.pipeline.csv"), &pipeline::trace_csv(&report))?;
            write(&common.out, &format!("{name}.pipeline.sgrid"), &sgrid::to_string(&out))
        }
        Command::Split { input, common, kmax } => {
            check_common(&common)?;
            let d = read(&input)?;
            let solver = common.solver();
            let s = spectral::spectrum_of(&d, 2.min(d.len()), &solver)?;
            let k = kmax.unwrap_or(spectral::normalized_eigenvalues(&s, &d)[0]);
            let cert = ratio_bound::split(&d, &s, k, &solver)?;
            write(&common.out, &format!("{}.split.txt", stem(&input)), &ratio_bound::split_report(&cert, common.tol))
        }
        Command::Ratio { inputs, common } => {
            check_common(&common)?;
            let files = collect_inputs(&inputs)?;
            let names: Vec<String> = files.iter().map(|p| stem(p)).collect();
            let corpus = files.iter().map(|p| read(p)).collect::<anyhow::Result<Vec<_>>>()?;
            let solver = common.solver();
            let survey = ratio_bound::ratio_survey(&corpus, common.k.max(2), &solver)?;
            let certs = corpus
                .iter()
                .map(|d| {
                    let s = spectral::spectrum_of(d, common.k.max(2).min(d.len()), &solver)?;
                    ratio_bound::recursive_split(d, &s, common.k, &solver)
                })
                .collect::<Vec<_>>();
            let mut report = ratio_bound::survey_report(&survey, &names);
            let mut csv = String::from("domain,ratio,m_prime,max_leaf_lambda1,certified\n");
            let mut all = true;
            for ((name, r), c) in names.iter().zip(&survey.ratios).zip(&certs) {
                match c {
                    Ok(c) => {
                        let ok = c.holds(common.tol);
                        all &= ok;
                        csv.push_str(&format!("{name},{r:.9},{:.9e},{:.9e},{ok}\n", c.m_prime, c.max_leaf_lambda1()));
                    }
                    Err(e) => {
                        all = false;
                        csv.push_str(&format!("{name},{r:.9},,,{}\n", e.to_string().replace(',', ";")));
                    }
                }
            }
            report.push_str(&format!("certified_all={all}\n"));
            write(&common.out, "ratio.txt", &report)?;
            write(&common.out, "ratio.csv", &csv)
        }
        Command::Optimize {
            init,
            cells,
            functional,
            iterations,
            t0,
            t_end,
            common,
        } => {
            check_common(&common)?;
            let f: FunctionalSpec = functional.parse()?;
            let start = match &init {
                Some(p) => read(p)?,
                None => {
                    let ny = ((cells as f64 / 4.0).sqrt().round() as usize).max(1);
                    shapes::rectangle(&[4 * ny, ny])
                }
            };
            let schedule = Schedule {
                iterations,
                t0,
                t_end,
                ..Schedule::default()
            };
            let res = optimize::run(&f, &start, &schedule, common.seed, &common.solver())?;
            write(&common.out, "history.csv", &optimize::history_csv(&res, f.k()))?;
            write(&common.out, "best.sgrid", &sgrid::to_string(&res.best))
        }
        Command::Gen {
            seed,
            out,
            blobs,
            blob_cells,
        } => {
            let fixed: Vec<(&str, GridDomain)> = vec![
                ("square", shapes::rectangle(&[60, 60])),
                ("rectangle", shapes::rectangle(&[100, 25])),
                ("disk", shapes::disk(32.0)),
                ("dumbbell", shapes::dumbbell(36, 60, 2)),
                ("filament", shapes::filament(50, 250, 1)),
            ];
            for (name, d) in &fixed {
                write(&out, &format!("{name}.sgrid"), &sgrid::to_string(d))?;
            }
            for i in 0..blobs {
                let d = shapes::blob(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), blob_cells);
                write(&out, &format!("blob_{i:03}.sgrid"), &sgrid::to_string(&d))?;
            }
            Ok(())
        }
    }
}

fn collect_inputs(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "sgrid"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::Precondition("no SGRID inputs".into()).into());
    }
    Ok(files)
}
