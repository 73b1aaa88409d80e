//! Command-line front end: a priori and adaptive studies, single solves and the property
//! suite.

mod config;
mod svg;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Options, Problem};
use signorini::adaptivity::{contact_corner_mesh, contact_corner_problem, estimator_at, loglog_slope, run_afem, AfemConfig, AfemTrace};
use signorini::duality::reconstruct_flux;
use signorini::experiments::{apriori_rates, apriori_study, mean_of_last, write_apriori_csv, StudyQuadrature};
use signorini::manufactured::{square_mesh, ExactSolution};
use signorini::mesh::Mesh;
use signorini::pdas::{solve, write_log, PdasConfig};
use signorini::quadrature::QuadratureOrder;
use signorini::system::{ContinuousData, SignoriniSystem};
use signorini::verification::{run_suite, SuiteOptions};

const APRIORI_COLUMNS: &str = "\
apriori.csv columns:
  level      refinement level k of the two-triangle unit square
  N_k        free Crouzeix-Raviart unknowns plus contact sides
  h_k        averaged mesh size (area / number of vertices)^(1/2)
  e_tot      sum of the discrete strong convexity measures of the interpolated exact pair
  e_gap      discrete primal-dual gap of the interpolated exact pair
  e_delta    |e_tot - e_gap|
  eoc_*      experimental orders of convergence with respect to h_k (empty on the first row)";

const ADAPTIVE_COLUMNS: &str = "\
adaptive.csv and uniform.csv columns:
  level            loop iteration k
  N_k              free Crouzeix-Raviart unknowns plus contact sides
  h_k              averaged mesh size (area / number of vertices)^(1/2)
  eta2             primal-dual gap estimator of the post-processed pair
  eta2_A, eta2_B   its quadratic and contact parts
  pdas_iterations  active set iterations on the level
  seconds          wall time of the level
levels/level_KK/fields.csv columns: side, x, y (midpoint), label, u, multiplier, flux
levels/level_KK/indicators.csv columns: element, eta2";

const SOLVE_COLUMNS: &str = "\
solution.csv columns:
  side        side index
  x, y        side midpoint
  label       boundary label (empty for interior sides)
  u           Crouzeix-Raviart value (side mean)
  multiplier  contact multiplier, non-negative on contact sides and zero elsewhere
  flux        normal flux of the reconstructed dual solution along the side normal
pdas_log.csv columns: k, active, step, stationarity, infeasibility, complementarity, energy";

#[derive(Parser)]
#[command(name = "signorini", version, about = "Scalar Signorini problem: solves, convergence studies and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uniform refinement study on the manufactured problem.
    #[command(after_help = APRIORI_COLUMNS)]
    Apriori(Options),
    /// Adaptive refinement driven by the gap estimator, with a uniform comparison run.
    #[command(after_help = ADAPTIVE_COLUMNS)]
    Adaptive(Options),
    /// Single solve with flux reconstruction.
    #[command(after_help = SOLVE_COLUMNS)]
    Solve(Options),
    /// Property suite on small meshes; exits with status 2 on failure.
    Verify(Options),
}

type Runner = fn(&Options) -> Result<(), Failure>;

enum Failure {
    Usage(String),
    Io(String),
    Solver(String),
    Verification,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Io(_) => 1,
            Failure::Verification => 2,
            Failure::Solver(_) => 3,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn solver<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Solver(e.to_string())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn pdas_config(opts: &Options) -> Result<PdasConfig, Failure> {
    Ok(PdasConfig { alpha: opts.alpha().map_err(Failure::Usage)?, ..PdasConfig::default() })
}

/// Initial mesh and data of a problem.
fn problem_setup(opts: &Options, problem: &Problem) -> Result<(Mesh, ContinuousData), Failure> {
    match problem {
        Problem::SquareSpline => Ok((square_mesh(0).map_err(solver)?, ExactSolution::default().continuous_data())),
        Problem::ContactCorner => Ok((contact_corner_mesh().map_err(solver)?, contact_corner_problem())),
        Problem::File(path) => {
            let file = File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            let mesh = Mesh::read_text(BufReader::new(file)).map_err(|e| Failure::Io(e.to_string()))?;
            let data = ContinuousData::constant(
                opts.load.unwrap_or(1.0),
                opts.neumann.unwrap_or(0.0),
                opts.dirichlet.unwrap_or(0.0),
                opts.obstacle.unwrap_or(0.0),
            );
            Ok((mesh, data))
        }
    }
}

fn cmd_apriori(opts: &Options) -> Result<(), Failure> {
    if opts.problem(Problem::SquareSpline).map_err(Failure::Usage)? != Problem::SquareSpline {
        return Err(Failure::Usage("the a priori study needs the exact solution of square-spline".into()));
    }
    let levels = opts.levels.unwrap_or(7);
    if levels == 0 {
        return Err(Failure::Usage("levels must be at least 1".into()));
    }
    let quad = match &opts.quad_order {
        Some(_) => {
            let q = opts.quad(QuadratureOrder::default()).map_err(Failure::Usage)?;
            StudyQuadrature { data: q, interpolation: q }
        }
        None => StudyQuadrature::default(),
    };
    let max_elements = opts.max_elements.unwrap_or(2 << 18);
    let feasible: Vec<usize> = (1..=levels).take_while(|&k| 2usize << (2 * k) <= max_elements).collect();
    if feasible.len() < levels {
        eprintln!("stopping after level {} to stay within {max_elements} elements", feasible.len());
    }
    let rows = apriori_study(feasible, quad, &pdas_config(opts)?).map_err(solver)?;
    let out = opts.out();
    write_apriori_csv(&rows, create(&out, "apriori.csv")?)?;
    let series = |label, f: fn(&signorini::duality::AprioriErrors) -> f64| svg::Series {
        label,
        points: rows.iter().map(|r| (r.n_k as f64, f(&r.errors))).collect(),
    };
    let plot = svg::loglog_plot(
        "a priori errors",
        "N_k",
        &[series("e_tot", |e| e.e_tot), series("e_gap", |e| e.e_gap), series("e_delta", |e| e.e_delta)],
    );
    create(&out, "apriori.svg")?.write_all(plot.as_bytes())?;

    let [r_tot, r_gap, r_delta] = apriori_rates(&rows);
    println!("{:>5} {:>8} {:>10} {:>12} {:>12} {:>12} {:>6} {:>6} {:>6}", "level", "N_k", "h_k", "e_tot", "e_gap", "e_delta", "eoc", "eoc", "eoc");
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    for (i, r) in rows.iter().enumerate() {
        println!(
            "{:>5} {:>8} {:>10.3e} {:>12.4e} {:>12.4e} {:>12.4e} {:>6} {:>6} {:>6}",
            r.level, r.n_k, r.h, r.errors.e_tot, r.errors.e_gap, r.errors.e_delta, f(r_tot[i]), f(r_gap[i]), f(r_delta[i])
        );
    }
    let n = 3.min(rows.len().saturating_sub(1));
    if n > 0 {
        println!(
            "mean EOC over the last {n} levels: e_tot {}, e_gap {}, e_delta {}",
            f(mean_of_last(&r_tot, n)),
            f(mean_of_last(&r_gap, n)),
            f(mean_of_last(&r_delta, n))
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn write_level(dir: &Path, a: &signorini::adaptivity::LevelArtifacts) -> Result<(), Failure> {
    let mesh = &a.data.mesh;
    a.data.mesh.write_text(create(dir, "mesh.txt")?).map_err(|e| Failure::Io(e.to_string()))?;
    let mut w = create(dir, "fields.csv")?;
    writeln!(w, "side,x,y,label,u,multiplier,flux")?;
    for (i, s) in mesh.sides().iter().enumerate() {
        let label = s.label.map_or_else(String::new, |l| l.to_string());
        writeln!(
            w,
            "{i},{:.16e},{:.16e},{label},{:.16e},{:.16e},{:.16e}",
            s.midpoint[0], s.midpoint[1], a.solution.u.0[i], a.solution.multiplier.0[i], a.flux.0[i]
        )?;
    }
    a.report.write_csv(create(dir, "indicators.csv")?)?;
    create(dir, "indicators.svg")?.write_all(svg::heatmap(mesh, &a.report.local).as_bytes())?;
    Ok(())
}

fn cmd_adaptive(opts: &Options) -> Result<(), Failure> {
    let problem = opts.problem(Problem::ContactCorner).map_err(Failure::Usage)?;
    let (mesh, data) = problem_setup(opts, &problem)?;
    let config = AfemConfig {
        theta: opts.theta().map_err(Failure::Usage)?,
        eps_stop: opts.eps_stop().map_err(Failure::Usage)?,
        max_levels: opts.levels.unwrap_or(21).max(1),
        pdas: pdas_config(opts)?,
        estimator_quad: opts.quad(QuadratureOrder::uniform(4)).map_err(Failure::Usage)?,
        ..AfemConfig::default()
    };
    let out = opts.out();
    let mut io_error = None;
    let trace = run_afem(mesh.clone(), &data, &config, |a| {
        if io_error.is_none() {
            if let Err(e) = write_level(&out.join("levels").join(format!("level_{:02}", a.level)), a) {
                io_error = Some(e);
            }
        }
    })
    .map_err(solver)?;
    if let Some(e) = io_error {
        return Err(e);
    }
    trace.write_csv(create(&out, "adaptive.csv")?)?;

    let uniform_config = AfemConfig { theta: 1.0, max_levels: opts.uniform_levels.unwrap_or(5).max(1), ..config };
    let uniform = run_afem(mesh, &data, &uniform_config, |_| {}).map_err(solver)?;
    uniform.write_csv(create(&out, "uniform.csv")?)?;

    let points = |t: &AfemTrace| t.levels.iter().map(|l| (l.n_k as f64, l.eta_gap)).collect::<Vec<_>>();
    let plot = svg::loglog_plot(
        "gap estimator",
        "N_k",
        &[
            svg::Series { label: "adaptive", points: points(&trace) },
            svg::Series { label: "uniform", points: points(&uniform) },
        ],
    );
    create(&out, "convergence.svg")?.write_all(plot.as_bytes())?;

    println!("{:>5} {:>8} {:>12} {:>12} {:>12} {:>5}", "level", "N_k", "eta2", "eta2_A", "eta2_B", "iters");
    for l in &trace.levels {
        println!("{:>5} {:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>5}", l.level, l.n_k, l.eta_gap, l.eta_a, l.eta_b, l.pdas_iterations);
    }
    let slope = |t: &AfemTrace, last: usize| {
        let k = t.levels.len().saturating_sub(last);
        let (n, e): (Vec<f64>, Vec<f64>) = t.levels[k..].iter().map(|l| (l.n_k as f64, l.eta_gap)).unzip();
        (n.len() >= 2).then(|| loglog_slope(&n, &e))
    };
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    println!("fitted slope of eta2 against N_k: adaptive (last 10 levels) {}, uniform {}", f(slope(&trace, 10)), f(slope(&uniform, usize::MAX)));
    for l in &uniform.levels {
        if let Some(a) = estimator_at(&trace, l.n_k as f64) {
            println!("at N_k = {}: uniform eta2 {:.4e}, adaptive eta2 {a:.4e}", l.n_k, l.eta_gap);
        }
    }
    if trace.stopped_by_tolerance {
        println!("stopped: estimator below eps-stop");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_solve(opts: &Options) -> Result<(), Failure> {
    let problem = opts.problem(Problem::SquareSpline).map_err(Failure::Usage)?;
    let (mut mesh, data) = problem_setup(opts, &problem)?;
    for _ in 0..opts.levels.unwrap_or(if problem == Problem::SquareSpline { 3 } else { 0 }) {
        mesh = mesh.red_refine();
    }
    let quad = opts.quad(QuadratureOrder::default()).map_err(Failure::Usage)?;
    let discrete = data.discretize(mesh, quad);
    let system = SignoriniSystem::assemble(&discrete).map_err(solver)?;
    let sol = solve(&system, &pdas_config(opts)?, None).map_err(solver)?;
    let z = reconstruct_flux(&discrete, &sol.u).map_err(solver)?;
    let primal = discrete.primal_energy(&sol.u).map_err(solver)?;
    let dual = discrete.dual_energy(&z).map_err(solver)?;

    let out = opts.out();
    discrete.mesh.write_text(create(&out, "mesh.txt")?).map_err(|e| Failure::Io(e.to_string()))?;
    let mut w = create(&out, "solution.csv")?;
    writeln!(w, "side,x,y,label,u,multiplier,flux")?;
    for (i, s) in discrete.mesh.sides().iter().enumerate() {
        let label = s.label.map_or_else(String::new, |l| l.to_string());
        writeln!(
            w,
            "{i},{:.16e},{:.16e},{label},{:.16e},{:.16e},{:.16e}",
            s.midpoint[0], s.midpoint[1], sol.u.0[i], sol.multiplier.0[i], z.0[i]
        )?;
    }
    write_log(&sol.log, create(&out, "pdas_log.csv")?)?;
    let mut s = create(&out, "summary.txt")?;
    writeln!(s, "problem={problem}")?;
    writeln!(s, "elements={}", discrete.mesh.num_elements())?;
    writeln!(s, "N_k={}", system.n_k())?;
    writeln!(s, "pdas_iterations={}", sol.state.iterations)?;
    writeln!(s, "active_sides={}", sol.state.active.iter().filter(|&&a| a).count())?;
    writeln!(s, "primal_energy={primal:.16e}")?;
    writeln!(s, "dual_energy={dual:.16e}")?;
    println!(
        "{} elements, {} iterations, primal energy {primal:.12e}, dual energy {dual:.12e}",
        discrete.mesh.num_elements(),
        sol.state.iterations
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_verify(opts: &Options) -> Result<(), Failure> {
    let options = SuiteOptions { seed: opts.seed.unwrap_or(0), inject_fault: opts.inject_fault, config: pdas_config(opts)? };
    let results = run_suite(&options);
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (mut opts, run): (Options, Runner) = match cli.command {
        Command::Apriori(o) => (o, cmd_apriori),
        Command::Adaptive(o) => (o, cmd_adaptive),
        Command::Solve(o) => (o, cmd_solve),
        Command::Verify(o) => (o, cmd_verify),
    };
    let result = opts.load_config().map_err(Failure::Usage).and_then(|_| run(&opts));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Io(m) => eprintln!("i/o error: {m}"),
                Failure::Solver(m) => eprintln!("solver failure: {m}"),
                Failure::Verification => eprintln!("verification failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
