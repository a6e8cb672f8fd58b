use clap::{Args, Parser, Subcommand, ValueEnum};
use krylov_core::barriers::{certify_subsolution, compute_alpha, BarrierParams, DEFAULT_MARGIN, DEFAULT_SAMPLES};
use krylov_core::constants::{FSConfig, Pipeline};
use krylov_core::harness::elliptic::{elliptic_sweep, EllipticRow, DEFAULT_HORIZON, ELLIPTIC_RADII};
use krylov_core::harness::report::{SuiteConfig, RICHARDSON_EVERY};
use krylov_core::harness::{
    fs_fit, generate_member, grid_nodes, run_suite, CoefficientFamily, EnsembleConfig, FSFitReport, SourceFamily, Support,
};
use krylov_core::solver::{default_stride, fundamental_solution, solve_with_stride, Grid, GridOptions, ZeroBoundary};
use krylov_core::{EllipticityPair, Error, GridFunction, IndicatorSet, Lattice, OperatorSpec, ParabolicCylinder, Result, Role};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "krylov-lab", version, about = "Lower-bound laboratory for Pucci parabolic equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    JsonLines,
    Kv,
}

#[derive(Args, Clone, Debug)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    /// Preset (coarse, default, fine) or an odd node count per axis.
    #[arg(long, default_value = "default")]
    grid: String,
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long = "Lambda", default_value_t = 1.0)]
    big_lambda: f64,
    #[arg(long = "N", default_value_t = 1)]
    dim: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn ell(&self) -> Result<EllipticityPair> {
        EllipticityPair::new(self.lambda, self.big_lambda).map_err(|e| Error::Config(e.to_string()))
    }

    fn nodes(&self) -> Result<usize> {
        grid_nodes(&self.grid, self.dim)
    }
}

#[derive(Args, Clone, Debug)]
struct FsArgs {
    #[arg(long = "fs-sigma")]
    fs_sigma: Option<f64>,
    #[arg(long = "fs-C")]
    fs_c: Option<f64>,
}

impl FsArgs {
    fn config(&self) -> Result<FSConfig> {
        match (self.fs_sigma, self.fs_c) {
            (None, None) => Ok(FSConfig::default()),
            (s, c) => FSConfig::new(s.unwrap_or(FSConfig::default().sigma), c.unwrap_or(FSConfig::default().c_cfs))
                .map_err(|e| Error::Config(e.to_string())),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve u_t - F(D^2 u) = f with zero boundary data.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Indicator set or grid function (role source); default: an ensemble member.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Operator file; default pucci_minus with --lambda/--Lambda.
        #[arg(long)]
        op: Option<PathBuf>,
        /// Ensemble member index when no source is given.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Fundamental solution w(.; Gamma) for pucci_minus.
    Fundamental {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "cylinder")]
        gamma: Option<PathBuf>,
        /// Cylinder as x,t,r (N=1) or x,y,t,r (N=2).
        #[arg(long)]
        cylinder: Option<String>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Explicit constants for (kappa, lambda, Lambda, N).
    Constants {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fs: FsArgs,
    },
    /// Evaluate a lower-bound closure.
    Bound {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fs: FsArgs,
        #[arg(long, conflicts_with = "fnorm", required_unless_present = "fnorm")]
        m: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        level: f64,
        #[arg(long)]
        fnorm: Option<f64>,
        /// With --fnorm: the algebraic bound for sources below -kappa.
        #[arg(long)]
        slick: bool,
    },
    /// Sample-certify the barrier as a subsolution.
    CertifyBarrier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long)]
        tau1: f64,
        #[arg(long)]
        tau2: f64,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        /// Override the computed exponent (e.g. 0 as a control).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_MARGIN)]
        margin: f64,
    },
    /// Run the ensemble and check every bound.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fs: FsArgs,
        #[arg(long, default_value = "indicator-cells")]
        family: String,
        #[arg(long, default_value = "mixed")]
        operator: String,
        #[arg(long, default_value = "full")]
        support: String,
        #[arg(long, default_value_t = RICHARDSON_EVERY)]
        richardson_every: usize,
        /// Solve with the source sign-flipped; the checks must then fail.
        #[arg(long)]
        fault: bool,
    },
    /// Fit the fundamental-solution ratio power law.
    FsFit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.25)]
        r: f64,
        #[arg(long, default_value_t = 40)]
        samples: usize,
    },
    /// Long-time steady states for chi_{B_r} sources.
    EllipticLimit {
        #[command(flatten)]
        common: Common,
        /// Comma-separated radii.
        #[arg(long, value_delimiter = ',')]
        r: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: f64,
    },
    /// Constants, verification, fs fit and elliptic sweep into one directory.
    Report {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fs: FsArgs,
    },
}

/// Non-fatal outcome: output was produced but some check failed.
struct Outcome {
    failed: bool,
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn json_line<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("serializable");
    s.push('\n');
    s
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn ensemble(common: &Common, family: &str, operator: &str, support: &str) -> Result<EnsembleConfig> {
    Ok(EnsembleConfig {
        seed: common.seed.unwrap_or(42),
        count: common.count.unwrap_or(50),
        source_family: family.parse::<SourceFamily>()?,
        coefficient_family: operator.parse::<CoefficientFamily>()?,
        dim: common.dim,
        nodes: common.nodes()?,
        kappa: common.kappa,
        ell: common.ell()?,
        m_range: (0.05, 0.5),
        support: support.parse::<Support>()?,
    })
}

fn cmd_solve(common: &Common, source: &Option<PathBuf>, op: &Option<PathBuf>, index: usize, stride: Option<usize>) -> Result<Outcome> {
    let ell = common.ell()?;
    let op = match op {
        Some(p) => OperatorSpec::from_text(&read(p)?)?,
        None => OperatorSpec::pucci_minus(ell),
    };
    op.validate(common.dim).map_err(|e| Error::Config(e.to_string()))?;
    let nodes = common.nodes()?;
    let grid = Grid::new(ParabolicCylinder::unit(), common.dim, nodes, &op, GridOptions::for_dim(common.dim))?;
    let stride = stride.unwrap_or_else(|| default_stride(&grid));
    let u = match source {
        Some(p) => {
            let text = read(p)?;
            if text.trim_start().starts_with("grid-function") {
                let f = GridFunction::from_text(&text)?;
                if f.role != Role::Source || f.dim != common.dim {
                    return Err(Error::Config("source grid function must have role source and matching N".into()));
                }
                solve_with_stride(&grid, &op, &f, &ZeroBoundary, Role::Supersolution, stride)?
            } else {
                let set = IndicatorSet::from_text(&text)?;
                solve_with_stride(&grid, &op, &set, &ZeroBoundary, Role::Supersolution, stride)?
            }
        }
        None => {
            let cfg = ensemble(common, "indicator-cells", "mixed", "full")?;
            let member = generate_member(&cfg, index)?;
            solve_with_stride(&member.grid, &member.op, &member.source, &ZeroBoundary, Role::Supersolution, stride)?
        }
    };
    emit(&common.out, &u.to_text())?;
    Ok(Outcome { failed: false })
}

fn cmd_fundamental(common: &Common, gamma: &Option<PathBuf>, cylinder: &Option<String>, stride: Option<usize>) -> Result<Outcome> {
    let op = OperatorSpec::pucci_minus(common.ell()?);
    let nodes = common.nodes()?;
    let set = match (gamma, cylinder) {
        (Some(p), _) => IndicatorSet::from_text(&read(p)?)?,
        (None, Some(spec)) => {
            let v: Vec<f64> = spec
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("cylinder {spec:?}: {e}"))))
                .collect::<Result<_>>()?;
            let cyl = match (common.dim, v.as_slice()) {
                (1, [x, t, r]) => ParabolicCylinder::new([*x, 0.0], *t, *r)?,
                (2, [x, y, t, r]) => ParabolicCylinder::new([*x, *y], *t, *r)?,
                _ => return Err(Error::Config(format!("cylinder needs {} numbers", common.dim + 2))),
            };
            if !cyl.inside_unit() {
                return Err(Error::Config("cylinder must lie inside Q_1".into()));
            }
            IndicatorSet::cylinder(Lattice::unit(common.dim, nodes, 256)?, &cyl)
        }
        (None, None) => return Err(Error::Config("fundamental needs --gamma or --cylinder".into())),
    };
    let grid = Grid::new(ParabolicCylinder::unit(), common.dim, nodes, &op, GridOptions::for_dim(common.dim))?;
    let w = match stride {
        Some(s) => solve_with_stride(&grid, &op, &set, &ZeroBoundary, Role::Fundamental, s)?,
        None => fundamental_solution(&grid, &set, &op)?,
    };
    emit(&common.out, &w.to_text())?;
    Ok(Outcome { failed: false })
}

fn pipeline(common: &Common, fs: &FsArgs) -> Result<Pipeline> {
    Pipeline::new(common.kappa, common.ell()?, common.dim, fs.config()?).map_err(|e| Error::Config(e.to_string()))
}

fn constants_text(pipe: &Pipeline, format: Format) -> Result<String> {
    let rep = pipe.report();
    Ok(match format {
        Format::JsonLines => {
            let mut s = rep.to_json();
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut rows: Vec<Vec<String>> = rep
                .scalars
                .iter()
                .map(|e| vec![e.name.clone(), format!("{:e}", e.value.ln()), format!("{:e}", e.value), e.note.clone()])
                .collect();
            rows.extend(rep.entries.iter().map(|e| vec![e.name.clone(), format!("{:e}", e.ln), e.value.clone(), e.note.clone()]));
            csv_text(&["name", "ln", "value", "note"], rows)?
        }
        Format::Kv => rep.to_text(),
    })
}

fn cmd_bound(common: &Common, fs: &FsArgs, m: Option<f64>, level: f64, fnorm: Option<f64>, slick: bool) -> Result<Outcome> {
    let pipe = pipeline(common, fs)?;
    let cfg = |e: Error| Error::Config(e.to_string());
    let mut s = String::new();
    if let Some(m) = m {
        let b = pipe.thm_lb(m, level).map_err(cfg)?;
        s += &format!("m = {m:e}\nlevel = {level:e}\nbound = {}\nln_bound = {:e}\n", b.bound.sci(), b.bound.ln());
        s +=
            &format!("window = [{:e}, {:e}]\nproven_window = [{:e}, {:e}]\n", b.window.0, b.window.1, b.proven_window.0, b.proven_window.1);
    } else if let Some(f) = fnorm {
        if slick {
            let b = pipe.cor_slicklb(f).map_err(cfg)?;
            s += &format!("fnorm = {f:e}\nbound = {}\nln_bound = {:e}\n", b.bound.sci(), b.bound.ln());
            s += &format!(
                "coefficient = {}\nexponent = {:e}\nwindow = [{:e}, {:e}]\n",
                b.coefficient.sci(),
                b.exponent,
                b.window.0,
                b.window.1
            );
        } else {
            let b = pipe.thm_tsfs(f).map_err(cfg)?;
            s +=
                &format!("fnorm = {f:e}\nm = {:e}\nlevel = {:e}\nbound = {}\nln_bound = {:e}\n", b.m, b.level, b.bound.sci(), b.bound.ln());
            s += &format!("alpha = {:e}\nalpha_capped = {}\n", b.alpha, b.alpha_capped);
            match b.window {
                Some(w) => s += &format!("window = [{:e}, {:e}]\n", w.0, w.1),
                None => s += "window = empty\n",
            }
        }
    }
    if common.format == Some(Format::JsonLines) {
        let map: serde_json::Map<String, serde_json::Value> =
            s.lines().filter_map(|l| l.split_once(" = ")).map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string()))).collect();
        s = json_line(&map);
    }
    emit(&common.out, &s)?;
    Ok(Outcome { failed: false })
}

#[allow(clippy::too_many_arguments)]
fn cmd_certify(
    common: &Common,
    theta: f64,
    delta: f64,
    eta: f64,
    tau1: f64,
    tau2: f64,
    samples: usize,
    alpha: Option<f64>,
    margin: f64,
) -> Result<Outcome> {
    let p = BarrierParams::with_reduced_delta(theta, delta, eta, tau1, tau2, common.ell()?, common.dim)
        .map_err(|e| Error::Config(e.to_string()))?;
    if margin.is_nan() || margin <= 0.0 {
        return Err(Error::Config("margin must be positive".into()));
    }
    let alpha = alpha.unwrap_or_else(|| compute_alpha(&p, margin));
    let cert = certify_subsolution(&p, alpha, p.drift_bound(), samples);
    let text = if common.format == Some(Format::JsonLines) { json_line(&cert) } else { cert.to_text() };
    emit(&common.out, &text)?;
    Ok(Outcome { failed: !cert.valid })
}

fn suite_config(
    common: &Common,
    fs: &FsArgs,
    family: &str,
    operator: &str,
    support: &str,
    every: usize,
    fault: bool,
) -> Result<SuiteConfig> {
    if every == 0 {
        return Err(Error::Config("--richardson-every must be positive".into()));
    }
    Ok(SuiteConfig { ensemble: ensemble(common, family, operator, support)?, fs: fs.config()?, richardson_every: every, fault })
}

fn fs_report_text(rep: &FSFitReport, format: Format) -> Result<String> {
    Ok(match format {
        Format::Csv => csv_text(
            &["chain", "density", "ratio", "probe_x", "probe_y", "probe_t"],
            rep.samples.iter().map(|s| {
                vec![
                    s.chain.to_string(),
                    format!("{:e}", s.density),
                    format!("{:e}", s.ratio),
                    format!("{:e}", s.probe.0[0]),
                    format!("{:e}", s.probe.0[1]),
                    format!("{:e}", s.probe.1),
                ]
            }),
        )?,
        _ => json_line(rep),
    })
}

fn fs_summary(rep: &FSFitReport) -> String {
    format!(
        "fs fit r={} seed={} sigma_hat={:e} C_hat={:e} C_lower={:e} R2={:e} unit_exact={} inclusion_violation={:e}\n",
        rep.r, rep.seed, rep.sigma_hat, rep.c_hat, rep.c_lower, rep.r2, rep.unit_exact, rep.inclusion_violation
    )
}

fn fs_failed(rep: &FSFitReport) -> bool {
    !(rep.r2 >= 0.9 && rep.unit_exact && rep.inclusion_violation <= 1e-12)
}

const ELLIPTIC_COLUMNS: [&str; 10] =
    ["r", "N", "time", "rate", "converged", "w_origin", "w_min", "ln_bound", "bound_pass", "closed_form_error"];

fn elliptic_text(rows: &[EllipticRow], slope: Option<f64>, format: Format) -> Result<String> {
    Ok(match format {
        Format::JsonLines => {
            let mut s: String = rows.iter().map(json_line).collect();
            s += &json_line(&serde_json::json!({ "slope": slope }));
            s
        }
        _ => csv_text(
            &ELLIPTIC_COLUMNS,
            rows.iter().map(|w| {
                vec![
                    format!("{:e}", w.r),
                    w.dim.to_string(),
                    format!("{:e}", w.time),
                    format!("{:e}", w.rate),
                    w.converged.to_string(),
                    format!("{:e}", w.w_origin),
                    format!("{:e}", w.w_min),
                    format!("{:e}", w.bound_ln),
                    w.bound_pass.to_string(),
                    w.closed_form_error.map(|e| format!("{e:e}")).unwrap_or_default(),
                ]
            }),
        )?,
    })
}

fn elliptic_failed(rows: &[EllipticRow], slope: Option<f64>) -> bool {
    rows.iter().any(|w| !w.converged || !w.bound_pass) || slope.is_some_and(|s| !s.is_finite())
}

fn cmd_report(common: &Common, fs_args: &FsArgs) -> Result<Outcome> {
    let dir = common.out.clone().ok_or_else(|| Error::Config("report needs --out <directory>".into()))?;
    fs::create_dir_all(&dir)?;
    let pipe = pipeline(common, fs_args)?;
    fs::write(dir.join("constants.txt"), constants_text(&pipe, Format::Kv)?)?;
    fs::write(dir.join("constants.json"), constants_text(&pipe, Format::JsonLines)?)?;
    let suite = run_suite(&suite_config(common, fs_args, "indicator-cells", "mixed", "full", RICHARDSON_EVERY, false)?)?;
    fs::write(dir.join("verify.csv"), suite.to_csv()?)?;
    let ell = common.ell()?;
    let nodes = common.nodes()?;
    let fit = fs_fit(0.25, 40, common.seed.unwrap_or(17), ell, common.dim, nodes)?;
    fs::write(dir.join("fs_fit.json"), fs_report_text(&fit, Format::JsonLines)?)?;
    let (rows, slope) = elliptic_sweep(&ELLIPTIC_RADII, DEFAULT_HORIZON, ell, common.kappa, common.dim, nodes)?;
    fs::write(dir.join("elliptic.csv"), elliptic_text(&rows, slope, Format::Csv)?)?;
    let failed = !suite.passed() || fs_failed(&fit) || elliptic_failed(&rows, slope);
    let mut summary = suite.summary();
    summary += &fs_summary(&fit);
    summary += &format!("elliptic slope {}\n", slope.map(|s| format!("{s:e}")).unwrap_or_default());
    summary += &format!("status {}\n", if failed { "fail" } else { "pass" });
    fs::write(dir.join("summary.txt"), &summary)?;
    eprint!("{summary}");
    Ok(Outcome { failed })
}

fn run(cli: Cli) -> Result<Outcome> {
    match &cli.cmd {
        Cmd::Solve { common, source, op, index, stride } => cmd_solve(common, source, op, *index, *stride),
        Cmd::Fundamental { common, gamma, cylinder, stride } => cmd_fundamental(common, gamma, cylinder, *stride),
        Cmd::Constants { common, fs } => {
            let pipe = pipeline(common, fs)?;
            emit(&common.out, &constants_text(&pipe, common.format.unwrap_or(Format::Kv))?)?;
            Ok(Outcome { failed: false })
        }
        Cmd::Bound { common, fs, m, level, fnorm, slick } => cmd_bound(common, fs, *m, *level, *fnorm, *slick),
        Cmd::CertifyBarrier { common, theta, delta, eta, tau1, tau2, samples, alpha, margin } => {
            cmd_certify(common, *theta, *delta, *eta, *tau1, *tau2, *samples, *alpha, *margin)
        }
        Cmd::Verify { common, fs, family, operator, support, richardson_every, fault } => {
            let rep = run_suite(&suite_config(common, fs, family, operator, support, *richardson_every, *fault)?)?;
            let text = match common.format.unwrap_or(Format::Csv) {
                Format::JsonLines => rep.to_json_lines(),
                _ => rep.to_csv()?,
            };
            emit(&common.out, &text)?;
            eprint!("{}", rep.summary());
            Ok(Outcome { failed: !rep.passed() })
        }
        Cmd::FsFit { common, r, samples } => {
            let rep = fs_fit(*r, *samples, common.seed.unwrap_or(17), common.ell()?, common.dim, common.nodes()?)?;
            emit(&common.out, &fs_report_text(&rep, common.format.unwrap_or(Format::JsonLines))?)?;
            eprint!("{}", fs_summary(&rep));
            Ok(Outcome { failed: fs_failed(&rep) })
        }
        Cmd::EllipticLimit { common, r, horizon } => {
            let radii = if r.is_empty() { ELLIPTIC_RADII.to_vec() } else { r.clone() };
            let (rows, slope) = elliptic_sweep(&radii, *horizon, common.ell()?, common.kappa, common.dim, common.nodes()?)?;
            emit(&common.out, &elliptic_text(&rows, slope, common.format.unwrap_or(Format::Csv))?)?;
            Ok(Outcome { failed: elliptic_failed(&rows, slope) })
        }
        Cmd::Report { common, fs } => cmd_report(common, fs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome { failed: false }) => ExitCode::SUCCESS,
        Ok(Outcome { failed: true }) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Certification { .. } | Error::NotConverged { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
