use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use tropma::abelian::{solve_torus_ma, PolarizedTropAV, TorusOptions};
use tropma::monge_ampere::{ma_measure, mixed_ma, DiscreteMeasure};
use tropma::mumford::{chi_consistency, nef_at_vertex, total_degree_check, vertex_degree, MumfordContext, PlFunction};
use tropma::oracles::{fd_hessian_ma, mc_subgradient_volume, p1_energy_probe, p1_pipeline, McFunction};
use tropma::rational::{self, Q};
use tropma::sbp::{solve_sbp, verify_sbp, SbpProblem};
use tropma::toric::{is_psh, is_theta_psh, Fan, GreenData};
use tropma::{convex::Quadratic, Error, MaxAffine, Polytope, QVec};

#[derive(Parser)]
#[command(name = "tropma", version, about = "Tropical Monge-Ampère toolkit")]
struct Cli {
    /// Newton stopping tolerance, relative to the smallest atom mass.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the result here instead of stdout.
    #[arg(short = 'o', long = "output", global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Rescale the measure to the required total mass instead of rejecting it.
    #[arg(long, global = true)]
    rescale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Monge-Ampère measure of a max-affine function.
    Ma {
        #[arg(long)]
        f: PathBuf,
    },
    /// Mixed Monge-Ampère measure of n max-affine functions.
    MixedMa {
        #[arg(long, required = true)]
        f: Vec<PathBuf>,
    },
    /// Legendre dual on the stability set.
    Legendre {
        #[arg(long)]
        f: PathBuf,
    },
    /// Fan validation and the psh test (θ-psh when Green data is given).
    CheckPsh {
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        fan: PathBuf,
        #[arg(long)]
        green: Option<PathBuf>,
    },
    /// Second boundary problem on a polytope.
    Sbp {
        #[arg(long)]
        body: PathBuf,
        #[arg(long)]
        measure: PathBuf,
    },
    /// Monge-Ampère equation on a real torus.
    TorusMa {
        #[arg(long)]
        ptav: PathBuf,
        #[arg(long)]
        measure: PathBuf,
    },
    /// Component degrees of a Mumford model.
    MumfordDegree {
        #[arg(long)]
        ctx: PathBuf,
        #[arg(long)]
        f: PathBuf,
        /// Comma-separated rational coordinates of a vertex.
        #[arg(long)]
        vertex: Option<String>,
    },
    /// Projective-line example; slopes live in Δ = [-1,0] (the reflection x ↦ -x of [0,1]).
    ExampleP1 {
        /// Exponent in [0,1), as "p/q" or a decimal.
        #[arg(long)]
        alpha: String,
        #[arg(long, default_value_t = 400)]
        atoms: usize,
        #[arg(long, default_value_t = 1e3)]
        cutoff: f64,
    },
    /// Independent numerical oracles.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Monte-Carlo estimate of n!·vol(∂f(E)) for a box E.
    Mc {
        /// Max-affine function.
        #[arg(long, conflicts_with = "quadratic")]
        f: Option<PathBuf>,
        /// Matrix A of u ↦ ½uᵀAu, as JSON rows of rationals.
        #[arg(long, requires = "body")]
        quadratic: Option<PathBuf>,
        /// Slope domain to sample for a quadratic.
        #[arg(long)]
        body: Option<PathBuf>,
        #[arg(long)]
        lo: String,
        #[arg(long)]
        hi: String,
        #[arg(long, default_value_t = 10000)]
        samples: usize,
    },
    /// Finite-difference n!·det(Hessian) of a quadratic.
    Fd {
        #[arg(long)]
        quadratic: PathBuf,
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
    },
}

enum Failure {
    Invalid(String),
    NoConvergence(String, Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) => Failure::Invalid(m),
            Error::NoConvergence { iterations, max_residual, best_offsets, residuals } => Failure::NoConvergence(
                format!("no convergence after {iterations} iterations (max residual {max_residual:.3e})"),
                json!({"converged": false, "iterations": iterations, "best_offsets": best_offsets, "residuals": residuals}),
            ),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Rendered output: JSON always, CSV rows when the command has a tabular form.
struct Output {
    json: Value,
    csv: Option<(Vec<String>, Vec<Vec<String>>)>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn parse_rationals(s: &str) -> CliResult<QVec> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| rational::parse(t).map_err(Failure::from)).collect()
}

fn parse_floats(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| Failure::Invalid(format!("malformed number {t:?}"))))
        .collect()
}

fn parse_alpha(s: &str) -> CliResult<f64> {
    match rational::parse(s) {
        Ok(r) => Ok(rational::to_f64(&r)),
        Err(_) => s.trim().parse::<f64>().map_err(|_| Failure::Invalid(format!("malformed exponent {s:?}"))),
    }
}

fn read_quadratic(path: &Path) -> CliResult<Quadratic> {
    let rows: Vec<Vec<Q>> = read_json(path)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Failure::Invalid("quadratic matrix must be square".into()));
    }
    Ok(Quadratic::new(rows.into_iter().map(|r| r.into_iter().map(|q| q.0).collect()).collect()))
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("library types serialize")
}

fn measure_output(mu: &DiscreteMeasure) -> Output {
    let n = mu.dim();
    let mut header: Vec<String> = (0..n).map(|j| format!("u{j}")).collect();
    header.push("mass".into());
    let rows = mu
        .atoms()
        .iter()
        .map(|a| {
            let mut r: Vec<String> = a.point.iter().map(rational::format).collect();
            r.push(rational::format(&a.mass));
            r
        })
        .collect();
    Output { json: to_value(mu), csv: Some((header, rows)) }
}

fn offsets_csv(points: &[Vec<f64>], offsets: &[f64], residuals: &[f64]) -> (Vec<String>, Vec<Vec<String>>) {
    let n = points.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (0..n).map(|j| format!("p{j}")).collect();
    header.extend(["offset".to_string(), "residual".to_string()]);
    let rows = points
        .iter()
        .zip(offsets)
        .zip(residuals)
        .map(|((p, c), r)| {
            let mut row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            row.push(c.to_string());
            row.push(r.to_string());
            row
        })
        .collect();
    (header, rows)
}

fn run(cli: &Cli) -> CliResult<Output> {
    match &cli.command {
        Command::Ma { f } => {
            let f: MaxAffine = read_json(f)?;
            Ok(measure_output(&ma_measure(&f)))
        }
        Command::MixedMa { f } => {
            let fs = f.iter().map(|p| read_json::<MaxAffine>(p)).collect::<CliResult<Vec<_>>>()?;
            Ok(measure_output(&mixed_ma(&fs)?))
        }
        Command::Legendre { f } => {
            let f: MaxAffine = read_json(f)?;
            let dual = f.legendre_transform();
            let n = f.dim();
            let mut header: Vec<String> = (0..n).map(|j| format!("slope{j}")).collect();
            header.push("offset".into());
            let rows = dual
                .function
                .pieces()
                .iter()
                .map(|p| {
                    let mut r: Vec<String> = p.slope.iter().map(rational::format).collect();
                    r.push(rational::format(&p.offset));
                    r
                })
                .collect();
            Ok(Output { json: to_value(&dual), csv: Some((header, rows)) })
        }
        Command::CheckPsh { f, fan, green } => {
            let f: MaxAffine = read_json(f)?;
            let fan: Fan = read_json(fan)?;
            if f.dim() != fan.dim() {
                return Err(Failure::Invalid("function and fan have different dimensions".into()));
            }
            let report = fan.validate();
            let mut out = json!({"fan": to_value(&report)});
            if !report.valid {
                return Err(Failure::Invalid(format!("invalid fan: {}", report.reason.unwrap_or_default())));
            }
            out["psh"] = json!(is_psh(&f, &fan));
            if let Some(g) = green {
                let green: GreenData = read_json(g)?;
                green.validate(&fan)?;
                out["theta_psh"] = json!(is_theta_psh(&f, &green, &fan));
            }
            Ok(Output { json: out, csv: None })
        }
        Command::Sbp { body, measure } => {
            let body: Polytope = read_json(body)?;
            let measure: DiscreteMeasure = read_json(measure)?;
            let mut problem = SbpProblem::new(body, measure);
            problem.tolerance = cli.tol;
            problem.max_iter = cli.max_iter;
            problem.seed = cli.seed;
            problem.rescale = cli.rescale;
            let sol = solve_sbp(&problem)?;
            let report = verify_sbp(&sol, &problem);
            let csv = offsets_csv(&problem.measure.points_f64(), &sol.dual_offsets, &sol.residuals);
            Ok(Output { json: json!({"converged": true, "solution": to_value(&sol), "report": to_value(&report)}), csv: Some(csv) })
        }
        Command::TorusMa { ptav, measure } => {
            let ptav: PolarizedTropAV = read_json(ptav)?;
            let mu: DiscreteMeasure = read_json(measure)?;
            let opts = TorusOptions { tolerance: cli.tol, max_iter: cli.max_iter, seed: cli.seed, anchor: None, rescale: cli.rescale };
            let sol = solve_torus_ma(&ptav, &mu, &opts)?;
            let csv = offsets_csv(&sol.measure.points_f64(), &sol.offsets, &sol.residuals);
            Ok(Output {
                json: json!({
                    "converged": true,
                    "f": to_value(&sol.f),
                    "measure": to_value(&sol.measure),
                    "offsets": sol.offsets,
                    "residuals": sol.residuals,
                    "iterations": sol.iterations,
                    "anchor": sol.anchor,
                    "replicas": sol.replicas,
                }),
                csv: Some(csv),
            })
        }
        Command::MumfordDegree { ctx, f, vertex } => {
            let ctx: MumfordContext = read_json(ctx)?;
            ctx.validate()?;
            let f: PlFunction = read_json(f)?;
            let chi = to_value(&chi_consistency(&ctx)?);
            if let Some(v) = vertex {
                let omega = parse_rationals(v)?;
                let nef = nef_at_vertex(&f, &omega);
                let d = vertex_degree(&ctx, &f, &omega)?;
                return Ok(Output {
                    json: json!({"vertex": omega.iter().map(rational::format).collect::<Vec<_>>(), "nef": nef, "degree": rational::format(&d.degree), "genuine": d.genuine, "chi": chi}),
                    csv: None,
                });
            }
            let (vertices, total) = match &f {
                PlFunction::Periodic(p) => {
                    let check = total_degree_check(&ctx, p)?;
                    let vs = vertex_rows(&ctx, &f, tropma::abelian::periodic_vertices(p).into_iter().map(|v| v.point))?;
                    (vs, json!({"sum": rational::format(&check.sum), "expected": rational::format(&check.expected), "equal": check.equal}))
                }
                PlFunction::Max(m) => {
                    let vs = vertex_rows(&ctx, &f, m.vertices().into_iter().map(|v| v.point))?;
                    (vs, Value::Null)
                }
                PlFunction::Dc(_) => return Err(Failure::Invalid("a vertex is required for difference-of-convex input".into())),
            };
            let rows: Vec<Vec<String>> =
                vertices.iter().map(|(p, d)| vec![p.iter().map(rational::format).collect::<Vec<_>>().join(" "), rational::format(d)]).collect();
            let list: Vec<Value> = vertices
                .iter()
                .map(|(p, d)| json!({"vertex": p.iter().map(rational::format).collect::<Vec<_>>(), "degree": rational::format(d)}))
                .collect();
            Ok(Output { json: json!({"vertices": list, "total": total, "chi": chi}), csv: Some((vec!["vertex".into(), "degree".into()], rows)) })
        }
        Command::ExampleP1 { alpha, atoms, cutoff } => {
            let alpha = parse_alpha(alpha)?;
            let run = p1_pipeline(alpha, *atoms, *cutoff, cli.tol, cli.max_iter, cli.seed)?;
            let energy: Vec<Value> = [1e2, 1e4, 1e6]
                .iter()
                .map(|&u| p1_energy_probe(alpha, u).map(|e| json!({"cutoff": u, "energy": e})))
                .collect::<tropma::Result<_>>()?;
            let rows = run
                .probes
                .iter()
                .zip(&run.recovered)
                .zip(&run.exact)
                .map(|((u, r), e)| vec![u.to_string(), r.to_string(), e.to_string()])
                .collect();
            let mut json = to_value(&run);
            json["energy"] = Value::Array(energy);
            Ok(Output { json, csv: Some((vec!["u".into(), "recovered".into(), "exact".into()], rows)) })
        }
        Command::Oracle { which } => match which {
            OracleCommand::Mc { f, quadratic, body, lo, hi, samples } => {
                let (lo, hi) = (parse_floats(lo)?, parse_floats(hi)?);
                let est = match (f, quadratic, body) {
                    (Some(f), None, _) => {
                        let f: MaxAffine = read_json(f)?;
                        mc_subgradient_volume(McFunction::Pl(&f), &lo, &hi, *samples, cli.seed)?
                    }
                    (None, Some(q), Some(b)) => {
                        let q = read_quadratic(q)?;
                        let body: Polytope = read_json(b)?;
                        mc_subgradient_volume(McFunction::Smooth(&q, &body), &lo, &hi, *samples, cli.seed)?
                    }
                    _ => return Err(Failure::Invalid("give --f, or --quadratic with --body".into())),
                };
                Ok(Output { json: to_value(&est), csv: None })
            }
            OracleCommand::Fd { quadratic, point, h } => {
                let q = read_quadratic(quadratic)?;
                let point = parse_floats(point)?;
                if point.len() != q.matrix.len() {
                    return Err(Failure::Invalid("point has the wrong dimension".into()));
                }
                let value = fd_hessian_ma(&q, &point, *h);
                Ok(Output { json: json!({"value": if value.is_nan() { Value::Null } else { json!(value) }, "flagged": value.is_nan()}), csv: None })
            }
        },
    }
}

fn vertex_rows(ctx: &MumfordContext, f: &PlFunction, points: impl Iterator<Item = QVec>) -> CliResult<Vec<(QVec, tropma::Rational)>> {
    points.map(|p| vertex_degree(ctx, f, &p).map(|d| (p, d.degree)).map_err(Failure::from)).collect()
}

fn render(out: &Output, format: Format) -> CliResult<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(&out.json).expect("serializable") + "\n"),
        Format::Csv => {
            let Some((header, rows)) = &out.csv else {
                return Err(Failure::Invalid("this command has no CSV form".into()));
            };
            let mut s = header.join(",") + "\n";
            for r in rows {
                s += &r.join(",");
                s.push('\n');
            }
            Ok(s)
        }
    }
}

fn emit(text: &str, path: Option<&Path>) -> std::io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|out| render(&out, cli.format));
    match result {
        Ok(text) => match emit(&text, cli.output.as_deref()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Err(Failure::Invalid(msg)) => {
            eprintln!("invalid input: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NoConvergence(msg, best)) => {
            eprintln!("{msg}");
            let _ = emit(&(serde_json::to_string_pretty(&best).expect("serializable") + "\n"), cli.output.as_deref());
            ExitCode::from(3)
        }
    }
}
