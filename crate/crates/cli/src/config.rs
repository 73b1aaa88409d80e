//! Run options from command-line flags, backed by an optional `key=value` file.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;

use signorini::quadrature::QuadratureOrder;

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    SquareSpline,
    ContactCorner,
    File(PathBuf),
}

impl FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "square-spline" => Ok(Self::SquareSpline),
            "contact-corner" => Ok(Self::ContactCorner),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(Self::File(PathBuf::from(path))),
                _ => Err(format!("unknown problem '{s}' (expected square-spline, contact-corner or file:<path>)")),
            },
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SquareSpline => f.write_str("square-spline"),
            Self::ContactCorner => f.write_str("contact-corner"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// `SIDE` or `SIDE,ELEMENT` Gauss point counts.
pub fn parse_quad(s: &str) -> Result<QuadratureOrder, String> {
    let parse = |t: &str| match t.trim().parse::<usize>() {
        Ok(n) if (1..=64).contains(&n) => Ok(n),
        _ => Err(format!("quadrature order '{t}' must be an integer in 1..=64")),
    };
    match s.split_once(',') {
        Some((a, b)) => Ok(QuadratureOrder { side: parse(a)?, element: parse(b)? }),
        None => Ok(QuadratureOrder::uniform(parse(s)?)),
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// File of `key=value` lines; keys are the long flag names, flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Refinement levels (apriori: finest level; adaptive: maximal number of levels; solve:
    /// uniform refinements of the initial mesh).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Dörfler marking fraction in (0, 1]; 1 refines uniformly.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Adaptive loop stops once the estimator is at most this value.
    #[arg(long = "eps-stop")]
    pub eps_stop: Option<f64>,
    /// Parameter of the active set prediction.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Gauss points on sides and (optionally) per direction on elements, `SIDE[,ELEMENT]`.
    #[arg(long = "quad-order")]
    pub quad_order: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the random property suite.
    #[arg(long)]
    pub seed: Option<u64>,
    /// square-spline, contact-corner or file:<mesh path>.
    #[arg(long)]
    pub problem: Option<String>,
    /// Levels of the uniform comparison run of `adaptive`.
    #[arg(long = "uniform-levels")]
    pub uniform_levels: Option<usize>,
    /// Stop the a priori study before a level with more elements than this.
    #[arg(long = "max-elements")]
    pub max_elements: Option<usize>,
    /// Constant load for file problems.
    #[arg(long, allow_negative_numbers = true)]
    pub load: Option<f64>,
    /// Constant Neumann data for file problems.
    #[arg(long, allow_negative_numbers = true)]
    pub neumann: Option<f64>,
    /// Constant Dirichlet data for file problems.
    #[arg(long, allow_negative_numbers = true)]
    pub dirichlet: Option<f64>,
    /// Constant obstacle for file problems.
    #[arg(long, allow_negative_numbers = true)]
    pub obstacle: Option<f64>,
    /// Corrupt a stiffness entry before solving (verify only).
    #[arg(long = "inject-fault")]
    pub inject_fault: bool,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.trim().parse().map_err(|_| format!("invalid value '{value}' for key '{key}'"))
}

impl Options {
    /// Fills unset options from `key=value` text. Blank lines and `#` comments are skipped;
    /// unknown keys are errors.
    pub fn merge_config_text(&mut self, text: &str) -> Result<(), String> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            macro_rules! fill {
                ($field:ident) => {
                    if self.$field.is_none() {
                        self.$field = Some(parse_value(key, value)?);
                    }
                };
            }
            match key {
                "levels" => fill!(levels),
                "theta" => fill!(theta),
                "eps-stop" => fill!(eps_stop),
                "alpha" => fill!(alpha),
                "quad-order" => fill!(quad_order),
                "out" => fill!(out),
                "seed" => fill!(seed),
                "problem" => fill!(problem),
                "uniform-levels" => fill!(uniform_levels),
                "max-elements" => fill!(max_elements),
                "load" => fill!(load),
                "neumann" => fill!(neumann),
                "dirichlet" => fill!(dirichlet),
                "obstacle" => fill!(obstacle),
                "inject-fault" => self.inject_fault |= parse_value::<bool>(key, value)?,
                _ => return Err(format!("line {}: unknown key '{key}'", n + 1)),
            }
        }
        Ok(())
    }

    pub fn load_config(&mut self) -> Result<(), String> {
        if let Some(path) = self.config.clone() {
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            self.merge_config_text(&text)?;
        }
        Ok(())
    }

    pub fn theta(&self) -> Result<f64, String> {
        let t = self.theta.unwrap_or(0.5);
        if t > 0.0 && t <= 1.0 {
            Ok(t)
        } else {
            Err(format!("theta must lie in (0, 1], got {t}"))
        }
    }

    pub fn alpha(&self) -> Result<f64, String> {
        let a = self.alpha.unwrap_or(1.0);
        if a > 0.0 && a.is_finite() {
            Ok(a)
        } else {
            Err(format!("alpha must be positive, got {a}"))
        }
    }

    pub fn eps_stop(&self) -> Result<f64, String> {
        let e = self.eps_stop.unwrap_or(0.0);
        if e >= 0.0 {
            Ok(e)
        } else {
            Err(format!("eps-stop must be non-negative, got {e}"))
        }
    }

    pub fn quad(&self, default: QuadratureOrder) -> Result<QuadratureOrder, String> {
        self.quad_order.as_deref().map_or(Ok(default), parse_quad)
    }

    pub fn problem(&self, default: Problem) -> Result<Problem, String> {
        self.problem.as_deref().map_or(Ok(default), str::parse)
    }

    pub fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
