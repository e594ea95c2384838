use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args as ClapArgs;
use robustcov::diagnostics::{f_stat_bruteforce, f_stat_greedy_path, peaky_spread_decompose};
use robustcov::directions::{seed_directions, SearchConfig};
use robustcov::io::{read_matrix_file, read_sample_file};
use robustcov::{sample_covariance, Error, Exec};

use crate::{CmdResult, Failure};

#[derive(ClapArgs)]
pub struct Args {
    /// Input sample, one row per observation.
    pub input: PathBuf,
    /// Largest subset size for f(k).
    #[arg(long, default_value_t = 3)]
    pub k_max: usize,
    /// Truncation levels for the decomposition, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub lambda: Vec<f64>,
    /// Reference matrix (CSV); defaults to the sample second moment.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

pub fn run(a: Args) -> CmdResult {
    let s = read_sample_file(&a.input).map_err(|e| Failure::input(format!("{}: {e}", a.input.display())))?;
    if a.k_max == 0 || a.k_max > s.n() {
        return Err(Failure::input(format!("--k-max must lie in [1, {}]", s.n())));
    }
    let reference = match &a.reference {
        Some(p) => read_matrix_file(p)?,
        None => sample_covariance(&s).into_sym(),
    };
    let exec = Exec::Parallel;
    let mut out = String::from("k,f_brute,f_greedy\n");
    let greedy = f_stat_greedy_path(&s, a.k_max)?;
    for (k, g) in (1..=a.k_max).zip(&greedy) {
        let brute = match f_stat_bruteforce(&s, k, exec) {
            Ok(v) => v.to_string(),
            Err(Error::Infeasible(_)) => String::new(),
            Err(e) => return Err(e.into()),
        };
        let _ = writeln!(out, "{k},{brute},{g}");
    }
    out.push('\n');
    out.push_str("lambda,peaky,spread,total\n");
    let cfg = SearchConfig::default().with_seed(a.seed);
    let ds = seed_directions(&s, &reference, cfg.budget_for(s.dim()), a.seed)?;
    for &lambda in &a.lambda {
        let dec = peaky_spread_decompose(&s, lambda, &reference, &ds, &cfg, exec)?;
        let _ = writeln!(out, "{lambda},{},{},{}", dec.peaky, dec.spread, dec.total);
    }
    match &a.output {
        Some(p) => std::fs::write(p, out)?,
        None => print!("{out}"),
    }
    Ok(())
}
