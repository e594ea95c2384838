use std::path::PathBuf;

use clap::Args as ClapArgs;
use robustcov::io::read_distribution_file;
use robustcov::scalar::{epsilon_lower_bound, fourpoint, fourpoint_epsilon_closed_form, fourpoint_scaled};

use crate::{CmdResult, Failure};

#[derive(ClapArgs)]
pub struct Args {
    /// Built-in four-point distribution (requires every η ≤ 1/4).
    #[arg(long, conflicts_with = "atoms", required_unless_present = "atoms")]
    pub fourpoint: bool,
    /// Use the rescaled variant `σ²/√(2−η) · Y₁` instead of `Y₁`.
    #[arg(long, requires = "fourpoint")]
    pub sigma_sq: Option<f64>,
    /// CSV of `value,prob` atoms.
    #[arg(long)]
    pub atoms: Option<PathBuf>,
    /// Contamination levels, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eta: Vec<f64>,
}

pub fn run(a: Args) -> CmdResult {
    for &eta in &a.eta {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Failure::input(format!("eta must lie in (0, 1), got {eta}")));
        }
        if a.fourpoint && eta > 0.25 {
            return Err(Failure::input(format!("the four-point distribution needs eta <= 1/4, got {eta}")));
        }
    }
    let fixed = match &a.atoms {
        Some(path) => Some(read_distribution_file(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?),
        None => None,
    };
    println!("eta,epsilon,reference,rel_err");
    for &eta in &a.eta {
        let (dist, reference) = match &fixed {
            Some(d) => (d.clone(), None),
            None => match a.sigma_sq {
                Some(s2) => {
                    let scale = s2 / (2.0 - eta).sqrt();
                    (fourpoint_scaled(eta, s2)?, Some(scale * fourpoint_epsilon_closed_form(eta)))
                }
                None => (fourpoint(eta)?, Some(fourpoint_epsilon_closed_form(eta))),
            },
        };
        let eps = epsilon_lower_bound(&dist, eta)?;
        match reference {
            Some(r) => {
                let rel = if r == 0.0 { (eps - r).abs() } else { ((eps - r) / r).abs() };
                println!("{eta},{eps},{r},{rel:e}");
            }
            None => println!("{eta},{eps},,"),
        }
    }
    Ok(())
}
