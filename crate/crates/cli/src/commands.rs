//! Subcommand implementations. Each returns the warnings it produced so the
//! caller decides where diagnostics go.

use std::path::Path;

use blk_survival::elicit::{baseline_range, moments_from_ratios, partial_likelihood_to_ratio, RatioJudgement};
use blk_survival::fit::{fit_naive, fit_with_prior, simulate_cohort, FitOutput, PosteriorSummary};
use blk_survival::oracle::mcmc_reference;
use blk_survival::{Dataset, IntervalGrid};
use nalgebra::DMatrix;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{format_number as num, read_dataset, read_numeric_table, read_string_table, write_dataset, Sink};

pub type Warnings = Vec<String>;

pub struct FitArgs<'a> {
    pub config: &'a Path,
    pub data: &'a Path,
    pub out: &'a Path,
    pub method: Option<&'a str>,
    pub naive: bool,
}

/// Fits the model and writes `posterior.csv`, `eta.csv` and `plotdata.csv`
/// into the output directory.
pub fn cmd_fit(args: &FitArgs) -> CliResult<Warnings> {
    let config = RunConfig::load(args.config)?;
    let grid = config.grid()?;
    let spec = config.prior()?;
    let method = config.method(args.method)?;
    let data = read_dataset(args.data)?;
    let prior = spec.coefficient_prior(grid.num_intervals())?;
    let FitOutput { summary, warnings } = if args.naive {
        fit_naive(&data, &grid, &prior, method)?
    } else {
        fit_with_prior(&data, &grid, &prior, method)?
    };
    create_dir(args.out)?;
    write_posterior(&args.out.join("posterior.csv"), &summary)?;
    write_eta(&args.out.join("eta.csv"), &summary)?;
    write_plotdata(&args.out.join("plotdata.csv"), &summary)?;
    Ok(warnings)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_posterior(path: &Path, s: &PosteriorSummary) -> CliResult<()> {
    let mut sink = Sink::open(Some(path))?;
    sink.row(["interval", "tau_upper", "coef_name", "mean", "sd"])?;
    for j in 0..s.num_intervals() {
        for (k, name) in s.coefficient_names.iter().enumerate() {
            sink.row([
                (j + 1).to_string(),
                num(s.grid.upper(j)),
                name.clone(),
                num(s.coef_mean(j, k)),
                num(s.coef_sd(j, k)),
            ])?;
        }
    }
    sink.finish()
}

fn write_eta(path: &Path, s: &PosteriorSummary) -> CliResult<()> {
    let mut sink = Sink::open(Some(path))?;
    sink.row(["i", "j", "f_post", "q_post", "alpha_post", "theta_post"])?;
    for e in &s.eta {
        sink.row([
            e.id.clone(),
            (e.interval + 1).to_string(),
            num(e.moments.f),
            num(e.moments.q),
            num(e.belief.alpha()),
            num(e.belief.theta()),
        ])?;
    }
    sink.finish()
}

fn write_plotdata(path: &Path, s: &PosteriorSummary) -> CliResult<()> {
    let mut sink = Sink::open(Some(path))?;
    sink.row(["interval", "tau_mid", "coef_name", "mean", "lower", "upper"])?;
    for j in 0..s.num_intervals() {
        for (k, name) in s.coefficient_names.iter().enumerate() {
            let (m, sd) = (s.coef_mean(j, k), s.coef_sd(j, k));
            sink.row([
                (j + 1).to_string(),
                num(s.grid.midpoint(j)),
                name.clone(),
                num(m),
                num(m - 2.0 * sd),
                num(m + 2.0 * sd),
            ])?;
        }
    }
    sink.finish()
}

pub struct SimulateArgs<'a> {
    pub config: &'a Path,
    pub truth: &'a Path,
    pub n: usize,
    pub censoring: f64,
    pub seed: Option<u64>,
    pub out: Option<&'a Path>,
}

/// Simulates a cohort from a table of true coefficients with one row per
/// interval and the baseline in the first column.
pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Warnings> {
    let config = RunConfig::load(args.config)?;
    let grid = config.grid()?;
    let (header, rows) = read_numeric_table(args.truth)?;
    let truth = truth_matrix(&grid, &header, &rows)?;
    let simulated = simulate_cohort(&grid, &truth, args.n, args.censoring, config.seed(args.seed))?;
    let names = header[1..].to_vec();
    let data = Dataset::new(names, simulated.records().to_vec())?;
    write_dataset(args.out, &data)?;
    Ok(Vec::new())
}

fn truth_matrix(grid: &IntervalGrid, header: &[String], rows: &[Vec<f64>]) -> CliResult<DMatrix<f64>> {
    if header.is_empty() {
        return Err(CliError::Input("truth table needs a baseline column".into()));
    }
    if rows.len() != grid.num_intervals() {
        return Err(CliError::Input(format!(
            "truth table has {} rows but the grid has {} intervals",
            rows.len(),
            grid.num_intervals()
        )));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != header.len()) {
        return Err(CliError::Input(format!("truth table row {} has the wrong number of fields", bad + 1)));
    }
    Ok(DMatrix::from_fn(rows.len(), header.len(), |j, k| rows[j][k]))
}

/// Judgement file: `coef_name,kind,delta,low,high` where `kind` is
/// `lifetime` (range of the mean lifetime, for the baseline), `ratio`
/// (hazard-ratio range for a covariate change of `delta`) or `probability`
/// (range for the probability that the individual with the larger
/// covariate dies first).
pub fn cmd_elicit(judgements: &Path, out: Option<&Path>) -> CliResult<Warnings> {
    let (header, rows) = read_string_table(judgements)?;
    let expected = ["coef_name", "kind", "delta", "low", "high"];
    if header != expected {
        return Err(CliError::Input(format!(
            "{}: header must be {}",
            judgements.display(),
            expected.join(",")
        )));
    }
    let mut sink = Sink::open(out)?;
    sink.row(["coef_name", "mean", "sd", "variance"])?;
    for (k, (line, row)) in rows.iter().enumerate() {
        let fail = |message: String| CliError::Row {
            path: judgements.to_path_buf(),
            line: *line,
            message,
        };
        if row.len() != expected.len() {
            return Err(fail(format!("expected {} fields, found {}", expected.len(), row.len())));
        }
        let value = |i: usize| -> CliResult<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| fail(format!("{} `{}` is not a number", expected[i], row[i])))
        };
        let (low, high) = (value(3)?, value(4)?);
        let moments = match row[1].as_str() {
            "lifetime" => baseline_range(low, high),
            "ratio" => {
                let delta = value(2)?;
                RatioJudgement::new(k, delta, low, high).and_then(|j| moments_from_ratios(&j))
            }
            "probability" => {
                let delta = value(2)?;
                partial_likelihood_to_ratio(low)
                    .and_then(|lo| Ok((lo, partial_likelihood_to_ratio(high)?)))
                    .and_then(|(lo, hi)| RatioJudgement::new(k, delta, lo, hi))
                    .and_then(|j| moments_from_ratios(&j))
            }
            other => return Err(fail(format!("unknown judgement kind `{other}`"))),
        }
        .map_err(|e| fail(e.to_string()))?;
        sink.row([row[0].clone(), num(moments.mean), num(moments.sd), num(moments.variance())])?;
    }
    sink.finish()?;
    Ok(Vec::new())
}

/// Writes the log grid as `interval,tau_upper,tau_lower,tau_mid`.
pub fn cmd_partition(nu: f64, kappa: f64, r: usize, out: Option<&Path>) -> CliResult<Warnings> {
    let grid = IntervalGrid::log_grid(nu, kappa, r)?;
    let mut sink = Sink::open(out)?;
    sink.row(["interval", "tau_upper", "tau_lower", "tau_mid"])?;
    for j in 0..grid.num_intervals() {
        sink.row([
            (j + 1).to_string(),
            num(grid.upper(j)),
            num(grid.lower(j)),
            num(grid.midpoint(j)),
        ])?;
    }
    sink.finish()?;
    Ok(Vec::new())
}

pub struct CompareArgs<'a> {
    pub config: &'a Path,
    pub data: &'a Path,
    pub out: &'a Path,
    pub method: Option<&'a str>,
    pub seed: Option<u64>,
}

/// Fits the model and the reference sampler under the same normal prior and
/// writes `compare.csv` with standardised differences of the means.
pub fn cmd_compare(args: &CompareArgs) -> CliResult<Warnings> {
    let config = RunConfig::load(args.config)?;
    let grid = config.grid()?;
    let spec = config.prior()?;
    let method = config.method(args.method)?;
    let data = read_dataset(args.data)?;
    let prior = spec.coefficient_prior(grid.num_intervals())?;
    let FitOutput { summary, mut warnings } = fit_with_prior(&data, &grid, &prior, method)?;
    let mcmc = mcmc_reference(&data, &grid, &prior, &config.mcmc(config.seed(args.seed)))?;
    warnings.extend(mcmc.warnings.iter().cloned());

    create_dir(args.out)?;
    let mut sink = Sink::open(Some(&args.out.join("compare.csv")))?;
    sink.row([
        "interval",
        "coef_name",
        "blk_mean",
        "blk_sd",
        "mcmc_mean",
        "mcmc_sd",
        "mcmc_mcse",
        "rhat",
        "std_diff",
        "prior_std_diff",
    ])?;
    let dim = summary.dim();
    for j in 0..summary.num_intervals() {
        for (k, name) in summary.coefficient_names.iter().enumerate() {
            let idx = j * dim + k;
            let diff = summary.coef_mean(j, k) - mcmc.mean[idx];
            sink.row([
                (j + 1).to_string(),
                name.clone(),
                num(summary.coef_mean(j, k)),
                num(summary.coef_sd(j, k)),
                num(mcmc.mean[idx]),
                num(mcmc.sd[idx]),
                num(mcmc.mcse[idx]),
                num(mcmc.rhat[idx]),
                num(diff / mcmc.sd[idx]),
                num(diff / summary.prior_sd(j, k)),
            ])?;
        }
    }
    sink.finish()?;
    Ok(warnings)
}
