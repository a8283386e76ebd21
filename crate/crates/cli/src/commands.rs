//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use serde::Serialize;

use distinguish::estimators::{fit_gmm_em, gmm::BicEntry, select_gmm_bic, CovarianceModel, EmOptions};
use distinguish::hyptest::{self, TestMethod};
use distinguish::phm::{self, PhmDendrogram};
use distinguish::pmc::{self, DeltaMatrix, PmcSettings, Rule};
use distinguish::selection::{self, Clusterer, SelectionOptions};
use distinguish::{io, preprocess, validate, ClusterConfiguration, DataMatrix, McEstimate, MergeTrace, MixtureModel};

use crate::report::{self, Failure, EXIT_INFEASIBLE};
use crate::DataArgs;

fn load_data(args: &DataArgs) -> Result<(DataMatrix, Vec<u8>), Failure> {
    let bytes = report::read_input(&args.data)?;
    if !args.delimiter.is_ascii() {
        return Err(Failure::input("invalid_argument", "delimiter must be a single ASCII character"));
    }
    let delim = args.delimiter as u8;
    let header = if args.header {
        true
    } else if args.no_header {
        false
    } else {
        preprocess::sniff_header(&bytes, delim)
    };
    let x = preprocess::parse_csv(&bytes, header, delim)?;
    Ok((x, bytes))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>), Failure> {
    let bytes = report::read_input(path)?;
    let value = serde_json::from_slice(&bytes)
        .map_err(|e| Failure::input("parse", format!("{}: {e}", path.display())))?;
    Ok((value, bytes))
}

/// Parses `a:b` (inclusive), `a,b,c` or a single value.
pub fn parse_range(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::input("invalid_argument", format!("cannot parse range `{s}` (use a:b, a,b,c or a single value)"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let out: Vec<usize> = if let Some((a, b)) = s.split_once(':') {
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(Failure::input("invalid_argument", format!("range `{s}` must hold positive values")));
    }
    Ok(out)
}

fn check_m(m: usize) -> Result<(), Failure> {
    if m < pmc::MIN_M {
        return Err(Failure::input(
            "invalid_argument",
            format!("--m must be at least {}", pmc::MIN_M),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// pmc

#[derive(Args, Debug)]
pub struct PmcArgs {
    /// Mixture model JSON: `{"weights": [...], "components": [{"mean": [...], "covariance": [[...]]}]}`.
    #[arg(long)]
    model: PathBuf,

    /// Cluster configuration JSON `{"assignment": [...]}`; one cluster per
    /// component when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Optional data whose dimension must match the model.
    #[arg(long)]
    data: Option<PathBuf>,

    #[arg(long, default_value = "randomized")]
    rule: Rule,

    /// Monte Carlo sample size.
    #[arg(long, default_value_t = pmc::DEFAULT_M)]
    m: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Also report the pairwise reduction matrix (randomized rule only).
    #[arg(long)]
    delta: bool,

    /// Write the reduction matrix as long-format CSV.
    #[arg(long, requires = "delta")]
    delta_csv: Option<PathBuf>,

    /// Cross-check by numerical integration (one or two dimensions).
    #[arg(long)]
    quadrature: bool,
}

#[derive(Serialize)]
struct PmcOut {
    #[serde(flatten)]
    estimate: McEstimate,
    rule: Rule,
    #[serde(rename = "K")]
    k: usize,
    upper_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    quadrature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<DeltaMatrix>,
}

pub fn pmc(a: PmcArgs) -> Result<ExitCode, Failure> {
    if a.delta && a.rule != Rule::Randomized {
        return Err(Failure::input("invalid_argument", "delta requires randomized rule"));
    }
    check_m(a.m)?;
    let (model, model_bytes): (MixtureModel, _) = load_json(&a.model)?;
    validate(&model).map_err(distinguish::Error::Validation)?;
    let mut inputs = vec![model_bytes];
    let config = match &a.config {
        Some(path) => {
            let (c, bytes): (ClusterConfiguration, _) = load_json(path)?;
            inputs.push(bytes);
            c
        }
        None => ClusterConfiguration::singletons(model.kappa()),
    };
    config.check_against(&model)?;
    if let Some(path) = &a.data {
        let (x, bytes) = load_data(&DataArgs {
            data: path.clone(),
            header: false,
            no_header: false,
            delimiter: ',',
        })?;
        if x.cols() != model.dim() {
            return Err(Failure::input(
                "validation",
                format!("data has {} columns, model has dimension {}", x.cols(), model.dim()),
            ));
        }
        inputs.push(bytes);
    }
    let settings = PmcSettings {
        m_samples: a.m,
        seed: a.seed,
        rule: a.rule,
        quadrature: a.quadrature,
    };
    let rep = pmc::pmc_report(&model, &config, &settings)?;
    let delta = if a.delta {
        let d = pmc::delta_matrix(&model, &config, &settings)?;
        if let Some(path) = &a.delta_csv {
            report::write_output(path, &d.to_csv())?;
        }
        Some(d)
    } else {
        None
    };
    let out = PmcOut {
        estimate: rep.estimate,
        rule: rep.rule,
        k: config.k(),
        upper_bound: rep.upper_bound,
        quadrature: rep.quadrature,
        delta,
    };
    let refs: Vec<&[u8]> = inputs.iter().map(Vec::as_slice).collect();
    report::print(&report::document("pmc", Some(a.seed), &report::inputs_hash(&refs), &out)?);
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// phm

#[derive(Args, Debug)]
pub struct PhmArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Mixture sizes to compare by BIC; a single value skips the scan.
    #[arg(long, default_value = "1:12")]
    kappa_range: String,

    /// Stop merging once P_mc is at or below this; 0 merges everything.
    #[arg(long, default_value_t = 0.01)]
    tau: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = pmc::DEFAULT_M)]
    m: usize,

    /// EM initializations per mixture size.
    #[arg(long, default_value_t = 10)]
    n_init: usize,

    /// Write the Newick dendrogram here (requires --tau 0).
    #[arg(long)]
    dendrogram: Option<PathBuf>,

    /// Write `index,label` hard assignments here.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Serialize)]
struct DendrogramOut {
    #[serde(flatten)]
    tree: PhmDendrogram,
    newick: String,
}

#[derive(Serialize)]
struct PhmOut {
    bic_table: Vec<BicEntry>,
    kappa: usize,
    model: MixtureModel,
    trace: MergeTrace,
    #[serde(rename = "final_K")]
    final_k: usize,
    config: ClusterConfiguration,
    cluster_weights: Vec<f64>,
    labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dendrogram: Option<DendrogramOut>,
}

pub fn phm(a: PhmArgs) -> Result<ExitCode, Failure> {
    check_m(a.m)?;
    if a.dendrogram.is_some() && a.tau != 0.0 {
        return Err(Failure::input(
            "invalid_argument",
            "dendrogram requires complete merge (--tau 0)",
        ));
    }
    let kappas = parse_range(&a.kappa_range)?;
    let (x, bytes) = load_data(&a.data)?;
    let em = EmOptions {
        n_init: a.n_init.max(1),
        seed: a.seed,
        ..EmOptions::default()
    };
    let (fit, bic_table) = if kappas.len() == 1 {
        let fit = fit_gmm_em(&x, kappas[0], &em)?;
        let entry = BicEntry {
            kappa: kappas[0],
            bic: Some(fit.bic),
            loglik: Some(fit.loglik),
        };
        (fit, vec![entry])
    } else {
        let sel = select_gmm_bic(&x, &kappas, &em)?;
        (sel.fit, sel.table)
    };
    let settings = PmcSettings {
        m_samples: a.m,
        seed: a.seed,
        ..PmcSettings::default()
    };
    let run = phm::phm_run(&fit.model, a.tau, &settings)?;
    let labels = phm::assign_points(&fit.model, &run.config, &x)?;
    if let Some(path) = &a.labels {
        report::write_output(path, &io::labels_csv(&labels))?;
    }
    let dendrogram = if a.tau == 0.0 {
        let tree = phm::build_dendrogram(&run.trace)?;
        let newick = tree.to_newick();
        if let Some(path) = &a.dendrogram {
            report::write_output(path, &format!("{newick}\n"))?;
        }
        Some(DendrogramOut { tree, newick })
    } else {
        None
    };
    let out = PhmOut {
        bic_table,
        kappa: fit.model.kappa(),
        final_k: run.config.k(),
        model: fit.model,
        trace: run.trace,
        config: run.config,
        cluster_weights: run.cluster_weights,
        labels,
        dendrogram,
    };
    report::print(&report::document("phm", Some(a.seed), &report::inputs_hash(&[&bytes]), &out)?);
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// select-k

#[derive(Args, Debug)]
pub struct SelectKArgs {
    #[command(flatten)]
    data: DataArgs,

    /// kmeans or hclust (Ward).
    #[arg(long, default_value = "kmeans")]
    method: Clusterer,

    #[arg(long, default_value = "1:8")]
    k_range: String,

    /// Largest acceptable P_mc.
    #[arg(long, default_value_t = 0.05)]
    tau: f64,

    /// `all` adds silhouette, stability and prediction strength.
    #[arg(long, default_value = "none", value_parser = ["none", "all"])]
    indices: String,

    /// Reference data sets for the gap statistic.
    #[arg(long, default_value_t = selection::DEFAULT_REFERENCES)]
    references: usize,

    /// Split repetitions for stability and prediction strength.
    #[arg(long, default_value_t = 20)]
    split_reps: usize,

    /// Covariance of the per-cluster Gaussians used for P_mc: full or pooled.
    #[arg(long, default_value = "full", value_parser = ["full", "pooled"])]
    covariance: String,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = pmc::DEFAULT_M)]
    m: usize,

    /// Write the per-K table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Write `index,label` assignments at the chosen K.
    #[arg(long)]
    labels: Option<PathBuf>,
}

pub fn select_k(a: SelectKArgs) -> Result<ExitCode, Failure> {
    check_m(a.m)?;
    if !(0.0..=1.0).contains(&a.tau) {
        return Err(Failure::input("invalid_argument", "--tau must lie in [0, 1]"));
    }
    let ks = parse_range(&a.k_range)?;
    let (x, bytes) = load_data(&a.data)?;
    let opts = SelectionOptions {
        clusterer: a.method,
        ks,
        tau: a.tau,
        references: a.references,
        seed: a.seed,
        pmc: PmcSettings {
            m_samples: a.m,
            seed: a.seed,
            ..PmcSettings::default()
        },
        covariance: if a.covariance == "pooled" {
            CovarianceModel::Pooled
        } else {
            CovarianceModel::Full
        },
        indices: a.indices == "all",
        split_reps: a.split_reps,
    };
    let table = selection::select_k(&x, &opts)?;
    if let Some(path) = &a.csv {
        report::write_output(path, &table.to_csv())?;
    }
    if let Some(path) = &a.labels {
        report::write_output(path, &io::labels_csv(&table.labels))?;
    }
    report::print(&report::document("select-k", Some(a.seed), &report::inputs_hash(&[&bytes]), &table)?);
    if table.choice.infeasible {
        return Err(Failure {
            code: EXIT_INFEASIBLE,
            kind: "infeasible".into(),
            message: format!(
                "no K in range has P_mc <= {}; reported K={} minimizes P_mc",
                a.tau, table.choice.k
            ),
        });
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// hclust-test

#[derive(Args, Debug)]
pub struct HclustTestArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Null replicates simulated from a standard Gaussian.
    #[arg(long, default_value_t = 5000, conflicts_with = "bootstrap")]
    reps: usize,

    /// Use a parametric bootstrap with this many replicates instead.
    #[arg(long)]
    bootstrap: Option<usize>,

    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn hclust_test(a: HclustTestArgs) -> Result<ExitCode, Failure> {
    let (x, bytes) = load_data(&a.data)?;
    let (method, reps) = match a.bootstrap {
        Some(b) => (TestMethod::Bootstrap, b),
        None => (TestMethod::Mc, a.reps),
    };
    let rep = hyptest::hclust_test(&x, method, reps, a.seed)?;
    report::print(&report::document("hclust-test", Some(a.seed), &report::inputs_hash(&[&bytes]), &rep)?);
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// preprocess

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Subtract column means.
    #[arg(long)]
    center: bool,

    /// Divide columns by their standard deviations.
    #[arg(long)]
    scale: bool,

    /// Keep this many principal components.
    #[arg(long)]
    pca: Option<usize>,

    /// Output CSV.
    #[arg(long)]
    out: PathBuf,

    /// Scree table path (default: next to the output, `_scree.csv` suffix).
    #[arg(long, requires = "pca")]
    scree: Option<PathBuf>,
}

#[derive(Serialize)]
struct PreprocessOut {
    rows: usize,
    cols: usize,
    out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    scree: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stdev_per_component: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loadings: Option<Vec<Vec<f64>>>,
}

fn default_scree_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_scree.csv"))
}

pub fn preprocess(a: PreprocessArgs) -> Result<ExitCode, Failure> {
    let (x, bytes) = load_data(&a.data)?;
    let y = preprocess::standardize(&x, a.center, a.scale)?;
    let out = match a.pca {
        Some(q) => {
            let r = preprocess::pca(&y, q)?;
            let scree = a.scree.clone().unwrap_or_else(|| default_scree_path(&a.out));
            report::write_output(&a.out, &io::matrix_csv(&r.scores))?;
            report::write_output(&scree, &r.scree_csv())?;
            PreprocessOut {
                rows: r.scores.rows(),
                cols: r.scores.cols(),
                out: a.out.clone(),
                scree: Some(scree),
                stdev_per_component: Some(r.stdev_per_component),
                loadings: Some(r.loadings),
            }
        }
        None => {
            report::write_output(&a.out, &io::matrix_csv(&y))?;
            PreprocessOut {
                rows: y.rows(),
                cols: y.cols(),
                out: a.out.clone(),
                scree: None,
                stdev_per_component: None,
                loadings: None,
            }
        }
    };
    report::print(&report::document("preprocess", None, &report::inputs_hash(&[&bytes]), &out)?);
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1:4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_range("3:3").unwrap(), vec![3]);
        assert_eq!(parse_range("2,5").unwrap(), vec![2, 5]);
        assert_eq!(parse_range("6").unwrap(), vec![6]);
        assert!(parse_range("4:1").is_err());
        assert!(parse_range("0:3").is_err());
        assert!(parse_range("a").is_err());
    }

    #[test]
    fn scree_path_sits_next_to_output() {
        assert_eq!(default_scree_path(Path::new("/tmp/y.csv")), PathBuf::from("/tmp/y_scree.csv"));
    }
}
