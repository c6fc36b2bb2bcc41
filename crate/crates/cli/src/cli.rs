use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use debridge::encodings::EncodingKind;
use debridge::{CrossMode, RadialKind, RadiusRule};

/// Distance encodings vs. diffusion geometry: validation studies and feature
/// emission.
#[derive(Debug, Parser)]
#[command(name = "debridge", version)]
pub struct Cli {
    /// `key = value` file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linkage, Frobenius-gap and trilateration study on random regular graphs.
    RrgValidate(RrgArgs),
    /// Nyström approximation of the diffusion kernel on a graph corpus.
    DiffusionApprox(DiffusionArgs),
    /// Per-node positional features (DE, LapPE, RWSE, HKS).
    EmitFeatures(FeatureArgs),
    /// Feature statistics and Nyström diagnostics over a ψ × k grid.
    AblationSweep(AblationArgs),
    /// Writes a synthetic edge-list corpus.
    GenerateCorpus(CorpusArgs),
}

#[derive(Debug, Args)]
pub struct RrgArgs {
    /// Graph sizes, comma separated [default: 256,512,1024,2048]
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Degree [default: 6]
    #[arg(long)]
    pub r: Option<usize>,
    /// Diffusion time [default: 1]
    #[arg(long)]
    pub t: Option<f64>,
    /// Truncation order [default: 8]
    #[arg(long)]
    pub m: Option<usize>,
    /// ln | log2 | log10 | <hops> [default: ln]
    #[arg(long)]
    pub radius_rule: Option<RadiusRule>,
    /// Replicates per n [default: 3]
    #[arg(long)]
    pub seeds: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub root_seed: Option<u64>,
    /// Pairs used to fit the link: all_pairs | node_anchor [default: all_pairs]
    #[arg(long)]
    pub link_scope: Option<String>,
    /// Per-cell CSV; the summary and sidecar are written next to it
    /// [default: rrg_validate.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NystromArgs {
    /// Anchor count, capped at each graph's size [default: 32]
    #[arg(long)]
    pub k: Option<usize>,
    /// Diffusion time [default: 1]
    #[arg(long)]
    pub t: Option<f64>,
    /// Embedding order [default: 8]
    #[arg(long)]
    pub m: Option<usize>,
    /// Tikhonov ridge [default: 1e-6 * trace(K_AA) / k]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// exact_columns | distance_driven [default: distance_driven]
    #[arg(long)]
    pub mode: Option<CrossMode>,
    /// Link radius rule [default: ln]
    #[arg(long)]
    pub radius_rule: Option<RadiusRule>,
}

#[derive(Debug, Args)]
pub struct DiffusionArgs {
    /// Edge-list globs
    #[arg(long, value_delimiter = ',')]
    pub input: Option<Vec<String>>,
    /// [default: diffusion_approx.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for per-graph node-wise embedding errors
    #[arg(long)]
    pub node_errors: Option<PathBuf>,
    #[command(flatten)]
    pub nystrom: NystromArgs,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Edge-list globs
    #[arg(long, value_delimiter = ',')]
    pub input: Option<Vec<String>>,
    /// DE | LapPE | RWSE | HKS [default: DE]
    #[arg(long)]
    pub kind: Option<EncodingKind>,
    /// [default: features]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// DE anchor count [default: 16]
    #[arg(long)]
    pub k: Option<usize>,
    /// DE radial map: identity | exp_neg | log1p [default: exp_neg]
    #[arg(long)]
    pub psi: Option<RadialKind>,
    /// Standardize DE columns with corpus-level moments
    #[arg(long)]
    pub standardize: bool,
    /// LapPE order [default: 8]
    #[arg(long)]
    pub m: Option<usize>,
    /// LapPE Gaussian noise sigma
    #[arg(long)]
    pub lappe_noise: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub root_seed: Option<u64>,
    /// RWSE walk lengths [default: 1,2,4,8,16]
    #[arg(long, value_delimiter = ',')]
    pub steps: Option<Vec<usize>>,
    /// HKS times [default: 0.1,0.5,1,2,5]
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// HKS spectrum truncation, capped at n [default: 32]
    #[arg(long)]
    pub trunc_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    /// Edge-list globs
    #[arg(long, value_delimiter = ',')]
    pub input: Option<Vec<String>>,
    /// [default: ablation.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Radial maps [default: identity,exp_neg,log1p]
    #[arg(long, value_delimiter = ',')]
    pub psi: Option<Vec<RadialKind>>,
    /// Anchor counts [default: 16]
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[command(flatten)]
    pub nystrom: NystromArgs,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// molecule | rrg [default: molecule]
    #[arg(long)]
    pub family: Option<String>,
    /// [default: 20]
    #[arg(long)]
    pub count: Option<usize>,
    /// Smallest size; the only size for rrg [default: 50]
    #[arg(long)]
    pub n_min: Option<usize>,
    /// [default: 200]
    #[arg(long)]
    pub n_max: Option<usize>,
    /// rrg degree [default: 6]
    #[arg(long)]
    pub r: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub root_seed: Option<u64>,
    /// [default: corpus]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
