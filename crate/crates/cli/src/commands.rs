//! Standalone subcommands. Each reads its inputs from files and writes the
//! same artifacts the full pipeline produces for that stage.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use multiview_core::ajive::{ajive_decompose, variance_explained, AjiveConfig, AjiveResult};
use multiview_core::matrix::{standardize_columns, write_labelled_csv};
use multiview_core::patches::{write_arrays, write_manifest, ByteOrder, Dtype, PatchConfig};
use multiview_core::pca::{concat_views, pca, score_correlation_matrix};
use multiview_core::rank::{scree, suggest_initial_rank, BoundMode, ScreeData, DEFAULT_BOUND_PERCENTILE, DEFAULT_BOUND_SAMPLES};
use multiview_core::synth::{generate, ResponseSpec, SynthSpec};
use multiview_core::FeatureMatrix;
use ndarray::Array2;
use serde::Serialize;

use crate::config::{self, RankSettings};
use crate::error::{CliError, Result};
use crate::extremes::{extremes, write_extremes};
use crate::outputs::{
    create, ensure_dir, write_ajive, write_bound_samples, write_correlations, write_json, write_matrix, write_pca,
    write_scree, write_variance, ChosenRanks,
};
use crate::pipeline::{joint_extremes, joint_rule};
use crate::regress::{feature_views, regress, FeatureKind, LambdaMode, RegressionSettings};
use crate::sources::{aggregate, patch_features, AggregateRecipe, PatchRecipe};

#[derive(Debug, Parser)]
#[command(name = "multiview", version, about = "Joint and individual decomposition of multiview data, with cooperative regression")]
pub struct Cli {
    /// Pipeline config (run) or synthetic spec (simulate), JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline described by --config.
    Run,
    /// Generate synthetic views with planted joint and individual structure.
    Simulate(SimulateArgs),
    /// Scree spectra, random direction bound and chosen ranks.
    Ranks(RanksArgs),
    /// Joint and individual decomposition.
    Ajive(AjiveArgs),
    /// Principal components of one view or of several views concatenated.
    Pca(PcaArgs),
    /// Cross-validated cooperative regression.
    Regress(RegressArgs),
    /// Area-weighted aggregation of site features to units.
    Aggregate(AggregateArgs),
    /// Patch sampling and image features.
    Patches(PatchesArgs),
    /// Most positive and most negative units on a score column.
    Extremes(ExtremesArgs),
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    /// Feature matrix CSVs, one per view.
    #[arg(long, num_args = 1.., required = true)]
    pub views: Vec<PathBuf>,
    /// View names (default: file stems).
    #[arg(long, value_delimiter = ',')]
    pub names: Vec<String>,
    /// Standardize every column before analysis.
    #[arg(long)]
    pub standardize: bool,
}

impl ViewArgs {
    pub fn load(&self) -> Result<(Vec<FeatureMatrix>, Vec<String>)> {
        for p in &self.views {
            require(p)?;
        }
        let names: Vec<String> = if self.names.is_empty() {
            self.views
                .iter()
                .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
                .collect()
        } else {
            self.names.clone()
        };
        if names.len() != self.views.len() {
            return Err(CliError::Config(format!("{} names for {} views", names.len(), self.views.len())));
        }
        let views = self
            .views
            .iter()
            .map(|p| {
                let m = FeatureMatrix::from_path(p)?;
                if self.standardize {
                    Ok(standardize_columns(&m)?)
                } else {
                    Ok(m)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((views, names))
    }
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Initial signal ranks (default: largest relative scree gap).
    #[arg(long, value_delimiter = ',')]
    pub initial_ranks: Vec<usize>,
    /// Largest rank the scree suggestion considers.
    #[arg(long, default_value_t = 10)]
    pub max_rank: usize,
    #[arg(long, default_value_t = DEFAULT_BOUND_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_BOUND_PERCENTILE)]
    pub percentile: f64,
    /// Compare the i-th singular value with the i-th simulated percentile.
    #[arg(long)]
    pub per_index: bool,
    /// Fix the joint rank instead of using the bound.
    #[arg(long)]
    pub joint_rank: Option<usize>,
    /// Fix the individual ranks instead of using the midpoint thresholds.
    #[arg(long, value_delimiter = ',')]
    pub individual_ranks: Vec<usize>,
}

impl RankArgs {
    pub fn settings(&self) -> RankSettings {
        RankSettings {
            initial: (!self.initial_ranks.is_empty()).then(|| self.initial_ranks.clone()),
            max_rank: self.max_rank,
            n_samples: self.samples,
            percentile: self.percentile,
            mode: if self.per_index {
                BoundMode::PerIndex
            } else {
                BoundMode::MaxBound
            },
            joint: self.joint_rank,
            individual: (!self.individual_ranks.is_empty()).then(|| self.individual_ranks.clone()),
            sweep: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 383)]
    pub n: usize,
    /// Features per view.
    #[arg(long, value_delimiter = ',', default_values_t = [20, 1536])]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub joint_rank: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 1])]
    pub individual_ranks: Vec<usize>,
    /// Weakest joint singular value over noise_sd·sqrt(max(n, p)); `inf` for
    /// no noise.
    #[arg(long, default_value_t = 10.0)]
    pub snr: f64,
    /// Weights of the joint scores in a simulated response.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub response_weights: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub response_noise: f64,
}

#[derive(Debug, Args)]
pub struct RanksArgs {
    #[command(flatten)]
    pub views: ViewArgs,
    #[command(flatten)]
    pub ranks: RankArgs,
}

#[derive(Debug, Args)]
pub struct AjiveArgs {
    #[command(flatten)]
    pub views: ViewArgs,
    #[command(flatten)]
    pub ranks: RankArgs,
    /// External scores `NAME=PATH` (CSV unit_id,score) to correlate with.
    #[arg(long)]
    pub external: Vec<String>,
    /// Units per side listed for each joint component.
    #[arg(long, default_value_t = 2)]
    pub extremes: usize,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[command(flatten)]
    pub views: ViewArgs,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[command(flatten)]
    pub views: ViewArgs,
    /// Response CSV `unit_id,score`.
    #[arg(long)]
    pub response: PathBuf,
    #[arg(long, value_enum, default_value_t = FeatureKind::Ajive)]
    pub source: FeatureKind,
    /// Components shared out across views (pca and ajive sources).
    #[arg(long, default_value_t = 30)]
    pub total: usize,
    /// Fail instead of using fewer components when too few exist.
    #[arg(long)]
    pub no_clip: bool,
    #[command(flatten)]
    pub ranks: RankArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])]
    pub rhos: Vec<f64>,
    #[arg(long, value_enum, default_value_t = LambdaMode::Tied)]
    pub lambda_mode: LambdaMode,
    #[arg(long, default_value_t = 50)]
    pub n_lambda: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_ratio: f64,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub folds: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// GeoJSON unit polygons.
    #[arg(long)]
    pub units: PathBuf,
    /// CSV `id,x,y`.
    #[arg(long)]
    pub sites: PathBuf,
    /// GeoJSON boundary polygon.
    #[arg(long)]
    pub boundary: PathBuf,
    /// Site feature matrix; the first column holds site ids under any header.
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct PatchesArgs {
    /// Directory of PNG images, one per unit.
    #[arg(long, conflicts_with_all = ["manifest", "embeddings", "sidecar"])]
    pub images: Option<PathBuf>,
    /// Manifest of externally embedded patches.
    #[arg(long, requires_all = ["embeddings", "sidecar"])]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    #[arg(long, default_value_t = PatchConfig::default().count)]
    pub count: usize,
    #[arg(long, default_value_t = PatchConfig::default().size)]
    pub size: usize,
    #[arg(long, default_value_t = PatchConfig::default().max_black_frac)]
    pub max_black: f64,
    #[arg(long, default_value_t = PatchConfig::default().max_attempts)]
    pub max_attempts: usize,
    /// Pooling grid of the stub embedder.
    #[arg(long, default_value_t = 4)]
    pub grid: usize,
    /// Store embeddings as 32-bit floats.
    #[arg(long)]
    pub f32: bool,
}

#[derive(Debug, Args)]
pub struct ExtremesArgs {
    /// Score CSV (unit_id then one column per component).
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub component: String,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
}

fn require(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{} does not exist", p.display())))
    }
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Config("--out is required".into()))?;
    ensure_dir(&out)?;
    Ok(out)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run => run(cli),
        Command::Simulate(a) => simulate(cli, a),
        Command::Ranks(a) => ranks(cli, a),
        Command::Ajive(a) => ajive(cli, a),
        Command::Pca(a) => pca_cmd(cli, a),
        Command::Regress(a) => regress_cmd(cli, a),
        Command::Aggregate(a) => aggregate_cmd(cli, a),
        Command::Patches(a) => patches(cli, a),
        Command::Extremes(a) => extremes_cmd(cli, a),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("run needs --config".into()))?;
    let loaded = config::load(path)?;
    let out = cli
        .out
        .clone()
        .or_else(|| loaded.config.output.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `output`".into()))?;
    let seed = cli.seed.unwrap_or(loaded.config.seed);
    crate::pipeline::run(&loaded.config, &loaded.hash, &out, seed)?;
    Ok(())
}

#[derive(Serialize)]
struct Truth<'a> {
    spec: &'a SynthSpec,
    snr: f64,
    joint_scores: &'a Array2<f64>,
    individual_scores: &'a [Array2<f64>],
    joint_loadings: &'a [Array2<f64>],
    individual_loadings: &'a [Array2<f64>],
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let mut spec = match &cli.config {
        Some(p) => {
            require(p)?;
            let text = std::fs::read(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_slice::<SynthSpec>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => {
            if a.individual_ranks.len() != a.p.len() {
                return Err(CliError::Config(format!(
                    "{} individual ranks for {} views",
                    a.individual_ranks.len(),
                    a.p.len()
                )));
            }
            let mut spec = SynthSpec::planted(a.n, a.p.clone(), a.joint_rank, a.individual_ranks.clone(), a.snr, 0);
            if !a.response_weights.is_empty() {
                spec.response = Some(ResponseSpec {
                    weights: a.response_weights.clone(),
                    noise_sd: a.response_noise,
                });
            }
            spec
        }
    };
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    let truth = generate(&spec).map_err(|e| match e {
        multiview_core::Error::SpecInfeasible(m) => CliError::Config(m),
        e => e.into(),
    })?;
    for (i, v) in truth.views.iter().enumerate() {
        v.to_path(out.join(format!("view{}.csv", i + 1)))?;
    }
    if let Some(y) = &truth.response {
        let ids = truth.views[0].unit_ids();
        let m = y.view().insert_axis(ndarray::Axis(1)).to_owned();
        write_matrix(&out.join("response.csv"), "unit_id", ids, &["score".into()], &m)?;
    }
    write_json(
        &out.join("truth.json"),
        &Truth {
            spec: &spec,
            snr: spec.snr(),
            joint_scores: &truth.joint_scores,
            individual_scores: &truth.individual_scores,
            joint_loadings: &truth.joint_loadings,
            individual_loadings: &truth.individual_loadings,
        },
    )
}

fn decompose(views: &[FeatureMatrix], r: &RankSettings, seed: u64) -> Result<(AjiveResult, Vec<(String, ScreeData)>)> {
    let screes: Vec<(String, ScreeData)> = views
        .iter()
        .enumerate()
        .map(|(i, v)| Ok((i.to_string(), scree(v)?)))
        .collect::<Result<_>>()?;
    let initial = match &r.initial {
        Some(init) => {
            if init.len() != views.len() {
                return Err(CliError::Config(format!("{} initial ranks for {} views", init.len(), views.len())));
            }
            init.clone()
        }
        None => screes.iter().map(|(_, s)| suggest_initial_rank(s, r.max_rank)).collect(),
    };
    let cfg = AjiveConfig {
        initial_ranks: initial,
        joint_rank: joint_rule(r),
        individual_ranks: r.individual.clone(),
        seed,
    };
    Ok((ajive_decompose(views, &cfg)?, screes))
}

fn ranks(cli: &Cli, a: &RanksArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let (views, names) = a.views.load()?;
    let (res, screes) = decompose(&views, &a.ranks.settings(), cli.seed.unwrap_or(0))?;
    let named: Vec<(String, ScreeData)> = names.iter().cloned().zip(screes.into_iter().map(|s| s.1)).collect();
    write_scree(&out.join("scree.csv"), &named)?;
    write_bound_samples(&out.join("bound_samples.csv"), &res.ranks.bound_samples)?;
    write_json(&out.join("chosen_ranks.json"), &ChosenRanks::from_result(&res))
}

fn ajive(cli: &Cli, a: &AjiveArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let (views, names) = a.views.load()?;
    let (res, _) = decompose(&views, &a.ranks.settings(), cli.seed.unwrap_or(0))?;
    write_ajive(&out, &names, &res)?;
    write_variance(&out.join("variance.json"), &names, &variance_explained(&res, &views)?)?;
    write_json(&out.join("chosen_ranks.json"), &ChosenRanks::from_result(&res))?;
    let mut sets = vec![("JC".to_string(), res.joint_scores.clone())];
    for (i, n) in names.iter().enumerate() {
        sets.push((format!("IC_{n}"), res.individual[i].scores.clone()));
    }
    let external = a
        .external
        .iter()
        .map(|spec| {
            let (name, path) = spec
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--external expects NAME=PATH, got `{spec}`")))?;
            let path = Path::new(path);
            require(path)?;
            let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            let scores = multiview_core::matrix::read_scores_csv(std::io::BufReader::new(file))?;
            Ok((name.to_owned(), multiview_core::matrix::align_scores(&scores, &res.unit_ids)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_correlations(&out.join("correlations.csv"), &score_correlation_matrix(&sets, &external)?)?;
    if a.extremes > 0 && res.joint_rank() > 0 {
        write_extremes(create(&out.join("extremes.csv"))?, &joint_extremes(&res, a.extremes)?)?;
    }
    Ok(())
}

fn pca_cmd(cli: &Cli, a: &PcaArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let (views, names) = a.views.load()?;
    let m = if views.len() == 1 {
        views.into_iter().next().expect("one view")
    } else {
        let pairs: Vec<(&str, &FeatureMatrix)> = names.iter().map(String::as_str).zip(views.iter()).collect();
        concat_views(&pairs)?
    };
    let res = pca(&m, a.components)?;
    write_pca(&out, "", &res)?;
    Ok(())
}

fn regress_cmd(cli: &Cli, a: &RegressArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let seed = cli.seed.unwrap_or(0);
    let (views, names) = a.views.load()?;
    require(&a.response)?;
    let (views, dropped) = multiview_core::matrix::intersect_units(&views)?;
    if !dropped.is_empty() {
        log::warn!("dropping {} units missing from some view", dropped.len());
    }
    let settings = RegressionSettings {
        source: a.source,
        total_components: a.total,
        clip: !a.no_clip,
        rhos: a.rhos.clone(),
        lambda_mode: a.lambda_mode,
        n_lambda: a.n_lambda,
        lambda_ratio: a.lambda_ratio,
        lambda_max: a.lambda_max,
        folds: a.folds,
        repeats: a.repeats,
    };
    settings.validate()?;
    let decomposition = match a.source {
        FeatureKind::Ajive => Some(decompose(&views, &a.ranks.settings(), seed)?.0),
        _ => None,
    };
    let file = std::fs::File::open(&a.response).map_err(|e| CliError::io(&a.response, e))?;
    let scores = multiview_core::matrix::read_scores_csv(std::io::BufReader::new(file))?;
    let y = multiview_core::matrix::align_scores(&scores, views[0].unit_ids())?;
    let sets = feature_views(&views, &names, &settings, decomposition.as_ref())?;
    let fitted = regress(&sets, &y, &settings, seed)?;
    fitted.report.write_csv(create(&out.join("cv_report.csv"))?)?;
    write_json(&out.join("model.json"), &fitted.model)
}

fn aggregate_cmd(cli: &Cli, a: &AggregateArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let recipe = AggregateRecipe {
        units: a.units.clone(),
        sites: a.sites.clone(),
        boundary: a.boundary.clone(),
        features: a.features.clone(),
    };
    for p in recipe.paths() {
        require(p)?;
    }
    let (gamma, features) = aggregate(&recipe)?;
    gamma.write_csv(create(&out.join("overlap.csv"))?)?;
    features.write_csv(create(&out.join("features.csv"))?)?;
    Ok(())
}

fn patches(cli: &Cli, a: &PatchesArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let recipe = match (&a.images, &a.manifest, &a.embeddings, &a.sidecar) {
        (Some(images), None, None, None) => PatchRecipe::Images {
            images: images.clone(),
            sampling: PatchConfig {
                count: a.count,
                size: a.size,
                max_black_frac: a.max_black,
                max_attempts: a.max_attempts,
            },
            grid: a.grid,
        },
        (None, Some(m), Some(e), Some(s)) => PatchRecipe::Embeddings {
            manifest: m.clone(),
            embeddings: e.clone(),
            sidecar: s.clone(),
        },
        _ => {
            return Err(CliError::Config(
                "pass either --images or all of --manifest, --embeddings and --sidecar".into(),
            ))
        }
    };
    for p in recipe.paths() {
        require(p)?;
    }
    let result = patch_features(&recipe, cli.seed.unwrap_or(0))?;
    if !result.arrays.is_empty() {
        write_manifest(create(&out.join("manifest.csv"))?, &result.manifest)?;
        let dtype = if a.f32 { Dtype::F32 } else { Dtype::F64 };
        write_arrays(
            &out.join("embeddings.bin"),
            &out.join("embeddings.json"),
            &result.arrays,
            dtype,
            ByteOrder::Little,
        )?;
    }
    result.features.write_csv(create(&out.join("features.csv"))?)?;
    Ok(())
}

fn extremes_cmd(cli: &Cli, a: &ExtremesArgs) -> Result<()> {
    require(&a.scores)?;
    let scores = FeatureMatrix::from_path(&a.scores)?;
    let e = extremes(&scores, &a.component, a.k)?;
    match &cli.out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_extremes(create(&dir.join("extremes.csv"))?, &[e])
        }
        None => write_extremes(std::io::stdout().lock(), &[e]),
    }
}

/// Writes a unit-by-value table; used for single-column score files.
pub fn write_scores(path: &Path, ids: &[String], name: &str, values: &[f64]) -> Result<()> {
    let m = Array2::from_shape_fn((values.len(), 1), |(i, _)| values[i]);
    let mut w = create(path)?;
    write_labelled_csv(&mut w, "unit_id", ids, &[name.to_owned()], &m)?;
    Ok(())
}
