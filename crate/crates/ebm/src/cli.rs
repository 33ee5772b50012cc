//! Command-line experiment driver: one subcommand per model, plus `run` to
//! replay a saved `config.json`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ebm_core::autoencoder::{
    build_symmetric, corrupt, fine_tune_mse, reconstruct, reconstruction_error_from, PIXEL_SCALE_SQ,
};
use ebm_core::data::{make_batches, one_of_k, BatchedDataset, ClassificationReport};
use ebm_core::dbm::{label_means, mean_field_train, pretrain_dbm};
use ebm_core::dbn::{
    label_distribution, pretrain_dbn, up_down_fine_tune, DEFAULT_CLASSIFY_ITERATIONS,
};
use ebm_core::dnn::{backprop_fine_tune, forward, pretrain_stack, DEFAULT_FINE_TUNE_EPOCHS};
use ebm_core::loss::loss;
use ebm_core::multimodal::{
    modal_error_rate, predict_modal, train_bimodal, BimodalConfig, ModalCorruption,
};
use ebm_core::optim::{AnnealKind, AnnealSchedule, MomentumSchedule, WeightDecay};
use ebm_core::rbm::{head_probabilities, TrainConfig};
use ebm_core::{EpochRecord, LossKind, Matrix, Rng};

use crate::datasets::{data_dir_or, f32be_rows, read_f32be_matrix, read_mnist_dir, LabeledImages};
use crate::error::{IoError, IoResult};
use crate::metrics::MetricsLog;
use crate::model_file::{save, SavedModel};
use crate::pgm::write_tiles_pgm;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MISSING: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

const CLASSES: usize = 10;
const PREVIEW_ROWS: usize = 100;
const EVAL_STREAM: u64 = 0xe7a1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rbm,
    Dnn,
    Dbn,
    Dae,
    Dbm,
    Bimodal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Anneal {
    None,
    Exp,
    Div,
    Step,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    None,
    L1,
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalInputs {
    pub a: PathBuf,
    pub dim_a: usize,
    pub b: PathBuf,
    pub dim_b: usize,
    pub whole_modal: bool,
}

/// Everything a run depends on. Written to `config.json` in the output
/// directory; `ebm run --config` replays it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub layers: Vec<usize>,
    pub epochs: usize,
    pub batches: usize,
    pub lr: f64,
    pub anneal: Anneal,
    pub anneal_k: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub momentum_threshold: usize,
    pub decay: Decay,
    pub decay_k: f64,
    pub dropout: f64,
    pub denoise: f64,
    pub gibbs: usize,
    pub seed: u64,
    pub fine_tune: bool,
    pub fine_tune_epochs: usize,
    pub fine_tune_lr: f64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub modal: Option<ModalInputs>,
}

impl ExperimentConfig {
    /// Defaults for `model` before any flag is applied.
    pub fn defaults(model: ModelKind) -> Self {
        let (layers, denoise, ft_lr) = match model {
            ModelKind::Rbm => (vec![784, 500], 0.0, 0.1),
            ModelKind::Dnn => (vec![784, 500, 300, 200, 10], 0.0, 0.1),
            ModelKind::Dbn => (vec![784, 500, 300], 0.0, 0.001),
            ModelKind::Dae => (vec![784, 500, 300], 0.2, 0.1),
            ModelKind::Dbm => (vec![784, 500, 500], 0.0, 0.001),
            ModelKind::Bimodal => (Vec::new(), 0.3, 0.1),
        };
        let m = MomentumSchedule::default();
        ExperimentConfig {
            model,
            layers,
            epochs: 10,
            batches: 200,
            lr: 0.1,
            anneal: Anneal::None,
            anneal_k: 0.0,
            momentum_early: m.early,
            momentum_late: m.late,
            momentum_threshold: m.threshold,
            decay: Decay::None,
            decay_k: 0.0,
            dropout: 0.0,
            denoise,
            gibbs: 1,
            seed: 1,
            fine_tune: model != ModelKind::Rbm,
            fine_tune_epochs: DEFAULT_FINE_TUNE_EPOCHS,
            fine_tune_lr: ft_lr,
            data_dir: data_dir_or("data/mnist"),
            out_dir: PathBuf::from("out"),
            subset: None,
            test_subset: None,
            modal: None,
        }
    }

    pub fn train_config(&self) -> IoResult<TrainConfig> {
        let kind = match self.anneal {
            Anneal::None => AnnealKind::None,
            Anneal::Exp => AnnealKind::Exponential,
            Anneal::Div => AnnealKind::Divide,
            Anneal::Step => AnnealKind::Step,
        };
        let decay = match self.decay {
            Decay::None => WeightDecay::None,
            Decay::L1 => WeightDecay::L1(self.decay_k),
            Decay::L2 => WeightDecay::L2(self.decay_k),
        };
        let cfg = TrainConfig {
            epochs: self.epochs,
            num_batches: self.batches,
            lr: self.lr,
            anneal: AnnealSchedule::new(kind, self.anneal_k)?,
            momentum: MomentumSchedule {
                early: self.momentum_early,
                late: self.momentum_late,
                threshold: self.momentum_threshold,
            },
            decay,
            dropout_rate: self.dropout,
            gibbs_steps: self.gibbs,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Static checks that need no data.
    pub fn validate(&self) -> IoResult<()> {
        self.train_config()?;
        let bad = |msg: String| Err(IoError::Config(msg));
        if !(self.fine_tune_lr > 0.0 && self.fine_tune_lr.is_finite()) {
            return bad(format!(
                "fine-tune learning rate must be > 0, got {}",
                self.fine_tune_lr
            ));
        }
        if !(0.0..=1.0).contains(&self.denoise) {
            return bad(format!(
                "denoise rate must lie in [0, 1], got {}",
                self.denoise
            ));
        }
        if self.layers.contains(&0) {
            return bad(format!("layer sizes must be positive: {:?}", self.layers));
        }
        if matches!(self.subset, Some(0)) || matches!(self.test_subset, Some(0)) {
            return bad("subsets must keep at least one sample".into());
        }
        let n = self.layers.len();
        let need = match self.model {
            ModelKind::Rbm => (n == 2, "an RBM takes exactly two sizes (visible, hidden)"),
            ModelKind::Dnn => (n >= 2, "a DNN needs at least an input and an output size"),
            ModelKind::Dbn => (
                n >= 2,
                "a DBN needs at least two sizes (labels are added on top)",
            ),
            ModelKind::Dae => (
                n >= 2,
                "an autoencoder needs the input size and at least one code size",
            ),
            ModelKind::Dbm => (
                n >= 3,
                "a DBM needs the input size and at least two hidden sizes",
            ),
            ModelKind::Bimodal => (
                n >= 2 || n == 0,
                "a bimodal autoencoder needs at least two sizes",
            ),
        };
        if !need.0 {
            return bad(need.1.into());
        }
        if self.model == ModelKind::Dnn && self.layers[n - 1] != CLASSES {
            return bad(format!("the DNN output layer must have {CLASSES} units"));
        }
        match (&self.modal, self.model) {
            (None, ModelKind::Bimodal) => {
                bad("run-bimodal needs --modal-a/--dim-a/--modal-b/--dim-b".into())
            }
            (Some(m), ModelKind::Bimodal) if m.dim_a == 0 || m.dim_b == 0 => {
                bad("modal dimensions must be positive".into())
            }
            (Some(_), ModelKind::Bimodal) if self.denoise == 0.0 => {
                bad("bimodal training needs --denoise above 0".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "ebm",
    version,
    about = "Train and evaluate energy-based deep models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// RBM features with a softmax head.
    RunRbm(RbmArgs),
    /// Pretrained classifier stack with backprop fine-tuning.
    RunDnn(CommonArgs),
    /// Deep belief network with up-down fine-tuning.
    RunDbn(CommonArgs),
    /// (Denoising) autoencoder.
    RunDae(CommonArgs),
    /// Deep Boltzmann machine with mean-field training.
    RunDbm(CommonArgs),
    /// Bimodal autoencoder predicting modality B from modality A.
    RunBimodal(BimodalArgs),
    /// Re-run a saved config.json.
    Run(ReplayArgs),
}

#[derive(Args, Debug)]
struct RbmArgs {
    /// Hidden units; shorthand for --layers 784,N.
    #[arg(long)]
    hidden: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct BimodalArgs {
    /// Raw big-endian f32 matrix for modality A.
    #[arg(long)]
    modal_a: PathBuf,
    #[arg(long)]
    dim_a: usize,
    #[arg(long)]
    modal_b: PathBuf,
    #[arg(long)]
    dim_b: usize,
    /// Corrupt whole modalities instead of single entries.
    #[arg(long)]
    whole_modal: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    anneal: Option<Anneal>,
    #[arg(long)]
    anneal_k: Option<f64>,
    #[arg(long)]
    momentum_early: Option<f64>,
    #[arg(long)]
    momentum_late: Option<f64>,
    #[arg(long)]
    momentum_threshold: Option<usize>,
    #[arg(long, value_enum)]
    decay: Option<Decay>,
    #[arg(long)]
    decay_k: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    denoise: Option<f64>,
    #[arg(long)]
    gibbs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    fine_tune: Option<u8>,
    #[arg(long)]
    fine_tune_epochs: Option<usize>,
    #[arg(long)]
    fine_tune_lr: Option<f64>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Keep only the first N training samples.
    #[arg(long)]
    subset: Option<usize>,
    /// Keep only the first N test samples.
    #[arg(long)]
    test_subset: Option<usize>,
}

impl CommonArgs {
    fn apply(self, c: &mut ExperimentConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(
            layers,
            epochs,
            batches,
            lr,
            anneal,
            anneal_k,
            momentum_early,
            momentum_late,
            momentum_threshold,
            decay,
            decay_k,
            dropout,
            denoise,
            gibbs,
            seed,
            fine_tune_epochs,
            fine_tune_lr,
            data_dir,
            out_dir
        );
        if let Some(f) = self.fine_tune {
            c.fine_tune = f == 1;
        }
        if self.subset.is_some() {
            c.subset = self.subset;
        }
        if self.test_subset.is_some() {
            c.test_subset = self.test_subset;
        }
    }
}

fn config_from(command: Command) -> IoResult<ExperimentConfig> {
    let with = |kind, args: CommonArgs| {
        let mut c = ExperimentConfig::defaults(kind);
        args.apply(&mut c);
        c
    };
    Ok(match command {
        Command::RunRbm(a) => {
            let mut c = ExperimentConfig::defaults(ModelKind::Rbm);
            if let Some(h) = a.hidden {
                c.layers = vec![784, h];
            }
            a.common.apply(&mut c);
            c
        }
        Command::RunDnn(a) => with(ModelKind::Dnn, a),
        Command::RunDbn(a) => with(ModelKind::Dbn, a),
        Command::RunDae(a) => with(ModelKind::Dae, a),
        Command::RunDbm(a) => with(ModelKind::Dbm, a),
        Command::RunBimodal(a) => {
            let mut c = ExperimentConfig::defaults(ModelKind::Bimodal);
            c.modal = Some(ModalInputs {
                a: a.modal_a,
                dim_a: a.dim_a,
                b: a.modal_b,
                dim_b: a.dim_b,
                whole_modal: a.whole_modal,
            });
            a.common.apply(&mut c);
            c
        }
        Command::Run(r) => {
            let text = std::fs::read_to_string(&r.config).map_err(|e| IoError::io(&r.config, e))?;
            let mut c: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| IoError::Config(format!("{}: {e}", r.config.display())))?;
            if let Some(o) = r.out_dir {
                c.out_dir = o;
            }
            c
        }
    })
}

/// Exit code for an error.
pub fn exit_code(e: &IoError) -> i32 {
    match e {
        IoError::Missing(_) | IoError::Io { .. } | IoError::Format { .. } => EXIT_MISSING,
        IoError::Core(ebm_core::Error::NonFinite(_)) => EXIT_DIVERGED,
        IoError::Config(_) | IoError::Core(_) => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match config_from(cli.command).and_then(|c| run_experiment(&c)) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Run {
    log: MetricsLog,
    start: Instant,
}

impl Run {
    fn push(&mut self, records: &[EpochRecord]) -> IoResult<()> {
        if let Some(r) = records.iter().find(|r| !r.loss.is_finite()) {
            return Err(ebm_core::Error::NonFinite(r.phase).into());
        }
        self.log
            .push_records(records, self.start.elapsed().as_millis());
        Ok(())
    }
}

struct Split {
    train: Matrix,
    train_labels: Matrix,
    test: Matrix,
    test_labels: Matrix,
}

fn truncate(set: LabeledImages, n: Option<usize>) -> LabeledImages {
    match n {
        Some(n) if n < set.images.rows() => LabeledImages {
            images: set.images.row_range(0..n),
            labels: set.labels.row_range(0..n),
        },
        _ => set,
    }
}

fn load_mnist(c: &ExperimentConfig) -> IoResult<Split> {
    let set = read_mnist_dir(&c.data_dir)?;
    let train = truncate(set.train, c.subset);
    let test = truncate(set.test, c.test_subset);
    Ok(Split {
        train_labels: one_of_k(&train.labels, CLASSES)?,
        train: train.images,
        test_labels: one_of_k(&test.labels, CLASSES)?,
        test: test.images,
    })
}

/// `(loss, error rate)` of a saved model on held-out data. A denoising
/// autoencoder is scored on reconstructing clean inputs from corrupted ones;
/// the corruption depends only on `seed`.
fn evaluate(model: &SavedModel, x: &Matrix, t: &Matrix, seed: u64) -> IoResult<(f64, Option<f64>)> {
    let scores = match model {
        SavedModel::Rbm { rbm, head } => head_probabilities(head, &rbm.hidden_given_visible(x)?)?,
        SavedModel::Dnn(s) => forward(s, x)?.output().clone(),
        SavedModel::Dbn(m) => label_distribution(m, x, DEFAULT_CLASSIFY_ITERATIONS)?,
        SavedModel::Dbm(m) => label_means(m, x)?,
        SavedModel::Ae(ae) => {
            let input = corrupt(x, ae.denoise_rate, &mut Rng::stream(seed, EVAL_STREAM))?;
            return Ok((
                reconstruction_error_from(ae, &input, x)? * PIXEL_SCALE_SQ,
                None,
            ));
        }
        SavedModel::Bimodal(b) => {
            let given = x.col_range(0..b.dim_a)?;
            let truth = x.col_range(b.dim_a..b.dim_a + b.dim_b)?;
            let (pct, _) = modal_error_rate(&predict_modal(b, &given)?, &truth)?;
            return Ok((pct, None));
        }
    };
    let report = ClassificationReport::from_scores(&scores, t)?;
    Ok((
        loss(&scores, t, LossKind::CrossEntropy)?,
        Some(report.error_rate),
    ))
}

fn check_input_dim(c: &ExperimentConfig, cols: usize) -> IoResult<()> {
    if c.layers[0] != cols {
        return Err(IoError::Config(format!(
            "first layer has {} units but the data has {cols} features",
            c.layers[0]
        )));
    }
    Ok(())
}

/// Trains per `c` and writes `config.json`, `model.mdlr`, `metrics.txt` and
/// PGM previews into `c.out_dir`. Returns the summary line.
pub fn run_experiment(c: &ExperimentConfig) -> IoResult<String> {
    c.validate()?;
    let cfg = c.train_config()?;
    let mut run = Run {
        log: MetricsLog::default(),
        start: Instant::now(),
    };
    let split = match c.model {
        ModelKind::Bimodal => load_bimodal(c)?,
        _ => load_mnist(c)?,
    };
    let mut c = c.clone();
    if c.model == ModelKind::Bimodal && c.layers.is_empty() {
        let d = split.train.cols();
        c.layers = vec![d, d];
    }
    check_input_dim(&c, split.train.cols())?;
    let set = make_batches(&split.train, &split.train_labels, c.batches)?;
    let ft = TrainConfig {
        lr: c.fine_tune_lr,
        ..cfg
    };
    let ft_epochs = if c.fine_tune && c.epochs > 0 {
        c.fine_tune_epochs
    } else {
        0
    };

    let baseline = build(&c, &TrainConfig { epochs: 0, ..cfg }, &set, 0, &ft)?.0;
    let (base_loss, base_err) = evaluate(&baseline, &split.test, &split.test_labels, c.seed)?;
    let mut rec = EpochRecord::new("baseline", 0, cfg.lr, cfg.momentum.early, base_loss);
    if let Some(e) = base_err {
        rec = rec.with_error(e);
    }
    run.push(&[rec])?;

    let (model, pretrained, history) = build(&c, &cfg, &set, ft_epochs, &ft)?;
    run.push(&history)?;
    let (test_loss, test_err) = evaluate(&model, &split.test, &split.test_labels, c.seed)?;

    let mut pairs = vec![("model", format!("{:?}", c.model).to_lowercase())];
    if let Some(p) = &pretrained {
        let (pl, pe) = evaluate(p, &split.test, &split.test_labels, c.seed)?;
        match pe {
            Some(e) => pairs.push(("pretrain_error", e.to_string())),
            None => pairs.push(("pretrain_loss", pl.to_string())),
        }
    }
    match test_err {
        Some(e) => pairs.push(("test_error", e.to_string())),
        None => pairs.push(("test_loss", test_loss.to_string())),
    }
    pairs.push(("test_samples", split.test.rows().to_string()));
    run.log.push_summary(&pairs);

    let out = &c.out_dir;
    std::fs::create_dir_all(out).map_err(|e| IoError::io(out, e))?;
    let json = serde_json::to_string_pretty(&c).expect("config serializes");
    crate::error::write_file(&out.join("config.json"), json.as_bytes())?;
    save(&out.join("model.mdlr"), &model)?;
    run.log.write(&out.join("metrics.txt"))?;
    write_previews(out, &model, &split.test)?;
    Ok(run
        .log
        .render()
        .lines()
        .last()
        .unwrap_or_default()
        .to_string())
}

/// Trains the model. Returns it, the pre-fine-tuning snapshot when a
/// fine-tuning phase ran, and the training history.
fn build(
    c: &ExperimentConfig,
    cfg: &TrainConfig,
    set: &BatchedDataset,
    ft_epochs: usize,
    ft: &TrainConfig,
) -> IoResult<(SavedModel, Option<SavedModel>, Vec<EpochRecord>)> {
    let mut layers = c.layers.clone();
    Ok(match c.model {
        ModelKind::Rbm => {
            layers.push(CLASSES);
            let (stack, h) = pretrain_stack(&layers, set, cfg, true)?;
            let [rbm, head]: [_; 2] = stack.layers.try_into().expect("two layers");
            (SavedModel::Rbm { rbm, head }, None, h)
        }
        ModelKind::Dnn => {
            let (mut stack, mut h) = pretrain_stack(&layers, set, cfg, true)?;
            let before = (ft_epochs > 0).then(|| SavedModel::Dnn(stack.clone()));
            h.extend(backprop_fine_tune(
                &mut stack,
                set,
                ft_epochs,
                LossKind::CrossEntropy,
                ft,
            )?);
            (SavedModel::Dnn(stack), before, h)
        }
        ModelKind::Dbn => {
            let (mut m, mut h) = pretrain_dbn(&layers, set, cfg)?;
            let before = (ft_epochs > 0).then(|| SavedModel::Dbn(m.clone()));
            h.extend(up_down_fine_tune(&mut m, set, ft_epochs, ft)?);
            (SavedModel::Dbn(m), before, h)
        }
        ModelKind::Dae => {
            let (ae, mut h) = build_symmetric(&layers, set.data(), cfg)?;
            let mut ae = ae.with_denoise_rate(c.denoise)?;
            let before = (ft_epochs > 0).then(|| SavedModel::Ae(ae.clone()));
            h.extend(fine_tune_mse(&mut ae, set.data(), ft_epochs, ft)?);
            (SavedModel::Ae(ae), before, h)
        }
        ModelKind::Dbm => {
            let (mut m, mut h) = pretrain_dbm(&layers, set.data(), Some(set.labels()), cfg)?;
            let before = (ft_epochs > 0).then(|| SavedModel::Dbm(m.clone()));
            h.extend(mean_field_train(&mut m, set, ft_epochs, ft)?);
            (SavedModel::Dbm(m), before, h)
        }
        ModelKind::Bimodal => {
            let modal = c.modal.as_ref().expect("validated");
            let joined = Matrix::vstack(set.data())?;
            let a = joined.col_range(0..modal.dim_a)?;
            let b = joined.col_range(modal.dim_a..modal.dim_a + modal.dim_b)?;
            let bc = BimodalConfig {
                denoise_rate: c.denoise,
                corruption: if modal.whole_modal {
                    ModalCorruption::WholeModal
                } else {
                    ModalCorruption::Uniform
                },
                fine_tune_epochs: ft_epochs,
            };
            let (m, h) = train_bimodal(&a, &b, &layers, cfg, &bc)?;
            (SavedModel::Bimodal(m), None, h)
        }
    })
}

/// Bimodal inputs as one `[a ‖ b]` matrix; the last fifth of the rows is held
/// out for evaluation. Labels are placeholders.
fn load_bimodal(c: &ExperimentConfig) -> IoResult<Split> {
    let m = c.modal.as_ref().expect("validated");
    let rows_a = f32be_rows(&m.a, m.dim_a)?;
    let rows_b = f32be_rows(&m.b, m.dim_b)?;
    if rows_a != rows_b {
        return Err(IoError::Config(format!(
            "modal files hold {rows_a} and {rows_b} rows"
        )));
    }
    let a = read_f32be_matrix(&m.a, rows_a, m.dim_a)?;
    let b = read_f32be_matrix(&m.b, rows_b, m.dim_b)?;
    let joined = a.hstack(&b)?;
    let rows = c.subset.map_or(rows_a, |s| s.min(rows_a));
    let held = (rows / 5).max(1);
    if rows <= held {
        return Err(IoError::Config(format!(
            "{rows} rows are too few to hold out a test split"
        )));
    }
    let train = joined.row_range(0..rows - held);
    let test = joined.row_range(rows - held..rows);
    let test = match c.test_subset {
        Some(n) if n < test.rows() => test.row_range(0..n),
        _ => test,
    };
    Ok(Split {
        train_labels: Matrix::filled(train.rows(), 1, 1.0),
        test_labels: Matrix::filled(test.rows(), 1, 1.0),
        train,
        test,
    })
}

fn write_previews(out: &Path, model: &SavedModel, test: &Matrix) -> IoResult<()> {
    let first = match model {
        SavedModel::Rbm { rbm, .. } => &rbm.w,
        SavedModel::Dnn(s) => &s.layers[0].w,
        SavedModel::Dbn(m) => m.lower.first().map_or(&m.top.w, |l| &l.recognition),
        SavedModel::Ae(ae) => &ae.stack.layers[0].w,
        SavedModel::Dbm(m) => &m.layers[0].w,
        SavedModel::Bimodal(b) => &b.ae.stack.layers[0].w,
    };
    let shown = first.cols().min(PREVIEW_ROWS);
    write_tiles_pgm(
        &out.join("weights.pgm"),
        &first.transpose().row_range(0..shown),
    )?;
    if let SavedModel::Ae(ae) = model {
        let x = test.row_range(0..test.rows().min(PREVIEW_ROWS / 2));
        let both = Matrix::vstack(&[x.clone(), reconstruct(ae, &x)?])?;
        write_tiles_pgm(&out.join("reconstructions.pgm"), &both)?;
    }
    Ok(())
}
