use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ctpred_core::autodiff::finite_diff_check;
use ctpred_core::baselines::{train_discrete, DiscreteModel};
use ctpred_core::channelsim::{generate_dataset, load_dataset, save_dataset, Dataset, Mode, SystemConfig};
use ctpred_core::evalkit::{evaluate_methods, write_report, Method, Predictor};
use ctpred_core::tnode::{count_flops, Checkpoint, ModelParams, SampleObjective};
use ctpred_core::training::{input_scale, to_db, train_tnode, EpochRecord, TrainState};
use ctpred_core::{Error, Result};

use crate::config::RunConfig;

/// Model initialization draws from ChaCha8 stream `INIT_STREAM_BASE + k`
/// of the run seed, `k` = 0 (TN-ODE), 1 (GRU), 2 (FC).
pub const INIT_STREAM_BASE: u64 = 2 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Tnode,
    Gru,
    Fc,
}

impl ModelKind {
    fn stream(self) -> u64 {
        INIT_STREAM_BASE
            + match self {
                ModelKind::Tnode => 0,
                ModelKind::Gru => 1,
                ModelKind::Fc => 2,
            }
    }
}

fn init_rng(seed: u64, kind: ModelKind) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind.stream());
    rng
}

/// Equal up to the seed, which only selects random draws.
fn same_system(a: &SystemConfig, b: &SystemConfig) -> bool {
    SystemConfig { seed: 0, ..a.clone() } == SystemConfig { seed: 0, ..b.clone() }
}

fn require_system(what: &str, found: &SystemConfig, expected: &SystemConfig) -> Result<()> {
    if same_system(found, expected) {
        Ok(())
    } else {
        Err(Error::config(what, "was built with a different system configuration"))
    }
}

pub fn generate(rc: &RunConfig, out: &Path, samples: usize, mode: Mode) -> Result<()> {
    let ds = generate_dataset(&rc.system, samples, mode)?;
    save_dataset(&ds, out)?;
    println!("samples: {}", ds.len());
    println!("mode: {}", if mode == Mode::Train { "train" } else { "test" });
    println!("e_avg: {:.6e}", ds.e_avg);
    println!("sha256: {}", ds.content_hash());
    Ok(())
}

enum Model {
    Tnode(ModelParams),
    Discrete(DiscreteModel),
}

impl Model {
    fn names(&self) -> Vec<String> {
        match self {
            Model::Tnode(_) => ModelParams::names(),
            Model::Discrete(m) => m.names(),
        }
    }

    fn checkpoint(names: &[String], cfg: &SystemConfig, params: &[ctpred_core::ctmath::CMatrix], state: &TrainState) -> Checkpoint {
        let mut ck = Checkpoint::new(cfg.clone());
        for (n, p) in names.iter().zip(params) {
            ck.insert(n.clone(), p.clone());
        }
        state.write(&mut ck, names);
        ck
    }
}

pub struct TrainArgs<'a> {
    pub data: &'a Path,
    pub out: &'a Path,
    pub model: ModelKind,
    pub loss_csv: Option<&'a Path>,
    pub resume: bool,
}

fn loss_csv_path(args: &TrainArgs) -> PathBuf {
    args.loss_csv
        .map(Path::to_path_buf)
        .unwrap_or_else(|| args.out.with_extension("loss.csv"))
}

pub fn train(rc: &RunConfig, args: &TrainArgs) -> Result<()> {
    let ds = load_dataset(args.data)?;
    require_system("data", &ds.config, &rc.system)?;
    if ds.mode() != Mode::Train {
        return Err(Error::config("data", "training needs a train-mode dataset"));
    }
    let cfg = &ds.config;
    let seed = rc.train.seed;
    let resumed = if args.resume && args.out.exists() {
        let ck = Checkpoint::load(args.out)?;
        require_system("checkpoint", &ck.config, cfg)?;
        Some(ck)
    } else {
        None
    };
    let mut rng = init_rng(seed, args.model);
    let model = match (args.model, &resumed) {
        (ModelKind::Tnode, Some(ck)) => Model::Tnode(ModelParams::from_checkpoint(ck)?),
        (ModelKind::Tnode, None) => Model::Tnode(ModelParams::init(cfg, &mut rng)),
        (ModelKind::Gru, Some(ck)) => Model::Discrete(DiscreteModel::from_checkpoint(ck, "gru")?),
        (ModelKind::Gru, None) => Model::Discrete(DiscreteModel::new_gru(cfg, rc.gru_hidden, &mut rng)),
        (ModelKind::Fc, Some(ck)) => Model::Discrete(DiscreteModel::from_checkpoint(ck, "fc")?),
        (ModelKind::Fc, None) => Model::Discrete(DiscreteModel::new_fc(cfg, rc.fc_width, &mut rng)),
    };
    let names = model.names();
    let flat = match &model {
        Model::Tnode(p) => p.clone().into_vec(),
        Model::Discrete(m) => m.to_vec(),
    };
    let mut state = match &resumed {
        Some(ck) => TrainState::read(ck, &names)?.unwrap_or_else(|| TrainState::new(&flat)),
        None => TrainState::new(&flat),
    };

    let csv_path = loss_csv_path(args);
    let appending = resumed.is_some() && state.epoch > 0 && csv_path.exists();
    let mut csv: File = if appending {
        OpenOptions::new().append(true).open(&csv_path)?
    } else {
        let mut f = File::create(&csv_path)?;
        writeln!(f, "epoch,mean_train_nmse_db,wall_seconds")?;
        f
    };
    let every = rc.train.checkpoint_every;
    let mut hook = |r: &EpochRecord, params: &[ctpred_core::ctmath::CMatrix], st: &TrainState| -> Result<()> {
        writeln!(csv, "{},{:.6},{:.3}", r.epoch, r.mean_nmse_db(), r.wall_seconds)?;
        println!("epoch {:>4}  train NMSE {:>8.3} dB  {:>8.1} s", r.epoch, r.mean_nmse_db(), r.wall_seconds);
        if every > 0 && st.epoch.is_multiple_of(every) {
            Model::checkpoint(&names, cfg, params, st).save(args.out)?;
        }
        Ok(())
    };
    let final_flat = match model {
        Model::Tnode(mut p) => {
            train_tnode(&mut p, &ds, &rc.train, &rc.solver(), &mut state, &mut hook)?;
            p.into_vec()
        }
        Model::Discrete(mut m) => {
            train_discrete(&mut m, &ds, &rc.train, &mut state, &mut hook)?;
            m.to_vec()
        }
    };
    Model::checkpoint(&names, cfg, &final_flat, &state).save(args.out)?;
    match state.history.last() {
        Some(&l) => println!("final train NMSE: {:.3} dB after {} epochs", to_db(l), state.epoch),
        None => println!("no epochs run"),
    }
    Ok(())
}

/// Parses `outdated,gru=PATH,fc=PATH`.
pub fn parse_baselines(spec: &str) -> Result<Vec<(String, Option<PathBuf>)>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, path) = match item.split_once('=') {
            Some((n, p)) => (n.trim(), Some(PathBuf::from(p.trim()))),
            None => (item, None),
        };
        match (name, &path) {
            ("outdated" | "perfect", None) | ("gru" | "fc", Some(_)) => {}
            ("gru" | "fc", None) => {
                return Err(Error::config(
                    "baselines",
                    format!("method `{name}` needs a checkpoint, write {name}=PATH"),
                ))
            }
            _ => return Err(Error::config("baselines", format!("unknown baseline `{item}`"))),
        }
        out.push((name.to_string(), path));
    }
    Ok(out)
}

fn load_checkpoint_for(method: &str, path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::config(
            method,
            format!("checkpoint {} does not exist", path.display()),
        ));
    }
    Checkpoint::load(path)
}

pub fn evaluate(rc: &RunConfig, model: Option<&Path>, data: &Path, baselines: &str, out: &Path) -> Result<()> {
    let ds: Dataset = load_dataset(data)?;
    require_system("data", &ds.config, &rc.system)?;
    let mut methods = Vec::new();
    let mut meta = vec![("command".to_string(), "evaluate".to_string())];
    meta.extend(rc.echo());
    if let Some(path) = model {
        let ck = load_checkpoint_for("tn-ode", path)?;
        require_system("tn-ode checkpoint", &ck.config, &ds.config)?;
        meta.push(("tn-ode_sha256".into(), file_hash(path)?));
        methods.push(Method::new(
            "tn-ode",
            Predictor::TnOde {
                params: ModelParams::from_checkpoint(&ck)?,
                spec: rc.solver(),
            },
        ));
    }
    let mut want_outdated = false;
    for (name, path) in parse_baselines(baselines)? {
        match (name.as_str(), path) {
            ("outdated", _) => want_outdated = true,
            ("perfect", _) => {}
            (kind, Some(path)) => {
                let label = format!("{kind}+interp");
                let ck = load_checkpoint_for(&label, &path)?;
                require_system(&format!("{label} checkpoint"), &ck.config, &ds.config)?;
                meta.push((format!("{label}_sha256"), file_hash(&path)?));
                methods.push(Method::new(label, Predictor::Interpolated(DiscreteModel::from_checkpoint(&ck, kind)?)));
            }
            _ => unreachable!("parse_baselines checks pairs"),
        }
    }
    if want_outdated {
        methods.push(Method::new("outdated", Predictor::Outdated));
    }
    methods.push(Method::new("perfect", Predictor::Perfect));

    let reports = evaluate_methods(&methods, &ds, rc.rate_policy)?;
    write_report(out, &reports, &meta)?;
    println!("{:<12} {:>5} {:>10} {:>10} {:>9}", "method", "slot", "nmse_db", "rate", "excluded");
    for s in reports.iter().flat_map(|r| &r.slots) {
        println!(
            "{:<12} {:>5} {:>10.3} {:>10.4} {:>9}",
            s.method, s.slot_index, s.nmse_db, s.rate_bps_hz, s.n_excluded
        );
    }
    println!("report: {}", out.display());
    Ok(())
}

fn file_hash(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn gradcheck(rc: &RunConfig, tolerance: f64, probes: usize, step: f64) -> Result<()> {
    let ds = generate_dataset(&rc.system, 1, Mode::Train)?;
    let s = input_scale(&ds);
    let sample = &ds.samples[0];
    let inputs: Vec<_> = sample.inputs.iter().map(|m| scale_by(m, 1.0 / s)).collect();
    let labels: Vec<_> = sample.labels.iter().map(|m| scale_by(m, 1.0 / s)).collect();
    let params = ModelParams::init(&rc.system, &mut init_rng(rc.train.seed, ModelKind::Tnode));
    let obj = SampleObjective {
        inputs: &inputs,
        targets: &sample.label_times,
        labels: &labels,
        spec: rc.solver(),
    };
    let worst = finite_diff_check(&obj, &params.into_vec(), probes, step, rc.train.seed)?;
    let pass = worst < tolerance;
    println!(
        "max relative error {worst:.3e} over {probes} probes (tolerance {tolerance:.1e}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient check error {worst:.3e} exceeds {tolerance:.1e}")))
    }
}

fn scale_by(m: &ctpred_core::ctmath::CMatrix, s: f64) -> ctpred_core::ctmath::CMatrix {
    ctpred_core::ctmath::scale(m, ctpred_core::ctmath::Complex::new(s, 0.0))
}

pub fn flops(rc: &RunConfig) -> Result<()> {
    let r = count_flops(&rc.system, &rc.solver())?;
    println!("field evaluations G = {}", r.field_evals);
    println!("{:<16} {:>14} {:>16} {:>8}", "component", "counted", "formula", "ratio");
    let rows = [
        ("encoder", r.encoder, r.encoder_formula),
        ("encoder (full)", r.encoder, r.encoder_formula_full),
        ("decoder", r.decoder, r.decoder_formula),
        ("head", r.head, r.head_formula),
    ];
    for (name, counted, formula) in rows {
        println!("{name:<16} {counted:>14} {formula:>16.0} {:>8.4}", counted as f64 / formula);
    }
    println!("{:<16} {:>14}", "elementwise", r.elementwise);
    Ok(())
}
