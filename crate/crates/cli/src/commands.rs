use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use vibpapr::bundle::{load_any, save_bundle};
use vibpapr::compander::{mu_compress, mu_expand, ErrorMetric, MuLawParams};
use vibpapr::metrics::{
    constellation, error_vectors, evm, mean_psd, snr_d_sets, welch_psd, EvmStatistic, WelchSettings,
};
use vibpapr::nn::{
    build_model, load_model, save_model, train_destination, train_source, ArchConfig, CompanderModel,
    Role, TrainConfig,
};
use vibpapr::papr::{ccdf_empirical, papr_db_per_signal, threshold_grid, CcdfCurve};
use vibpapr::pipeline::{corrupt_set, run_pipeline, ExperimentConfig, ExperimentReport, RfStage};
use vibpapr::rf::{saturation_from_set, RappParams};
use vibpapr::signal::{
    segment, smooth_samples, synth_bandlimited_vibration, synth_gaussian_vibration, BandlimitedSpec,
    SignalSet, DEFAULT_SAMPLE_RATE_HZ,
};
use vibpapr::{Error, Result};

use crate::{
    Cli, Command, CompandArgs, CompandMode, GridArgs, LossArg, StatArg, TrainArgs, EXIT_DATA,
    EXIT_TRAINING,
};

/// Overrides `output_dir` of `chain --config`.
pub const OUTPUT_DIR_ENV: &str = "VIBPAPR_OUTPUT_DIR";

fn usage(name: &'static str, reason: &str) -> Error {
    Error::Parameter { name, reason: reason.into() }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io { path: p.into(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn out_required(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| usage("out", "this command needs --out"))
}

fn load(path: &Path) -> Result<SignalSet> {
    load_any(path, DEFAULT_SAMPLE_RATE_HZ)
}

fn grid(g: &GridArgs) -> Result<Vec<f64>> {
    threshold_grid(g.from_db, g.to_db, g.step)
}

pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Gen(a) => {
            let n = a.n_signals.checked_mul(a.len).ok_or_else(|| usage("len", "too large"))?;
            if a.n_signals == 0 {
                return Err(usage("n_signals", "must be positive"));
            }
            let long = if a.bandlimited {
                let spec = BandlimitedSpec {
                    sigma: a.sigma.unwrap_or(2.0),
                    cutoff: a.cutoff,
                    noise_ratio: a.noise_ratio,
                    ..BandlimitedSpec::default()
                };
                synth_bandlimited_vibration(n, &spec, cli.seed)?
            } else {
                synth_gaussian_vibration(n, a.sigma.unwrap_or(1.0), cli.seed)?
            };
            let kind = if a.bandlimited { "bandlimited" } else { "gaussian" };
            let set = segment(&long, a.len)?;
            let set = SignalSet::new(set.signals().to_vec(), format!("{kind}:seed{}", cli.seed))?;
            save_bundle(&set, out_required(cli)?)?;
        }
        Command::Smooth(a) => {
            let set = load(&a.input)?;
            let out = set.map(format!("{}:smoothed", set.source_id()), |s| smooth_samples(s.samples(), a.window))?;
            save_bundle(&out, out_required(cli)?)?;
        }
        Command::Papr(a) => {
            let set = load(&a.input)?;
            emit(cli.out.as_deref(), &ccdf_empirical(&set, &grid(&a.grid)?)?.to_csv())?;
            if let Some(p) = &a.per_signal {
                let mut text = String::from("index,papr_db\n");
                for (i, v) in papr_db_per_signal(&set)?.iter().enumerate() {
                    let _ = writeln!(text, "{i},{v}");
                }
                emit(Some(p), &text)?;
            }
        }
        Command::Ccdf(a) => {
            let th = grid(&a.grid)?;
            let curve = if a.closed_form {
                CcdfCurve::closed_form(&th, a.n)?
            } else {
                CcdfCurve::exact(&th, a.n)?
            };
            emit(cli.out.as_deref(), &curve.to_csv())?;
        }
        Command::Compand(a) => compand(cli, a)?,
        Command::TrainSource(a) => {
            let raw = load(&a.input)?;
            let smoothed = raw.map("smoothed", |s| smooth_samples(s.samples(), a.window))?;
            let mut cfg = train_config(&a.train, cli.seed, TrainConfig::default());
            cfg.stop_at_loss_floor = !a.no_floor_stop;
            let model = start_model(&a.train, Role::Source, raw.segment_len(), cli.seed)?;
            let (model, rep) = train_source(model, &raw, &smoothed, &cfg)?;
            save_model(&model, out_required(cli)?)?;
            eprintln!(
                "epochs {} loss {:?} floor {:?} stop {:?}",
                model.training_meta.epochs_run, model.training_meta.final_loss, model.training_meta.loss_floor_cl, rep.stop
            );
        }
        Command::TrainDest(a) => {
            let inputs = load(&a.input)?;
            let targets = load(&a.target)?;
            let base = TrainConfig { stop_at_loss_floor: false, ..TrainConfig::default() };
            let cfg = train_config(&a.train, cli.seed, base);
            let model = start_model(&a.train, Role::Destination, inputs.segment_len(), cli.seed)?;
            let (model, rep) = train_destination(model, &inputs, &targets, &cfg)?;
            save_model(&model, out_required(cli)?)?;
            eprintln!("epochs {} loss {:?} stop {:?}", model.training_meta.epochs_run, model.training_meta.final_loss, rep.stop);
        }
        Command::Chain(a) => {
            if let Some(path) = &a.config {
                let mut cfg = ExperimentConfig::load(path)?;
                if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
                    cfg.output_dir = PathBuf::from(dir);
                } else if let Some(dir) = &cli.out {
                    cfg.output_dir = dir.clone();
                }
                let report = run_pipeline(&cfg)?;
                print!("{}", summary_csv(&report));
                return Ok(match report.first_error() {
                    None => 0,
                    Some(e) if e.kind == "training" => EXIT_TRAINING,
                    Some(_) => EXIT_DATA,
                });
            }
            let input = a.input.as_ref().expect("clap enforces input");
            let set = load(input)?;
            let a_sat = match (&a.a_sat, &a.a_sat_from) {
                (Some(v), _) => Some(*v),
                (None, Some(p)) => Some(saturation_from_set(&load(p)?)?),
                (None, None) => None,
            };
            let rapp = a_sat.map(|s| RappParams::new(s, a.gain, a.p)).transpose()?;
            let mut out = RfStage { rapp, ibo_db: a.ibo_db }.apply(&set)?;
            if let Some(snr) = a.snr_db {
                out = corrupt_set(&out, |_| snr, cli.seed, "awgn")?;
            }
            save_bundle(&out, out_required(cli)?)?;
        }
        Command::Evm(a) => {
            let r = constellation(&load(&a.reference)?);
            let c = constellation(&load(&a.input)?);
            let stat = match a.statistic {
                StatArg::Rms => EvmStatistic::Rms,
                StatArg::Mean => EvmStatistic::Mean,
            };
            let v = evm(&error_vectors(&c, &r)?, &r, stat)?;
            println!("{v}");
            if let Some(p) = &cli.out {
                emit(Some(p), &c.to_csv())?;
            }
        }
        Command::Psd(a) => {
            let set = load(&a.input)?;
            let settings = WelchSettings {
                window_len: a.window_len,
                overlap_fraction: a.overlap,
                nfft: a.nfft,
                ..WelchSettings::default()
            };
            let psd = match a.signal {
                Some(i) => {
                    let s = set.signals().get(i).ok_or_else(|| usage("signal", "index out of range"))?;
                    welch_psd(s, &settings)?
                }
                None => mean_psd(&set, &settings)?,
            };
            emit(cli.out.as_deref(), &psd.to_csv())?;
        }
        Command::Snrd(a) => {
            let s = snr_d_sets(&load(&a.reference)?, &load(&a.input)?)?;
            println!("{}", s.mean_db);
            if let Some(p) = &cli.out {
                let mut text = String::from("index,snr_d_db\n");
                for (i, v) in s.per_signal_db.iter().enumerate() {
                    let _ = writeln!(text, "{i},{v}");
                }
                emit(Some(p), &text)?;
            }
        }
        Command::Report(a) => {
            let text = fs::read_to_string(&a.input).map_err(|e| Error::Io { path: a.input.clone(), source: e })?;
            let report: ExperimentReport = serde_json::from_str(&text)
                .map_err(|e| Error::Format { field: "report".into(), reason: e.to_string() })?;
            emit(cli.out.as_deref(), &summary_csv(&report))?;
        }
    }
    Ok(0)
}

fn compand(cli: &Cli, a: &CompandArgs) -> Result<()> {
    let set = load(&a.input)?;
    let out = if let Some(path) = &a.model {
        let model: CompanderModel = load_model(path)?;
        model.forward_set(&set)?
    } else {
        let tag = match a.mode {
            CompandMode::Compress => "mu_compressed",
            CompandMode::Expand => "mu_expanded",
        };
        set.map(format!("{}:{tag}", set.source_id()), |s| {
            let p = match (a.norm_a, a.mode) {
                (Some(norm), _) => MuLawParams::new(a.mu, norm)?,
                (None, CompandMode::Compress) => MuLawParams::fitted(a.mu, s.samples())?,
                (None, CompandMode::Expand) => return Err(usage("norm_a", "expansion needs --norm-a")),
            };
            match a.mode {
                CompandMode::Compress => mu_compress(s.samples(), &p),
                CompandMode::Expand => mu_expand(s.samples(), &p),
            }
        })?
    };
    save_bundle(&out, out_required(cli)?)
}

fn train_config(a: &TrainArgs, seed: u64, base: TrainConfig) -> TrainConfig {
    TrainConfig {
        learning_rate: a.lr.unwrap_or(base.learning_rate),
        batch_size: a.batch.unwrap_or(base.batch_size),
        max_epochs: a.epochs.unwrap_or(base.max_epochs),
        loss: match a.loss {
            Some(LossArg::Mae) => ErrorMetric::Mae,
            Some(LossArg::Mse) => ErrorMetric::Mse,
            None => base.loss,
        },
        seed,
        ..base
    }
}

fn start_model(a: &TrainArgs, role: Role, segment_len: usize, seed: u64) -> Result<CompanderModel> {
    if let Some(p) = &a.resume {
        let m = load_model(p)?;
        if m.role != role {
            return Err(usage("resume", "model role does not match the command"));
        }
        return Ok(m);
    }
    let arch = match &a.arch {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            serde_json::from_str::<ArchConfig>(&text)
                .map_err(|e| Error::Format { field: "arch".into(), reason: e.to_string() })?
        }
        None => ArchConfig::default(),
    };
    build_model(role, segment_len, &arch, seed)
}

/// One row per arm and metric.
pub fn summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("arm,metric,value\n");
    for arm in &report.arms {
        let name = arm.arm.as_str();
        let Some(m) = &arm.metrics else {
            let e = arm.error.as_ref().map(|e| e.kind.as_str()).unwrap_or("unknown");
            let _ = writeln!(out, "{name},error,{e}");
            continue;
        };
        let mut row = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                let _ = writeln!(out, "{name},{k},{v}");
            }
        };
        row("mean_papr_db", Some(m.mean_papr_db));
        row("ccdf_at_8db", m.ccdf_at_8db);
        row("power_ratio", m.power_ratio);
        row("evm_percent", m.evm_percent);
        row("psd_high_band_power", m.psd.as_ref().map(|p| p.high_band_power));
        row("psd_high_band_fraction", m.psd.as_ref().map(|p| p.high_band_fraction));
        row("snr_d_noise_free_db", m.noise_free_snr_d_db);
        for s in &m.snr_d {
            let _ = writeln!(out, "{name},snr_d_improvement_db@{},{}", s.input_snr_db, s.improvement_db);
        }
    }
    out
}
