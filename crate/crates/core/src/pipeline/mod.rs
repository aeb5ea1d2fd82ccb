//! Config-driven experiment runner: dataset, split, companding arms through
//! the RF chain, metrics, report and CSV exports.

mod config;

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    Arm, AutoencoderConfig, ChannelConfig, CompanderConfig, DatasetConfig, ExperimentConfig, HpaConfig,
    MetricsConfig, ModelMode, SplitConfig, CONFIG_SCHEMA_VERSION,
};

use crate::bundle::load_any;
use crate::compander::{mu_compress, mu_expand, MuLawParams};
use crate::error::{Error, Result};
use crate::metrics::{
    avg_power_ratio, constellation, error_vectors, evm, mean_psd, snr_d_sets, WelchSettings,
};
use crate::nn::{
    build_model, load_model, save_model, train_destination, train_source, CompanderModel, Role,
    StopReason,
};
use crate::papr::{ccdf_empirical, papr_db_per_signal, threshold_grid, CcdfCurve};
use crate::rf::{add_awgn, apply_ibo, rapp_amplify, saturation_from_set, RappParams};
use crate::signal::{
    segment, smooth_samples, synth_bandlimited_vibration, synth_gaussian_vibration, BandlimitedSpec,
    SignalSet,
};

/// Independent seed stream for `(tag, index)` under a master seed.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    // FNV-1a over the tag, then two splitmix64 rounds
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    mix(mix(master ^ h) ^ index)
}

pub fn load_dataset(cfg: &DatasetConfig, master_seed: u64) -> Result<SignalSet> {
    match cfg {
        DatasetConfig::Bundle { path, csv_sample_rate_hz } => load_any(path, *csv_sample_rate_hz),
        DatasetConfig::Bandlimited { n_signals, segment_len, sigma, cutoff, noise_ratio, taps } => {
            let spec = BandlimitedSpec { sigma: *sigma, cutoff: *cutoff, noise_ratio: *noise_ratio, taps: *taps };
            let long = synth_bandlimited_vibration(n_signals * segment_len, &spec, derive_seed(master_seed, "dataset", 0))?;
            relabel(segment(&long, *segment_len)?, "bandlimited")
        }
        DatasetConfig::Gaussian { n_signals, segment_len, sigma } => {
            let long = synth_gaussian_vibration(n_signals * segment_len, *sigma, derive_seed(master_seed, "dataset", 0))?;
            relabel(segment(&long, *segment_len)?, "gaussian")
        }
    }
}

fn relabel(set: SignalSet, id: &str) -> Result<SignalSet> {
    SignalSet::new(set.signals().to_vec(), id)
}

/// Seeded permutation split; returns `(train, test)` index lists.
pub fn split_indices(n: usize, split: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = (split.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::param("split", format!("{n} signals cannot be split {}/{}", split.train_fraction, split.test_fraction)));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split.seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source_id: String,
    pub n_train: usize,
    pub n_test: usize,
    pub segment_len: usize,
    pub sample_rate_hz: f64,
    pub train_mean_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub role: Role,
    pub origin: String,
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    pub loss_floor_cl: Option<f64>,
    pub stop: Option<StopReason>,
    pub clamp_events: u64,
    pub output_gain: Option<f64>,
    pub n_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdSummary {
    pub total_power: f64,
    pub high_band_from_hz: f64,
    pub high_band_power: f64,
    pub high_band_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub input_snr_db: f64,
    pub mean_snr_d_db: f64,
    pub improvement_db: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub mean_papr_db: f64,
    pub ccdf_at_8db: Option<f64>,
    pub power_ratio: Option<f64>,
    pub max_signal_power_ratio: Option<f64>,
    pub evm_percent: Option<f64>,
    pub psd: Option<PsdSummary>,
    pub noise_free_snr_d_db: Option<f64>,
    pub snr_d: Vec<SnrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmError {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: Arm,
    pub status: String,
    pub error: Option<ArmError>,
    pub metrics: Option<ArmMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Everything here except `timings` is a function of the config and seeds;
/// timings go to a separate file so the report stays byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub a_sat: Option<f64>,
    pub models: Vec<ModelSummary>,
    pub arms: Vec<ArmReport>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

impl ExperimentReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmMetrics> {
        self.arms.iter().find(|a| a.arm == arm).and_then(|a| a.metrics.as_ref())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn first_error(&self) -> Option<&ArmError> {
        self.arms.iter().find_map(|a| a.error.as_ref())
    }
}

struct Stopwatch {
    timings: Vec<Timing>,
    t: Instant,
}

impl Stopwatch {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(Timing { stage: stage.into(), seconds: (now - self.t).as_secs_f64() });
        self.t = now;
    }
}

/// The amplifier stage: back-off, Rapp amplification, receiver gain restoring the back-off.
#[derive(Debug, Clone)]
pub struct RfStage {
    pub rapp: Option<RappParams>,
    pub ibo_db: f64,
}

impl RfStage {
    pub fn apply(&self, set: &SignalSet) -> Result<SignalSet> {
        let Some(rapp) = &self.rapp else {
            return Ok(set.clone());
        };
        let restore = 10f64.powf(self.ibo_db / 20.0);
        set.map(format!("{}:hpa", set.source_id()), |s| {
            let y = rapp_amplify(&apply_ibo(s.samples(), self.ibo_db)?, rapp)?;
            Ok(y.into_iter().map(|v| v * restore).collect())
        })
    }
}

/// AWGN on every signal with per-signal SNRs and seeds from one stream.
pub fn corrupt_set(set: &SignalSet, snr_db: impl Fn(usize) -> f64, master: u64, tag: &str) -> Result<SignalSet> {
    let signals = set
        .iter()
        .enumerate()
        .map(|(i, s)| s.map_samples(add_awgn(s.samples(), snr_db(i), derive_seed(master, tag, i as u64))?))
        .collect::<Result<Vec<_>>>()?;
    SignalSet::new(signals, format!("{}:{tag}", set.source_id()))
}

struct Models {
    source: CompanderModel,
    destination: CompanderModel,
    noisy_destination: Option<CompanderModel>,
}

fn summarize(m: &CompanderModel, origin: &str, stop: Option<StopReason>) -> ModelSummary {
    ModelSummary {
        role: m.role,
        origin: origin.into(),
        epochs_run: m.training_meta.epochs_run,
        final_loss: m.training_meta.final_loss,
        loss_floor_cl: m.training_meta.loss_floor_cl,
        stop,
        clamp_events: m.training_meta.clamp_events,
        output_gain: m.output_gain,
        n_params: m.n_params(),
    }
}

fn prepare_models(
    cfg: &ExperimentConfig,
    train: &SignalSet,
    rf: &RfStage,
    summaries: &mut Vec<ModelSummary>,
) -> Result<Models> {
    let ae = &cfg.compander.autoencoder;
    let models_dir = cfg.output_dir.join("models");
    if ae.mode == ModelMode::Load {
        let load = |p: &Option<std::path::PathBuf>| p.as_ref().map(load_model).transpose();
        let source = load(&ae.source_model)?.expect("validated");
        let destination = load(&ae.destination_model)?.expect("validated");
        let noisy_destination = load(&ae.noisy_destination_model)?;
        for m in [Some(&source), Some(&destination), noisy_destination.as_ref()].into_iter().flatten() {
            summaries.push(summarize(m, "loaded", None));
        }
        return Ok(Models { source, destination, noisy_destination });
    }
    fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
    let len = train.segment_len();
    let smoothed = train.map("smoothed", |s| smooth_samples(s.samples(), cfg.smoothing_window))?;
    let source = build_model(Role::Source, len, &ae.source_arch, derive_seed(cfg.seed, "init-source", 0))?;
    let (source, rep) = train_source(source, train, &smoothed, &ae.source_train)?;
    summaries.push(summarize(&source, "trained", Some(rep.stop)));
    save_model(&source, models_dir.join("source.json"))?;

    let compressed = source.forward_set(train)?;
    let dest_inputs = if ae.train_through_hpa { rf.apply(&compressed)? } else { compressed };
    let destination = build_model(Role::Destination, len, &ae.destination_arch, derive_seed(cfg.seed, "init-destination", 0))?;
    let (destination, rep) = train_destination(destination, &dest_inputs, train, &ae.destination_train)?;
    summaries.push(summarize(&destination, "trained", Some(rep.stop)));
    save_model(&destination, models_dir.join("destination.json"))?;

    let noisy_destination = if cfg.channel.is_some() {
        // equal shares of each training SNR, assigned by a seeded permutation
        let k = ae.noisy_train_snr_db.len();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "noisy-assign", 0)));
        let mut snr_of = vec![0.0; train.len()];
        for (rank, &i) in order.iter().enumerate() {
            snr_of[i] = ae.noisy_train_snr_db[rank % k];
        }
        let noisy = corrupt_set(&dest_inputs, |i| snr_of[i], cfg.seed, "noise-train")?;
        let model = build_model(Role::Destination, len, &ae.destination_arch, derive_seed(cfg.seed, "init-noisy", 0))?;
        let (model, rep) = train_destination(model, &noisy, train, &ae.destination_train)?;
        summaries.push(summarize(&model, "trained", Some(rep.stop)));
        save_model(&model, models_dir.join("destination_noisy.json"))?;
        Some(model)
    } else {
        None
    };
    Ok(Models { source, destination, noisy_destination })
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

/// Per-signal μ-law with `A = max|x|` of that signal. Returns the compressed
/// set and the normalization constants.
fn mu_law_compress(set: &SignalSet, mu: f64) -> Result<(SignalSet, Vec<f64>)> {
    let mut norms = Vec::with_capacity(set.len());
    let out = set.map(format!("{}:mu_law", set.source_id()), |s| {
        let p = MuLawParams::fitted(mu, s.samples())?;
        norms.push(p.norm_a);
        mu_compress(s.samples(), &p)
    })?;
    Ok((out, norms))
}

fn mu_law_expand(set: &SignalSet, mu: f64, norms: &[f64]) -> Result<SignalSet> {
    let mut i = 0;
    set.map(format!("{}:mu_expanded", set.source_id()), |s| {
        let a = norms[i];
        i += 1;
        // received amplitudes beyond A (channel noise) are clipped to the expander's domain
        let clipped: Vec<f64> = s.samples().iter().map(|v| v.clamp(-a, a)).collect();
        mu_expand(&clipped, &MuLawParams::new(mu, a)?)
    })
}

struct ArmContext<'a> {
    cfg: &'a ExperimentConfig,
    test: &'a SignalSet,
    rf: &'a RfStage,
    models: Option<&'a Models>,
    thresholds: &'a [f64],
}

fn run_arm(arm: Arm, ctx: &ArmContext, out: &Path) -> Result<ArmMetrics> {
    let cfg = ctx.cfg;
    let mcfg = &cfg.metrics;
    let test = ctx.test;
    let mu = cfg.compander.mu;
    let models = || ctx.models.ok_or_else(|| Error::Training("autoencoder models are unavailable".into()));

    let (compressed, norms) = match arm {
        Arm::None => (test.clone(), Vec::new()),
        Arm::MuLaw => mu_law_compress(test, mu)?,
        Arm::Autoencoder => (models()?.source.forward_set(test)?, Vec::new()),
    };
    let received = ctx.rf.apply(&compressed)?;
    let expand = |set: &SignalSet, noisy: bool| -> Result<SignalSet> {
        match arm {
            Arm::None => Ok(set.clone()),
            Arm::MuLaw => mu_law_expand(set, mu, &norms),
            Arm::Autoencoder => {
                let m = models()?;
                let dest = if noisy { m.noisy_destination.as_ref().unwrap_or(&m.destination) } else { &m.destination };
                dest.forward_set(set)
            }
        }
    };
    let reconstructed = expand(&received, false)?;
    let name = arm.as_str();
    let mut metrics = ArmMetrics::default();

    let paprs = papr_db_per_signal(&compressed)?;
    metrics.mean_papr_db = paprs.iter().sum::<f64>() / paprs.len() as f64;
    if mcfg.ccdf {
        let curve = ccdf_empirical(&compressed, ctx.thresholds)?;
        metrics.ccdf_at_8db = Some(ccdf_empirical(&compressed, &[8.0])?.probabilities[0]);
        write(out, &format!("ccdf_{name}.csv"), &curve.to_csv())?;
    }
    if mcfg.power_ratio {
        metrics.power_ratio = Some(avg_power_ratio(&compressed, test)?);
        metrics.max_signal_power_ratio = Some(
            compressed
                .iter()
                .zip(test.iter())
                .map(|(c, t)| c.mean_power() / t.mean_power())
                .fold(0.0, f64::max),
        );
    }
    if mcfg.evm || mcfg.constellations {
        let reference = constellation(test);
        let con = constellation(&reconstructed);
        if mcfg.evm {
            metrics.evm_percent = Some(evm(&error_vectors(&con, &reference)?, &reference, mcfg.evm_statistic)?);
        }
        if mcfg.constellations {
            write(out, &format!("constellation_{name}.csv"), &con.to_csv())?;
        }
    }
    if mcfg.psd {
        let psd = mean_psd(&received, &WelchSettings::default())?;
        let nyquist = *psd.freqs_hz.last().expect("non-empty");
        let high = psd.high_band_power(mcfg.psd_high_fraction);
        let total = psd.total_power();
        metrics.psd = Some(PsdSummary {
            total_power: total,
            high_band_from_hz: mcfg.psd_high_fraction * nyquist,
            high_band_power: high,
            high_band_fraction: high / total,
        });
        write(out, &format!("psd_{name}.csv"), &psd.to_csv())?;
    }
    if mcfg.snr_d {
        metrics.noise_free_snr_d_db = Some(snr_d_sets(test, &reconstructed)?.mean_db);
        if let Some(ch) = &cfg.channel {
            for (k, &snr) in ch.snr_db.iter().enumerate() {
                // same noise realizations for every arm
                let noisy = corrupt_set(&received, |_| snr, cfg.seed, &format!("noise-test-{k}"))?;
                let rec = expand(&noisy, true)?;
                let s = snr_d_sets(test, &rec)?;
                metrics.snr_d.push(SnrPoint {
                    input_snr_db: snr,
                    mean_snr_d_db: s.mean_db,
                    improvement_db: s.mean_db - snr,
                });
            }
        }
    }
    Ok(metrics)
}

/// Runs every configured arm and writes `report.json`, `timings.json` and the
/// metric CSVs into the output directory.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut watch = Stopwatch { timings: Vec::new(), t: Instant::now() };
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let data = load_dataset(&cfg.dataset, cfg.seed)?;
    let (tr_idx, te_idx) = split_indices(data.len(), &cfg.split)?;
    let train = data.select(&tr_idx, format!("{}:train", data.source_id()))?;
    let test = data.select(&te_idx, format!("{}:test", data.source_id()))?;
    watch.lap("dataset");

    let a_sat = match &cfg.hpa {
        Some(h) => Some(h.a_sat.map_or_else(|| saturation_from_set(&train), Ok)?),
        None => None,
    };
    let rapp = match (&cfg.hpa, a_sat) {
        (Some(h), Some(a)) => Some(RappParams::new(a, h.gain_a, h.p)?),
        _ => None,
    };
    let rf = RfStage { rapp, ibo_db: cfg.ibo_db };

    let mut summaries = Vec::new();
    let mut model_error = None;
    let models = if cfg.compander.arms.contains(&Arm::Autoencoder) {
        match prepare_models(cfg, &train, &rf, &mut summaries) {
            Ok(m) => Some(m),
            Err(e) => {
                model_error = Some(e);
                None
            }
        }
    } else {
        None
    };
    watch.lap("models");

    let thresholds = threshold_grid(cfg.metrics.ccdf_from_db, cfg.metrics.ccdf_to_db, cfg.metrics.ccdf_step_db)?;
    if cfg.metrics.ccdf {
        write(out, "ccdf_exact.csv", &CcdfCurve::exact(&thresholds, test.segment_len())?.to_csv())?;
    }
    if cfg.metrics.constellations {
        write(out, "constellation_reference.csv", &constellation(&test).to_csv())?;
    }
    let ctx = ArmContext { cfg, test: &test, rf: &rf, models: models.as_ref(), thresholds: &thresholds };
    let mut arms = Vec::new();
    for &arm in &cfg.compander.arms {
        let report = match (&model_error, arm) {
            (Some(e), Arm::Autoencoder) => Err(ArmError { kind: e.kind().into(), message: e.to_string() }),
            _ => run_arm(arm, &ctx, out).map_err(|e| ArmError { kind: e.kind().into(), message: e.to_string() }),
        };
        arms.push(match report {
            Ok(m) => ArmReport { arm, status: "ok".into(), error: None, metrics: Some(m) },
            Err(e) => ArmReport { arm, status: "error".into(), error: Some(e), metrics: None },
        });
        watch.lap(arm.as_str());
    }

    let report = ExperimentReport {
        crate_version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        dataset: DatasetSummary {
            source_id: data.source_id().into(),
            n_train: train.len(),
            n_test: test.len(),
            segment_len: test.segment_len(),
            sample_rate_hz: test.sample_rate_hz(),
            train_mean_power: train.iter().map(|s| s.mean_power()).sum::<f64>() / train.len() as f64,
        },
        a_sat,
        models: summaries,
        arms,
        timings: watch.timings,
    };
    write(out, "report.json", &report.to_json())?;
    write(
        out,
        "timings.json",
        &serde_json::to_string_pretty(&report.timings).expect("timings serialize"),
    )?;
    Ok(report)
}
