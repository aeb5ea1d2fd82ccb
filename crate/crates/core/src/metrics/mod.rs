mod constellation;
mod fft;
mod psd;
mod snr;

pub use constellation::{
    constellation, error_vectors, evm, evm_sets, Constellation, ConstellationPoint, EvmStatistic,
};
pub use fft::{fft_in_place, rfft_padded};
pub use psd::{mean_psd, welch_psd, welch_psd_samples, PsdEstimate, WelchSettings, WindowKind};
pub use snr::{avg_power_ratio, snr_d, snr_d_sets, SnrSummary};
