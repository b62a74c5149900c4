//! Far-field speech front-end: guided source separation (channel selection,
//! WPE, guided CACGMM masks, mask-based beamforming), room-acoustics data
//! augmentation and ASR hypothesis fusion.

pub mod audio;
pub mod augment;
pub mod beamform;
pub mod channel_select;
pub mod dereverb;
pub mod error;
pub mod fusion;
pub mod linalg;
pub mod manifest;
pub mod mask_model;
pub mod metrics;
pub mod pipeline;

pub use audio::{MultichannelWaveform, Spectrogram, StftConfig, Waveform};
pub use error::{Error, Result};
