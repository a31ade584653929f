//! Clip sampling, losses, normalization and the optimization loop.

pub mod adam;
pub mod clips;
pub mod dataset;
pub mod losses;
pub mod normalize;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use clips::{clip_starts, sample_clips, ClipSample, CLIP_FRAMES, CLIP_SAMPLES, CLIP_SECONDS};
pub use dataset::{
    clips_from_recordings, load_recording, load_recordings, plan_pours, random_profile, read_manifest,
    synthesize_dataset, write_manifest, ManifestRecord, PourPlan, ProfileRanges, Recording, MANIFEST,
};
pub use losses::{loss_height, loss_mono, loss_total, loss_total_grad};
pub use normalize::{fit_normalization, normalize};
pub use train::{evaluate_losses, train, write_train_log, EpochLog, LossSummary, PreparedClips, Split, TrainConfig, TrainOutcome};
