//! Interaction ingestion, k-core filtering, leave-one-out splitting and
//! batching.

mod batch;
mod log;
mod split;
mod stats;

pub use batch::{make_batches, pad_row, phase_input, Batch, Phase};
pub use log::{kcore_filter, load_interactions, Delimiter, Interaction, InteractionLog, LoadOptions};
pub use split::{build_split, load_dataset, save_dataset, SplitDataset, UserSequence, Vocab, PAD};
pub use stats::{stats, DatasetStats};
