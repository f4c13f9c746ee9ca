//! Patient records, dataset ingestion, splits, note masking and synthetic
//! data generation.

mod io;
mod mask;
mod record;
mod split;
mod synth;

pub use io::{
    load_dataset, read_channel_csv, read_mentions_csv, read_notes_jsonl, read_spans_jsonl,
    read_tabular_csv, write_channel_csv, write_mentions_csv, write_notes_jsonl, write_spans_jsonl,
    write_tabular_csv, Dataset, DatasetPaths,
};
pub use mask::{mask_notes, split_sentences, write_drop_log, DropLogEntry};
pub use record::{column, labels, Note, PatientRecord, Span};
pub use split::{make_splits, SplitPlan, SIZES, TEST_CAP, TRAIN_CAP};
pub use synth::{
    generate_synthetic, sample_records, shift_channel, simulate_channel, synthetic_embeddings,
    ChannelConfig, ChannelDraw, SyntheticData,
};
