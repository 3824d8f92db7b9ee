//! Record ingestion, preprocessing, windowing, splitting and synthesis.

pub mod io;
pub mod preprocess;
pub mod record;
pub mod split;
pub mod synth;
pub mod window;

pub use io::{list_records, load_record, save_record};
pub use preprocess::{impute_and_filter, impute_checked, resample_100hz, split_channels, Discard};
pub use record::{Annotation, Record, SourceRef, WaveLabel};
pub use split::{split_by, split_ids, SplitSpec};
pub use synth::{synth_ecg, synth_paired, SynthParams, Wave};
pub use window::{rebalance, windowize, zscore, Payload, Provenance, Window, HORIZON, WINDOW_LEN};
