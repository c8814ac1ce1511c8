//! Zero-shot multi-spectral classification toolkit: renders Sentinel-2
//! patches as pseudo-color images, builds descriptive prompts, queries a
//! multimodal model backend, parses its answers and scores them.

pub mod answer;
pub mod backend;
pub mod dataset;
pub mod metrics;
pub mod png;
pub mod products;
pub mod prompt;
pub mod raster;
pub mod task;

pub use answer::{format_answer, parse_answer, ParseFailure, ParseMode, ParsedAnswer};
pub use metrics::{aggregate, map_43_to_19, sample_prf, top1_accuracy, Averaging, MetricsReport, PredictionRecord, Prf};
pub use products::{render_products, ProductId, PseudoImage};
pub use prompt::{band_glossary, build_prompt, Modality, Prompt};
pub use raster::{BandGrid, BandId, DatasetKind, NormalizationMethod, Patch};
pub use task::Task;
