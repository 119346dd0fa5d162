//! Analytical mapping tools for spatial DNN accelerators.
//!
//! The crate models single-statement operator loop nests, decides whether an
//! operator can be described with data-centric mapping directives, transforms
//! tiled mappings into directive programs, prices them with off-chip and
//! on-chip cost models, and searches the mapping space with a decoupled
//! off-chip/on-chip strategy.
//!
//! Candidate evaluation is data-parallel when the `parallel` feature is
//! enabled (the default); disabling it falls back to sequential evaluation
//! with identical results.

pub mod conformability;
pub mod explorer;
pub mod hw;
pub mod loopnest;
pub mod mapping;
pub mod mdc;
pub mod offchip;
pub mod onchip;
pub mod oracle;
pub mod workloads;

mod par;

pub use conformability::{check_conformable, ConformabilityReport, DimensionDependenceGraph};
pub use explorer::{
    constrained_baseline, decoupled_optimize, roofline_peak, BaselineStyle, ExplorerError,
    RooflinePeak, SearchGoal, SearchResult,
};
pub use hw::{AcceleratorConfig, EnergyProfile};
pub use loopnest::{LoopIterator, LoopNest, Subscript, TensorRef};
pub use mapping::{
    enumerate_onchip, sample_valid_mapping, space_size, validate_mapping, Mapping, PruningFlags,
    SpaceStats,
};
pub use mdc::{parse_mdc, render_mdc, transform_to_mdc, MdcMapping};
pub use offchip::{optimize_offchip, DbMode, DbOptions, Layout, OffchipPlan};
pub use onchip::{analyze_mapping, analyze_mapping_with, AnalysisError, CostReport, TensorTraffic};
