//! File formats for the command-line front end.
//!
//! The binary reads three kinds of files: accelerator configs, workload
//! descriptions, and hand-written mappings. The parsers live here so tests
//! (and the bundled-data generator) can use them without spawning the
//! binary; all of them return plain `String` errors that the binary maps to
//! its exit codes.

use mapspace::offchip::Layout;
use mapspace::workloads::{self, Conv2dParams, GemmParams};
use mapspace::{AcceleratorConfig, EnergyProfile, LoopNest, Mapping};
use serde::Deserialize;
use std::collections::BTreeMap;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AccelFile {
    name: Option<String>,
    num_pes: u64,
    clock_mhz: f64,
    noc_bandwidth_gbps: f64,
    l1_bytes: u64,
    l2_bytes: u64,
    dram_block_bytes: u64,
    multicast: bool,
    energy_profile: Option<EnergyProfile>,
}

/// Parses an accelerator TOML file. `default_name` (usually the file stem)
/// names the machine when the file has no `name` key; a missing
/// `[energy_profile]` table means the default profile.
pub fn parse_accel_file(text: &str, default_name: &str) -> Result<AcceleratorConfig, String> {
    let f: AccelFile = toml::from_str(text).map_err(|e| e.to_string())?;
    Ok(AcceleratorConfig {
        name: f.name.unwrap_or_else(|| default_name.to_string()),
        num_pes: f.num_pes,
        clock_mhz: f.clock_mhz,
        noc_bandwidth_gbps: f.noc_bandwidth_gbps,
        l1_bytes: f.l1_bytes,
        l2_bytes: f.l2_bytes,
        dram_block_bytes: f.dram_block_bytes,
        multicast: f.multicast,
        energy_profile: f.energy_profile.unwrap_or_default(),
    })
}

fn one() -> u64 {
    1
}

/// One `[[operator]]` entry of a workload file.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpSpec {
    Conv2d {
        name: String,
        in_channels: u64,
        out_channels: u64,
        /// Square output size.
        out_hw: u64,
        /// Square filter size.
        filter: u64,
        #[serde(default = "one")]
        stride: u64,
        #[serde(default = "one")]
        dilation: u64,
        #[serde(default = "one")]
        batch: u64,
        #[serde(default)]
        depthwise: bool,
    },
    Gemm {
        name: String,
        m: u64,
        n: u64,
        k: u64,
    },
    Mlp {
        name: String,
        in_features: u64,
        out_features: u64,
        #[serde(default = "one")]
        batch: u64,
    },
    Lstm {
        name: String,
        embedding: u64,
        #[serde(default = "one")]
        batch: u64,
        /// Cell-chain length; above 1 the operator is the parametric
        /// multi-cell form (not conformable), and `batch` is unused.
        #[serde(default = "one")]
        cells: u64,
    },
}

impl OpSpec {
    pub fn build(&self) -> Result<LoopNest, String> {
        let nest = match self {
            OpSpec::Conv2d {
                name,
                in_channels,
                out_channels,
                out_hw,
                filter,
                stride,
                dilation,
                batch,
                depthwise,
            } => {
                let mut p = if *depthwise {
                    if in_channels != out_channels {
                        return Err(format!(
                            "operator `{name}`: depthwise needs in_channels == out_channels"
                        ));
                    }
                    Conv2dParams::depthwise(name.clone(), *out_channels, *out_hw, *filter, *stride)
                } else {
                    Conv2dParams::new(
                        name.clone(),
                        *in_channels,
                        *out_channels,
                        *out_hw,
                        *filter,
                        *stride,
                    )
                };
                p.dilation = *dilation;
                p.batch = *batch;
                workloads::make_conv2d(&p)
            }
            OpSpec::Gemm { name, m, n, k } => {
                workloads::make_gemm(&GemmParams::new(name.clone(), *m, *n, *k))
            }
            OpSpec::Mlp { name, in_features, out_features, batch } => {
                workloads::make_mlp(name.clone(), *in_features, *out_features, *batch)
            }
            OpSpec::Lstm { name, embedding, batch, cells } => {
                if *cells > 1 {
                    workloads::make_multicell_lstm(name.clone(), *cells, *embedding)
                } else {
                    workloads::lstm_to_gemm(name.clone(), *embedding, *batch)
                }
            }
        };
        nest.map_err(|e| format!("workload: {e}"))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFile {
    #[serde(default)]
    operator: Vec<OpSpec>,
}

/// Parses a workload TOML file into loop nests, in file order. Names must
/// be unique and at least one operator must be present.
pub fn parse_workload_file(text: &str) -> Result<Vec<LoopNest>, String> {
    let file: WorkloadFile = toml::from_str(text).map_err(|e| e.to_string())?;
    if file.operator.is_empty() {
        return Err("no [[operator]] entries".to_string());
    }
    let mut nests = Vec::new();
    for op in &file.operator {
        nests.push(op.build()?);
    }
    let mut seen = std::collections::BTreeSet::new();
    for n in &nests {
        if !seen.insert(n.name.clone()) {
            return Err(format!("duplicate operator name `{}`", n.name));
        }
    }
    Ok(nests)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingFile {
    t1: Vec<u64>,
    t2: Vec<u64>,
    order2: Vec<usize>,
    t3: Vec<u64>,
    order3: Vec<usize>,
    /// Per-tensor innermost (DRAM-contiguous) dimension; declared order when
    /// omitted.
    layout: Option<BTreeMap<String, usize>>,
}

/// Parses a mapping file, TOML by default or JSON when `json` is set. The
/// nest supplies the default layout.
pub fn parse_mapping_file(text: &str, json: bool, nest: &LoopNest) -> Result<Mapping, String> {
    let f: MappingFile = if json {
        serde_json::from_str(text).map_err(|e| e.to_string())?
    } else {
        toml::from_str(text).map_err(|e| e.to_string())?
    };
    let layout = match f.layout {
        Some(innermost) => Layout { innermost },
        None => Layout::innermost_default(nest),
    };
    Ok(Mapping {
        t1: f.t1,
        t2: f.t2,
        order2: f.order2,
        t3: f.t3,
        order3: f.order3,
        layout,
    })
}
