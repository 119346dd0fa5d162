//! Accelerator descriptions: PE array, clock, NoC, buffer capacities, DRAM
//! block size, and an energy profile for the cost models.

use serde::{Deserialize, Serialize};

/// Per-event energy costs in arbitrary consistent units. Values are
/// illustrative; reports built from them support relative comparisons only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    /// One multiply-accumulate.
    pub mac: f64,
    /// Per element accessed in a PE-private L1 buffer.
    pub l1_read: f64,
    pub l1_write: f64,
    /// Per element accessed in the shared L2 buffer.
    pub l2_read: f64,
    pub l2_write: f64,
    /// Per byte moved to or from DRAM.
    pub dram_read: f64,
    pub dram_write: f64,
    /// Per byte moved over the on-chip network, per hop.
    pub noc_per_byte_per_hop: f64,
}

impl Default for EnergyProfile {
    fn default() -> Self {
        // Relative magnitudes follow the usual storage-hierarchy ordering:
        // register-adjacent accesses cost ~1x a MAC, shared SRAM several
        // times that, DRAM two orders of magnitude more.
        EnergyProfile {
            mac: 1.0,
            l1_read: 1.0,
            l1_write: 1.0,
            l2_read: 6.0,
            l2_write: 6.0,
            dram_read: 200.0,
            dram_write: 200.0,
            noc_per_byte_per_hop: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorConfig {
    pub name: String,
    pub num_pes: u64,
    pub clock_mhz: f64,
    /// Aggregate NoC bandwidth between the shared buffer and the PE array.
    pub noc_bandwidth_gbps: f64,
    /// PE-private buffer capacity in bytes.
    pub l1_bytes: u64,
    /// Shared buffer capacity in bytes.
    pub l2_bytes: u64,
    /// DRAM burst/block granularity in bytes.
    pub dram_block_bytes: u64,
    /// Whether identical data can be multicast to several PEs in one send.
    pub multicast: bool,
    pub energy_profile: EnergyProfile,
}

impl AcceleratorConfig {
    /// NoC bytes per clock cycle.
    pub fn noc_bytes_per_cycle(&self) -> f64 {
        self.noc_bandwidth_gbps * 1e9 / (self.clock_mhz * 1e6)
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_mhz * 1e6
    }

    /// Peak throughput in GOPS, counting multiply and add separately.
    pub fn peak_gops(&self) -> f64 {
        self.num_pes as f64 * 2.0 * self.clock_mhz / 1000.0
    }

    /// Named preset lookup; `p1` is an edge-scale array, `p2` a cloud-scale
    /// one.
    pub fn preset(name: &str) -> Option<AcceleratorConfig> {
        match name {
            "p1" => Some(AcceleratorConfig {
                name: "p1".into(),
                num_pes: 168,
                clock_mhz: 200.0,
                noc_bandwidth_gbps: 2.4,
                l1_bytes: 512,
                l2_bytes: 110592,
                dram_block_bytes: 64,
                multicast: true,
                energy_profile: EnergyProfile::default(),
            }),
            "p2" => Some(AcceleratorConfig {
                name: "p2".into(),
                num_pes: 1024,
                clock_mhz: 200.0,
                noc_bandwidth_gbps: 25.6,
                l1_bytes: 512,
                l2_bytes: 110592,
                dram_block_bytes: 64,
                multicast: true,
                energy_profile: EnergyProfile::default(),
            }),
            _ => None,
        }
    }
}
