//! Regenerates the bundled data files from the workload tables.
//!
//! Usage: `cargo run -p mapspace-cli --example gen_bundled_data -- <repo-root>`.
//! The `bundled_files_match_tables` integration test keeps the checked-in
//! files and the tables in sync; rerun this after editing a table.

use mapspace::workloads::{self, Conv2dParams};
use std::fmt::Write as _;
use std::path::Path;

fn conv_entries(layers: &[Conv2dParams]) -> String {
    let mut s = String::new();
    for p in layers {
        assert_eq!(p.out_h, p.out_w, "{}: bundled files describe square outputs", p.name);
        assert_eq!(p.filter_h, p.filter_w, "{}: bundled files describe square filters", p.name);
        assert_eq!(p.batch, 1);
        assert_eq!(p.dilation, 1);
        let _ = writeln!(s, "[[operator]]");
        let _ = writeln!(s, "kind = \"conv2d\"");
        let _ = writeln!(s, "name = \"{}\"", p.name);
        let _ = writeln!(s, "in_channels = {}", p.in_channels);
        let _ = writeln!(s, "out_channels = {}", p.out_channels);
        let _ = writeln!(s, "out_hw = {}", p.out_h);
        let _ = writeln!(s, "filter = {}", p.filter_h);
        if p.stride != 1 {
            let _ = writeln!(s, "stride = {}", p.stride);
        }
        if p.depthwise {
            let _ = writeln!(s, "depthwise = true");
        }
        let _ = writeln!(s);
    }
    s
}

fn main() {
    let root = std::env::args().nth(1).expect("usage: gen_bundled_data <repo-root>");
    let root = Path::new(&root);
    let wdir = root.join("data/workloads");
    let adir = root.join("data/accelerators");
    std::fs::create_dir_all(&wdir).unwrap();
    std::fs::create_dir_all(&adir).unwrap();

    let mut gemm = String::new();
    for p in workloads::gemm_table() {
        let _ = writeln!(gemm, "[[operator]]");
        let _ = writeln!(gemm, "kind = \"gemm\"");
        let _ = writeln!(gemm, "name = \"{}\"", p.name);
        let _ = writeln!(gemm, "m = {}", p.m);
        let _ = writeln!(gemm, "n = {}", p.n);
        let _ = writeln!(gemm, "k = {}", p.k);
        let _ = writeln!(gemm);
    }
    std::fs::write(wdir.join("gemm.toml"), gemm).unwrap();

    let mut mlp = String::new();
    for (name, in_f, out_f) in workloads::mlp_table() {
        let _ = writeln!(mlp, "[[operator]]");
        let _ = writeln!(mlp, "kind = \"mlp\"");
        let _ = writeln!(mlp, "name = \"{name}\"");
        let _ = writeln!(mlp, "in_features = {in_f}");
        let _ = writeln!(mlp, "out_features = {out_f}");
        let _ = writeln!(mlp, "batch = 1");
        let _ = writeln!(mlp);
    }
    std::fs::write(wdir.join("mlp.toml"), mlp).unwrap();

    let mut lstm = String::new();
    for (name, embedding, batch) in workloads::lstm_table() {
        let _ = writeln!(lstm, "[[operator]]");
        let _ = writeln!(lstm, "kind = \"lstm\"");
        let _ = writeln!(lstm, "name = \"{name}\"");
        let _ = writeln!(lstm, "embedding = {embedding}");
        let _ = writeln!(lstm, "batch = {batch}");
        let _ = writeln!(lstm);
    }
    std::fs::write(wdir.join("lstm.toml"), lstm).unwrap();

    let models: [(&str, Vec<Conv2dParams>); 4] = [
        ("alexnet", workloads::alexnet()),
        ("vgg16", workloads::vgg16()),
        ("resnet50", workloads::resnet50()),
        ("mobilenet_v2", workloads::mobilenet_v2()),
    ];
    for (file, layers) in &models {
        std::fs::write(wdir.join(format!("{file}.toml")), conv_entries(layers)).unwrap();
    }

    for preset in ["p1", "p2"] {
        let hw = mapspace::AcceleratorConfig::preset(preset).unwrap();
        let mut s = String::new();
        let _ = writeln!(s, "num_pes = {}", hw.num_pes);
        let _ = writeln!(s, "clock_mhz = {:.1}", hw.clock_mhz);
        let _ = writeln!(s, "noc_bandwidth_gbps = {}", hw.noc_bandwidth_gbps);
        let _ = writeln!(s, "l1_bytes = {}", hw.l1_bytes);
        let _ = writeln!(s, "l2_bytes = {}", hw.l2_bytes);
        let _ = writeln!(s, "dram_block_bytes = {}", hw.dram_block_bytes);
        let _ = writeln!(s, "multicast = {}", hw.multicast);
        std::fs::write(adir.join(format!("{preset}.toml")), s).unwrap();
    }
    println!("wrote bundled files under {}", root.display());
}
