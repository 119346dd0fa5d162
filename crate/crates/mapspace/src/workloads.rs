//! Operator generators for the supported workload families.
//!
//! Every generator produces a normalized [`LoopNest`] with conventional
//! dimension-variable names (`d_K`, `d_C`, `d_P`, ... for convolutions,
//! `d_M`, `d_N`, `d_K` for GEMM). Loops with a single iteration (batch of
//! one, pointwise filter) are dropped. Element size defaults to one byte.

use crate::loopnest::{
    normalize, AccessDirection, IrError, LoopNest, RawLoop, ReduceOp, StatementKind, Subscript,
    TensorRef,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dParams {
    pub name: String,
    pub batch: u64,
    pub in_channels: u64,
    pub out_channels: u64,
    pub out_h: u64,
    pub out_w: u64,
    pub filter_h: u64,
    pub filter_w: u64,
    pub stride: u64,
    pub dilation: u64,
    pub depthwise: bool,
}

impl Conv2dParams {
    pub fn new(name: impl Into<String>, c: u64, k: u64, hw: u64, filter: u64, stride: u64) -> Self {
        Conv2dParams {
            name: name.into(),
            batch: 1,
            in_channels: c,
            out_channels: k,
            out_h: hw,
            out_w: hw,
            filter_h: filter,
            filter_w: filter,
            stride,
            dilation: 1,
            depthwise: false,
        }
    }

    pub fn depthwise(name: impl Into<String>, k: u64, hw: u64, filter: u64, stride: u64) -> Self {
        Conv2dParams {
            depthwise: true,
            ..Conv2dParams::new(name, k, k, hw, filter, stride)
        }
    }

    pub fn input_h(&self) -> u64 {
        (self.out_h - 1) * self.stride + (self.filter_h - 1) * self.dilation + 1
    }

    pub fn input_w(&self) -> u64 {
        (self.out_w - 1) * self.stride + (self.filter_w - 1) * self.dilation + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GemmParams {
    pub name: String,
    pub m: u64,
    pub n: u64,
    pub k: u64,
}

impl GemmParams {
    pub fn new(name: impl Into<String>, m: u64, n: u64, k: u64) -> Self {
        GemmParams {
            name: name.into(),
            m,
            n,
            k,
        }
    }
}

fn push_loop(loops: &mut Vec<RawLoop>, name: &str, extent: u64) {
    if extent > 1 {
        loops.push(RawLoop::counted(name, extent));
    }
}

/// Subscript over `iter` if the loop exists, else a constant zero.
fn maybe_iter(loops: &[RawLoop], iter: &str) -> Subscript {
    if loops.iter().any(|l| l.name == iter) {
        Subscript::iter(iter)
    } else {
        Subscript::new(Vec::<(String, i64)>::new(), 0)
    }
}

fn window(loops: &[RawLoop], out: &str, stride: u64, win: &str, dilation: u64) -> Subscript {
    let mut terms: Vec<(String, i64)> = Vec::new();
    if loops.iter().any(|l| l.name == out) {
        terms.push((out.to_string(), stride as i64));
    }
    if loops.iter().any(|l| l.name == win) {
        terms.push((win.to_string(), dilation as i64));
    }
    Subscript::new(terms, 0)
}

/// 2-D convolution in any of its variants (regular, pointwise, depthwise,
/// strided, dilated).
pub fn make_conv2d(p: &Conv2dParams) -> Result<LoopNest, IrError> {
    let mut loops = Vec::new();
    push_loop(&mut loops, "b", p.batch);
    push_loop(&mut loops, "k", p.out_channels);
    if !p.depthwise {
        push_loop(&mut loops, "c", p.in_channels);
    }
    push_loop(&mut loops, "p", p.out_h);
    push_loop(&mut loops, "q", p.out_w);
    push_loop(&mut loops, "r", p.filter_h);
    push_loop(&mut loops, "s", p.filter_w);

    let mut odims = vec![
        ("d_N".to_string(), maybe_iter(&loops, "b")),
        ("d_K".to_string(), maybe_iter(&loops, "k")),
        ("d_P".to_string(), maybe_iter(&loops, "p")),
        ("d_Q".to_string(), maybe_iter(&loops, "q")),
    ];
    let mut oext = vec![p.batch, p.out_channels, p.out_h, p.out_w];
    if p.batch == 1 {
        odims.remove(0);
        oext.remove(0);
    }

    let (ichan_var, ichan_sub, ichan_ext) = if p.depthwise {
        ("d_K".to_string(), maybe_iter(&loops, "k"), p.out_channels)
    } else {
        ("d_C".to_string(), maybe_iter(&loops, "c"), p.in_channels)
    };
    let mut idims = vec![
        ("d_N".to_string(), maybe_iter(&loops, "b")),
        (ichan_var, ichan_sub),
        (
            "d_X".to_string(),
            window(&loops, "p", p.stride, "r", p.dilation),
        ),
        (
            "d_Y".to_string(),
            window(&loops, "q", p.stride, "s", p.dilation),
        ),
    ];
    let mut iext = vec![p.batch, ichan_ext, p.input_h(), p.input_w()];
    if p.batch == 1 {
        idims.remove(0);
        iext.remove(0);
    }

    let mut wdims = vec![
        ("d_K".to_string(), maybe_iter(&loops, "k")),
        ("d_R".to_string(), maybe_iter(&loops, "r")),
        ("d_S".to_string(), maybe_iter(&loops, "s")),
    ];
    let mut wext = vec![p.out_channels, p.filter_h, p.filter_w];
    if !p.depthwise {
        wdims.insert(1, ("d_C".to_string(), maybe_iter(&loops, "c")));
        wext.insert(1, p.in_channels);
    }

    let refs = [
        TensorRef {
            tensor: "O".into(),
            direction: AccessDirection::ReadWrite,
            dims: odims,
            dim_extents: oext,
        },
        TensorRef {
            tensor: "W".into(),
            direction: AccessDirection::Read,
            dims: wdims,
            dim_extents: wext,
        },
        TensorRef {
            tensor: "I".into(),
            direction: AccessDirection::Read,
            dims: idims,
            dim_extents: iext,
        },
    ];
    normalize(
        p.name.clone(),
        &loops,
        &refs,
        StatementKind::Reduce(ReduceOp::Sum),
        1,
    )
}

/// Dense matrix multiply `C[m,n] += A[m,k] * B[k,n]`.
pub fn make_gemm(p: &GemmParams) -> Result<LoopNest, IrError> {
    let mut loops = Vec::new();
    push_loop(&mut loops, "m", p.m);
    push_loop(&mut loops, "n", p.n);
    push_loop(&mut loops, "k", p.k);
    let refs = [
        TensorRef {
            tensor: "C".into(),
            direction: AccessDirection::ReadWrite,
            dims: vec![
                ("d_M".into(), maybe_iter(&loops, "m")),
                ("d_N".into(), maybe_iter(&loops, "n")),
            ],
            dim_extents: vec![p.m, p.n],
        },
        TensorRef {
            tensor: "A".into(),
            direction: AccessDirection::Read,
            dims: vec![
                ("d_M".into(), maybe_iter(&loops, "m")),
                ("d_K".into(), maybe_iter(&loops, "k")),
            ],
            dim_extents: vec![p.m, p.k],
        },
        TensorRef {
            tensor: "B".into(),
            direction: AccessDirection::Read,
            dims: vec![
                ("d_K".into(), maybe_iter(&loops, "k")),
                ("d_N".into(), maybe_iter(&loops, "n")),
            ],
            dim_extents: vec![p.k, p.n],
        },
    ];
    normalize(
        p.name.clone(),
        &loops,
        &refs,
        StatementKind::Reduce(ReduceOp::Sum),
        1,
    )
}

/// Fully connected layer as GEMM: M = batch, N = output features,
/// K = input features.
pub fn make_mlp(name: impl Into<String>, in_features: u64, out_features: u64, batch: u64) -> Result<LoopNest, IrError> {
    make_gemm(&GemmParams::new(name, batch, out_features, in_features))
}

/// A single LSTM cell's gate computation as GEMM over the concatenated
/// hidden-and-input vector: M = batch, N = E, K = 2E.
pub fn lstm_to_gemm(name: impl Into<String>, embedding: u64, batch: u64) -> Result<LoopNest, IrError> {
    make_gemm(&GemmParams::new(name, batch, embedding, 2 * embedding))
}

/// 1-D convolution `O[i0] += W[i1] * I[i0+i1]`.
pub fn make_conv1d(name: impl Into<String>, out: u64, filter: u64) -> Result<LoopNest, IrError> {
    let loops = [RawLoop::counted("i0", out), RawLoop::counted("i1", filter)];
    let refs = [
        TensorRef {
            tensor: "O".into(),
            direction: AccessDirection::ReadWrite,
            dims: vec![("d_O".into(), Subscript::iter("i0"))],
            dim_extents: vec![out],
        },
        TensorRef {
            tensor: "W".into(),
            direction: AccessDirection::Read,
            dims: vec![("d_W".into(), Subscript::iter("i1"))],
            dim_extents: vec![filter],
        },
        TensorRef {
            tensor: "I".into(),
            direction: AccessDirection::Read,
            dims: vec![(
                "d_I".into(),
                Subscript::new([("i0", 1i64), ("i1", 1i64)], 0),
            )],
            dim_extents: vec![out + filter - 1],
        },
    ];
    normalize(name, &loops, &refs, StatementKind::Reduce(ReduceOp::Sum), 1)
}

/// Max or average pooling over a sliding window.
pub fn make_pooling(
    name: impl Into<String>,
    channels: u64,
    out_hw: u64,
    window_hw: u64,
    stride: u64,
    max: bool,
) -> Result<LoopNest, IrError> {
    let mut loops = Vec::new();
    push_loop(&mut loops, "k", channels);
    push_loop(&mut loops, "p", out_hw);
    push_loop(&mut loops, "q", out_hw);
    push_loop(&mut loops, "r", window_hw);
    push_loop(&mut loops, "s", window_hw);
    let in_hw = (out_hw - 1) * stride + window_hw;
    let refs = [
        TensorRef {
            tensor: "O".into(),
            direction: AccessDirection::ReadWrite,
            dims: vec![
                ("d_K".into(), maybe_iter(&loops, "k")),
                ("d_P".into(), maybe_iter(&loops, "p")),
                ("d_Q".into(), maybe_iter(&loops, "q")),
            ],
            dim_extents: vec![channels, out_hw, out_hw],
        },
        TensorRef {
            tensor: "I".into(),
            direction: AccessDirection::Read,
            dims: vec![
                ("d_K".into(), maybe_iter(&loops, "k")),
                ("d_X".into(), window(&loops, "p", stride, "r", 1)),
                ("d_Y".into(), window(&loops, "q", stride, "s", 1)),
            ],
            dim_extents: vec![channels, in_hw, in_hw],
        },
    ];
    let op = if max { ReduceOp::Max } else { ReduceOp::Sum };
    normalize(name, &loops, &refs, StatementKind::Reduce(op), 1)
}

/// Element-wise residual addition `O[i] = A[i] + B[i]`.
pub fn make_residual(name: impl Into<String>, len: u64) -> Result<LoopNest, IrError> {
    let loops = [RawLoop::counted("i", len)];
    let r = |t: &str| TensorRef {
        tensor: t.into(),
        direction: AccessDirection::Read,
        dims: vec![(format!("d_{t}"), Subscript::iter("i"))],
        dim_extents: vec![len],
    };
    let refs = [
        TensorRef {
            tensor: "O".into(),
            direction: AccessDirection::Write,
            dims: vec![("d_O".into(), Subscript::iter("i"))],
            dim_extents: vec![len],
        },
        r("A"),
        r("B"),
    ];
    normalize(name, &loops, &refs, StatementKind::Assign, 1)
}

/// Element-wise activation `O[i] = max(I[i], 0)`.
pub fn make_relu(name: impl Into<String>, len: u64) -> Result<LoopNest, IrError> {
    let loops = [RawLoop::counted("i", len)];
    let refs = [
        TensorRef {
            tensor: "O".into(),
            direction: AccessDirection::Write,
            dims: vec![("d_O".into(), Subscript::iter("i"))],
            dim_extents: vec![len],
        },
        TensorRef {
            tensor: "I".into(),
            direction: AccessDirection::Read,
            dims: vec![("d_I".into(), Subscript::iter("i"))],
            dim_extents: vec![len],
        },
    ];
    normalize(name, &loops, &refs, StatementKind::Assign, 1)
}

/// Regular 1-D stencil `O[i] = f(I[i], I[i+1], ..., I[i+taps-1])`.
pub fn make_stencil(name: impl Into<String>, len: u64, taps: u64) -> Result<LoopNest, IrError> {
    let loops = [RawLoop::counted("i", len)];
    let mut refs = vec![TensorRef {
        tensor: "O".into(),
        direction: AccessDirection::Write,
        dims: vec![("d_O".into(), Subscript::iter("i"))],
        dim_extents: vec![len],
    }];
    for t in 0..taps {
        refs.push(TensorRef {
            tensor: "I".into(),
            direction: AccessDirection::Read,
            dims: vec![("d_I".into(), Subscript::new([("i", 1i64)], t as i64))],
            dim_extents: vec![len + taps - 1],
        });
    }
    normalize(name, &loops, &refs, StatementKind::Assign, 1)
}

/// GEMM over a triangular domain: `k` ranges over `0..=m`.
pub fn make_triangular_gemm(name: impl Into<String>, m: u64, n: u64) -> Result<LoopNest, IrError> {
    let loops = [
        RawLoop::counted("m", m),
        RawLoop::counted("n", n),
        RawLoop {
            name: "k".into(),
            lower: 0,
            upper_constant: 1,
            upper_terms: vec![("m".into(), 1)],
            step: 1,
        },
    ];
    let refs = [
        TensorRef {
            tensor: "C".into(),
            direction: AccessDirection::ReadWrite,
            dims: vec![
                ("d_M".into(), Subscript::iter("m")),
                ("d_N".into(), Subscript::iter("n")),
            ],
            dim_extents: vec![m, n],
        },
        TensorRef {
            tensor: "A".into(),
            direction: AccessDirection::Read,
            dims: vec![
                ("d_M".into(), Subscript::iter("m")),
                ("d_K".into(), Subscript::iter("k")),
            ],
            dim_extents: vec![m, m],
        },
        TensorRef {
            tensor: "B".into(),
            direction: AccessDirection::Read,
            dims: vec![
                ("d_K".into(), Subscript::iter("k")),
                ("d_N".into(), Subscript::iter("n")),
            ],
            dim_extents: vec![m, n],
        },
    ];
    normalize(name, &loops, &refs, StatementKind::Reduce(ReduceOp::Sum), 1)
}

/// Parametric multi-cell recurrence `H[c+1][i] = f(H[c][i], X[c][i], W[i])`.
/// The cell-to-cell flow dependence on `H` is what rules this out.
pub fn make_multicell_lstm(name: impl Into<String>, cells: u64, features: u64) -> Result<LoopNest, IrError> {
    let loops = [RawLoop::counted("c", cells), RawLoop::counted("i", features)];
    let refs = [
        TensorRef {
            tensor: "H".into(),
            direction: AccessDirection::Write,
            dims: vec![
                ("d_Hc".into(), Subscript::new([("c", 1i64)], 1)),
                ("d_Hf".into(), Subscript::iter("i")),
            ],
            dim_extents: vec![cells + 1, features],
        },
        TensorRef {
            tensor: "H".into(),
            direction: AccessDirection::Read,
            dims: vec![
                ("d_Hc".into(), Subscript::iter("c")),
                ("d_Hf".into(), Subscript::iter("i")),
            ],
            dim_extents: vec![cells + 1, features],
        },
        TensorRef {
            tensor: "X".into(),
            direction: AccessDirection::Read,
            dims: vec![
                ("d_Xc".into(), Subscript::iter("c")),
                ("d_Xf".into(), Subscript::iter("i")),
            ],
            dim_extents: vec![cells, features],
        },
        TensorRef {
            tensor: "W".into(),
            direction: AccessDirection::Read,
            dims: vec![("d_Wf".into(), Subscript::iter("i"))],
            dim_extents: vec![features],
        },
    ];
    normalize(name, &loops, &refs, StatementKind::Assign, 1)
}

/// The GEMM workloads used throughout the evaluation tables.
pub fn gemm_table() -> Vec<GemmParams> {
    vec![
        GemmParams::new("gnmt_1", 128, 2048, 4096),
        GemmParams::new("gnmt_2", 320, 3072, 4096),
        GemmParams::new("gnmt_3", 1632, 36548, 1024),
        GemmParams::new("gnmt_4", 2048, 4096, 32),
        GemmParams::new("deepbench_1", 1024, 16, 500000),
        GemmParams::new("deepbench_2", 35, 8457, 2560),
        GemmParams::new("transformer_1", 31999, 1024, 84),
        GemmParams::new("transformer_2", 84, 1024, 84),
        GemmParams::new("ncf_1", 2048, 1, 128),
        GemmParams::new("ncf_2", 256, 256, 2048),
    ]
}

/// MLP layers as `(name, in_features, out_features)`.
pub fn mlp_table() -> Vec<(String, u64, u64)> {
    vec![
        ("mlp_m_fc1".into(), 784, 1000),
        ("mlp_m_fc2".into(), 1000, 500),
        ("mlp_m_fc3".into(), 500, 250),
        ("mlp_l_fc1".into(), 784, 1500),
        ("mlp_l_fc2".into(), 1500, 1000),
        ("mlp_l_fc3".into(), 1000, 500),
    ]
}

/// LSTM/RHN cells as `(name, embedding, batch)`.
pub fn lstm_table() -> Vec<(String, u64, u64)> {
    vec![
        ("lstm_m".into(), 500, 128),
        ("lstm_l".into(), 1000, 128),
        ("rhn".into(), 1500, 128),
    ]
}

pub fn alexnet() -> Vec<Conv2dParams> {
    vec![
        Conv2dParams::new("alexnet_conv1", 3, 96, 55, 11, 4),
        Conv2dParams::new("alexnet_conv2", 96, 256, 27, 5, 1),
        Conv2dParams::new("alexnet_conv3", 256, 384, 13, 3, 1),
        Conv2dParams::new("alexnet_conv4", 384, 384, 13, 3, 1),
        Conv2dParams::new("alexnet_conv5", 384, 256, 13, 3, 1),
    ]
}

pub fn vgg16() -> Vec<Conv2dParams> {
    let dims: [(u64, u64, u64); 13] = [
        (3, 64, 224),
        (64, 64, 224),
        (64, 128, 112),
        (128, 128, 112),
        (128, 256, 56),
        (256, 256, 56),
        (256, 256, 56),
        (256, 512, 28),
        (512, 512, 28),
        (512, 512, 28),
        (512, 512, 14),
        (512, 512, 14),
        (512, 512, 14),
    ];
    dims.iter()
        .enumerate()
        .map(|(i, &(c, k, hw))| Conv2dParams::new(format!("vgg16_conv{}", i + 1), c, k, hw, 3, 1))
        .collect()
}

pub fn resnet50() -> Vec<Conv2dParams> {
    let mut layers = vec![Conv2dParams::new("resnet50_conv1", 3, 64, 112, 7, 2)];
    // (stage, input channels into the stage, bottleneck width, output
    // channels, spatial size, blocks)
    let stages: [(u64, u64, u64, u64, u64, u64); 4] = [
        (2, 64, 64, 256, 56, 3),
        (3, 256, 128, 512, 28, 4),
        (4, 512, 256, 1024, 14, 6),
        (5, 1024, 512, 2048, 7, 8),
    ];
    for &(stage, c_in, width, c_out, hw, blocks) in &stages[..3] {
        push_resnet_stage(&mut layers, stage, c_in, width, c_out, hw, blocks);
    }
    let (stage, c_in, width, c_out, hw, _) = stages[3];
    push_resnet_stage(&mut layers, stage, c_in, width, c_out, hw, 3);
    layers
}

fn push_resnet_stage(
    layers: &mut Vec<Conv2dParams>,
    stage: u64,
    c_in: u64,
    width: u64,
    c_out: u64,
    hw: u64,
    blocks: u64,
) {
    let entry_hw = if stage == 2 { hw } else { hw * 2 };
    for b in 1..=blocks {
        let n = |part: &str| format!("resnet50_conv{stage}_{b}{part}");
        if b == 1 {
            layers.push(Conv2dParams::new(n("a"), c_in, width, entry_hw, 1, 1));
            let stride = if stage == 2 { 1 } else { 2 };
            layers.push(Conv2dParams::new(n("b"), width, width, hw, 3, stride));
            layers.push(Conv2dParams::new(n("c"), width, c_out, hw, 1, 1));
            let ds = if stage == 2 { 1 } else { 2 };
            layers.push(Conv2dParams::new(n("_ds"), c_in, c_out, hw, 1, ds));
        } else {
            layers.push(Conv2dParams::new(n("a"), c_out, width, hw, 1, 1));
            layers.push(Conv2dParams::new(n("b"), width, width, hw, 3, 1));
            layers.push(Conv2dParams::new(n("c"), width, c_out, hw, 1, 1));
        }
    }
}

pub fn mobilenet_v2() -> Vec<Conv2dParams> {
    let mut layers = vec![Conv2dParams::new("mobilenetv2_conv1", 3, 32, 112, 3, 2)];
    // (expansion, output channels, repeats, stride of first repeat)
    let cfg: [(u64, u64, u64, u64); 7] = [
        (1, 16, 1, 1),
        (6, 24, 2, 2),
        (6, 32, 3, 2),
        (6, 64, 4, 2),
        (6, 96, 3, 1),
        (6, 160, 3, 2),
        (6, 320, 1, 1),
    ];
    let mut c_in = 32u64;
    let mut hw = 112u64;
    let mut idx = 0u64;
    for &(t, c_out, repeats, first_stride) in &cfg {
        for r in 0..repeats {
            idx += 1;
            let stride = if r == 0 { first_stride } else { 1 };
            let out_hw = hw / stride;
            let expanded = c_in * t;
            let n = |part: &str| format!("mobilenetv2_block{idx}_{part}");
            if t != 1 {
                layers.push(Conv2dParams::new(n("expand"), c_in, expanded, hw, 1, 1));
            }
            layers.push(Conv2dParams::depthwise(n("dw"), expanded, out_hw, 3, stride));
            layers.push(Conv2dParams::new(n("project"), expanded, c_out, out_hw, 1, 1));
            c_in = c_out;
            hw = out_hw;
        }
    }
    layers.push(Conv2dParams::new("mobilenetv2_conv_last", 320, 1280, 7, 1, 1));
    layers
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformability::check_conformable;

    #[test]
    fn conv2d_regular_shape() {
        let p = Conv2dParams::new("c", 64, 128, 56, 3, 1);
        let nest = make_conv2d(&p).unwrap();
        let names: Vec<&str> = nest.iterators.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, vec!["k", "c", "p", "q", "r", "s"]);
        assert_eq!(nest.macs(), 128 * 64 * 56 * 56 * 9);
        let input = nest.refs.iter().find(|r| r.tensor == "I").unwrap();
        assert_eq!(input.dim_extents, vec![64, 58, 58]);
    }

    #[test]
    fn strided_conv_input_extent() {
        let p = Conv2dParams::new("c", 3, 96, 55, 11, 4);
        assert_eq!(p.input_h(), 227);
    }

    #[test]
    fn pointwise_drops_window_loops() {
        let p = Conv2dParams::new("pw", 32, 64, 28, 1, 1);
        let nest = make_conv2d(&p).unwrap();
        let names: Vec<&str> = nest.iterators.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, vec!["k", "c", "p", "q"]);
        assert!(check_conformable(&nest).conformable());
    }

    #[test]
    fn depthwise_shares_channel_dim() {
        let p = Conv2dParams::depthwise("dw", 32, 28, 3, 1);
        let nest = make_conv2d(&p).unwrap();
        let names: Vec<&str> = nest.iterators.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, vec!["k", "p", "q", "r", "s"]);
        let report = check_conformable(&nest);
        assert!(report.conformable(), "{:?}", report.violations);
        assert_eq!(report.dim_var_of("k"), Some("d_K"));
    }

    #[test]
    fn gemm_independent_dims_cover_iterators() {
        let nest = make_gemm(&GemmParams::new("g", 8, 8, 8)).unwrap();
        let report = check_conformable(&nest);
        assert!(report.conformable());
        for it in ["m", "n", "k"] {
            assert!(report.dim_var_of(it).is_some(), "iterator {it}");
        }
    }

    #[test]
    fn lstm_is_gemm_with_doubled_k() {
        let nest = lstm_to_gemm("l", 500, 128).unwrap();
        assert_eq!(nest.extents(), vec![128, 500, 1000]);
    }

    #[test]
    fn model_layer_counts() {
        assert_eq!(alexnet().len(), 5);
        assert_eq!(vgg16().len(), 13);
        assert_eq!(resnet50().len(), 53);
        assert_eq!(mobilenet_v2().len(), 52);
    }

    #[test]
    fn mobilenet_tracks_channels() {
        let layers = mobilenet_v2();
        let last_block = layers
            .iter()
            .find(|l| l.name == "mobilenetv2_block17_project")
            .unwrap();
        assert_eq!(last_block.in_channels, 960);
        assert_eq!(last_block.out_channels, 320);
        assert_eq!(last_block.out_h, 7);
        let dw = layers.iter().filter(|l| l.depthwise).count();
        assert_eq!(dw, 17);
    }
}
