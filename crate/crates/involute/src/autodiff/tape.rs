use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

use super::tensor::{NodeId, Tensor};

// Generations are globally unique so a handle issued by one tape can never
// alias a node of another tape (or of the same tape after a clear).
static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn fresh_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Dimensions of a recorded convolution, shared by forward and backward.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Operation recorded on the tape. Input slots are `None` when the input is
/// a constant (no gradient flows into it); saved values are shared buffers.
pub(crate) enum Op {
    Leaf,
    Add {
        a: Option<usize>,
        b: Option<usize>,
    },
    Scale {
        a: Option<usize>,
        factor: f64,
    },
    Sum {
        a: Option<usize>,
    },
    Reshape {
        a: Option<usize>,
    },
    MatMul {
        a: Option<usize>,
        b: Option<usize>,
        a_val: Rc<Vec<f64>>,
        b_val: Rc<Vec<f64>>,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv2d {
        x: Option<usize>,
        kern: Option<usize>,
        x_val: Rc<Vec<f64>>,
        k_val: Rc<Vec<f64>>,
        dims: ConvDims,
    },
    ChannelBias {
        x: Option<usize>,
        b: Option<usize>,
        channels: usize,
        spatial: usize,
    },
    LeakyRelu {
        x: Option<usize>,
        x_val: Rc<Vec<f64>>,
        slope: f64,
    },
    Tanh {
        x: Option<usize>,
        y_val: Rc<Vec<f64>>,
    },
    InstanceNorm {
        x: Option<usize>,
        y_val: Rc<Vec<f64>>,
        inv_std: Vec<f64>,
        spatial: usize,
    },
    L1 {
        a: Option<usize>,
        b: Option<usize>,
        a_val: Rc<Vec<f64>>,
        b_val: Rc<Vec<f64>>,
    },
    Mse {
        a: Option<usize>,
        b: Option<usize>,
        a_val: Rc<Vec<f64>>,
        b_val: Rc<Vec<f64>>,
    },
}

pub(crate) struct NodeEntry {
    pub op: Op,
    pub shape: Vec<usize>,
}

/// Append-only record of differentiable operations.
///
/// Node indices are issued in execution order, so inputs always precede
/// outputs and the reverse sweep in [`backward`] visits nodes in a valid
/// topological order. `clear` invalidates all handles by bumping the
/// generation; the training loop clears once per optimization step so the
/// tape never grows across iterations.
pub struct Tape {
    generation: u64,
    nodes: Vec<NodeEntry>,
    leaves: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            generation: fresh_generation(),
            nodes: Vec::new(),
            leaves: 0,
        }
    }

    /// Total recorded nodes, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of recorded primitive applications (excludes leaf registrations).
    pub fn op_count(&self) -> usize {
        self.nodes.len() - self.leaves
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Drops all nodes and invalidates outstanding node handles.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.leaves = 0;
        self.generation = fresh_generation();
    }

    /// Returns the node index backing `t` on this tape, registering a fresh
    /// leaf when `t` requires a gradient but is not attached to the current
    /// generation. Constants return `None`.
    pub(crate) fn track(&mut self, t: &Tensor) -> Option<usize> {
        if let Some(id) = t.node_id() {
            if id.generation == self.generation {
                return Some(id.index);
            }
        }
        if !t.requires_grad() {
            return None;
        }
        let index = self.nodes.len();
        self.nodes.push(NodeEntry {
            op: Op::Leaf,
            shape: t.shape().to_vec(),
        });
        self.leaves += 1;
        t.set_node(NodeId {
            generation: self.generation,
            index,
        });
        Some(index)
    }

    /// Records an op node and returns its tracked output tensor.
    pub(crate) fn push_output(&mut self, op: Op, shape: Vec<usize>, data: Rc<Vec<f64>>) -> Tensor {
        let index = self.nodes.len();
        self.nodes.push(NodeEntry {
            op,
            shape: shape.clone(),
        });
        let out = Tensor::from_shared(shape, data, true);
        out.set_node(NodeId {
            generation: self.generation,
            index,
        });
        out
    }
}

/// Gradients produced by one [`backward`] sweep. Lookups are keyed by the
/// node handle a tensor acquired during the corresponding forward pass, so
/// they stay valid after the tape is cleared.
pub struct Gradients {
    generation: u64,
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the swept loss with respect to `t`, if `t` participated.
    pub fn wrt(&self, t: &Tensor) -> Option<&Tensor> {
        let id = t.node_id()?;
        if id.generation != self.generation {
            return None;
        }
        self.slots.get(id.index)?.as_ref()
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize, contrib: impl Iterator<Item = f64>) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    for (dst, v) in buf.iter_mut().zip(contrib) {
        *dst += v;
    }
}

/// Reverse-mode sweep from a scalar loss recorded on `tape`.
///
/// Every node reachable from the loss receives a gradient of the same shape
/// as its value; leaves of unrelated graphs on the same tape are untouched.
/// The tape is left intact; callers clear it when starting the next step.
pub fn backward(tape: &Tape, loss: &Tensor) -> Result<Gradients> {
    let id = loss
        .node_id()
        .filter(|id| id.generation == tape.generation)
        .ok_or_else(|| Error::Tape("loss is not recorded on this tape".into()))?;
    if loss.numel() != 1 {
        return Err(Error::InvalidArg {
            op: "backward",
            msg: format!("loss must be scalar, got shape {:?}", loss.shape()),
        });
    }

    let nodes = &tape.nodes;
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
    grads[id.index] = Some(vec![1.0]);

    for i in (0..=id.index).rev() {
        let Some(g) = grads[i].take() else { continue };
        let (before, rest) = grads.split_at_mut(i);
        scatter(&nodes[i].op, &g, before, nodes);
        rest[0] = Some(g);
    }

    let slots = grads
        .into_iter()
        .zip(nodes.iter())
        .map(|(g, entry)| g.map(|buf| Tensor::from_parts(entry.shape.clone(), buf, false)))
        .collect();
    Ok(Gradients {
        generation: tape.generation,
        slots,
    })
}

fn scatter(op: &Op, g: &[f64], grads: &mut [Option<Vec<f64>>], nodes: &[NodeEntry]) {
    let numel = |idx: usize| -> usize { nodes[idx].shape.iter().product() };
    match op {
        Op::Leaf => {}

        Op::Add { a, b } => {
            if let Some(a) = *a {
                accumulate(&mut grads[a], g.len(), g.iter().copied());
            }
            if let Some(b) = *b {
                accumulate(&mut grads[b], g.len(), g.iter().copied());
            }
        }

        Op::Scale { a, factor } => {
            if let Some(a) = *a {
                accumulate(&mut grads[a], g.len(), g.iter().map(|v| v * factor));
            }
        }

        Op::Sum { a } => {
            if let Some(a) = *a {
                let n = numel(a);
                accumulate(&mut grads[a], n, std::iter::repeat(g[0]).take(n));
            }
        }

        Op::Reshape { a } => {
            if let Some(a) = *a {
                accumulate(&mut grads[a], g.len(), g.iter().copied());
            }
        }

        Op::MatMul {
            a,
            b,
            a_val,
            b_val,
            m,
            k,
            n,
        } => {
            let (m, k, n) = (*m, *k, *n);
            if let Some(a) = *a {
                // dA[i,p] = sum_j g[i,j] * B[p,j]
                let buf = grads[a].get_or_insert_with(|| vec![0.0; m * k]);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    let arow = &mut buf[i * k..(i + 1) * k];
                    for p in 0..k {
                        let brow = &b_val[p * n..(p + 1) * n];
                        let mut acc = 0.0;
                        for (gv, bv) in grow.iter().zip(brow) {
                            acc += gv * bv;
                        }
                        arow[p] += acc;
                    }
                }
            }
            if let Some(b) = *b {
                // dB[p,j] = sum_i A[i,p] * g[i,j]
                let buf = grads[b].get_or_insert_with(|| vec![0.0; k * n]);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    let arow = &a_val[i * k..(i + 1) * k];
                    for (p, &av) in arow.iter().enumerate() {
                        let brow = &mut buf[p * n..(p + 1) * n];
                        for (bg, gv) in brow.iter_mut().zip(grow) {
                            *bg += av * gv;
                        }
                    }
                }
            }
        }

        Op::Conv2d {
            x,
            kern,
            x_val,
            k_val,
            dims,
        } => {
            conv2d_backward(*x, *kern, x_val, k_val, *dims, g, grads);
        }

        Op::ChannelBias {
            x,
            b,
            channels,
            spatial,
        } => {
            if let Some(x) = *x {
                accumulate(&mut grads[x], g.len(), g.iter().copied());
            }
            if let Some(b) = *b {
                let buf = grads[b].get_or_insert_with(|| vec![0.0; *channels]);
                for (c, slot) in buf.iter_mut().enumerate() {
                    *slot += g[c * spatial..(c + 1) * spatial].iter().sum::<f64>();
                }
            }
        }

        Op::LeakyRelu { x, x_val, slope } => {
            if let Some(x) = *x {
                accumulate(
                    &mut grads[x],
                    g.len(),
                    g.iter()
                        .zip(x_val.iter())
                        .map(|(gv, &xv)| if xv > 0.0 { *gv } else { gv * slope }),
                );
            }
        }

        Op::Tanh { x, y_val } => {
            if let Some(x) = *x {
                accumulate(
                    &mut grads[x],
                    g.len(),
                    g.iter()
                        .zip(y_val.iter())
                        .map(|(gv, &yv)| gv * (1.0 - yv * yv)),
                );
            }
        }

        Op::InstanceNorm {
            x,
            y_val,
            inv_std,
            spatial,
        } => {
            if let Some(x) = *x {
                let spatial = *spatial;
                let buf = grads[x].get_or_insert_with(|| vec![0.0; y_val.len()]);
                for (c, &istd) in inv_std.iter().enumerate() {
                    let range = c * spatial..(c + 1) * spatial;
                    let gc = &g[range.clone()];
                    let yc = &y_val[range.clone()];
                    let inv_n = 1.0 / spatial as f64;
                    let g_mean = gc.iter().sum::<f64>() * inv_n;
                    let gy_mean = gc.iter().zip(yc).map(|(gv, yv)| gv * yv).sum::<f64>() * inv_n;
                    for ((slot, gv), yv) in buf[range].iter_mut().zip(gc).zip(yc) {
                        *slot += istd * (gv - g_mean - yv * gy_mean);
                    }
                }
            }
        }

        Op::L1 { a, b, a_val, b_val } => {
            let scale = g[0] / a_val.len() as f64;
            let signed = |av: f64, bv: f64| {
                let d = av - bv;
                if d > 0.0 {
                    scale
                } else if d < 0.0 {
                    -scale
                } else {
                    0.0
                }
            };
            if let Some(a) = *a {
                accumulate(
                    &mut grads[a],
                    a_val.len(),
                    a_val.iter().zip(b_val.iter()).map(|(&av, &bv)| signed(av, bv)),
                );
            }
            if let Some(b) = *b {
                accumulate(
                    &mut grads[b],
                    b_val.len(),
                    a_val.iter().zip(b_val.iter()).map(|(&av, &bv)| -signed(av, bv)),
                );
            }
        }

        Op::Mse { a, b, a_val, b_val } => {
            let scale = 2.0 * g[0] / a_val.len() as f64;
            if let Some(a) = *a {
                accumulate(
                    &mut grads[a],
                    a_val.len(),
                    a_val
                        .iter()
                        .zip(b_val.iter())
                        .map(|(&av, &bv)| scale * (av - bv)),
                );
            }
            if let Some(b) = *b {
                accumulate(
                    &mut grads[b],
                    b_val.len(),
                    a_val
                        .iter()
                        .zip(b_val.iter())
                        .map(|(&av, &bv)| -scale * (av - bv)),
                );
            }
        }
    }
}

/// Output positions `o` (within `0..out_size`) whose input index
/// `o*stride + k_off - pad` falls inside `0..in_size`.
pub(crate) fn kernel_span(
    k_off: usize,
    pad: usize,
    stride: usize,
    in_size: usize,
    out_size: usize,
) -> (usize, usize) {
    let lo_num = pad as i64 - k_off as i64;
    let lo = if lo_num <= 0 {
        0
    } else {
        (lo_num as usize).div_ceil(stride)
    };
    let hi_num = in_size as i64 - 1 + pad as i64 - k_off as i64;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = (hi_num as usize) / stride + 1;
    (lo.min(out_size), hi.min(out_size))
}

fn conv2d_backward(
    x_slot: Option<usize>,
    k_slot: Option<usize>,
    x_val: &[f64],
    k_val: &[f64],
    d: ConvDims,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let (mut dx, mut dk) = (None, None);
    if let Some(x) = x_slot {
        dx = Some(std::mem::take(
            grads[x].get_or_insert_with(|| vec![0.0; d.c_in * d.h * d.w]),
        ));
    }
    if let Some(k) = k_slot {
        dk = Some(std::mem::take(
            grads[k].get_or_insert_with(|| vec![0.0; d.c_out * d.c_in * d.kh * d.kw]),
        ));
    }

    for co in 0..d.c_out {
        let g_plane = &g[co * d.out_h * d.out_w..][..d.out_h * d.out_w];
        for ci in 0..d.c_in {
            let x_plane = &x_val[ci * d.h * d.w..][..d.h * d.w];
            let k_base = (co * d.c_in + ci) * d.kh * d.kw;
            for r in 0..d.kh {
                let (oh0, oh1) = kernel_span(r, d.pad, d.stride, d.h, d.out_h);
                for c in 0..d.kw {
                    let (ow0, ow1) = kernel_span(c, d.pad, d.stride, d.w, d.out_w);
                    if oh0 >= oh1 || ow0 >= ow1 {
                        continue;
                    }
                    let wgt = k_val[k_base + r * d.kw + c];
                    let mut k_acc = 0.0;
                    for oh in oh0..oh1 {
                        let ih = oh * d.stride + r - d.pad;
                        let grow = &g_plane[oh * d.out_w..][..d.out_w];
                        let iw0 = ow0 * d.stride + c - d.pad;
                        if let Some(dx) = dx.as_mut() {
                            let xrow = &mut dx[ci * d.h * d.w + ih * d.w..][..d.w];
                            for ow in ow0..ow1 {
                                xrow[iw0 + (ow - ow0) * d.stride] += wgt * grow[ow];
                            }
                        }
                        if k_slot.is_some() {
                            let xrow = &x_plane[ih * d.w..][..d.w];
                            for ow in ow0..ow1 {
                                k_acc += grow[ow] * xrow[iw0 + (ow - ow0) * d.stride];
                            }
                        }
                    }
                    if let Some(dk) = dk.as_mut() {
                        dk[k_base + r * d.kw + c] += k_acc;
                    }
                }
            }
        }
    }

    if let (Some(x), Some(buf)) = (x_slot, dx) {
        grads[x] = Some(buf);
    }
    if let (Some(k), Some(buf)) = (k_slot, dk) {
        grads[k] = Some(buf);
    }
}
