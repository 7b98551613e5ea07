//! Differentiable primitives. Each op computes its value eagerly and records
//! a tape node whenever an input is gradient-tracked; outputs of recorded ops
//! are themselves tracked so graphs compose.

use std::rc::Rc;

use crate::error::{Error, Result};

use super::tape::{kernel_span, ConvDims, Op, Tape};
use super::tensor::Tensor;

fn output(
    tape: &mut Tape,
    tracked: bool,
    op: impl FnOnce(&mut Tape, &Rc<Vec<f64>>) -> Op,
    shape: Vec<usize>,
    data: Vec<f64>,
) -> Tensor {
    let data = Rc::new(data);
    if tracked {
        let op = op(tape, &data);
        tape.push_output(op, shape, data)
    } else {
        Tensor::from_shared(shape, data, false)
    }
}

/// Matrix product of `a` (m×k) and `b` (k×n).
pub fn matmul(tape: &mut Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ashape, bshape) = (a.shape(), b.shape());
    if ashape.len() != 2 || bshape.len() != 2 || ashape[1] != bshape[0] {
        return Err(Error::DimMismatch {
            op: "matmul",
            lhs: ashape.to_vec(),
            rhs: bshape.to_vec(),
        });
    }
    let (m, k, n) = (ashape[0], ashape[1], bshape[1]);
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    let tracked = a.requires_grad() || b.requires_grad();
    Ok(output(
        tape,
        tracked,
        |t, _| Op::MatMul {
            a: t.track(a),
            b: t.track(b),
            a_val: a.data_rc(),
            b_val: b.data_rc(),
            m,
            k,
            n,
        },
        vec![m, n],
        out,
    ))
}

/// 2-D convolution of `x` (c_in×h×w) with `kernels` (c_out×c_in×kh×kw),
/// zero padding.
pub fn conv2d(
    tape: &mut Tape,
    x: &Tensor,
    kernels: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (xs, ks) = (x.shape(), kernels.shape());
    if xs.len() != 3 || ks.len() != 4 || ks[1] != xs[0] {
        return Err(Error::DimMismatch {
            op: "conv2d",
            lhs: xs.to_vec(),
            rhs: ks.to_vec(),
        });
    }
    if stride == 0 {
        return Err(Error::InvalidArg {
            op: "conv2d",
            msg: "stride must be >= 1".into(),
        });
    }
    let (h, w, kh, kw) = (xs[1], xs[2], ks[2], ks[3]);
    if kh > h + 2 * pad || kw > w + 2 * pad {
        return Err(Error::DimMismatch {
            op: "conv2d",
            lhs: xs.to_vec(),
            rhs: ks.to_vec(),
        });
    }
    let d = ConvDims {
        c_in: xs[0],
        h,
        w,
        c_out: ks[0],
        kh,
        kw,
        stride,
        pad,
        out_h: (h + 2 * pad - kh) / stride + 1,
        out_w: (w + 2 * pad - kw) / stride + 1,
    };

    let mut out = vec![0.0; d.c_out * d.out_h * d.out_w];
    let (xd, kd) = (x.data(), kernels.data());
    for co in 0..d.c_out {
        let o_plane = &mut out[co * d.out_h * d.out_w..][..d.out_h * d.out_w];
        for ci in 0..d.c_in {
            let x_plane = &xd[ci * d.h * d.w..][..d.h * d.w];
            let k_base = (co * d.c_in + ci) * d.kh * d.kw;
            for r in 0..d.kh {
                let (oh0, oh1) = kernel_span(r, pad, stride, d.h, d.out_h);
                for c in 0..d.kw {
                    let (ow0, ow1) = kernel_span(c, pad, stride, d.w, d.out_w);
                    if oh0 >= oh1 || ow0 >= ow1 {
                        continue;
                    }
                    let wgt = kd[k_base + r * d.kw + c];
                    let iw0 = ow0 * stride + c - pad;
                    for oh in oh0..oh1 {
                        let ih = oh * stride + r - pad;
                        let xrow = &x_plane[ih * d.w..][..d.w];
                        let orow = &mut o_plane[oh * d.out_w..][..d.out_w];
                        if stride == 1 {
                            for (o, &xv) in orow[ow0..ow1].iter_mut().zip(&xrow[iw0..]) {
                                *o += wgt * xv;
                            }
                        } else {
                            for ow in ow0..ow1 {
                                orow[ow] += wgt * xrow[iw0 + (ow - ow0) * stride];
                            }
                        }
                    }
                }
            }
        }
    }

    let tracked = x.requires_grad() || kernels.requires_grad();
    Ok(output(
        tape,
        tracked,
        |t, _| Op::Conv2d {
            x: t.track(x),
            kern: t.track(kernels),
            x_val: x.data_rc(),
            k_val: kernels.data_rc(),
            dims: d,
        },
        vec![d.c_out, d.out_h, d.out_w],
        out,
    ))
}

/// Elementwise max(x, slope*x) with 0 <= slope < 1.
pub fn leaky_relu(tape: &mut Tape, x: &Tensor, slope: f64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&slope) {
        return Err(Error::InvalidArg {
            op: "leaky_relu",
            msg: format!("slope must be in [0, 1), got {slope}"),
        });
    }
    let data = x
        .data()
        .iter()
        .map(|&v| if v > 0.0 { v } else { slope * v })
        .collect();
    Ok(output(
        tape,
        x.requires_grad(),
        |t, _| Op::LeakyRelu {
            x: t.track(x),
            x_val: x.data_rc(),
            slope,
        },
        x.shape().to_vec(),
        data,
    ))
}

/// Elementwise hyperbolic tangent.
pub fn tanh_act(tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
    let data: Vec<f64> = x.data().iter().map(|v| v.tanh()).collect();
    Ok(output(
        tape,
        x.requires_grad(),
        |t, out| Op::Tanh {
            x: t.track(x),
            y_val: Rc::clone(out),
        },
        x.shape().to_vec(),
        data,
    ))
}

/// Per-channel normalization of a c×h×w tensor: (x - mean) / sqrt(var + eps),
/// no learned affine parameters.
pub fn instance_norm(tape: &mut Tape, x: &Tensor, eps: f64) -> Result<Tensor> {
    let xs = x.shape().to_vec();
    if xs.len() != 3 {
        return Err(Error::DimMismatch {
            op: "instance_norm",
            lhs: xs,
            rhs: vec![],
        });
    }
    let (channels, spatial) = (xs[0], xs[1] * xs[2]);
    if spatial < 2 {
        return Err(Error::InvalidArg {
            op: "instance_norm",
            msg: "spatial size must be >= 2 for normalization".into(),
        });
    }
    if eps <= 0.0 {
        return Err(Error::InvalidArg {
            op: "instance_norm",
            msg: format!("eps must be positive, got {eps}"),
        });
    }
    let xd = x.data();
    let mut data = vec![0.0; xd.len()];
    let mut inv_std = vec![0.0; channels];
    let inv_n = 1.0 / spatial as f64;
    for c in 0..channels {
        let xc = &xd[c * spatial..(c + 1) * spatial];
        let mean = xc.iter().sum::<f64>() * inv_n;
        let var = xc.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() * inv_n;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std[c] = istd;
        for (o, &v) in data[c * spatial..(c + 1) * spatial].iter_mut().zip(xc) {
            *o = (v - mean) * istd;
        }
    }
    Ok(output(
        tape,
        x.requires_grad(),
        |t, out| Op::InstanceNorm {
            x: t.track(x),
            y_val: Rc::clone(out),
            inv_std,
            spatial,
        },
        xs,
        data,
    ))
}

/// Mean absolute difference over all elements; scalar output.
pub fn l1_loss(tape: &mut Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::DimMismatch {
            op: "l1_loss",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let n = a.numel() as f64;
    let val = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&av, &bv)| (av - bv).abs())
        .sum::<f64>()
        / n;
    let tracked = a.requires_grad() || b.requires_grad();
    Ok(output(
        tape,
        tracked,
        |t, _| Op::L1 {
            a: t.track(a),
            b: t.track(b),
            a_val: a.data_rc(),
            b_val: b.data_rc(),
        },
        vec![1],
        vec![val],
    ))
}

/// Mean squared difference over all elements; scalar output.
pub fn mse_loss(tape: &mut Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::DimMismatch {
            op: "mse_loss",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let n = a.numel() as f64;
    let val = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&av, &bv)| (av - bv) * (av - bv))
        .sum::<f64>()
        / n;
    let tracked = a.requires_grad() || b.requires_grad();
    Ok(output(
        tape,
        tracked,
        |t, _| Op::Mse {
            a: t.track(a),
            b: t.track(b),
            a_val: a.data_rc(),
            b_val: b.data_rc(),
        },
        vec![1],
        vec![val],
    ))
}

/// Elementwise sum of two same-shape tensors.
pub fn add(tape: &mut Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::DimMismatch {
            op: "add",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    let tracked = a.requires_grad() || b.requires_grad();
    Ok(output(
        tape,
        tracked,
        |t, _| Op::Add {
            a: t.track(a),
            b: t.track(b),
        },
        a.shape().to_vec(),
        data,
    ))
}

/// Multiplication by a constant (no gradient for the factor).
pub fn scale(tape: &mut Tape, a: &Tensor, factor: f64) -> Result<Tensor> {
    let data = a.data().iter().map(|v| v * factor).collect();
    Ok(output(
        tape,
        a.requires_grad(),
        |t, _| Op::Scale {
            a: t.track(a),
            factor,
        },
        a.shape().to_vec(),
        data,
    ))
}

/// Sum of all elements; scalar output.
pub fn sum(tape: &mut Tape, a: &Tensor) -> Result<Tensor> {
    let val = a.data().iter().sum();
    Ok(output(
        tape,
        a.requires_grad(),
        |t, _| Op::Sum { a: t.track(a) },
        vec![1],
        vec![val],
    ))
}

/// Shape change preserving element order and count.
pub fn reshape(tape: &mut Tape, a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    if numel != a.numel() {
        return Err(Error::DimMismatch {
            op: "reshape",
            lhs: a.shape().to_vec(),
            rhs: shape.to_vec(),
        });
    }
    Ok(output(
        tape,
        a.requires_grad(),
        |t, _| Op::Reshape { a: t.track(a) },
        shape.to_vec(),
        a.data().to_vec(),
    ))
}

/// Adds a per-channel bias b (len c) to a c×h×w tensor.
pub fn channel_bias(tape: &mut Tape, x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (xs, bs) = (x.shape(), b.shape());
    if xs.len() != 3 || bs.len() != 1 || bs[0] != xs[0] {
        return Err(Error::DimMismatch {
            op: "channel_bias",
            lhs: xs.to_vec(),
            rhs: bs.to_vec(),
        });
    }
    let (channels, spatial) = (xs[0], xs[1] * xs[2]);
    let mut data = x.data().to_vec();
    for c in 0..channels {
        let bv = b.data()[c];
        for v in &mut data[c * spatial..(c + 1) * spatial] {
            *v += bv;
        }
    }
    let tracked = x.requires_grad() || b.requires_grad();
    Ok(output(
        tape,
        tracked,
        |t, _| Op::ChannelBias {
            x: t.track(x),
            b: t.track(b),
            channels,
            spatial,
        },
        xs.to_vec(),
        data,
    ))
}
