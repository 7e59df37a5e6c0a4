//! Forward operations. Each validates shapes, computes the result and, when
//! a differentiable leaf is involved, records the op for the backward pass.

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{Op, Tensor};

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

impl Tensor {
    fn binary(
        &self,
        other: &Tensor,
        op_name: &'static str,
        f: impl Fn(f32, f32) -> f32,
        make: impl Fn(Tensor, Tensor) -> Op,
    ) -> Result<Tensor> {
        let out_shape = kernels::broadcast_shape(self.shape(), other.shape()).ok_or_else(|| {
            Error::shape(
                op_name,
                format!("cannot broadcast {:?} with {:?}", self.shape(), other.shape()),
            )
        })?;
        let data = kernels::binary_broadcast(
            self.data(),
            self.shape(),
            other.data(),
            other.shape(),
            &out_shape,
            f,
        );
        let op = make(self.clone(), other.clone());
        if data.len() == 1 {
            let p = match &op {
                Op::Add(..) => self.inner.data[0] as f64 + other.inner.data[0] as f64,
                Op::Sub(..) => self.inner.data[0] as f64 - other.inner.data[0] as f64,
                Op::Mul(..) => self.inner.data[0] as f64 * other.inner.data[0] as f64,
                _ => data[0] as f64,
            };
            return Tensor::from_op_precise(op_name, out_shape, data, p, op);
        }
        Tensor::from_op(op_name, out_shape, data, op)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul)
    }

    pub fn scale(&self, c: f32) -> Result<Tensor> {
        let data = self.data().iter().map(|&v| v * c).collect();
        Tensor::from_op("scale", self.shape().to_vec(), data, Op::Scale(self.clone(), c))
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f32) -> Result<Tensor> {
        let data = self.data().iter().map(|&v| v + c).collect();
        Tensor::from_op("add_scalar", self.shape().to_vec(), data, Op::AddScalar(self.clone()))
    }

    pub fn square(&self) -> Result<Tensor> {
        self.mul(self)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(Error::shape("matmul", format!("{a:?} . {b:?}")));
        }
        let data = kernels::matmul(self.data(), other.data(), a[0], a[1], b[1]);
        Tensor::from_op("matmul", vec![a[0], b[1]], data, Op::Matmul(self.clone(), other.clone()))
    }

    /// Stride-1 2-D convolution, NCHW input, OCKK kernel, zero padding.
    pub fn conv2d(&self, weight: &Tensor, bias: Option<&Tensor>, padding: usize) -> Result<Tensor> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::shape(
                "conv2d",
                format!("need NCHW input and OCKK kernel, got {xs:?} and {ws:?}"),
            ));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, kc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        if kc != c {
            return Err(Error::shape("conv2d", format!("input has {c} channels, kernel wants {kc}")));
        }
        if let Some(b) = bias {
            if b.shape() != [o] {
                return Err(Error::shape("conv2d", format!("bias shape {:?}, want [{o}]", b.shape())));
            }
        }
        let (oh, ow) = kernels::conv2d_out_hw(h, w, kh, kw, padding)
            .ok_or_else(|| Error::shape("conv2d", format!("kernel {kh}x{kw} larger than padded input")))?;
        let data = kernels::conv2d(
            self.data(),
            weight.data(),
            bias.map(|b| b.data()),
            n,
            c,
            h,
            w,
            o,
            kh,
            kw,
            padding,
        );
        Tensor::from_op(
            "conv2d",
            vec![n, o, oh, ow],
            data,
            Op::Conv2d { x: self.clone(), w: weight.clone(), b: bias.cloned(), padding },
        )
    }

    /// Align-corners-false bilinear resize of the trailing two axes.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<Tensor> {
        let s = self.shape();
        if s.len() < 2 {
            return Err(Error::shape("resize_bilinear", format!("rank >= 2 required, got {s:?}")));
        }
        if out_h == 0 || out_w == 0 {
            return Err(Error::usage("resize_bilinear", "output size must be >= 1"));
        }
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        let batch: usize = s[..s.len() - 2].iter().product();
        let data = kernels::resize_bilinear(self.data(), batch, h, w, out_h, out_w);
        let mut out_shape = s.to_vec();
        let rank = out_shape.len();
        out_shape[rank - 2] = out_h;
        out_shape[rank - 1] = out_w;
        Tensor::from_op("resize_bilinear", out_shape, data, Op::ResizeBilinear { x: self.clone() })
    }

    /// 2x2 average pooling; spatial dims must be even.
    pub fn avg_pool2(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(Error::shape("avg_pool2", format!("need NCHW, got {s:?}")));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::usage("avg_pool2", format!("spatial dims must be even, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let x = self.data();
        let mut data = vec![0.0f32; n * c * oh * ow];
        for bc in 0..n * c {
            let xb = &x[bc * h * w..][..h * w];
            let ob = &mut data[bc * oh * ow..][..oh * ow];
            for oy in 0..oh {
                let r0 = &xb[2 * oy * w..][..w];
                let r1 = &xb[(2 * oy + 1) * w..][..w];
                for ox in 0..ow {
                    ob[oy * ow + ox] =
                        0.25 * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
                }
            }
        }
        Tensor::from_op("avg_pool2", vec![n, c, oh, ow], data, Op::AvgPool2(self.clone()))
    }

    pub fn sum_all(&self) -> Result<Tensor> {
        let s: f64 = self.data().iter().map(|&v| v as f64).sum();
        Tensor::from_op_precise("sum_all", vec![1], vec![s as f32], s, Op::SumAll(self.clone()))
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        let s: f64 = self.data().iter().map(|&v| v as f64).sum();
        let m = s / self.numel() as f64;
        Tensor::from_op_precise("mean_all", vec![1], vec![m as f32], m, Op::MeanAll(self.clone()))
    }

    /// Mean over the trailing spatial axes of an NCHW tensor -> [n, c].
    pub fn mean_hw(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(Error::shape("mean_hw", format!("need NCHW, got {s:?}")));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let x = self.data();
        let mut data = vec![0.0f32; n * c];
        for bc in 0..n * c {
            let sum: f64 = x[bc * h * w..][..h * w].iter().map(|&v| v as f64).sum();
            data[bc] = (sum / (h * w) as f64) as f32;
        }
        Tensor::from_op("mean_hw", vec![n, c], data, Op::MeanHw(self.clone()))
    }

    pub fn relu(&self) -> Result<Tensor> {
        let data = self.data().iter().map(|&v| v.max(0.0)).collect();
        Tensor::from_op("relu", self.shape().to_vec(), data, Op::Relu(self.clone()))
    }

    pub fn silu(&self) -> Result<Tensor> {
        let data = self.data().iter().map(|&v| v * sigmoid(v)).collect();
        Tensor::from_op("silu", self.shape().to_vec(), data, Op::Silu(self.clone()))
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        let data = self.data().iter().map(|&v| sigmoid(v)).collect();
        Tensor::from_op("sigmoid", self.shape().to_vec(), data, Op::Sigmoid(self.clone()))
    }

    pub fn abs(&self) -> Result<Tensor> {
        let data = self.data().iter().map(|&v| v.abs()).collect();
        Tensor::from_op("abs", self.shape().to_vec(), data, Op::Abs(self.clone()))
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::usage("concat", "empty part list"));
        }
        let first = parts[0].shape();
        if axis >= first.len() {
            return Err(Error::usage("concat", format!("axis {axis} out of range for {first:?}")));
        }
        let mut axis_total = 0usize;
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s.iter().zip(first).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::shape("concat", format!("incompatible part {s:?} vs {first:?}")));
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.to_vec();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![0.0f32; out_shape.iter().product()];
        let row = axis_total * inner;
        let mut col = 0usize;
        for p in parts {
            let pa = p.shape()[axis];
            let chunk = pa * inner;
            for ou in 0..outer {
                let src = &p.data()[ou * chunk..][..chunk];
                data[ou * row + col..][..chunk].copy_from_slice(src);
            }
            col += chunk;
        }
        let op = Op::Concat { parts: parts.iter().map(|&p| p.clone()).collect(), axis };
        Tensor::from_op("concat", out_shape, data, op)
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let s = self.shape();
        if axis >= s.len() {
            return Err(Error::usage("narrow", format!("axis {axis} out of range for {s:?}")));
        }
        if len == 0 || start + len > s[axis] {
            return Err(Error::usage(
                "narrow",
                format!("range {start}..{} out of bounds for axis of {}", start + len, s[axis]),
            ));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let mut out_shape = s.to_vec();
        out_shape[axis] = len;
        let mut data = vec![0.0f32; outer * len * inner];
        for ou in 0..outer {
            let src = &self.data()[(ou * s[axis] + start) * inner..][..len * inner];
            data[ou * len * inner..][..len * inner].copy_from_slice(src);
        }
        Tensor::from_op("narrow", out_shape, data, Op::Narrow { x: self.clone(), axis, start })
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor> {
        let out = kernels::broadcast_shape(self.shape(), shape).ok_or_else(|| {
            Error::shape("broadcast_to", format!("{:?} to {:?}", self.shape(), shape))
        })?;
        if out != shape {
            return Err(Error::shape("broadcast_to", format!("{:?} to {:?}", self.shape(), shape)));
        }
        let data = kernels::binary_broadcast(
            self.data(),
            self.shape(),
            &[0.0],
            &[1],
            shape,
            |a, _| a,
        );
        Tensor::from_op("broadcast_to", shape.to_vec(), data, Op::BroadcastTo(self.clone()))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} ({}) to {:?} ({})", self.shape(), self.numel(), shape, numel),
            ));
        }
        Tensor::from_op("reshape", shape.to_vec(), self.data().to_vec(), Op::Reshape(self.clone()))
    }

    /// Row lookup: `table [v, d]` indexed by `ids` -> `[ids.len(), d]`.
    pub fn embedding(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
        let s = table.shape();
        if s.len() != 2 {
            return Err(Error::shape("embedding", format!("table must be [v, d], got {s:?}")));
        }
        if ids.is_empty() {
            return Err(Error::usage("embedding", "empty id list"));
        }
        let (v, d) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::usage("embedding", format!("id {bad} out of range for table of {v}")));
        }
        let mut data = vec![0.0f32; ids.len() * d];
        for (r, &i) in ids.iter().enumerate() {
            data[r * d..][..d].copy_from_slice(&table.data()[i * d..][..d]);
        }
        Tensor::from_op(
            "embedding",
            vec![ids.len(), d],
            data,
            Op::Embedding { table: table.clone(), ids: ids.to_vec() },
        )
    }

    /// Elementwise Huber penalty of `self - target`.
    pub fn smooth_l1(&self, target: &Tensor, delta: f32) -> Result<Tensor> {
        if self.shape() != target.shape() {
            return Err(Error::shape(
                "smooth_l1",
                format!("{:?} vs {:?}", self.shape(), target.shape()),
            ));
        }
        if delta <= 0.0 {
            return Err(Error::usage("smooth_l1", "delta must be > 0"));
        }
        let data = self
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                let d = p - t;
                if d.abs() <= delta {
                    0.5 * d * d
                } else {
                    delta * (d.abs() - 0.5 * delta)
                }
            })
            .collect();
        Tensor::from_op(
            "smooth_l1",
            self.shape().to_vec(),
            data,
            Op::SmoothL1 { pred: self.clone(), target: target.clone(), delta },
        )
    }

    /// Round to {0, 1, ...} in the forward pass; backward treats the
    /// rounding as identity (straight-through estimator).
    pub fn round_ste(&self) -> Result<Tensor> {
        let data = self.data().iter().map(|&v| v.round()).collect();
        Tensor::from_op("round_ste", self.shape().to_vec(), data, Op::RoundSte(self.clone()))
    }

    pub fn clamp(&self, lo: f32, hi: f32) -> Result<Tensor> {
        if !(lo <= hi) {
            return Err(Error::usage("clamp", format!("lo {lo} > hi {hi}")));
        }
        let data = self.data().iter().map(|&v| v.clamp(lo, hi)).collect();
        Tensor::from_op("clamp", self.shape().to_vec(), data, Op::Clamp { x: self.clone(), lo, hi })
    }
}
