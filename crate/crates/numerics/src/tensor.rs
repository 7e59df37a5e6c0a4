use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Recorded operation for reverse-mode differentiation. Each variant keeps
/// handles to its inputs; the graph is a DAG of `Arc`s that is dropped as
/// soon as the tensors referencing it go out of scope.
#[derive(Clone)]
pub(crate) enum Op {
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f32),
    AddScalar(Tensor),
    Matmul(Tensor, Tensor),
    Conv2d { x: Tensor, w: Tensor, b: Option<Tensor>, padding: usize },
    ResizeBilinear { x: Tensor },
    AvgPool2(Tensor),
    SumAll(Tensor),
    MeanAll(Tensor),
    MeanHw(Tensor),
    Relu(Tensor),
    Silu(Tensor),
    Sigmoid(Tensor),
    Abs(Tensor),
    Concat { parts: Vec<Tensor>, axis: usize },
    Narrow { x: Tensor, axis: usize, start: usize },
    BroadcastTo(Tensor),
    Reshape(Tensor),
    Embedding { table: Tensor, ids: Vec<usize> },
    SmoothL1 { pred: Tensor, target: Tensor, delta: f32 },
    RoundSte(Tensor),
    Clamp { x: Tensor, lo: f32, hi: f32 },
}

pub(crate) struct Inner {
    pub id: u64,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
    /// Exact 64-bit value for scalar results of reductions and scalar
    /// arithmetic; lets finite differences read probe values without the
    /// 32-bit storage rounding.
    pub precise: Option<f64>,
    pub requires_grad: bool,
    pub op: Option<Op>,
}

/// Dense tensor: a shape and a flat row-major `f32` buffer. Values are
/// immutable once constructed; operations return new tensors and record
/// the graph needed by [`crate::backward`] when a differentiable leaf is
/// involved.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Arc<Inner>,
}

fn check_shape_len(op: &'static str, shape: &[usize], len: usize) -> Result<()> {
    let numel: usize = shape.iter().product();
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::usage(op, format!("zero-sized dimension in {shape:?}")));
    }
    if numel != len {
        return Err(Error::shape(
            op,
            format!("shape {shape:?} wants {numel} values, got {len}"),
        ));
    }
    Ok(())
}

impl Tensor {
    pub(crate) fn make(
        op_name: &'static str,
        shape: Vec<usize>,
        data: Vec<f32>,
        precise: Option<f64>,
        requires_grad: bool,
        op: Option<Op>,
    ) -> Result<Tensor> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: op_name });
        }
        Ok(Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                precise,
                requires_grad,
                op,
            }),
        })
    }

    pub(crate) fn from_op(
        op_name: &'static str,
        shape: Vec<usize>,
        data: Vec<f32>,
        op: Op,
    ) -> Result<Tensor> {
        let requires_grad = op_requires_grad(&op);
        let op = if requires_grad { Some(op) } else { None };
        Tensor::make(op_name, shape, data, None, requires_grad, op)
    }

    pub(crate) fn from_op_precise(
        op_name: &'static str,
        shape: Vec<usize>,
        data: Vec<f32>,
        precise: f64,
        op: Op,
    ) -> Result<Tensor> {
        let requires_grad = op_requires_grad(&op);
        let op = if requires_grad { Some(op) } else { None };
        Tensor::make(op_name, shape, data, Some(precise), requires_grad, op)
    }

    /// Plain data tensor; does not take part in differentiation.
    pub fn from_vec(data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        check_shape_len("from_vec", shape, data.len())?;
        Tensor::make("from_vec", shape.to_vec(), data, None, false, None)
    }

    /// Differentiable leaf; gradients accumulate for it under `backward`.
    pub fn leaf(data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        check_shape_len("leaf", shape, data.len())?;
        Tensor::make("leaf", shape.to_vec(), data, None, true, None)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(vec![0.0; n], shape).expect("zeros")
    }

    pub fn full(shape: &[usize], value: f32) -> Result<Tensor> {
        let n = shape.iter().product();
        Tensor::from_vec(vec![value; n], shape)
    }

    pub fn scalar(value: f32) -> Result<Tensor> {
        Tensor::from_vec(vec![value], &[1])
    }

    pub fn randn(shape: &[usize], rng: &mut crate::Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(rng.normal_vec(n), shape).expect("randn")
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.inner.data
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Scalar value. Errors if the tensor is not a single element.
    pub fn item(&self) -> Result<f32> {
        if self.numel() != 1 {
            return Err(Error::usage(
                "item",
                format!("expected scalar, got shape {:?}", self.shape()),
            ));
        }
        Ok(self.inner.data[0])
    }

    /// Scalar value at reduction precision when available.
    pub fn item_f64(&self) -> Result<f64> {
        self.item()?;
        Ok(self.inner.precise.unwrap_or(self.inner.data[0] as f64))
    }

    /// A copy detached from the graph (plain data, no gradient tracking).
    pub fn detach(&self) -> Tensor {
        Tensor::from_vec(self.inner.data.clone(), &self.inner.shape).expect("detach")
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.inner.data.clone()
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

fn op_requires_grad(op: &Op) -> bool {
    op_inputs(op).iter().any(|t| t.requires_grad())
}

pub(crate) fn op_inputs(op: &Op) -> Vec<Tensor> {
    match op {
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Matmul(a, b) => {
            vec![a.clone(), b.clone()]
        }
        Op::Scale(a, _) | Op::AddScalar(a) => vec![a.clone()],
        Op::Conv2d { x, w, b, .. } => {
            let mut v = vec![x.clone(), w.clone()];
            if let Some(b) = b {
                v.push(b.clone());
            }
            v
        }
        Op::ResizeBilinear { x } => vec![x.clone()],
        Op::AvgPool2(x)
        | Op::SumAll(x)
        | Op::MeanAll(x)
        | Op::MeanHw(x)
        | Op::Relu(x)
        | Op::Silu(x)
        | Op::Sigmoid(x)
        | Op::Abs(x)
        | Op::BroadcastTo(x)
        | Op::Reshape(x)
        | Op::RoundSte(x) => vec![x.clone()],
        Op::Concat { parts, .. } => parts.clone(),
        Op::Narrow { x, .. } => vec![x.clone()],
        Op::Embedding { table, .. } => vec![table.clone()],
        Op::SmoothL1 { pred, target, .. } => vec![pred.clone(), target.clone()],
        Op::Clamp { x, .. } => vec![x.clone()],
    }
}
