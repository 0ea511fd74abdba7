//! Minimal reverse-mode automatic differentiation over dense f64 arrays.
//!
//! Graphs are built eagerly: every op allocates a node holding its values,
//! parent handles, and a backward closure. Node ids increase monotonically,
//! so a reverse id sort is a valid topological order and [`backward`] visits
//! each node exactly once. Gradients accumulate until [`Tensor::zero_grad`];
//! calling backward twice doubles leaf gradients by design.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::{Ref, RefCell};
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::math;
use crate::stft::StftConfig;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

type BackwardFn = Box<dyn Fn(&[f64])>;

struct Node {
    id: u64,
    shape: Vec<usize>,
    values: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    needs_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Cheap-to-clone handle to a graph node.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Node>,
}

impl core::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("needs_grad", &self.inner.needs_grad)
            .finish()
    }
}

impl Tensor {
    fn new_node(
        shape: Vec<usize>,
        values: Vec<f64>,
        needs_grad: bool,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Tensor {
            inner: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                values: RefCell::new(values),
                grad: RefCell::new(None),
                needs_grad,
                parents,
                backward,
            }),
        }
    }

    /// Leaf that participates in gradient computation (a parameter or an
    /// input being probed).
    pub fn parameter(shape: &[usize], values: Vec<f64>) -> Tensor {
        Tensor::new_node(shape.to_vec(), values, true, Vec::new(), None)
    }

    /// Leaf treated as a constant.
    pub fn constant(shape: &[usize], values: Vec<f64>) -> Tensor {
        Tensor::new_node(shape.to_vec(), values, false, Vec::new(), None)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::constant(&[1], vec![v])
    }

    fn from_op(
        shape: Vec<usize>,
        values: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let needs_grad = parents.iter().any(|p| p.inner.needs_grad);
        if needs_grad {
            Tensor::new_node(shape, values, true, parents, Some(backward))
        } else {
            Tensor::new_node(shape, values, false, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.values.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn needs_grad(&self) -> bool {
        self.inner.needs_grad
    }

    pub fn values(&self) -> Ref<'_, Vec<f64>> {
        self.inner.values.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.values.borrow().clone()
    }

    /// Scalar extraction; panics on non-scalar tensors.
    pub fn item(&self) -> f64 {
        let v = self.inner.values.borrow();
        assert_eq!(v.len(), 1, "item() on non-scalar tensor");
        v[0]
    }

    /// Current gradient (zeros if backward never reached this node).
    pub fn grad(&self) -> Vec<f64> {
        self.inner
            .grad
            .borrow()
            .clone()
            .unwrap_or_else(|| vec![0.0; self.len()])
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub fn accumulate_grad(&self, delta: &[f64]) {
        let mut g = self.inner.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => {
                for (b, d) in buf.iter_mut().zip(delta.iter()) {
                    *b += d;
                }
            }
            None => *g = Some(delta.to_vec()),
        }
    }

    /// Constant copy severed from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::constant(&self.inner.shape.clone(), self.to_vec())
    }

    /// In-place value update for optimizer steps (leaves only).
    pub fn update_values(&self, f: impl FnOnce(&mut [f64])) {
        debug_assert!(self.inner.parents.is_empty(), "updating a non-leaf tensor");
        f(&mut self.inner.values.borrow_mut());
    }

    fn values_slice(&self) -> Ref<'_, Vec<f64>> {
        self.inner.values.borrow()
    }
}

/// Reverse pass from a scalar loss. Each reachable grad-requiring node is
/// visited once, children before parents. Leaf gradients accumulate across
/// calls; interior gradients are transient per pass.
pub fn backward(loss: &Tensor) -> Result<()> {
    if loss.len() != 1 {
        return Err(Error::Shape(alloc::format!(
            "backward needs a scalar loss, got shape {:?}",
            loss.shape()
        )));
    }
    if !loss.inner.needs_grad {
        return Ok(()); // graph-free constant: nothing to do
    }
    let mut stack = vec![loss.clone()];
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut nodes: Vec<Tensor> = Vec::new();
    while let Some(t) = stack.pop() {
        if !t.inner.needs_grad || !seen.insert(t.inner.id) {
            continue;
        }
        for p in &t.inner.parents {
            stack.push(p.clone());
        }
        nodes.push(t);
    }
    nodes.sort_unstable_by_key(|n| core::cmp::Reverse(n.inner.id));
    for n in &nodes {
        if !n.inner.parents.is_empty() {
            *n.inner.grad.borrow_mut() = None;
        }
    }
    loss.accumulate_grad(&[1.0]);
    for n in &nodes {
        if let Some(bwd) = &n.inner.backward {
            let g = n.inner.grad.borrow().clone();
            if let Some(g) = g {
                bwd(&g);
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

fn assert_same_shape(a: &Tensor, b: &Tensor) {
    assert_eq!(a.shape(), b.shape(), "elementwise op shape mismatch");
}

pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    assert_same_shape(a, b);
    let values: Vec<f64> = a
        .values_slice()
        .iter()
        .zip(b.values_slice().iter())
        .map(|(x, y)| x + y)
        .collect();
    let (pa, pb) = (a.clone(), b.clone());
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            if pa.needs_grad() {
                pa.accumulate_grad(g);
            }
            if pb.needs_grad() {
                pb.accumulate_grad(g);
            }
        }),
    )
}

pub fn sub(a: &Tensor, b: &Tensor) -> Tensor {
    assert_same_shape(a, b);
    let values: Vec<f64> = a
        .values_slice()
        .iter()
        .zip(b.values_slice().iter())
        .map(|(x, y)| x - y)
        .collect();
    let (pa, pb) = (a.clone(), b.clone());
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            if pa.needs_grad() {
                pa.accumulate_grad(g);
            }
            if pb.needs_grad() {
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                pb.accumulate_grad(&neg);
            }
        }),
    )
}

pub fn mul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_same_shape(a, b);
    let values: Vec<f64> = a
        .values_slice()
        .iter()
        .zip(b.values_slice().iter())
        .map(|(x, y)| x * y)
        .collect();
    let (pa, pb) = (a.clone(), b.clone());
    let (va, vb) = (a.to_vec(), b.to_vec());
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            if pa.needs_grad() {
                let d: Vec<f64> = g.iter().zip(vb.iter()).map(|(gv, y)| gv * y).collect();
                pa.accumulate_grad(&d);
            }
            if pb.needs_grad() {
                let d: Vec<f64> = g.iter().zip(va.iter()).map(|(gv, x)| gv * x).collect();
                pb.accumulate_grad(&d);
            }
        }),
    )
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    let values: Vec<f64> = a.values_slice().iter().map(|x| c * x).collect();
    let pa = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone()],
        Box::new(move |g| {
            let d: Vec<f64> = g.iter().map(|gv| c * gv).collect();
            pa.accumulate_grad(&d);
        }),
    )
}

pub fn add_scalar(a: &Tensor, c: f64) -> Tensor {
    let values: Vec<f64> = a.values_slice().iter().map(|x| x + c).collect();
    let pa = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone()],
        Box::new(move |g| pa.accumulate_grad(g)),
    )
}

pub fn abs(a: &Tensor) -> Tensor {
    let va = a.to_vec();
    let values: Vec<f64> = va.iter().map(|&x| math::abs(x)).collect();
    let pa = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone()],
        Box::new(move |g| {
            let d: Vec<f64> = g
                .iter()
                .zip(va.iter())
                .map(|(gv, &x)| gv * math::sign(x))
                .collect();
            pa.accumulate_grad(&d);
        }),
    )
}

pub fn tanh(a: &Tensor) -> Tensor {
    let values: Vec<f64> = a.values_slice().iter().map(|&x| math::tanh(x)).collect();
    let cached = values.clone();
    let pa = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone()],
        Box::new(move |g| {
            let d: Vec<f64> = g
                .iter()
                .zip(cached.iter())
                .map(|(gv, y)| gv * (1.0 - y * y))
                .collect();
            pa.accumulate_grad(&d);
        }),
    )
}

pub fn leaky_relu(a: &Tensor, slope: f64) -> Tensor {
    let va = a.to_vec();
    let values: Vec<f64> = va.iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect();
    let pa = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone()],
        Box::new(move |g| {
            let d: Vec<f64> = g
                .iter()
                .zip(va.iter())
                .map(|(gv, &x)| gv * if x > 0.0 { 1.0 } else { slope })
                .collect();
            pa.accumulate_grad(&d);
        }),
    )
}

/// max(x, c); gradient flows only strictly above the floor.
pub fn clamp_min(a: &Tensor, c: f64) -> Tensor {
    let va = a.to_vec();
    let values: Vec<f64> = va.iter().map(|&x| if x > c { x } else { c }).collect();
    let pa = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone()],
        Box::new(move |g| {
            let d: Vec<f64> = g
                .iter()
                .zip(va.iter())
                .map(|(gv, &x)| if x > c { *gv } else { 0.0 })
                .collect();
            pa.accumulate_grad(&d);
        }),
    )
}

/// Natural log; inputs must be positive (use after [`clamp_min`]).
pub fn ln(a: &Tensor) -> Tensor {
    let va = a.to_vec();
    debug_assert!(va.iter().all(|&x| x > 0.0), "ln of non-positive value");
    let values: Vec<f64> = va.iter().map(|&x| math::ln(x)).collect();
    let pa = a.clone();
    Tensor::from_op(
        a.shape().to_vec(),
        values,
        vec![a.clone()],
        Box::new(move |g| {
            let d: Vec<f64> = g.iter().zip(va.iter()).map(|(gv, &x)| gv / x).collect();
            pa.accumulate_grad(&d);
        }),
    )
}

pub fn sum(a: &Tensor) -> Tensor {
    let total: f64 = a.values_slice().iter().sum();
    let n = a.len();
    let pa = a.clone();
    Tensor::from_op(
        vec![1],
        vec![total],
        vec![a.clone()],
        Box::new(move |g| {
            let d = vec![g[0]; n];
            pa.accumulate_grad(&d);
        }),
    )
}

pub fn mean(a: &Tensor) -> Tensor {
    let n = a.len();
    let total: f64 = a.values_slice().iter().sum();
    let pa = a.clone();
    Tensor::from_op(
        vec![1],
        vec![total / n as f64],
        vec![a.clone()],
        Box::new(move |g| {
            let d = vec![g[0] / n as f64; n];
            pa.accumulate_grad(&d);
        }),
    )
}

/// Mean absolute difference, the reduction used by the feature-matching and
/// mel losses.
pub fn l1_distance(a: &Tensor, b: &Tensor) -> Tensor {
    mean(&abs(&sub(a, b)))
}

/// Length-preserving reshape.
pub fn reshape(a: &Tensor, shape: &[usize]) -> Tensor {
    assert_eq!(
        shape.iter().product::<usize>(),
        a.len(),
        "reshape length mismatch"
    );
    let pa = a.clone();
    Tensor::from_op(
        shape.to_vec(),
        a.to_vec(),
        vec![a.clone()],
        Box::new(move |g| pa.accumulate_grad(g)),
    )
}

/// Zero padding at the end of the last axis of a `[C, T]` tensor.
pub fn pad1d_end(a: &Tensor, extra: usize) -> Tensor {
    let (c, t) = match *a.shape() {
        [c, t] => (c, t),
        _ => panic!("pad1d_end expects [C, T]"),
    };
    let va = a.values_slice();
    let mut values = vec![0.0; c * (t + extra)];
    for ch in 0..c {
        values[ch * (t + extra)..ch * (t + extra) + t].copy_from_slice(&va[ch * t..(ch + 1) * t]);
    }
    drop(va);
    let pa = a.clone();
    Tensor::from_op(
        vec![c, t + extra],
        values,
        vec![a.clone()],
        Box::new(move |g| {
            let mut d = vec![0.0; c * t];
            for ch in 0..c {
                d[ch * t..(ch + 1) * t].copy_from_slice(&g[ch * (t + extra)..ch * (t + extra) + t]);
            }
            pa.accumulate_grad(&d);
        }),
    )
}

/// y = M·x for a constant (rows × cols) matrix and `[cols, f]` input.
pub fn matmul_const(m: Rc<Vec<f64>>, rows: usize, cols: usize, x: &Tensor) -> Tensor {
    let (xc, xf) = match *x.shape() {
        [c, f] => (c, f),
        _ => panic!("matmul_const expects [cols, frames]"),
    };
    assert_eq!(xc, cols, "matmul_const inner dimension mismatch");
    let vx = x.values_slice();
    let mut values = vec![0.0; rows * xf];
    for r in 0..rows {
        for c in 0..cols {
            let w = m[r * cols + c];
            if w == 0.0 {
                continue;
            }
            let xrow = &vx[c * xf..(c + 1) * xf];
            let orow = &mut values[r * xf..(r + 1) * xf];
            for (o, xv) in orow.iter_mut().zip(xrow.iter()) {
                *o += w * xv;
            }
        }
    }
    drop(vx);
    let px = x.clone();
    let mc = m.clone();
    Tensor::from_op(
        vec![rows, xf],
        values,
        vec![x.clone()],
        Box::new(move |g| {
            let mut d = vec![0.0; cols * xf];
            for r in 0..rows {
                let grow = &g[r * xf..(r + 1) * xf];
                for c in 0..cols {
                    let w = mc[r * cols + c];
                    if w == 0.0 {
                        continue;
                    }
                    let drow = &mut d[c * xf..(c + 1) * xf];
                    for (dv, gv) in drow.iter_mut().zip(grow.iter()) {
                        *dv += w * gv;
                    }
                }
            }
            px.accumulate_grad(&d);
        }),
    )
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

/// 1-D convolution (cross-correlation) with stride 1.
/// x: `[Cin, T]`, w: `[Cout, Cin, K]`, b: `[Cout]` → `[Cout, T + 2·padding - dil·(K-1)]`.
pub fn conv1d(x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize, padding: usize) -> Tensor {
    let (cin, t) = match *x.shape() {
        [c, t] => (c, t),
        _ => panic!("conv1d expects x [Cin, T]"),
    };
    let (cout, wcin, k) = match *w.shape() {
        [co, ci, k] => (co, ci, k),
        _ => panic!("conv1d expects w [Cout, Cin, K]"),
    };
    assert_eq!(cin, wcin, "conv1d channel mismatch");
    assert_eq!(b.len(), cout, "conv1d bias mismatch");
    let span = dilation * (k - 1);
    assert!(t + 2 * padding > span, "conv1d kernel span exceeds input");
    let t_out = t + 2 * padding - span;

    let vx = x.values_slice();
    let vw = w.values_slice();
    let vb = b.values_slice();
    let mut values = vec![0.0; cout * t_out];
    for co in 0..cout {
        let orow = &mut values[co * t_out..(co + 1) * t_out];
        orow.iter_mut().for_each(|o| *o = vb[co]);
        for ci in 0..cin {
            let xrow = &vx[ci * t..(ci + 1) * t];
            for kk in 0..k {
                let wv = vw[(co * cin + ci) * k + kk];
                let off = (kk * dilation) as isize - padding as isize;
                let lo = (-off).max(0) as usize;
                let hi = (t as isize - off).clamp(0, t_out as isize) as usize;
                for i in lo..hi {
                    orow[i] += wv * xrow[(i as isize + off) as usize];
                }
            }
        }
    }
    drop(vx);
    drop(vw);
    drop(vb);

    let (px, pw, pb) = (x.clone(), w.clone(), b.clone());
    let xv = x.to_vec();
    let wv = w.to_vec();
    Tensor::from_op(
        vec![cout, t_out],
        values,
        vec![x.clone(), w.clone(), b.clone()],
        Box::new(move |g| {
            if px.needs_grad() {
                let mut dx = vec![0.0; cin * t];
                for co in 0..cout {
                    let grow = &g[co * t_out..(co + 1) * t_out];
                    for ci in 0..cin {
                        let drow = &mut dx[ci * t..(ci + 1) * t];
                        for kk in 0..k {
                            let wvv = wv[(co * cin + ci) * k + kk];
                            let off = (kk * dilation) as isize - padding as isize;
                            let lo = (-off).max(0) as usize;
                            let hi = (t as isize - off).clamp(0, t_out as isize) as usize;
                            for i in lo..hi {
                                drow[(i as isize + off) as usize] += wvv * grow[i];
                            }
                        }
                    }
                }
                px.accumulate_grad(&dx);
            }
            if pw.needs_grad() {
                let mut dw = vec![0.0; cout * cin * k];
                for co in 0..cout {
                    let grow = &g[co * t_out..(co + 1) * t_out];
                    for ci in 0..cin {
                        let xrow = &xv[ci * t..(ci + 1) * t];
                        for kk in 0..k {
                            let off = (kk * dilation) as isize - padding as isize;
                            let lo = (-off).max(0) as usize;
                            let hi = (t as isize - off).clamp(0, t_out as isize) as usize;
                            let mut acc = 0.0;
                            for i in lo..hi {
                                acc += grow[i] * xrow[(i as isize + off) as usize];
                            }
                            dw[(co * cin + ci) * k + kk] += acc;
                        }
                    }
                }
                pw.accumulate_grad(&dw);
            }
            if pb.needs_grad() {
                let mut db = vec![0.0; cout];
                for co in 0..cout {
                    db[co] = g[co * t_out..(co + 1) * t_out].iter().sum();
                }
                pb.accumulate_grad(&db);
            }
        }),
    )
}

/// Transposed 1-D convolution.
/// x: `[Cin, T]`, w: `[Cin, Cout, K]`, b: `[Cout]` → `[Cout, (T-1)·stride + K - 2·padding]`.
pub fn conv_transpose1d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: usize) -> Tensor {
    let (cin, t) = match *x.shape() {
        [c, t] => (c, t),
        _ => panic!("conv_transpose1d expects x [Cin, T]"),
    };
    let (wcin, cout, k) = match *w.shape() {
        [ci, co, k] => (ci, co, k),
        _ => panic!("conv_transpose1d expects w [Cin, Cout, K]"),
    };
    assert_eq!(cin, wcin, "conv_transpose1d channel mismatch");
    assert_eq!(b.len(), cout, "conv_transpose1d bias mismatch");
    let t_out = (t - 1) * stride + k;
    assert!(t_out > 2 * padding, "conv_transpose1d padding too large");
    let t_out = t_out - 2 * padding;

    let vx = x.values_slice();
    let vw = w.values_slice();
    let vb = b.values_slice();
    let mut values = vec![0.0; cout * t_out];
    for co in 0..cout {
        values[co * t_out..(co + 1) * t_out]
            .iter_mut()
            .for_each(|o| *o = vb[co]);
    }
    for ci in 0..cin {
        let xrow = &vx[ci * t..(ci + 1) * t];
        for co in 0..cout {
            let orow = &mut values[co * t_out..(co + 1) * t_out];
            for kk in 0..k {
                let wv = vw[(ci * cout + co) * k + kk];
                // output position: ti·stride + kk - padding
                for (ti, &xv) in xrow.iter().enumerate() {
                    let o = (ti * stride + kk) as isize - padding as isize;
                    if o >= 0 && (o as usize) < t_out {
                        orow[o as usize] += wv * xv;
                    }
                }
            }
        }
    }
    drop(vx);
    drop(vw);
    drop(vb);

    let (px, pw, pb) = (x.clone(), w.clone(), b.clone());
    let xv = x.to_vec();
    let wv = w.to_vec();
    Tensor::from_op(
        vec![cout, t_out],
        values,
        vec![x.clone(), w.clone(), b.clone()],
        Box::new(move |g| {
            if px.needs_grad() {
                let mut dx = vec![0.0; cin * t];
                for ci in 0..cin {
                    let drow = &mut dx[ci * t..(ci + 1) * t];
                    for co in 0..cout {
                        let grow = &g[co * t_out..(co + 1) * t_out];
                        for kk in 0..k {
                            let wvv = wv[(ci * cout + co) * k + kk];
                            for (ti, dv) in drow.iter_mut().enumerate() {
                                let o = (ti * stride + kk) as isize - padding as isize;
                                if o >= 0 && (o as usize) < t_out {
                                    *dv += wvv * grow[o as usize];
                                }
                            }
                        }
                    }
                }
                px.accumulate_grad(&dx);
            }
            if pw.needs_grad() {
                let mut dw = vec![0.0; cin * cout * k];
                for ci in 0..cin {
                    let xrow = &xv[ci * t..(ci + 1) * t];
                    for co in 0..cout {
                        let grow = &g[co * t_out..(co + 1) * t_out];
                        for kk in 0..k {
                            let mut acc = 0.0;
                            for (ti, &xvv) in xrow.iter().enumerate() {
                                let o = (ti * stride + kk) as isize - padding as isize;
                                if o >= 0 && (o as usize) < t_out {
                                    acc += xvv * grow[o as usize];
                                }
                            }
                            dw[(ci * cout + co) * k + kk] += acc;
                        }
                    }
                }
                pw.accumulate_grad(&dw);
            }
            if pb.needs_grad() {
                let mut db = vec![0.0; cout];
                for co in 0..cout {
                    db[co] = g[co * t_out..(co + 1) * t_out].iter().sum();
                }
                pb.accumulate_grad(&db);
            }
        }),
    )
}

/// 2-D convolution.
/// x: `[Cin, H, W]`, w: `[Cout, Cin, KH, KW]`, b: `[Cout]`, stride (sh, sw),
/// padding (ph, pw) → `[Cout, Ho, Wo]`.
pub fn conv2d(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Tensor {
    let (cin, h, wd) = match *x.shape() {
        [c, h, wd] => (c, h, wd),
        _ => panic!("conv2d expects x [Cin, H, W]"),
    };
    let (cout, wcin, kh, kw) = match *w.shape() {
        [co, ci, kh, kw] => (co, ci, kh, kw),
        _ => panic!("conv2d expects w [Cout, Cin, KH, KW]"),
    };
    assert_eq!(cin, wcin, "conv2d channel mismatch");
    assert_eq!(b.len(), cout, "conv2d bias mismatch");
    let (sh, sw) = stride;
    let (ph, pw) = padding;
    assert!(h + 2 * ph >= kh && wd + 2 * pw >= kw, "conv2d kernel too large");
    let ho = (h + 2 * ph - kh) / sh + 1;
    let wo = (wd + 2 * pw - kw) / sw + 1;

    let vx = x.values_slice();
    let vw = w.values_slice();
    let vb = b.values_slice();
    let mut values = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        let out_plane = &mut values[co * ho * wo..(co + 1) * ho * wo];
        out_plane.iter_mut().for_each(|o| *o = vb[co]);
        for ci in 0..cin {
            let x_plane = &vx[ci * h * wd..(ci + 1) * h * wd];
            for khh in 0..kh {
                for kww in 0..kw {
                    let wv = vw[((co * cin + ci) * kh + khh) * kw + kww];
                    if wv == 0.0 {
                        continue;
                    }
                    for oh in 0..ho {
                        let ih = (oh * sh + khh) as isize - ph as isize;
                        if ih < 0 || ih as usize >= h {
                            continue;
                        }
                        let ih = ih as usize;
                        let orow = &mut out_plane[oh * wo..(oh + 1) * wo];
                        let xrow = &x_plane[ih * wd..(ih + 1) * wd];
                        for (ow, ov) in orow.iter_mut().enumerate() {
                            let iw = (ow * sw + kww) as isize - pw as isize;
                            if iw >= 0 && (iw as usize) < wd {
                                *ov += wv * xrow[iw as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    drop(vx);
    drop(vw);
    drop(vb);

    let (px, pw_t, pb) = (x.clone(), w.clone(), b.clone());
    let xv = x.to_vec();
    let wv = w.to_vec();
    Tensor::from_op(
        vec![cout, ho, wo],
        values,
        vec![x.clone(), w.clone(), b.clone()],
        Box::new(move |g| {
            if px.needs_grad() {
                let mut dx = vec![0.0; cin * h * wd];
                for co in 0..cout {
                    let g_plane = &g[co * ho * wo..(co + 1) * ho * wo];
                    for ci in 0..cin {
                        let d_plane = &mut dx[ci * h * wd..(ci + 1) * h * wd];
                        for khh in 0..kh {
                            for kww in 0..kw {
                                let wvv = wv[((co * cin + ci) * kh + khh) * kw + kww];
                                if wvv == 0.0 {
                                    continue;
                                }
                                for oh in 0..ho {
                                    let ih = (oh * sh + khh) as isize - ph as isize;
                                    if ih < 0 || ih as usize >= h {
                                        continue;
                                    }
                                    let grow = &g_plane[oh * wo..(oh + 1) * wo];
                                    let drow =
                                        &mut d_plane[ih as usize * wd..(ih as usize + 1) * wd];
                                    for (ow, gv) in grow.iter().enumerate() {
                                        let iw = (ow * sw + kww) as isize - pw as isize;
                                        if iw >= 0 && (iw as usize) < wd {
                                            drow[iw as usize] += wvv * gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                px.accumulate_grad(&dx);
            }
            if pw_t.needs_grad() {
                let mut dw = vec![0.0; cout * cin * kh * kw];
                for co in 0..cout {
                    let g_plane = &g[co * ho * wo..(co + 1) * ho * wo];
                    for ci in 0..cin {
                        let x_plane = &xv[ci * h * wd..(ci + 1) * h * wd];
                        for khh in 0..kh {
                            for kww in 0..kw {
                                let mut acc = 0.0;
                                for oh in 0..ho {
                                    let ih = (oh * sh + khh) as isize - ph as isize;
                                    if ih < 0 || ih as usize >= h {
                                        continue;
                                    }
                                    let grow = &g_plane[oh * wo..(oh + 1) * wo];
                                    let xrow = &x_plane[ih as usize * wd..(ih as usize + 1) * wd];
                                    for (ow, gv) in grow.iter().enumerate() {
                                        let iw = (ow * sw + kww) as isize - pw as isize;
                                        if iw >= 0 && (iw as usize) < wd {
                                            acc += gv * xrow[iw as usize];
                                        }
                                    }
                                }
                                dw[((co * cin + ci) * kh + khh) * kw + kww] += acc;
                            }
                        }
                    }
                }
                pw_t.accumulate_grad(&dw);
            }
            if pb.needs_grad() {
                let mut db = vec![0.0; cout];
                for co in 0..cout {
                    db[co] = g[co * ho * wo..(co + 1) * ho * wo].iter().sum();
                }
                pb.accumulate_grad(&db);
            }
        }),
    )
}

// ---------------------------------------------------------------------------
// Differentiable STFT magnitude
// ---------------------------------------------------------------------------

/// |STFT(x)| as a `[bins, frames]` tensor. The backward pass applies the
/// adjoint of the windowed one-sided DFT, including the reflect-padding
/// scatter when the config is centered.
pub fn stft_magnitude(x: &Tensor, cfg: &StftConfig) -> Tensor {
    let t = match *x.shape() {
        [t] => t,
        _ => panic!("stft_magnitude expects a 1-D waveform"),
    };
    let buf = crate::audio::AudioBuffer::new(x.to_vec(), 0);
    let spec = crate::stft::stft(&buf, cfg).expect("stft_magnitude forward failed");
    let bins = spec.num_bins;
    let frames = spec.num_frames;
    let mut values = vec![0.0; bins * frames];
    for f in 0..frames {
        for k in 0..bins {
            values[k * frames + f] = spec.magnitude(f, k);
        }
    }
    let mags = values.clone();
    let px = x.clone();
    let cfg_c = cfg.clone();
    let spec_re = spec.re;
    let spec_im = spec.im;
    Tensor::from_op(
        vec![bins, frames],
        values,
        vec![x.clone()],
        Box::new(move |g| {
            let fft_size = cfg_c.fft_size;
            let full_window = cfg_c.full_window();
            let half = fft_size as isize / 2;
            let fft = crate::fft::Fft::new(fft_size).unwrap();
            let mut dx = vec![0.0; t];
            let mut gre = vec![0.0; fft_size];
            let mut gim = vec![0.0; fft_size];
            for f in 0..frames {
                gre.iter_mut().for_each(|v| *v = 0.0);
                gim.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..bins {
                    let m = mags[k * frames + f];
                    if m < 1e-300 {
                        continue;
                    }
                    let gm = g[k * frames + f] / m;
                    let si = f * bins + k;
                    gre[k] = gm * spec_re[si];
                    gim[k] = gm * spec_im[si];
                }
                // Adjoint of the one-sided DFT: N·Re(IFFT) of the grad
                // spectrum zero-padded above Nyquist.
                fft.inverse(&mut gre, &mut gim);
                let start =
                    f as isize * cfg_c.hop_size as isize - if cfg_c.center_padding { half } else { 0 };
                for (i, &gv) in gre.iter().enumerate() {
                    let contrib = gv * fft_size as f64 * full_window[i];
                    if contrib == 0.0 {
                        continue;
                    }
                    let pos = start + i as isize;
                    if pos >= 0 && (pos as usize) < t {
                        dx[pos as usize] += contrib;
                    } else if cfg_c.center_padding {
                        dx[crate::stft::reflect_index(pos, t)] += contrib;
                    }
                }
            }
            px.accumulate_grad(&dx);
        }),
    )
}
