//! Dense f32 tensors with reverse-mode differentiation.
//!
//! A [`Tensor`] is an immutable row-major value. Operations on tensors that
//! require gradients record a node (parents + backward closure); calling
//! [`Tensor::backward`] on a scalar replays the graph in reverse and returns
//! a [`GradStore`] keyed by tensor identity. Everything runs on the CPU in
//! f32 with f64 accumulation inside reductions.
//!
//! Ops are pure functions of their inputs; randomness always enters through
//! an explicit [`crate::rng::Rng`]. Ops never silently produce NaN/Inf:
//! forward results are scanned and an error is returned instead.

mod fd;
mod image;
mod io;
pub(crate) mod ops;

pub use fd::finite_diff_check;
pub use io::{read_tensor, read_tensor_from, record_size, write_tensor, write_tensor_to, LVT_MAGIC};
pub use ops::ensure_finite;

use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::rng::Rng;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Gradients for each parent, in parent order. `None` for non-differentiable
/// or constant parents.
type BackwardFn = Box<dyn Fn(&[f32]) -> Vec<Option<Vec<f32>>>>;

struct Node {
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f32>,
    node: Option<Node>,
    requires_grad: bool,
}

/// N-dimensional dense f32 array, cheaply clonable (shared storage).
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
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

pub(crate) fn check_finite(op: &'static str, data: &[f32]) -> Result<()> {
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op, detail: format!("produced {v}") });
    }
    Ok(())
}

impl Tensor {
    /// Build a tensor from raw data; fails if `data.len() != product(shape)`
    /// or the data contains non-finite values.
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "new",
                detail: format!("shape {:?} wants {} values, got {}", shape, numel, data.len()),
            });
        }
        check_finite("new", &data)?;
        Ok(Self::from_parts(shape.to_vec(), data, None, false))
    }

    pub fn scalar(v: f32) -> Tensor {
        Self::from_parts(vec![1], vec![v], None, false)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![0.0; numel], None, false)
    }

    pub fn full(shape: &[usize], v: f32) -> Tensor {
        let numel = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![v; numel], None, false)
    }

    /// Standard-normal tensor drawn from an explicit generator.
    pub fn randn(shape: &[usize], rng: &mut Rng) -> Tensor {
        let numel = shape.iter().product();
        let mut data = vec![0.0f32; numel];
        rng.fill_normal(&mut data);
        Self::from_parts(shape.to_vec(), data, None, false)
    }

    /// Leaf tensor without finiteness validation (crate-internal fast path).
    pub(crate) fn leaf(shape: Vec<usize>, data: Vec<f32>, requires_grad: bool) -> Tensor {
        Self::from_parts(shape, data, None, requires_grad)
    }

    fn from_parts(
        shape: Vec<usize>,
        data: Vec<f32>,
        node: Option<Node>,
        requires_grad: bool,
    ) -> Tensor {
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                node,
                requires_grad,
            }),
        }
    }

    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<f32>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Result<Tensor> {
        check_finite(op, &data)?;
        let requires = parents.iter().any(|p| p.is_requires_grad());
        let node = requires.then(|| Node { parents, backward });
        Ok(Self::from_parts(shape, data, node, requires))
    }

    /// Mark a leaf as a differentiation root (consumes and rewraps).
    pub fn requires_grad(self) -> Tensor {
        if self.inner.requires_grad {
            return self;
        }
        Self::from_parts(self.inner.shape.clone(), self.inner.data.clone(), None, true)
    }

    /// A detached copy that shares no graph history.
    pub fn detach(&self) -> Tensor {
        Self::from_parts(self.inner.shape.clone(), self.inner.data.clone(), None, false)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    pub fn is_requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.numel() != 1 {
            return Err(Error::InvalidArgument {
                op: "item",
                detail: format!("tensor has {} elements", self.numel()),
            });
        }
        Ok(self.inner.data[0])
    }

    /// Reverse-mode pass from a scalar output. Returns gradients for every
    /// reachable tensor that participates in differentiation.
    pub fn backward(&self) -> Result<GradStore> {
        if self.numel() != 1 {
            return Err(Error::InvalidArgument {
                op: "backward",
                detail: format!("loss must be scalar, got shape {:?}", self.shape()),
            });
        }
        let order = self.topo_order();
        let mut grads: HashMap<u64, Vec<f32>> = HashMap::new();
        grads.insert(self.id(), vec![1.0]);

        for t in order.iter().rev() {
            let Some(node) = t.inner.node.as_ref() else { continue };
            let Some(grad_out) = grads.get(&t.id()).cloned() else { continue };
            let parent_grads = (node.backward)(&grad_out);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (parent, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !parent.is_requires_grad() {
                    continue;
                }
                debug_assert_eq!(pg.len(), parent.numel());
                match grads.get_mut(&parent.id()) {
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&pg) {
                            *a += *g;
                        }
                    }
                    None => {
                        grads.insert(parent.id(), pg);
                    }
                }
            }
        }
        Ok(GradStore { grads })
    }

    /// Topological order (parents before children), iterative to survive
    /// deep training graphs.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited: HashMap<u64, ()> = HashMap::new();
        // (tensor, children_pushed)
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if visited.contains_key(&t.id()) {
                continue;
            }
            visited.insert(t.id(), ());
            stack.push((t.clone(), true));
            if let Some(node) = t.inner.node.as_ref() {
                for p in &node.parents {
                    if !visited.contains_key(&p.id()) && p.is_requires_grad() {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

/// Gradients produced by one backward pass, keyed by tensor identity.
pub struct GradStore {
    grads: HashMap<u64, Vec<f32>>,
}

impl GradStore {
    pub fn get(&self, t: &Tensor) -> Option<&[f32]> {
        self.grads.get(&t.id()).map(|v| v.as_slice())
    }

    /// Gradient for `t`, zeros when the loss did not reach it.
    pub fn get_or_zeros(&self, t: &Tensor) -> Vec<f32> {
        self.grads.get(&t.id()).cloned().unwrap_or_else(|| vec![0.0; t.numel()])
    }
}
