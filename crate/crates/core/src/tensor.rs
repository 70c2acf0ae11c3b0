use std::cell::{Cell, Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;

use rand::Rng;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Gradient callback of an operation. Receives the upstream gradient of the
/// node's output and the node's parents, and accumulates into the parents.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[Tensor])>;

pub(crate) struct Node {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    /// Leaf explicitly asked to collect gradients.
    requires_grad: bool,
    /// True when a backward pass has to flow through this node, i.e. it is a
    /// gradient leaf itself or any ancestor is.
    needs_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Dense row-major f64 tensor participating in a compute graph.
///
/// Cloning is cheap: clones share the same underlying node, so a clone sees
/// the same data and accumulates into the same gradient buffer.
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Node>);

impl Tensor {
    fn new_leaf(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Tensor {
        let expect: usize = shape.iter().product();
        assert!(
            data.len() == expect,
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor(Rc::new(Node {
            id: fresh_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            needs_grad: requires_grad,
            parents: Vec::new(),
            backward: None,
        }))
    }

    /// Constant tensor; gradients do not flow into it.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::new_leaf(shape.to_vec(), data, false)
    }

    /// Trainable leaf; [`Tensor::backward`] accumulates its gradient.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::new_leaf(shape.to_vec(), data, true)
    }

    /// Rank-0 constant.
    pub fn scalar(value: f64) -> Tensor {
        Tensor::from_vec(&[], vec![value])
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_vec(shape, vec![0.0; shape.iter().product()])
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor::from_vec(shape, vec![value; shape.iter().product()])
    }

    /// Trainable leaf with entries drawn uniformly from `[lo, hi)`.
    pub fn uniform_param<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        Tensor::param(shape, data)
    }

    /// Operation result node. `backward` is dropped when no ancestor collects
    /// gradients, so inference-only graphs stay cheap.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let expect: usize = shape.iter().product();
        debug_assert_eq!(data.len(), expect, "op produced malformed output");
        let needs_grad = parents.iter().any(|p| p.0.needs_grad);
        Tensor(Rc::new(Node {
            id: fresh_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad: false,
            needs_grad,
            parents,
            backward: if needs_grad { Some(backward) } else { None },
        }))
    }

    pub(crate) fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.0.data.borrow()
    }

    /// Mutable access to the raw buffer, used by optimizers and loaders.
    /// Mutating a non-leaf mid-graph invalidates recorded gradients, so keep
    /// writes outside of forward/backward passes.
    pub fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn value(&self) -> f64 {
        assert!(
            self.len() == 1,
            "value() needs a single-element tensor, got shape {:?}",
            self.shape()
        );
        self.0.data.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub(crate) fn needs_grad(&self) -> bool {
        self.0.needs_grad
    }

    pub(crate) fn parents(&self) -> &[Tensor] {
        &self.0.parents
    }

    /// Accumulated gradient, if a backward pass has reached this tensor.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Adds `delta` into this tensor's gradient buffer. No-op for tensors
    /// outside every gradient path, so constants stay grad-free.
    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        if !self.0.needs_grad {
            return;
        }
        debug_assert_eq!(delta.len(), self.len());
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    pub(crate) fn run_backward(&self, grad_out: &[f64]) {
        if let Some(f) = &self.0.backward {
            f(grad_out, &self.0.parents);
        }
    }

    /// Reverse-mode pass from a scalar result. Gradients accumulate, so call
    /// [`Tensor::zero_grad`] on leaves between steps.
    pub fn backward(&self) {
        crate::ComputeGraph::trace(self).backward(self);
    }

    /// Checks every element for NaN or infinity.
    pub fn is_finite(&self) -> bool {
        self.0.data.borrow().iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}
