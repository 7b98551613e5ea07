use std::cell::Cell;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Handle to a node on a [`super::Tape`]. Valid only for the tape generation
/// it was issued under; `Tape::clear` invalidates all outstanding handles.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId {
    pub(crate) generation: u64,
    pub(crate) index: usize,
}

/// Dense row-major tensor of f64 values.
///
/// Data is shared (`Rc`), so clones are cheap and snapshots stay frozen when
/// the original is later updated in place through [`Tensor::data_mut`].
/// The tape handle is shared between clones: a clone used in a taped op
/// makes the gradient visible through the original as well.
#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Rc<Vec<f64>>,
    requires_grad: bool,
    node: Rc<Cell<Option<NodeId>>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArg {
                op: "tensor",
                msg: format!(
                    "shape {:?} (numel {}) does not describe a data buffer of length {}",
                    shape,
                    numel,
                    data.len()
                ),
            });
        }
        Ok(Self::from_parts(shape, data, false))
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Self {
        Self::from_shared(shape, Rc::new(data), requires_grad)
    }

    pub(crate) fn from_shared(shape: Vec<usize>, data: Rc<Vec<f64>>, requires_grad: bool) -> Self {
        Tensor {
            shape,
            data,
            requires_grad,
            node: Rc::new(Cell::new(None)),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![1], vec![value], false)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![0.0; numel], false)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; numel], false)
    }

    /// Marks the tensor as a gradient target (a trainable leaf).
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// In-place mutable access. Copies the buffer first if it is shared,
    /// so frozen clones keep their values.
    pub fn data_mut(&mut self) -> &mut [f64] {
        Rc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Value of a one-element tensor.
    ///
    /// Panics on non-scalars; callers use it only on loss/metric outputs.
    pub fn item(&self) -> f64 {
        assert!(
            self.data.len() == 1,
            "item() on tensor of shape {:?}",
            self.shape
        );
        self.data[0]
    }

    /// A value-only copy: shares the data but drops gradient tracking and
    /// any tape handle.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            requires_grad: false,
            node: Rc::new(Cell::new(None)),
        }
    }

    pub fn node_id(&self) -> Option<NodeId> {
        self.node.get()
    }

    pub(crate) fn set_node(&self, id: NodeId) {
        self.node.set(Some(id));
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<f64>> {
        Rc::clone(&self.data)
    }
}
