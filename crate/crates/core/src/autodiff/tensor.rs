use std::cell::{Cell, Ref, RefCell, RefMut};
use std::rc::Rc;

use super::AutodiffError;

/// A dense n-dimensional array of f64 values in row-major order, with an
/// optional gradient buffer of the same shape.
///
/// `Tensor` is a cheap handle (`Rc`) onto shared storage: cloning it clones
/// the handle, not the data. Data and gradient live behind separate
/// `RefCell`s so that backward closures can read values of one tensor while
/// accumulating gradients into another (or the same) tensor.
pub struct Tensor {
    inner: Rc<Inner>,
}

struct Inner {
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: Cell<bool>,
    /// True when this tensor participates in gradient flow: either it is a
    /// leaf with `requires_grad`, or it was produced by a recorded op.
    tracked: Cell<bool>,
}

impl Clone for Tensor {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={})",
            self.inner.shape,
            self.inner.requires_grad.get()
        )
    }
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self, AutodiffError> {
        if shape.contains(&0) {
            return Err(AutodiffError::InvalidArg {
                op: "Tensor::new",
                detail: format!("extents must be positive, got {shape:?}"),
            });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "Tensor::new",
                detail: format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            });
        }
        Ok(Tensor {
            inner: Rc::new(Inner {
                shape: shape.to_vec(),
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: Cell::new(false),
                tracked: Cell::new(false),
            }),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel]).expect("zeros: valid shape")
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![value; numel]).expect("filled: valid shape")
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(&[1], vec![value]).expect("scalar")
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(f).collect();
        Tensor::new(shape, data).expect("from_fn: valid shape")
    }

    /// A leaf tensor that accumulates gradients (a trainable parameter).
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self, AutodiffError> {
        let t = Tensor::new(shape, data)?;
        t.set_requires_grad(true);
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// Replace the stored values. The new buffer must match the shape.
    pub fn set_data(&self, data: Vec<f64>) -> Result<(), AutodiffError> {
        if data.len() != self.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "Tensor::set_data",
                detail: format!("shape {:?} needs {} values, got {}", self.shape(), self.len(), data.len()),
            });
        }
        *self.inner.data.borrow_mut() = data;
        Ok(())
    }

    pub(crate) fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        self.inner.data.borrow_mut()
    }

    /// The scalar value of a length-1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() requires a scalar tensor");
        self.inner.data.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn set_requires_grad(&self, value: bool) {
        self.inner.requires_grad.set(value);
        if value {
            self.inner.tracked.set(true);
        }
    }

    pub fn with_requires_grad(self) -> Self {
        self.set_requires_grad(true);
        self
    }

    pub(crate) fn tracked(&self) -> bool {
        self.inner.tracked.get()
    }

    pub(crate) fn mark_tracked(&self) {
        self.inner.tracked.set(true);
    }

    /// The gradient buffer, if backward has populated one.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn has_grad(&self) -> bool {
        self.inner.grad.borrow().is_some()
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn grad_ref(&self) -> Ref<'_, Option<Vec<f64>>> {
        self.inner.grad.borrow()
    }

    /// Mutable access to the gradient, allocating zeros on first use.
    pub(crate) fn grad_mut(&self) -> RefMut<'_, Vec<f64>> {
        {
            let mut g = self.inner.grad.borrow_mut();
            if g.is_none() {
                *g = Some(vec![0.0; self.len()]);
            }
        }
        RefMut::map(self.inner.grad.borrow_mut(), |g| g.as_mut().expect("just initialized"))
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut g = self.grad_mut();
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// Whether two handles refer to the same storage.
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    #[cfg(test)]
    pub(crate) fn handle_count(&self) -> usize {
        Rc::strong_count(&self.inner)
    }
}
