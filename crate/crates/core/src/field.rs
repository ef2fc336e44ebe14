/// A real-valued function on [0,1]^d that can be sampled concurrently.
///
/// Callers keep query points inside the cube; implementations may clamp
/// round-off excursions.
pub trait Field: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
}

/// Adapter turning a closure into a [`Field`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F> Field for FnField<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl<T: Field + ?Sized> Field for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
}
