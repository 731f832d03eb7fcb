use std::fmt;
use std::sync::Arc;

/// A quantity indexed by the time step `k`: either constant or a provider.
#[derive(Clone)]
pub enum Schedule<T> {
    Constant(T),
    Varying(Arc<dyn Fn(usize) -> T + Send + Sync>),
}

impl<T: Clone> Schedule<T> {
    pub fn varying(f: impl Fn(usize) -> T + Send + Sync + 'static) -> Self {
        Schedule::Varying(Arc::new(f))
    }

    pub fn at(&self, k: usize) -> T {
        match self {
            Schedule::Constant(v) => v.clone(),
            Schedule::Varying(f) => f(k),
        }
    }

    pub fn constant_value(&self) -> Option<&T> {
        match self {
            Schedule::Constant(v) => Some(v),
            Schedule::Varying(_) => None,
        }
    }
}

impl<T> From<T> for Schedule<T> {
    fn from(v: T) -> Self {
        Schedule::Constant(v)
    }
}

impl<T: fmt::Debug> fmt::Debug for Schedule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Schedule::Varying(_) => f.write_str("Varying(<fn>)"),
        }
    }
}
