//! Named traversal over learnable arrays.
//!
//! Every trainable component implements [`Parameters`], which flattens it
//! into `(dotted.name, shape, contiguous slice)` entries in a fixed order.
//! Gradients and optimizer moments reuse the same structs, so entries of a
//! parameter tree, its gradient and its moments line up index by index.

use ndarray::{Array, Dimension};

pub struct ParamView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct ParamViewMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub trait Parameters {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>);

    fn views(&self) -> Vec<ParamView<'_>> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn views_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }

    fn num_params(&self) -> usize {
        self.views().iter().map(|v| v.data.len()).sum()
    }

    fn fill(&mut self, value: f64) {
        for v in self.views_mut() {
            v.data.fill(value);
        }
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    /// `self += scale * other`, entry by entry.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        for (dst, src) in self.views_mut().into_iter().zip(other.views()) {
            debug_assert_eq!(dst.shape, src.shape);
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += scale * s;
            }
        }
    }
}

impl<D: Dimension> Parameters for Array<f64, D> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        out.push(ParamView {
            name: prefix.to_string(),
            shape: self.shape().to_vec(),
            data: self.as_slice().expect("parameter arrays are kept in standard layout"),
        });
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>) {
        let shape = self.shape().to_vec();
        out.push(ParamViewMut {
            name: prefix.to_string(),
            shape,
            data: self
                .as_slice_mut()
                .expect("parameter arrays are kept in standard layout"),
        });
    }
}

impl<T: Parameters> Parameters for Vec<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<ParamView<'a>>) {
        for (i, item) in self.iter().enumerate() {
            item.collect(&join(prefix, &i.to_string()), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamViewMut<'a>>) {
        for (i, item) in self.iter_mut().enumerate() {
            item.collect_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

/// Implements [`Parameters`] for a struct by visiting the listed fields in order.
macro_rules! impl_parameters {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::model::params::Parameters for $ty {
            fn collect<'a>(
                &'a self,
                prefix: &str,
                out: &mut Vec<$crate::model::params::ParamView<'a>>,
            ) {
                $( self.$field.collect(&$crate::model::params::join(prefix, stringify!($field)), out); )*
            }

            fn collect_mut<'a>(
                &'a mut self,
                prefix: &str,
                out: &mut Vec<$crate::model::params::ParamViewMut<'a>>,
            ) {
                $( self.$field.collect_mut(&$crate::model::params::join(prefix, stringify!($field)), out); )*
            }
        }
    };
}

pub(crate) use impl_parameters;
