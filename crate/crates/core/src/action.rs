use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// An action in either a continuous or a discrete action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action<T> {
    Continuous(Vec<T>),
    Discrete(usize),
}

impl<T: Scalar> Action<T> {
    /// Feature encoding used as critic input: the vector itself, or a one-hot
    /// of width `n_discrete`.
    pub fn write_features(&self, n_discrete: usize, out: &mut Vec<T>) {
        match self {
            Action::Continuous(v) => out.extend_from_slice(v),
            Action::Discrete(a) => {
                out.extend((0..n_discrete).map(|i| if i == *a { T::one() } else { T::zero() }))
            }
        }
    }

    pub fn as_continuous(&self) -> Option<&[T]> {
        match self {
            Action::Continuous(v) => Some(v),
            Action::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }
}

/// Shape of an action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSpace {
    Continuous { dim: usize },
    Discrete { n: usize },
}

impl ActionSpace {
    /// Width of the critic's action features.
    pub fn feature_dim(self) -> usize {
        match self {
            ActionSpace::Continuous { dim } => dim,
            ActionSpace::Discrete { n } => n,
        }
    }
}
