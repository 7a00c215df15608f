//! Constant-rate SGD and Adam over a [`ParamStore`].

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::params::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    frozen: HashSet<ParamId>,
    step: i32,
    moments: Vec<Option<(Mat, Mat)>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, frozen: impl IntoIterator<Item = ParamId>) -> Self {
        Self {
            kind,
            learning_rate,
            frozen: frozen.into_iter().collect(),
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen.contains(&id)
    }

    /// One update. Parameters without a gradient, or frozen ones, are left
    /// untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Mat)]) {
        self.step += 1;
        let lr = self.learning_rate;
        for (id, g) in grads {
            if self.frozen.contains(id) {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd => store.value_mut(*id).scaled_add(-lr, g),
                OptimizerKind::Adam => {
                    if self.moments.len() <= id.index() {
                        self.moments.resize(id.index() + 1, None);
                    }
                    let (m, v) = self.moments[id.index()].get_or_insert_with(|| (Mat::zeros(g.dim()), Mat::zeros(g.dim())));
                    m.zip_mut_with(g, |m, &g| *m = BETA1 * *m + (1.0 - BETA1) * g);
                    v.zip_mut_with(g, |v, &g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
                    let c1 = 1.0 - BETA1.powi(self.step);
                    let c2 = 1.0 - BETA2.powi(self.step);
                    let p = store.value_mut(*id);
                    ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                        *p -= lr * (m / c1) / ((v / c2).sqrt() + EPSILON);
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn store() -> (ParamStore, ParamId, ParamId) {
        let mut s = ParamStore::default();
        let a = s.insert("a", array![[1.0, -2.0]]);
        let b = s.insert("b", array![[3.0]]);
        (s, a, b)
    }

    #[test]
    fn sgd_update() {
        let (mut s, a, b) = store();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.5, [b]);
        opt.step(&mut s, &[(a, array![[2.0, 2.0]]), (b, array![[1.0]])]);
        assert_eq!(s.value(a), &array![[0.0, -3.0]]);
        assert_eq!(s.value(b), &array![[3.0]]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let (mut s, a, _) = store();
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, []);
        opt.step(&mut s, &[(a, array![[4.0, -0.5]])]);
        let v = s.value(a);
        assert!((v[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((v[[0, 1]] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let (mut s, a, _) = store();
            let before = s.digest();
            let mut opt = Optimizer::new(kind, 0.1, []);
            for _ in 0..3 {
                opt.step(&mut s, &[(a, Mat::zeros((1, 2)))]);
            }
            assert_eq!(s.digest(), before);
        }
    }
}
