use super::params::{GradBuffer, ParamStore};
use super::tensor::Tensor;

/// Adam with bias correction. Frozen parameters are never touched.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Option<Tensor>>,
    second: Vec<Option<Tensor>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &GradBuffer) {
        self.step += 1;
        if self.first.len() < store.len() {
            self.first.resize(store.len(), None);
            self.second.resize(store.len(), None);
        }
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if store.is_frozen(id) {
                continue;
            }
            let Some(g) = grads.get(id) else { continue };
            let i = id.index();
            let m = self.first[i].get_or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.second[i].get_or_insert_with(|| Tensor::zeros(g.shape()));
            let p = store.tensor_mut(id).data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k];
                let mk = &mut m.data_mut()[k];
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * gk;
                let vk = &mut v.data_mut()[k];
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * gk * gk;
                let mhat = m.data()[k] / bc1;
                let vhat = v.data()[k] / bc2;
                p[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Graph;

    #[test]
    fn minimizes_a_quadratic_and_respects_freeze() {
        let mut store = ParamStore::new();
        let a = store.insert("a", Tensor::from_fn(&[3], |i| i as f64 + 1.0));
        let b = store.insert("b", Tensor::scalar(5.0));
        store.set_frozen(b, true);
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let mut g = Graph::new();
            let av = g.param(&store, a);
            let bv = g.param(&store, b);
            let sq = g.square(av);
            let s = g.sum(sq);
            let loss = g.mul(s, bv);
            let grads = g.backward(loss);
            let mut buf = GradBuffer::new(&store);
            buf.accumulate(&g, &grads);
            assert!(buf.get(b).is_none());
            opt.step(&mut store, &buf);
        }
        assert!(store.tensor(a).data().iter().all(|v| v.abs() < 1e-2));
        assert_eq!(store.tensor(b).item(), 5.0);
    }
}
