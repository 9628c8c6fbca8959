use crate::scalar::Scalar;

/// RMSprop: `s ← ρ s + (1−ρ) g²`, `V ← V − lr·g/(√s + eps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp<T> {
    pub decay: T,
    pub eps: T,
    square_avg: Vec<T>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(len: usize, decay: T, eps: T) -> Self {
        RmsProp {
            decay,
            eps,
            square_avg: vec![T::zero(); len],
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: T) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.square_avg.len());
        let keep = T::one() - self.decay;
        for ((p, &g), s) in params.iter_mut().zip(grads).zip(self.square_avg.iter_mut()) {
            *s = self.decay * *s + keep * g * g;
            *p -= lr * g / (s.sqrt() + self.eps);
        }
    }
}
