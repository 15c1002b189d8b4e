use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Fully connected layer. Inputs of any rank ≥ 2 are flattened per item.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out_features, in_features]`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub weight_grad: Tensor<T>,
    pub bias_grad: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Linear {
            in_features,
            out_features,
            weight: Tensor::zeros(&[out_features, in_features]),
            bias: Tensor::zeros(&[out_features]),
            weight_grad: Tensor::zeros(&[out_features, in_features]),
            bias_grad: Tensor::zeros(&[out_features]),
            input: None,
        }
    }

    fn batch(&self, x: &Tensor<T>) -> Result<usize> {
        if x.shape().len() < 2 || x.item_len() != self.in_features {
            return Err(Error::Shape(format!(
                "fully-connected layer expects {} features per item, got {:?}",
                self.in_features,
                x.shape()
            )));
        }
        Ok(x.shape()[0])
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.batch(x)?;
        let (fin, fout) = (self.in_features, self.out_features);
        let mut out = Tensor::zeros(&[n, fout]);
        for row in out.data_mut().chunks_exact_mut(fout) {
            row.copy_from_slice(self.bias.data());
        }
        // y = x · Wᵀ + b
        T::gemm(
            n,
            fin,
            fout,
            T::one(),
            x.data(),
            (fin as isize, 1),
            self.weight.data(),
            (1, fin as isize),
            T::one(),
            out.data_mut(),
            (fout as isize, 1),
        );
        Ok(out)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("fully-connected backward called before forward".into()))?;
        let n = x.shape()[0];
        let (fin, fout) = (self.in_features, self.out_features);
        if dy.shape() != [n, fout] {
            return Err(Error::Shape(format!(
                "fully-connected upstream gradient {:?} does not match output [{n}, {fout}]",
                dy.shape()
            )));
        }
        // dW = dyᵀ · x
        T::gemm(
            fout,
            n,
            fin,
            T::one(),
            dy.data(),
            (1, fout as isize),
            x.data(),
            (fin as isize, 1),
            T::zero(),
            self.weight_grad.data_mut(),
            (fin as isize, 1),
        );
        self.bias_grad.fill(T::zero());
        for row in dy.data().chunks_exact(fout) {
            for (b, &g) in self.bias_grad.data_mut().iter_mut().zip(row) {
                *b += g;
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        T::gemm(
            n,
            fout,
            fin,
            T::one(),
            dy.data(),
            (fout as isize, 1),
            self.weight.data(),
            (fin as isize, 1),
            T::zero(),
            dx.data_mut(),
            (fin as isize, 1),
        );
        Ok(dx)
    }
}
