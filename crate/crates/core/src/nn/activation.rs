use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, Default)]
pub struct Relu<T> {
    output: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        y
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = self.infer(x);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self
            .output
            .as_ref()
            .ok_or_else(|| Error::State("relu backward called before forward".into()))?;
        check_same(y, dy, "relu")?;
        let mut dx = dy.clone();
        for (g, &out) in dx.data_mut().iter_mut().zip(y.data()) {
            if out <= T::zero() {
                *g = T::zero();
            }
        }
        Ok(dx)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tanh<T> {
    output: Option<Tensor<T>>,
}

impl<T: Scalar> Tanh<T> {
    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        y
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = self.infer(x);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self
            .output
            .as_ref()
            .ok_or_else(|| Error::State("tanh backward called before forward".into()))?;
        check_same(y, dy, "tanh")?;
        let mut dx = dy.clone();
        for (g, &out) in dx.data_mut().iter_mut().zip(y.data()) {
            *g *= T::one() - out * out;
        }
        Ok(dx)
    }
}

fn check_same<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>, what: &str) -> Result<()> {
    if y.shape() != dy.shape() {
        return Err(Error::Shape(format!(
            "{what} upstream gradient {:?} does not match output {:?}",
            dy.shape(),
            y.shape()
        )));
    }
    Ok(())
}
