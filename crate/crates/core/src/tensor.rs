use crate::error::{Error, Result};

/// Dense `f64` tensor in NHWC layout (batch, height, width, channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape("tensor::from_vec", format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn height(&self) -> usize {
        self.shape[1]
    }

    pub fn width(&self) -> usize {
        self.shape[2]
    }

    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    /// Number of spatial positions across the batch (`n * h * w`).
    pub fn pixels(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, y: usize, x: usize, c: usize) -> usize {
        ((n * self.shape[1] + y) * self.shape[2] + x) * self.shape[3] + c
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(n, y, x, c)]
    }

    /// Channel vector of pixel `p` (flat index over `n * h * w`).
    pub fn pixel(&self, p: usize) -> &[f64] {
        let c = self.shape[3];
        &self.data[p * c..(p + 1) * c]
    }

    pub fn pixel_mut(&mut self, p: usize) -> &mut [f64] {
        let c = self.shape[3];
        &mut self.data[p * c..(p + 1) * c]
    }

    /// Batch item `n` as a new single-item tensor.
    pub fn item(&self, n: usize) -> Tensor {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        Tensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "tensor add shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "tensor dot shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Concatenates along channels; `a` and `b` must agree on n, h, w.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(a.shape[..3], b.shape[..3], "concat shape mismatch");
        let (ca, cb) = (a.channels(), b.channels());
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        for p in 0..a.pixels() {
            data.extend_from_slice(a.pixel(p));
            data.extend_from_slice(b.pixel(p));
        }
        Tensor { shape: [a.shape[0], a.shape[1], a.shape[2], ca + cb], data }
    }

    /// Inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, first: usize) -> (Tensor, Tensor) {
        let c = self.channels();
        assert!(first <= c);
        let mut a = Vec::with_capacity(self.pixels() * first);
        let mut b = Vec::with_capacity(self.pixels() * (c - first));
        for p in 0..self.pixels() {
            let px = self.pixel(p);
            a.extend_from_slice(&px[..first]);
            b.extend_from_slice(&px[first..]);
        }
        let [n, h, w, _] = self.shape;
        (Tensor { shape: [n, h, w, first], data: a }, Tensor { shape: [n, h, w, c - first], data: b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_is_identity() {
        let a = Tensor::from_vec([1, 2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let b = Tensor::from_vec([1, 2, 2, 1], (10..14).map(f64::from).collect()).unwrap();
        let c = Tensor::concat_channels(&a, &b);
        assert_eq!(c.shape(), [1, 2, 2, 3]);
        assert_eq!(c.pixel(1), &[2.0, 3.0, 11.0]);
        let (x, y) = c.split_channels(2);
        assert_eq!((x, y), (a, b));
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec([1, 2, 2, 1], vec![0.0; 3]).is_err());
    }
}
