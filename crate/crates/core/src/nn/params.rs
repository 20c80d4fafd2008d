use rand::Rng;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All parameters of a model in one contiguous vector, addressed by named,
/// shaped views.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBuffer<T> {
    pub data: Vec<T>,
    specs: Vec<TensorSpec>,
}

impl<T: Scalar> Default for ParamBuffer<T> {
    fn default() -> Self {
        Self { data: Vec::new(), specs: Vec::new() }
    }
}

impl<T: Scalar> ParamBuffer<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero tensor and returns its offset.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let offset = self.data.len();
        let spec = TensorSpec { name: name.into(), shape: shape.to_vec(), offset };
        self.data.resize(offset + spec.len(), T::zero());
        self.specs.push(spec);
        offset
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn spec(&self, name: &str) -> Option<&TensorSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.spec(name).map(|s| &self.data[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let r = self.spec(name)?.range();
        Some(&mut self.data[r])
    }

    /// Zero buffer with the same layout, for gradients and moments.
    pub fn zeros_like(&self) -> Self {
        Self { data: vec![T::zero(); self.data.len()], specs: self.specs.clone() }
    }

    pub fn fill_uniform<R: Rng + ?Sized>(&mut self, name: &str, bound: f64, rng: &mut R) {
        let r = self.spec(name).expect("known tensor").range();
        for x in &mut self.data[r] {
            *x = T::lit(rng.random_range(-bound..=bound));
        }
    }

    pub fn fill(&mut self, name: &str, v: f64) {
        let r = self.spec(name).expect("known tensor").range();
        self.data[r].iter_mut().for_each(|x| *x = T::lit(v));
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Same layout and values in another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParamBuffer<U> {
        ParamBuffer { data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(), specs: self.specs.clone() }
    }
}
