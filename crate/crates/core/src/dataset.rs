/// One labeled observation: a fully specified problem instance and the
/// desired consensus output.
#[derive(Debug, Clone)]
pub struct Sample<P> {
    pub problem: P,
    pub target: Vec<f64>,
}

/// Labeled samples split into a training prefix and a test suffix.
#[derive(Debug, Clone)]
pub struct TrainingDataset<P> {
    pub samples: Vec<Sample<P>>,
    pub num_train: usize,
}

impl<P> TrainingDataset<P> {
    pub fn train(&self) -> &[Sample<P>] {
        &self.samples[..self.num_train]
    }

    pub fn test(&self) -> &[Sample<P>] {
        &self.samples[self.num_train..]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
