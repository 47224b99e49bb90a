use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modelkit::{Model, ParamVector, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    pub input: Vec<f64>,
    pub target: Target,
}

/// Source of training samples, one micro-batch per update.
pub trait DataStream {
    fn batch(&mut self, size: usize) -> Result<Vec<Sample>>;
}

/// Visits every sample once per epoch in an order reshuffled from `seed`.
#[derive(Debug, Clone)]
pub struct ShuffledStream<'a> {
    data: &'a [Sample],
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl<'a> ShuffledStream<'a> {
    pub fn new(data: &'a [Sample], seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        Ok(ShuffledStream { data, order, pos: 0, rng })
    }
}

impl DataStream for ShuffledStream<'_> {
    fn batch(&mut self, size: usize) -> Result<Vec<Sample>> {
        let mut out = Vec::with_capacity(size);
        for _ in 0..size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.data[self.order[self.pos]].clone());
            self.pos += 1;
        }
        Ok(out)
    }
}

/// Cycles through the samples in storage order.
#[derive(Debug, Clone)]
pub struct CyclicStream<'a> {
    data: &'a [Sample],
    pos: usize,
}

impl<'a> CyclicStream<'a> {
    pub fn new(data: &'a [Sample]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        Ok(CyclicStream { data, pos: 0 })
    }
}

impl DataStream for CyclicStream<'_> {
    fn batch(&mut self, size: usize) -> Result<Vec<Sample>> {
        let out = (0..size)
            .map(|k| self.data[(self.pos + k) % self.data.len()].clone())
            .collect();
        self.pos = (self.pos + size) % self.data.len();
        Ok(out)
    }
}

/// Mean loss and (for class targets) accuracy of `weights` on `data`.
pub fn evaluate(model: &Model, weights: &[ParamVector], data: &[Sample]) -> Result<(f64, Option<f64>)> {
    if data.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut classified = 0usize;
    for s in data {
        let fwd = model.forward(&s.input, &s.target, weights)?;
        loss += fwd.loss;
        if let Some(ok) = fwd.correct(&s.target) {
            classified += 1;
            correct += ok as usize;
        }
    }
    let acc = (classified > 0).then(|| correct as f64 / classified as f64);
    Ok((loss / data.len() as f64, acc))
}
