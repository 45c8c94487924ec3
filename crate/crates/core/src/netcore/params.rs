use super::autodiff::Gradients;
use crate::error::{Error, Result};

/// Named 2-D parameter arrays with congruent gradient and momentum buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    momentum: Vec<Vec<f64>>,
}

impl ParamStore {
    pub fn insert(&mut self, name: &str, rows: usize, cols: usize, values: Vec<f64>) -> Result<()> {
        if values.len() != rows * cols {
            return Err(Error::precondition(format!(
                "parameter {name}: shape {rows}x{cols} given {} values",
                values.len()
            )));
        }
        if self.slot(name).is_some() {
            return Err(Error::precondition(format!("duplicate parameter {name}")));
        }
        self.names.push(name.to_string());
        self.shapes.push((rows, cols));
        self.grads.push(vec![0.0; values.len()]);
        self.momentum.push(vec![0.0; values.len()]);
        self.values.push(values);
        Ok(())
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.slot(name).map(|s| self.values[s].as_slice())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.slot(name).map(|s| &mut self.values[s])
    }

    pub fn grads(&self) -> &[Vec<f64>] {
        &self.grads
    }

    pub fn momentum(&self) -> &[Vec<f64>] {
        &self.momentum
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    /// `grad += weight * g`, slot by slot.
    pub fn accumulate(&mut self, g: &Gradients, weight: f64) -> Result<()> {
        if g.slots.len() != self.grads.len()
            || g.slots.iter().zip(&self.grads).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::precondition("gradient layout does not match parameter store"));
        }
        for (dst, src) in self.grads.iter_mut().zip(&g.slots) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += weight * s;
            }
        }
        Ok(())
    }

    /// Parameter values, gradients, momentum buffers: mutable all at once.
    pub(crate) fn buffers_mut(&mut self) -> impl Iterator<Item = (&mut Vec<f64>, &Vec<f64>, &mut Vec<f64>)> {
        self.values
            .iter_mut()
            .zip(self.grads.iter())
            .zip(self.momentum.iter_mut())
            .map(|((v, g), m)| (v, g, m))
    }

    /// Flattened parameter values in slot order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.values.concat()
    }
}
