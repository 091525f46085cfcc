use super::backbone::LayerFeatures;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Exemplar embeddings of the three tapped layers, refreshed by linear
/// interpolation on a fixed frame cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateState<T> {
    embeddings: LayerFeatures<T>,
    lr: T,
    cadence: usize,
    frames_since_update: usize,
    updates: usize,
}

impl<T: Scalar> TemplateState<T> {
    pub fn new(embeddings: LayerFeatures<T>, lr: T, cadence: usize) -> Result<Self> {
        if !(lr >= T::zero() && lr <= T::one()) {
            return Err(Error::param("template.lr", "must lie in [0, 1]"));
        }
        if cadence == 0 {
            return Err(Error::param("template.cadence", "must be at least 1"));
        }
        Ok(Self {
            embeddings,
            lr,
            cadence,
            frames_since_update: 0,
            updates: 0,
        })
    }

    pub fn embeddings(&self) -> &LayerFeatures<T> {
        &self.embeddings
    }

    pub fn lr(&self) -> T {
        self.lr
    }

    pub fn cadence(&self) -> usize {
        self.cadence
    }

    pub fn frames_since_update(&self) -> usize {
        self.frames_since_update
    }

    /// Number of interpolation updates applied so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Counts one processed frame; true once the cadence is reached.
    pub fn tick(&mut self) -> bool {
        self.frames_since_update += 1;
        self.is_due()
    }

    pub fn is_due(&self) -> bool {
        self.frames_since_update >= self.cadence
    }

    /// `z <- (1 - lr) z + lr z_new` on every layer, then restarts the cadence.
    pub fn update(&mut self, fresh: &LayerFeatures<T>) -> Result<()> {
        for (old, new) in self.embeddings.0.iter().zip(&fresh.0) {
            old.ensure_same_shape(new, "update_template")?;
        }
        let keep = T::one() - self.lr;
        for (old, new) in self.embeddings.0.iter_mut().zip(&fresh.0) {
            for (o, &n) in old.data_mut().iter_mut().zip(new.data()) {
                *o = keep * *o + self.lr * n;
            }
        }
        self.frames_since_update = 0;
        self.updates += 1;
        Ok(())
    }
}
