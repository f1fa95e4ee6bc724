use crate::error::{KwsError, Result};

/// Fixed-length word representation. Compared by cosine similarity, so only
/// its direction carries meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    normalized: bool,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(KwsError::invalid("embedding must be non-empty and finite"));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        crate::losses::l2_norm(&self.values)
    }

    /// Unit-length copy; zero vectors are rejected.
    pub fn normalized(&self) -> Result<Embedding> {
        let n = self.norm();
        if n == 0.0 {
            return Err(KwsError::invalid("cannot normalize a zero embedding"));
        }
        Ok(Embedding {
            values: self.values.iter().map(|v| v / n).collect(),
            normalized: true,
        })
    }

    pub fn scaled(&self, c: f64) -> Embedding {
        Embedding {
            values: self.values.iter().map(|v| v * c).collect(),
            normalized: false,
        }
    }

    /// Cosine similarity in [-1, 1].
    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(KwsError::shape("cosine", self.dim(), other.dim()));
        }
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return Err(KwsError::invalid("cosine similarity with a zero embedding"));
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok((dot / (na * nb)).clamp(-1.0, 1.0))
    }
}
