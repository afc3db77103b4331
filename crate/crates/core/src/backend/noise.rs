use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment error of one qubit's readout.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReadoutError {
    /// Prepared 0, read 1.
    pub p0to1: f64,
    /// Prepared 1, read 0.
    pub p1to0: f64,
}

impl ReadoutError {
    pub fn symmetric(p: f64) -> Self {
        Self { p0to1: p, p1to0: p }
    }

    pub fn is_ideal(&self) -> bool {
        self.p0to1 == 0.0 && self.p1to0 == 0.0
    }

    /// Probability of reading `read` when the qubit holds `held`.
    pub fn transition(&self, held: bool, read: bool) -> f64 {
        match (held, read) {
            (false, false) => 1.0 - self.p0to1,
            (false, true) => self.p0to1,
            (true, false) => self.p1to0,
            (true, true) => 1.0 - self.p1to0,
        }
    }
}

/// Synthetic device noise: independent readout flips per qubit plus a
/// uniformly random non-identity two-qubit Pauli after each CX with
/// probability `cx_pauli_error`.
///
/// Qubits beyond `readout.len()` read out perfectly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub readout: Vec<ReadoutError>,
    pub cx_pauli_error: f64,
}

impl NoiseModel {
    pub fn new(readout: Vec<ReadoutError>, cx_pauli_error: f64) -> Result<Self> {
        let model = Self {
            readout,
            cx_pauli_error,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn uniform(n_qubits: usize, readout_flip: f64, cx_pauli_error: f64) -> Result<Self> {
        Self::new(
            vec![ReadoutError::symmetric(readout_flip); n_qubits],
            cx_pauli_error,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let probs = self
            .readout
            .iter()
            .flat_map(|r| [r.p0to1, r.p1to0])
            .chain([self.cx_pauli_error]);
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "noise probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn readout_for(&self, q: usize) -> ReadoutError {
        self.readout.get(q).copied().unwrap_or_default()
    }

    pub fn has_readout_error(&self) -> bool {
        self.readout.iter().any(|r| !r.is_ideal())
    }

    pub fn has_gate_error(&self) -> bool {
        self.cx_pauli_error > 0.0
    }
}
