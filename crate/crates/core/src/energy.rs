//! First-order radio energy model and per-node battery bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radio energy coefficients shared by every protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioParams {
    /// Electronics energy, J/bit.
    pub e_elec: f64,
    /// Amplifier energy, J/bit/m².
    pub eps_amp: f64,
    /// Data aggregation energy, J/bit.
    pub e_da: f64,
    pub data_bits: u64,
    pub control_bits: u64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            e_elec: 50e-9,
            eps_amp: 100e-12,
            e_da: 5e-9,
            data_bits: 2000,
            control_bits: 64,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("radio.e_elec", self.e_elec),
            ("radio.eps_amp", self.eps_amp),
            ("radio.e_da", self.e_da),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, "must be a finite value >= 0"));
            }
        }
        if self.data_bits < 1 {
            return Err(Error::config("radio.data_bits", "must be >= 1"));
        }
        if self.control_bits < 1 {
            return Err(Error::config("radio.control_bits", "must be >= 1"));
        }
        Ok(())
    }
}

/// Energy to transmit `bits` over `distance` meters (single d² amplifier regime).
pub fn tx_cost(bits: u64, distance: f64, radio: &RadioParams) -> f64 {
    let bits = bits as f64;
    radio.e_elec * bits + radio.eps_amp * bits * distance * distance
}

pub fn rx_cost(bits: u64, radio: &RadioParams) -> f64 {
    radio.e_elec * bits as f64
}

/// Energy to fuse `total_input_bits` of readings into one outbound packet.
pub fn aggregate_cost(total_input_bits: u64, radio: &RadioParams) -> f64 {
    radio.e_da * total_input_bits as f64
}

/// Battery state of one node.
///
/// `residual + dissipated == initial` holds after every [`EnergyState::debit`];
/// a debit larger than the remaining charge drains the node to exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyState {
    pub initial: f64,
    pub residual: f64,
    pub dissipated: f64,
    pub alive: bool,
}

/// Outcome of a single debit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Debit {
    /// Joules actually drawn from the battery.
    pub drawn: f64,
    /// The full requested amount was available.
    pub completed: bool,
    /// This debit killed the node.
    pub died: bool,
}

impl EnergyState {
    pub fn new(initial: f64) -> Self {
        Self {
            initial,
            residual: initial,
            dissipated: 0.0,
            alive: initial > 0.0,
        }
    }

    pub fn debit(&mut self, amount: f64) -> Result<Debit> {
        if amount.is_nan() || amount < 0.0 {
            return Err(Error::NegativeDebit(amount));
        }
        if !self.alive {
            return Ok(Debit {
                drawn: 0.0,
                completed: false,
                died: false,
            });
        }
        if amount < self.residual {
            self.residual -= amount;
            self.dissipated += amount;
            Ok(Debit {
                drawn: amount,
                completed: true,
                died: false,
            })
        } else {
            let drawn = self.residual;
            // Pin dissipated to the exact complement so conservation holds bit-for-bit at death.
            self.residual = 0.0;
            self.dissipated = self.initial;
            self.alive = false;
            Ok(Debit {
                drawn,
                completed: false,
                died: true,
            })
        }
    }

    /// Relative deviation of `residual + dissipated` from `initial`.
    pub fn conservation_error(&self) -> f64 {
        if self.initial == 0.0 {
            return (self.residual + self.dissipated).abs();
        }
        ((self.residual + self.dissipated) - self.initial).abs() / self.initial
    }
}
