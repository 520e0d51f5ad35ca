//! Linear energy model: memory access plus one multiply and one add per
//! surviving connection.

use crate::network::Model;

/// Energy per operation in picojoules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyModel {
    pub int_add: f64,
    pub float_add: f64,
    pub register: f64,
    pub int_mult: f64,
    pub float_mult: f64,
    pub sram: f64,
    pub dram: f64,
}

impl Default for EnergyModel {
    /// 32-bit operations in a 45 nm process.
    fn default() -> Self {
        EnergyModel {
            int_add: 0.1,
            float_add: 0.9,
            register: 1.0,
            int_mult: 3.1,
            float_mult: 3.7,
            sram: 5.0,
            dram: 640.0,
        }
    }
}

/// Where weights are fetched from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Storage {
    Sram,
    Dram,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyEstimate {
    pub memory_pj: f64,
    pub compute_pj: f64,
}

impl EnergyEstimate {
    pub fn total_pj(&self) -> f64 {
        self.memory_pj + self.compute_pj
    }

    /// Average power at `hz` inferences per second.
    pub fn watts(&self, hz: f64) -> f64 {
        self.total_pj() * 1e-12 * hz
    }

    pub fn memory_watts(&self, hz: f64) -> f64 {
        self.memory_pj * 1e-12 * hz
    }
}

impl EnergyModel {
    pub fn memory_access(&self, storage: Storage) -> f64 {
        match storage {
            Storage::Sram => self.sram,
            Storage::Dram => self.dram,
        }
    }

    /// Energy for `connections` effective connections.
    pub fn connections(&self, connections: f64, storage: Storage) -> EnergyEstimate {
        EnergyEstimate {
            memory_pj: connections * self.memory_access(storage),
            compute_pj: connections * (self.float_mult + self.float_add),
        }
    }

    /// Per-inference energy of `model`: every surviving weight of a layer
    /// counts once, scaled by the layer's input density in percent
    /// (`input_act_pct[layer]`, 100 when absent).
    pub fn estimate(
        &self,
        model: &Model,
        storage: Storage,
        input_act_pct: Option<&[f64]>,
    ) -> EnergyEstimate {
        let connections: f64 = model
            .weighted_layers()
            .into_iter()
            .map(|l| {
                let density = input_act_pct.map_or(100.0, |a| a[l]) / 100.0;
                model.param(l).expect("weighted").live_count() as f64 * density
            })
            .sum();
        self.connections(connections, storage)
    }
}

/// [`EnergyModel::estimate`] with the default costs.
pub fn estimate_energy(
    model: &Model,
    storage: Storage,
    input_act_pct: Option<&[f64]>,
) -> EnergyEstimate {
    EnergyModel::default().estimate(model, storage, input_act_pct)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_ratio() {
        let m = EnergyModel::default();
        let s = m.connections(10.0, Storage::Sram).memory_pj;
        let d = m.connections(10.0, Storage::Dram).memory_pj;
        assert_eq!(s / d, 5.0 / 640.0);
    }
}
