use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Phase-resolved cycle counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleReport {
    pub load_cycles: u64,
    pub compute_cycles: u64,
    pub drain_cycles: u64,
    pub unload_cycles: u64,
    pub update_cycles: u64,
    pub total_cycles: u64,
}

impl CycleReport {
    pub fn from_phases(load: u64, compute: u64, drain: u64, unload: u64, update: u64) -> Self {
        Self {
            load_cycles: load,
            compute_cycles: compute,
            drain_cycles: drain,
            unload_cycles: unload,
            update_cycles: update,
            total_cycles: load + compute + drain + unload + update,
        }
    }

    pub fn phase_sum(&self) -> u64 {
        self.load_cycles
            + self.compute_cycles
            + self.drain_cycles
            + self.unload_cycles
            + self.update_cycles
    }
}

impl Add for CycleReport {
    type Output = CycleReport;
    fn add(self, o: CycleReport) -> CycleReport {
        CycleReport::from_phases(
            self.load_cycles + o.load_cycles,
            self.compute_cycles + o.compute_cycles,
            self.drain_cycles + o.drain_cycles,
            self.unload_cycles + o.unload_cycles,
            self.update_cycles + o.update_cycles,
        )
    }
}

impl AddAssign for CycleReport {
    fn add_assign(&mut self, o: CycleReport) {
        *self = *self + o;
    }
}

impl std::iter::Sum for CycleReport {
    fn sum<I: Iterator<Item = CycleReport>>(iter: I) -> Self {
        iter.fold(CycleReport::default(), |a, b| a + b)
    }
}

/// SRAM-side word count for operands read into the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadPort {
    Weight,
    Delta,
    Activation,
    Grad,
    /// Accumulated results read back (cross-tile partial sums, `grad_a` and `z`
    /// consumed by elementwise passes).
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WritePort {
    Grad,
    Weight,
    Result,
}

/// Words crossing the array/SRAM boundary, per operand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessCounters {
    pub reads_weight: u64,
    pub reads_delta: u64,
    pub reads_activation: u64,
    pub reads_grad: u64,
    pub reads_partial: u64,
    pub writes_grad: u64,
    pub writes_weight: u64,
    pub writes_result: u64,
}

impl AccessCounters {
    pub fn read(&mut self, port: ReadPort, words: u64) {
        match port {
            ReadPort::Weight => self.reads_weight += words,
            ReadPort::Delta => self.reads_delta += words,
            ReadPort::Activation => self.reads_activation += words,
            ReadPort::Grad => self.reads_grad += words,
            ReadPort::Partial => self.reads_partial += words,
        }
    }

    pub fn write(&mut self, port: WritePort, words: u64) {
        match port {
            WritePort::Grad => self.writes_grad += words,
            WritePort::Weight => self.writes_weight += words,
            WritePort::Result => self.writes_result += words,
        }
    }

    pub fn total_reads(&self) -> u64 {
        self.reads_weight
            + self.reads_delta
            + self.reads_activation
            + self.reads_grad
            + self.reads_partial
    }

    pub fn total_writes(&self) -> u64 {
        self.writes_grad + self.writes_weight + self.writes_result
    }

    pub fn total(&self) -> u64 {
        self.total_reads() + self.total_writes()
    }
}

impl Add for AccessCounters {
    type Output = AccessCounters;
    fn add(self, o: AccessCounters) -> AccessCounters {
        AccessCounters {
            reads_weight: self.reads_weight + o.reads_weight,
            reads_delta: self.reads_delta + o.reads_delta,
            reads_activation: self.reads_activation + o.reads_activation,
            reads_grad: self.reads_grad + o.reads_grad,
            reads_partial: self.reads_partial + o.reads_partial,
            writes_grad: self.writes_grad + o.writes_grad,
            writes_weight: self.writes_weight + o.writes_weight,
            writes_result: self.writes_result + o.writes_result,
        }
    }
}

impl AddAssign for AccessCounters {
    fn add_assign(&mut self, o: AccessCounters) {
        *self = *self + o;
    }
}

impl std::iter::Sum for AccessCounters {
    fn sum<I: Iterator<Item = AccessCounters>>(iter: I) -> Self {
        iter.fold(AccessCounters::default(), |a, b| a + b)
    }
}
