//! Backward and even-integer continued fraction dynamics with exact orbits,
//! return-time bookkeeping, trimmed Birkhoff sums and the analytic
//! quantities that norm them.
//!
//! The bookkeeping types are generic over the value type of the observable.
//! Integer-valued observables use [`IntLedger`] so that every decomposition
//! identity holds exactly; real-valued ones use [`RealLedger`].

pub mod cfmaps;
pub mod exactreal;
pub mod excursion;
pub mod scalar;
pub mod theory;
pub mod trimsum;

pub use cfmaps::{
    DigitRecord, ExactEngine, FloatEngine, MapId, ObservableKind, ObservableSpec, OrbitEngine, Run, Start,
    StepError,
};
pub use excursion::{Decomposition, LedgerError, OrbitLedger, Variant};
pub use scalar::Scalar;
pub use theory::{Norming, TailModel, TheoryError, TheoryTable};
pub use trimsum::{Schedule, TrimAccumulator, TrimError};

/// Ledger for integer-valued observables.
pub type IntLedger = OrbitLedger<i128>;
/// Ledger for real-valued observables.
pub type RealLedger = OrbitLedger<f64>;
/// Trimming accumulator for integer-valued observables.
pub type IntTrim = TrimAccumulator<i128>;
/// Trimming accumulator for real-valued observables.
pub type RealTrim = TrimAccumulator<f64>;
