//! Perron–Frobenius cocycles of piecewise-affine Markov maps: Lyapunov
//! spectra, Oseledets subspaces and coherent structures.

pub mod catalog;
pub mod cocycle;
pub mod defaults;
pub mod drivers;
pub mod interval_maps;
pub mod linalg;
pub mod met;
pub mod oseledets;
pub mod stepfn;
pub mod experiments;
