//! Core library for studying co-channel coexistence of ITS-G5 (IEEE 802.11p)
//! and LTE-V2X sidelink mode 4 on a single 10 MHz ITS channel.
//!
//! The crate is organised in layers:
//!
//! * [`propagation`] — shared radio model: path loss, noise, correlated
//!   shadowing, packet-error curves and frame timing.
//! * [`analytic`] — closed-form and numerical reception probabilities for an
//!   802.11p link embedded in a free-flow Poisson stream of LTE-V2X
//!   transmitters, with and without the preamble-insertion mitigation.
//! * [`dot11p`] — CSMA/CA medium access, channel-busy-ratio measurement and
//!   reactive DCC for the 802.11p side.
//! * [`ltev2x`] — sidelink mode 4 resource grid, sensing-based semi-persistent
//!   scheduling, HARQ blind retransmission and congestion control.
//! * [`sim`] — a deterministic discrete-event highway simulator tying the MAC
//!   models together over the shared channel, plus metrics collection.
//!
//! All stochastic components draw from counter-based ChaCha streams keyed by a
//! master seed, so every run is exactly reproducible.

pub mod analytic;
pub mod dot11p;
pub mod ltev2x;
pub mod propagation;
pub mod sim;
