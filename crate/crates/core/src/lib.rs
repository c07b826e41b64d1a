//! Home-location inference for social-media users.
//!
//! The pipeline: load a corpus of users and their messages, select
//! location-indicative terms, train content and behavior classifiers, and
//! combine them into flat or hierarchical ensembles that predict a home
//! city, state, time zone, or region. Movement analysis flags traveling
//! users whose noisy evidence would otherwise drag accuracy down.

pub mod bundle;
pub mod classifiers;
pub mod corpus;
pub mod ensemble;
pub mod eval;
pub mod features;
pub mod movement;
