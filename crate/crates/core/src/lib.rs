//! Safety-rule compiler and runtime monitor for author-defined laparoscopic
//! training scenarios.

pub mod catalog;
pub mod geom;
pub mod harness;
pub mod model;
pub mod monitor;
pub mod report;
pub mod service;
pub mod specparse;
