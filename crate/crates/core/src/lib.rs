//! Compiler and cycle-accurate simulator for a tree-datapath DAG
//! processor with banked, automatically addressed register files.

pub mod dag;
pub mod ingest;
pub mod arch;
pub mod compiler;
pub mod sim;
pub mod dse;
pub mod selftest;
