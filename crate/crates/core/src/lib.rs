pub mod benchmark;
pub mod chemclass;
pub mod explore;
pub mod fingerprint;
pub mod genops;
pub mod molgraph;
pub mod ngramgen;
pub mod qspr;
pub mod scoring;
