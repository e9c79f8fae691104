pub mod analysis;
pub mod archive;
pub mod cli;
pub mod evolve;
pub mod gateway;
pub mod jsonl;
pub mod runner;
pub mod server;
pub mod summary;
