pub mod executor;
pub mod experiment;
pub mod knowledge;
pub mod planner;
pub mod spatial;
pub mod world;
