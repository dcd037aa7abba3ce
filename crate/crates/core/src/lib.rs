pub mod cli;
pub mod gauss;
pub mod kronlin;
pub mod lowdisc;
pub mod market;
pub mod pathgen;
pub mod pricer;
