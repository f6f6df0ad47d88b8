pub mod gap;
pub mod link;
pub mod nav;
pub mod scenario;
pub mod service;
pub mod sim;
pub mod stats;
pub mod stim;
