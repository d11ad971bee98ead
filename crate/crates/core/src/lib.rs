pub mod batch;
pub mod canonical;
pub mod client;
pub mod discovery;
pub mod fixture;
pub mod http;
pub mod linkformat;
pub mod model;
pub mod registry;
pub mod report;
pub mod sampler;
pub mod transport;
