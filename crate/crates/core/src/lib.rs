pub mod bench;
pub mod codec;
pub mod msgdef;
pub mod runtime;
pub mod topology;
