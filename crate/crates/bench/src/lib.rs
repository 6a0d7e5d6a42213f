pub use mnemo_core as core;
