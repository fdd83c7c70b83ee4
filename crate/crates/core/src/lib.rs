pub mod adversary;
pub mod checkers;
pub mod config;
pub mod encoding;
pub mod engine;
pub mod env;
pub mod error;
pub mod gorilla;
pub mod mappings;
pub mod message;
pub mod node;
pub mod oracle;
pub mod presets;
pub mod sandglass;
pub mod trace;
pub mod types;
