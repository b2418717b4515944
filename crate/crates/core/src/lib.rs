pub mod catalog;
pub mod composer;
pub mod diff;
pub mod drivers;
pub mod extract;
pub mod llm;
pub mod pdl;
pub mod renderer;
pub mod session;
