//! Navigation engine whose MPC cost function is generated and retuned from
//! natural-language instructions.

pub mod assistants;
pub mod dsl;
pub mod mpc;
pub mod sim;
pub mod world;
