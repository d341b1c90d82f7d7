//! Benchmark suite for reinforcement-learning based horizontal scaling.
//!
//! The crate bundles a discrete-time replica/queue simulator ([`sim`]), the
//! episodic environment built on it ([`env`]), three reward functions
//! ([`rewards`]), from-scratch DQN and PPO agents plus baselines ([`agents`]),
//! and the train/validate/select pipeline ([`methodology`], [`pipeline`]).

pub mod agents;
pub mod bridge;
pub mod config;
pub mod env;
pub mod exec;
pub mod methodology;
pub mod pipeline;
pub mod rewards;
pub mod sim;
pub mod stats;
pub mod workload;
