//! Off-policy agent: prioritized replay, self-imitation store, TD3 updates.

mod replay;
mod td3;
mod topk;

pub use replay::{PerSample, PrioritizedReplay, SumTree, Transition};
pub use td3::{Td3Agent, Td3Config, UpdateStats};
pub use topk::{DemoStore, EpisodeRecord, TopKBuffer};
