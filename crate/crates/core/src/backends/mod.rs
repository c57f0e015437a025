//! Concrete model backends: the exact rule-table oracle, a remote hosted
//! chat model with on-disk response caching, and frozen randomly initialized
//! recurrent and attention networks.

pub mod random_net;
pub mod remote;
pub mod rule_table;

pub use random_net::{RandomAttentionBackend, RandomRecurrentBackend};
pub use remote::{RemoteChatBackend, RemoteConfig};
pub use rule_table::RuleTableBackend;
