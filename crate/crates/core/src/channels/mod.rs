//! Channel synthesis: path loss, array responses, Rician and geometric
//! fading, and the double-IRS / single-IRS channel sets built from a
//! scenario.

mod array;
mod links;
mod scenario;
mod set;

pub use array::{array_response, random_hemisphere_direction, ArrayKind, PlacedArray};
pub use links::{geometric_link, path_loss_linear, rician_link};
pub use scenario::{
    db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm, ChannelModel, Link, LinkConfig,
    LinkConfigs, LinkParams, LinkTable, ScenarioConfig, SystemScenario,
};
pub use set::{
    build_double_irs, draw_user_positions, single_irs_baseline_a1, single_irs_baseline_a2,
    BaselineRanks, ChannelSet,
};
