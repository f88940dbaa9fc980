//! Bundled model graphs and grid designs, embedded so binaries work
//! without external asset paths. The same files ship under `cfg/` for
//! users who want to edit copies.

use crate::error::Result;
use crate::netdef::{parse_cfg, NetConfig};

/// The two-scale tiny detection graph for six ripening classes
/// (416×416 input, 13×13 and 26×26 heads).
pub const TINY_RIPENESS_CFG: &str = include_str!("../../../cfg/yolov3-tiny-ripeness.cfg");

/// Desk-scale single-head detector (32×32 input, 8×8 head) used for
/// grid-search experiments and end-to-end gradient checks.
pub const MICRO_RIPENESS_CFG: &str = include_str!("../../../cfg/micro-ripeness.cfg");

/// Exploratory grid design at full scale: {1e-3, 1e-5} × {adam, sgd},
/// 100 epochs, batch 64.
pub const GRID_EXPLORATORY: &str = include_str!("../../../cfg/grid-exploratory.json");

/// Exploitation grid design at full scale: {1e-3, 1e-4, 1e-5} × {adam},
/// 200 epochs, batch 64.
pub const GRID_EXPLOITATION: &str = include_str!("../../../cfg/grid-exploitation.json");

/// Desk-scale exploratory design: same factors, 30 epochs, batch 16.
pub const GRID_EXPLORATORY_DESK: &str = include_str!("../../../cfg/grid-exploratory-desk.json");

/// Desk-scale exploitation design: same factors, 30 epochs, batch 16.
pub const GRID_EXPLOITATION_DESK: &str = include_str!("../../../cfg/grid-exploitation-desk.json");

/// The six ripening classes in confusion-matrix index order.
pub const CLASS_NAMES: [&str; 6] = ["Red", "Red-orange", "Orange", "Striped", "Salmon", "Green"];

/// Parse the bundled two-scale tiny graph.
pub fn tiny_ripeness() -> Result<NetConfig> {
    parse_cfg(TINY_RIPENESS_CFG)
}

/// Parse the bundled desk-scale micro graph.
pub fn micro_ripeness() -> Result<NetConfig> {
    parse_cfg(MICRO_RIPENESS_CFG)
}
