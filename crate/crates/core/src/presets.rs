//! Shipped netlists with the reference transmitter component values.

use crate::error::Result;
use crate::netlist::Netlist;

/// Source, series RF switch and matching network feeding the antenna model.
pub const REFERENCE_DAM: &str = include_str!("../data/reference_dam.toml");
/// OFF-state network with the switch's source side tied to ground.
pub const REFERENCE_OFF: &str = include_str!("../data/reference_off.toml");
/// RF switch plus a complementary branch to an ideal DC source.
pub const REFERENCE_DCDAM: &str = include_str!("../data/reference_dcdam.toml");

pub fn reference_dam() -> Result<Netlist> {
    Netlist::from_toml(REFERENCE_DAM)
}

pub fn reference_off() -> Result<Netlist> {
    Netlist::from_toml(REFERENCE_OFF)
}

pub fn reference_dcdam() -> Result<Netlist> {
    Netlist::from_toml(REFERENCE_DCDAM)
}

/// Elements treated as board and switch parasitics.
pub const PARASITIC_CAPACITORS: [&str; 3] = ["C_L1", "C_L2", "C_s"];

/// Scale the parasitic capacitors and every switch's parallel capacitance by `factor`.
pub fn scale_parasitics(netlist: &mut Netlist, factor: f64) {
    for id in PARASITIC_CAPACITORS {
        if let Some(e) = netlist.element_mut(id) {
            e.value *= factor;
        }
    }
    for sw in &mut netlist.switches {
        if let Some(c) = sw.c_parallel.as_mut() {
            *c *= factor;
        }
    }
}
