//! Stop- or zone-level O-D matrices from solved transfer structures.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{create, finish, open_csv, records};
use crate::model::{OdMatrix, Role, RoundedSolution, TransferAssignment, TripSegment, ZoneMap};

fn zone(zone_map: &ZoneMap, stop: &str) -> Result<usize> {
    zone_map
        .zone_of(stop)
        .ok_or_else(|| Error::ZoneMismatch(format!("stop {stop} has no zone")))
}

/// Counts every trip once: a singleton from its boarding to its alighting
/// zone, a two-legged trip from the first leg's boarding to the second
/// leg's alighting zone.
pub fn assemble_od_integral(
    segments: &[TripSegment],
    assignment: &TransferAssignment,
    zone_map: &ZoneMap,
) -> Result<OdMatrix> {
    let mut od = OdMatrix::new(zone_map.clone());
    for (j, role) in assignment.roles().into_iter().enumerate() {
        let dest = match role {
            Role::SecondLeg => continue,
            Role::Singleton => &segments[j].alight_stop,
            Role::FirstLeg => {
                let k = assignment.transfer_to[j].expect("first leg has a successor");
                &segments[k].alight_stop
            }
        };
        od.add(
            zone(zone_map, &segments[j].board_stop)?,
            zone(zone_map, dest)?,
            1.0,
        );
    }
    Ok(od)
}

/// Singletons count once; each distributed first leg spreads one trip over
/// its second-leg candidates by probability.
pub fn assemble_od_fractional(
    segments: &[TripSegment],
    rounded: &RoundedSolution,
    zone_map: &ZoneMap,
) -> Result<OdMatrix> {
    let mut od = OdMatrix::new(zone_map.clone());
    for (j, role) in rounded.roles.iter().enumerate() {
        let origin = zone(zone_map, &segments[j].board_stop)?;
        match role {
            Role::SecondLeg => {}
            Role::Singleton => od.add(origin, zone(zone_map, &segments[j].alight_stop)?, 1.0),
            Role::FirstLeg => {
                for &(k, p) in rounded.probs.get(&j).map_or(&[][..], |v| v) {
                    od.add(origin, zone(zone_map, &segments[k].alight_stop)?, p);
                }
            }
        }
    }
    Ok(od)
}

/// Writes `origin_zone,dest_zone,flow` sorted by zone ids; zeros omitted.
pub fn write_od_csv(od: &OdMatrix, path: &Path) -> Result<()> {
    let zones = od.zone_map.zones();
    let mut rows: Vec<(&str, &str, f64)> = od
        .flow
        .iter()
        .filter(|(_, &v)| v != 0.0)
        .map(|(&(o, d), &v)| (zones[o].as_str(), zones[d].as_str(), v))
        .collect();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "origin_zone,dest_zone,flow")?;
        for (o, d, v) in &rows {
            writeln!(out, "{o},{d},{v}")?;
        }
        Ok(())
    };
    write().map_err(|e| Error::io(path, e))?;
    finish(path, out)
}

/// Reads an O-D CSV over the zones of `zone_map`.
pub fn parse_od_csv(path: &Path, zone_map: &ZoneMap) -> Result<OdMatrix> {
    let mut reader = open_csv(path, &["origin_zone", "dest_zone", "flow"])?;
    let pos: std::collections::HashMap<&str, usize> = zone_map
        .zones()
        .iter()
        .enumerate()
        .map(|(i, z)| (z.as_str(), i))
        .collect();
    let mut od = OdMatrix::new(zone_map.clone());
    for rec in records(path, &mut reader) {
        let (line, rec) = rec?;
        let lookup = |i: usize| {
            pos.get(&rec[i])
                .copied()
                .ok_or_else(|| Error::parse(path, line, format!("unknown zone {}", &rec[i])))
        };
        let (o, d) = (lookup(0)?, lookup(1)?);
        let v: f64 = rec[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| Error::parse(path, line, format!("bad flow {}", &rec[2])))?;
        od.add(o, d, v);
    }
    Ok(od)
}
