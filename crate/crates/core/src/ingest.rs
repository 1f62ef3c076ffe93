//! Delimited-text readers and writers for stops, segments, rates and zones.
//!
//! Every file is comma-separated UTF-8 with a mandatory header row. Writers
//! emit LF line endings and render times as `HH:MM:SS`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Seconds, Stop, TransferRates, TripSegment, ZoneMap};

pub use crate::model::StopRegistry;

pub(crate) fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        ));
    }
    Ok(reader)
}

/// Yields `(line, record)` pairs, mapping csv errors to parse errors.
pub(crate) fn records<'a>(
    path: &'a Path,
    reader: &'a mut csv::Reader<File>,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'a {
    reader.records().map(move |r| {
        r.map(|rec| {
            let line = rec.position().map_or(0, |p| p.line());
            (line, rec)
        })
        .map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, e.to_string())
        })
    })
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn finish(path: &Path, mut out: BufWriter<File>) -> Result<()> {
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

/// Parses `HH:MM:SS`; hours may exceed 23.
pub fn parse_time(s: &str) -> Option<Seconds> {
    let mut parts = s.split(':');
    let h: Seconds = parts.next()?.parse().ok()?;
    let m: Seconds = parts.next()?.parse().ok()?;
    let sec: Seconds = parts.next()?.parse().ok()?;
    if parts.next().is_some() || h < 0 || !(0..60).contains(&m) || !(0..60).contains(&sec) {
        return None;
    }
    Some(h * 3600 + m * 60 + sec)
}

pub fn format_time(t: Seconds) -> String {
    format!("{:02}:{:02}:{:02}", t / 3600, (t / 60) % 60, t % 60)
}

fn parse_coord(path: &Path, line: u64, name: &str, raw: &str, bound: f64) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(path, line, format!("unparsable {name} `{raw}`")))?;
    if !v.is_finite() || v.abs() > bound {
        return Err(Error::parse(
            path,
            line,
            format!("{name} {v} outside [-{bound}, {bound}]"),
        ));
    }
    Ok(v)
}

const STOPS_HEADER: [&str; 4] = ["stop_id", "lat", "lon", "is_transit_center"];

pub fn parse_stops(path: &Path) -> Result<StopRegistry> {
    let mut reader = open_csv(path, &STOPS_HEADER)?;
    let mut stops = Vec::new();
    let mut seen = HashSet::new();
    for row in records(path, &mut reader) {
        let (line, rec) = row?;
        let id = rec[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate stop_id `{id}`")));
        }
        let lat = parse_coord(path, line, "lat", &rec[1], 90.0)?;
        let lon = parse_coord(path, line, "lon", &rec[2], 180.0)?;
        let center = parse_bool(&rec[3]).ok_or_else(|| {
            Error::parse(path, line, format!("bad is_transit_center `{}`", &rec[3]))
        })?;
        stops.push(Stop {
            stop_id: id,
            lat,
            lon,
            is_transit_center: center,
        });
    }
    Ok(StopRegistry::new(stops).expect("duplicates rejected above"))
}

pub fn write_stops(registry: &StopRegistry, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", STOPS_HEADER.join(",")).map_err(io)?;
    for s in registry.stops() {
        writeln!(
            out,
            "{},{},{},{}",
            s.stop_id, s.lat, s.lon, s.is_transit_center as u8
        )
        .map_err(io)?;
    }
    finish(path, out)
}

/// Converts a GTFS `stops.txt` into a registry, flagging the listed ids as
/// transit centers. Rows without coordinates (stations without a platform
/// position, for instance) are skipped.
pub fn convert_gtfs_stops(path: &Path, centers: &[&str]) -> Result<StopRegistry> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column `{name}`")))
    };
    let (id_col, lat_col, lon_col) = (col("stop_id")?, col("stop_lat")?, col("stop_lon")?);
    let mut stops = Vec::new();
    for row in records(path, &mut reader) {
        let (line, rec) = row?;
        let (lat, lon) = (rec.get(lat_col).unwrap_or(""), rec.get(lon_col).unwrap_or(""));
        if lat.is_empty() || lon.is_empty() {
            continue;
        }
        let id = rec.get(id_col).unwrap_or("").to_string();
        stops.push(Stop {
            is_transit_center: centers.contains(&id.as_str()),
            stop_id: id,
            lat: parse_coord(path, line, "stop_lat", lat, 90.0)?,
            lon: parse_coord(path, line, "stop_lon", lon, 180.0)?,
        });
    }
    StopRegistry::new(stops).map_err(|id| Error::input(path, format!("duplicate stop_id `{id}`")))
}

const SEGMENTS_HEADER: [&str; 6] = [
    "segment_id",
    "route_id",
    "board_stop",
    "alight_stop",
    "board_time",
    "alight_time",
];

pub fn parse_segments(path: &Path, registry: &StopRegistry) -> Result<Vec<TripSegment>> {
    let mut reader = open_csv(path, &SEGMENTS_HEADER)?;
    let mut segments = Vec::new();
    for row in records(path, &mut reader) {
        let (line, rec) = row?;
        for stop in [&rec[2], &rec[3]] {
            if !registry.contains(stop) {
                return Err(Error::parse(path, line, format!("unknown stop `{stop}`")));
            }
        }
        let time = |i: usize| {
            parse_time(&rec[i])
                .ok_or_else(|| Error::parse(path, line, format!("bad time `{}`", &rec[i])))
        };
        let (board_time, alight_time) = (time(4)?, time(5)?);
        if alight_time < board_time {
            return Err(Error::parse(
                path,
                line,
                format!("segment `{}` alights before it boards", &rec[0]),
            ));
        }
        if rec[2] == rec[3] {
            return Err(Error::parse(
                path,
                line,
                format!("segment `{}` boards and alights at the same stop", &rec[0]),
            ));
        }
        segments.push(TripSegment {
            segment_id: rec[0].to_string(),
            route_id: rec[1].to_string(),
            board_stop: rec[2].to_string(),
            alight_stop: rec[3].to_string(),
            board_time,
            alight_time,
        });
    }
    Ok(segments)
}

pub fn write_segments(segments: &[TripSegment], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", SEGMENTS_HEADER.join(",")).map_err(io)?;
    for s in segments {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.segment_id,
            s.route_id,
            s.board_stop,
            s.alight_stop,
            format_time(s.board_time),
            format_time(s.alight_time)
        )
        .map_err(io)?;
    }
    finish(path, out)
}

const RATES_HEADER: [&str; 3] = ["scope", "stop_id", "rate"];

pub fn parse_rates(path: &Path, registry: &StopRegistry) -> Result<TransferRates> {
    let mut reader = open_csv(path, &RATES_HEADER)?;
    let mut rates = TransferRates::default();
    let mut other = None;
    for row in records(path, &mut reader) {
        let (line, rec) = row?;
        let rate: f64 = rec[2]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("unparsable rate `{}`", &rec[2])))?;
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::parse(path, line, format!("rate {rate} outside [0, 1]")));
        }
        match &rec[0] {
            "center" => {
                let id = &rec[1];
                match registry.get(id) {
                    Some(s) if s.is_transit_center => {}
                    Some(_) => {
                        return Err(Error::parse(
                            path,
                            line,
                            format!("stop `{id}` is not a transit center"),
                        ))
                    }
                    None => return Err(Error::parse(path, line, format!("unknown stop `{id}`"))),
                }
                if rates.centers.insert(id.to_string(), rate).is_some() {
                    return Err(Error::parse(path, line, format!("duplicate rate for `{id}`")));
                }
            }
            "other" => {
                if !rec[1].is_empty() {
                    return Err(Error::parse(path, line, "`other` row must have an empty stop_id"));
                }
                if other.replace(rate).is_some() {
                    return Err(Error::parse(path, line, "more than one `other` row"));
                }
            }
            scope => {
                return Err(Error::parse(path, line, format!("unknown scope `{scope}`")));
            }
        }
    }
    rates.other = other.ok_or_else(|| Error::input(path, "missing `other` row"))?;
    Ok(rates)
}

pub fn write_rates(rates: &TransferRates, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", RATES_HEADER.join(",")).map_err(io)?;
    for (id, rate) in &rates.centers {
        writeln!(out, "center,{id},{rate}").map_err(io)?;
    }
    writeln!(out, "other,,{}", rates.other).map_err(io)?;
    finish(path, out)
}

const ZONES_HEADER: [&str; 2] = ["stop_id", "zone_id"];

pub fn parse_zones(path: &Path, registry: &StopRegistry) -> Result<ZoneMap> {
    let mut reader = open_csv(path, &ZONES_HEADER)?;
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for row in records(path, &mut reader) {
        let (line, rec) = row?;
        let stop = rec[0].to_string();
        if !registry.contains(&stop) {
            return Err(Error::parse(path, line, format!("unknown stop `{stop}`")));
        }
        if !seen.insert(stop.clone()) {
            return Err(Error::parse(path, line, format!("duplicate stop `{stop}`")));
        }
        pairs.push((stop, rec[1].to_string()));
    }
    let missing: Vec<&str> = registry
        .stops()
        .iter()
        .filter(|s| !seen.contains(&s.stop_id))
        .map(|s| s.stop_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::input(
            path,
            format!("stops missing from zone map: {}", missing.join(", ")),
        ));
    }
    Ok(ZoneMap::from_pairs(pairs).expect("duplicates rejected above"))
}

pub fn write_zones(zones: &ZoneMap, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", ZONES_HEADER.join(",")).map_err(io)?;
    for (stop, z) in zones.entries() {
        writeln!(out, "{stop},{}", zones.zones()[*z]).map_err(io)?;
    }
    finish(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::TempDir;

    fn write(dir: &TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn three_stops(dir: &TempDir) -> StopRegistry {
        let p = write(
            dir,
            "stops.csv",
            "stop_id,lat,lon,is_transit_center\nA,42.28,-83.74,0\nB,42.29,-83.73,false\nBTC,42.279,-83.745,TRUE\n",
        );
        parse_stops(&p).unwrap()
    }

    #[test]
    fn stops_parse_in_order() {
        let dir = TempDir::new().unwrap();
        let p = write(
            &dir,
            "s.csv",
            "stop_id,lat,lon,is_transit_center\nA,42.28,-83.74,0\nBTC,42.279,-83.745,1\n",
        );
        let reg = parse_stops(&p).unwrap();
        assert_eq!(reg.len(), 2);
        assert_eq!(reg.centers().count(), 1);
        assert_eq!(reg.stops()[1].stop_id, "BTC");
    }

    #[test]
    fn duplicate_stop_is_rejected() {
        let dir = TempDir::new().unwrap();
        let p = write(
            &dir,
            "s.csv",
            "stop_id,lat,lon,is_transit_center\nBTC,42.28,-83.74,1\nBTC,42.279,-83.745,1\n",
        );
        let err = parse_stops(&p).unwrap_err().to_string();
        assert!(err.contains("duplicate stop_id `BTC`"), "{err}");
    }

    #[test]
    fn latitude_out_of_range_names_line() {
        let dir = TempDir::new().unwrap();
        let p = write(
            &dir,
            "s.csv",
            "stop_id,lat,lon,is_transit_center\nA,42.28,-83.74,0\nB,95.0,-83.74,0\n",
        );
        match parse_stops(&p).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("lat"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn segment_times_convert_to_seconds() {
        let dir = TempDir::new().unwrap();
        let reg = three_stops(&dir);
        let p = write(
            &dir,
            "seg.csv",
            "segment_id,route_id,board_stop,alight_stop,board_time,alight_time\ns1,R4,A,B,08:00:00,08:17:00\ns2,R4,A,B,25:10:00,25:20:00\n",
        );
        let segs = parse_segments(&p, &reg).unwrap();
        assert_eq!(segs[0].board_time, 28_800);
        assert_eq!(segs[0].alight_time, 29_820);
        assert_eq!(segs[1].board_time, 90_600);
    }

    #[test]
    fn segment_with_unknown_stop_fails() {
        let dir = TempDir::new().unwrap();
        let reg = three_stops(&dir);
        let p = write(
            &dir,
            "seg.csv",
            "segment_id,route_id,board_stop,alight_stop,board_time,alight_time\ns1,R4,ZZZ,B,08:00:00,08:17:00\n",
        );
        let err = parse_segments(&p, &reg).unwrap_err().to_string();
        assert!(err.contains("unknown stop `ZZZ`"), "{err}");
    }

    #[test]
    fn segment_alighting_before_boarding_fails() {
        let dir = TempDir::new().unwrap();
        let reg = three_stops(&dir);
        let p = write(
            &dir,
            "seg.csv",
            "segment_id,route_id,board_stop,alight_stop,board_time,alight_time\ns1,R4,A,B,08:00:00,07:59:59\n",
        );
        assert!(parse_segments(&p, &reg).is_err());
    }

    fn rates_registry() -> StopRegistry {
        StopRegistry::new(vec![
            Stop {
                stop_id: "BTC".into(),
                lat: 42.279,
                lon: -83.745,
                is_transit_center: true,
            },
            Stop {
                stop_id: "YTC".into(),
                lat: 42.241,
                lon: -83.613,
                is_transit_center: true,
            },
            Stop {
                stop_id: "A".into(),
                lat: 42.28,
                lon: -83.74,
                is_transit_center: false,
            },
        ])
        .unwrap()
    }

    #[test]
    fn go_pass_and_period_pass_rates() {
        let dir = TempDir::new().unwrap();
        let reg = rates_registry();
        let p = write(
            &dir,
            "r.csv",
            "scope,stop_id,rate\ncenter,BTC,0.232\ncenter,YTC,0.591\nother,,0.062\n",
        );
        let r = parse_rates(&p, &reg).unwrap();
        assert_eq!(r.centers["BTC"], 0.232);
        assert_eq!(r.centers["YTC"], 0.591);
        assert_eq!(r.other, 0.062);

        let p = write(
            &dir,
            "r2.csv",
            "scope,stop_id,rate\ncenter,BTC,0.588\ncenter,YTC,0.554\nother,,0.143\n",
        );
        let r = parse_rates(&p, &reg).unwrap();
        assert_eq!(r.centers["BTC"], 0.588);
        assert_eq!(r.centers["YTC"], 0.554);
        assert_eq!(r.other, 0.143);
    }

    #[test]
    fn rate_errors() {
        let dir = TempDir::new().unwrap();
        let reg = rates_registry();
        let negative = write(&dir, "a.csv", "scope,stop_id,rate\ncenter,BTC,-0.1\nother,,0.1\n");
        assert!(parse_rates(&negative, &reg).is_err());
        let not_center = write(&dir, "b.csv", "scope,stop_id,rate\ncenter,A,0.1\nother,,0.1\n");
        let err = parse_rates(&not_center, &reg).unwrap_err().to_string();
        assert!(err.contains("not a transit center"), "{err}");
        let no_other = write(&dir, "c.csv", "scope,stop_id,rate\ncenter,BTC,0.1\n");
        let err = parse_rates(&no_other, &reg).unwrap_err().to_string();
        assert!(err.contains("missing `other`"), "{err}");
    }

    #[test]
    fn zones_parse_and_report_missing() {
        let dir = TempDir::new().unwrap();
        let reg = three_stops(&dir);
        let p = write(&dir, "z.csv", "stop_id,zone_id\nA,z1\nB,z2\nBTC,z1\n");
        let zm = parse_zones(&p, &reg).unwrap();
        assert_eq!(zm.len(), 2);
        assert_eq!(zm.zone_id_of("BTC"), Some("z1"));

        let p = write(&dir, "z2.csv", "stop_id,zone_id\nA,z1\nBTC,z1\n");
        let err = parse_zones(&p, &reg).unwrap_err().to_string();
        assert!(err.contains("missing") && err.contains('B'), "{err}");

        let p = write(&dir, "z3.csv", "stop_id,zone_id\nA,z1\nA,z2\nB,z1\nBTC,z1\n");
        assert!(parse_zones(&p, &reg).is_err());
    }

    #[test]
    fn identity_zone_map_round_trips() {
        let dir = TempDir::new().unwrap();
        let reg = three_stops(&dir);
        let zm = ZoneMap::identity(&reg);
        let p = dir.path().join("id.csv");
        write_zones(&zm, &p).unwrap();
        assert_eq!(parse_zones(&p, &reg).unwrap(), zm);
        assert_eq!(zm.len(), reg.len());
    }

    #[test]
    fn gtfs_stops_conversion() {
        let dir = TempDir::new().unwrap();
        let p = write(
            &dir,
            "stops.txt",
            "\u{feff}stop_id,stop_name,stop_lat,stop_lon\nBTC,Blake,42.279,-83.745\nP1,Parent,,\nA,Main,42.28,-83.74\n",
        );
        let reg = convert_gtfs_stops(&p, &["BTC"]).unwrap();
        assert_eq!(reg.len(), 2);
        assert!(reg.get("BTC").unwrap().is_transit_center);
        assert!(!reg.get("A").unwrap().is_transit_center);
    }

    fn arb_id() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z0-9_]{0,6}"
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stops_and_segments_round_trip(
            coords in prop::collection::vec((-90.0f64..=90.0, -180.0f64..=180.0, any::<bool>()), 2..8),
            times in prop::collection::vec((0i64..120_000, 0i64..4_000), 1..10),
            ids in prop::collection::hash_set(arb_id(), 8..16),
        ) {
            let dir = TempDir::new().unwrap();
            let ids: Vec<String> = ids.into_iter().collect();
            let stops: Vec<Stop> = coords
                .iter()
                .zip(&ids)
                .map(|(&(lat, lon, c), id)| Stop { stop_id: id.clone(), lat, lon, is_transit_center: c })
                .collect();
            let reg = StopRegistry::new(stops).unwrap();
            let sp = dir.path().join("stops.csv");
            write_stops(&reg, &sp).unwrap();
            let back = parse_stops(&sp).unwrap();
            prop_assert_eq!(&back, &reg);

            let segs: Vec<TripSegment> = times
                .iter()
                .enumerate()
                .map(|(i, &(s, d))| TripSegment {
                    segment_id: format!("s{i}"),
                    route_id: format!("R{}", i % 3),
                    board_stop: reg.stops()[0].stop_id.clone(),
                    alight_stop: reg.stops()[1].stop_id.clone(),
                    board_time: s,
                    alight_time: s + d,
                })
                .collect();
            let gp = dir.path().join("seg.csv");
            write_segments(&segs, &gp).unwrap();
            prop_assert_eq!(parse_segments(&gp, &reg).unwrap(), segs);

            let rates = TransferRates {
                centers: reg.centers().map(|s| (s.stop_id.clone(), (s.lat + 90.0) / 180.0)).collect(),
                other: (coords[0].1 + 180.0) / 360.0,
            };
            let rp = dir.path().join("rates.csv");
            write_rates(&rates, &rp).unwrap();
            prop_assert_eq!(parse_rates(&rp, &reg).unwrap(), rates);
        }
    }
}
