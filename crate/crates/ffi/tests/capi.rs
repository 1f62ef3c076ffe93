use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::ptr;

use odflow_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = odflow_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Two legs that connect at s1 and one unrelated trip.
fn write_instance(dir: &Path) {
    fs::write(
        dir.join("stops.csv"),
        "stop_id,lat,lon,is_transit_center\n\
         s0,42.280,-83.740,false\n\
         s1,42.290,-83.740,true\n\
         s2,42.300,-83.740,false\n\
         s3,42.400,-83.740,false\n",
    )
    .unwrap();
    fs::write(
        dir.join("segments.csv"),
        "segment_id,route_id,board_stop,alight_stop,board_time,alight_time\n\
         a,R1,s0,s1,08:00:00,08:10:00\n\
         b,R2,s1,s2,08:15:00,08:25:00\n\
         c,R3,s3,s2,09:00:00,09:20:00\n",
    )
    .unwrap();
    fs::write(
        dir.join("rates.csv"),
        "scope,stop_id,rate\ncenter,s1,1\nother,,0\n",
    )
    .unwrap();
}

unsafe fn load(dir: &Path) -> *mut OdflowInstance {
    let mut inst = ptr::null_mut();
    let st = odflow_instance_load(
        cstr(&dir.join("stops.csv")).as_ptr(),
        cstr(&dir.join("segments.csv")).as_ptr(),
        cstr(&dir.join("rates.csv")).as_ptr(),
        402.0,
        1800,
        &mut inst,
    );
    assert_eq!(st, OdflowStatus::Ok, "{}", last_error());
    inst
}

#[test]
fn ip_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_instance(dir.path());
    unsafe {
        let inst = load(dir.path());
        assert_eq!(odflow_instance_segment_count(inst), 3);
        assert_eq!(odflow_instance_arc_count(inst), 1);

        let mut res = ptr::null_mut();
        assert_eq!(odflow_solve_ip(inst, &mut res), OdflowStatus::Ok);
        assert_eq!(odflow_result_objective(res), 0.0);
        assert_eq!(odflow_result_total_trips(res), 2.0);
        assert_eq!(odflow_result_entry_count(res), 2);
        let (s0, s2, s3) = (c"s0", c"s2", c"s3");
        assert_eq!(odflow_result_flow(res, s0.as_ptr(), s2.as_ptr()), 1.0);
        assert_eq!(odflow_result_flow(res, s3.as_ptr(), s2.as_ptr()), 1.0);
        assert_eq!(odflow_result_flow(res, ptr::null(), s2.as_ptr()), 0.0);

        let out = dir.path().join("od.csv");
        assert_eq!(odflow_result_write_csv(res, cstr(&out).as_ptr()), OdflowStatus::Ok);
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("origin_zone,dest_zone,flow\n"));
        assert!(text.contains("s0,s2,1\n"));

        odflow_result_free(res);
        odflow_instance_free(inst);
    }
}

#[test]
fn qcp_matches_ip_on_easy_instance() {
    let dir = tempfile::tempdir().unwrap();
    write_instance(dir.path());
    unsafe {
        let inst = load(dir.path());
        let mut res = ptr::null_mut();
        assert_eq!(odflow_solve_qcp(inst, 1e-8, 10_000, &mut res), OdflowStatus::Ok);
        assert!(odflow_result_objective(res) < 1e-6);
        assert!((odflow_result_total_trips(res) - 2.0).abs() < 1e-9);
        assert!(odflow_result_wall_time(res) >= 0.0);
        odflow_result_free(res);

        assert_eq!(odflow_solve_qcp(inst, 0.0, 10, &mut res), OdflowStatus::Config);
        assert!(res.is_null());
        odflow_instance_free(inst);
    }
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_instance(dir.path());
    unsafe {
        let mut inst = ptr::null_mut();
        let missing = cstr(&dir.path().join("nope.csv"));
        let st = odflow_instance_load(
            missing.as_ptr(),
            missing.as_ptr(),
            missing.as_ptr(),
            402.0,
            1800,
            &mut inst,
        );
        assert_eq!(st, OdflowStatus::Input);
        assert!(inst.is_null());
        assert!(last_error().contains("nope.csv"));

        let st = odflow_instance_load(ptr::null(), ptr::null(), ptr::null(), 1.0, 1, &mut inst);
        assert_eq!(st, OdflowStatus::NullArgument);
        assert!(last_error().contains("stops_csv"));

        let mut res = ptr::null_mut();
        assert_eq!(odflow_solve_ip(ptr::null(), &mut res), OdflowStatus::NullArgument);

        fs::write(dir.path().join("bad.toml"), "seed = \"x\"\n").unwrap();
        let st = odflow_run_config(cstr(&dir.path().join("bad.toml")).as_ptr());
        assert_eq!(st, OdflowStatus::Config);
        assert!(last_error().contains("seed"));

        // freeing null is a no-op
        odflow_instance_free(ptr::null_mut());
        odflow_result_free(ptr::null_mut());
        assert_eq!(odflow_instance_segment_count(ptr::null()), 0);
    }
}

#[test]
fn header_is_generated() {
    let h = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/odflow.h")).unwrap();
    for name in ["odflow_instance_load", "odflow_solve_qcp", "odflow_last_error", "ODFLOW_STATUS_OK"] {
        assert!(h.contains(name), "{name} missing from header");
    }
}
