use pivotsim::{
    run_method, BoxSpec, ContactParams, ControlParams, Method, Pivot, SensorParams,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let method = Method::parse(args.get(1).map(|s| s.as_str()).unwrap_or("open_loop")).unwrap();
    let pivot = match args.get(2).map(|s| s.as_str()).unwrap_or("s2l") {
        "l2s" => Pivot::LongToShort,
        _ => Pivot::ShortToLong,
    };
    let spec = match args.get(3).map(|s| s.as_str()).unwrap_or("small") {
        "large" => BoxSpec::large(),
        "long" => BoxSpec::long(),
        _ => BoxSpec::small(),
    };
    let noise: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let run = run_method(
        method,
        &spec,
        pivot,
        noise,
        &ContactParams::default(),
        &SensorParams::default(),
        &ControlParams::default(),
        7,
    );
    println!(
        "ok={} lift={} slip={} drop={} t={:.1} W={:.3} rot={:.4} diag={:?}",
        run.success as u8, run.lifted as u8, run.slipped_off as u8, run.dropped as u8,
        run.time_s, run.work_j, run.final_rot, run.diagnostics
    );
    let n = run.trace.len();
    for (i, r) in run.trace.iter().enumerate() {
        if i % 25 == 0 || i + 20 >= n {
            println!(
                "i={i:4} t={:7.3} phi={:8.4} fz={:8.3} fid={:7.3} x={:8.4} z={:8.4} w={:7.4} fl={:02x}",
                r.t, r.phi, r.fz_real, r.fz_ideal, r.x, r.z, r.grip_width, r.flags
            );
        }
    }
}
