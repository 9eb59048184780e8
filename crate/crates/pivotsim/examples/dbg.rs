use pivotsim::{
    run_method, BoxSpec, ContactParams, ControlParams, Method, Pivot, SensorParams,
};

fn main() {
    let verbose = std::env::args().any(|a| a == "-v");
    let methods = Method::all();
    let boxes = [
        ("small", BoxSpec::small()),
        ("large", BoxSpec::large()),
        ("long", BoxSpec::long()),
    ];
    for (bname, spec) in &boxes {
        for pivot in [Pivot::LongToShort, Pivot::ShortToLong] {
            for noise in [0.0, 0.05] {
                for m in methods {
                    if m == Method::PickPlace && noise > 0.0 {
                        continue;
                    }
                    let run = run_method(
                        m,
                        spec,
                        pivot,
                        noise,
                        &ContactParams::default(),
                        &SensorParams::default(),
                        &ControlParams::default(),
                        7,
                    );
                    println!(
                        "{bname:5} {pivot:?} n={noise:4.2} {m:12} ok={} lift={} slip={} drop={} t={:6.1} W={:6.3} rot={:7.4} hang={:5.2}mm {}",
                        run.success as u8,
                        run.lifted as u8,
                        run.slipped_off as u8,
                        run.dropped as u8,
                        run.time_s,
                        run.work_j,
                        run.final_rot,
                        run.hang_peak_m * 1e3,
                        run.diagnostics.as_deref().unwrap_or("")
                    );
                    if verbose {
                        for (i, r) in run.trace.iter().enumerate() {
                            if i % 100 == 0 || i + 1 == run.trace.len() {
                                println!(
                                    "   t={:7.3} phi={:8.4} fz={:7.3} fid={:7.3} z={:8.4} w={:7.4} fl={:02x}",
                                    r.t, r.phi, r.fz_real, r.fz_ideal, r.z, r.grip_width, r.flags
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}
