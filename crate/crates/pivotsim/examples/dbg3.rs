use pivotsim::{
    grasp_until_threshold, initial_grip_threshold, make_pivot_geometry, sample_tactile,
    BoxSpec, ContactParams, ControlParams, GripperCtl, Pivot, SensorParams, StepCommand, World,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let spec = BoxSpec::small();
    let geom = make_pivot_geometry(&spec, Pivot::LongToShort).unwrap();
    let contact = ContactParams::default();
    let ctl = ControlParams::default();
    let mut w = World::new(spec.clone(), Pivot::LongToShort, contact.clone()).unwrap();
    let sensors = SensorParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    for _ in 0..175 {
        let s = w.state();
        let cmd = StepCommand {
            tool: s.tool,
            tool_rot: 0.0,
            grip_width: s.grip_width,
            dt: 0.002,
        };
        w.step(&cmd).unwrap();
    }
    let seat = w.point_world(geom.base, geom.height);
    w.set_tool_pose(seat, 0.0).unwrap();
    let threshold = initial_grip_threshold(&geom, &spec, 1.5);
    grasp_until_threshold(&mut w, threshold, &sensors, &mut rng).unwrap();
    let mut g = GripperCtl::new(w.state().grip_width);

    // Hold for 50 ticks, then crawl up-right like the first arc segment.
    let mut tool = w.state().tool;
    for k in 0..400 {
        if k >= 50 {
            tool.0 += 2.0e-5;
            tool.1 += 4.5e-5;
        }
        let cmd = StepCommand {
            tool,
            tool_rot: 0.0,
            grip_width: g.width,
            dt: 0.002,
        };
        let ev = w.step(&cmd).unwrap();
        let s = w.state();
        let frames = sample_tactile(&s, &contact, &sensors, &mut rng);
        let mut maxd: (f64, f64, f64) = (0.0, 0.0, 0.0);
        for f in &frames {
            for e in &f.elements {
                maxd.0 = maxd.0.max(e.displacement.0.abs());
                maxd.1 = maxd.1.max(e.displacement.1.abs());
                maxd.2 = maxd.2.max(e.displacement.2.abs());
            }
        }
        let before = (g.tighten_events, g.loosen_events);
        g.step(&frames, &contact, &ctl);
        let after = (g.tighten_events, g.loosen_events);
        if after != before || k % 50 == 0 {
            println!(
                "k={k:3} w={:.5} FN={:7.3} rot_slip={} trans_slip={} maxd=({:6.2},{:6.2},{:6.2}) ev={:?} t/l={:?}",
                g.width,
                s.grip_normal,
                s.flags.rotational_slipping,
                s.flags.translational_slipping,
                maxd.0,
                maxd.1,
                maxd.2,
                ev,
                after
            );
        }
    }
    let s = w.state();
    println!("final rot={} grip_normal={} width={}", s.rot, s.grip_normal, s.grip_width);
}
