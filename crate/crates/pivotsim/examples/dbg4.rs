use pivotsim::{
    make_pivot_geometry, pick_place_clearance, BoxSpec, ContactParams, Pivot, StepCommand, World,
};

fn main() {
    let spec = BoxSpec::small();
    let geom = make_pivot_geometry(&spec, Pivot::LongToShort).unwrap();
    let contact = ContactParams::default();
    let mut w = World::new(spec.clone(), Pivot::LongToShort, contact.clone()).unwrap();
    println!("pivot_direction = {}", geom.pivot_direction);

    let hold = |w: &mut World, n: usize| {
        for _ in 0..n {
            let s = w.state();
            let cmd = StepCommand {
                tool: s.tool,
                tool_rot: s.tool_rot,
                grip_width: s.grip_width,
                dt: 0.002,
            };
            w.step(&cmd).unwrap();
        }
    };
    hold(&mut w, 175);
    w.grasp_rigid_at(geom.base / 2.0, geom.height).unwrap();
    let s0 = w.state();
    println!("after grasp: tool={:?} rot={} width={} FN={}", s0.tool, s0.rot, s0.grip_width, s0.grip_normal);

    // Lift straight up.
    let h = pick_place_clearance(&geom, contact.lift_tol);
    let mut tool = s0.tool;
    let target_z = tool.1 + h;
    while tool.1 < target_z {
        tool.1 = (tool.1 + contact.tool_v_max * 0.002).min(target_z);
        let cmd = StepCommand { tool, tool_rot: 0.0, grip_width: w.state().grip_width, dt: 0.002 };
        w.step(&cmd).unwrap();
    }
    hold(&mut w, 100);
    let s1 = w.state();
    println!(
        "after lift: tool={:?} rot={:.4} in_hand={:.4} torsion={:.4} wrist={:?} corner_h={:.4}",
        s1.tool, s1.rot, s1.in_hand_angle, s1.torsion_moment, s1.wrist, w.pivot_corner_height()
    );

    // Rotate the tool toward -dir * 90 deg.
    let target = -geom.pivot_direction * std::f64::consts::FRAC_PI_2;
    let n = (target.abs() / contact.tool_omega_max / 0.002).ceil() as usize;
    for k in 1..=n {
        let r = target * k as f64 / n as f64;
        let cmd = StepCommand { tool, tool_rot: r, grip_width: w.state().grip_width, dt: 0.002 };
        let ev = w.step(&cmd).unwrap();
        if k % 100 == 0 || ev.rotational_slip && k % 25 == 0 {
            let s = w.state();
            println!(
                "k={k:4} tool_rot={r:7.4} rot={:7.4} in_hand={:7.4} torsion={:7.4} rotslip={} corner_h={:.4}",
                s.rot, s.in_hand_angle, s.torsion_moment, s.flags.rotational_slipping, w.pivot_corner_height()
            );
        }
    }
    hold(&mut w, 100);
    let s2 = w.state();
    println!(
        "after rotation: rot={:.4} in_hand={:.4} torsion={:.4} dropped={}",
        s2.rot, s2.in_hand_angle, s2.torsion_moment, s2.flags.dropped
    );
}
