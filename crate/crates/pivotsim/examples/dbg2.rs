use pivotsim::{
    grasp_until_threshold, initial_grip_threshold, make_pivot_geometry, sample_tactile,
    BoxSpec, ContactParams, Pivot, SensorParams, World,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let spec = BoxSpec::small();
    let geom = make_pivot_geometry(&spec, Pivot::LongToShort).unwrap();
    let contact = ContactParams::default();
    let mut w = World::new(spec.clone(), Pivot::LongToShort, contact.clone()).unwrap();
    let sensors = SensorParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // settle
    for _ in 0..175 {
        let s = w.state();
        let cmd = pivotsim::StepCommand {
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
    println!("threshold = {threshold}");
    let res = grasp_until_threshold(&mut w, threshold, &sensors, &mut rng);
    let s = w.state();
    println!(
        "grasp -> {res:?}; width={} grip_normal={} wrist={:?}",
        s.grip_width, s.grip_normal, s.wrist
    );
    let frames = sample_tactile(&s, &contact, &sensors, &mut rng);
    let mut total = 0.0;
    for f in &frames {
        for e in &f.elements {
            total += e.force.1;
        }
    }
    println!("frame total fy = {total}");
    for e in &frames[0].elements {
        println!(
            "  d=({:7.3},{:7.3},{:7.3}) f=({:6.3},{:6.3},{:6.3}) c={}",
            e.displacement.0,
            e.displacement.1,
            e.displacement.2,
            e.force.0,
            e.force.1,
            e.force.2,
            e.in_contact
        );
    }
}
