//! Sensor simulation and local costmap fusion checked against hand-computed
//! geometry.

use uneven_nav::env_model::{Aabb, DepthCamera, EnvironmentSpec, Laser, Pose};
use uneven_nav::grid::{CellState, Grid2, GridGeometry};
use uneven_nav::local_planner::LocalCostmap;

fn world(json: &str) -> EnvironmentSpec {
    EnvironmentSpec::from_json(json).unwrap()
}

/// Ramp rising 1 m over 4 m along +x, starting at x = 2.
fn ramp_world() -> EnvironmentSpec {
    world(
        r#"{"bounds": {"min": [0, 0, 0], "max": [10, 6, 3]},
            "primitives": [{"type": "ramp", "base_min": [2, 1], "base_max": [6, 5], "low": 0, "high": 1, "axis": "+x"}]}"#,
    )
}

#[test]
fn empty_world_returns_max_range_everywhere() {
    let env = world(r#"{"bounds": {"min": [0, 0, 0], "max": [10, 10, 3]}, "primitives": []}"#);
    let laser = Laser::default();
    let ranges = env.simulate_laser_scan(&Pose::planar(5.0, 5.0, 0.3), &laser);
    assert_eq!(ranges.len(), laser.beams);
    assert!(ranges.iter().all(|&r| r == laser.max_range));
}

#[test]
fn rightmost_beam_meets_wall_square_on() {
    let env = world(
        r#"{"bounds": {"min": [0, 0, 0], "max": [10, 10, 3]},
            "primitives": [{"type": "box", "min": [4, 0, 0], "max": [5, 10, 2]}]}"#,
    );
    let laser = Laser::default();
    // Beam 0 sits at -fov/2 from the heading; turn so it points along +x.
    let pose = Pose::planar(1.0, 5.0, laser.fov / 2.0);
    let ranges = env.simulate_laser_scan(&pose, &laser);
    assert!((laser.beam_angle(0) + laser.fov / 2.0).abs() < 1e-12);
    assert!((ranges[0] - 3.0).abs() <= 1e-9, "range {}", ranges[0]);
}

#[test]
fn level_beam_meets_ramp_where_surface_reaches_mount_height() {
    let env = ramp_world();
    let laser = Laser { mount_height: 0.3, ..Laser::default() };
    let ranges = env.simulate_laser_scan(&Pose::planar(2.0 - 1e-3, 3.0, 0.0), &laser);
    // Slope 1/4, so the surface reaches 0.3 m a further 1.2 m up the ramp.
    let ahead = ranges[laser.beams / 2];
    assert!((ahead - (1e-3 + 0.3 * 4.0)).abs() < 1e-9, "range {ahead}");
}

#[test]
fn depth_points_facing_a_wall_lie_on_its_face() {
    let env = world(
        r#"{"bounds": {"min": [0, 0, 0], "max": [10, 10, 4]},
            "primitives": [{"type": "box", "min": [3, 0, 0], "max": [4, 10, 3]}]}"#,
    );
    let cam = DepthCamera { width: 64, height: 16, hfov: 60f64.to_radians(), max_range: 6.0, mount_height: 1.0, tilt: 0.0 };
    let cloud = env.simulate_depth_scan(&Pose::planar(1.0, 5.0, 0.0), &cam);
    assert_eq!(cloud.len(), cam.width * cam.height);
    assert!(cloud.iter().all(|p| (p[0] - 3.0).abs() <= 1e-9));
}

#[test]
fn camera_aimed_at_open_sky_sees_nothing() {
    let env = world(r#"{"bounds": {"min": [0, 0, 0], "max": [10, 10, 3]}, "primitives": []}"#);
    let cam = DepthCamera { width: 32, height: 24, tilt: -80f64.to_radians(), ..DepthCamera::default() };
    assert!(env.simulate_depth_scan(&Pose::planar(5.0, 5.0, 0.0), &cam).is_empty());
}

fn floor_map(w: usize, h: usize) -> Grid2<CellState> {
    Grid2::filled(GridGeometry::new([0.0, 0.0], 0.05, w, h), CellState::Free)
}

#[test]
fn empty_surroundings_reproduce_the_static_map() {
    let env = world(r#"{"bounds": {"min": [0, 0, 0], "max": [10, 10, 3]}, "primitives": []}"#);
    let mut static_map = floor_map(200, 200);
    for (x, y) in [(100, 110), (101, 110), (90, 95), (120, 70)] {
        *static_map.get_mut(x, y).unwrap() = CellState::Occupied;
    }
    let laser = Laser::default();
    let pose = Pose::planar(5.0, 5.0, 0.4);
    let mut costmap = LocalCostmap::new(&static_map.geometry, 3.0, 4.0).unwrap();
    costmap.update(&pose, 0.0, &env.simulate_laser_scan(&pose, &laser), &laser, &static_map);
    let g = *costmap.geometry();
    for i in 0..g.len() {
        let c = g.center_of_index(i);
        let (sx, sy) = static_map.geometry.cell_of(c[0], c[1]);
        assert_eq!(costmap.grid().data[i], *static_map.get(sx, sy).unwrap(), "cell at {c:?}");
    }
}

#[test]
fn person_sized_box_appears_on_its_near_face() {
    let base = world(r#"{"bounds": {"min": [0, 0, 0], "max": [10, 10, 3]}, "primitives": []}"#);
    let person = Aabb::new([6.0, 4.8, 0.0], [6.4, 5.2, 1.7]);
    let env = base.with_boxes(&[person]).unwrap();
    let static_map = floor_map(200, 200);
    let laser = Laser::default();
    let pose = Pose::planar(5.0, 5.0, 0.0);
    let mut costmap = LocalCostmap::new(&static_map.geometry, 3.0, 4.0).unwrap();
    costmap.update(&pose, 0.0, &env.simulate_laser_scan(&pose, &laser), &laser, &static_map);
    let g = *costmap.geometry();
    let mut face_cells = 0;
    for i in 0..g.len() {
        let c = g.center_of_index(i);
        let occupied = costmap.grid().data[i] == CellState::Occupied;
        if occupied {
            // Only the face struck by the beams, never anything around it.
            assert!(c[0] > 6.0 && c[0] < 6.05 && c[1] > 4.8 && c[1] < 5.2, "stray obstacle at {c:?}");
            face_cells += 1;
        } else if c[0] > 6.0 && c[0] < 6.05 && c[1] > 4.81 && c[1] < 5.19 {
            panic!("gap in the face at {c:?}");
        }
    }
    assert_eq!(face_cells, 8);
}

#[test]
fn ramp_ahead_shows_up_where_it_crosses_the_scan_plane() {
    let env = ramp_world();
    let static_map = floor_map(200, 120);
    let laser = Laser { mount_height: 0.3, ..Laser::default() };
    let pose = Pose::planar(1.9, 3.0, 0.0);
    let mut costmap = LocalCostmap::new(&static_map.geometry, 3.0, 4.0).unwrap();
    costmap.update(&pose, 0.0, &env.simulate_laser_scan(&pose, &laser), &laser, &static_map);
    let g = *costmap.geometry();
    let crossing = 2.0 + 1.2;
    let mut arc = 0;
    for i in 0..g.len() {
        let c = g.center_of_index(i);
        if costmap.grid().data[i] != CellState::Occupied || c[1] < 1.0 || c[1] > 5.0 {
            continue;
        }
        assert!((c[0] - crossing).abs() <= 0.05, "ramp return off the crossing line at {c:?}");
        arc += 1;
    }
    // The 3 m wide window spans 3 m of the 4 m wide ramp.
    assert!(arc >= 55, "only {arc} cells on the crossing line");
}
