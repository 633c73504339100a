//! Bundled synthetic worlds and their flight routes.
//!
//! The demo world is a 371 x 302 cell floor (0.05 m cells, about 280 m^2):
//! four offices of identical shape along the bottom, a corridor, and an open
//! lab, a kitchen and a meeting room along the top. The offices differ only
//! in their furniture, so ranges alone cannot tell them apart. The twin world
//! has two rooms that match in both geometry and annotations.

use std::path::Path;

use crate::error::{Error, Result};
use crate::map::{Occupancy, SemanticAnnotation, SemanticGridMap};
use crate::sim::WaypointFile;

pub const RESOLUTION: f64 = 0.05;

pub const DEMO_WIDTH: usize = 371;
pub const DEMO_HEIGHT: usize = 302;

/// Class order of the demo annotation file.
pub const DEMO_CLASSES: [&str; 10] = [
    "sink",
    "door",
    "fridge",
    "board",
    "table",
    "plant",
    "drawers",
    "sofa",
    "cabinet",
    "extinguisher",
];

/// Interior rows of the offices.
const OFFICE_ROWS: (i64, i64) = (183, 298);
const OFFICE_WIDTH: i64 = 88;
const CORRIDOR_ROWS: (i64, i64) = (140, 180);

/// First interior column of office `k`.
fn office_col(k: i64) -> i64 {
    4 + 91 * k
}

fn wall(map: &mut SemanticGridMap, x0: i64, y0: i64, x1: i64, y1: i64) {
    map.fill_rect(x0, y0, x1, y1, Occupancy::Occupied);
}

fn opening(map: &mut SemanticGridMap, x0: i64, y0: i64, x1: i64, y1: i64) {
    map.fill_rect(x0, y0, x1, y1, Occupancy::Free);
}

fn annotate(map: &mut SemanticGridMap, class: &str, x0: i64, y0: i64, x1: i64, y1: i64) {
    map.annotate(&SemanticAnnotation::new(class, x0, y0, x1, y1))
        .expect("bundled annotation inside the map");
}

fn with_classes(width: usize, height: usize) -> SemanticGridMap {
    let mut map = SemanticGridMap::new(width, height, RESOLUTION, [0.0, 0.0], Occupancy::Free)
        .expect("bundled map dimensions are valid");
    // register classes in a fixed order, independent of annotation order
    for name in DEMO_CLASSES {
        map.register_class(name).expect("at most 14 classes");
    }
    map
}

pub fn demo_world() -> SemanticGridMap {
    let (w, h) = (DEMO_WIDTH as i64, DEMO_HEIGHT as i64);
    let mut map = with_classes(DEMO_WIDTH, DEMO_HEIGHT);

    wall(&mut map, 0, 0, w, 4);
    wall(&mut map, 0, h - 4, w, h);
    wall(&mut map, 0, 0, 4, h);
    wall(&mut map, w - 6, 0, w, h);

    // offices
    let (corridor_top, corridor_bottom) = CORRIDOR_ROWS;
    wall(&mut map, 4, corridor_bottom, w - 6, OFFICE_ROWS.0);
    for k in 0..3 {
        let c = office_col(k) + OFFICE_WIDTH;
        wall(&mut map, c, corridor_bottom, c + 3, h - 4);
    }
    for k in 0..4 {
        let o = office_col(k);
        opening(&mut map, o + 10, corridor_bottom, o + 28, OFFICE_ROWS.0);
        annotate(&mut map, "door", o + 10, corridor_bottom, o + 28, OFFICE_ROWS.0);
    }

    // top band: lab | kitchen | meeting room
    wall(&mut map, 4, corridor_top - 3, w - 6, corridor_top);
    wall(&mut map, 220, 4, 223, corridor_top - 3);
    wall(&mut map, 300, 4, 303, corridor_top - 3);
    for (x0, x1) in [(60, 78), (242, 260), (330, 348)] {
        opening(&mut map, x0, corridor_top - 3, x1, corridor_top);
        annotate(&mut map, "door", x0, corridor_top - 3, x1, corridor_top);
    }

    // furniture boxes reach one cell into the walls they stand against, so
    // they never show through to the room behind
    let [o0, o1, o2, o3] = [0, 1, 2, 3].map(office_col);
    let bottom = OFFICE_ROWS.1;
    annotate(&mut map, "board", o0 + 20, bottom - 4, o0 + 60, bottom + 4);
    annotate(&mut map, "drawers", o0 - 4, 215, o0 + 12, 245);
    annotate(&mut map, "plant", o0 + 72, bottom - 14, o0 + 88, bottom);

    annotate(&mut map, "sink", o1 - 1, 230, o1 + 10, 252);
    annotate(&mut map, "fridge", o1 + 74, 255, o1 + 89, 280);
    annotate(&mut map, "extinguisher", o1 + 30, bottom - 4, o1 + 40, bottom + 4);

    annotate(&mut map, "plant", o2 - 1, 283, o2 + 14, bottom);
    annotate(&mut map, "cabinet", o2 + 50, bottom - 10, o2 + 85, bottom + 4);
    annotate(&mut map, "sink", o2 + 78, 200, o2 + 89, 222);

    annotate(&mut map, "sofa", o3 + 15, bottom - 16, o3 + 60, bottom + 4);
    annotate(&mut map, "cabinet", o3 + 74, 205, o3 + 94, 240);
    annotate(&mut map, "table", o3 + 30, 225, o3 + 55, 245);

    // kitchen
    annotate(&mut map, "sink", 240, 0, 265, 14);
    annotate(&mut map, "fridge", 286, 20, 301, 45);
    annotate(&mut map, "table", 245, 60, 275, 85);
    annotate(&mut map, "cabinet", 222, 90, 233, 125);

    // meeting room: the same furniture classes as office 3
    annotate(&mut map, "sofa", 315, 0, 355, 20);
    annotate(&mut map, "table", 320, 50, 350, 80);
    annotate(&mut map, "cabinet", 352, 90, w, 125);
    annotate(&mut map, "board", 302, 40, 310, 80);

    // open lab
    annotate(&mut map, "board", 80, 0, 140, 8);
    annotate(&mut map, "table", 40, 40, 80, 60);
    annotate(&mut map, "table", 130, 70, 170, 90);
    annotate(&mut map, "drawers", 0, 90, 12, 120);
    annotate(&mut map, "plant", 200, 8, 220, 24);
    annotate(&mut map, "extinguisher", 212, 100, 221, 110);
    annotate(&mut map, "plant", 10, 160, 22, 180);
    annotate(&mut map, "extinguisher", w - 10, 150, w, 160);
    map
}

fn cell_point(col: f64, row: f64) -> [f64; 2] {
    [col * RESOLUTION, row * RESOLUTION]
}

/// Rectangle loop around an office interior at a `margin`-cell inset,
/// repeated `laps` times; `clockwise` flips the direction.
fn office_loop(k: i64, margin: f64, laps: usize, clockwise: bool) -> Vec<[f64; 2]> {
    let o = office_col(k) as f64;
    let (x0, x1) = (o + margin, o + OFFICE_WIDTH as f64 - margin);
    let (y0, y1) = (OFFICE_ROWS.0 as f64 + margin, OFFICE_ROWS.1 as f64 - margin);
    let mut corners = vec![
        cell_point(x0, y0),
        cell_point(x1, y0),
        cell_point(x1, y1),
        cell_point(x0, y1),
    ];
    if clockwise {
        corners.reverse();
    }
    let mut out = Vec::new();
    for _ in 0..laps {
        out.extend_from_slice(&corners);
    }
    out.push(corners[0]);
    out
}

/// Zigzag across an office, back and forth along its long side.
fn office_zigzag(k: i64, passes: usize) -> Vec<[f64; 2]> {
    let o = office_col(k) as f64;
    let (x0, x1) = (o + 18.0, o + OFFICE_WIDTH as f64 - 18.0);
    let (y0, y1) = (OFFICE_ROWS.0 as f64 + 18.0, OFFICE_ROWS.1 as f64 - 18.0);
    let mut out = Vec::new();
    for p in 0..passes {
        let (a, b) = if p % 2 == 0 { (y0, y1) } else { (y1, y0) };
        out.push(cell_point(x0, a));
        out.push(cell_point(x1, a + (b - a) * 0.5));
        out.push(cell_point(x0, b));
    }
    out.push(cell_point(x1, y0));
    out
}

/// Routes S1..S10: two per office, one in the kitchen, one in the meeting
/// room. Each lasts roughly two minutes at the default speed.
pub fn demo_routes() -> Vec<(String, Vec<[f64; 2]>)> {
    let kitchen = vec![
        cell_point(240.0, 30.0),
        cell_point(282.0, 30.0),
        cell_point(282.0, 115.0),
        cell_point(240.0, 115.0),
    ];
    let meeting = vec![
        cell_point(320.0, 30.0),
        cell_point(345.0, 30.0),
        cell_point(345.0, 115.0),
        cell_point(320.0, 115.0),
    ];
    let repeat = |corners: Vec<[f64; 2]>, laps: usize| {
        let mut out: Vec<[f64; 2]> = corners.iter().cycle().take(corners.len() * laps).copied().collect();
        out.push(corners[0]);
        out
    };
    let routes = vec![
        office_loop(0, 20.0, 3, false),
        office_zigzag(0, 6),
        office_loop(1, 22.0, 3, true),
        office_zigzag(1, 6),
        office_loop(2, 18.0, 3, false),
        office_zigzag(2, 6),
        office_loop(3, 20.0, 3, true),
        office_zigzag(3, 6),
        repeat(kitchen, 3),
        repeat(meeting, 3),
    ];
    routes
        .into_iter()
        .enumerate()
        .map(|(i, r)| (format!("s{:02}", i + 1), r))
        .collect()
}

pub const TWIN_WIDTH: usize = 300;
pub const TWIN_HEIGHT: usize = 140;
/// First interior columns of the two rooms; the second is a pure translation
/// of the first.
pub const TWIN_ROOMS: [i64; 2] = [24, 176];
const TWIN_ROOM_WIDTH: i64 = 100;
const TWIN_ROOM_ROWS: (i64, i64) = (4, 84);

/// Two identical rooms side by side above a corridor, their centers
/// 7.6 m apart.
pub fn twin_world() -> SemanticGridMap {
    let (w, h) = (TWIN_WIDTH as i64, TWIN_HEIGHT as i64);
    let mut map = with_classes(TWIN_WIDTH, TWIN_HEIGHT);
    wall(&mut map, 0, 0, w, 4);
    wall(&mut map, 0, h - 4, w, h);
    wall(&mut map, 0, 0, 4, h);
    wall(&mut map, w - 4, 0, w, h);
    wall(&mut map, 4, TWIN_ROOM_ROWS.1, w - 4, TWIN_ROOM_ROWS.1 + 3);
    for o in TWIN_ROOMS {
        wall(&mut map, o - 3, 4, o, TWIN_ROOM_ROWS.1);
        wall(
            &mut map,
            o + TWIN_ROOM_WIDTH,
            4,
            o + TWIN_ROOM_WIDTH + 3,
            TWIN_ROOM_ROWS.1,
        );
        opening(&mut map, o + 40, TWIN_ROOM_ROWS.1, o + 60, TWIN_ROOM_ROWS.1 + 3);
        annotate(&mut map, "door", o + 40, TWIN_ROOM_ROWS.1, o + 60, TWIN_ROOM_ROWS.1 + 3);
        annotate(&mut map, "sofa", o + 10, 0, o + 50, 14);
        annotate(&mut map, "plant", o + 84, 4, o + 100, 20);
        annotate(&mut map, "cabinet", o - 1, 30, o + 12, 65);
        annotate(&mut map, "table", o + 60, 40, o + 85, 60);
    }
    // the space between and around the rooms is solid so that both rooms see
    // the same corridor through their doors
    wall(&mut map, 4, 4, TWIN_ROOMS[0] - 3, TWIN_ROOM_ROWS.1);
    wall(
        &mut map,
        TWIN_ROOMS[0] + TWIN_ROOM_WIDTH + 3,
        4,
        TWIN_ROOMS[1] - 3,
        TWIN_ROOM_ROWS.1,
    );
    wall(
        &mut map,
        TWIN_ROOMS[1] + TWIN_ROOM_WIDTH + 3,
        4,
        w - 4,
        TWIN_ROOM_ROWS.1,
    );
    map
}

/// A loop inside the first twin room that never leaves it.
pub fn twin_route() -> Vec<[f64; 2]> {
    let o = TWIN_ROOMS[0] as f64;
    let (y0, y1) = (TWIN_ROOM_ROWS.0 as f64 + 20.0, TWIN_ROOM_ROWS.1 as f64 - 20.0);
    let corners = [
        cell_point(o + 20.0, y0),
        cell_point(o + 80.0, y0),
        cell_point(o + 80.0, y1),
        cell_point(o + 20.0, y1),
    ];
    let mut out: Vec<[f64; 2]> = corners.iter().cycle().take(12).copied().collect();
    out.push(corners[0]);
    out
}

/// Writes `map.pgm`, `map.json`, `routes/sNN.json`, `twin/map.pgm`,
/// `twin/map.json` and `twin/route.json` under `dir`.
pub fn write_assets(dir: &Path) -> Result<()> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&dir.join("routes"))?;
    mkdir(&dir.join("twin"))?;
    demo_world().save(&dir.join("map.pgm"), &dir.join("map.json"))?;
    for (name, waypoints) in demo_routes() {
        WaypointFile { waypoints }.write(&dir.join("routes").join(format!("{name}.json")))?;
    }
    twin_world().save(&dir.join("twin/map.pgm"), &dir.join("twin/map.json"))?;
    WaypointFile {
        waypoints: twin_route(),
    }
    .write(&dir.join("twin/route.json"))
}
