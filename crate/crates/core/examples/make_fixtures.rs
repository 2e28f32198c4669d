//! Regenerates the small corpora and scenes under `fixtures/`.
//!
//! ```text
//! cargo run -p affordance-vqa --example make_fixtures -- crates/core/fixtures
//! ```

use std::path::Path;

use affordance_vqa::ingest::write_label_png;
use affordance_vqa::mask::{bbox_from_mask, Raster, RleMask};
use affordance_vqa::sim::{evaluate_plan, oracle_plan, ArticulatedScene, Joint, DEFAULT_COS_THRESHOLD};
use serde_json::{json, Value};

const W: u32 = 64;
const H: u32 = 48;

type Poly = Vec<(f64, f64)>;

fn poly(points: &[(i32, i32)]) -> Poly {
    points.iter().map(|&(x, y)| (x as f64, y as f64)).collect()
}

fn rect(x0: i32, y0: i32, x1: i32, y1: i32) -> Poly {
    poly(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
}

fn fill(polys: &[Poly]) -> Raster {
    let mut out = Raster::new(W, H);
    for p in polys {
        let mut one = Raster::new(W, H);
        one.fill_polygon(p);
        for (x, y) in one.foreground() {
            out.set(x, y, true);
        }
    }
    out
}

fn xywh(raster: &Raster) -> Value {
    let b = bbox_from_mask(&RleMask::from_raster(raster)).expect("non-empty");
    let [x0, y0, x1, y1] = b.to_array();
    json!([x0, y0, x1 - x0, y1 - y0])
}

fn poly_json(polys: &[Poly]) -> Value {
    Value::Array(
        polys
            .iter()
            .map(|p| json!(p.iter().flat_map(|&(x, y)| [x, y]).collect::<Vec<f64>>()))
            .collect(),
    )
}

fn write_json(path: &Path, v: &Value) {
    let mut text = serde_json::to_string_pretty(v).unwrap();
    text.push('\n');
    std::fs::write(path, text).unwrap();
}

fn coco_corpus(dir: &Path) {
    let images = ["hammer_01", "mug_01", "pan_01", "screwdriver_01"];
    let names = [
        "hammer",
        "hammer:handle",
        "mug",
        "mug:handle",
        "pan",
        "pan:handle",
        "screwdriver",
        "screwdriver:handle",
    ];
    let mut anns = Vec::new();
    let mut add = |id: usize, image: usize, cat: usize, polys: &[Poly], as_rle: bool| {
        let raster = fill(polys);
        let seg = if as_rle {
            serde_json::to_value(RleMask::from_raster(&raster)).unwrap()
        } else {
            poly_json(polys)
        };
        anns.push(json!({
            "id": id, "image_id": image, "category_id": cat,
            "bbox": xywh(&raster), "segmentation": seg,
        }));
    };

    let hammer_handle = rect(14, 18, 18, 44);
    let hammer = poly(&[
        (8, 6),
        (24, 6),
        (24, 18),
        (18, 18),
        (18, 44),
        (14, 44),
        (14, 18),
        (8, 18),
    ]);
    add(1, 1, 1, &[hammer], false);
    add(2, 1, 2, &[hammer_handle], false);

    let body = rect(12, 10, 36, 42);
    let ring = poly(&[
        (36, 18),
        (46, 18),
        (46, 34),
        (36, 34),
        (36, 30),
        (42, 30),
        (42, 22),
        (36, 22),
    ]);
    add(3, 2, 3, &[body, ring.clone()], true);
    add(4, 2, 4, &[ring], true);

    let pan_body = poly(&[
        (14, 10),
        (26, 10),
        (34, 18),
        (34, 30),
        (26, 38),
        (14, 38),
        (6, 30),
        (6, 18),
    ]);
    let pan_handle = rect(34, 21, 60, 27);
    add(5, 3, 5, &[pan_body, pan_handle.clone()], false);
    add(6, 3, 6, &[pan_handle], false);

    let shaft = rect(30, 4, 34, 26);
    let grip = poly(&[(27, 26), (37, 26), (38, 44), (26, 44)]);
    add(7, 4, 7, &[shaft, grip.clone()], false);
    add(8, 4, 8, &[grip], false);

    let coco = json!({
        "images": images.iter().enumerate().map(|(i, n)| json!({
            "id": i + 1, "file_name": format!("{n}.jpg"), "width": W, "height": H,
        })).collect::<Vec<_>>(),
        "categories": names.iter().enumerate().map(|(i, n)| json!({"id": i + 1, "name": n})).collect::<Vec<_>>(),
        "annotations": anns,
    });
    std::fs::create_dir_all(dir).unwrap();
    write_json(&dir.join("annotations.json"), &coco);
}

fn label_corpus(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let (w, h) = (32u32, 24u32);
    let paint = |regions: &[(u8, &dyn Fn(u32, u32) -> bool)]| {
        let mut px = vec![0u8; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                for (v, inside) in regions {
                    if inside(x, y) {
                        px[(y * w + x) as usize] = *v;
                    }
                }
            }
        }
        px
    };
    let knife = paint(&[
        (1, &|x, y| (2..12).contains(&x) && (10..14).contains(&y)),
        (2, &|x, y| (12..30).contains(&x) && (10..13).contains(&y)),
    ]);
    let bowl = paint(&[
        (4, &|x, y| (6..26).contains(&x) && (6..16).contains(&y)),
        (7, &|x, y| {
            ((4..28).contains(&x) && (16..20).contains(&y))
                || (((4..6).contains(&x) || (26..28).contains(&x)) && (6..16).contains(&y))
        }),
    ]);
    let spoon = paint(&[
        (1, &|x, y| (2..18).contains(&x) && (11..13).contains(&y)),
        (3, &|x, y| (18..28).contains(&x) && (8..16).contains(&y)),
    ]);
    write_label_png(&dir.join("knife_01_label.png"), w, h, &knife).unwrap();
    write_label_png(&dir.join("bowl_01_label.png"), w, h, &bowl).unwrap();
    write_label_png(&dir.join("spoon_01_label.png"), w, h, &spoon).unwrap();
}

fn physical_corpus(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let coco = json!({
        "images": [
            {"id": 1, "file_name": "kitchen_01.jpg", "width": W, "height": H},
            {"id": 2, "file_name": "pantry_01.jpg", "width": W, "height": H},
        ],
        "categories": [
            {"id": 1, "name": "mug"}, {"id": 2, "name": "jar"},
            {"id": 3, "name": "box"}, {"id": 4, "name": "plastic bag"},
        ],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [4, 4, 20, 24]},
            {"id": 2, "image_id": 1, "category_id": 2, "bbox": [30, 6, 16, 30]},
            {"id": 3, "image_id": 2, "category_id": 3, "bbox": [6, 10, 30, 24]},
            {"id": 4, "image_id": 2, "category_id": 4, "bbox": [40, 8, 18, 30]},
        ],
    });
    write_json(&dir.join("annotations.json"), &coco);
    std::fs::write(
        dir.join("properties.csv"),
        "id,transparency,liquid_storage,sealability\n\
         1,opaque,true,false\n\
         2,transparent,true,true\n\
         3,opaque,false,\n\
         4,translucent,false,true\n",
    )
    .unwrap();
}

fn scene(
    id: &str,
    fixed: Poly,
    moving: Poly,
    joint: Joint,
    handle: (u32, u32, u32, u32),
    normal: [f64; 2],
) -> ArticulatedScene {
    let pts = |p: Poly| p.into_iter().map(|(x, y)| [x, y]).collect();
    let (x0, y0, x1, y1) = handle;
    ArticulatedScene {
        id: id.into(),
        canvas: [W, H],
        static_link: pts(fixed),
        movable_link: pts(moving),
        joint,
        handle_region: RleMask::from_raster(&Raster::from_rect(W, H, x0, y0, x1, y1)),
        normal,
        category: id.split('-').next().unwrap().into(),
    }
}

fn rev(pivot: [f64; 2], range: [f64; 2]) -> Joint {
    Joint::Revolute { pivot, range }
}

fn pri(axis: [f64; 2], range: [f64; 2]) -> Joint {
    Joint::Prismatic { axis, range }
}

fn scenes(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let all = vec![
        scene(
            "door-01",
            rect(0, 20, 10, 28),
            rect(10, 22, 54, 26),
            rev([10.0, 24.0], [0.0, 1.6]),
            (46, 24, 50, 26),
            [0.0, 1.0],
        ),
        scene(
            "door-02",
            rect(54, 20, 64, 28),
            rect(10, 22, 54, 26),
            rev([54.0, 24.0], [0.0, 1.6]),
            (14, 22, 18, 24),
            [0.0, -1.0],
        ),
        scene(
            "drawer-01",
            rect(4, 8, 40, 40),
            rect(30, 12, 50, 36),
            pri([1.0, 0.0], [0.0, 20.0]),
            (46, 20, 50, 28),
            [1.0, 0.0],
        ),
        scene(
            "drawer-02",
            rect(8, 4, 56, 24),
            rect(12, 20, 52, 40),
            pri([0.0, 1.0], [0.0, 16.0]),
            (28, 34, 36, 40),
            [0.0, 1.0],
        ),
        scene(
            "faucet-01",
            rect(28, 20, 36, 28),
            rect(32, 22, 60, 26),
            rev([32.0, 24.0], [0.0, 1.0]),
            (52, 22, 58, 26),
            [0.0, 1.0],
        ),
        scene(
            "faucet-02",
            rect(24, 30, 40, 44),
            rect(30, 6, 34, 36),
            rev([32.0, 34.0], [-1.2, 0.0]),
            (30, 8, 34, 14),
            [-1.0, 0.0],
        ),
        scene(
            "lid-01",
            rect(10, 24, 54, 44),
            rect(10, 18, 54, 24),
            rev([10.0, 21.0], [-1.5, 0.0]),
            (46, 18, 52, 21),
            [0.0, -1.0],
        ),
        scene(
            "lid-02",
            rect(10, 24, 54, 44),
            rect(10, 18, 54, 24),
            rev([54.0, 21.0], [0.0, 1.5]),
            (12, 18, 18, 21),
            [0.0, -1.0],
        ),
        scene(
            "switch-01",
            rect(24, 8, 40, 40),
            rect(28, 26, 36, 34),
            pri([0.0, -1.0], [0.0, 12.0]),
            (28, 26, 36, 34),
            [0.0, -1.0],
        ),
        scene(
            "switch-02",
            rect(20, 10, 44, 38),
            rect(30, 12, 34, 24),
            rev([32.0, 24.0], [0.0, 0.8]),
            (30, 12, 34, 16),
            [1.0, 0.0],
        ),
        scene(
            "laptop-01",
            rect(8, 36, 56, 42),
            rect(8, 8, 12, 36),
            rev([10.0, 36.0], [-0.8, 0.0]),
            (8, 8, 12, 12),
            [-1.0, 0.0],
        ),
        scene(
            "laptop-02",
            rect(8, 36, 56, 42),
            rect(10, 32, 50, 36),
            rev([10.0, 34.0], [-1.8, 0.0]),
            (44, 32, 50, 36),
            [0.0, -1.0],
        ),
    ];
    for s in all {
        s.check().unwrap_or_else(|e| panic!("{}: {e}", s.id));
        let r = evaluate_plan(&s, &oracle_plan(&s).unwrap(), DEFAULT_COS_THRESHOLD);
        assert!(r.success, "{}: oracle fails ({:?})", s.id, r.reason);
        write_json(&dir.join(format!("{}.json", s.id)), &serde_json::to_value(&s).unwrap());
    }
}

fn main() {
    let root = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let root = Path::new(&root);
    coco_corpus(&root.join("coco"));
    label_corpus(&root.join("labels"));
    physical_corpus(&root.join("physical"));
    scenes(&root.join("scenes"));
    println!("fixtures written to {}", root.display());
}
