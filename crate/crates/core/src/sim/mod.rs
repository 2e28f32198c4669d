//! Planar articulated-object scenes and a kinematic success gate for
//! contact plans.
//!
//! A trial succeeds when the contact pixel lies on the movable link and
//! the approach direction agrees with the joint's motion at that pixel:
//! `cos(angle) >= cos_threshold`. For a prismatic joint the motion is the
//! axis; for a revolute joint it is the tangent `(-ry, rx)` of the radius
//! `r` from the pivot to the contact pixel center. Both are flipped when
//! the joint opens toward negative values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{parse_prediction, ParsedAnswer, PredictionLine};
use crate::geometry::ImageRef;
use crate::mask::{Raster, RleMask};
use crate::policy::{approach_from_normal, contact_point, mask_for_box, ApproachMode, ContactPlan, PlanSource};
use crate::seed::stream_rng;
use crate::types::TaskType;

pub const DEFAULT_COS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Joint {
    /// Sliding joint; `range` in pixels along `axis`.
    Prismatic { axis: [f64; 2], range: [f64; 2] },
    /// Hinge at `pivot`; `range` in radians.
    Revolute { pivot: [f64; 2], range: [f64; 2] },
}

impl Joint {
    pub fn range(&self) -> [f64; 2] {
        match self {
            Joint::Prismatic { range, .. } | Joint::Revolute { range, .. } => *range,
        }
    }

    /// +1 when the joint opens toward positive values, else -1.
    pub fn opening_sign(&self) -> f64 {
        if self.range()[1] > 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticulatedScene {
    pub id: String,
    /// Width and height in pixels.
    pub canvas: [u32; 2],
    pub static_link: Vec<[f64; 2]>,
    pub movable_link: Vec<[f64; 2]>,
    pub joint: Joint,
    pub handle_region: RleMask,
    /// Outward surface normal at the handle.
    pub normal: [f64; 2],
    pub category: String,
}

fn polygon_raster(w: u32, h: u32, poly: &[[f64; 2]]) -> Raster {
    let mut r = Raster::new(w, h);
    let pts: Vec<(f64, f64)> = poly.iter().map(|p| (p[0], p[1])).collect();
    r.fill_polygon(&pts);
    r
}

fn unit(v: [f64; 2]) -> Option<[f64; 2]> {
    let n = v[0].hypot(v[1]);
    (n.is_finite() && n > 0.0).then(|| [v[0] / n, v[1] / n])
}

impl ArticulatedScene {
    pub fn movable_raster(&self) -> Raster {
        polygon_raster(self.canvas[0], self.canvas[1], &self.movable_link)
    }

    pub fn static_raster(&self) -> Raster {
        polygon_raster(self.canvas[0], self.canvas[1], &self.static_link)
    }

    /// Image frame of the canvas, for turning normalized boxes into pixels.
    pub fn image(&self) -> ImageRef {
        ImageRef {
            id: self.id.clone(),
            width: self.canvas[0],
            height: self.canvas[1],
            path: String::new(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("scene {}: {m}", self.id)));
        let [w, h] = self.canvas;
        if w == 0 || h == 0 {
            return bad("canvas has zero size".into());
        }
        if self.static_link.len() < 3 || self.movable_link.len() < 3 {
            return bad("links need at least three vertices".into());
        }
        if self
            .static_link
            .iter()
            .chain(&self.movable_link)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return bad("non-finite vertex".into());
        }
        let [lo, hi] = self.joint.range();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("joint range [{lo}, {hi}] is empty"));
        }
        if let Joint::Prismatic { axis, .. } = self.joint {
            if unit(axis).is_none() {
                return bad("prismatic axis has no direction".into());
            }
        }
        if let Joint::Revolute { pivot, .. } = self.joint {
            if !pivot.iter().all(|v| v.is_finite()) {
                return bad("pivot is not finite".into());
            }
        }
        if ((self.normal[0].hypot(self.normal[1])) - 1.0).abs() > 1e-6 {
            return bad(format!("normal {:?} is not unit length", self.normal));
        }
        if self.handle_region.width() != w || self.handle_region.height() != h {
            return bad("handle region size differs from the canvas".into());
        }
        if self.handle_region.is_empty() {
            return bad("handle region is empty".into());
        }
        let movable = self.movable_raster();
        if self
            .handle_region
            .to_raster()
            .foreground()
            .any(|(x, y)| !movable.get(x, y))
        {
            return bad("handle region extends outside the movable link".into());
        }
        Ok(())
    }

    /// Unit direction the movable link moves in at pixel `(x, y)` when
    /// opening; `None` at the pivot itself.
    pub fn motion_direction(&self, x: u32, y: u32) -> Option<[f64; 2]> {
        let s = self.joint.opening_sign();
        match self.joint {
            Joint::Prismatic { axis, .. } => unit(axis).map(|a| [s * a[0], s * a[1]]),
            Joint::Revolute { pivot, .. } => {
                let r = [x as f64 + 0.5 - pivot[0], y as f64 + 0.5 - pivot[1]];
                unit([-r[1], r[0]]).map(|t| [s * t[0], s * t[1]])
            }
        }
    }

    /// The scene turned a quarter turn clockwise on screen (exact on the
    /// pixel grid): point `(x, y)` maps to `(h - y, x)`.
    pub fn rotate_quarter(&self) -> ArticulatedScene {
        let [w, h] = self.canvas;
        let pt = |p: &[f64; 2]| [h as f64 - p[1], p[0]];
        let vec = |v: [f64; 2]| [-v[1], v[0]];
        let src = self.handle_region.to_raster();
        let rotated = Raster::from_fn(h, w, |x, y| src.get(y, h - 1 - x));
        ArticulatedScene {
            id: self.id.clone(),
            canvas: [h, w],
            static_link: self.static_link.iter().map(pt).collect(),
            movable_link: self.movable_link.iter().map(pt).collect(),
            joint: match &self.joint {
                Joint::Prismatic { axis, range } => Joint::Prismatic {
                    axis: vec(*axis),
                    range: *range,
                },
                Joint::Revolute { pivot, range } => Joint::Revolute {
                    pivot: pt(pivot),
                    range: *range,
                },
            },
            handle_region: RleMask::from_raster(&rotated),
            normal: vec(self.normal),
            category: self.category.clone(),
        }
    }
}

/// Maps a plan along with [`ArticulatedScene::rotate_quarter`].
pub fn rotate_plan_quarter(plan: &ContactPlan, canvas: [u32; 2]) -> ContactPlan {
    let h = canvas[1];
    ContactPlan {
        contact: [h - 1 - plan.contact[1], plan.contact[0]],
        approach: [-plan.approach[1], plan.approach[0]],
        source: plan.source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialReason {
    Ok,
    OffPart,
    BadDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub scene: String,
    pub plan: Option<ContactPlan>,
    pub success: bool,
    pub reason: TrialReason,
}

/// A scene with its movable raster cached for repeated trials.
pub struct PreparedScene<'a> {
    pub scene: &'a ArticulatedScene,
    movable: Raster,
}

impl<'a> PreparedScene<'a> {
    pub fn new(scene: &'a ArticulatedScene) -> Self {
        PreparedScene {
            scene,
            movable: scene.movable_raster(),
        }
    }

    /// Gate outcome for a contact pixel and unit approach direction.
    pub fn gate(&self, contact: [u32; 2], approach: [f64; 2], cos_threshold: f64) -> TrialReason {
        let [x, y] = contact;
        if !self.movable.get(x, y) {
            return TrialReason::OffPart;
        }
        match self.scene.motion_direction(x, y) {
            Some(d) if approach[0] * d[0] + approach[1] * d[1] >= cos_threshold => TrialReason::Ok,
            _ => TrialReason::BadDirection,
        }
    }

    pub fn evaluate(&self, plan: &ContactPlan, cos_threshold: f64) -> TrialResult {
        let reason = match unit(plan.approach) {
            Some(a) => self.gate(plan.contact, a, cos_threshold),
            None => TrialReason::BadDirection,
        };
        TrialResult {
            scene: self.scene.id.clone(),
            plan: Some(*plan),
            success: reason == TrialReason::Ok,
            reason,
        }
    }
}

pub fn evaluate_plan(scene: &ArticulatedScene, plan: &ContactPlan, cos_threshold: f64) -> TrialResult {
    PreparedScene::new(scene).evaluate(plan, cos_threshold)
}

/// Loads every `*.json` scene under `dir`, sorted by file name. Scenes
/// that fail validation are skipped and reported.
pub fn load_scenes(dir: &Path) -> Result<(Vec<ArticulatedScene>, Vec<(PathBuf, String)>)> {
    let files = crate::ingest::list_files(dir, "json")?;
    let mut scenes = Vec::new();
    let mut errors = Vec::new();
    for f in files {
        let parsed = std::fs::read_to_string(&f)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<ArticulatedScene>(&t).map_err(|e| e.to_string()))
            .and_then(|s| s.check().map(|_| s).map_err(|e| e.to_string()));
        match parsed {
            Ok(s) => scenes.push(s),
            Err(e) => {
                log::warn!("skipping scene {}: {e}", f.display());
                errors.push((f, e));
            }
        }
    }
    scenes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok((scenes, errors))
}

/// Ground-truth plan: handle centroid, pulled along the outward normal.
pub fn oracle_plan(scene: &ArticulatedScene) -> Result<ContactPlan> {
    Ok(ContactPlan {
        contact: contact_point(&scene.handle_region)?,
        approach: approach_from_normal(scene.normal, ApproachMode::Pull)?,
        source: PlanSource::MaskCentroid,
    })
}

pub fn oracle_plans(scenes: &[ArticulatedScene]) -> Result<BTreeMap<String, Vec<ContactPlan>>> {
    scenes
        .iter()
        .map(|s| Ok((s.id.clone(), vec![oracle_plan(s)?])))
        .collect()
}

/// `n` plans per scene with a uniform pixel and a uniform direction,
/// drawn from a per-scene stream of the seeded generator.
pub fn random_plans(scenes: &[ArticulatedScene], seed: u64, n: usize) -> BTreeMap<String, Vec<ContactPlan>> {
    scenes
        .iter()
        .map(|s| {
            let mut rng = stream_rng(seed, &format!("random-plan:{}", s.id));
            let plans = (0..n)
                .map(|_| {
                    let x = rng.random_range(0..s.canvas[0]);
                    let y = rng.random_range(0..s.canvas[1]);
                    let t = rng.random::<f64>() * std::f64::consts::TAU;
                    ContactPlan {
                        contact: [x, y],
                        approach: [t.cos(), t.sin()],
                        source: PlanSource::Random,
                    }
                })
                .collect();
            (s.id.clone(), plans)
        })
        .collect()
}

/// Exact success rate of the random baseline on a grid of every pixel and
/// `angles` evenly spaced directions.
pub fn grid_success_rate(scene: &ArticulatedScene, angles: usize, cos_threshold: f64) -> f64 {
    let p = PreparedScene::new(scene);
    let dirs: Vec<[f64; 2]> = (0..angles)
        .map(|k| {
            let t = k as f64 * std::f64::consts::TAU / angles as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    let [w, h] = scene.canvas;
    let mut hits = 0u64;
    for y in 0..h {
        for x in 0..w {
            hits += dirs
                .iter()
                .filter(|d| p.gate([x, y], **d, cos_threshold) == TrialReason::Ok)
                .count() as u64;
        }
    }
    hits as f64 / (w as u64 * h as u64 * angles as u64) as f64
}

/// Plans from box predictions keyed by scene id. The box is read as
/// normalized canvas coordinates; the contact comes from the mask inside
/// it and the approach pulls along the scene normal.
pub fn plans_from_predictions(
    scenes: &[ArticulatedScene],
    preds: &[PredictionLine],
    masks: Option<&BTreeMap<String, RleMask>>,
) -> (BTreeMap<String, Vec<ContactPlan>>, Vec<String>) {
    let by_id: BTreeMap<&str, &ArticulatedScene> = scenes.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut plans: BTreeMap<String, Vec<ContactPlan>> = BTreeMap::new();
    let mut notes = Vec::new();
    for p in preds {
        let Some(scene) = by_id.get(p.id.as_str()) else {
            notes.push(format!("prediction {} matches no scene", p.id));
            continue;
        };
        let Some(ParsedAnswer::Box(b)) = parse_prediction(&p.output_text, TaskType::RecAffordance) else {
            notes.push(format!("prediction for {} has no box", p.id));
            continue;
        };
        let ext = masks.and_then(|m| m.get(&p.id));
        let plan = mask_for_box(&b, &scene.image(), ext).and_then(|(m, source)| {
            Ok(ContactPlan {
                contact: contact_point(&m)?,
                approach: approach_from_normal(scene.normal, ApproachMode::Pull)?,
                source,
            })
        });
        match plan {
            Ok(plan) => plans.entry(p.id.clone()).or_default().push(plan),
            Err(e) => notes.push(format!("prediction for {}: {e}", p.id)),
        }
    }
    (plans, notes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRate {
    pub category: String,
    pub trials: usize,
    pub successes: usize,
    #[serde(serialize_with = "crate::evalkit::ser_f64_4")]
    pub rate: f64,
    pub reasons: BTreeMap<TrialReason, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    /// Always "kinematic": containment plus direction cosine.
    pub gate: String,
    #[serde(serialize_with = "crate::evalkit::ser_f64_4")]
    pub cos_threshold: f64,
    pub per_scene: BTreeMap<String, SceneRate>,
    #[serde(serialize_with = "crate::evalkit::ser_map_f64_4")]
    pub per_category: BTreeMap<String, f64>,
    #[serde(rename = "AVG", serialize_with = "crate::evalkit::ser_opt_f64_4")]
    pub avg: Option<f64>,
}

/// Runs every plan against its scene. A scene with no plan counts as one
/// failed trial (off-part). Category rates pool trials over the
/// category's scenes; AVG is the unweighted mean over categories.
pub fn run_suite(
    scenes: &[ArticulatedScene],
    plans: &BTreeMap<String, Vec<ContactPlan>>,
    cos_threshold: f64,
) -> (SuiteReport, Vec<TrialResult>) {
    let mut per_scene_trials: Vec<(String, String, Vec<TrialResult>)> = scenes
        .par_iter()
        .map(|s| {
            let trials = match plans.get(&s.id) {
                Some(ps) if !ps.is_empty() => {
                    let prepared = PreparedScene::new(s);
                    ps.iter().map(|p| prepared.evaluate(p, cos_threshold)).collect()
                }
                _ => vec![TrialResult {
                    scene: s.id.clone(),
                    plan: None,
                    success: false,
                    reason: TrialReason::OffPart,
                }],
            };
            (s.id.clone(), s.category.clone(), trials)
        })
        .collect();
    per_scene_trials.sort_by(|a, b| a.0.cmp(&b.0));

    let mut per_scene = BTreeMap::new();
    let mut pooled: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut all = Vec::new();
    for (id, category, trials) in per_scene_trials {
        let successes = trials.iter().filter(|t| t.success).count();
        let mut reasons = BTreeMap::new();
        for t in &trials {
            *reasons.entry(t.reason).or_insert(0) += 1;
        }
        let e = pooled.entry(category.clone()).or_default();
        e.0 += successes;
        e.1 += trials.len();
        per_scene.insert(
            id,
            SceneRate {
                category,
                trials: trials.len(),
                successes,
                rate: successes as f64 / trials.len() as f64,
                reasons,
            },
        );
        all.extend(trials);
    }
    let per_category: BTreeMap<String, f64> = pooled.into_iter().map(|(c, (s, n))| (c, s as f64 / n as f64)).collect();
    let avg = (!per_category.is_empty()).then(|| per_category.values().sum::<f64>() / per_category.len() as f64);
    (
        SuiteReport {
            gate: "kinematic".into(),
            cos_threshold,
            per_scene,
            per_category,
            avg,
        },
        all,
    )
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `scope,name,value` rows: categories, then AVG, then scenes.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let f = crate::evalkit::fixed4;
        w.write_record(["scope", "name", "value"]).expect("in-memory write");
        for (c, v) in &self.per_category {
            w.write_record(["category", c.as_str(), f(*v).as_str()])
                .expect("in-memory write");
        }
        w.write_record(["category", "AVG", self.avg.map(f).unwrap_or_default().as_str()])
            .expect("in-memory write");
        for (id, r) in &self.per_scene {
            w.write_record(["scene", id.as_str(), f(r.rate).as_str()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::file_io(path, e))?;
        let csv_path = path.with_extension("csv");
        std::fs::write(&csv_path, self.to_csv()).map_err(|e| Error::file_io(&csv_path, e))
    }
}

#[cfg(test)]
mod tests;
