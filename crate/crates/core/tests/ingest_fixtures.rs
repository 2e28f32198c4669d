mod common;

use affordance_vqa::ingest::{self, capabilities, Capability};
use affordance_vqa::types::{Affordance, AffordanceLabel, PhysicalConcept, PhysicalProperty, TransparencyLevel};

#[test]
fn per_corpus_counts() {
    let want = [("H", 4, 8), ("R", 3, 6), ("Phy", 2, 4)];
    for (spec, (tag, images, records)) in common::corpus_specs().iter().zip(want) {
        let (store, report) = ingest::load(spec).unwrap();
        assert_eq!(spec.tag, tag);
        assert!(report.errors.is_empty(), "{:?}", report.errors);
        assert_eq!(
            (store.images.len(), store.annotations.len()),
            (images, records),
            "{tag}"
        );
        assert_eq!(report.sources[tag].records, records);
    }
}

#[test]
fn merged_store_is_namespaced() {
    let store = common::fixture_store();
    assert_eq!(store.annotations.len(), 18);
    assert!(store
        .annotations
        .keys()
        .all(|k| k.starts_with("H/") || k.starts_with("R/") || k.starts_with("Phy/")));
    assert!(store.annotations.values().all(|r| store.image_of(r).is_some()));
}

#[test]
fn coco_parts_and_masks() {
    let store = common::fixture_store();
    let handle = &store.annotations["H/4"];
    assert_eq!(
        (handle.category.as_str(), handle.part.as_deref()),
        ("mug", Some("handle"))
    );
    assert!(handle.has_graspable_part());
    // the mug handle is a C-shaped ring: 10 x 16 minus the 6 x 8 hole
    assert_eq!(handle.mask.as_ref().unwrap().area(), 10 * 16 - 6 * 8);
    assert_eq!(handle.bbox.to_array(), [36.0, 18.0, 46.0, 34.0]);
    // the hammer is a T of a 16 x 12 head and a 4 x 26 handle
    assert_eq!(store.annotations["H/1"].mask.as_ref().unwrap().area(), 16 * 12 + 4 * 26);
}

#[test]
fn label_regions() {
    let store = common::fixture_store();
    let bowl: Vec<_> = store.annotations.values().filter(|r| r.category == "bowl").collect();
    assert_eq!(bowl.len(), 2);
    let wrap = bowl
        .iter()
        .find(|r| r.affordance == Some(AffordanceLabel::Closed(Affordance::WrapGrasp)))
        .unwrap();
    // U shape: 24 x 4 base plus two 2 x 10 walls
    assert_eq!(wrap.mask.as_ref().unwrap().area(), 24 * 4 + 2 * 2 * 10);
    assert_eq!(capabilities(wrap), vec![Capability::Affordance]);
}

#[test]
fn physical_properties() {
    let store = common::fixture_store();
    let jar = &store.annotations["Phy/2"];
    assert_eq!(
        jar.property(PhysicalConcept::Transparency),
        Some(&PhysicalProperty::Transparency(TransparencyLevel::Transparent))
    );
    assert_eq!(
        jar.property(PhysicalConcept::Sealability),
        Some(&PhysicalProperty::Sealability(true))
    );
    let bx = &store.annotations["Phy/3"];
    assert_eq!(bx.physical.len(), 2);
    assert!(bx.property(PhysicalConcept::Sealability).is_none());
    let total: usize = store.annotations.values().map(|r| r.physical.len()).sum();
    assert_eq!(total, 11);
}
