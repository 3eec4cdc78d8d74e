use tocr_core::duoclf::DualModel;
use tocr_core::imgcore::{rotate, RasterImage};
use tocr_core::nn::{parse_arch, Init, Model, ParamSet};
use tocr_core::pipeline::{estimate_skew, ocr_page, render_html, OcrConfig};
use tocr_core::synth::{render_page, FontStyle, LayoutConfig};
use tocr_core::taxonomy::{CompositeLabel, Taxonomy};

fn untrained() -> DualModel {
    let t = Taxonomy::desk();
    let m = |classes, seed| {
        let spec = parse_arch("CRP25-CRP20-DD256", classes).unwrap();
        let params = ParamSet::init(&spec, Init::HeUniform, seed).unwrap();
        Model { spec, params }
    };
    DualModel::from_models(m(t.n_main(), 3), m(t.n_modifier(), 4), t).unwrap()
}

fn page(lines: &[Vec<Vec<CompositeLabel>>], seed: u64) -> RasterImage {
    render_page(&Taxonomy::desk(), lines, &FontStyle::builtin()[1], 20, seed, &LayoutConfig::default())
        .unwrap()
        .0
}

fn small_page() -> RasterImage {
    let l = CompositeLabel::new;
    page(&[vec![vec![l(20, 0), l(3, 2), l(11, 5)], vec![l(40, 9)]], vec![vec![l(7, 0), l(30, 1)]]], 9)
}

#[test]
fn json_output_matches_schema() {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../schema/ocr_result.schema.json")).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let model = untrained();
    for img in [small_page(), RasterImage::filled(40, 30, 255).unwrap()] {
        let json = ocr_page(&img, &model, &OcrConfig::default()).unwrap().to_json();
        if let Err(errors) = compiled.validate(&json) {
            let msgs: Vec<String> = errors.map(|e| e.to_string()).collect();
            panic!("{msgs:?}");
        };
    }
}

#[test]
fn blank_page_has_no_lines() {
    let r = ocr_page(&RasterImage::filled(200, 120, 255).unwrap(), &untrained(), &OcrConfig::default()).unwrap();
    assert!(r.lines.is_empty());
    assert_eq!(r.skew, 0.0);
    assert_eq!(r.text(), "");
    assert!(render_html(&r).contains("<body></body>"));
}

#[test]
fn deskew_is_a_no_op_on_straight_pages() {
    let model = untrained();
    let img = small_page();
    let on = ocr_page(&img, &model, &OcrConfig::default()).unwrap();
    let off = ocr_page(&img, &model, &OcrConfig { deskew: false, ..OcrConfig::default() }).unwrap();
    assert_eq!(on.lines, off.lines);
    assert_eq!(render_html(&on), render_html(&off));
}

#[test]
fn sparse_page_skew_is_recovered() {
    let img = small_page();
    for theta in [-10.0, -4.0, 0.0, 5.0, 10.0] {
        let est = estimate_skew(&rotate(&img, theta), &OcrConfig::default()).unwrap().unwrap();
        assert!((est - theta).abs() <= 1.5, "{theta}: {est}");
    }
}

#[test]
fn deskewed_page_keeps_its_lines() {
    let model = untrained();
    let img = small_page();
    let straight = ocr_page(&img, &model, &OcrConfig::default()).unwrap();
    let tilted = ocr_page(&rotate(&img, 8.0), &model, &OcrConfig::default()).unwrap();
    let shape = |r: &tocr_core::pipeline::OcrResult| -> Vec<Vec<usize>> {
        r.lines.iter().map(|l| l.words.iter().map(|w| w.glyphs.len()).collect()).collect()
    };
    assert_eq!(shape(&straight), vec![vec![3, 1], vec![2]]);
    assert_eq!(shape(&tilted), shape(&straight));
}
