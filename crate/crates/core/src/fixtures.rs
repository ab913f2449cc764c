//! Deterministic synthetic data for examples, tests and offline demos.
//!
//! The corpus has 50 documents over three platforms, two device classes and
//! two speed markers. Regular documents `doc00`–`doc44` are reachable by the
//! keyword crawl; a handful of special documents exercise the edge cases:
//!
//! | key     | what it is                                              |
//! |---------|---------------------------------------------------------|
//! | `i%7==2`| paywalled (no PDF)                                      |
//! | `doc13` | PDF without its end marker                              |
//! | `doc45` | published before the crawl window, cited by `doc00`     |
//! | `doc46` | off-matrix speed marker, cited by `doc00`               |
//! | `doc47` | patent with only a URL, cited by `doc20`                |
//! | `doc48` | preprint sharing `doc03`'s DOI with a different PDF     |
//! | `doc49` | off-matrix platform, cited by `doc10`                   |
//!
//! Everything is a pure function of its arguments.

use std::sync::Arc;

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::citation::CanonicalId;
use crate::clock::{FixedClock, SharedClock};
use crate::config::EngineConfig;
use crate::eval::{HarnessContext, Question, QuestionCategory, QuestionSet, TimingMode};
use crate::gateway::{ConfidenceScore, Gateway, RateTable, SimulatedProvider};
use crate::ingest::{
    render_synthetic_pdf, CorpusDocument, CorpusKeywords, IngestError, IngestReport, KeywordAxes, Pipeline, Section,
    Stores, StructuredDocument, SyntheticCorpus, SYNTH_PDF_END,
};
use crate::retrieval::{HashEmbedder, Retriever, HASH_EMBEDDER_DIM};
use crate::store::MetricsTable;

pub const PLATFORMS: [&str; 3] = ["indium phosphide", "lithium niobate", "silicon"];
pub const DEVICES: [&str; 2] = ["modulator", "photodetector"];
pub const SPEEDS: [&str; 2] = ["100G", "200G"];

/// Documents reachable by the keyword crawl.
pub const REGULAR_DOCS: usize = 45;
pub const CORPUS_SIZE: usize = 50;
pub const MALFORMED_DOC: usize = 13;
pub const PREPRINT_DOC: usize = 48;
/// The published twin of [`PREPRINT_DOC`].
pub const PREPRINT_TWIN: usize = 3;
pub const EMBEDDING_SEED: u64 = 0x5eed;

pub fn fixture_axes() -> KeywordAxes {
    KeywordAxes::new(PLATFORMS, DEVICES, SPEEDS)
}

pub fn doc_key(i: usize) -> String {
    format!("doc{i:02}")
}

pub fn doc_doi(i: usize) -> String {
    format!("10.5555/synth.{i:03}")
}

pub fn is_paywalled(i: usize) -> bool {
    i < REGULAR_DOCS && i % 7 == 2
}

/// Platform, device and speed of a document.
pub fn doc_keywords(i: usize) -> (&'static str, &'static str, &'static str) {
    match i {
        46 => ("lithium niobate", "modulator", "400G"),
        49 => ("silicon nitride", "modulator", "100G"),
        _ => {
            let j = if i == PREPRINT_DOC {
                PREPRINT_TWIN
            } else {
                i % REGULAR_DOCS
            };
            (PLATFORMS[j % 3], DEVICES[(j / 3) % 2], SPEEDS[(j / 6) % 2])
        }
    }
}

pub fn doc_year(i: usize) -> i32 {
    match i {
        45 => 2016,
        PREPRINT_DOC => 2022,
        _ => 2018 + (i % 8) as i32,
    }
}

fn tier_of(i: usize) -> u8 {
    match i {
        45 => 1,
        46 => 2,
        47 => 5,
        PREPRINT_DOC => 5,
        49 => 3,
        _ => (i % 5 + 1) as u8,
    }
}

pub fn doc_title(i: usize) -> String {
    let (p, d, s) = doc_keywords(i);
    match i {
        47 => "Patent: packaged optical transmitter assembly".into(),
        PREPRINT_DOC => format!("{} {d} for {s} interconnects (preprint)", capitalize(p)),
        _ => format!("{} {d} for {s} interconnects, study {i:02}", capitalize(p)),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// Integer-valued metric parameters of a document. Bandwidth in GHz,
/// VπL and insertion loss in tenths (V·cm, dB), energy in fJ/bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DocParams {
    pub bandwidth_ghz: u32,
    pub vpil_tenths: u32,
    pub loss_tenths: u32,
    /// `None` when the document does not report energy.
    pub energy_fj: Option<u32>,
}

pub fn doc_params(i: usize) -> DocParams {
    let n = i as u32;
    DocParams {
        bandwidth_ghz: 20 + n,
        vpil_tenths: 10 + n % 20,
        loss_tenths: 15 + n % 25,
        energy_fj: (i % 5 != 4).then_some(50 + 10 * n),
    }
}

fn tenths(t: u32) -> String {
    format!("{}.{}", t / 10, t % 10)
}

/// The results paragraph, with units and phrasing varied by index.
fn results_paragraph(i: usize) -> String {
    let p = doc_params(i);
    let bw = match i % 3 {
        0 => format!("The device shows a 3-dB bandwidth of {} GHz.", p.bandwidth_ghz),
        1 => format!(
            "We observe a 3 dB electro-optic bandwidth reaching 0.{:03} THz.",
            p.bandwidth_ghz
        ),
        _ => format!(
            "Measurements indicate {} MHz of 3-dB bandwidth.",
            p.bandwidth_ghz * 1000
        ),
    };
    let vpi = if i.is_multiple_of(2) {
        format!("The VπL is {} V·cm.", tenths(p.vpil_tenths))
    } else {
        format!("A Vpi*L of {} V·mm was measured.", p.vpil_tenths)
    };
    let il = if i % 4 < 2 {
        format!("On-chip insertion loss of {} dB is obtained.", tenths(p.loss_tenths))
    } else {
        format!("The chip adds {} dB insertion loss.", tenths(p.loss_tenths))
    };
    let energy = match p.energy_fj {
        Some(e) if i % 4 == 3 => format!(" Switching costs 0.{e:03} pJ/bit."),
        Some(e) => format!(" Switching costs {e} fJ/bit."),
        None => String::new(),
    };
    format!("{bw} {vpi} {il}{energy}")
}

fn packaging_sentence(i: usize) -> Option<&'static str> {
    match i % 6 {
        0 => Some("The die is assembled with flip-chip bonding onto the driver."),
        3 => Some("Electrical access uses wire-bond connections to a carrier board."),
        _ => None,
    }
}

fn abstract_text(i: usize) -> String {
    let (p, d, s) = doc_keywords(i);
    let mut a = format!(
        "We present a {p} {d} designed for {s} optical interconnects and characterize its high-speed behaviour."
    );
    if is_paywalled(i) {
        let q = doc_params(i);
        a.push_str(&format!(
            " The device reaches a 3-dB bandwidth of {} GHz with an insertion loss of {} dB.",
            q.bandwidth_ghz,
            tenths(q.loss_tenths)
        ));
    }
    a
}

/// Parsed form of a document's PDF.
pub fn doc_body(i: usize) -> StructuredDocument {
    let (p, d, s) = doc_keywords(i);
    let mut results = vec![results_paragraph(i)];
    if let Some(pkg) = packaging_sentence(i) {
        results.push(pkg.to_string());
    }
    let intro = if i == PREPRINT_DOC {
        format!("This preprint describes an early version of a {p} {d} for {s} links.")
    } else {
        format!("Integrated {p} {d}s are central to {s} transceivers. This work studies design trade-offs.")
    };
    StructuredDocument {
        title: doc_title(i),
        sections: vec![
            Section {
                heading: "Introduction".into(),
                paragraphs: vec![intro],
            },
            Section {
                heading: "Results".into(),
                paragraphs: results,
            },
        ],
        references: vec![],
    }
}

/// PDF bytes; the malformed document is truncated before its end marker.
pub fn doc_pdf(i: usize) -> Vec<u8> {
    let bytes = render_synthetic_pdf(&doc_body(i));
    if i == MALFORMED_DOC {
        let text = String::from_utf8(bytes).expect("rendered PDF is UTF-8");
        return text.replace(SYNTH_PDF_END, "").into_bytes();
    }
    bytes
}

pub fn corpus_document(i: usize) -> CorpusDocument {
    let (p, d, s) = doc_keywords(i);
    let year = doc_year(i);
    let doi = match i {
        47 => None,
        PREPRINT_DOC => Some(doc_doi(PREPRINT_TWIN)),
        _ => Some(doc_doi(i)),
    };
    CorpusDocument {
        doi,
        url: (i == 47).then(|| "https://patents.example.org/US1234567".to_string()),
        title: doc_title(i),
        authors: vec![format!("A. Author{i:02}"), "B. Coauthor".into()],
        pub_date: format!("{year}-{:02}-15", i % 12 + 1),
        venue: Some(
            [
                "Journal A",
                "Conference B",
                "Letters C",
                "Preprint Server",
                "Patent Office",
            ][tier_of(i) as usize - 1]
                .into(),
        ),
        tier: tier_of(i),
        keywords: CorpusKeywords {
            platform: p.into(),
            device_class: d.into(),
            speed_marker: s.into(),
        },
        abstract_text: abstract_text(i),
        pdf: (!is_paywalled(i)).then(|| format!("{}.pdf", doc_key(i))),
    }
}

/// `(citing, cited)` index pairs.
pub fn citation_edges() -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..REGULAR_DOCS {
        for j in [(i + 1) % REGULAR_DOCS, (i * 7 + 3) % REGULAR_DOCS] {
            if j != i && !out.contains(&(i, j)) {
                out.push((i, j));
            }
        }
    }
    out.extend([(0, 45), (0, 46), (10, 49), (20, 47)]);
    out
}

/// The 50-document corpus in memory.
pub fn synthetic_corpus() -> SyntheticCorpus {
    let mut c = SyntheticCorpus::new();
    let mut ids: Vec<CanonicalId> = Vec::with_capacity(CORPUS_SIZE);
    for i in 0..CORPUS_SIZE {
        let doc = corpus_document(i);
        if let Some(f) = &doc.pdf {
            c.add_pdf(f, doc_pdf(i));
        }
        ids.push(c.add_document(&doc_key(i), doc).expect("fixture documents are valid"));
    }
    for (a, b) in citation_edges() {
        c.add_edge(ids[a].clone(), ids[b].clone());
    }
    c
}

pub fn fixture_clock() -> SharedClock {
    Arc::new(FixedClock::at(
        Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).single().expect("valid date"),
    ))
}

pub fn fixture_stores() -> Stores {
    Stores::new(
        Retriever::in_memory(Arc::new(HashEmbedder::new(HASH_EMBEDDER_DIM, EMBEDDING_SEED))),
        MetricsTable::new().shared(),
    )
}

/// Builds the corpus into fresh stores with a fixed clock and runs one
/// ingestion pass.
pub fn ingest_fixture_corpus() -> Result<(Pipeline, IngestReport), IngestError> {
    let pipeline = Pipeline::from_corpus(Arc::new(synthetic_corpus()), fixture_stores()).with_clock(fixture_clock());
    let report = pipeline.run(&fixture_axes())?;
    Ok((pipeline, report))
}

pub fn simulated_gateway() -> Arc<Gateway> {
    Arc::new(Gateway::new(
        Arc::new(SimulatedProvider::default()),
        RateTable::builtin(),
    ))
}

/// An ingested corpus plus the simulated backend, ready for sweeps.
pub fn offline_harness() -> Result<(HarnessContext, Pipeline), IngestError> {
    let (pipeline, _) = ingest_fixture_corpus()?;
    let ctx = HarnessContext::new(
        simulated_gateway(),
        pipeline.stores().retriever.clone(),
        EngineConfig::default(),
    )
    .with_timing(TimingMode::Simulated { step_ms: 7 });
    Ok((ctx, pipeline))
}

fn question(id: usize, category: QuestionCategory, text: String, gold: String, sources: Vec<usize>) -> Question {
    Question {
        id: format!("q{id:02}"),
        category,
        question: text,
        gold_answer: gold,
        gold_sources: sources.into_iter().map(doc_title).collect(),
    }
}

/// 60 questions, ten per category, each grounded in one or two regular
/// documents.
pub fn fixture_questions() -> QuestionSet {
    let mut qs = Vec::with_capacity(60);
    for (c, cat) in QuestionCategory::ALL.into_iter().enumerate() {
        for n in 0..10 {
            let id = c * 10 + n;
            let i = (id * 7 + 1) % REGULAR_DOCS;
            let j = (i + 6) % REGULAR_DOCS;
            let (p, d, s) = doc_keywords(i);
            let (pj, dj, _) = doc_keywords(j);
            let bw = doc_params(i).bandwidth_ghz;
            let q = match cat {
                QuestionCategory::AnalyticalReasoning => question(
                    id,
                    cat,
                    format!("Why do design trade-offs limit the high-speed behaviour of a {p} {d} for {s} interconnects?"),
                    format!("The {p} {d} trades bandwidth against drive voltage and insertion loss in {s} transceivers."),
                    vec![i],
                ),
                QuestionCategory::NumericalAnalysis => question(
                    id,
                    cat,
                    format!("What 3-dB bandwidth does the {p} {d} for {s} interconnects achieve?"),
                    format!("A 3-dB bandwidth of about {bw} GHz for the {p} {d}."),
                    vec![i],
                ),
                QuestionCategory::MethodologicalCritique => question(
                    id,
                    cat,
                    format!("How was the insertion loss of the {p} {d} for {s} links characterized, and what are the weaknesses?"),
                    format!("Insertion loss of the {p} {d} was measured on chip; packaging effects are not included."),
                    vec![i],
                ),
                QuestionCategory::ComparativeSynthesis => question(
                    id,
                    cat,
                    format!("How does a {p} {d} compare with a {pj} {dj} for optical interconnects?"),
                    format!("The {p} {d} and the {pj} {dj} differ in bandwidth, drive voltage and insertion loss."),
                    vec![i, j],
                ),
                QuestionCategory::FactualExtraction => question(
                    id,
                    cat,
                    format!("Which switching energy per bit is reported for the {p} {d} for {s} interconnects?"),
                    format!("The {p} {d} reports its switching energy in fJ per bit."),
                    vec![i],
                ),
                QuestionCategory::ApplicationDesign => question(
                    id,
                    cat,
                    format!("Would a {p} {d} suit a {s} transceiver design, and how should it be packaged?"),
                    format!("A {p} {d} suits {s} transceivers; flip-chip or wire-bond packaging is used."),
                    vec![i],
                ),
            };
            qs.push(q);
        }
    }
    QuestionSet::new(qs).expect("fixture questions are valid")
}

/// 60 confidence outcomes for scripted gate tests: 14 × 1.0, 17 × 0.75,
/// 12 × 0.5, 10 × 0.25 and 7 × 0.0, interleaved.
pub fn gate_script() -> Vec<ConfidenceScore> {
    let mut pools = [
        (ConfidenceScore::ONE, 14),
        (ConfidenceScore::THREE_QUARTERS, 17),
        (ConfidenceScore::HALF, 12),
        (ConfidenceScore::QUARTER, 10),
        (ConfidenceScore::ZERO, 7),
    ];
    let mut out = Vec::with_capacity(60);
    while out.len() < 60 {
        for (score, left) in pools.iter_mut() {
            if *left > 0 {
                out.push(*score);
                *left -= 1;
            }
        }
    }
    out
}

/// Short passages covering the extraction rule table's phrasings, unit
/// conversions, omissions and distractors.
pub fn extraction_texts() -> Vec<String> {
    [
        "The modulator exhibits a 3-dB bandwidth of 67 GHz.",
        "A 3 dB electro-optic bandwidth of 0.11 THz was measured.",
        "We measured 45000 MHz of 3-dB bandwidth in the photodetector.",
        "It has a VπL of 2.2 V·cm and an on-chip insertion loss of 3.5 dB.",
        "Our Vpi*L of 25 V·mm is competitive.",
        "The chip adds 1.8 dB insertion loss and consumes 120 fJ/bit.",
        "Switching energy is 1.2 pJ/bit at 100G.",
        "No metrics are given in this paragraph about silicon photonics.",
        "A fiber-to-fiber insertion loss of 6 dB and a 3-dB bandwidth of 50 GHz are reported.",
        "3-dB EO bandwidth exceeds 110 GHz while the VπL stays at 1.9 V·cm.",
        "The 3-dB bandwidth is 30 GHz. Later, a 3-dB bandwidth of 40 GHz is claimed.",
        "Energy consumption of 35 fJ per bit is achieved with flip-chip assembly.",
        "Packaging uses wire-bond connections; no performance numbers are stated.",
        "The extinction ratio is 5 dB and the device is 2 mm long.",
        "An insertion loss of 0.9 dB, 3-dB modulation bandwidth of 0.045 THz and 8 fJ/bit are demonstrated.",
        "V_pi L of 3.1 V-cm is measured at 1550 nm.",
        "The 28 GHz 3-dB bandwidth supports 56 Gbaud signalling.",
        "On-chip insertion loss of 2.75 dB was reported alongside 0.35 pJ/bit.",
        "Results: 3-dB bandwidth of 500 MHz, too low for 100G links.",
        "A VπL of 0.8 V·cm with 4 dB insertion loss and 2.5 fJ/bit.",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

/// `confidence,correct` rows where correctness follows roughly 0.6 × the
/// stated confidence, i.e. systematically overconfident.
pub fn overconfident_calibration_csv(rows: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = [0.25, 0.5, 0.75, 1.0];
    let mut out = String::from("confidence,correct\n");
    for n in 0..rows {
        let c = levels[n % levels.len()];
        let ok = rng.random_bool(0.6 * c);
        out.push_str(&format!("{c},{}\n", u8::from(ok)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape() {
        let c = synthetic_corpus();
        assert_eq!(c.len(), CORPUS_SIZE);
        assert!(citation_edges().iter().all(|(a, b)| a != b));
        assert_eq!(gate_script().iter().filter(|s| s.value() >= 0.5).count(), 43);
        assert!(fixture_questions().is_balanced(10));
        assert_eq!(extraction_texts().len(), 20);
    }
}
