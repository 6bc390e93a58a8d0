//! Batch orchestration over a manifest: QC, structuring, grounding and pair
//! generation per study in a worker pool, followed by an ordered merge.
//!
//! Output layout:
//!
//! ```text
//! out/
//!   studies/<id>.json     per-study record, reused on rerun
//!   masks/<id>/*.png      grounded lesion masks
//!   grounding.jsonl       per-study grounding traces
//!   qc_report.json        per-study QC outcome
//!   quarantine.jsonl      studies that could not be processed
//!   review_log.jsonl      location phrases the lexicon did not know
//!   pairs.jsonl           all pairs, sorted by pair_id
//!   stats.json, stats.txt pair counts per split
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::Config;
use crate::grounding::{ground_study, FindingTrace};
use crate::io::{self, FormatError};
use crate::model::{
    AnatomicalLabel, Certainty, GroundedLesion, InstructionAnswerPair, LesionType, Split,
    StructuredFinding,
};
use crate::pairgen::{generate_study_pairs, mask_ref, DatasetStats, NegativeInputs, StudyRef};
use crate::qc::{self, QcRecord};
use crate::report::{structure_report, LocationLexicon};
use crate::study::{load_study, Manifest, Study};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("duplicate study id `{0}` in manifest")]
    DuplicateStudy(String),
    #[error("could not start worker pool: {0}")]
    Pool(String),
    #[error("no grounding record for study `{0}`; run the ground stage first")]
    MissingRecord(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// QC and grounding only.
    Ground,
    /// Pairs from existing grounding records.
    Pairs,
    /// Everything.
    All,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub parallelism: usize,
    pub stage: Stage,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            stage: Stage::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyOutcome {
    Processed,
    QcExcluded,
    Quarantined,
}

/// A grounded lesion without its pixels; the mask lives at `mask_ref`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedSummary {
    pub lesion: LesionType,
    pub certainty: Certainty,
    pub reported_locations: BTreeSet<AnatomicalLabel>,
    pub grounded_locations: BTreeSet<AnatomicalLabel>,
    pub empty_locations: BTreeSet<AnatomicalLabel>,
    pub source_finding_index: usize,
    pub mask_ref: String,
}

/// Everything computed for one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_id: String,
    pub split: Split,
    pub input_digest: String,
    pub outcome: StudyOutcome,
    pub reasons: Vec<String>,
    pub qc: Option<QcRecord>,
    pub findings: Vec<StructuredFinding>,
    pub unmapped: Vec<(u32, String)>,
    pub traces: Vec<FindingTrace>,
    pub empty_locations: BTreeSet<AnatomicalLabel>,
    pub grounded: Vec<GroundedSummary>,
    pub pairs: Vec<InstructionAnswerPair>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub studies: usize,
    pub processed: usize,
    pub reused: usize,
    pub qc_excluded: usize,
    pub quarantined: usize,
    pub pairs: usize,
}

fn input_digest(study: &Study, cfg: &Config, lexicon: &LocationLexicon) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(study).expect("study serializes"));
    h.update(cfg.fingerprint().as_bytes());
    for (phrase, labels) in lexicon.phrases() {
        h.update(phrase.as_bytes());
        for l in labels {
            h.update(l.as_str().as_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

fn record_path(out: &Path, id: &str) -> PathBuf {
    out.join("studies").join(format!("{id}.json"))
}

fn quarantined(study: &Study, digest: String, reasons: Vec<String>) -> StudyRecord {
    StudyRecord {
        study_id: study.study_id.clone(),
        split: study.split,
        input_digest: digest,
        outcome: StudyOutcome::Quarantined,
        reasons,
        qc: None,
        findings: Vec::new(),
        unmapped: Vec::new(),
        traces: Vec::new(),
        empty_locations: BTreeSet::new(),
        grounded: Vec::new(),
        pairs: Vec::new(),
    }
}

/// Processes one study from scratch and writes its masks.
pub fn process_study(
    study: &Study,
    root: &Path,
    cfg: &Config,
    lexicon: &LocationLexicon,
    out: &Path,
) -> StudyRecord {
    let digest = input_digest(study, cfg, lexicon);
    let art = match load_study(study, root) {
        Ok(a) => a,
        Err(v) => return quarantined(study, digest, v.iter().map(ToString::to_string).collect()),
    };

    let qc = match qc::assess(
        &study.study_id,
        &study.qc_flags,
        &art.organs,
        &art.secondary_organs(),
        cfg.qc.rel_tol,
    ) {
        Ok(q) => q,
        Err(e) => return quarantined(study, digest, vec![e.to_string()]),
    };
    if !qc.passed() {
        let mut reasons: Vec<String> = qc.flags.iter().map(|f| format!("qc flag: {f}")).collect();
        reasons.extend(qc.cross_check.reasons.iter().cloned());
        let mut r = quarantined(study, digest, reasons);
        r.outcome = StudyOutcome::QcExcluded;
        r.qc = Some(qc);
        return r;
    }

    let (findings, unmapped) = match &art.findings {
        Some(f) => (f.clone(), Vec::new()),
        None => match structure_report(&art.report_text, lexicon) {
            Ok(r) => (r.findings, r.unmapped),
            Err(e) => {
                let mut r = quarantined(study, digest, vec![e.to_string()]);
                r.qc = Some(qc);
                return r;
            }
        },
    };

    let grounding = match ground_study(&art, &findings, cfg) {
        Ok(g) => g,
        Err(e) => {
            let mut r = quarantined(study, digest, vec![e.to_string()]);
            r.qc = Some(qc);
            return r;
        }
    };

    let mut traces = grounding.traces;
    let mut grounded = Vec::new();
    for g in &grounding.lesions {
        let rel = mask_ref(&study.study_id, g.lesion, g.source_finding_index);
        if let Err(e) = io::write_mask(&out.join(&rel), &g.mask) {
            let mut r = quarantined(study, digest, vec![e.to_string()]);
            r.qc = Some(qc);
            return r;
        }
        if let Some(t) = traces.iter_mut().find(|t| t.finding_index == g.source_finding_index) {
            t.mask_path = Some(rel.clone());
        }
        grounded.push(GroundedSummary {
            lesion: g.lesion,
            certainty: g.certainty,
            reported_locations: g.reported_locations.clone(),
            grounded_locations: g.grounded_locations.clone(),
            empty_locations: g.empty_locations.clone(),
            source_finding_index: g.source_finding_index,
            mask_ref: rel,
        });
    }

    let input = NegativeInputs {
        study: StudyRef {
            study_id: &study.study_id,
            split: study.split,
        },
        findings: &findings,
        grounded: &grounding.lesions,
        empty_locations: &grounding.empty_locations,
        ctr: qc.ctr,
    };
    let pairs = generate_study_pairs(&input, &cfg.negatives, &cfg.qc);

    StudyRecord {
        study_id: study.study_id.clone(),
        split: study.split,
        input_digest: digest,
        outcome: StudyOutcome::Processed,
        reasons: Vec::new(),
        qc: Some(qc),
        findings,
        unmapped,
        traces,
        empty_locations: grounding.empty_locations,
        grounded,
        pairs,
    }
}

/// Regenerates a processed record's pairs under `cfg`, reading its masks
/// back from `out`.
fn regenerate_pairs(rec: &StudyRecord, cfg: &Config, out: &Path) -> Result<Vec<InstructionAnswerPair>, FormatError> {
    if rec.outcome != StudyOutcome::Processed {
        return Ok(Vec::new());
    }
    let mut lesions = Vec::new();
    for g in &rec.grounded {
        lesions.push(GroundedLesion {
            lesion: g.lesion,
            certainty: g.certainty,
            mask: io::read_mask(&out.join(&g.mask_ref))?,
            reported_locations: g.reported_locations.clone(),
            grounded_locations: g.grounded_locations.clone(),
            empty_locations: g.empty_locations.clone(),
            source_finding_index: g.source_finding_index,
        });
    }
    let input = NegativeInputs {
        study: StudyRef {
            study_id: &rec.study_id,
            split: rec.split,
        },
        findings: &rec.findings,
        grounded: &lesions,
        empty_locations: &rec.empty_locations,
        ctr: rec.qc.as_ref().and_then(|q| q.ctr),
    };
    Ok(generate_study_pairs(&input, &cfg.negatives, &cfg.qc))
}

fn reusable(out: &Path, study: &Study, digest: &str) -> Option<StudyRecord> {
    let rec: StudyRecord = io::read_json(&record_path(out, &study.study_id)).ok()?;
    if rec.input_digest != digest || rec.study_id != study.study_id {
        return None;
    }
    let masks_present = rec.grounded.iter().all(|g| out.join(&g.mask_ref).is_file());
    masks_present.then_some(rec)
}

#[derive(Serialize)]
struct GroundingLine<'a> {
    study_id: &'a str,
    findings: &'a [FindingTrace],
    empty_locations: &'a BTreeSet<AnatomicalLabel>,
}

#[derive(Serialize)]
struct QuarantineLine<'a> {
    study_id: &'a str,
    reasons: &'a [String],
}

#[derive(Serialize)]
struct ReviewLine<'a> {
    study_id: &'a str,
    sentence_index: u32,
    phrase: &'a str,
}

/// Runs the pipeline over `manifest`, writing into `out`. Per-study records
/// already present with a matching input digest are reused, so an
/// interrupted run can simply be repeated.
pub fn run_pipeline(
    manifest: &Manifest,
    cfg: &Config,
    lexicon: &LocationLexicon,
    out: &Path,
    opts: RunOptions,
) -> Result<RunSummary, PipelineError> {
    let mut seen = HashSet::new();
    for s in &manifest.studies {
        if !seen.insert(s.study_id.as_str()) {
            return Err(PipelineError::DuplicateStudy(s.study_id.clone()));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| FormatError::io(out, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;

    let results: Vec<Result<(StudyRecord, bool), PipelineError>> = pool.install(|| {
        manifest
            .studies
            .par_iter()
            .map(|study| {
                let digest = input_digest(study, cfg, lexicon);
                if opts.stage == Stage::Pairs {
                    let rec: StudyRecord = io::read_json(&record_path(out, &study.study_id))
                        .map_err(|_| PipelineError::MissingRecord(study.study_id.clone()))?;
                    let mut rec = rec;
                    rec.pairs = regenerate_pairs(&rec, cfg, out)?;
                    return Ok((rec, true));
                }
                if let Some(rec) = reusable(out, study, &digest) {
                    return Ok((rec, true));
                }
                let rec = process_study(study, &manifest.root, cfg, lexicon, out);
                io::write_json(&record_path(out, &study.study_id), &rec)?;
                Ok((rec, false))
            })
            .collect()
    });

    let mut records = Vec::with_capacity(results.len());
    let mut summary = RunSummary {
        studies: manifest.studies.len(),
        ..RunSummary::default()
    };
    for r in results {
        let (rec, reused) = r?;
        if reused {
            summary.reused += 1;
        }
        match rec.outcome {
            StudyOutcome::Processed => summary.processed += 1,
            StudyOutcome::QcExcluded => summary.qc_excluded += 1,
            StudyOutcome::Quarantined => summary.quarantined += 1,
        }
        records.push(rec);
    }
    records.sort_by(|a, b| a.study_id.cmp(&b.study_id));

    if opts.stage != Stage::Pairs {
        let grounding: Vec<GroundingLine> = records
            .iter()
            .filter(|r| r.outcome == StudyOutcome::Processed)
            .map(|r| GroundingLine {
                study_id: &r.study_id,
                findings: &r.traces,
                empty_locations: &r.empty_locations,
            })
            .collect();
        io::write_jsonl(&out.join("grounding.jsonl"), &grounding)?;
        let qc: Vec<&QcRecord> = records.iter().filter_map(|r| r.qc.as_ref()).collect();
        io::write_json(&out.join("qc_report.json"), &qc)?;
        let quarantine: Vec<QuarantineLine> = records
            .iter()
            .filter(|r| r.outcome == StudyOutcome::Quarantined)
            .map(|r| QuarantineLine {
                study_id: &r.study_id,
                reasons: &r.reasons,
            })
            .collect();
        io::write_jsonl(&out.join("quarantine.jsonl"), &quarantine)?;
        let review: Vec<ReviewLine> = records
            .iter()
            .flat_map(|r| {
                r.unmapped.iter().map(move |(i, p)| ReviewLine {
                    study_id: &r.study_id,
                    sentence_index: *i,
                    phrase: p,
                })
            })
            .collect();
        io::write_jsonl(&out.join("review_log.jsonl"), &review)?;
    }

    if opts.stage != Stage::Ground {
        let mut pairs: Vec<InstructionAnswerPair> =
            records.iter().flat_map(|r| r.pairs.iter().cloned()).collect();
        pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        pairs.dedup_by(|a, b| a.pair_id == b.pair_id);
        summary.pairs = pairs.len();
        io::write_jsonl(&out.join("pairs.jsonl"), &pairs)?;
        let stats = DatasetStats::from_pairs(&pairs);
        io::write_json(&out.join("stats.json"), &stats)?;
        io::write_atomic(&out.join("stats.txt"), stats.render_text().as_bytes())?;
    }
    Ok(summary)
}

/// Reads every per-study record in `out`, keyed by study id.
pub fn load_records(out: &Path) -> Result<BTreeMap<String, StudyRecord>, FormatError> {
    let dir = out.join("studies");
    let mut map = BTreeMap::new();
    let entries = std::fs::read_dir(&dir).map_err(|e| FormatError::io(&dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| FormatError::io(&dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let rec: StudyRecord = io::read_json(&path)?;
            map.insert(rec.study_id.clone(), rec);
        }
    }
    Ok(map)
}
