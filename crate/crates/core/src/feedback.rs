//! Spoken-feedback records for final detections: one utterance per object,
//! highest score first, named after its class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ClassTable;
use crate::postprocess::Detection;

/// Utterances emitted per frame unless configured otherwise (indices 0..=12).
pub const DEFAULT_MAX_ITEMS: usize = 13;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    pub text: String,
    pub suggested_filename: String,
}

impl Utterance {
    /// Tab-separated `index, text, filename` line.
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}", self.index, self.text, self.suggested_filename)
    }
}

/// Drops one leading all-digit token and turns underscores into spaces:
/// `"004_sugar_box"` becomes `"sugar box"`.
pub fn speakable_name(class_name: &str) -> String {
    let stripped = match class_name.split_once(['_', ' ', '-']) {
        Some((head, rest)) if !head.is_empty() && head.bytes().all(|b| b.is_ascii_digit()) => rest,
        _ => class_name,
    };
    let words: Vec<&str> = stripped.split(['_', ' ']).filter(|w| !w.is_empty()).collect();
    if words.is_empty() {
        class_name.replace('_', " ").trim().to_string()
    } else {
        words.join(" ")
    }
}

pub fn utterances(dets: &[Detection], classes: &ClassTable, max_items: usize) -> Result<Vec<Utterance>> {
    if max_items == 0 {
        return Err(Error::invalid("max_items must be positive"));
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order.truncate(max_items);

    order
        .into_iter()
        .enumerate()
        .map(|(index, i)| {
            let name = classes
                .name(dets[i].class_id)
                .ok_or(Error::UnknownCategories(vec![dets[i].class_id]))?;
            Ok(Utterance { index, text: speakable_name(name), suggested_filename: format!("{index}.wav") })
        })
        .collect()
}
