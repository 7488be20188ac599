//! `user<TAB>item<TAB>timestamp` interaction files.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use seqmorph_core::data::{InteractionSequence, ItemId, UserId};

use crate::error::FormatError;

/// Sequences with dense ids plus the original tokens, indexed by id.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<InteractionSequence>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

impl Dataset {
    /// Dataset with numeric tokens (`"0"`, `"1"`, ...) for already dense ids.
    pub fn from_dense(sequences: Vec<InteractionSequence>, vocab: usize) -> Self {
        let users = sequences.iter().map(|s| s.user.0 as usize + 1).max().unwrap_or(0);
        Self {
            sequences,
            user_ids: (0..users).map(|u| u.to_string()).collect(),
            item_ids: (0..vocab).map(|i| i.to_string()).collect(),
        }
    }

    pub fn vocab(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_index(&self, token: &str) -> Option<usize> {
        let id = self.user_ids.iter().position(|u| u == token)?;
        self.sequences.iter().position(|s| s.user.0 as usize == id)
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(input)
}

struct Row {
    user: String,
    item: String,
    time: i64,
}

/// Parses interactions, sorts each user by timestamp (stable), drops users
/// with fewer than `min_interactions` and remaps surviving items to dense ids
/// in first-seen order.
pub fn parse<R: Read>(input: R, min_interactions: usize) -> Result<Dataset, FormatError> {
    let mut rows = Vec::new();
    for rec in reader(input).into_records() {
        let rec = rec?;
        // comments are skipped here rather than by the reader so that line
        // numbers still count them
        if rec.get(0).is_some_and(|f| f.starts_with('#')) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(FormatError::Parse {
                line,
                detail: format!("expected 3 tab-separated fields, found {}", rec.len()),
            });
        }
        let time = rec[2].trim().parse::<i64>().map_err(|e| FormatError::Parse {
            line,
            detail: format!("timestamp {:?}: {e}", &rec[2]),
        })?;
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(FormatError::Parse {
                line,
                detail: "empty user or item".into(),
            });
        }
        rows.push(Row {
            user: rec[0].to_string(),
            item: rec[1].to_string(),
            time,
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_user: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_user
            .entry(r.user.clone())
            .or_insert_with(|| {
                order.push(r.user.clone());
                Vec::new()
            })
            .push(i);
    }

    let mut sequences = Vec::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut item_index: HashMap<&str, u32> = HashMap::new();
    for user in &order {
        let mut idx = by_user[user].clone();
        if idx.len() < min_interactions {
            continue;
        }
        idx.sort_by_key(|&i| rows[i].time);
        let mut items = Vec::with_capacity(idx.len());
        for &i in &idx {
            let token = rows[i].item.as_str();
            let id = *item_index.entry(token).or_insert_with(|| {
                item_ids.push(token.to_string());
                (item_ids.len() - 1) as u32
            });
            items.push(ItemId(id));
        }
        let mut seq = InteractionSequence::new(UserId(user_ids.len() as u32), items);
        seq.timestamps = Some(idx.iter().map(|&i| rows[i].time).collect());
        user_ids.push(user.clone());
        sequences.push(seq);
    }
    if sequences.is_empty() {
        return Err(FormatError::EmptyDataset(format!(
            "no user has at least {min_interactions} interactions"
        )));
    }
    Ok(Dataset {
        sequences,
        user_ids,
        item_ids,
    })
}

pub fn read(path: &Path, min_interactions: usize) -> Result<Dataset, FormatError> {
    let file = std::fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    parse(std::io::BufReader::new(file), min_interactions)
}

/// Writes one line per interaction. Sequences without timestamps use the
/// position in the sequence.
pub fn write<W: Write>(out: W, data: &Dataset) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(out);
    for s in &data.sequences {
        let user = &data.user_ids[s.user.0 as usize];
        for (j, item) in s.items.iter().enumerate() {
            let t = s.timestamps.as_ref().map_or(j as i64, |ts| ts[j]);
            w.write_record([user.as_str(), data.item_ids[item.index()].as_str(), &t.to_string()])?;
        }
    }
    w.flush().map_err(|e| FormatError::Csv(e.into()))?;
    Ok(())
}
