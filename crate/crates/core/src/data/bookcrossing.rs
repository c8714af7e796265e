//! BookCrossing CSV dump (`;`-separated, double-quoted, Latin-1).
//!
//! Implicit feedback (rating 0) is kept as an interaction valued at the scale
//! midpoint and counts toward the activity filters. Users and items below the
//! rating thresholds are removed repeatedly until nothing changes. Ratings
//! for ISBNs absent from the books file are kept with empty side information.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::{read_latin1_lines, split_bx_fields, title_tokens};
use super::{AttributeKind, AttributeSpec, DataError, Dataset, DemoRecord, Rating, RatingMatrix, Result};

pub const NAME: &str = "bookcrossing";
const SCALE: (f64, f64) = (1.0, 10.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BookCrossingOptions {
    pub min_user_ratings: usize,
    pub min_item_ratings: usize,
}

impl Default for BookCrossingOptions {
    fn default() -> Self {
        Self { min_user_ratings: 20, min_item_ratings: 20 }
    }
}

pub fn load_bookcrossing(ratings_path: &Path, users_path: &Path, books_path: &Path) -> Result<Dataset> {
    load_bookcrossing_with(ratings_path, users_path, books_path, &BookCrossingOptions::default())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn is_header(line: &str) -> bool {
    line.starts_with("\"User-ID\"") || line.starts_with("\"ISBN\"")
}

pub fn load_bookcrossing_with(ratings_path: &Path, users_path: &Path, books_path: &Path, opts: &BookCrossingOptions) -> Result<Dataset> {
    let mut users: HashMap<u64, DemoRecord> = HashMap::new();
    for (k, line) in read_latin1_lines(users_path)?.iter().enumerate() {
        if line.trim().is_empty() || is_header(line) {
            continue;
        }
        let f = split_bx_fields(line);
        if f.len() < 2 {
            return Err(parse_err(users_path, k + 1, format!("expected 3 fields, found {}", f.len())));
        }
        let id: u64 = f[0].trim().parse().map_err(|_| parse_err(users_path, k + 1, format!("invalid User-ID `{}`", f[0])))?;
        let mut rec = DemoRecord::new();
        if !f[1].trim().is_empty() {
            rec.insert("location".into(), f[1].trim().to_string());
        }
        if let Some(age) = f.get(2).map(|a| a.trim()).filter(|a| !a.is_empty() && *a != "NULL") {
            rec.insert("age".into(), age.to_string());
        }
        users.insert(id, rec);
    }

    let mut books: HashMap<String, Vec<String>> = HashMap::new();
    for (k, line) in read_latin1_lines(books_path)?.iter().enumerate() {
        if line.trim().is_empty() || is_header(line) {
            continue;
        }
        let f = split_bx_fields(line);
        if f.is_empty() || f[0].trim().is_empty() {
            return Err(parse_err(books_path, k + 1, "missing ISBN"));
        }
        let mut labels: Vec<String> =
            f.get(1).map(|t| title_tokens(t)).unwrap_or_default().into_iter().map(|w| format!("title:{w}")).collect();
        if let Some(author) = f.get(2).map(|a| a.trim().to_lowercase()).filter(|a| !a.is_empty()) {
            labels.push(format!("author:{author}"));
        }
        if let Some(publisher) = f.get(4).map(|p| p.trim().to_lowercase()).filter(|p| !p.is_empty()) {
            labels.push(format!("publisher:{publisher}"));
        }
        books.insert(f[0].trim().to_string(), labels);
    }

    // (user id, isbn) -> (value, implicit); later lines overwrite earlier ones
    let mut raw: BTreeMap<(u64, String), (f64, bool)> = BTreeMap::new();
    for (k, line) in read_latin1_lines(ratings_path)?.iter().enumerate() {
        if line.trim().is_empty() || is_header(line) {
            continue;
        }
        let f = split_bx_fields(line);
        if f.len() != 3 {
            return Err(parse_err(ratings_path, k + 1, format!("expected 3 fields, found {}", f.len())));
        }
        let uid: u64 = f[0].trim().parse().map_err(|_| parse_err(ratings_path, k + 1, format!("invalid User-ID `{}`", f[0])))?;
        let isbn = f[1].trim().to_string();
        if isbn.is_empty() {
            return Err(parse_err(ratings_path, k + 1, "empty ISBN"));
        }
        let score: u32 = f[2]
            .trim()
            .parse()
            .ok()
            .filter(|v| *v <= 10)
            .ok_or_else(|| parse_err(ratings_path, k + 1, format!("invalid rating `{}`", f[2])))?;
        if !users.contains_key(&uid) {
            return Err(DataError::Reference { path: ratings_path.display().to_string(), line: k + 1, kind: "user", id: uid.to_string() });
        }
        let entry = if score == 0 { ((SCALE.0 + SCALE.1) / 2.0, true) } else { (f64::from(score), false) };
        raw.insert((uid, isbn), entry);
    }
    if raw.is_empty() {
        return Err(DataError::Empty(ratings_path.display().to_string()));
    }

    let kept = filter_to_fixed_point(raw.keys().map(|(u, i)| (*u, i.clone())).collect(), opts);

    let mut user_list: Vec<u64> = kept.iter().map(|(u, _)| *u).collect();
    user_list.sort_unstable();
    user_list.dedup();
    let mut item_list: Vec<String> = kept.iter().map(|(_, i)| i.clone()).collect();
    item_list.sort();
    item_list.dedup();
    let user_pos: HashMap<u64, u32> = user_list.iter().enumerate().map(|(p, &u)| (u, p as u32)).collect();
    let item_pos: HashMap<&str, u32> = item_list.iter().enumerate().map(|(p, i)| (i.as_str(), p as u32)).collect();

    let entries: Vec<Rating> = kept
        .iter()
        .map(|(u, i)| {
            let (value, implicit) = raw[&(*u, i.clone())];
            Rating { user: user_pos[u], item: item_pos[i.as_str()], value, implicit }
        })
        .collect();
    if entries.is_empty() {
        return Err(DataError::Empty(format!("{} after activity filtering", ratings_path.display())));
    }

    let dataset = Dataset {
        name: NAME.to_string(),
        ratings: RatingMatrix::new(user_list.len(), item_list.len(), entries, SCALE)?,
        user_ids: user_list.iter().map(u64::to_string).collect(),
        user_demo: user_list.iter().map(|u| users[u].clone()).collect(),
        item_side: item_list.iter().map(|i| books.get(i).cloned().unwrap_or_default()).collect(),
        item_ids: item_list,
        demo_schema: vec![AttributeSpec::new("location", AttributeKind::CountryToken), AttributeSpec::new("age", AttributeKind::AgeDecade)],
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Repeatedly drops users and items below the activity thresholds until a
/// pass removes nothing.
pub(crate) fn filter_to_fixed_point(mut pairs: Vec<(u64, String)>, opts: &BookCrossingOptions) -> Vec<(u64, String)> {
    loop {
        let mut per_user: HashMap<u64, usize> = HashMap::new();
        let mut per_item: HashMap<&str, usize> = HashMap::new();
        for (u, i) in &pairs {
            *per_user.entry(*u).or_default() += 1;
            *per_item.entry(i.as_str()).or_default() += 1;
        }
        let keep: Vec<bool> =
            pairs.iter().map(|(u, i)| per_user[u] >= opts.min_user_ratings && per_item[i.as_str()] >= opts.min_item_ratings).collect();
        if keep.iter().all(|&k| k) {
            return pairs;
        }
        let mut it = keep.into_iter();
        pairs.retain(|_| it.next().unwrap_or(false));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(spec: &[(u64, &str)]) -> Vec<(u64, String)> {
        spec.iter().map(|(u, i)| (*u, i.to_string())).collect()
    }

    #[test]
    fn fixed_point_is_stable() {
        let opts = BookCrossingOptions { min_user_ratings: 2, min_item_ratings: 2 };
        let p = pairs(&[(1, "a"), (1, "b"), (2, "a"), (2, "b"), (3, "a"), (3, "c")]);
        let once = filter_to_fixed_point(p, &opts);
        let twice = filter_to_fixed_point(once.clone(), &opts);
        assert_eq!(once, twice);
    }
}
