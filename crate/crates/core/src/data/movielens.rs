//! MovieLens-1M `.dat` files (`::`-separated, Latin-1).
//!
//! User and item indices are `UserID - 1` and `MovieID - 1`; the index space
//! runs up to the largest id listed in `users.dat` / `movies.dat`, so ids
//! missing from those files keep an empty record. No filtering is applied.

use std::path::Path;

use super::text::{read_latin1_lines, title_tokens};
use super::{AttributeKind, AttributeSpec, DataError, Dataset, DemoRecord, Rating, RatingMatrix, Result};

pub const NAME: &str = "movielens-1m";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn parse_id(path: &Path, line: usize, raw: &str, what: &str) -> Result<u32> {
    raw.trim().parse::<u32>().ok().filter(|&v| v >= 1).ok_or_else(|| parse_err(path, line, format!("invalid {what} `{raw}`")))
}

pub fn load_movielens(ratings_path: &Path, users_path: &Path, movies_path: &Path) -> Result<Dataset> {
    let mut users: Vec<(u32, DemoRecord)> = Vec::new();
    for (k, line) in read_latin1_lines(users_path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split("::").collect();
        if f.len() != 5 {
            return Err(parse_err(users_path, k + 1, format!("expected 5 fields, found {}", f.len())));
        }
        let id = parse_id(users_path, k + 1, f[0], "UserID")?;
        let mut rec = DemoRecord::new();
        for (key, value) in [("gender", f[1]), ("age", f[2]), ("occupation", f[3])] {
            if !value.trim().is_empty() {
                rec.insert(key.to_string(), value.trim().to_string());
            }
        }
        users.push((id, rec));
    }

    let mut movies: Vec<(u32, Vec<String>)> = Vec::new();
    for (k, line) in read_latin1_lines(movies_path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        // titles may themselves contain "::"-free text but never the separator,
        // so the first and last fields are unambiguous
        let first = line.find("::").ok_or_else(|| parse_err(movies_path, k + 1, "missing `::`"))?;
        let last = line.rfind("::").filter(|&p| p > first).ok_or_else(|| parse_err(movies_path, k + 1, "expected 3 fields"))?;
        let id = parse_id(movies_path, k + 1, &line[..first], "MovieID")?;
        let title = &line[first + 2..last];
        let mut labels: Vec<String> = line[last + 2..].split('|').map(str::trim).filter(|g| !g.is_empty()).map(String::from).collect();
        labels.extend(title_tokens(title).into_iter().map(|w| format!("title:{w}")));
        movies.push((id, labels));
    }

    let n = users.iter().map(|u| u.0).max().unwrap_or(0) as usize;
    let m = movies.iter().map(|mv| mv.0).max().unwrap_or(0) as usize;
    let mut known_user = vec![false; n];
    let mut user_demo = vec![DemoRecord::new(); n];
    for (id, rec) in users {
        known_user[id as usize - 1] = true;
        user_demo[id as usize - 1] = rec;
    }
    let mut known_item = vec![false; m];
    let mut item_side = vec![Vec::new(); m];
    for (id, labels) in movies {
        known_item[id as usize - 1] = true;
        item_side[id as usize - 1] = labels;
    }

    let mut entries = Vec::new();
    for (k, line) in read_latin1_lines(ratings_path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split("::").collect();
        if f.len() != 4 {
            return Err(parse_err(ratings_path, k + 1, format!("expected 4 fields, found {}", f.len())));
        }
        let uid = parse_id(ratings_path, k + 1, f[0], "UserID")? as usize;
        let iid = parse_id(ratings_path, k + 1, f[1], "MovieID")? as usize;
        let value: f64 = f[2]
            .trim()
            .parse()
            .ok()
            .filter(|v| (1.0..=5.0).contains(v))
            .ok_or_else(|| parse_err(ratings_path, k + 1, format!("invalid rating `{}`", f[2])))?;
        f[3].trim().parse::<u64>().map_err(|_| parse_err(ratings_path, k + 1, format!("invalid timestamp `{}`", f[3])))?;
        if uid > n || !known_user[uid - 1] {
            return Err(DataError::Reference { path: ratings_path.display().to_string(), line: k + 1, kind: "user", id: uid.to_string() });
        }
        if iid > m || !known_item[iid - 1] {
            return Err(DataError::Reference { path: ratings_path.display().to_string(), line: k + 1, kind: "movie", id: iid.to_string() });
        }
        entries.push(Rating { user: (uid - 1) as u32, item: (iid - 1) as u32, value, implicit: false });
    }
    if entries.is_empty() {
        return Err(DataError::Empty(ratings_path.display().to_string()));
    }

    let dataset = Dataset {
        name: NAME.to_string(),
        user_ids: (1..=n).map(|i| i.to_string()).collect(),
        item_ids: (1..=m).map(|i| i.to_string()).collect(),
        ratings: RatingMatrix::new(n, m, entries, (1.0, 5.0))?,
        demo_schema: vec![
            AttributeSpec::new("gender", AttributeKind::Categorical),
            AttributeSpec::new("age", AttributeKind::Categorical),
            AttributeSpec::new("occupation", AttributeKind::Categorical),
        ],
        user_demo,
        item_side,
    };
    dataset.validate()?;
    Ok(dataset)
}
