#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mfdcf_cli::config::{Overrides, RunConfig};

pub const USERS: usize = 40;
pub const MOVIES: usize = 30;

fn lcg(state: &mut u64) -> u64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    *state >> 33
}

/// MovieLens-format dump with two taste groups split by gender: women
/// rate the first half of the catalogue highly, men the second half.
pub fn write_movielens(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let mut users = String::new();
    for u in 1..=USERS {
        let gender = if u % 2 == 0 { "F" } else { "M" };
        let age = [1, 18, 25, 35, 45][u % 5];
        writeln!(users, "{u}::{gender}::{age}::{}::{:05}", u % 7, 10000 + u).unwrap();
    }
    let mut movies = String::new();
    for i in 1..=MOVIES {
        let genre = if i <= MOVIES / 2 { "Drama|Romance" } else { "Action|Thriller" };
        writeln!(movies, "{i}::Movie {} part {} (1999)::{genre}", ["Red", "Blue", "Green"][i % 3], i).unwrap();
    }
    let mut ratings = String::new();
    let mut state = 17u64;
    for u in 1..=USERS {
        let liked = if u % 2 == 0 { 1..=MOVIES / 2 } else { MOVIES / 2 + 1..=MOVIES };
        let mut seen = Vec::new();
        while seen.len() < 8 {
            let i = 1 + (lcg(&mut state) as usize) % MOVIES;
            if !seen.contains(&i) {
                seen.push(i);
            }
        }
        for i in seen {
            let value = if liked.contains(&i) { 4 + lcg(&mut state) % 2 } else { 1 + lcg(&mut state) % 2 };
            writeln!(ratings, "{u}::{i}::{value}::{}", 978300000 + i).unwrap();
        }
    }
    fs::write(dir.join("users.dat"), users).unwrap();
    fs::write(dir.join("movies.dat"), movies).unwrap();
    fs::write(dir.join("ratings.dat"), ratings).unwrap();
}

pub fn toml_config(data: &Path, out: &Path) -> String {
    format!(
        r#"out = "{}"

[dataset]
dir = "{}"

[hyper]
bits = 8
max_iters = 8

[features]
preference_dim = 4

[split]
cold_fraction = 0.25
repeats = 2

[eval]
ks = [2, 4, 8]

[grid]
alpha = [1.0, 1000.0, 1.0]

[bench]
bits = [4, 8]
fractions = [0.5, 1.0]
fraction_bits = 4
warmup = 1
timed = 1
"#,
        out.display(),
        data.display()
    )
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub data: PathBuf,
    pub out: PathBuf,
    pub config_path: PathBuf,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("ml");
        let out = dir.path().join("out");
        write_movielens(&data);
        let config_path = dir.path().join("run.toml");
        fs::write(&config_path, toml_config(&data, &out)).unwrap();
        Self { dir, data, out, config_path }
    }

    pub fn config(&self) -> RunConfig {
        RunConfig::load(Some(&self.config_path), &Overrides::default()).unwrap()
    }

    pub fn config_with_out(&self, name: &str) -> RunConfig {
        let out = self.dir.path().join(name);
        RunConfig::load(Some(&self.config_path), &Overrides { out: Some(out), ..Default::default() }).unwrap()
    }
}
