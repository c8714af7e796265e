use std::fs;
use std::path::{Path, PathBuf};

use mfdcf_core::data::{load_bookcrossing_with, load_movielens, BookCrossingOptions, DataError};

fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, bytes).unwrap();
    p
}

fn ml_files(dir: &Path, ratings: &[u8]) -> (PathBuf, PathBuf, PathBuf) {
    let users = write(dir, "users.dat", b"1::F::1::10::48067\n2::M::56::16::70072\n4::M::45::7::02460\n");
    // 0xE9 is Latin-1 e-acute
    let movies = write(dir, "movies.dat", b"1::Toy Story (1995)::Animation|Children's|Comedy\n3::Am\xe9lie (2001)::Comedy|Romance\n");
    let ratings = write(dir, "ratings.dat", ratings);
    (ratings, users, movies)
}

#[test]
fn movielens_fixture_shape_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (r, u, m) = ml_files(dir.path(), b"1::1::5::978300760\n2::3::3::978302109\n4::1::4::978301968\n1::3::2::1\n1::3::4::2\n");
    let d = load_movielens(&r, &u, &m).unwrap();
    assert_eq!(d.n_users(), 4);
    assert_eq!(d.n_items(), 3);
    // the repeated (1, 3) pair keeps its last value
    assert_eq!(d.ratings.len(), 4);
    assert!(d.ratings.entries().iter().any(|x| x.user == 0 && x.item == 2 && x.value == 4.0));
    assert!((d.ratings.sparsity() - (1.0 - 4.0 / 12.0)).abs() < 1e-12);
    assert!(d.item_side[2].contains(&"title:amélie".to_string()));
    assert!(d.item_side[0].contains(&"Children's".to_string()));
    assert!(d.item_side[1].is_empty());
    assert_eq!(d.user_demo[1]["age"], "56");
    assert!(d.user_demo[2].is_empty());
}

#[test]
fn movielens_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let (r, u, m) = ml_files(dir.path(), b"1::1::5::978300760\n2::3::three::978302109\n");
    match load_movielens(&r, &u, &m) {
        Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
    let (r, u, m) = ml_files(dir.path(), b"1::1::5::978300760\n2::2::3::978302109\n");
    match load_movielens(&r, &u, &m) {
        Err(DataError::Reference { line, kind, id, .. }) => {
            assert_eq!((line, kind, id.as_str()), (2, "movie", "2"));
        }
        other => panic!("expected reference error, got {other:?}"),
    }
    let (r, u, m) = ml_files(dir.path(), b"3::1::5::1\n");
    assert!(matches!(load_movielens(&r, &u, &m), Err(DataError::Reference { kind: "user", .. })));
    let (r, u, m) = ml_files(dir.path(), b"\n");
    assert!(matches!(load_movielens(&r, &u, &m), Err(DataError::Empty(_))));
}

fn bx_files(dir: &Path, ratings: &str) -> (PathBuf, PathBuf, PathBuf) {
    let users = write(
        dir,
        "BX-Users.csv",
        b"\"User-ID\";\"Location\";\"Age\"\n\"1\";\"nyc, new york, usa\";NULL\n\"2\";\"porto, porto, portugal\";\"31\"\n\"3\";\"x, y, usa\";\"240\"\n",
    );
    let books = write(
        dir,
        "BX-Books.csv",
        b"\"ISBN\";\"Book-Title\";\"Book-Author\";\"Year-Of-Publication\";\"Publisher\";\"Image-URL-S\"\n\"a\";\"Clara Callan\";\"Richard Bruce Wright\";\"2001\";\"HarperFlamingo Canada\";\"u\"\n\"b\";\"The \"\"Quoted\"\" Title\";\"Some One\";\"1999\";\"Pub\";\"u\"\n",
    );
    let ratings = write(dir, "BX-Book-Ratings.csv", ratings.as_bytes());
    (ratings, users, books)
}

#[test]
fn bookcrossing_filter_reaches_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    // item c has one rating; dropping it leaves user 3 with one rating, which a
    // single filtering pass would keep
    let (r, u, b) = bx_files(
        dir.path(),
        "\"User-ID\";\"ISBN\";\"Book-Rating\"\n\"1\";\"a\";\"8\"\n\"1\";\"b\";\"0\"\n\"2\";\"a\";\"5\"\n\"2\";\"b\";\"9\"\n\"3\";\"a\";\"7\"\n\"3\";\"c\";\"10\"\n",
    );
    let opts = BookCrossingOptions { min_user_ratings: 2, min_item_ratings: 2 };
    let d = load_bookcrossing_with(&r, &u, &b, &opts).unwrap();
    assert_eq!(d.user_ids, vec!["1", "2"]);
    assert_eq!(d.item_ids, vec!["a", "b"]);
    assert_eq!(d.ratings.len(), 4);
    let implicit: Vec<_> = d.ratings.entries().iter().filter(|x| x.implicit).collect();
    assert_eq!(implicit.len(), 1);
    assert_eq!(implicit[0].value, 5.5);
    assert!(d.item_side[0].contains(&"author:richard bruce wright".to_string()));
    assert!(d.item_side[0].contains(&"title:clara".to_string()));
    assert!(d.item_side[1].contains(&"title:quoted".to_string()));
    assert!(!d.user_demo[0].contains_key("age"));
}

#[test]
fn bookcrossing_unknown_user_and_missing_book() {
    let dir = tempfile::tempdir().unwrap();
    let (r, u, b) = bx_files(dir.path(), "\"1\";\"a\";\"8\"\n\"9\";\"a\";\"8\"\n");
    match load_bookcrossing_with(&r, &u, &b, &BookCrossingOptions { min_user_ratings: 1, min_item_ratings: 1 }) {
        Err(DataError::Reference { line, kind, .. }) => assert_eq!((line, kind), (2, "user")),
        other => panic!("expected reference error, got {other:?}"),
    }
    let (r, u, b) = bx_files(dir.path(), "\"1\";\"zzz\";\"8\"\n");
    let d = load_bookcrossing_with(&r, &u, &b, &BookCrossingOptions { min_user_ratings: 1, min_item_ratings: 1 }).unwrap();
    assert_eq!(d.item_ids, vec!["zzz"]);
    assert!(d.item_side[0].is_empty());
    let (r, u, b) = bx_files(dir.path(), "\"1\";\"a\";\"11\"\n");
    assert!(matches!(load_bookcrossing_with(&r, &u, &b, &BookCrossingOptions::default()), Err(DataError::Parse { line: 1, .. })));
}
