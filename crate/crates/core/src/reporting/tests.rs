use std::path::Path;

use proptest::prelude::*;

use super::*;

fn table(rows: Vec<Vec<Option<f64>>>) -> ResultsTable {
    let k = rows[0].len();
    ResultsTable::new(
        (0..k).map(|i| format!("c{i}")).collect(),
        (0..rows.len()).map(|i| format!("d{i}")).collect(),
        rows,
    )
    .unwrap()
}

#[test]
fn dominant_classifier_ranks_first() {
    let t = table(vec![vec![Some(0.9), Some(0.5)], vec![Some(0.7), Some(0.6)]]);
    for ties in [TieMethod::Min, TieMethod::Average] {
        assert_eq!(average_rank(&t, ties).unwrap(), vec![1.0, 2.0]);
    }
    assert_eq!(wins_ties(&t).unwrap(), vec![2, 0]);
}

#[test]
fn tie_conventions() {
    let row = [Some(0.8), Some(0.8), Some(0.8)];
    assert_eq!(rank_row(&row, TieMethod::Average), vec![2.0; 3]);
    assert_eq!(rank_row(&row, TieMethod::Min), vec![1.0; 3]);
    let row = [Some(0.9), Some(0.5), Some(0.5), Some(0.1)];
    assert_eq!(rank_row(&row, TieMethod::Average), vec![1.0, 2.5, 2.5, 4.0]);
    assert_eq!(rank_row(&row, TieMethod::Min), vec![1.0, 2.0, 2.0, 4.0]);
}

#[test]
fn blanks_rank_last_and_never_win() {
    let row = [None, Some(0.2), None, Some(0.4)];
    assert_eq!(rank_row(&row, TieMethod::Min), vec![3.0, 2.0, 3.0, 1.0]);
    assert_eq!(rank_row(&row, TieMethod::Average), vec![3.5, 2.0, 3.5, 1.0]);
    let t = table(vec![row.to_vec(), vec![None, None, None, None]]);
    assert_eq!(wins_ties(&t).unwrap(), vec![0, 0, 0, 1]);
}

#[test]
fn single_classifier_ranks_one() {
    let t = table(vec![vec![Some(0.3)], vec![None]]);
    assert_eq!(average_rank(&t, TieMethod::Min).unwrap(), vec![1.0]);
}

#[test]
fn empty_table_is_an_error() {
    let t = ResultsTable::new(vec!["a".into()], vec![], vec![]).unwrap();
    assert!(average_rank(&t, TieMethod::Min).is_err());
    assert!(wins_ties(&t).is_err());
}

#[test]
fn csv_parsing() {
    let origin = Path::new("r.csv");
    let t = ResultsTable::parse_csv("dataset,A,B\nx,0.5,\ny,0.25,0.75\n", origin).unwrap();
    assert_eq!(t.classifiers, ["A", "B"]);
    assert_eq!(t.values, vec![vec![Some(0.5), None], vec![Some(0.25), Some(0.75)]]);
    let back = ResultsTable::parse_csv(std::str::from_utf8(&t.to_csv().unwrap()).unwrap(), origin).unwrap();
    assert_eq!(back, t);

    let pct = ResultsTable::parse_csv("dataset,A,B\nx,50,100\n", origin).unwrap();
    assert_eq!(pct.values[0], vec![Some(0.5), Some(1.0)]);

    for (text, line) in [
        ("dataset,A,B\nx,0.5,0.1\ny,0.2\n", 3),
        ("dataset,A\nx,abc\n", 2),
        ("dataset,A\nx,0.1\ny,-1\n", 3),
    ] {
        match ResultsTable::parse_csv(text, origin) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    assert!(ResultsTable::parse_csv("", origin).is_err());
    assert!(ResultsTable::parse_csv("dataset,A\nx,150\n", origin).is_err());
}

#[test]
fn perfect_scores_on_one_dataset_all_win() {
    let t = ResultsTable::read_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/uea_accuracies.csv")).unwrap();
    let row = t.datasets.iter().position(|d| d == "Basic Motions").unwrap();
    let one = ResultsTable::new(t.classifiers.clone(), vec!["bm".into()], vec![t.values[row].clone()]).unwrap();
    let wins = wins_ties(&one).unwrap();
    assert_eq!(wins.iter().sum::<usize>(), 7);
    for c in [
        "XCM",
        "XCM-Seq",
        "MTEX-CNN",
        "MLSTM-FCN",
        "WEASEL+MUSE",
        "DTW_I",
        "DTW_I (n)",
    ] {
        assert_eq!(wins[t.classifiers.iter().position(|x| x == c).unwrap()], 1, "{c}");
    }
}

#[test]
fn summary_csv_layout() {
    let t = table(vec![vec![Some(0.9), Some(0.5)]]);
    let s = summarize(&t, TieMethod::Min).unwrap();
    let text = String::from_utf8(summary_to_csv(&s).unwrap()).unwrap();
    assert_eq!(text, "classifier,average_rank,wins_ties\nc0,1.0,1\nc1,2.0,0\n");
}

#[test]
fn manifest_lists_files_and_ids_depend_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("b.csv"), "x").unwrap();
    std::fs::write(dir.path().join("a.json"), "{}").unwrap();
    let mut m = RunManifest::new("train", 1).with_config(&("cfg", 3)).unwrap();
    m.add_file("b.csv");
    m.add_file("a.json");
    let path = persist_run(m.clone(), dir.path()).unwrap();
    let loaded = RunManifest::load(&path).unwrap();
    assert_eq!(loaded.files, ["a.json", "b.csv"]);
    assert_eq!(loaded.seed, 1);
    let first = std::fs::read(&path).unwrap();
    persist_run(m.clone(), dir.path()).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);

    let mut other = m.clone();
    other.seed = 2;
    persist_run(other, dir.path()).unwrap();
    assert_ne!(RunManifest::load(&path).unwrap().run_id, loaded.run_id);

    m.add_file("missing.txt");
    assert!(persist_run(m, dir.path()).is_err());
}

fn row_strategy() -> impl Strategy<Value = Vec<Option<f64>>> {
    // Few distinct levels so ties are common.
    prop::collection::vec(prop::option::weighted(0.8, (0u8..5).prop_map(|v| v as f64 / 4.0)), 1..8)
}

proptest! {
    #[test]
    fn average_rank_sums_are_triangular(row in row_strategy()) {
        prop_assume!(row.iter().all(|v| v.is_some()));
        let k = row.len() as f64;
        let s: f64 = rank_row(&row, TieMethod::Average).iter().sum();
        prop_assert_eq!(s, k * (k + 1.0) / 2.0);
    }

    #[test]
    fn wins_ignore_column_order(rows in prop::collection::vec(row_strategy(), 1..5), rot in 0usize..8) {
        let k = rows[0].len();
        let rows: Vec<Vec<Option<f64>>> = rows.into_iter().map(|mut r| { r.resize(k, None); r }).collect();
        let t = table(rows.clone());
        let shift = rot % k;
        let rotated = table(rows.into_iter().map(|mut r| { r.rotate_left(shift); r }).collect());
        let mut w = wins_ties(&t).unwrap();
        w.rotate_left(shift);
        prop_assert_eq!(w, wins_ties(&rotated).unwrap());
        let mut r = average_rank(&t, TieMethod::Min).unwrap();
        r.rotate_left(shift);
        prop_assert_eq!(r, average_rank(&rotated, TieMethod::Min).unwrap());
    }
}
