use std::fs;
use std::path::Path;
use std::process::Command;

fn ssl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ssl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = ssl(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn gen(dir: &Path, blobs: usize) {
    ok(&["gen", "--out", dir.to_str().unwrap(), "--blobs", &blobs.to_string(), "--blob-cells", "1500", "--seed", "7"]);
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn eig_writes_k_rows() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("c");
    gen(&corpus, 0);
    let out = t.path().join("o");
    ok(&["eig", p(&corpus.join("square.sgrid")), "--k", "5", "--out", p(&out)]);
    let csv = fs::read_to_string(out.join("square.eig.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "index,lambda,normalized_lambda,residual");
    assert_eq!(lines.len(), 6);
}

#[test]
fn malformed_input_reports_line_and_column() {
    let t = tempfile::tempdir().unwrap();
    let bad = t.path().join("bad.sgrid");
    fs::write(&bad, "SGRID 1\n2 0.5\n2 2\n10\n1x\n").unwrap();
    let out = ssl(&["eig", p(&bad)]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=parse"), "{err}");
    assert!(err.contains("line 5, column 2"), "{err}");

    let out = ssl(&["eig", p(&t.path().join("missing.sgrid"))]);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error kind=io"));
    let out = ssl(&["eig", p(&bad), "--k", "0"]);
    assert!(!out.status.success());
}

#[test]
fn pipeline_shrinks_a_filament_domain() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("c");
    gen(&corpus, 0);
    let out = t.path().join("o");
    ok(&["pipeline", p(&corpus.join("filament.sgrid")), "--out", p(&out)]);
    let before = fs::read_to_string(corpus.join("filament.sgrid")).unwrap();
    let after = fs::read_to_string(out.join("filament.pipeline.sgrid")).unwrap();
    let extent = |s: &str| -> Vec<usize> { s.lines().nth(2).unwrap().split(' ').map(|x| x.parse().unwrap()).collect() };
    let (b, a) = (extent(&before), extent(&after));
    assert!(a[0] * a[1] < b[0] * b[1], "{b:?} -> {a:?}");

    let csv = fs::read_to_string(out.join("filament.pipeline.csv")).unwrap();
    let mut rows = csv.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    assert_eq!(header, ["step", "axis", "mode", "t", "class", "accepted", "lambda_1", "lambda_2", "lambda_3", "bbox_x", "bbox_y"]);
    let mut prev: Option<Vec<f64>> = None;
    let mut accepted = 0;
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        if f[5] != "1" {
            continue;
        }
        let l: Vec<f64> = f[6..9].iter().map(|x| x.parse().unwrap()).collect();
        if let Some(p) = &prev {
            if f[2] != "compact" {
                assert!(l.iter().zip(p).all(|(a, b)| a < b), "{row}");
            }
            accepted += 1;
        }
        prev = Some(l);
    }
    assert!(accepted >= 1);
}

#[test]
fn ratio_on_a_blob_corpus_stays_below_the_disk() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("c");
    gen(&corpus, 50);
    for f in ["square", "rectangle", "disk", "dumbbell", "filament"] {
        fs::remove_file(corpus.join(format!("{f}.sgrid"))).unwrap();
    }
    let out = t.path().join("o");
    ok(&["ratio", p(&corpus), "--k", "2", "--out", p(&out)]);
    let report = fs::read_to_string(out.join("ratio.txt")).unwrap();
    let max: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("max_ratio="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(max <= 2.59, "{max}");
    assert!(report.contains("domains=50"));
    assert!(report.contains("certified_all=true"));
    assert_eq!(fs::read_to_string(out.join("ratio.csv")).unwrap().lines().count(), 51);
}

#[test]
fn split_and_surgery_reports() {
    let t = tempfile::tempdir().unwrap();
    let corpus = t.path().join("c");
    gen(&corpus, 0);
    let out = t.path().join("o");
    ok(&["split", p(&corpus.join("dumbbell.sgrid")), "--out", p(&out)]);
    let rep = fs::read_to_string(out.join("dumbbell.split.txt")).unwrap();
    assert!(rep.contains("certified=true"));
    ok(&["surgery", p(&corpus.join("filament.sgrid")), "--out", p(&out)]);
    let csv = fs::read_to_string(out.join("filament.scan.csv")).unwrap();
    assert!(csv.starts_with("t,eps,m,delta,phi,sigma,volume,class,lambda_hat_1,lambda_hat_2,lambda_hat_3\n"));
    assert!(csv.contains(",cond3,"));
    assert!(out.join("filament.surgery.sgrid").exists());
    ok(&["surgery", p(&corpus.join("dumbbell.sgrid")), "--cut", "interior", "--mbar", "0.5", "--out", p(&out)]);
}

#[test]
fn reruns_are_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let c1 = t.path().join("c1");
    let c2 = t.path().join("c2");
    gen(&c1, 2);
    gen(&c2, 2);
    let dump = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    assert_eq!(dump(&c1), dump(&c2));
    let runs: Vec<Vec<(String, Vec<u8>)>> = (0..2)
        .map(|i| {
            let o = t.path().join(format!("o{i}"));
            let f = c1.join("filament.sgrid");
            ok(&["eig", p(&f), "--k", "4", "--out", p(&o)]);
            ok(&["surgery", p(&f), "--out", p(&o)]);
            ok(&["pipeline", p(&f), "--out", p(&o)]);
            ok(&["split", p(&f), "--out", p(&o)]);
            ok(&["ratio", p(&c1), "--k", "3", "--out", p(&o)]);
            ok(&["optimize", "--cells", "400", "--iterations", "40", "--functional", "sum:1,1", "--seed", "3", "--out", p(&o)]);
            dump(&o)
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert!(runs[0].iter().any(|(n, _)| n == "history.csv"));
}
