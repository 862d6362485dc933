//! Hand-evaluated fixtures and brute-force oracles. Each check returns a
//! short summary on success and a description of the first mismatch on
//! failure.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spex::biencoder::{loss_contrastive, loss_recon_pair, BiEncoderModel, Pairing};
use spex::eval::{
    ap_at_k, build_exclusion_queries, evaluate_run, mrr_at_k, ndcg_at_k, paired_t_test,
    student_t_two_tailed, ExclusionQuery, Metric,
};
use spex::io::LabeledImage;
use spex::linalg::{self, Matrix};
use spex::retrieval::{
    dense_search, exclude_pipeline, rank_order, ExclusionParams, InvertedIndex, QueryEncoder,
    RankedList,
};
use spex::sae::{loss_asl, loss_psl, loss_rl};
use spex::{DenseEmbeddingSet, SparseEmbeddingSet, SparseVector};

pub type Check = Result<String, String>;

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!(
            "{name}: got {got}, expected {want} (tolerance {tol})"
        ))
    }
}

fn v(rows: &[&[f64]]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.to_vec()).collect()
}

/// Every hand-evaluated loss example.
pub fn loss_fixtures() -> Check {
    let e = |r: spex::Result<f64>| r.map_err(|e| e.to_string());
    let mut n = 0;
    let mut check = |name: &str, got: f64, want: f64, tol: f64| {
        n += 1;
        close(name, got, want, tol)
    };
    check(
        "rl identity",
        e(loss_rl(&v(&[&[0.3, -2.0]]), &v(&[&[0.3, -2.0]])))?,
        0.0,
        1e-6,
    )?;
    check(
        "rl single",
        e(loss_rl(&v(&[&[1.0, 0.0]]), &v(&[&[0.0, 0.0]])))?,
        1.0,
        1e-6,
    )?;
    check(
        "rl mean",
        e(loss_rl(
            &v(&[&[1.0, 0.0], &[0.0, 0.0]]),
            &v(&[&[0.0, 0.0], &[0.0, 3f64.sqrt()]]),
        ))?,
        2.0,
        1e-6,
    )?;
    check(
        "asl below target",
        e(loss_asl(&v(&[&[0.1, 0.05], &[0.0, 0.15]]), 0.15))?,
        0.0,
        1e-6,
    )?;
    check(
        "asl hinge",
        e(loss_asl(&v(&[&[0.15, 0.20]]), 0.15))?,
        0.0025,
        1e-6,
    )?;
    check("asl saturated", e(loss_asl(&v(&[&[1.0]]), 0.0))?, 1.0, 1e-6)?;
    check(
        "psl endpoints",
        e(loss_psl(&v(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 0.0]])))?,
        0.0,
        1e-6,
    )?;
    check(
        "psl single",
        e(loss_psl(&v(&[&[0.5, 1.0, 0.0]])))?,
        0.25,
        1e-6,
    )?;
    check(
        "psl pair",
        e(loss_psl(&v(&[&[0.5, 0.5], &[0.0, 0.0]])))?,
        0.25,
        1e-6,
    )?;
    let same = [0.4, -0.1];
    for p in [Pairing::Cross, Pairing::Same] {
        check(
            "recon identity",
            e(loss_recon_pair(&same, &same, &same, &same, p))?,
            0.0,
            1e-6,
        )?;
    }
    let z = [0.0, 0.0];
    check(
        "recon cross",
        e(loss_recon_pair(&[1.0, 0.0], &z, &z, &z, Pairing::Cross))?,
        1.0,
        1e-6,
    )?;
    check(
        "recon same",
        e(loss_recon_pair(&[1.0, 0.0], &z, &z, &z, Pairing::Same))?,
        1.0,
        1e-6,
    )?;
    let (a, b) = ([1.0, 0.0], [0.0, 1.0]);
    check(
        "recon cross swap",
        e(loss_recon_pair(&a, &b, &b, &a, Pairing::Cross))?,
        0.0,
        1e-6,
    )?;
    check(
        "recon same swap",
        e(loss_recon_pair(&a, &b, &b, &a, Pairing::Same))?,
        4.0,
        1e-6,
    )?;
    let basis = v(&[&[1.0, 0.0], &[0.0, 1.0]]);
    check(
        "contrastive 2x2",
        e(loss_contrastive(&basis, &basis, 1.0))?,
        0.3133,
        1e-4,
    )?;
    check(
        "contrastive 2x2 exact",
        e(loss_contrastive(&basis, &basis, 1.0))?,
        (1.0 + (-1f64).exp()).ln(),
        1e-6,
    )?;
    let flat = v(&[&[1.0, 1.0], &[2.0, 2.0], &[0.5, 0.5]]);
    check(
        "contrastive uniform",
        e(loss_contrastive(&flat, &flat, 0.07))?,
        3f64.ln(),
        1e-6,
    )?;
    Ok(format!("{n} fixtures"))
}

fn rel(ids: &[&str]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

fn ranked(ids: &[&str]) -> RankedList {
    let n = ids.len();
    RankedList {
        cutoff: 10,
        entries: ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), (n - i) as f64))
            .collect(),
    }
}

/// Two-tailed critical values of Student's t (α = 0.01 and α = 0.05) at
/// ν = 1, 2, 10, 30, as printed in standard tables.
pub const T_TABLE: [(f64, f64, f64); 4] = [
    (1.0, 63.657, 12.706),
    (2.0, 9.925, 4.303),
    (10.0, 3.169, 2.228),
    (30.0, 2.750, 2.042),
];

/// Metric fixtures, the paired t-test example and the t table.
pub fn metric_fixtures() -> Check {
    let e = |r: spex::Result<f64>| r.map_err(|e| e.to_string());
    let r4 = ["x", "y", "z", "hit", "w"];
    close(
        "mrr rank 1",
        mrr_at_k(&["hit"], &rel(&["hit"]), 10),
        1.0,
        1e-6,
    )?;
    close("mrr rank 4", mrr_at_k(&r4, &rel(&["hit"]), 10), 0.25, 1e-6)?;
    close("mrr cutoff", mrr_at_k(&r4, &rel(&["hit"]), 1), 0.0, 1e-6)?;
    close(
        "ndcg ideal",
        e(ndcg_at_k(&["a", "b"], &rel(&["a", "b", "c"]), 2))?,
        1.0,
        1e-6,
    )?;
    let ndcg = e(ndcg_at_k(&["r1", "n", "r2"], &rel(&["r1", "r2"]), 3))?;
    close(
        "ndcg ranks 1,3",
        ndcg,
        1.5 / (1.0 + 1.0 / 3f64.log2()),
        1e-6,
    )?;
    close("ndcg ranks 1,3 printed", ndcg, 0.91972, 5e-6)?;
    close(
        "ndcg none",
        e(ndcg_at_k(&["n"], &rel(&["a"]), 5))?,
        0.0,
        1e-6,
    )?;
    close(
        "ap pattern 0101",
        e(ap_at_k(&["n1", "r1", "n2", "r2"], &rel(&["r1", "r2"]), 4))?,
        0.5,
        1e-6,
    )?;
    close(
        "ap perfect prefix",
        e(ap_at_k(&["a", "b"], &rel(&["a", "b", "c"]), 2))?,
        1.0,
        1e-6,
    )?;
    close("ap none", e(ap_at_k(&["n"], &rel(&["a"]), 5))?, 0.0, 1e-6)?;

    let ap10: Metric = "AP@10".parse().unwrap();
    let q = |a: &str, b: &str, r: &[&str]| ExclusionQuery::new(a.into(), b.into(), rel(r)).unwrap();
    let perfect = evaluate_run(
        &[("a|b".into(), ranked(&["i1", "i2"]))],
        &[q("a", "b", &["i1", "i2"])],
        &Metric::defaults(),
    )
    .map_err(|e| e.to_string())?;
    if perfect.means.iter().any(|&m| (m - 1.0).abs() > 1e-6) {
        return Err(format!("perfect single query: means {:?}", perfect.means));
    }
    let two = evaluate_run(
        &[
            ("a|b".into(), ranked(&["i1"])),
            ("c|d".into(), ranked(&["x"])),
        ],
        &[q("a", "b", &["i1"]), q("c", "d", &["i9"])],
        &[ap10],
    )
    .map_err(|e| e.to_string())?;
    close("two-query mean AP", two.means[0], 0.5, 1e-6)?;
    // Five queries: AP@10 by hand = 1, (1/2)/2, 1/3, (1 + 2/3)/2, 0.
    let queries = [
        q("a", "b", &["p"]),
        q("a", "c", &["p", "q"]),
        q("b", "c", &["p"]),
        q("c", "a", &["p", "q"]),
        q("c", "b", &["p"]),
    ];
    let run = [
        ("a|b".to_string(), ranked(&["p", "x"])),
        ("a|c".to_string(), ranked(&["x", "p", "y"])),
        ("b|c".to_string(), ranked(&["x", "y", "p"])),
        ("c|a".to_string(), ranked(&["p", "x", "q"])),
        ("c|b".to_string(), ranked(&["x"])),
    ];
    let five = evaluate_run(&run, &queries, &[ap10]).map_err(|e| e.to_string())?;
    let by_hand = [1.0, 0.25, 1.0 / 3.0, (1.0 + 2.0 / 3.0) / 2.0, 0.0];
    for (got, want) in five.queries.iter().zip(by_hand) {
        close(
            &format!("AP@10 {}", got.query_id),
            got.values[0],
            want,
            1e-6,
        )?;
    }
    close(
        "five-query mean",
        five.means[0],
        by_hand.iter().sum::<f64>() / 5.0,
        1e-6,
    )?;

    let t = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], 0.01).map_err(|e| e.to_string())?;
    close(
        "t statistic",
        t.t_statistic.unwrap_or(f64::NAN),
        3.4641,
        1e-3,
    )?;
    close("p value", t.p_value.unwrap_or(f64::NAN), 0.0742, 1e-3)?;
    if t.significant || t.degrees_of_freedom != 2 {
        return Err(format!("d = (1,2,3) verdict wrong: {t:?}"));
    }
    let tight =
        paired_t_test(&[5.0, 5.1, 4.9, 5.05, 4.95], &[0.0; 5], 0.01).map_err(|e| e.to_string())?;
    if !tight.significant || tight.t_statistic.unwrap_or(0.0) < 10.0 {
        return Err(format!("tight differences not significant: {tight:?}"));
    }
    if !paired_t_test(&[1.0, 2.0], &[1.0, 2.0], 0.01)
        .map_err(|e| e.to_string())?
        .degenerate
    {
        return Err("zero-variance differences not flagged degenerate".into());
    }
    for (nu, c99, c95) in T_TABLE {
        close(
            &format!("p at t = {c99}, nu = {nu}"),
            student_t_two_tailed(c99, nu),
            0.01,
            1e-3,
        )?;
        close(
            &format!("p at t = {c95}, nu = {nu}"),
            student_t_two_tailed(c95, nu),
            0.05,
            1e-3,
        )?;
    }
    Ok("metric, t-test and t-table fixtures".into())
}

fn random_sparse(rng: &mut ChaCha8Rng, dim: usize, density: f64) -> SparseVector {
    let dense: Vec<f64> = (0..dim)
        .map(|_| {
            if rng.random::<f64>() < density {
                (rng.random_range(1..=8) as f64) / 8.0
            } else {
                0.0
            }
        })
        .collect();
    SparseVector::from_dense(&dense)
}

fn brute_sparse(set: &SparseEmbeddingSet, q: &SparseVector, k: usize) -> RankedList {
    let mut scored: Vec<(String, f64)> = set
        .iter()
        .map(|(id, v)| (id.to_owned(), q.dot(v)))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(rank_order);
    scored.truncate(k);
    RankedList {
        cutoff: k,
        entries: scored,
    }
}

fn brute_dense(set: &DenseEmbeddingSet, q: &[f64], k: usize) -> RankedList {
    let qn = linalg::norm(q);
    let mut scored: Vec<(String, f64)> = set
        .iter()
        .filter_map(|(id, v)| {
            let v = linalg::to_f64(v);
            let vn = linalg::norm(&v);
            (vn > 0.0).then(|| (id.to_owned(), linalg::dot(q, &v) / (qn * vn)))
        })
        .collect();
    scored.sort_by(rank_order);
    scored.truncate(k);
    RankedList {
        cutoff: k,
        entries: scored,
    }
}

/// Inverted-index and dense search against brute-force scoring: `records`
/// random records (a tenth of them exact duplicates, to force ties) and
/// `queries` random queries, at several cutoffs.
pub fn index_oracle(records: usize, queries: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 64;
    let mut sparse = SparseEmbeddingSet::new(dim);
    let mut dense = DenseEmbeddingSet::new(16);
    let mut pool: Vec<SparseVector> = Vec::new();
    let mut dense_pool: Vec<Vec<f32>> = Vec::new();
    for i in 0..records {
        let id = format!("r{:03}", rng.random_range(0..1000) * 1000 + i);
        let sv = if i % 10 == 9 {
            pool[rng.random_range(0..pool.len())].clone()
        } else {
            random_sparse(&mut rng, dim, 0.1)
        };
        let dv: Vec<f32> = if i % 10 == 9 {
            dense_pool[rng.random_range(0..dense_pool.len())].clone()
        } else {
            (0..16)
                .map(|_| (rng.random_range(-8..=8) as f32) / 8.0)
                .collect()
        };
        sparse
            .push(id.clone(), sv.clone())
            .map_err(|e| e.to_string())?;
        dense.push(id, &dv).map_err(|e| e.to_string())?;
        pool.push(sv);
        dense_pool.push(dv);
    }
    let index = InvertedIndex::build(&sparse).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for qi in 0..queries {
        let q = random_sparse(&mut rng, dim, 0.2);
        let dq: Vec<f64> = loop {
            let c: Vec<f64> = (0..16)
                .map(|_| (rng.random_range(-8..=8) as f64) / 8.0)
                .collect();
            if linalg::norm(&c) > 0.0 {
                break c;
            }
        };
        for k in [1, 10, records] {
            let got = index.search(&q, k).map_err(|e| e.to_string())?;
            if got != brute_sparse(&sparse, &q, k) {
                return Err(format!(
                    "sparse query {qi} at k = {k} differs from brute force"
                ));
            }
            let got = dense_search(&dense, &dq, k).map_err(|e| e.to_string())?;
            if got != brute_dense(&dense, &dq, k) {
                return Err(format!(
                    "dense query {qi} at k = {k} differs from brute force"
                ));
            }
            compared += 2;
        }
    }
    Ok(format!(
        "{records} records, {queries} queries, {compared} ranked lists identical"
    ))
}

/// Labels on disjoint blocks of dimensions. An image's sparse vector spreads
/// one unit of mass per dimension over its labels, like a mean-pooled
/// caption of label words; each label also has `solo` single-label images.
pub struct OracleCorpus {
    pub labels: Vec<String>,
    pub index: InvertedIndex,
    pub labeled: Vec<LabeledImage>,
    pub model: BiEncoderModel,
    pub label_embeddings: DenseEmbeddingSet,
    pub block: usize,
}

pub fn oracle_corpus(
    seed: u64,
    label_count: usize,
    block: usize,
    solo: usize,
    mixed: usize,
) -> OracleCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<String> = (0..label_count).map(|l| format!("label{l}")).collect();
    let dim = label_count * block;
    let mut held: Vec<BTreeSet<usize>> = Vec::new();
    for l in 0..label_count {
        for _ in 0..solo {
            held.push(BTreeSet::from([l]));
        }
    }
    for _ in 0..mixed {
        let a = rng.random_range(0..label_count);
        let mut b = rng.random_range(0..label_count - 1);
        if b >= a {
            b += 1;
        }
        held.push(BTreeSet::from([a, b]));
    }
    held.shuffle(&mut rng);
    let mut set = SparseEmbeddingSet::new(dim);
    let mut labeled = Vec::with_capacity(held.len());
    for (n, ls) in held.iter().enumerate() {
        let id = format!("img{n:04}");
        let mut dense = vec![0.0; dim];
        for &l in ls {
            for j in 0..block {
                dense[l * block + j] = rng.random_range(0.8..1.0) / ls.len() as f64;
            }
        }
        set.push(id.clone(), SparseVector::from_dense(&dense))
            .unwrap();
        labeled.push(LabeledImage {
            image_id: id,
            labels: ls.iter().map(|&l| labels[l].clone()).collect(),
        });
    }
    // Text branch maps the one-hot label embedding e_l onto block l.
    let mut model = BiEncoderModel::init(label_count, dim, seed).unwrap();
    let mut w = Matrix::zeros(dim, label_count);
    for l in 0..label_count {
        for j in 0..block {
            w.set(l * block + j, l, 1.0);
        }
    }
    model.text.enc_w = w;
    model.text.enc_b = vec![0.0; dim];
    let mut label_embeddings = DenseEmbeddingSet::new(label_count);
    for (l, name) in labels.iter().enumerate() {
        let mut e = vec![0.0f32; label_count];
        e[l] = 1.0;
        label_embeddings.push(name.clone(), &e).unwrap();
    }
    OracleCorpus {
        labels,
        index: InvertedIndex::build(&set).unwrap(),
        labeled,
        model,
        label_embeddings,
        block,
    }
}

/// exclude_pipeline on disjoint-dimension oracle corpora: every query must
/// reach AP@10 = 1 and no returned image may carry the excluded label.
pub fn exclusion_soundness(corpora: usize) -> Check {
    let ap10: Metric = "AP@10".parse().unwrap();
    let params = ExclusionParams::default();
    let mut total = 0;
    for seed in 0..corpora as u64 {
        let c = oracle_corpus(seed, 6, 4, 12, 60);
        let encoder = QueryEncoder {
            model: &c.model,
            label_embeddings: &c.label_embeddings,
            words: None,
            top_t: c.block,
            eps_active: 0.1,
        };
        let queries = build_exclusion_queries(&c.labeled, 2, 2).map_err(|e| e.to_string())?;
        if queries.is_empty() {
            return Err(format!("corpus {seed}: no queries"));
        }
        let mut run = Vec::with_capacity(queries.len());
        for q in &queries {
            let result = exclude_pipeline(&c.index, q.include(), q.exclude(), &params, &encoder)
                .map_err(|e| e.to_string())?;
            if result.empty_remainder {
                return Err(format!("corpus {seed}, {}: empty remainder", q.id()));
            }
            for (id, _) in &result.ranked.entries {
                let carries = c
                    .labeled
                    .iter()
                    .find(|l| &l.image_id == id)
                    .is_some_and(|l| l.labels.contains(q.exclude()));
                if carries {
                    return Err(format!(
                        "corpus {seed}, {}: returned {id}, which carries {}",
                        q.id(),
                        q.exclude()
                    ));
                }
            }
            run.push((q.id(), result.ranked));
        }
        let report = evaluate_run(&run, &queries, &[ap10]).map_err(|e| e.to_string())?;
        if let Some(bad) = report.queries.iter().find(|s| s.values[0] != 1.0) {
            return Err(format!(
                "corpus {seed}, {}: AP@10 = {}",
                bad.query_id, bad.values[0]
            ));
        }
        total += queries.len();
    }
    Ok(format!(
        "{total} queries over {corpora} corpora, all AP@10 = 1, no excluded label returned"
    ))
}
