//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero on failure.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nutripipe::corpus::{preprocess, DayQuartile, PostRecord, Tag};
use nutripipe::embeddings::{EmbeddingVector, VectorStore};
use nutripipe::explain::{shapley_exact, shapley_sampled};
use nutripipe::food_db::{FoodDatabase, FoodItem, FoodSource};
use nutripipe::matcher::{calibrate_from_rows, estimate_nutrition, FoodIndex, MAX_MATCHES};
use nutripipe::model::{roc_auc, train_gbt_logged, Dataset, EvalReport, GbtConfig};
use nutripipe::pipeline::synthetic::{write_synthetic, SyntheticConfig};
use nutripipe::pipeline::{importance_file, run_pipeline, ImportanceArtifact, PipelineConfig};
use nutripipe::model::{FeatureSet, Task};
use nutripipe::textfeat::{chi_square_2x2, mann_whitney_u, spearman_rho};

const EST_TOL: f64 = 1e-9;
const CHI_TOL: f64 = 1e-9;
const AUC_TOL: f64 = 1e-12;
const LOCAL_ACC_TOL: f64 = 1e-6;
const SHAP_ORACLE_TOL: f64 = 1e-9;
const SAMPLED_SE_MULT: f64 = 4.0;
const SAMPLED_MIN_FRACTION: f64 = 0.99;
const STAT_TOL: f64 = 1e-12;
const MIN_SEPARABLE_AUC: f64 = 0.95;
const MIN_AUC_DELTA: f64 = 0.03;
const IMPORTANCE_TOP: usize = 3;
const LOSS_SLACK: f64 = 1e-12;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(t0: Instant, limit: Duration) -> Result<(), String> {
    check(t0.elapsed() < limit, || format!("took {:.1?}, limit {limit:?}", t0.elapsed()))
}

// 1. weighted-mean estimation

fn oracle_cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum();
    dot / (na.sqrt() * nb.sqrt())
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dim = 8;
    let mut some = 0;
    for case in 0..200 {
        let n_items = rng.gen_range(1..40);
        let items: Vec<FoodItem> = (0..n_items)
            .map(|i| FoodItem {
                id: format!("{:03}", rng.gen_range(0..1000) * 100 + i),
                description: format!("food {i}"),
                kcal: rng.gen_range(0.0..900.0),
                protein_g: rng.gen_range(0.0..60.0),
                carb_g: rng.gen_range(0.0..90.0),
                fat_g: rng.gen_range(0.0..80.0),
                source: FoodSource::Other,
            })
            .collect();
        let mut store = VectorStore::new(dim);
        let mut vecs: Vec<Vec<f32>> = Vec::new();
        for (i, it) in items.iter().enumerate() {
            // occasional exact duplicates exercise the id tie-break
            let v = if i > 0 && rng.gen_bool(0.15) {
                vecs[rng.gen_range(0..i)].clone()
            } else {
                (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
            };
            store.insert(it.id.clone(), EmbeddingVector::new(v.clone())).unwrap();
            vecs.push(v);
        }
        let title = format!("title {case}");
        let q: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        store.insert(title.clone(), EmbeddingVector::new(q.clone())).unwrap();

        let sims: Vec<f64> = vecs.iter().map(|v| oracle_cosine(&q, v)).collect();
        let mut distinct = sims.clone();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        let pick = rng.gen_range(0..=distinct.len());
        let threshold = match pick {
            0 => distinct[0] + 0.01,
            k if k == distinct.len() => distinct[k - 1] - 0.01,
            k => (distinct[k - 1] + distinct[k]) / 2.0,
        };

        let mut ranked: Vec<usize> = (0..n_items).filter(|&i| sims[i] >= threshold).collect();
        ranked.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then_with(|| items[a].id.cmp(&items[b].id)));
        ranked.truncate(MAX_MATCHES);

        let db = FoodDatabase::from_items(items.clone());
        let index = FoodIndex::build(&db, &store).map_err(|e| e.to_string())?;
        let got = estimate_nutrition(&title, &index, &store, threshold).map_err(|e| e.to_string())?;
        match got {
            None => check(ranked.is_empty(), || format!("case {case}: no estimate but {} oracle matches", ranked.len()))?,
            Some(est) => {
                some += 1;
                check(!ranked.is_empty(), || format!("case {case}: estimate without oracle matches"))?;
                let w: f64 = ranked.iter().map(|&i| sims[i]).sum();
                let want = |f: fn(&FoodItem) -> f64| ranked.iter().map(|&i| sims[i] * f(&items[i])).sum::<f64>() / w;
                let pairs = [
                    (est.kcal, want(|i| i.kcal)),
                    (est.protein_g, want(|i| i.protein_g)),
                    (est.carb_g, want(|i| i.carb_g)),
                    (est.fat_g, want(|i| i.fat_g)),
                ];
                for (g, w) in pairs {
                    check((g - w).abs() <= EST_TOL, || format!("case {case}: {g} vs {w}"))?;
                }
                let ids: Vec<&str> = ranked.iter().map(|&i| items[i].id.as_str()).collect();
                let got_ids: Vec<&str> = est.matches.iter().map(|(id, _)| id.as_str()).collect();
                check(ids == got_ids, || format!("case {case}: matches {got_ids:?} vs {ids:?}"))?;
            }
        }
    }
    within_time(t0, Duration::from_secs(1))?;
    Ok(format!("200 cases ({some} with matches) within {EST_TOL:e}, {:.0?}", t0.elapsed()))
}

// 2. threshold calibration

fn rank_ceil(n: usize, num: usize, den: usize) -> usize {
    (num * n).div_ceil(den).max(1)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let quantiles = [(0.95, 95, 100), (0.99, 99, 100), (0.999, 999, 1000)];
    for case in 0..50 {
        let rows_n = rng.gen_range(1..=50);
        let cols = rng.gen_range(1..=200);
        let rows: Vec<Vec<f64>> = (0..rows_n)
            .map(|_| {
                (0..cols)
                    .map(|_| if rng.gen_bool(0.1) { 0.5 } else { rng.gen_range(-0.2..1.0) })
                    .collect()
            })
            .collect();
        let mut thresholds = Vec::new();
        for (q, num, den) in quantiles {
            let rep = calibrate_from_rows(&rows, q, 0.01).map_err(|e| e.to_string())?;
            let want: Vec<f64> = rows
                .iter()
                .map(|r| {
                    let mut s = r.clone();
                    s.sort_by(f64::total_cmp);
                    s[rank_ceil(s.len(), num, den) - 1]
                })
                .collect();
            check(rep.per_post_quantiles == want, || format!("case {case} q={q}: per-post quantiles differ"))?;
            let mut m = want.clone();
            m.sort_by(f64::total_cmp);
            let med = if m.len() % 2 == 1 {
                m[m.len() / 2]
            } else {
                (m[m.len() / 2 - 1] + m[m.len() / 2]) / 2.0
            };
            check(rep.median_quantile == med, || format!("case {case} q={q}: median {} vs {med}", rep.median_quantile))?;
            thresholds.push(rep.threshold);
        }
        check(thresholds.windows(2).all(|w| w[0] <= w[1]), || format!("case {case}: thresholds {thresholds:?}"))?;
    }
    Ok("50 matrices exact; thresholds monotone in q".into())
}

// 3. chi-square

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut n = 0;
    while n < 1000 {
        let [a, b, c, d]: [u64; 4] = std::array::from_fn(|_| rng.gen_range(0..500));
        let Ok(r) = chi_square_2x2(a, b, c, d) else {
            check((a + b) * (c + d) * (a + c) * (b + d) == 0, || format!("spurious error on {a},{b},{c},{d}"))?;
            continue;
        };
        let (af, bf, cf, df) = (a as f64, b as f64, c as f64, d as f64);
        let nn = af + bf + cf + df;
        let want = nn * (af * df - bf * cf).powi(2) / ((af + bf) * (cf + df) * (af + cf) * (bf + df));
        check((r.statistic - want).abs() <= CHI_TOL * want.max(1.0), || format!("{a},{b},{c},{d}: {} vs {want}", r.statistic))?;
        n += 1;
    }
    for _ in 0..200 {
        let (x, y) = (rng.gen_range(1..50u64), rng.gen_range(1..50u64));
        let (k, m) = (rng.gen_range(1..20u64), rng.gen_range(1..20u64));
        let r = chi_square_2x2(k * x, k * y, m * x, m * y).map_err(|e| e.to_string())?;
        check(r.statistic == 0.0, || format!("proportional table gave {}", r.statistic))?;
    }
    Ok(format!("1000 tables within {CHI_TOL:e}; 200 proportional tables give 0"))
}

// 4. ROC-AUC

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            den += 1.0;
            num += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    num / den
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..100 {
        let n = rng.gen_range(2..=500);
        let rate = rng.gen_range(0.1..0.9);
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(rate))).collect();
        labels[0] = 0;
        labels[1] = 1;
        let levels = if case % 2 == 0 { 7.0 } else { 1e6 };
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0.0f64..1.0) * levels).floor() / levels).collect();
        let auc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = pairwise_auc(&scores, &labels);
        check((auc - want).abs() <= AUC_TOL, || format!("case {case}: {auc} vs {want}"))?;
        let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
        let comp = roc_auc(&scores, &flipped).map_err(|e| e.to_string())?;
        check(auc + comp == 1.0, || format!("case {case}: {auc} + {comp} != 1"))?;
    }
    Ok(format!("100 sets within {AUC_TOL:e}; complement identity exact"))
}

// 5. Shapley

fn criterion_5() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut within, mut total, mut worst_acc, mut worst_oracle) = (0usize, 0usize, 0.0f64, 0.0f64);
    for m_i in 0..20 {
        let d = rng.gen_range(2..=10);
        let dummies: Vec<usize> = (0..d).filter(|_| rng.gen_bool(0.25)).take(d - 1).collect();
        let (n_trees, depth) = (rng.gen_range(1..6), rng.gen_range(1..4));
        let model = common::random_model(&mut rng, d, &dummies, n_trees, depth);
        let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
        let bg = common::random_rows(&mut rng, 12, d);
        for (k, x) in common::random_rows(&mut rng, 5, d).iter().enumerate() {
            let e = shapley_exact(&model, &names, "x", x, &bg).map_err(|e| e.to_string())?;
            let gap = e.local_accuracy_gap();
            worst_acc = worst_acc.max(gap);
            check(gap <= LOCAL_ACC_TOL, || format!("model {m_i}: local accuracy gap {gap}"))?;
            for &j in &dummies {
                check(e.phi[j] == 0.0, || format!("model {m_i}: dummy f{j} got {}", e.phi[j]))?;
            }
            let oracle = common::coalition_oracle(&model, x, &bg);
            for (a, b) in e.phi.iter().zip(&oracle) {
                worst_oracle = worst_oracle.max((a - b).abs());
            }
            check(worst_oracle <= SHAP_ORACLE_TOL, || format!("model {m_i}: oracle gap {worst_oracle}"))?;
            let s = shapley_sampled(&model, &names, "x", x, &bg, 1000, (m_i * 100 + k) as u64).map_err(|e| e.to_string())?;
            for ((p, q), se) in s.phi.iter().zip(&e.phi).zip(s.std_err.as_ref().unwrap()) {
                total += 1;
                if (p - q).abs() <= SAMPLED_SE_MULT * se + 1e-12 {
                    within += 1;
                }
            }
        }
    }
    let frac = within as f64 / total as f64;
    check(frac >= SAMPLED_MIN_FRACTION, || format!("sampled within 4 SE for only {within}/{total}"))?;
    within_time(t0, Duration::from_secs(60))?;
    Ok(format!(
        "20 models: max local gap {worst_acc:.1e}, max oracle gap {worst_oracle:.1e}, sampled {within}/{total} within 4 SE, {:.1?}",
        t0.elapsed()
    ))
}

// 6. boosting sanity

fn separable(n: usize, seed: u64) -> Dataset {
    let w = [0.9, -0.6, 0.4, 0.25, -0.8];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    while rows.len() < n {
        let x: Vec<f64> = (0..w.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        if s.abs() < 0.05 {
            continue; // keep a margin so the classes are strictly separable
        }
        labels.push(u8::from(s > 0.0));
        rows.push(x);
    }
    Dataset::new((0..w.len()).map(|i| format!("x{i}")).collect(), rows, labels).unwrap()
}

fn criterion_6() -> Outcome {
    let train = separable(1000, 61);
    let test = separable(1000, 62);
    let cfg = GbtConfig::new(26, 4, 0.3).with_seed(6);
    let (model, losses) = train_gbt_logged(&train, &cfg).map_err(|e| e.to_string())?;
    check(losses.len() == 27, || format!("{} losses", losses.len()))?;
    for (i, w) in losses.windows(2).enumerate() {
        check(w[1] <= w[0] + LOSS_SLACK, || format!("round {}: logloss {} -> {}", i + 1, w[0], w[1]))?;
    }
    let scores = model.predict_margins(&test.rows).map_err(|e| e.to_string())?;
    let auc = roc_auc(&scores, &test.labels).map_err(|e| e.to_string())?;
    check(auc >= MIN_SEPARABLE_AUC, || format!("test AUC {auc}"))?;
    Ok(format!("logloss {:.4} -> {:.4} monotone, test AUC {auc:.4}", losses[0], losses[26]))
}

// 7. planted signal end to end

fn criterion_7() -> Outcome {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let inputs = tmp.path().join("inputs");
    write_synthetic(
        &inputs,
        &SyntheticConfig {
            n_posts: 20_000,
            seed: 77,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::default();
    cfg.seed = 7;
    cfg.paths.food_db = inputs.join("food_db.csv");
    cfg.paths.posts = inputs.join("posts.jsonl");
    cfg.paths.output = tmp.path().join("run");
    run_pipeline(&cfg).map_err(|e| e.to_string())?;

    let run = tmp.path().join("run");
    let text = fs::read_to_string(run.join("engagement/evaluation.json")).map_err(|e| e.to_string())?;
    let reports: Vec<EvalReport> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let get = |label: &str| reports.iter().find(|r| r.feature_set == label).cloned();
    let c = get("C").ok_or("no C row")?;
    let cn = get("C+N").ok_or("no C+N row")?;
    let delta = cn.roc_auc - c.roc_auc;
    check(delta >= MIN_AUC_DELTA, || format!("AUC(C+N) - AUC(C) = {delta:.4}"))?;
    check(c.ci_high < cn.ci_low, || format!("CIs overlap: C {:?} C+N {:?}", (c.ci_low, c.ci_high), (cn.ci_low, cn.ci_high)))?;

    let cn_set: FeatureSet = "C+N".parse().map_err(|e| format!("{e:?}"))?;
    let path = run.join(importance_file(Task::Engagement, cn_set, "json"));
    let imp: ImportanceArtifact = serde_json::from_str(&fs::read_to_string(path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let rank = imp.importance.rank_of("kcal").ok_or("kcal not ranked")?;
    check(rank <= IMPORTANCE_TOP, || format!("kcal ranked {rank}"))?;
    within_time(t0, Duration::from_secs(300))?;
    Ok(format!(
        "C {:.3} [{:.3},{:.3}] C+N {:.3} [{:.3},{:.3}], delta {delta:.3}, kcal rank {rank}, {:.0?}",
        c.roc_auc,
        c.ci_low,
        c.ci_high,
        cn.roc_auc,
        cn.ci_low,
        cn.ci_high,
        t0.elapsed()
    ))
}

// 8. statistics oracles

fn mwu_oracle_p(n: usize, n1: usize, x_ranks_mask: u32) -> f64 {
    let u_of = |mask: u32| -> i64 {
        let r: i64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i as i64 + 1).sum();
        r - (n1 * (n1 + 1) / 2) as i64
    };
    let u_obs = u_of(x_ranks_mask);
    let (mut le, mut ge, mut tot) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let u = u_of(mask);
        tot += 1;
        le += u64::from(u <= u_obs);
        ge += u64::from(u >= u_obs);
    }
    (2.0 * le.min(ge) as f64 / tot as f64).min(1.0)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut cases = 0;
    for n in 2..=12usize {
        for n1 in 1..n {
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != n1 {
                    continue;
                }
                // values are ranks 1..n in shuffled presentation order
                let mut x: Vec<f64> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i as f64 + 1.0).collect();
                let mut y: Vec<f64> = (0..n).filter(|i| mask & (1 << i) == 0).map(|i| i as f64 + 1.0).collect();
                x.shuffle(&mut rng);
                y.shuffle(&mut rng);
                let r = mann_whitney_u(&x, &y).map_err(|e| e.to_string())?;
                let want = mwu_oracle_p(n, n1, mask);
                check((r.p_value - want).abs() <= STAT_TOL, || format!("n1={n1} n2={} mask={mask:b}: {} vs {want}", n - n1, r.p_value))?;
                cases += 1;
            }
        }
    }
    for case in 0..100 {
        let n = rng.gen_range(3..60);
        let mut xs: Vec<f64> = (0..n).map(|i| i as f64 + rng.gen_range(0.0..0.5)).collect();
        let mut ys: Vec<f64> = (0..n).map(|i| (i * 3) as f64 + rng.gen_range(0.0..0.5)).collect();
        xs.shuffle(&mut rng);
        ys.shuffle(&mut rng);
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            let mut r = vec![0i64; v.len()];
            for (k, &i) in idx.iter().enumerate() {
                r[i] = k as i64 + 1;
            }
            r
        };
        let (rx, ry) = (rank(&xs), rank(&ys));
        let d2: i64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
        let nn = n as f64;
        let want = 1.0 - 6.0 * d2 as f64 / (nn * (nn * nn - 1.0));
        let got = spearman_rho(&xs, &ys).map_err(|e| e.to_string())?.statistic;
        check((got - want).abs() <= STAT_TOL, || format!("spearman case {case}: {got} vs {want}"))?;
    }
    Ok(format!("{cases} exact MWU cases and 100 Spearman samples within {STAT_TOL:e}"))
}

// 9. preprocessing

fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<PostRecord> {
    const TITLES: [&str; 8] = ["Pizza!!", "pizza", "Beef stew 🍲", "[deleted]", "", "Mac & cheese (baked)", "🍕🍕", "  tacos  "];
    let n = rng.gen_range(0..40);
    let mut t = 1_600_000_000i64;
    (0..n)
        .map(|i| {
            t += rng.gen_range(0..400);
            let raw = TITLES[rng.gen_range(0..TITLES.len())].to_string();
            PostRecord {
                id: format!("p{i}"),
                author: if rng.gen_bool(0.05) { "[deleted]".into() } else { format!("u{}", rng.gen_range(0..3)) },
                title_clean: String::new(),
                title_raw: raw,
                created_utc: t,
                num_comments: rng.gen_range(0..5),
                score: 0,
                tag: Tag::OtherOrMissing,
            }
        })
        .collect()
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for case in 0..1000 {
        let mut posts = random_corpus(&mut rng);
        posts.shuffle(&mut rng);
        let (once, _) = preprocess(posts);
        let (twice, rep) = preprocess(once.clone());
        check(twice == once, || format!("corpus {case}: not idempotent"))?;
        check(rep.removed_duplicates == 0 && rep.removed_empty_or_deleted == 0, || format!("corpus {case}: second pass removed rows"))?;
    }

    // planted chains: every member within five minutes of the chain head
    let mut posts = Vec::new();
    let mut heads = Vec::new();
    let mut t = 1_600_000_000i64;
    for c in 0..200 {
        t += 1000;
        let len = rng.gen_range(1..6);
        let mut offsets: Vec<i64> = (0..len).map(|k| if k == 0 { 0 } else { rng.gen_range(1..=300) }).collect();
        offsets.sort_unstable();
        for (k, off) in offsets.iter().enumerate() {
            posts.push(PostRecord {
                id: format!("c{c}_{k}"),
                author: format!("a{}", c % 7),
                title_raw: format!("dish {}", c % 5),
                title_clean: String::new(),
                created_utc: t + off,
                num_comments: 0,
                score: 0,
                tag: Tag::Homemade,
            });
        }
        heads.push(format!("c{c}_0"));
    }
    posts.shuffle(&mut rng);
    let (kept, _) = preprocess(posts);
    let mut kept_ids: Vec<String> = kept.into_iter().map(|p| p.id).collect();
    kept_ids.sort();
    heads.sort();
    check(kept_ids == heads, || "dedup survivors differ from chain heads".to_string())?;

    let table = [(0..6, DayQuartile::Q1), (6..12, DayQuartile::Q2), (12..18, DayQuartile::Q3), (18..24, DayQuartile::Q4)];
    for (hours, q) in table {
        for h in hours {
            check(DayQuartile::from_hour(h) == q, || format!("hour {h}"))?;
            let ts = 1_600_041_600 + i64::from(h) * 3600 + 1799; // 2020-09-14 00:00 UTC + h
            check(nutripipe::corpus::utc_hour(ts) == h, || format!("utc_hour at {h}"))?;
        }
    }
    Ok("1000 corpora idempotent; 200 planted chains keep their heads; 24 hours mapped".into())
}

// 10. determinism

fn report_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir.join("report"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let mut cfg = PipelineConfig::default();
        cfg.seed = 10;
        cfg.paths.food_db = fixture.join("food_db.csv");
        cfg.paths.posts = fixture.join("posts.jsonl");
        cfg.paths.output = tmp.path().join(name);
        run_pipeline(&cfg).map_err(|e| e.to_string())?;
        reports.push(report_bytes(&cfg.paths.output));
    }
    check(!reports[0].is_empty(), || "empty report".into())?;
    check(reports[0] == reports[1], || "reports differ".into())?;
    Ok(format!("{} report files byte-identical", reports[0].len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "weighted-mean estimation oracle", criterion_1),
        (2, "threshold calibration oracle", criterion_2),
        (3, "chi-square oracle", criterion_3),
        (4, "ROC-AUC oracle", criterion_4),
        (5, "Shapley exactness", criterion_5),
        (6, "boosting sanity", criterion_6),
        (7, "planted-signal end to end", criterion_7),
        (8, "statistics oracles", criterion_8),
        (9, "preprocessing properties", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
