//! Property suites for every module, run with a deterministic proptest runner.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rationmem_core::corpus::{corpus_stats, split, Document};
use rationmem_core::encoder::{encode, tokenize, EmbeddingTable, Vocabulary, UNK};
use rationmem_core::evaluation::{
    classify_metrics, explain_with_memory, memory_selection_correct, rank_by_weight,
    RankedRationale,
};
use rationmem_core::memory::{attention, encode_kb, forward, read_memory, SIMILARITY};
use rationmem_core::numeric::{dot, sigmoid, Mat64, Vec64};
use rationmem_core::objective::{bce_loss, strong_supervision_loss, total_loss, SupervisionSets};
use rationmem_core::trainer::{gradient_check, train, CheckSample, TrainHistory};
use rationmem_core::{
    Category, Clause, Corpus, EncodedMemory, Error, Explanation, ForwardTrace, KnowledgeBase,
    Label, MemoryNetModel, RationaleEntry, TrainingConfig,
};

use crate::{random_kb, random_model, run_cli, uniform_vec, words};

pub const CASES: u32 = 256;

type Verdict = Result<(), String>;
type Suite = fn() -> Vec<(&'static str, Verdict)>;

fn check<S>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Verdict
where
    S: Strategy,
    S::Value: std::fmt::Debug,
{
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

fn pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn memory(slots: &[Vec<f64>]) -> EncodedMemory {
    EncodedMemory::from_vectors(
        Category::Ter,
        slots
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("r{i}"), Vec64::new(s.clone()).unwrap()))
            .collect(),
    )
    .unwrap()
}

fn random_slots(rng: &mut impl Rng, m: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..m).map(|_| uniform_vec(rng, d, scale)).collect()
}

fn sets(gold: &[bool]) -> SupervisionSets {
    let ids = |want: bool| -> BTreeSet<String> {
        gold.iter()
            .enumerate()
            .filter(|(_, &g)| g == want)
            .map(|(i, _)| format!("r{i}"))
            .collect()
    };
    SupervisionSets::new(ids(true), ids(false)).unwrap()
}

fn by_id(gates: &[f64]) -> (Vec<String>, Vec<f64>) {
    (
        (0..gates.len()).map(|i| format!("r{i}")).collect(),
        gates.to_vec(),
    )
}

fn margin(gates: &[f64], gold: &[bool], gamma: f64) -> Result<f64, TestCaseError> {
    let (ids, g) = by_id(gates);
    let map: HashMap<&str, f64> = ids.iter().map(String::as_str).zip(g).collect();
    strong_supervision_loss(&map, &sets(gold), gamma).map_err(fail)
}

/// Gates on a 1/64 grid, with a gold mask that has members on both sides.
fn gated_case() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..8).prop_flat_map(|m| {
        (
            proptest::collection::vec(1u32..64, m),
            proptest::collection::vec(any::<bool>(), m).prop_filter("both sides", |g| {
                g.iter().any(|&x| x) && g.iter().any(|&x| !x)
            }),
        )
            .prop_map(|(k, g)| (k.into_iter().map(|k| k as f64 / 64.0).collect(), g))
    })
}

fn numeric() -> Vec<(&'static str, Verdict)> {
    vec![
        (
            "sigmoid strictly increasing",
            check((-30.0f64..30.0, 0.01f64..10.0), |(a, gap)| {
                let b = (a + gap).min(30.0);
                prop_assume!(b > a);
                prop_assert!(sigmoid(a) < sigmoid(b));
                Ok(())
            }),
        ),
        (
            "sigmoid complement",
            check(-30.0f64..=30.0, |x| {
                prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() <= 1e-15);
                Ok(())
            }),
        ),
        (
            "dot symmetric and bilinear",
            check(
                (1usize..16)
                    .prop_flat_map(|n| {
                        (
                            proptest::collection::vec(-10.0f64..10.0, n),
                            proptest::collection::vec(-10.0f64..10.0, n),
                        )
                    })
                    .prop_flat_map(|(a, b)| (Just(a), Just(b), -5.0f64..5.0)),
                |(a, b, alpha)| {
                    let ab = dot(&a, &b).map_err(fail)?;
                    prop_assert_eq!(ab, dot(&b, &a).map_err(fail)?);
                    let scaled: Vec<f64> = a.iter().map(|x| alpha * x).collect();
                    let lhs = dot(&scaled, &b).map_err(fail)?;
                    let scale = a
                        .iter()
                        .zip(&b)
                        .map(|(x, y)| (alpha * x * y).abs())
                        .sum::<f64>();
                    prop_assert!((lhs - alpha * ab).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE));
                    Ok(())
                },
            ),
        ),
    ]
}

fn encoder() -> Vec<(&'static str, Verdict)> {
    let vocab_words = pool("w", 10);
    let tokens: Vec<String> = std::iter::once(UNK.to_string())
        .chain(vocab_words.iter().cloned())
        .collect();
    let vocab = Vocabulary::from_tokens(tokens).unwrap();
    let table = |seed: u64, d: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingTable::new(Mat64::new(11, d, uniform_vec(&mut rng, 11 * d, 3.0)).unwrap())
    };
    let text_pool = pool("w", 14);
    vec![
        (
            "encode is permutation invariant",
            check((any::<u64>(), 1usize..10, 0usize..16), |(seed, d, n)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let emb = table(seed, d);
                let mut toks: Vec<String> = (0..n)
                    .map(|_| text_pool[rng.random_range(0..14)].clone())
                    .collect();
                let a = encode(&toks, &vocab, &emb).map_err(fail)?;
                toks.shuffle(&mut rng);
                let b = encode(&toks, &vocab, &emb).map_err(fail)?;
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
                Ok(())
            }),
        ),
        (
            "encode output has dimension d",
            check((any::<u64>(), 1usize..32, 0usize..20), |(seed, d, n)| {
                let toks: Vec<String> = text_pool
                    .iter()
                    .cycle()
                    .skip(seed as usize % 14)
                    .take(n)
                    .cloned()
                    .collect();
                let v = encode(&toks, &vocab, &table(seed, d)).map_err(fail)?;
                prop_assert_eq!(v.dim(), d);
                Ok(())
            }),
        ),
        (
            "tokenize of joined tokens is idempotent",
            check("\\PC{0,80}", |s| {
                let t = tokenize(&s);
                prop_assert_eq!(tokenize(&t.join(" ")), t);
                Ok(())
            }),
        ),
    ]
}

fn shape() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..8, 1usize..8)
}

fn memory_net() -> Vec<(&'static str, Verdict)> {
    let words10 = pool("w", 10);
    vec![
        (
            "gates lie strictly inside (0, 1)",
            check(shape(), |(seed, d, m)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let q = Vec64::new(uniform_vec(&mut rng, d, 1.0)).unwrap();
                let w = Mat64::new(d, d, uniform_vec(&mut rng, d * d, 1.0)).unwrap();
                let mem = memory(&random_slots(&mut rng, m, d, 1.0));
                for g in attention(&q, &mem, &w).map_err(fail)? {
                    prop_assert!(g > 0.0 && g < 1.0, "gate {}", g);
                }
                Ok(())
            }),
        ),
        (
            "read is bounded by gate mass times largest slot entry",
            check(shape(), |(seed, d, m)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let slots = random_slots(&mut rng, m, d, 5.0);
                let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
                let c = read_memory(&weights, &memory(&slots)).map_err(fail)?;
                let biggest = slots.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
                let bound = weights.iter().sum::<f64>() * biggest;
                prop_assert!(c.max_abs() <= bound * (1.0 + 1e-12));
                Ok(())
            }),
        ),
        (
            "permuting slots permutes gates and keeps read and probability",
            check(shape(), |(seed, d, m)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let model = random_model(&mut rng, &words10, d, 1.0);
                let kb = random_kb(&mut rng, &words10, m, (1, 5));
                let mut perm: Vec<usize> = (0..m).collect();
                perm.shuffle(&mut rng);
                let shuffled = KnowledgeBase::new(
                    Category::Ter,
                    perm.iter().map(|&i| kb.entries()[i].clone()).collect(),
                )
                .unwrap();
                let n = rng.random_range(0..8);
                let text = words(&mut rng, &words10, n);
                let a =
                    forward(&text, &model, &encode_kb(&kb, &model).map_err(fail)?).map_err(fail)?;
                let b = forward(&text, &model, &encode_kb(&shuffled, &model).map_err(fail)?)
                    .map_err(fail)?;
                for (j, &i) in perm.iter().enumerate() {
                    prop_assert_eq!(a.scores[i].to_bits(), b.scores[j].to_bits());
                    prop_assert_eq!(a.weights[i].to_bits(), b.weights[j].to_bits());
                }
                for (x, y) in a.read.as_slice().iter().zip(b.read.as_slice()) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
                prop_assert!((a.probability - b.probability).abs() <= 1e-9);
                Ok(())
            }),
        ),
        (
            "one-hot weights read a slot exactly",
            check(shape(), |(seed, d, m)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let slots = random_slots(&mut rng, m, d, 5.0);
                let k = rng.random_range(0..m);
                let weights: Vec<f64> = (0..m).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
                let c = read_memory(&weights, &memory(&slots)).map_err(fail)?;
                let got: Vec<u64> = c.as_slice().iter().map(|x| x.to_bits()).collect();
                let want: Vec<u64> = slots[k].iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(got, want);
                Ok(())
            }),
        ),
        (
            "forward is deterministic",
            check(shape(), |(seed, d, m)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let model = random_model(&mut rng, &words10, d, 1.0);
                let mem =
                    encode_kb(&random_kb(&mut rng, &words10, m, (1, 5)), &model).map_err(fail)?;
                let text = words(&mut rng, &words10, 6);
                let a = forward(&text, &model, &mem).map_err(fail)?;
                let b = forward(&text, &model, &mem).map_err(fail)?;
                prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
                prop_assert_eq!(a.probability.to_bits(), b.probability.to_bits());
                Ok(())
            }),
        ),
    ]
}

fn trace_with(weights: Vec<f64>, probability: f64) -> ForwardTrace {
    let m = weights.len();
    ForwardTrace {
        query_tokens: Vec::new(),
        query: Vec64::zeros(1),
        scores: vec![0.0; m],
        weights,
        read: Vec64::zeros(1),
        updated_query: Vec64::zeros(2),
        logit: 0.0,
        probability,
    }
}

fn objective() -> Vec<(&'static str, Verdict)> {
    vec![
        (
            "margin loss lies in [0, gamma + 1)",
            check((gated_case(), 0.01f64..2.0), |((gates, gold), gamma)| {
                let l = margin(&gates, &gold, gamma)?;
                prop_assert!((0.0..gamma + 1.0).contains(&l), "loss {}", l);
                Ok(())
            }),
        ),
        (
            "margin loss is zero exactly when every pair clears gamma",
            check((gated_case(), 1u32..32), |((gates, gold), g)| {
                let gamma = g as f64 / 64.0;
                let l = margin(&gates, &gold, gamma)?;
                let clear = (0..gates.len()).filter(|&i| gold[i]).all(|i| {
                    (0..gates.len())
                        .filter(|&j| !gold[j])
                        .all(|j| gates[i] - gates[j] >= gamma)
                });
                prop_assert_eq!(l == 0.0, clear);
                Ok(())
            }),
        ),
        (
            "raising a target gate never raises the loss, raising a non-target never lowers it",
            check(
                (
                    gated_case(),
                    0.05f64..1.0,
                    any::<prop::sample::Index>(),
                    0.0f64..1.0,
                ),
                |((gates, gold), gamma, idx, t)| {
                    let i = idx.index(gates.len());
                    let mut up = gates.clone();
                    up[i] += t * (1.0 - gates[i]);
                    let before = margin(&gates, &gold, gamma)?;
                    let after = margin(&up, &gold, gamma)?;
                    if gold[i] {
                        prop_assert!(after <= before);
                    } else {
                        prop_assert!(after >= before);
                    }
                    Ok(())
                },
            ),
        ),
        (
            "lambda zero total is bit-identical to the classification loss",
            check(
                (gated_case(), 0.0f64..=1.0, any::<bool>(), 0.05f64..1.0),
                |((gates, gold), p, y, gamma)| {
                    let mem = memory(&vec![vec![0.0]; gates.len()]);
                    let trace = trace_with(gates, p);
                    let sup = sets(&gold);
                    let l = total_loss(&trace, &mem, y, Some(&sup), gamma, 0.0).map_err(fail)?;
                    prop_assert_eq!(l.total.to_bits(), bce_loss(p, y).to_bits());
                    Ok(())
                },
            ),
        ),
        (
            "duplicating the non-targets leaves the loss unchanged",
            check((gated_case(), 0.05f64..1.0), |((gates, gold), gamma)| {
                let mut g2 = gates.clone();
                let mut gold2 = gold.clone();
                for (w, _) in gates.iter().zip(&gold).filter(|(_, &g)| !g) {
                    g2.push(*w);
                    gold2.push(false);
                }
                let a = margin(&gates, &gold, gamma)?;
                let b = margin(&g2, &gold2, gamma)?;
                prop_assert!((a - b).abs() <= 1e-15);
                Ok(())
            }),
        ),
    ]
}

/// Small labelled problem whose unfair clauses reuse their rationale's words.
fn small_problem(seed: u64) -> (Corpus, KnowledgeBase) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cue = pool("cue", 15);
    let filler = pool("fill", 15);
    let m = rng.random_range(3..=5);
    let entries: Vec<RationaleEntry> = (0..m)
        .map(|i| RationaleEntry {
            id: format!("k{i}"),
            text: cue
                .choose_multiple(&mut rng, 3)
                .cloned()
                .collect::<Vec<_>>()
                .join(" "),
        })
        .collect();
    let n = rng.random_range(8..=12);
    let documents: Vec<Document> = (0..4)
        .map(|i| Document {
            id: format!("d{i}"),
            service: format!("d{i}"),
        })
        .collect();
    let clauses = (0..n)
        .map(|i| {
            let unfair = i % 3 != 2;
            let nf = rng.random_range(2..=4);
            let mut toks: Vec<String> = filler.choose_multiple(&mut rng, nf).cloned().collect();
            let mut labels = BTreeMap::new();
            let mut gold = BTreeMap::new();
            if unfair {
                let k = rng.random_range(0..m);
                toks.extend(entries[k].text.split(' ').map(str::to_string));
                labels.insert(Category::Ter, Label::PotentiallyUnfair);
                gold.insert(Category::Ter, BTreeSet::from([format!("k{k}")]));
            }
            toks.shuffle(&mut rng);
            Clause {
                id: format!("c{i}"),
                document_id: format!("d{}", i % 4),
                text: toks.join(" "),
                labels,
                gold_rationales: gold,
                line: None,
            }
        })
        .collect();
    (
        Corpus::new(documents, clauses).unwrap(),
        KnowledgeBase::new(Category::Ter, entries).unwrap(),
    )
}

fn small_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        embedding_dim: 8,
        epochs: 25,
        seed,
        ..TrainingConfig::default()
    }
}

fn gold_shift(
    model: &MemoryNetModel,
    corpus: &Corpus,
    kb: &KnowledgeBase,
) -> Result<(f64, f64), TestCaseError> {
    let mem = encode_kb(kb, model).map_err(fail)?;
    let (mut g, mut ng) = (Vec::new(), Vec::new());
    for c in corpus.clauses() {
        let Some(gold) = c.gold(Category::Ter) else {
            continue;
        };
        let t = forward(&c.text, model, &mem).map_err(fail)?;
        for (id, w) in t.weights_by_id(&mem) {
            if gold.contains(id) {
                g.push(w)
            } else {
                ng.push(w)
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((mean(&g), mean(&ng)))
}

fn trainer() -> Vec<(&'static str, Verdict)> {
    let words10 = pool("w", 10);
    let words12 = pool("w", 12);
    vec![
        (
            "analytic gradients match finite differences",
            check(
                (any::<u64>(), 2usize..6, 2usize..5, 0usize..3),
                |(seed, d, m, li)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let model = random_model(&mut rng, &words10, d, 1.0);
                    let kb = random_kb(&mut rng, &words10, m, (2, 5));
                    let n = rng.random_range(3..=8);
                    let text = words(&mut rng, &words12, n);
                    let gold = vec![format!("r{}", rng.random_range(0..m))];
                    let config = TrainingConfig {
                        lambda: [0.0, 0.5, 2.0][li],
                        ..TrainingConfig::default()
                    };
                    let sample = CheckSample {
                        text: &text,
                        unfair: rng.random_bool(0.7),
                        gold: &gold,
                    };
                    let r =
                        gradient_check(&model, sample, &kb, &config, 1e-6, 1e-5).map_err(fail)?;
                    prop_assume!(!r.min_hinge_gap.is_some_and(|g| g < 1e-4));
                    prop_assert!(r.passed, "{} {:e}", r.worst, r.max_relative_error);
                    Ok(())
                },
            ),
        ),
        (
            "large lambda lifts gold gates above the others",
            check(any::<u64>(), |seed| {
                let (corpus, kb) = small_problem(seed);
                let config = TrainingConfig {
                    lambda: 10.0,
                    learning_rate: 0.02,
                    ..small_config(seed)
                };
                let (model, _) = train(&corpus, None, &kb, &config).map_err(fail)?;
                let (g, ng) = gold_shift(&model, &corpus, &kb)?;
                prop_assert!(g > ng, "gold {} other {}", g, ng);
                Ok(())
            }),
        ),
        (
            "best epoch has lower training loss than the first",
            check(any::<u64>(), |seed| {
                let (corpus, kb) = small_problem(seed);
                let (_, h) = train(&corpus, None, &kb, &small_config(seed)).map_err(fail)?;
                let best = h.best_epoch.ok_or_else(|| fail("no best epoch"))?;
                prop_assert!(
                    h.epochs[best].total_loss < h.epochs[0].total_loss,
                    "best epoch {}",
                    best
                );
                Ok(())
            }),
        ),
        (
            "a fixed seed reproduces the history",
            check(any::<u64>(), |seed| {
                let (corpus, kb) = small_problem(seed);
                let config = TrainingConfig {
                    epochs: 5,
                    ..small_config(seed)
                };
                let run = || -> Result<TrainHistory, TestCaseError> {
                    Ok(train(&corpus, None, &kb, &config).map_err(fail)?.1)
                };
                prop_assert_eq!(run()?.to_jsonl(), run()?.to_jsonl());
                Ok(())
            }),
        ),
    ]
}

fn corpus_suite() -> Vec<(&'static str, Verdict)> {
    let random_corpus = |seed: u64, docs: usize, with_dangling: bool| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let documents: Vec<Document> = (0..docs)
            .map(|i| Document {
                id: format!("d{i}"),
                service: format!("s{i}"),
            })
            .collect();
        let n = rng.random_range(docs..docs * 4);
        let clauses: Vec<Clause> = (0..n)
            .map(|i| {
                let mut labels = BTreeMap::new();
                let mut gold = BTreeMap::new();
                for cat in Category::ALL {
                    if rng.random_bool(0.3) {
                        labels.insert(cat, Label::ClearlyUnfair);
                        let ids: BTreeSet<String> = (0..rng.random_range(1..3))
                            .map(|_| {
                                if with_dangling && rng.random_bool(0.2) {
                                    format!("x{}", rng.random_range(0..3))
                                } else {
                                    format!("k{}", rng.random_range(0..4))
                                }
                            })
                            .collect();
                        gold.insert(cat, ids);
                    }
                }
                let len = rng.random_range(0..12);
                Clause {
                    id: format!("c{i}"),
                    document_id: format!(
                        "d{}",
                        if i < docs {
                            i
                        } else {
                            rng.random_range(0..docs)
                        }
                    ),
                    text: vec!["t"; len].join(" "),
                    labels,
                    gold_rationales: gold,
                    line: None,
                }
            })
            .collect();
        Corpus::new(documents, clauses).unwrap()
    };
    let kbs: Vec<KnowledgeBase> = Category::ALL
        .iter()
        .map(|&cat| {
            KnowledgeBase::new(
                cat,
                (0..4)
                    .map(|i| RationaleEntry {
                        id: format!("k{i}"),
                        text: "x".into(),
                    })
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    vec![
        (
            "validation reports every dangling rationale at once",
            check((any::<u64>(), 1usize..10), |(seed, docs)| {
                let corpus = random_corpus(seed, docs, true);
                let dangling: usize = corpus
                    .clauses()
                    .iter()
                    .flat_map(|c| c.gold_rationales.values().flatten())
                    .filter(|id| id.starts_with('x'))
                    .count();
                let refs: Vec<&KnowledgeBase> = kbs.iter().collect();
                match corpus.validate_rationales(&refs) {
                    Ok(()) => prop_assert_eq!(dangling, 0),
                    Err(Error::Validation(problems)) => prop_assert_eq!(problems.len(), dangling),
                    Err(e) => return Err(fail(e)),
                }
                Ok(())
            }),
        ),
        (
            "document split leaks no document",
            check(
                (any::<u64>(), 3usize..30, 0.1f64..0.8, 0.05f64..0.5),
                |(seed, docs, tf, vf)| {
                    prop_assume!(tf + vf < 0.95);
                    let corpus = random_corpus(seed, docs, false);
                    let Ok((a, b, c)) = split(&corpus, tf, vf, seed) else {
                        return Err(TestCaseError::reject("a part would be empty"));
                    };
                    let ids = |p: &Corpus| {
                        p.documents()
                            .iter()
                            .map(|d| d.id.clone())
                            .collect::<HashSet<_>>()
                    };
                    let (ia, ib, ic) = (ids(&a), ids(&b), ids(&c));
                    prop_assert!(ia.is_disjoint(&ib) && ia.is_disjoint(&ic) && ib.is_disjoint(&ic));
                    prop_assert_eq!(ia.len() + ib.len() + ic.len(), docs);
                    prop_assert_eq!(a.len() + b.len() + c.len(), corpus.len());
                    for part in [&a, &b, &c] {
                        let own = ids(part);
                        prop_assert!(part
                            .clauses()
                            .iter()
                            .all(|cl| own.contains(&cl.document_id)));
                    }
                    Ok(())
                },
            ),
        ),
        (
            "stats of the concatenated split equal stats of the whole",
            check((any::<u64>(), 3usize..30), |(seed, docs)| {
                let corpus = random_corpus(seed, docs, false);
                let Ok((a, b, c)) = split(&corpus, 0.6, 0.2, seed) else {
                    return Err(TestCaseError::reject("a part would be empty"));
                };
                let joined = Corpus::concat(&[&a, &b, &c]).map_err(fail)?;
                prop_assert_eq!(corpus_stats(&joined), corpus_stats(&corpus));
                Ok(())
            }),
        ),
    ]
}

fn explanation(weights: &[f64], threshold: f64) -> Explanation {
    let ranked: Vec<RankedRationale> = rank_by_weight(weights)
        .into_iter()
        .map(|i| RankedRationale {
            id: format!("r{i}"),
            weight: weights[i],
        })
        .collect();
    Explanation {
        clause_id: None,
        probability: 0.5,
        selected: ranked
            .iter()
            .filter(|r| r.weight > threshold)
            .map(|r| r.id.clone())
            .collect(),
        top_k: ranked.len(),
        ranked,
    }
}

fn evaluation() -> Vec<(&'static str, Verdict)> {
    let words10 = pool("w", 10);
    vec![
        (
            "ranking survives a strictly increasing transform of the scores",
            check((shape(), 0.2f64..2.0), |((seed, d, m), alpha)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let model = random_model(&mut rng, &words10, d, 0.5);
                let kb = random_kb(&mut rng, &words10, m, (1, 4));
                let mut params = model.params().clone();
                params
                    .matrix_mut(SIMILARITY)
                    .map_err(fail)?
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|w| *w *= alpha);
                let scaled = model.with_params(params).map_err(fail)?;
                let text = words(&mut rng, &words10, 5);
                let rank = |mdl: &MemoryNetModel| -> Result<Vec<String>, TestCaseError> {
                    let mem = encode_kb(&kb, mdl).map_err(fail)?;
                    let e = explain_with_memory(None, &text, mdl, &mem, m, 0.5).map_err(fail)?;
                    Ok(e.ranked.into_iter().map(|r| r.id).collect())
                };
                let base =
                    forward(&text, &model, &encode_kb(&kb, &model).map_err(fail)?).map_err(fail)?;
                prop_assume!(base
                    .scores
                    .iter()
                    .enumerate()
                    .all(|(i, a)| base.scores[i + 1..].iter().all(|b| (a - b).abs() > 1e-9)));
                prop_assert_eq!(rank(&model)?, rank(&scaled)?);
                Ok(())
            }),
        ),
        (
            "lowering the selection threshold never un-selects",
            check(
                (
                    proptest::collection::vec(0.0f64..1.0, 1..8),
                    any::<u8>(),
                    0.0f64..1.0,
                    0.0f64..1.0,
                ),
                |(weights, mask, t1, t2)| {
                    let gold: Vec<String> = (0..weights.len())
                        .filter(|i| mask >> (i % 8) & 1 == 1)
                        .map(|i| format!("r{i}"))
                        .collect();
                    prop_assume!(!gold.is_empty());
                    let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                    let e = explanation(&weights, 0.5);
                    let at_hi = memory_selection_correct(&e, &gold, hi).map_err(fail)?;
                    let at_lo = memory_selection_correct(&e, &gold, lo).map_err(fail)?;
                    prop_assert!(!at_hi || at_lo);
                    Ok(())
                },
            ),
        ),
        (
            "F1 agrees with the reported precision and recall",
            check(
                proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..40),
                |preds| {
                    let m = classify_metrics(&preds, 0.5).map_err(fail)?;
                    let (p, r) = (m.precision, m.recall);
                    let f1 = if p + r > 0.0 {
                        2.0 * p * r / (p + r)
                    } else {
                        0.0
                    };
                    prop_assert!((m.f1 - f1).abs() <= 1e-12);
                    Ok(())
                },
            ),
        ),
    ]
}

fn listing(dir: &std::path::Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

fn cli() -> Vec<(&'static str, Verdict)> {
    let corpus = crate::data("fixture/corpus.jsonl");
    let kb = crate::data("fixture/kb");
    let settings = tempfile::tempdir().unwrap();
    let config = settings.path().join("tiny.toml");
    fs::write(&config, "embedding_dim = 4\nepochs = 2\n").unwrap();
    let (corpus, kb, config) = (
        corpus.to_str().unwrap().to_string(),
        kb.to_str().unwrap().to_string(),
        config.to_str().unwrap().to_string(),
    );
    let help: [(&str, &[&str]); 6] = [
        (
            "train",
            &[
                "--corpus",
                "--kb-dir",
                "--category",
                "--out",
                "--config",
                "--weak",
                "--lambda",
                "--seed",
            ],
        ),
        ("eval", &["--checkpoint", "--corpus", "--kb-dir", "--out"]),
        (
            "predict",
            &["--checkpoint", "--kb-dir", "--input", "--text"],
        ),
        (
            "explain",
            &[
                "--checkpoint",
                "--kb-dir",
                "--text",
                "--clause-id",
                "--corpus",
                "--top-k",
            ],
        ),
        ("stats", &["--corpus"]),
        (
            "gradcheck",
            &[
                "--corpus",
                "--kb-dir",
                "--category",
                "--checkpoint",
                "--eps",
                "--tolerance",
                "--samples",
                "--seed",
            ],
        ),
    ];
    vec![
        (
            "seeded commands are bit-reproducible and write only under --out",
            check((0u64..1_000_000, any::<bool>()), |(seed, weak)| {
                let cwd = tempfile::tempdir().map_err(fail)?;
                let seed = seed.to_string();
                let mut outputs = Vec::new();
                for out in ["a", "b"] {
                    let mut args = vec![
                        "train",
                        "--corpus",
                        &corpus,
                        "--kb-dir",
                        &kb,
                        "--category",
                        "ter",
                        "--out",
                        out,
                        "--config",
                        &config,
                        "--seed",
                        &seed,
                    ];
                    if weak {
                        args.push("--weak");
                    }
                    let o = run_cli(cwd.path(), &args);
                    prop_assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
                    outputs.push(o.stdout);
                }
                prop_assert_eq!(&outputs[0], &outputs[1]);
                prop_assert_eq!(listing(cwd.path()), vec!["a".to_string(), "b".to_string()]);
                let a = cwd.path().join("a");
                prop_assert_eq!(
                    listing(&a),
                    vec!["history.jsonl", "metrics.jsonl", "model.ckpt"]
                );
                for name in listing(&a) {
                    prop_assert!(
                        fs::read(a.join(&name)).map_err(fail)?
                            == fs::read(cwd.path().join("b").join(&name)).map_err(fail)?,
                        "{} differs",
                        name
                    );
                }
                Ok(())
            }),
        ),
        (
            "help exits 0 and lists every flag",
            check(any::<prop::sample::Index>(), |idx| {
                let (cmd, flags) = help[idx.index(help.len())];
                let cwd = tempfile::tempdir().map_err(fail)?;
                let o = run_cli(cwd.path(), &[cmd, "--help"]);
                prop_assert_eq!(o.status.code(), Some(0));
                let text = String::from_utf8_lossy(&o.stdout);
                for f in flags {
                    prop_assert!(text.contains(f), "{} lacks {}", cmd, f);
                }
                prop_assert!(listing(cwd.path()).is_empty());
                Ok(())
            }),
        ),
    ]
}

pub fn run_all() -> Vec<(String, Verdict)> {
    let suites: [(&str, Suite); 8] = [
        ("numeric", numeric),
        ("encoder", encoder),
        ("memory", memory_net),
        ("objective", objective),
        ("trainer", trainer),
        ("corpus", corpus_suite),
        ("evaluation", evaluation),
        ("cli", cli),
    ];
    let results: Vec<Vec<(String, Verdict)>> = std::thread::scope(|s| {
        let handles: Vec<_> = suites
            .iter()
            .map(|&(module, suite)| {
                s.spawn(move || {
                    suite()
                        .into_iter()
                        .map(|(name, v)| (format!("{module}: {name}"), v))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("suite thread"))
            .collect()
    });
    results.into_iter().flatten().collect()
}
