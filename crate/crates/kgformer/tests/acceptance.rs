//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{cycle_graph, star_graph, golden_corpus, graph, oracles, random_graph};
use kgformer::checkpoint::{decode_checkpoint, write_checkpoint};
use kgformer_core::eval::{link_prediction, RankingReport, Setting};
use kgformer_core::kgformer::{
    energy_pair, export_embeddings, forward, forward_inputs, margin_loss_on, train, Architecture, BoundParams,
    ExportMode, KgfConfig, ModelParams, NegativeMode,
};
use kgformer_core::linker::{fmm_link, TermDictionary, DEFAULT_MIN_LEN};
use kgformer_core::numerics::{grad_check, Tape, Tensor};
use kgformer_core::sampler::{convert, convert_with_layout, sample_ego, NodeRef, Subgraph};
use kgformer_core::transe::{init_table, train_transe, TransEConfig};
use kgformer_core::{seeded_rng, Corruption, EntityId, Fanout, KnowledgeGraph, Norm, Side, TrainingSample};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))
}

fn random_params(g: &KnowledgeGraph, arch: Architecture, seed: u64) -> ModelParams {
    let mut rng = seeded_rng(seed);
    let mut p = ModelParams::init(g.entity_count(), g.relation_count(), arch, None, &mut rng).unwrap();
    for layer in &mut p.layers {
        for t in [&mut layer.attn_norm_gain, &mut layer.ff_norm_gain] {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
        }
        for t in [&mut layer.attn_norm_bias, &mut layer.ff_norm_bias, &mut layer.ff_in_bias, &mut layer.ff_out_bias] {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
        }
    }
    p
}

fn small_samples(g: &KnowledgeGraph, count: usize, seed: u64) -> Vec<TrainingSample> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if rng.gen_bool(0.5) {
            let center = EntityId(rng.gen_range(0..g.entity_count() as u32));
            let fanout = Fanout { k_in: rng.gen_range(0..=2), k_out: rng.gen_range(0..=2) };
            if let Ok(sub) = sample_ego(g, center, fanout, &mut rng) {
                out.push(convert(&sub));
            }
        } else {
            let k = rng.gen_range(1..=4);
            let triples: Vec<_> = g.triples().choose_multiple(&mut rng, k).copied().collect();
            out.push(convert(&Subgraph::new(g, triples).unwrap()));
        }
    }
    out
}

fn reaches(sample: &TrainingSample, from: usize, to: usize, hops: usize) -> bool {
    let adj = sample.adjacency_rows();
    let mut frontier = vec![false; sample.len()];
    frontier[from] = true;
    for _ in 0..hops {
        let mut next = frontier.clone();
        for (i, row) in adj.iter().enumerate() {
            if frontier[i] {
                for (j, &a) in row.iter().enumerate() {
                    if a == 1 {
                        next[j] = true;
                    }
                }
            }
        }
        frontier = next;
    }
    frontier[to]
}

fn conversion_oracle() -> Outcome {
    let start = Instant::now();
    let g = random_graph(500, 8, 2000, 1);
    let mut rng = seeded_rng(2);
    let mut checked = 0;
    while checked < 1000 {
        let center = EntityId(rng.gen_range(0..g.entity_count() as u32));
        if g.degree(center) == 0 {
            continue;
        }
        let sub = sample_ego(&g, center, Fanout::default(), &mut rng).map_err(|e| e.to_string())?;
        let sample = convert(&sub);
        let expected: BTreeSet<_> = sub.triples().iter().copied().collect();
        let got = oracles::reconstruct(&sample)?;
        ensure(got == expected, || format!("sample around {center:?} reconstructs to a different triple set"))?;
        checked += 1;
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("{checked} samples in {:.2?}", start.elapsed()))
}

fn star_layout() -> Outcome {
    let g = star_graph();
    let e = |s| NodeRef::Entity(g.entity_id(s).unwrap());
    let r = |s| NodeRef::Relation(g.relation_id(s).unwrap().index());
    let layout = [e("e1"), r("r1"), e("e2"), r("r2"), e("e"), r("r3"), e("e3"), r("r4"), e("e4")];
    let sample = convert_with_layout(&Subgraph::new(&g, g.triples().to_vec()).unwrap(), &layout)
        .map_err(|e| e.to_string())?;
    ensure(sample.positions[0] == [0, 1, 4], || format!("first row {:?}", sample.positions[0]))?;
    Ok(format!("row {:?}", sample.positions[0]))
}

fn masking() -> Outcome {
    let g = random_graph(40, 4, 160, 11);
    let params = random_params(&g, Architecture::new(8, 2, 2), 3);
    let mut worst: f64 = 0.0;
    for sample in small_samples(&g, 100, 5) {
        ensure(sample.len() <= 12, || format!("N = {}", sample.len()))?;
        let fwd = forward(&params, &sample).map_err(|e| e.to_string())?;
        let n = sample.len();
        for alpha in fwd.attention.iter().flatten() {
            for i in 0..n {
                let mut total = 0.0;
                for j in 0..n {
                    let a = alpha.data()[i * n + j];
                    if i != j && !sample.edge(j, i) {
                        ensure(a == 0.0, || format!("alpha[{i}][{j}] = {a:e} without edge"))?;
                    }
                    total += a;
                }
                worst = worst.max((total - 1.0).abs());
            }
        }
    }
    ensure(worst <= 1e-6, || format!("row sum off by {worst:e}"))?;
    Ok(format!("100 samples, max |row sum - 1| = {worst:.1e}"))
}

fn locality() -> Outcome {
    // star sample: e1 is two in-hops from e
    let g = star_graph();
    let sample = convert(&Subgraph::new(&g, g.triples().to_vec()).unwrap());
    let e1 = g.entity_id("e1").unwrap().index();
    let e_pos = sample.node_ids.iter().position(|&id| id == g.entity_id("e").unwrap().index()).unwrap();
    for (layers, visible) in [(1, false), (2, true), (3, true)] {
        let params = random_params(&g, Architecture::new(8, 2, layers), 9);
        let before = forward(&params, &sample).unwrap().output;
        let mut bumped = params.clone();
        bumped.embeddings.row_mut(e1).iter_mut().for_each(|v| *v += 0.1);
        let after = forward(&bumped, &sample).unwrap().output;
        let changed = before.row(e_pos) != after.row(e_pos);
        ensure(changed == visible, || format!("L={layers}: e changed = {changed}"))?;
    }
    // every pair on random small samples against directed reachability
    let g = random_graph(30, 3, 120, 21);
    let mut pairs = 0;
    let mut rng = seeded_rng(4);
    for layers in 1..=3 {
        let params = random_params(&g, Architecture::new(8, 2, layers), 100 + layers as u64);
        for sample in small_samples(&g, 25, 40 + layers as u64) {
            let d = params.arch.dim;
            let mut data = Vec::new();
            for &id in &sample.node_ids {
                data.extend_from_slice(params.embeddings.row(id));
            }
            let inputs = Tensor::matrix(sample.len(), d, data).unwrap();
            let base = forward_inputs(&params, &inputs, &sample).unwrap().output;
            for u in 0..sample.len() {
                let mut x = inputs.clone();
                x.row_mut(u).iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5));
                let out = forward_inputs(&params, &x, &sample).unwrap().output;
                for v in 0..sample.len() {
                    let changed = out.row(v) != base.row(v);
                    ensure(changed == reaches(&sample, u, v, layers), || {
                        format!("L={layers}: perturbing {u} changed {v} = {changed}")
                    })?;
                    pairs += 1;
                }
            }
        }
    }
    Ok(format!("star sample L=1,2,3 and {pairs} node pairs"))
}

fn gradient_error(layers: usize, mode: NegativeMode, norm: Norm, negs: [Corruption; 2], all_active: bool) -> f64 {
    let g = graph("a\tr\tb\nb\ts\tc\nc\tr\td\nd\ts\ta\n");
    let params = random_params(&g, Architecture::new(8, 2, layers), 31 + layers as u64);
    let sample = convert(&Subgraph::new(&g, g.triples()[..2].to_vec()).unwrap());
    let mut tape = Tape::new();
    let bound = BoundParams::bind_full(&mut tape, &params);
    let (pos, neg, _) = energy_pair(&mut tape, &bound, &sample, &negs, norm, mode).unwrap();
    let gaps: Vec<f64> = tape.value(pos).data().iter().zip(tape.value(neg).data()).map(|(p, n)| n - p).collect();
    let margin = if all_active { gaps[0].max(gaps[1]) + 1.0 } else { (gaps[0] + gaps[1]) / 2.0 };
    let tensors: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    grad_check(
        |tape, vars| {
            let bound = BoundParams::from_vars(&params, vars)?;
            margin_loss_on(tape, &bound, &sample, &negs, margin, norm, mode)
        },
        &tensors,
        1e-5,
    )
    .unwrap()
    .max_rel_error
}

fn gradient() -> Outcome {
    let start = Instant::now();
    let mixed = [
        Corruption { side: Side::Tail, replacement: EntityId(3) },
        Corruption { side: Side::Head, replacement: EntityId(0) },
    ];
    let heads = [
        Corruption { side: Side::Head, replacement: EntityId(3) },
        Corruption { side: Side::Head, replacement: EntityId(0) },
    ];
    let cases = [
        ("substitute/L2", gradient_error(2, NegativeMode::Substitute, Norm::L2, mixed, true)),
        ("reencode/L2", gradient_error(2, NegativeMode::Reencode, Norm::L2, mixed, true)),
        ("substitute/L1", gradient_error(2, NegativeMode::Substitute, Norm::L1, heads, false)),
    ];
    for (name, err) in cases {
        ensure(err < 1e-4, || format!("{name}: max relative error {err:e}"))?;
    }
    within(start, Duration::from_secs(60))?;
    let detail: Vec<String> = cases.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    Ok(format!("{} in {:.2?}", detail.join(", "), start.elapsed()))
}

fn hits10_tail(r: &RankingReport) -> f64 {
    r.ranks.iter().filter(|x| x.tail.rank <= 10.0).count() as f64 / r.ranks.len() as f64
}

fn transe_init_config() -> TransEConfig {
    TransEConfig { dim: 16, ..TransEConfig::default() }
}

fn transe_sanity() -> Outcome {
    let g = cycle_graph(100);
    let cfg = transe_init_config();
    let untrained = init_table(g.vocab_size(), cfg.dim, &mut seeded_rng(cfg.seed));
    let trained = train_transe(&g, &cfg).map_err(|e| e.to_string())?;
    let before = link_prediction(&untrained, &g, g.triples(), Setting::Filtered, cfg.norm).unwrap();
    let after = link_prediction(&trained.table, &g, g.triples(), Setting::Filtered, cfg.norm).unwrap();
    let (b, a) = (before.hits10, after.hits10);
    let (bt, at) = (hits10_tail(&before), hits10_tail(&after));
    ensure(b > 0.0 && a >= 5.0 * b, || format!("Hits@10 {a:.3} vs untrained {b:.3}"))?;
    ensure(bt > 0.0 && at >= 5.0 * bt, || format!("tail Hits@10 {at:.3} vs untrained {bt:.3}"))?;
    Ok(format!("Hits@10 {a:.3} vs untrained {b:.3} (tail only {at:.3} vs {bt:.3})"))
}

fn kgformer_training() -> Outcome {
    let start = Instant::now();
    let g = cycle_graph(100);
    let init = train_transe(&g, &transe_init_config()).map_err(|e| e.to_string())?.table;
    let cfg = KgfConfig {
        dim: 16,
        layers: 2,
        heads: 2,
        epochs: 200,
        negative_mode: NegativeMode::Reencode,
        ..KgfConfig::default()
    };
    let trained = train(&g, &cfg, Some(&init)).map_err(|e| e.to_string())?;
    let first = trained.epoch_losses[0];
    let last = *trained.epoch_losses.last().unwrap();
    let init_mrr = link_prediction(&init, &g, g.triples(), Setting::Filtered, cfg.norm).unwrap().mrr;
    let base = export_embeddings(&trained.params, &g, ExportMode::Base).unwrap().table;
    let mrr = link_prediction(&base, &g, g.triples(), Setting::Filtered, cfg.norm).unwrap().mrr;
    let encoded = export_embeddings(
        &trained.params,
        &g,
        ExportMode::EncodedMean { k_samples: 4, fanout: cfg.fanout, seed: cfg.seed },
    )
    .unwrap()
    .table;
    let encoded_mrr = link_prediction(&encoded, &g, g.triples(), Setting::Filtered, cfg.norm).unwrap().mrr;
    let detail = format!(
        "loss {first:.4} -> {last:.4}, MRR {mrr:.4} vs TransE init {init_mrr:.4} (encoded-mean {encoded_mrr:.4}), {:.1?}",
        start.elapsed()
    );
    ensure(last < 0.5 * first, || format!("loss did not halve: {detail}"))?;
    ensure(mrr > init_mrr, || format!("MRR not above init: {detail}"))?;
    within(start, Duration::from_secs(300))?;
    Ok(detail)
}

fn ranking_oracle() -> Outcome {
    let g = random_graph(20, 3, 60, 3);
    let table = init_table(g.vocab_size(), 6, &mut seeded_rng(4));
    let mut compared = 0;
    for setting in [Setting::Raw, Setting::Filtered] {
        let filtered = setting == Setting::Filtered;
        let report = link_prediction(&table, &g, g.triples(), setting, Norm::L1).map_err(|e| e.to_string())?;
        let mut all = Vec::new();
        for tr in &report.ranks {
            let head = oracles::rank(&table, &g, tr.triple, true, filtered, Norm::L1);
            let tail = oracles::rank(&table, &g, tr.triple, false, filtered, Norm::L1);
            ensure(tr.head.rank == head && tr.tail.rank == tail, || {
                format!("{:?} {:?}: ({}, {}) vs oracle ({head}, {tail})", setting, tr.triple, tr.head.rank, tr.tail.rank)
            })?;
            all.extend([head, tail]);
            compared += 2;
        }
        let mut sorted = all.clone();
        sorted.sort_by(f64::total_cmp);
        let mr = sorted.iter().sum::<f64>() / all.len() as f64;
        ensure(report.mr == mr, || format!("{setting:?} MR {} vs oracle {mr}", report.mr))?;
        let h10 = all.iter().filter(|&&r| r <= 10.0).count() as f64 / all.len() as f64;
        ensure(report.hits10 == h10, || format!("{setting:?} Hits@10 {} vs oracle {h10}", report.hits10))?;
    }
    Ok(format!("{compared} ranks identical, raw and filtered"))
}

fn linker() -> Outcome {
    let (dict, docs) = golden_corpus();
    ensure(dict.len() == 30 && docs.len() == 10, || format!("{} terms, {} documents", dict.len(), docs.len()))?;
    let mut spans = 0;
    for (i, doc) in docs.iter().enumerate() {
        let got: Vec<_> = fmm_link(doc, &dict, DEFAULT_MIN_LEN).iter().map(|s| (s.start, s.end, s.entity)).collect();
        ensure(got == oracles::link(doc, &dict, DEFAULT_MIN_LEN), || format!("document {i} differs from oracle"))?;
        spans += got.len();
    }
    let mut flu = TermDictionary::new();
    flu.insert("flu", EntityId(0)).unwrap();
    ensure(fmm_link("flu season", &flu, DEFAULT_MIN_LEN).is_empty(), || "\"flu\" was linked".into())?;
    Ok(format!("{spans} spans over 10 documents match; \"flu\" filtered"))
}

fn cli(bin: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn snapshot(dir: &Path) -> Vec<(std::ffi::OsString, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files.iter().map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap())).collect()
}

fn reproducibility() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_kgformer");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let graph = tmp.path().join("g.tsv");
    let text: String = (0..20).map(|i| format!("a{i}\tnext\ta{}\n", (i + 1) % 20)).collect();
    std::fs::write(&graph, text).unwrap();
    let docs = tmp.path().join("docs.txt");
    std::fs::write(&docs, "Node a1 links a10 and A12 next\n").unwrap();
    let dict = tmp.path().join("dict.tsv");
    std::fs::write(&dict, "a1 links a10\ta1\na12 next\ta12\n").unwrap();
    let g = graph.to_str().unwrap();
    let mut snapshots = Vec::new();
    for name in ["one", "two"] {
        let out = tmp.path().join(name);
        let o = out.to_str().unwrap();
        let emb = format!("{o}/transe.emb");
        let ckpt = format!("{o}/model.kgtc");
        let seed = ["--seed", "7", "--out", o];
        cli(bin, &[&["ingest", "--triples", g][..], &seed].concat())?;
        cli(bin, &[&["sample", "dump", "--graph", g, "--center", "a3"][..], &seed].concat())?;
        cli(bin, &[&["train-transe", "--graph", g, "--dim", "8", "--epochs", "50"][..], &seed].concat())?;
        cli(bin, &[&["train-kgformer", "--graph", g, "--init", &emb, "--dim", "8", "--layers", "2", "--heads", "2", "--epochs", "5"][..], &seed].concat())?;
        cli(bin, &[&["export", "--graph", g, "--checkpoint", &ckpt, "--mode", "encoded-mean"][..], &seed].concat())?;
        cli(bin, &[&["eval", "--graph", g, "--embeddings", &format!("{o}/embeddings.emb")][..], &seed].concat())?;
        cli(bin, &[&["link", "--graph", g, "--dictionary", dict.to_str().unwrap(), "--text", docs.to_str().unwrap()][..], &seed].concat())?;
        snapshots.push(snapshot(&out));
    }
    ensure(snapshots[0] == snapshots[1], || "outputs differ between runs".into())?;
    let files = snapshots[0].len();

    let params = ModelParams::init(7, 3, Architecture::new(8, 2, 2), None, &mut seeded_rng(5)).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&params, &mut bytes).unwrap();
    let back = decode_checkpoint(&bytes).map_err(|e| e.to_string())?;
    for (a, b) in params.tensors().iter().zip(back.tensors()) {
        ensure(a.shape() == b.shape(), || "tensor shape changed".into())?;
        for (x, y) in a.data().iter().zip(b.data()) {
            ensure(*x as f32 == *y as f32, || format!("{x} stored as {y}"))?;
        }
    }
    let mut again = Vec::new();
    write_checkpoint(&back, &mut again).unwrap();
    ensure(again == bytes, || "second save differs".into())?;
    Ok(format!("{files} output files byte-identical across two runs; checkpoint roundtrip exact"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("conversion oracle", conversion_oracle),
        ("star layout row", star_layout),
        ("attention masking", masking),
        ("receptive-field locality", locality),
        ("full-loss gradient", gradient),
        ("TransE sanity", transe_sanity),
        ("KG-Transformer training", kgformer_training),
        ("ranking oracle", ranking_oracle),
        ("linker golden corpus", linker),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", 10 - failed, 10);
    if failed > 0 {
        std::process::exit(1);
    }
}
