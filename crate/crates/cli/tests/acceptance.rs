//! Acceptance suite: one PASS/FAIL line per criterion, runnable offline.
//! Criterion 9 needs a real backend and prints SKIP unless one is configured
//! through `SPECTRAPROMPT_ENDPOINT` and `SPECTRAPROMPT_MODEL`.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use serde_json::json;
use spectraprompt_cli::config::{resolve, RunConfig};
use spectraprompt_cli::eval::run_eval;
use spectraprompt_cli::import::{run_import, ImportOptions};
use spectraprompt_cli::render::run_render;
use spectraprompt_cli::report::build_table;
use spectraprompt_core::dataset::rng::SplitMix64;
use spectraprompt_core::dataset::synthetic::{synthetic_bundle, synthetic_set, write_bigearthnet_source, write_eurosat_source};
use spectraprompt_core::metrics::Averaging;
use spectraprompt_core::products::{normalized_difference, Colormap, ProductKind};
use spectraprompt_core::{
    aggregate, band_glossary, build_prompt, format_answer, parse_answer, render_products, sample_prf, BandGrid, BandId,
    DatasetKind, Modality, NormalizationMethod, ParseMode, Patch, PredictionRecord, ProductId, PseudoImage, Task,
};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

fn placeholder_images(products: &[ProductId]) -> Vec<PseudoImage> {
    products
        .iter()
        .map(|&p| PseudoImage {
            product_id: p,
            width: 1,
            height: 1,
            pixels: vec![[0; 3]],
        })
        .collect()
}

fn golden_prompts() -> Check {
    let started = Instant::now();
    let cases = [
        (Task::BigEarthNet43, Modality::MultiSpectral, "bigearthnet43_multispectral.txt"),
        (Task::BigEarthNet43, Modality::RgbOnly, "bigearthnet43_rgb.txt"),
        (Task::BigEarthNet19, Modality::MultiSpectral, "bigearthnet19_multispectral.txt"),
        (Task::BigEarthNet19, Modality::RgbOnly, "bigearthnet19_rgb.txt"),
        (Task::EuroSat10, Modality::MultiSpectral, "eurosat10_multispectral.txt"),
        (Task::EuroSat10, Modality::RgbOnly, "eurosat10_rgb.txt"),
    ];
    for (task, modality, file) in cases {
        let products: &[ProductId] = match modality {
            Modality::RgbOnly => &[ProductId::TrueColor],
            Modality::MultiSpectral => &ProductId::DEFAULT_SELECTION,
        };
        let prompt = build_prompt(task, modality, placeholder_images(products)).map_err(|e| e.to_string())?;
        let golden = std::fs::read(golden_dir().join(file)).map_err(|e| format!("{file}: {e}"))?;
        ensure(prompt.text.as_bytes() == golden.as_slice(), || format!("{file} differs from the built prompt"))?;
    }
    let ms = build_prompt(
        Task::BigEarthNet43,
        Modality::MultiSpectral,
        placeholder_images(&ProductId::DEFAULT_SELECTION),
    )
    .map_err(|e| e.to_string())?
    .text;
    let glossary = band_glossary();
    ensure(glossary.lines().count() == 12, || "glossary is not 12 lines".into())?;
    ensure(ms.contains(&glossary), || "glossary not embedded verbatim".into())?;
    ensure(ms.contains("7. B08: NIR band at 10-meter resolution"), || "spot line missing".into())?;
    let took = within(Duration::from_secs(1), started)?;
    Ok(format!("6 templates byte-identical, glossary embedded, {took:.2?}"))
}

fn colormap_exactness() -> Check {
    let ndwi = Colormap::ndwi();
    ensure(ndwi.points() == [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [0.0, 0.0, 1.0]], || "control points".into())?;
    for (v, want) in [(-0.8f32, [255, 255, 255]), (0.0, [255, 255, 255]), (0.8, [0, 0, 255]), (0.4, [128, 128, 255])] {
        let got = ndwi.color_bytes(v);
        ensure(got == want, || format!("NDWI {v} -> {got:?}, expected {want:?}"))?;
    }
    // same value through the full pipeline: B03 = 7, B08 = 3 gives (7-3)/(7+3) = 0.4
    let grid = |v: f32| BandGrid::new(2, 1, 10, vec![v; 2]).unwrap();
    let patch = Patch {
        id: "ndwi".into(),
        dataset: DatasetKind::EuroSat,
        bands: BTreeMap::from([(BandId::B03, grid(7.0)), (BandId::B08, grid(3.0))]),
        labels: BTreeSet::from([9]),
    };
    let img = render_products(&patch, &[ProductId::Ndwi], NormalizationMethod::MinMax).map_err(|e| e.to_string())?;
    ensure(img[0].pixels == [[128, 128, 255]; 2], || format!("rendered {:?}", img[0].pixels))?;
    Ok("endpoints white/blue, midpoint white, 0.4 -> (128,128,255)".into())
}

fn index_math() -> Check {
    let mut rng = SplitMix64::new(3);
    let mut zero_den = 0;
    for _ in 0..10_000 {
        let n = 1 + rng.below(32) as usize;
        let mut draw = || {
            let v = (0..n)
                .map(|_| if rng.below(4) == 0 { 0.0 } else { rng.below(10_000) as f32 })
                .collect();
            BandGrid::new(n, 1, 10, v).unwrap()
        };
        let (a, b) = (draw(), draw());
        let ab = normalized_difference(&a, &b).map_err(|e| e.to_string())?;
        let ba = normalized_difference(&b, &a).map_err(|e| e.to_string())?;
        for i in 0..n {
            let (x, y) = (ab.values[i], ba.values[i]);
            ensure(x == -y, || format!("antisymmetry {x} vs {y}"))?;
            ensure((-1.0..=1.0).contains(&x), || format!("unbounded {x}"))?;
            if a.values()[i] + b.values()[i] == 0.0 {
                ensure(x == 0.0, || format!("zero denominator gave {x}"))?;
                zero_den += 1;
            }
        }
    }
    ensure(zero_den > 0, || "no zero-denominator case drawn".into())?;
    for (product, plus, minus) in [
        (ProductId::Ndvi, BandId::B08, BandId::B04),
        (ProductId::NdmiB11, BandId::B8A, BandId::B11),
        (ProductId::NdmiB12, BandId::B8A, BandId::B12),
    ] {
        match product.spec().kind {
            ProductKind::Index { plus: p, minus: m, .. } if p == plus && m == minus => {}
            other => return Err(format!("{product} wired as {other:?}")),
        }
    }
    Ok(format!("10000 grids, {zero_den} zero denominators, NDVI/NDMI wiring"))
}

fn oracle_prf(pairs: &[(BTreeSet<u32>, BTreeSet<u32>)], n: u32) -> [[f64; 3]; 3] {
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let f1 = |p: f64, r: f64| div(2.0 * p * r, p + r);
    let c = n as usize;
    let (mut tp, mut fp, mut fnn) = (vec![0.0; c], vec![0.0; c], vec![0.0; c]);
    let mut sample = [0.0; 3];
    for (p, t) in pairs {
        let mut hit = 0.0;
        for k in 1..=n {
            let (inp, int) = (p.contains(&k), t.contains(&k));
            let i = k as usize - 1;
            match (inp, int) {
                (true, true) => {
                    tp[i] += 1.0;
                    hit += 1.0;
                }
                (true, false) => fp[i] += 1.0,
                (false, true) => fnn[i] += 1.0,
                _ => {}
            }
        }
        let (pp, rr) = (div(hit, p.len() as f64), div(hit, t.len() as f64));
        sample[0] += pp;
        sample[1] += rr;
        sample[2] += f1(pp, rr);
    }
    let len = pairs.len() as f64;
    let sample = sample.map(|s| s / len);
    let (a, b, d): (f64, f64, f64) = (tp.iter().sum(), fp.iter().sum(), fnn.iter().sum());
    let (mp, mr) = (div(a, a + b), div(a, a + d));
    let mut macro_ = [0.0; 3];
    let mut supported = 0.0;
    for i in 0..c {
        if tp[i] + fnn[i] > 0.0 {
            let (p, r) = (div(tp[i], tp[i] + fp[i]), div(tp[i], tp[i] + fnn[i]));
            macro_[0] += p;
            macro_[1] += r;
            macro_[2] += f1(p, r);
            supported += 1.0;
        }
    }
    [sample, [mp, mr, f1(mp, mr)], macro_.map(|m| m / supported)]
}

fn compare(pairs: &[(BTreeSet<u32>, BTreeSet<u32>)], n: u32) -> Result<(), String> {
    let records: Vec<PredictionRecord> = pairs
        .iter()
        .enumerate()
        .map(|(i, (p, t))| PredictionRecord {
            patch_id: format!("{i:05}"),
            predicted: p.clone(),
            truth: t.clone(),
            raw_text: String::new(),
            parse_mode: None,
            warnings: Vec::new(),
            backend_id: String::new(),
            latency_ms: 0,
            error: None,
        })
        .collect();
    let report = aggregate(&records, n, true).map_err(|e| e.to_string())?;
    let want = oracle_prf(pairs, n);
    for (mode, w) in Averaging::ALL.into_iter().zip(want) {
        let g = report.get(mode);
        for (got, exp) in [g.precision, g.recall, g.f1].into_iter().zip(w) {
            ensure((got - exp).abs() <= 1e-9, || format!("{mode}: {got} vs {exp} on {pairs:?}"))?;
        }
    }
    Ok(())
}

fn metrics_oracle() -> Check {
    let subsets: Vec<BTreeSet<u32>> = (0u32..32)
        .map(|m| (1..=5).filter(|k| m & (1 << (k - 1)) != 0).collect::<BTreeSet<u32>>())
        .filter(|s| s.len() <= 3)
        .collect();
    let mut cases = 0;
    for p in &subsets {
        for t in subsets.iter().filter(|t| !t.is_empty()) {
            compare(&[(p.clone(), t.clone())], 5)?;
            cases += 1;
        }
    }
    let mut rng = SplitMix64::new(200);
    let set = |rng: &mut SplitMix64, min: u64| -> BTreeSet<u32> {
        (0..min + rng.below(4 - min)).map(|_| 1 + rng.below(8) as u32).collect()
    };
    for _ in 0..200 {
        let n = 1 + rng.below(30) as usize;
        let pairs: Vec<_> = (0..n)
            .map(|_| {
                let t = set(&mut rng, 1);
                (set(&mut rng, 0), t)
            })
            .collect();
        compare(&pairs, 8)?;
    }
    let hand = sample_prf(&BTreeSet::from([1, 3]), &BTreeSet::from([1]));
    ensure((hand.f1 - 2.0 / 3.0).abs() <= 1e-9, || format!("hand case F1 {}", hand.f1))?;
    Ok(format!("{cases} exhaustive pairs + 200 random cases, hand case 2/3"))
}

fn import_synthetic(root: &Path, dataset: DatasetKind, count: usize, seed: u64) -> Result<PathBuf, String> {
    let src = root.join("src");
    for b in synthetic_set("S2_", dataset, count, seed) {
        match dataset {
            DatasetKind::BigEarthNet => write_bigearthnet_source(&src, &b),
            DatasetKind::EuroSat => write_eurosat_source(&src, &b),
        }
        .map_err(|e| e.to_string())?;
    }
    let summary = run_import(&ImportOptions {
        src,
        dst: root.join("data"),
        dataset,
        skip_bad: false,
        split: None,
        exclude: Vec::new(),
        default_filters: true,
    })
    .map_err(|e| format!("{e:#}"))?;
    Ok(summary.manifest)
}

fn config(manifest: &Path, out: &Path, extra: serde_json::Value) -> Result<RunConfig, String> {
    let mut cli = json!({"manifest": manifest, "output_dir": out});
    spectraprompt_cli::config::merge(&mut cli, extra);
    resolve(json!({}), None, cli).map_err(|e| format!("{e:#}"))
}

fn end_to_end_closure() -> Check {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = import_synthetic(tmp.path(), DatasetKind::BigEarthNet, 20, 5)?;
    let truth = run_eval(&config(&manifest, &tmp.path().join("truth"), json!({}))?, None).map_err(|e| format!("{e:#}"))?;
    for mode in Averaging::ALL {
        let f1 = truth.metrics.metrics.get(mode).f1;
        ensure(f1 == 1.0, || format!("mock-truth {mode} F1 = {f1}"))?;
    }
    let empty = run_eval(
        &config(&manifest, &tmp.path().join("empty"), json!({"backend": {"kind": "mock-empty"}}))?,
        None,
    )
    .map_err(|e| format!("{e:#}"))?;
    let m = &empty.metrics.metrics;
    for mode in Averaging::ALL {
        ensure(m.get(mode).f1 == 0.0, || format!("mock-empty {mode} F1 = {}", m.get(mode).f1))?;
    }
    ensure(m.n_parse_failures == 20, || format!("parse failures {}", m.n_parse_failures))?;
    let took = within(Duration::from_secs(10), started)?;
    Ok(format!("20 patches: truth F1 1.0, empty F1 0.0 with 20 parse failures, {took:.2?}"))
}

fn determinism_and_caching() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = import_synthetic(tmp.path(), DatasetKind::BigEarthNet, 8, 9)?;
    let cache = tmp.path().join("cache");
    let cold = run_eval(&config(&manifest, &tmp.path().join("cold"), json!({"backend": {"cache_dir": cache}}))?, None)
        .map_err(|e| format!("{e:#}"))?;
    let warm = run_eval(&config(&manifest, &tmp.path().join("warm"), json!({"backend": {"cache_dir": cache}}))?, None)
        .map_err(|e| format!("{e:#}"))?;
    ensure(cold.metrics.backend_calls == 8, || format!("cold calls {}", cold.metrics.backend_calls))?;
    ensure(warm.metrics.backend_calls == 0, || format!("warm calls {}", warm.metrics.backend_calls))?;
    let strip = |p: &Path| -> Result<Vec<serde_json::Value>, String> {
        let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
        text.lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).map_err(|e| e.to_string())?;
                v.as_object_mut().map(|o| o.remove("latency_ms"));
                Ok(v)
            })
            .collect()
    };
    ensure(strip(&cold.records_path)? == strip(&warm.records_path)?, || "records differ".into())?;
    let raw_equal = std::fs::read(&cold.records_path).ok() == std::fs::read(&warm.records_path).ok();

    let mut hashes = Vec::new();
    for out in ["r1", "r2"] {
        let files = run_render(&config(&manifest, &tmp.path().join(out), json!({}))?).map_err(|e| format!("{e:#}"))?;
        let bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap_or_default()).collect();
        hashes.push(bytes);
    }
    ensure(hashes[0] == hashes[1] && hashes[0].len() == 48, || "rendered PNGs differ".into())?;
    Ok(format!(
        "warm run: 0 backend calls, records identical (raw bytes identical: {raw_equal}), 48 PNGs identical"
    ))
}

fn parser_fuzz() -> Check {
    let mut rng = SplitMix64::new(7);
    let grammar = ['(', ')', ',', ' ', '1', '3', '7', '0', '4'];
    for _ in 0..100_000 {
        let len = rng.below(40) as usize;
        let text: String = (0..len)
            .map(|_| {
                if rng.below(2) == 0 {
                    grammar[rng.below(grammar.len() as u64) as usize]
                } else {
                    loop {
                        if let Some(c) = char::from_u32(rng.below(0x11_0000) as u32) {
                            break c;
                        }
                    }
                }
            })
            .collect();
        let outcome = catch_unwind(|| {
            for (n, multi) in [(43, true), (19, true), (10, false)] {
                if let Ok(a) = parse_answer(&text, n, multi) {
                    assert!(a.indices.iter().all(|k| (1..=n).contains(k)));
                }
            }
        });
        outcome.map_err(|_| format!("parse_answer panicked on {text:?}"))?;
    }
    let mut count = 0usize;
    let mut set = Vec::with_capacity(5);
    fn walk(start: u32, set: &mut Vec<u32>, count: &mut usize) -> Result<(), String> {
        if !set.is_empty() {
            let expected: BTreeSet<u32> = set.iter().copied().collect();
            let text = format_answer(&expected);
            let a = parse_answer(&text, 43, true).map_err(|e| format!("{text}: {e}"))?;
            ensure(a.mode == ParseMode::Strict && a.indices == expected, || format!("{text} round-trip"))?;
            *count += 1;
        }
        if set.len() == 5 {
            return Ok(());
        }
        for k in start..=43 {
            set.push(k);
            walk(k + 1, set, count)?;
            set.pop();
        }
        Ok(())
    }
    walk(1, &mut set, &mut count)?;
    Ok(format!("100000 fuzz strings, {count} strict round-trips"))
}

fn image_set_shape() -> Check {
    let bundle = synthetic_bundle("S2_shape", DatasetKind::BigEarthNet, &[37], 8);
    let patch = bundle.to_patch().map_err(|e| e.to_string())?;
    let images = render_products(&patch, &ProductId::DEFAULT_SELECTION, NormalizationMethod::MinMax)
        .map_err(|e| e.to_string())?;
    let sizes: Vec<(usize, usize)> = images.iter().map(|i| (i.width, i.height)).collect();
    ensure(
        sizes == [(120, 120), (120, 120), (120, 120), (120, 120), (60, 60), (60, 60)],
        || format!("sizes {sizes:?}"),
    )?;
    Ok("6 images: 4 x 120x120, 2 x 60x60".into())
}

fn live_smoke() -> Verdict {
    let (Ok(endpoint), Ok(model)) = (std::env::var("SPECTRAPROMPT_ENDPOINT"), std::env::var("SPECTRAPROMPT_MODEL")) else {
        return Verdict::Skip("no backend configured (set SPECTRAPROMPT_ENDPOINT and SPECTRAPROMPT_MODEL)".into());
    };
    let result = (|| -> Check {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let manifest = match std::env::var("SPECTRAPROMPT_SMOKE_MANIFEST") {
            Ok(m) => PathBuf::from(m),
            Err(_) => import_synthetic(tmp.path(), DatasetKind::EuroSat, 60, 1)?,
        };
        let cfg = config(
            &manifest,
            &tmp.path().join("live"),
            json!({
                "task": "eurosat10",
                "modality": "rgb",
                "subset": {"n": 50, "seed": 0},
                "backend": {"kind": "http", "endpoint_url": endpoint, "model_name": model},
            }),
        )?;
        let key = std::env::var(spectraprompt_cli::config::API_KEY_ENV).ok();
        let run = run_eval(&cfg, key).map_err(|e| format!("{e:#}"))?;
        let m = &run.metrics.metrics;
        let ok = m.n_records - m.n_parse_failures - m.n_backend_errors;
        let rate = ok as f64 / m.n_records as f64;
        ensure(rate >= 0.9, || format!("parse success {rate:.2}"))?;
        let table = build_table(&[(run.metrics.run_label.clone(), run.metrics.clone())], &Averaging::ALL, None)
            .map_err(|e| e.to_string())?;
        print!("{}", table.markdown());
        Ok(format!("{} records, parse success {rate:.2}", m.n_records))
    })();
    match result {
        Ok(s) => Verdict::Pass(s),
        Err(e) => Verdict::Fail(e),
    }
}

fn run(check: fn() -> Check) -> Verdict {
    match catch_unwind(AssertUnwindSafe(check)) {
        Ok(Ok(detail)) => Verdict::Pass(detail),
        Ok(Err(e)) => Verdict::Fail(e),
        Err(_) => Verdict::Fail("panicked".into()),
    }
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|_| {}));
    let checks: [(&str, fn() -> Check); 8] = [
        ("golden prompts", golden_prompts),
        ("colormap exactness", colormap_exactness),
        ("index math", index_math),
        ("metrics oracle", metrics_oracle),
        ("end-to-end closure", end_to_end_closure),
        ("determinism and caching", determinism_and_caching),
        ("parser fuzz", parser_fuzz),
        ("image-set shape", image_set_shape),
    ];
    let mut failed = 0;
    let mut report = |i: usize, name: &str, verdict: Verdict| {
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {i}: {tag} {name}: {detail}");
    };
    for (i, (name, check)) in checks.into_iter().enumerate() {
        report(i + 1, name, run(check));
    }
    report(9, "live smoke", live_smoke());
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all offline criteria passed");
        ExitCode::SUCCESS
    }
}
