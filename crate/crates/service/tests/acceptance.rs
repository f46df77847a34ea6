//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails. Runs offline in mock mode.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use chrono::{DateTime, NaiveDate, Utc};
use common::{core_fixture, post, spawn, without_timestamp};
use quickcue::ServiceConfig;
use quickcue_core::domain::{
    Aspect, AspectSentimentPair, ClassifiedReview, PairSet, Review, Sentiment,
};
use quickcue_core::eval::{aggregate_annotations, per_review_prf, AnnotationScore};
use quickcue_core::gateway::{
    Backend, BackendError, GatewayOptions, MockBackend, MockLexicon, ResponseCache,
};
use quickcue_core::pipeline::{classify_all, group_by_pair};
use quickcue_core::prompt::{
    final_input_texts, parse_pair_list, render_pairs, Task, DSP_OUTPUT_INSTRUCTION,
};
use quickcue_core::{
    render_document, Gateway, Pipeline, PreprocessConfig, PromptEngine, PromptText,
    RestaurantReviewSet, SummarizeConfig,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const WORKED: &str = "The food was delicious, but the service was slow.";
const AMBIANCE: &str =
    "The ambiance was warm and inviting, but the pasta lacked seasoning and was undercooked.";

const PRF_BUDGET: Duration = Duration::from_secs(5);
const GROUPING_BUDGET: Duration = Duration::from_secs(2);
const AGGREGATE_TOLERANCE: f64 = 1e-12;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn universe() -> Vec<AspectSentimentPair> {
    AspectSentimentPair::all().collect()
}

fn random_mask(rng: &mut StdRng) -> [bool; 10] {
    // vary density so small and large sets both occur
    let p = rng.random_range(0.0..=1.0);
    std::array::from_fn(|_| rng.random_bool(p))
}

fn mask_to_set(mask: &[bool; 10]) -> PairSet {
    universe()
        .into_iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(p, _)| p)
        .collect()
}

fn pair(a: Aspect, s: Sentiment) -> AspectSentimentPair {
    AspectSentimentPair::new(a, s)
}

fn prf_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let start = Instant::now();
    for i in 0..1000 {
        let (pm, gm) = (random_mask(&mut rng), random_mask(&mut rng));
        let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
        for k in 0..10 {
            np += usize::from(pm[k]);
            ng += usize::from(gm[k]);
            tp += usize::from(pm[k] && gm[k]);
        }
        let p = match (np, ng) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => tp as f64 / np as f64,
        };
        let r = match (ng, np) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => tp as f64 / ng as f64,
        };
        let f = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        let got = per_review_prf(&mask_to_set(&pm), &mask_to_set(&gm));
        ensure((got.precision, got.recall, got.f1) == (p, r, f), || {
            format!("instance {i}: got {got:?}, oracle ({p}, {r}, {f})")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < PRF_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("1000 instances exact, {elapsed:.2?}"))
}

fn average_of_averages() -> Check {
    let score = |e: &str, a: &str, v: u8| AnnotationScore {
        example_id: e.into(),
        annotator_id: a.into(),
        factuality: v,
        noisiness: v,
    };
    let scores = [
        score("A", "1", 10),
        score("B", "1", 2),
        score("B", "2", 2),
        score("B", "3", 2),
    ];
    let got = aggregate_annotations(&scores).map_err(|e| e.to_string())?;
    ensure((got.factuality - 6.0).abs() <= AGGREGATE_TOLERANCE, || {
        format!("factuality {}", got.factuality)
    })?;
    ensure((got.noisiness - 6.0).abs() <= AGGREGATE_TOLERANCE, || {
        format!("noisiness {}", got.noisiness)
    })?;
    Ok(format!(
        "A:[10] B:[2,2,2] -> {} (pooled mean would be 4.0)",
        got.factuality
    ))
}

fn pair_list_round_trip() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0003);
    for i in 0..1000 {
        let set = mask_to_set(&random_mask(&mut rng));
        let rendered = render_pairs(&set);
        let parsed =
            parse_pair_list(&rendered).map_err(|e| format!("instance {i}: {e} for {rendered}"))?;
        ensure(parsed == set, || {
            format!("instance {i}: {rendered} parsed to {parsed:?}")
        })?;
    }
    let quoted = r#"[["Food," "Positive"],["Customer Service," "Negative"]]"#;
    let parsed = parse_pair_list(quoted).map_err(|e| format!("{quoted}: {e}"))?;
    let want = PairSet::from([
        pair(Aspect::Food, Sentiment::Positive),
        pair(Aspect::CustomerService, Sentiment::Negative),
    ]);
    ensure(parsed == want, || format!("{quoted} parsed to {parsed:?}"))?;
    Ok("1000 random sets round-trip; comma-inside-quotes form parses to 2 pairs".into())
}

fn grouping_conservation() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let start = Instant::now();
    for i in 0..200 {
        let n = rng.random_range(0..=50);
        let classified: Vec<ClassifiedReview> = (0..n)
            .map(|j| {
                ClassifiedReview::new(
                    Review::new(format!("r{j}"), "t"),
                    mask_to_set(&random_mask(&mut rng)),
                )
            })
            .collect();
        let buckets = group_by_pair(&classified);
        let pair_total: usize = classified.iter().map(|c| c.pairs.len()).sum();
        ensure(buckets.total() == pair_total, || {
            format!(
                "instance {i}: buckets hold {} ids, reviews carry {pair_total} pairs",
                buckets.total()
            )
        })?;
        for p in universe() {
            let mut expected = Vec::new();
            for c in &classified {
                for q in &c.pairs {
                    if *q == p {
                        expected.push(c.review.id.clone());
                    }
                }
            }
            ensure(buckets.get(p) == expected.as_slice(), || {
                format!("instance {i}: bucket {p} differs")
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < GROUPING_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("200 instances, {elapsed:.2?}"))
}

fn prompt_structure() -> Check {
    let engine = PromptEngine::with_defaults();
    let n = engine.classification_examples().len();
    let carp = engine.carp_prompt(WORKED).map_err(|e| e.to_string())?.text;
    let vocab = carp
        .lines()
        .find(|l| l.starts_with("For ASPECT, choose from"))
        .ok_or("no aspect vocabulary line")?;
    for a in Aspect::ALL {
        ensure(vocab.contains(a.display_name()), || {
            format!("vocabulary line lacks {a}")
        })?;
    }
    let lines: Vec<&str> = carp.lines().collect();
    let inputs: Vec<usize> = (0..lines.len()).filter(|&i| lines[i] == "INPUT:").collect();
    ensure(inputs.len() == n + 1, || {
        format!("{} INPUT sections for {n} examples", inputs.len())
    })?;
    let open = lines.get(inputs[0] + 1).copied().unwrap_or_default();
    let close = *lines.last().ok_or("empty prompt")?;
    ensure(
        open.starts_with("<<<") && close.starts_with("<<<END"),
        || format!("fences {open:?} / {close:?}"),
    )?;
    ensure(
        inputs.iter().all(|&i| lines.get(i + 1) == Some(&open)),
        || "an INPUT section is not fenced".into(),
    )?;
    ensure(
        lines.iter().filter(|l| **l == close).count() == n + 1,
        || "unbalanced fences".into(),
    )?;
    let step = |needle: &str| carp.find(needle).ok_or(format!("missing {needle:?}"));
    let (clues, reasoning, pairs) = (
        step("First, present CLUES")?,
        step("Second, deduce a diagnostic REASONING")?,
        step("Third, determine the list of aspect-sentiment pairs")?,
    );
    ensure(clues < reasoning && reasoning < pairs, || {
        "steps out of order".into()
    })?;
    step("For SENTIMENT, choose from the following two words: [Positive,Negative]")?;
    ensure(final_input_texts(&carp) == Some(vec![WORKED]), || {
        "final INPUT is not the review".into()
    })?;

    let dsp = engine
        .dsp_prompt(
            &[WORKED, AMBIANCE],
            Aspect::CustomerService,
            Sentiment::Negative,
        )
        .map_err(|e| e.to_string())?
        .text;
    for needle in [
        "Main Aspect: Customer Service",
        "Desired Sentiment: Negative",
        DSP_OUTPUT_INSTRUCTION,
    ] {
        ensure(dsp.contains(needle), || {
            format!("summarization prompt lacks {needle:?}")
        })?;
    }
    ensure(
        final_input_texts(&dsp) == Some(vec![WORKED, AMBIANCE]),
        || "summarization input differs".into(),
    )?;
    Ok(format!(
        "{} fenced INPUT sections, CLUES/REASONING/pairs in order, stimuli present",
        n + 1
    ))
}

fn fixture_pipeline() -> Pipeline {
    Pipeline::new(
        Arc::new(Gateway::mock(5)),
        Arc::new(PromptEngine::with_defaults()),
        PreprocessConfig::default(),
        SummarizeConfig::default(),
    )
}

fn corpus() -> Result<RestaurantReviewSet, String> {
    let raw = std::fs::read_to_string(core_fixture("corpus.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&raw).map_err(|e| e.to_string())
}

async fn mock_determinism() -> Check {
    let set = corpus()?;
    let today = NaiveDate::from_ymd_opt(2024, 6, 1).unwrap();
    let run = |stamp: DateTime<Utc>| {
        let set = set.clone();
        async move {
            fixture_pipeline()
                .digest(&set, today, stamp)
                .await
                .map(|d| render_document(&d))
        }
    };
    let first = run(Utc::now()).await.map_err(|e| e.to_string())?;
    let second = run(DateTime::from_timestamp(0, 0).unwrap())
        .await
        .map_err(|e| e.to_string())?;
    ensure(
        without_timestamp(&first) == without_timestamp(&second),
        || "two runs differ".into(),
    )?;
    let golden =
        std::fs::read_to_string(core_fixture("golden_digest.json")).map_err(|e| e.to_string())?;
    ensure(
        without_timestamp(&first) == without_timestamp(&golden),
        || "differs from golden digest".into(),
    )?;
    Ok(format!(
        "2 runs identical, golden match ({} bytes)",
        first.len()
    ))
}

async fn worked_examples() -> Check {
    let gateway = Gateway::mock(5);
    let set = RestaurantReviewSet::new(
        "w",
        vec![Review::new("a", WORKED), Review::new("b", AMBIANCE)],
    );
    let out = classify_all(&set, &gateway, &PromptEngine::with_defaults())
        .await
        .map_err(|e| e.to_string())?;
    let want_a = PairSet::from([
        pair(Aspect::Food, Sentiment::Positive),
        pair(Aspect::CustomerService, Sentiment::Negative),
    ]);
    let want_b = PairSet::from([
        pair(Aspect::Ambiance, Sentiment::Positive),
        pair(Aspect::Food, Sentiment::Negative),
    ]);
    ensure(out[0].pairs == want_a, || {
        format!("worked sentence gave {}", render_pairs(&out[0].pairs))
    })?;
    ensure(out[1].pairs == want_b, || {
        format!("ambiance example gave {}", render_pairs(&out[1].pairs))
    })?;
    Ok(format!(
        "{} and {}",
        render_pairs(&out[0].pairs),
        render_pairs(&out[1].pairs)
    ))
}

async fn rest_cli_parity() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = dir.path().join("quickcue.toml");
    std::fs::write(&cfg_path, "[preprocess]\nmax_age_days = 36500\n").map_err(|e| e.to_string())?;
    let cfg = ServiceConfig::load(&cfg_path).map_err(|e| e.to_string())?;
    let base = spawn(&cfg).await;
    let input = core_fixture("corpus.json");
    let body = std::fs::read(&input).map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let mut compared = Vec::new();
    for (command, endpoint) in [("classify", "/v1/classify"), ("digest", "/v1/digest")] {
        let out_file = dir.path().join(format!("{command}.json"));
        let out = Command::new(env!("CARGO_BIN_EXE_quickcue"))
            .args([command, "--mode", "mock"])
            .args([
                "--input",
                &s(&input),
                "--output",
                &s(&out_file),
                "--config",
                &s(&cfg_path),
            ])
            .env_remove("QUICKCUE_CONFIG")
            .env("RUST_LOG", "off")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            format!("{command}: {}", String::from_utf8_lossy(&out.stderr))
        })?;
        let cli_doc = std::fs::read_to_string(&out_file).map_err(|e| e.to_string())?;
        let (status, rest_doc) = post(&base, endpoint, body.clone()).await;
        ensure(status == 200, || format!("{endpoint} returned {status}"))?;
        ensure(
            without_timestamp(&cli_doc) == without_timestamp(&rest_doc),
            || format!("{command} documents differ"),
        )?;
        compared.push(format!("{command} {}B", cli_doc.len()));
    }
    Ok(compared.join(", "))
}

/// Answers every classification prompt for the marked review with text that
/// holds no pair list; everything else goes to the mock.
struct FailsMarkedReview {
    mock: MockBackend,
    failures: AtomicUsize,
}

#[async_trait]
impl Backend for FailsMarkedReview {
    async fn send(&self, prompt: &PromptText) -> Result<String, BackendError> {
        let marked = Task::of_prompt(&prompt.text) == Some(Task::JointClassification)
            && final_input_texts(&prompt.text)
                .is_some_and(|t| t.iter().any(|t| t.contains("FLAKY")));
        if marked {
            self.failures.fetch_add(1, Ordering::SeqCst);
            return Ok("Sorry, I am unable to classify this review.".into());
        }
        self.mock.send(prompt).await
    }
}

async fn fault_tolerance() -> Check {
    let backend = Arc::new(FailsMarkedReview {
        mock: MockBackend::new(MockLexicon::demo(), 5),
        failures: AtomicUsize::new(0),
    });
    let gateway = Arc::new(Gateway::new(
        backend.clone(),
        GatewayOptions::mock(),
        Some(ResponseCache::in_memory()),
    ));
    let prompts = Arc::new(PromptEngine::with_defaults());
    let set = RestaurantReviewSet::new(
        "f",
        vec![
            Review::new("a", WORKED),
            Review::new("b", "FLAKY but the burger was great"),
            Review::new("c", AMBIANCE),
        ],
    );
    let classified = classify_all(&set, &gateway, &prompts)
        .await
        .map_err(|e| e.to_string())?;
    let failures = backend.failures.load(Ordering::SeqCst);
    ensure(failures == 2, || {
        format!("marked review asked {failures} times")
    })?;
    ensure(classified.len() == 3, || {
        format!("{} results", classified.len())
    })?;
    let diagnosed: Vec<_> = classified
        .iter()
        .filter(|c| c.diagnostic.is_some())
        .collect();
    ensure(
        diagnosed.len() == 1 && diagnosed[0].review.id == "b" && diagnosed[0].pairs.is_empty(),
        || format!("{} diagnostics", diagnosed.len()),
    )?;
    let pipeline = Pipeline::new(
        gateway,
        prompts,
        PreprocessConfig::default(),
        SummarizeConfig::default(),
    );
    let digest = pipeline
        .digest(
            &set,
            NaiveDate::from_ymd_opt(2024, 6, 1).unwrap(),
            Utc::now(),
        )
        .await
        .map_err(|e| e.to_string())?;
    let sections: BTreeSet<_> = digest.aspects.iter().map(|s| s.aspect).collect();
    ensure(digest.aspects.len() == 5 && sections.len() == 5, || {
        "digest lost sections".into()
    })?;
    Ok("3 results, 1 empty-pair diagnostic, 5 digest sections".into())
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let criteria: Vec<Criterion> = vec![
        (
            "per-review P/R/F1 equals brute-force oracle",
            Box::new(prf_oracle),
        ),
        (
            "annotation aggregate is the average of averages",
            Box::new(average_of_averages),
        ),
        (
            "pair list render/parse round trip",
            Box::new(pair_list_round_trip),
        ),
        (
            "grouping conservation and membership",
            Box::new(grouping_conservation),
        ),
        ("prompt structure", Box::new(prompt_structure)),
        (
            "mock end-to-end determinism and golden digest",
            Box::new(|| rt.block_on(mock_determinism())),
        ),
        (
            "worked classification examples",
            Box::new(|| rt.block_on(worked_examples())),
        ),
        (
            "REST/CLI parity",
            Box::new(|| rt.block_on(rest_cli_parity())),
        ),
        (
            "fault tolerance",
            Box::new(|| rt.block_on(fault_tolerance())),
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
