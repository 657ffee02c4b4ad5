//! Golden-file regression: a three-repetition oracle run with fixed
//! seeds must reproduce the committed reference report byte-for-byte on
//! any machine. Regenerate with
//! `MEMPROBE_BLESS_GOLDEN=1 cargo test -p memprobe --test golden_report`.

use std::path::Path;
use std::sync::Arc;

use memprobe::agent::{AgentBackend, OracleBehavior};
use memprobe::attacks::{AttackConfig, AttackKind};
use memprobe::eval::{run_experiment, EvalError, ExperimentConfig, RunComponents};
use memprobe::memstore::{HashedNgramEmbedder, MemoryStore, MemoryStoreConfig};
use memprobe::model::AccessMode;
use memprobe::probegen::TemplateGenerator;
use memprobe::scoring::{NoisyJudge, RubricTableJudge};
use memprobe::synthetic::separation_corpus;

fn factory(seed: u64) -> Result<RunComponents, EvalError> {
    let corpus = separation_corpus();
    let store = MemoryStore::new(
        Arc::new(HashedNgramEmbedder::default()),
        MemoryStoreConfig {
            top_l: 15,
            persistence_path: None,
        },
    );
    for u in corpus.units {
        store
            .insert(u)
            .map_err(|e| EvalError::Component(e.to_string()))?;
    }
    Ok(RunComponents {
        agent: AgentBackend::oracle(
            OracleBehavior {
                inference_rate: 0.4,
                rng_seed: seed,
                ..OracleBehavior::default()
            },
            Arc::new(store),
        ),
        generator: Box::new(TemplateGenerator),
        response_judge: Box::new(NoisyJudge::new(RubricTableJudge, 0.10, seed)),
        memory_judge: Box::new(NoisyJudge::new(RubricTableJudge, 0.10, seed)),
        paraphraser: None,
    })
}

#[test]
fn three_repetition_oracle_run_matches_the_golden_report() {
    let corpus = separation_corpus();
    let cfg = ExperimentConfig {
        repeats: 3,
        parallelism: 4,
        ..ExperimentConfig::new(
            AttackConfig {
                seed: 42,
                ..AttackConfig::new(AttackKind::Mrmmia, AccessMode::Graybox)
            },
            "synthetic",
        )
    };
    let report = run_experiment(&cfg, &factory, &corpus.candidates).unwrap();
    let got = serde_json::to_string_pretty(&report).unwrap();
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/oracle_report.json");
    if std::env::var("MEMPROBE_BLESS_GOLDEN").is_ok() {
        std::fs::create_dir_all(golden_path.parent().unwrap()).unwrap();
        std::fs::write(&golden_path, &got).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&golden_path).expect("golden report present");
    assert_eq!(got, want, "report drifted from the golden file");
}
