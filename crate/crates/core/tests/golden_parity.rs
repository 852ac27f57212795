mod common;

use encbench_core::checkpoint::{load_from_dir, CheckpointIndex};
use encbench_core::models::Encoder;
use encbench_core::{BackendId, EncoderInput, Tensor};

const TOLERANCE: f32 = 5e-3;

struct Golden {
    sentences: Vec<String>,
    index: CheckpointIndex,
}

impl Golden {
    fn load(repo: &str) -> Golden {
        let path = common::fixtures().join("golden").join(format!("{}.safetensors", repo.replace('/', "--")));
        let index = CheckpointIndex::read(&path).unwrap();
        let sentences = serde_json::from_str(&index.metadata()["sentences"]).unwrap();
        Golden { sentences, index }
    }

    fn i64s(&self, name: &str) -> Tensor {
        self.index.tensor(name).unwrap()
    }

    fn f32s(&self, name: &str) -> Vec<f32> {
        self.index.tensor(name).unwrap().to_vec_f32().unwrap()
    }

    fn input(&self) -> EncoderInput {
        EncoderInput::new(self.i64s("input_ids"), self.i64s("attention_mask"), self.i64s("token_type_ids")).unwrap()
    }
}

fn check_repo(repo: &str) {
    let model = load_from_dir(&common::snapshot(repo)).unwrap();
    assert!(model.unexpected.is_empty(), "{:?}", model.unexpected);
    let golden = Golden::load(repo);

    let encoding = model.tokenizer.encode_batch(&golden.sentences).unwrap();
    assert_eq!(encoding.ids, golden.i64s("input_ids").as_i64().unwrap());
    assert_eq!(encoding.attention_mask, golden.i64s("attention_mask").as_i64().unwrap());

    let input = golden.input();
    for id in BackendId::ALL {
        let encoder = Encoder::new(model.config.clone(), model.weights.clone()).unwrap();
        let out = encoder.forward_with_hidden_states(&input, id.backend()).unwrap();
        let hidden = out.hidden_states.as_ref().unwrap();
        let checks = [
            ("hidden_states.0", hidden[0].to_vec_f32().unwrap()),
            ("hidden_states.1", hidden[1].to_vec_f32().unwrap()),
            ("last_hidden_state", out.last_hidden_state.to_vec_f32().unwrap()),
        ];
        for (name, got) in checks {
            let err = common::max_abs_diff(&got, &golden.f32s(name));
            assert!(err <= TOLERANCE, "{repo} {id} {name}: max abs err {err}");
        }
        // Without pooler weights the reference fills the pooler with fresh
        // random values, so its pooler output is only comparable when the
        // checkpoint ships one.
        if model.weights.pooler.is_some() {
            let p = out.pooler_output.as_ref().unwrap();
            let err = common::max_abs_diff(&p.to_vec_f32().unwrap(), &golden.f32s("pooler_output"));
            assert!(err <= TOLERANCE, "{repo} {id} pooler: max abs err {err}");
        } else {
            assert!(out.pooler_output.is_none());
        }
    }
}

#[test]
fn bert_fixture_matches_golden() {
    check_repo(common::FIXTURE_REPOS[0].1);
}

#[test]
fn roberta_fixture_matches_golden() {
    check_repo(common::FIXTURE_REPOS[1].1);
}

#[test]
fn xlm_roberta_fixture_matches_golden() {
    check_repo(common::FIXTURE_REPOS[2].1);
}
