mod common;

use encbench_core::{ModelFamily, Tokenizer};

fn check(name: &str, family: ModelFamily, dir: std::path::PathBuf) {
    let tokenizer = Tokenizer::from_dir(family, &dir).unwrap();
    let cases = common::oracle_ids(name);
    assert_eq!(cases.len(), 100);
    let mismatches: Vec<_> = cases
        .iter()
        .filter(|(text, ids)| &tokenizer.encode(text).unwrap() != ids)
        .map(|(text, ids)| format!("{text:?}\n  want {ids:?}\n  got  {:?}", tokenizer.encode(text).unwrap()))
        .collect();
    assert!(mismatches.is_empty(), "{} mismatches:\n{}", mismatches.len(), mismatches.join("\n"));
}

#[test]
fn wordpiece_matches_oracle() {
    check("bert", ModelFamily::Bert, common::snapshot("encbench-fixtures/tiny-bert"));
}

#[test]
fn canonical_uncased_vocab_matches_oracle() {
    check("bert-base-uncased", ModelFamily::Bert, common::snapshot("bert-base-uncased"));
}

#[test]
fn byte_level_bpe_matches_oracle() {
    check("roberta", ModelFamily::Roberta, common::snapshot("encbench-fixtures/tiny-roberta"));
}

#[test]
fn unigram_matches_oracle() {
    check("xlm-roberta", ModelFamily::XlmRoberta, common::snapshot("encbench-fixtures/tiny-xlm-roberta"));
}

#[test]
fn batch_rows_match_single_rows() {
    let tokenizer = Tokenizer::from_dir(ModelFamily::Roberta, &common::snapshot("encbench-fixtures/tiny-roberta")).unwrap();
    let texts: Vec<String> = common::oracle_ids("roberta").into_iter().take(16).map(|(t, _)| t).collect();
    let batch = tokenizer.encode_batch(&texts).unwrap();
    for (b, text) in texts.iter().enumerate() {
        let single = tokenizer.encode(text).unwrap();
        assert_eq!(&batch.row(b)[..single.len()], single.as_slice());
        assert!(batch.row(b)[single.len()..].iter().all(|&id| id == tokenizer.specials().pad));
    }
}
