#!/usr/bin/env python3
"""Generate the committed test fixtures with the Hugging Face reference stack.

Produces, under fixtures/:
  hub/<repo>/main/...        tiny checkpoints laid out like a warm download cache
  golden/<repo>.safetensors  reference activations for the golden sentences
  tokenizer/<family>_ids.jsonl  reference ids for the tokenizer parity set

Everything here is computed by transformers/tokenizers, independently of the
Rust implementation. Rerun only when the fixture definition changes.

    python3 tools/make_fixtures.py
"""

import json
import os
import random
import shutil
import sys

import numpy as np
import torch
from safetensors.numpy import save_file
from tokenizers import Tokenizer, decoders, models, pre_tokenizers, processors, trainers
from tokenizers.implementations import BertWordPieceTokenizer, ByteLevelBPETokenizer

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIX = os.path.join(ROOT, "fixtures")
CORPUS = os.path.join(ROOT, "crates", "core", "data", "corpus.txt")
HUB = os.path.join(FIX, "hub")

REPOS = {
    "bert": "encbench-fixtures/tiny-bert",
    "roberta": "encbench-fixtures/tiny-roberta",
    "xlm-roberta": "encbench-fixtures/tiny-xlm-roberta",
}

GOLDEN_SENTENCES = [
    "Hello world.",
    "The optional argument mu, if given, should be the mean of the data.",
    "Tokenizers split text into pieces; models turn pieces into vectors!",
    "Café owners don't like 42 noisy customers.",
    "Short.",
]

EXTRA_PARITY = [
    "Hello, world!",
    "Café naïve résumé École",
    "Don't stop: we're 100% sure it's fine, isn't it?",
    "Numbers like 3.14159 and 2,718 appear here.",
    "Multiple   spaces\tand\ttabs between words.",
    "Unicode punctuation — dashes ‘quotes’ and «guillemets».",
    "你好 world mixed with CJK 世界.",
    "ALL CAPS SENTENCE WITH MIXED case Letters.",
    "email@example.com and https://example.org/path?x=1",
    "unaffable supercalifragilisticexpialidocious antidisestablishmentarianism",
]


def repo_dir(family):
    return os.path.join(HUB, REPOS[family].replace("/", "--"), "main")


def corpus_lines():
    with open(CORPUS, encoding="utf-8") as f:
        return [l.rstrip("\n") for l in f if l.strip()]


def parity_sentences():
    lines = corpus_lines()
    rng = random.Random(1234)
    picked = rng.sample(lines, 90)
    return picked + EXTRA_PARITY


def train_tokenizers():
    # WordPiece (BERT layout)
    d = repo_dir("bert")
    os.makedirs(d, exist_ok=True)
    wp = BertWordPieceTokenizer(lowercase=True)
    wp.train(
        [CORPUS],
        vocab_size=3000,
        min_frequency=1,
        special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"],
    )
    wp.save_model(d)
    with open(os.path.join(d, "tokenizer_config.json"), "w") as f:
        json.dump({"do_lower_case": True, "model_max_length": 512}, f, indent=2)

    # Byte-level BPE (RoBERTa layout)
    d = repo_dir("roberta")
    os.makedirs(d, exist_ok=True)
    bpe = ByteLevelBPETokenizer()
    bpe.train(
        [CORPUS],
        vocab_size=3000,
        min_frequency=2,
        special_tokens=["<s>", "<pad>", "</s>", "<unk>", "<mask>"],
    )
    bpe.save_model(d)

    # Unigram (XLM-RoBERTa layout, combined tokenizer.json)
    d = repo_dir("xlm-roberta")
    os.makedirs(d, exist_ok=True)
    tok = Tokenizer(models.Unigram())
    tok.pre_tokenizer = pre_tokenizers.Metaspace(replacement="▁", prepend_scheme="always")
    tok.decoder = decoders.Metaspace(replacement="▁", prepend_scheme="always")
    trainer = trainers.UnigramTrainer(
        vocab_size=2500,
        special_tokens=["<s>", "<pad>", "</s>", "<unk>", "<mask>"],
        unk_token="<unk>",
        shrinking_factor=0.75,
    )
    tok.train([CORPUS], trainer)
    tok.post_processor = processors.TemplateProcessing(
        single="<s> $A </s>",
        special_tokens=[("<s>", 0), ("</s>", 2)],
    )
    tok.save(os.path.join(d, "tokenizer.json"))
    # Re-serialize through the canonical XLM-R pipeline so the file carries
    # the same pre-tokenizer and post-processor as published repos.
    load_oracle_tokenizer("xlm-roberta").backend_tokenizer.save(os.path.join(d, "tokenizer.json"))


def load_oracle_tokenizer(family):
    from transformers import BertTokenizer, RobertaTokenizer, XLMRobertaTokenizer

    d = repo_dir(family)
    if family == "bert":
        return BertTokenizer(vocab=os.path.join(d, "vocab.txt"), do_lower_case=True)
    if family == "roberta":
        return RobertaTokenizer(vocab=os.path.join(d, "vocab.json"), merges=os.path.join(d, "merges.txt"))
    with open(os.path.join(d, "tokenizer.json"), encoding="utf-8") as f:
        vocab = [tuple(p) for p in json.load(f)["model"]["vocab"]]
    return XLMRobertaTokenizer(vocab=vocab)


def export_tokenizer_parity():
    out = os.path.join(FIX, "tokenizer")
    os.makedirs(out, exist_ok=True)
    sentences = parity_sentences()
    # Canonical uncased BERT vocabulary (committed; see fixtures/README.md).
    from transformers import BertTokenizer

    canonical = os.path.join(HUB, "bert-base-uncased", "main", "vocab.txt")
    if os.path.exists(canonical):
        tok = BertTokenizer(vocab=canonical, do_lower_case=True)
        with open(os.path.join(out, "bert-base-uncased_ids.jsonl"), "w", encoding="utf-8") as f:
            for s in sentences:
                ids = tok(s, truncation=True, max_length=512)["input_ids"]
                f.write(json.dumps({"text": s, "ids": ids}, ensure_ascii=False) + "\n")
    for family in REPOS:
        tok = load_oracle_tokenizer(family)
        with open(os.path.join(out, f"{family}_ids.jsonl"), "w", encoding="utf-8") as f:
            for s in sentences:
                ids = tok(s, truncation=True, max_length=512)["input_ids"]
                f.write(json.dumps({"text": s, "ids": ids}, ensure_ascii=False) + "\n")


def randomize_(model, seed):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "LayerNorm.weight" in name:
                p.copy_(1.0 + 0.1 * torch.randn(p.shape, generator=g))
            elif name.endswith("bias") or "LayerNorm.bias" in name:
                p.copy_(0.1 * torch.randn(p.shape, generator=g))
            else:
                p.copy_(0.2 * torch.randn(p.shape, generator=g))


def build_models():
    from transformers import (
        BertConfig,
        BertForPreTraining,
        RobertaConfig,
        RobertaForMaskedLM,
        XLMRobertaConfig,
        XLMRobertaForMaskedLM,
    )

    common = dict(
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        hidden_act="gelu",
        hidden_dropout_prob=0.0,
        attention_probs_dropout_prob=0.0,
        layer_norm_eps=1e-12,
    )

    tok = load_oracle_tokenizer("bert")
    cfg = BertConfig(vocab_size=len(tok), max_position_embeddings=128, type_vocab_size=2, pad_token_id=0, **common)
    m = BertForPreTraining(cfg)
    randomize_(m, 1)
    m.save_pretrained(repo_dir("bert"), safe_serialization=True)

    tok = load_oracle_tokenizer("roberta")
    cfg = RobertaConfig(
        vocab_size=len(tok), max_position_embeddings=130, type_vocab_size=1, pad_token_id=1,
        bos_token_id=0, eos_token_id=2, **dict(common, layer_norm_eps=1e-5),
    )
    m = RobertaForMaskedLM(cfg)
    randomize_(m, 2)
    m = m.half()
    m.save_pretrained(repo_dir("roberta"), safe_serialization=True)

    tok = load_oracle_tokenizer("xlm-roberta")
    cfg = XLMRobertaConfig(
        vocab_size=len(tok), max_position_embeddings=130, type_vocab_size=1, pad_token_id=1,
        bos_token_id=0, eos_token_id=2, **dict(common, layer_norm_eps=1e-5),
    )
    m = XLMRobertaForMaskedLM(cfg)
    randomize_(m, 3)
    m = m.to(torch.bfloat16)
    m.save_pretrained(repo_dir("xlm-roberta"), safe_serialization=True)


def export_goldens(model_dir, tokenizer, out_path, sentences=GOLDEN_SENTENCES):
    """Run the reference encoder in float64 and store its activations."""
    from transformers import AutoModel

    model = AutoModel.from_pretrained(model_dir, attn_implementation="eager")
    model = model.to(torch.float64).eval()
    enc = tokenizer(sentences, padding=True, truncation=True, max_length=512, return_tensors="pt")
    if "token_type_ids" not in enc:
        enc["token_type_ids"] = torch.zeros_like(enc["input_ids"])
    with torch.no_grad():
        out = model(
            input_ids=enc["input_ids"],
            attention_mask=enc["attention_mask"],
            token_type_ids=enc["token_type_ids"],
            output_hidden_states=True,
        )
    tensors = {
        "input_ids": enc["input_ids"].numpy().astype(np.int64),
        "attention_mask": enc["attention_mask"].numpy().astype(np.int64),
        "token_type_ids": enc["token_type_ids"].numpy().astype(np.int64),
        "last_hidden_state": out.last_hidden_state.numpy().astype(np.float32),
        "hidden_states.0": out.hidden_states[0].numpy().astype(np.float32),
        "hidden_states.1": out.hidden_states[1].numpy().astype(np.float32),
    }
    if getattr(out, "pooler_output", None) is not None:
        tensors["pooler_output"] = out.pooler_output.numpy().astype(np.float32)
    os.makedirs(os.path.dirname(out_path), exist_ok=True)
    save_file(tensors, out_path, metadata={"sentences": json.dumps(sentences, ensure_ascii=False)})


def main():
    for family in REPOS:
        d = os.path.dirname(repo_dir(family))
        if os.path.isdir(d):
            shutil.rmtree(d)
    train_tokenizers()
    export_tokenizer_parity()
    build_models()
    for family, repo in REPOS.items():
        out = os.path.join(FIX, "golden", repo.replace("/", "--") + ".safetensors")
        export_goldens(repo_dir(family), load_oracle_tokenizer(family), out)
    print("fixtures written to", FIX, file=sys.stderr)


if __name__ == "__main__":
    main()
