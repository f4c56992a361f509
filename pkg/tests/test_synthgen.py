"""Generator contract: determinism and the context-condition invariants the
reference scorer must honor."""

import numpy as np

from surpdiag import synthgen
from surpdiag.cli import main
from surpdiag.config import load_config
from surpdiag.corpus import parse_corpus, apply_et_filters
from surpdiag.scoring import ScoreManifest, ScoreRequest, read_manifest

TINY = synthgen.SynthSpec(
    seed=5, n_docs=2, sentences_per_doc=4, words_per_sentence=(5, 7),
    n_subjects=3, n_common_types=40, n_rare_types=50,
    variants=synthgen.DEFAULT_VARIANTS[:3], steps=(143000,), window=8,
    occlusion_n=(9,), permutations=50, analysis_seed=1,
)


def test_build_world_deterministic():
    w1 = synthgen.build_world(TINY)
    w2 = synthgen.build_world(TINY)
    assert w1.uni_bits == w2.uni_bits
    assert w1.events == w2.events
    k = next(iter(w1.s_final))
    np.testing.assert_array_equal(w1.s_final[k], w2.s_final[k])


def test_recent_equals_full_when_context_covers_everything():
    world = synthgen.build_world(TINY)
    key = sorted(world.uni_bits)[10]
    for vi in range(3):
        assert world.occlusion_increment(key, vi, 20, full_context=20) == 0.0
        assert world.occlusion_increment(key, vi, 30, full_context=20) == 0.0
        assert world.occlusion_increment(key, vi, 9, full_context=20) > 0.0


def test_larger_models_lose_more_context():
    world = synthgen.build_world(TINY)
    rare = max(world.rho, key=world.rho.get)
    incs = [world.occlusion_increment(rare, vi, 9, full_context=60)
            for vi in range(3)]
    assert incs[0] < incs[1] < incs[2]


def test_score_files_round_trip_through_reference_scorer(tmp_path):
    world = synthgen.build_world(TINY)
    doc_id = sorted(world.docs)[0]
    count = max(t.token_index for t in world.docs[doc_id].tokens)
    manifest = ScoreManifest(
        model_id=TINY.variants[0].model_id, checkpoint_step=143000,
        tokenizer_id=TINY.tokenizer_id, window_size=8, condition="full",
        n=None,
        requests=[ScoreRequest(doc_id, 1, 2, count)],
    )
    scores = synthgen.score_manifest(world, manifest)
    assert scores[0].log2prob is None and scores[0].token_index == 1
    assert all(s.log2prob < 0 for s in scores[1:])
    indices = sorted(s.token_index for s in scores)
    assert indices == list(range(1, count + 1))


def test_all_occlusion_targets_skipped_still_plans(tmp_path, capsys):
    # Documents shorter than the occlusion context: every quintile-1 word
    # is skipped, manifests are empty, exit code stays 0.
    spec = synthgen.SynthSpec(
        seed=6, n_docs=2, sentences_per_doc=3, words_per_sentence=(4, 5),
        n_subjects=3, n_common_types=30, n_rare_types=40,
        variants=synthgen.DEFAULT_VARIANTS[:3], steps=(143000,), window=8,
        occlusion_n=(49,), permutations=10, analysis_seed=1,
    )
    world = synthgen.build_world(spec)
    cfg = synthgen.write_fixture(world, tmp_path)
    assert main(["plan", "--config", str(cfg)]) == 0
    config = load_config(cfg)
    m = read_manifest(config.outdir / "manifests" /
                      "pseudo-70m_step143000_recent49.jsonl")
    assert m.requests == []


def test_eye_tracking_world_parses_and_filters(tmp_path):
    spec = synthgen.SynthSpec(
        seed=9, paradigm="eye_tracking", n_docs=2, sentences_per_doc=6,
        words_per_sentence=(6, 8), n_subjects=4, n_common_types=40,
        n_rare_types=50, variants=synthgen.DEFAULT_VARIANTS[:3],
        steps=(143000,), window=16, occlusion_n=(9,), permutations=10,
        analysis_seed=1,
    )
    world = synthgen.build_world(spec)
    cfg = synthgen.write_fixture(world, tmp_path)
    config = load_config(cfg)
    corpus = parse_corpus(config.events_path, "eye_tracking",
                          docs_dir=config.docs_dir)
    fs = apply_et_filters(corpus)
    assert fs.observations
    reasons = {r for _, r in fs.exclusion_log}
    assert "unfixated" in reasons
    assert "document_boundary" in reasons
