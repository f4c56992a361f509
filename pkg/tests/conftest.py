import pytest

from surpdiag.corpus import EVENT_COLUMNS


def pytest_runtest_logreport(report):
    """Echo one PASS/FAIL line per acceptance criterion to the terminal."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\n[acceptance] {name}: {outcome}")


def write_events(path, rows, docs: dict[str, str]):
    """Write a word-events TSV plus sidecar texts.

    Rows are dicts with any subset of EVENT_COLUMNS; missing keys become
    empty fields.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(EVENT_COLUMNS) + "\n")
        for row in rows:
            fh.write("\t".join(str(row.get(c, "")) for c in EVENT_COLUMNS)
                     + "\n")
    for doc_id, text in docs.items():
        (path.parent / f"{doc_id}.txt").write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def events_writer(tmp_path):
    def _write(rows, docs, name="events.tsv"):
        return write_events(tmp_path / name, rows, docs)
    return _write


def spr_row(subject_id, doc_id, word_index, sentence_id, pos, start, end,
            rt, score=6):
    return {
        "subject_id": subject_id, "doc_id": doc_id, "word_index": word_index,
        "sentence_id": sentence_id, "position_in_sentence": pos,
        "char_start": start, "char_end": end, "rt_ms": rt,
        "subject_score": score,
    }


def et_row(subject_id, doc_id, word_index, sentence_id, pos, start, end,
           rt, fixated=1, saccade=1.0, prev_fixated=1, screen="", line=""):
    return {
        "subject_id": subject_id, "doc_id": doc_id, "word_index": word_index,
        "sentence_id": sentence_id, "position_in_sentence": pos,
        "char_start": start, "char_end": end, "rt_ms": rt,
        "fixated": fixated, "saccade_len": saccade,
        "prev_fixated": prev_fixated, "screen_id": screen, "line_id": line,
    }
