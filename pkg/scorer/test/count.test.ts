import assert from 'node:assert/strict';
import { test } from 'node:test';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import { fileURLToPath } from 'node:url';

import { main } from '../src/cli.js';
import { GreedyVocabTokenizer } from '../src/tokenizer.js';

const here = path.dirname(fileURLToPath(import.meta.url));
const vocabPath = path.join(here, '..', '..', 'fixtures', 'vocab-toy.json');

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), 'lmcount-'));
}

test('count with the whitespace tokenizer: "a a b" -> {a:2, b:1}', () => {
  const dir = tmpdir();
  const corpusDir = path.join(dir, 'docs');
  fs.mkdirSync(corpusDir);
  fs.writeFileSync(path.join(corpusDir, 'd1.txt'), 'a a b');
  const out = path.join(dir, 'counts.tsv');
  assert.equal(main(['count', '--tokenizer', 'ws', '--corpus', corpusDir,
                     '--out', out]), 0);
  assert.equal(fs.readFileSync(out, 'utf-8'), 'a\t2\nb\t1\n');
});

test('empty corpus yields an empty table and exit 0', () => {
  const dir = tmpdir();
  const corpusDir = path.join(dir, 'docs');
  fs.mkdirSync(corpusDir);
  const out = path.join(dir, 'counts.tsv');
  assert.equal(main(['count', '--tokenizer', 'ws', '--corpus', corpusDir,
                     '--out', out]), 0);
  assert.equal(fs.readFileSync(out, 'utf-8'), '');
});

test('count total matches an independent tokenization pass', () => {
  const dir = tmpdir();
  const corpusDir = path.join(dir, 'docs');
  fs.mkdirSync(corpusDir);
  const text = Array.from({ length: 500 },
    (_, i) => ['the', 'cat', 'dog', 'sat', 'mat'][i % 5]).join(' ');
  fs.writeFileSync(path.join(corpusDir, 'd1.txt'), text);
  const out = path.join(dir, 'counts.tsv');
  assert.equal(main(['count', '--tokenizer', vocabPath, '--corpus', corpusDir,
                     '--out', out]), 0);
  const total = fs.readFileSync(out, 'utf-8').trim().split('\n')
    .map((l) => Number(l.split('\t')[1]))
    .reduce((a, b) => a + b, 0);
  // Oracle: re-tokenize with the same vocab, plain scan.
  const tok = GreedyVocabTokenizer.fromFile(vocabPath);
  assert.equal(total, tok.tokenize(text).length);
});

test('tokenize emits a sidecar with null log2prob and tiling spans', () => {
  const dir = tmpdir();
  const corpusDir = path.join(dir, 'docs');
  fs.mkdirSync(corpusDir);
  fs.writeFileSync(path.join(corpusDir, 'd1.txt'), 'the cat sat');
  const out = path.join(dir, 'tokens.jsonl');
  assert.equal(main(['tokenize', '--tokenizer', vocabPath,
                     '--corpus', corpusDir, '--out', out]), 0);
  const lines = fs.readFileSync(out, 'utf-8').trim().split('\n');
  const hdr = JSON.parse(lines[0]);
  assert.equal(hdr.condition, 'tokens');
  assert.equal(hdr.tokenizer_id, 'toy-bpe');
  let pos = 0;
  for (const raw of lines.slice(1)) {
    const line = JSON.parse(raw);
    assert.equal(line.log2prob, null);
    assert.equal(line.char_start, pos);
    pos = line.char_end;
  }
  assert.equal(pos, 'the cat sat'.length);
});
