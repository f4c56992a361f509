import assert from 'node:assert/strict';
import { test } from 'node:test';
import * as path from 'node:path';
import { fileURLToPath } from 'node:url';

import { GreedyVocabTokenizer, WhitespaceTokenizer, loadTokenizer } from '../src/tokenizer.js';

const here = path.dirname(fileURLToPath(import.meta.url));
const vocabPath = path.join(here, '..', '..', 'fixtures', 'vocab-toy.json');

test('greedy tokens tile the text exactly', () => {
  const tok = GreedyVocabTokenizer.fromFile(vocabPath);
  const text = 'the cat sat on the mat';
  const tokens = tok.tokenize(text);
  assert.equal(tokens.map((t) => t.text).join(''), text);
  let pos = 0;
  for (const t of tokens) {
    assert.equal(t.start, pos);
    assert.equal(t.end, pos + t.text.length);
    pos = t.end;
  }
  assert.equal(tokens[0].index, 1);
  assert.equal(tokens[tokens.length - 1].index, tokens.length);
});

test('greedy prefers longest match and keeps leading spaces attached', () => {
  const tok = new GreedyVocabTokenizer('t', ['ab', 'a', 'b', ' a', ' ab']);
  const tokens = tok.tokenize('ab ab');
  assert.deepEqual(tokens.map((t) => t.text), ['ab', ' ab']);
});

test('unknown characters fall back to single-char tokens', () => {
  const tok = new GreedyVocabTokenizer('t', ['a']);
  const tokens = tok.tokenize('axa');
  assert.deepEqual(tokens.map((t) => t.text), ['a', 'x', 'a']);
});

test('whitespace tokenizer splits and drops spaces', () => {
  const tok = new WhitespaceTokenizer();
  const tokens = tok.tokenize('a  a b');
  assert.deepEqual(tokens.map((t) => t.text), ['a', 'a', 'b']);
  assert.deepEqual(tokens.map((t) => [t.start, t.end]), [[0, 1], [3, 4], [5, 6]]);
});

test('loadTokenizer dispatches by spec', () => {
  assert.equal(loadTokenizer('ws').id, 'ws');
  assert.equal(loadTokenizer(vocabPath).id, 'toy-bpe');
});
