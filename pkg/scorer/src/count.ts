/**
 * Token counting over raw corpus text, in the count-table TSV format the
 * analysis side consumes (token<TAB>count, tokens as surface strings), and
 * the tokenization sidecar used for window planning.
 */

import * as fs from 'node:fs';

import { Header, TokenLine, writeScoreFile, writeCountTable } from './formats.js';
import { DocTokens, loadCorpus } from './score.js';
import { Tokenizer } from './tokenizer.js';

export function countTokens(docs: Map<string, DocTokens>): Map<string, number> {
  const counts = new Map<string, number>();
  for (const doc of docs.values()) {
    for (const t of doc.tokens) {
      counts.set(t.text, (counts.get(t.text) ?? 0) + 1);
    }
  }
  return counts;
}

export function runCountJob(corpusDir: string, tokenizer: Tokenizer,
                            outPath: string): number {
  const docs = loadCorpus(corpusDir, tokenizer);
  const counts = countTokens(docs);
  if (counts.size === 0) {
    process.stderr.write(`warning: no tokens found under ${corpusDir}\n`);
  }
  writeCountTable(outPath, counts);
  return counts.size;
}

export function runTokenizeJob(corpusDir: string, tokenizer: Tokenizer,
                               outPath: string): number {
  const docs = loadCorpus(corpusDir, tokenizer);
  const lines: TokenLine[] = [];
  for (const doc of [...docs.values()].sort((a, b) => a.docId.localeCompare(b.docId))) {
    for (const t of doc.tokens) {
      lines.push({
        doc_id: doc.docId, token_index: t.index, char_start: t.start,
        char_end: t.end, token_text: t.text, log2prob: null,
      });
    }
  }
  const header: Header = {
    model_id: '', checkpoint_step: 0, tokenizer_id: tokenizer.id,
    window_size: 0, condition: 'tokens', n: null,
  };
  writeScoreFile(outPath, header, lines);
  return lines.length;
}
