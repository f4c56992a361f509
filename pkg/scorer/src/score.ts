/**
 * Manifest execution: validate tokenization against the manifest, score
 * each target on exactly its requested context slice, and emit the score
 * file.  Deterministic: same job, same bytes.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { Header, Manifest, TokenLine, writeScoreFile } from './formats.js';
import { LanguageModel, toLog2 } from './models.js';
import { Token, Tokenizer } from './tokenizer.js';

export class ScoreError extends Error {}

export interface DocTokens {
  docId: string;
  text: string;
  tokens: Token[];
}

export function loadCorpus(corpusDir: string, tokenizer: Tokenizer): Map<string, DocTokens> {
  const out = new Map<string, DocTokens>();
  const files = fs.readdirSync(corpusDir).filter((f) => f.endsWith('.txt')).sort();
  for (const f of files) {
    const docId = f.slice(0, -4);
    const text = fs.readFileSync(path.join(corpusDir, f), 'utf-8');
    out.set(docId, { docId, text, tokens: tokenizer.tokenize(text) });
  }
  return out;
}

/** Abort with a per-document diff if the manifest's token indices cannot
 * refer to this tokenization. */
export function validateManifest(manifest: Manifest, docs: Map<string, DocTokens>): void {
  const problems: string[] = [];
  const maxIndex = new Map<string, number>();
  for (const r of manifest.requests) {
    maxIndex.set(r.doc_id, Math.max(maxIndex.get(r.doc_id) ?? 0, r.target_end));
  }
  for (const [docId, needed] of [...maxIndex.entries()].sort()) {
    const doc = docs.get(docId);
    if (!doc) {
      problems.push(`${docId}: document missing from corpus`);
    } else if (doc.tokens.length < needed) {
      problems.push(
        `${docId}: manifest refers to token ${needed}, tokenization has ${doc.tokens.length}`,
      );
    }
  }
  if (problems.length > 0) {
    throw new ScoreError(`tokenization mismatch with manifest:\n  ${problems.join('\n  ')}`);
  }
}

export function scoreManifest(manifest: Manifest, docs: Map<string, DocTokens>,
                              model: LanguageModel): TokenLine[] {
  validateManifest(manifest, docs);
  const out: TokenLine[] = [];
  const initialEmitted = new Set<string>();

  for (const r of manifest.requests) {
    const doc = docs.get(r.doc_id)!;
    const texts = doc.tokens.map((t) => t.text);
    if (r.condition === 'full' && !initialEmitted.has(r.doc_id)) {
      initialEmitted.add(r.doc_id);
      const first = doc.tokens[0];
      out.push({
        doc_id: r.doc_id, token_index: 1, char_start: first.start,
        char_end: first.end, token_text: first.text, log2prob: null,
      });
    }
    for (let target = r.target_start; target <= r.target_end; target++) {
      const context = texts.slice(r.context_start - 1, target - 1);
      const lnp = model.logprob(context, texts[target - 1]);
      const tok = doc.tokens[target - 1];
      out.push({
        doc_id: r.doc_id, token_index: target, char_start: tok.start,
        char_end: tok.end, token_text: tok.text, log2prob: toLog2(lnp),
      });
    }
  }
  return out;
}

export interface ScoreJob {
  manifestPath: string;
  modelSpec: string;
  step: number | null;
  corpusDir: string;
  outPath: string;
}

export function runScoreJob(job: ScoreJob, manifest: Manifest,
                            tokenizer: Tokenizer, model: LanguageModel): void {
  if (tokenizer.id !== manifest.header.tokenizer_id) {
    throw new ScoreError(
      `tokenizer ${tokenizer.id} does not match manifest header ` +
      `${manifest.header.tokenizer_id}`,
    );
  }
  if (job.step !== null && job.step !== manifest.header.checkpoint_step) {
    throw new ScoreError(
      `--step ${job.step} does not match manifest checkpoint_step ` +
      `${manifest.header.checkpoint_step}`,
    );
  }
  const docs = loadCorpus(job.corpusDir, tokenizer);
  const lines = scoreManifest(manifest, docs, model);
  const header: Header = { ...manifest.header };
  writeScoreFile(job.outPath, header, lines);
}
