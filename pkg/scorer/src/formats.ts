/**
 * Manifest and score-file formats (JSON lines, UTF-8).
 *
 * These are the bit-exact contract with the analysis toolkit: a header
 * object on the first line, then one request per line (manifest) or one
 * token per line (score file).  Token indices are 1-based; log2prob is
 * null exactly for a document's first token, which is included so token
 * spans tile the document text.
 */

import * as fs from 'node:fs';

export interface Header {
  model_id: string;
  checkpoint_step: number;
  tokenizer_id: string;
  window_size: number;
  condition: 'full' | 'recent' | 'tokens';
  n: number | null;
}

export interface ScoreRequest {
  doc_id: string;
  context_start: number;
  target_start: number;
  target_end: number;
  condition: 'full' | 'recent';
  n: number | null;
}

export interface Manifest {
  header: Header;
  requests: ScoreRequest[];
}

export interface TokenLine {
  doc_id: string;
  token_index: number;
  char_start: number;
  char_end: number;
  token_text: string;
  log2prob: number | null;
}

export class FormatError extends Error {}

export function readManifest(path: string): Manifest {
  const lines = fs.readFileSync(path, 'utf-8').split('\n').filter((l) => l.trim());
  if (lines.length === 0) throw new FormatError(`${path}: empty manifest`);
  const header = JSON.parse(lines[0]) as Header;
  for (const key of ['model_id', 'checkpoint_step', 'tokenizer_id', 'window_size', 'condition']) {
    if (!(key in (header as unknown as Record<string, unknown>))) {
      throw new FormatError(`${path}: manifest header missing ${key}`);
    }
  }
  const requests: ScoreRequest[] = [];
  for (let i = 1; i < lines.length; i++) {
    const r = JSON.parse(lines[i]) as ScoreRequest;
    if (!(r.context_start >= 1 && r.context_start <= r.target_start && r.target_start <= r.target_end)) {
      throw new FormatError(`${path}:${i + 1}: bad request bounds`);
    }
    if (r.condition === 'recent') {
      if (r.n == null || r.target_start !== r.target_end || r.target_start - r.context_start !== r.n) {
        throw new FormatError(`${path}:${i + 1}: bad recent-n request`);
      }
    }
    requests.push(r);
  }
  return { header, requests };
}

/** Stable key order so identical runs emit identical bytes. */
function stableStringify(obj: Record<string, unknown>): string {
  const keys = Object.keys(obj).sort();
  const parts = keys.map((k) => `${JSON.stringify(k)}:${JSON.stringify(obj[k] ?? null)}`);
  return `{${parts.join(',')}}`;
}

export function writeScoreFile(path: string, header: Header, tokens: TokenLine[]): void {
  const sorted = [...tokens].sort((a, b) =>
    a.doc_id < b.doc_id ? -1 : a.doc_id > b.doc_id ? 1 : a.token_index - b.token_index,
  );
  const out: string[] = [stableStringify(header as unknown as Record<string, unknown>)];
  for (const t of sorted) {
    out.push(stableStringify(t as unknown as Record<string, unknown>));
  }
  fs.writeFileSync(path, out.join('\n') + '\n', 'utf-8');
}

export function writeCountTable(path: string, counts: Map<string, number>): void {
  const keys = [...counts.keys()].sort();
  const lines = keys.map((k) => `${k}\t${counts.get(k)}`);
  fs.writeFileSync(path, lines.join('\n') + (lines.length ? '\n' : ''), 'utf-8');
}
