/**
 * Tokenizers with character offsets over raw document text.
 *
 * The greedy vocab tokenizer is BPE-like: longest-match pieces that keep
 * leading whitespace attached, so token spans tile the text exactly (the
 * property the alignment side of the contract requires).  The whitespace
 * tokenizer splits on spaces and drops them; it exists for count tables
 * over pre-tokenized text and must not be used for score manifests.
 */

import * as fs from 'node:fs';

export interface Token {
  index: number; // 1-based
  text: string;
  start: number; // [start, end) character offsets
  end: number;
}

export interface Tokenizer {
  id: string;
  /** Token ids the model's output distribution ranges over. */
  vocab: string[];
  tokenize(text: string): Token[];
}

interface VocabFile {
  tokenizer_id: string;
  pieces: string[];
}

export class GreedyVocabTokenizer implements Tokenizer {
  id: string;
  vocab: string[];
  private byLength: string[];

  constructor(id: string, pieces: string[]) {
    this.id = id;
    // Single characters are implicit fallback pieces.
    const all = new Set(pieces);
    this.vocab = [...all].sort();
    this.byLength = [...all].sort((a, b) => b.length - a.length);
  }

  static fromFile(path: string): GreedyVocabTokenizer {
    const raw = JSON.parse(fs.readFileSync(path, 'utf-8')) as VocabFile;
    if (!raw.tokenizer_id || !Array.isArray(raw.pieces)) {
      throw new Error(`${path}: vocab file needs tokenizer_id and pieces`);
    }
    return new GreedyVocabTokenizer(raw.tokenizer_id, raw.pieces);
  }

  tokenize(text: string): Token[] {
    const out: Token[] = [];
    let pos = 0;
    let index = 1;
    while (pos < text.length) {
      let piece: string | null = null;
      for (const p of this.byLength) {
        if (p.length <= text.length - pos && text.startsWith(p, pos)) {
          piece = p;
          break;
        }
      }
      if (piece === null) piece = text[pos]; // single-char fallback
      out.push({ index, text: piece, start: pos, end: pos + piece.length });
      pos += piece.length;
      index += 1;
    }
    return out;
  }
}

/** Splits on runs of whitespace; offsets cover the non-space chunks only. */
export class WhitespaceTokenizer implements Tokenizer {
  id = 'ws';
  vocab: string[] = [];

  tokenize(text: string): Token[] {
    const out: Token[] = [];
    let index = 1;
    const re = /\S+/g;
    let m: RegExpExecArray | null;
    while ((m = re.exec(text)) !== null) {
      out.push({ index, text: m[0], start: m.index, end: m.index + m[0].length });
      index += 1;
    }
    return out;
  }
}

export function loadTokenizer(spec: string): Tokenizer {
  if (spec === 'ws') return new WhitespaceTokenizer();
  return GreedyVocabTokenizer.fromFile(spec);
}
