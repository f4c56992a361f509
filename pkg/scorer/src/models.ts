/**
 * Autoregressive language-model backends.
 *
 * Every backend implements one method: the natural-log probability of a
 * target token given exactly the provided context tokens (context-exact:
 * nothing outside the slice can influence the score).  Log2 conversion
 * happens once at emission.
 *
 * Two deterministic toy backends ship here.  A transformer checkpoint
 * backend would implement the same interface; none is bundled because
 * checkpoints require network access to fetch.
 */

export interface LanguageModel {
  id: string;
  /** ln P(target | context), context-exact. */
  logprob(context: string[], target: string): number;
  /** ln P of a full sequence after its first token (chain rule). */
  sequenceLogprob(tokens: string[]): number;
}

export class ModelError extends Error {}

/** Uniform distribution over a fixed vocabulary size. */
export class UniformModel implements LanguageModel {
  id: string;
  private logp: number;

  constructor(vocabSize: number) {
    if (!(vocabSize >= 2)) throw new ModelError(`bad vocab size ${vocabSize}`);
    this.id = `uniform:${vocabSize}`;
    this.logp = -Math.log(vocabSize);
  }

  logprob(_context: string[], _target: string): number {
    return this.logp;
  }

  sequenceLogprob(tokens: string[]): number {
    return this.logp * Math.max(tokens.length - 1, 0);
  }
}

/** FNV-1a, 32-bit, mapped to [0, 1). */
function hash01(parts: string[]): number {
  let h = 0x811c9dc5;
  for (const part of parts) {
    for (let i = 0; i < part.length; i++) {
      h ^= part.charCodeAt(i);
      h = Math.imul(h, 0x01000193) >>> 0;
    }
    h ^= 0x1f;
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h / 0x100000000;
}

/**
 * Softmax model whose logits mix a frequency prior with a hash of the
 * whole provided context, so truncating the context genuinely changes the
 * distribution.  `step` emulates training: at step 0 the distribution is
 * uniform, and sharpens as steps grow.
 */
export class HashContextModel implements LanguageModel {
  id: string;
  private vocab: string[];
  private rank: Map<string, number>;
  private freqWeight: number;
  private ctxWeight: number;

  constructor(tokenizerId: string, vocab: string[], step: number,
              freqWeight = 3.0, ctxWeight = 2.0) {
    if (vocab.length < 2) throw new ModelError('vocab too small');
    this.id = `hashlm:${tokenizerId}@${step}`;
    this.vocab = [...vocab].sort();
    this.rank = new Map(this.vocab.map((v, i) => [v, i]));
    const progress = step / (step + 1000);
    this.freqWeight = freqWeight * progress;
    this.ctxWeight = ctxWeight * progress;
  }

  private logits(context: string[]): Float64Array {
    const n = this.vocab.length;
    const out = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      const freq = -this.freqWeight * (i / n);
      const assoc = this.ctxWeight * hash01([...context, this.vocab[i]]);
      out[i] = freq + assoc;
    }
    return out;
  }

  logprob(context: string[], target: string): number {
    const idx = this.rank.get(target);
    if (idx === undefined) {
      throw new ModelError(`target token not in vocabulary: ${JSON.stringify(target)}`);
    }
    const logits = this.logits(context);
    let max = -Infinity;
    for (const v of logits) max = Math.max(max, v);
    let sum = 0;
    for (const v of logits) sum += Math.exp(v - max);
    return logits[idx] - max - Math.log(sum);
  }

  sequenceLogprob(tokens: string[]): number {
    let total = 0;
    for (let t = 1; t < tokens.length; t++) {
      total += this.logprob(tokens.slice(0, t), tokens[t]);
    }
    return total;
  }
}

const LN2 = Math.LN2;

export function toLog2(lnp: number): number {
  // Single conversion point so rounding is applied exactly once.
  return lnp / LN2;
}

export function loadModel(spec: string, step: number,
                          tokenizerVocab: string[],
                          tokenizerId: string): LanguageModel {
  if (spec.startsWith('uniform:')) {
    return new UniformModel(Number(spec.slice('uniform:'.length)));
  }
  if (spec === 'hashlm' || spec.startsWith('hashlm:')) {
    return new HashContextModel(tokenizerId, tokenizerVocab, step);
  }
  throw new ModelError(
    `unknown model ${JSON.stringify(spec)}; expected uniform:<V> or hashlm`,
  );
}
