#!/usr/bin/env node
/**
 * lm-scorer: execute score manifests and build token count tables.
 *
 *   lm-scorer score    --manifest PATH --model ID [--step N]
 *                      --tokenizer SPEC --corpus DIR --out PATH
 *   lm-scorer count    --tokenizer SPEC --corpus DIR --out PATH
 *   lm-scorer tokenize --tokenizer SPEC --corpus DIR --out PATH
 *
 * Model IDs: uniform:<V> or hashlm (deterministic toy backends).
 * Tokenizer SPEC: "ws" or a vocab JSON path ({tokenizer_id, pieces}).
 */

import { pathToFileURL } from 'node:url';

import { readManifest } from './formats.js';
import { loadModel } from './models.js';
import { runCountJob, runTokenizeJob } from './count.js';
import { runScoreJob } from './score.js';
import { loadTokenizer } from './tokenizer.js';

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`bad arguments near ${key}`);
    }
    out.set(key.slice(2), argv[i + 1]);
  }
  return out;
}

function need(args: Map<string, string>, key: string): string {
  const v = args.get(key);
  if (v === undefined) throw new Error(`missing --${key}`);
  return v;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === 'score') {
      const args = parseArgs(rest);
      const manifest = readManifest(need(args, 'manifest'));
      const tokenizer = loadTokenizer(need(args, 'tokenizer'));
      const step = args.has('step') ? Number(args.get('step')) : null;
      const model = loadModel(
        need(args, 'model'),
        step ?? manifest.header.checkpoint_step,
        tokenizer.vocab,
        tokenizer.id,
      );
      runScoreJob(
        {
          manifestPath: need(args, 'manifest'), modelSpec: need(args, 'model'),
          step, corpusDir: need(args, 'corpus'), outPath: need(args, 'out'),
        },
        manifest, tokenizer, model,
      );
      return 0;
    }
    if (command === 'count' || command === 'tokenize') {
      const args = parseArgs(rest);
      const tokenizer = loadTokenizer(need(args, 'tokenizer'));
      const run = command === 'count' ? runCountJob : runTokenizeJob;
      const n = run(need(args, 'corpus'), tokenizer, need(args, 'out'));
      process.stderr.write(`${command}: ${n} entries -> ${args.get('out')}\n`);
      return 0;
    }
    process.stderr.write(
      'usage: lm-scorer score|count|tokenize ... (see --help in README)\n',
    );
    return 2;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
