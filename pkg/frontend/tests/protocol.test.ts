// Protocol conformance: a scripted session against the real session
// service. Verifies response delivery, the no-leak contract, simultaneous
// display with 5 s blanking, and that the server-side log records exactly
// the scripted clicks.

import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { execFileSync, spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync, readdirSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { SessionApi } from '../src/api.js';
import { SessionRunner, type TrialView } from '../src/trial.js';
import type { Progress, Side } from '../src/types.js';

const PORT = 8917;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let storeDir: string;

class RecordingView implements TrialView {
  pairs: { left: string; right: string; mask: string; shownAt: number }[] = [];
  blanks: number[] = [];
  completions: Progress[] = [];
  enabled = false;

  showPair(left: string, right: string, mask: string): void {
    this.pairs.push({ left, right, mask, shownAt: performance.now() });
  }

  blank(): void {
    this.blanks.push(performance.now());
  }

  setProgress(): void {}

  setResponsesEnabled(enabled: boolean): void {
    this.enabled = enabled;
  }

  showCompletion(progress: Progress): void {
    this.completions.push(progress);
  }
}

const delay = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

async function until(predicate: () => boolean, timeoutMs = 5000): Promise<void> {
  const start = performance.now();
  while (!predicate()) {
    if (performance.now() - start > timeoutMs) throw new Error('timed out waiting');
    await delay(10);
  }
}

beforeAll(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), 'jndnet-data-'));
  storeDir = mkdtempSync(join(tmpdir(), 'jndnet-store-'));
  execFileSync('python3', [
    '-m', 'jndnet.cli', '--seed', '3', '--out', dataDir,
    'gen-data', '--count', '6', '--size', '16',
  ]);
  server = spawn('python3', [
    '-m', 'jndnet.cli', 'serve',
    '--manifest', join(dataDir, 'manifest.jsonl'),
    '--store', storeDir,
    '--port', String(PORT),
  ]);
  for (let attempt = 0; attempt < 100; attempt += 1) {
    try {
      const response = await fetch(`${BASE}/api/images`);
      if (response.ok) return;
    } catch {
      /* not accepting connections yet */
    }
    await delay(200);
  }
  throw new Error('session service did not come up');
}, 30000);

afterAll(() => {
  server?.kill();
});

describe('webui protocol conformance', () => {
  it('runs a scripted 5-trial session cleanly', async () => {
    // capture every raw /next body the client receives
    const rawNextBodies: string[] = [];
    const origFetch = globalThis.fetch;
    globalThis.fetch = (async (input: any, init?: any) => {
      const response = await origFetch(input, init);
      if (String(input).endsWith('/next')) {
        rawNextBodies.push(await response.clone().text());
      }
      return response;
    }) as typeof fetch;

    try {
      const api = new SessionApi(BASE);
      const view = new RecordingView();
      const runner = new SessionRunner(api, view);
      const session = await api.createSession('scripted-observer', 42);

      const clicks: Side[] = ['left', 'right', 'left', 'left', 'right'];
      // first response arrives after the blanking deadline, the rest quickly
      const clickDelaysMs = [5300, 150, 150, 150, 150];
      for (let i = 0; i < clicks.length; i += 1) {
        const trialDone = runner.runTrial(session.session_id);
        await until(() => runner.awaitingResponse);
        await delay(clickDelaysMs[i]);
        runner.respond(clicks[i]);
        const progress = await trialDone;
        expect(progress.trials_done).toBe(i + 1);
      }

      // five valid responses reached the server
      const status = await api.status(session.session_id);
      expect(status.trials_done).toBe(5);

      // the pre-response payloads never carry the answer or the stimulus level
      expect(rawNextBodies.length).toBeGreaterThanOrEqual(5);
      for (const body of rawNextBodies) {
        expect(body).not.toContain('correct_side');
        const parsed = JSON.parse(body);
        expect(parsed).not.toHaveProperty('x');
        expect(parsed).not.toHaveProperty('direction');
        expect(parsed.deadline_seconds).toBe(5.0);
      }

      // both stimuli and the mask cue arrive in one render call per trial
      expect(view.pairs.length).toBe(5);
      for (const pair of view.pairs) {
        expect(pair.left.length).toBeGreaterThan(0);
        expect(pair.right.length).toBeGreaterThan(0);
        expect(pair.mask.length).toBeGreaterThan(0);
      }

      // trial 1 blanked by the deadline timer: 5 s within +-100 ms,
      // and the late response was still accepted (asserted above)
      const firstBlank = view.blanks.find((t) => t > view.pairs[0].shownAt);
      expect(firstBlank).toBeDefined();
      const displayedFor = (firstBlank as number) - view.pairs[0].shownAt;
      expect(Math.abs(displayedFor - 5000)).toBeLessThanOrEqual(100);

      // server-side log holds exactly the scripted clicks, in order
      const logFile = readdirSync(storeDir).find((name) =>
        name.includes(session.session_id),
      );
      expect(logFile).toBeDefined();
      const events = readFileSync(join(storeDir, logFile as string), 'utf-8')
        .split('\n')
        .filter((line) => line.trim())
        .map((line) => JSON.parse(line));
      const responded = events.filter((event) => event.type === 'responded');
      expect(responded.map((event) => event.chosen_side)).toEqual(clicks);
      // the event log pairs each response with a served trial
      const served = events.filter((event) => event.type === 'served');
      expect(served.length).toBe(5);
    } finally {
      globalThis.fetch = origFetch;
    }
  }, 60000);

  it('resumes the same pending trial after a reload', async () => {
    const api = new SessionApi(BASE);
    const first = await api.createSession('refresher', 7);
    const a = await api.nextTrial(first.session_id);
    const b = await api.nextTrial(first.session_id); // simulated refresh
    expect(b.trial_id).toBe(a.trial_id);
    expect(b.left).toBe(a.left);
    await api.submitResponse(first.session_id, a.trial_id, 'left');
    const c = await api.nextTrial(first.session_id);
    expect(c.trial_id).not.toBe(a.trial_id);
  }, 20000);
});
