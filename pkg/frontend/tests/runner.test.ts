// Unit tests for the trial state machine with a scripted API and clock.

import { describe, expect, it } from 'vitest';

import { SessionRunner, type Scheduler, type TrialView } from '../src/trial.js';
import type { Progress, TrialPayload } from '../src/types.js';

const progress = (status: Progress['status'], trials = 0): Progress => ({
  status,
  images_done: 0,
  images_total: 1,
  trials_done: trials,
  current_image: 'img0',
});

class FakeApi {
  submissions: { trialId: string; side: string }[] = [];
  served = 0;

  constructor(private readonly total: number) {}

  async status(): Promise<Progress & { session_id: string }> {
    return { session_id: 's', ...progress(this.served >= this.total ? 'finished' : 'running') };
  }

  async nextTrial(): Promise<TrialPayload> {
    this.served += 1;
    return {
      trial_id: `t${this.served}`,
      left: 'LEFT',
      right: 'RIGHT',
      mask: 'MASK',
      deadline_seconds: 5,
      calibration: false,
      progress: progress('running', this.served - 1),
    };
  }

  async submitResponse(_sid: string, trialId: string, side: string) {
    this.submissions.push({ trialId, side });
    const done = this.submissions.length >= this.total;
    return { correct: true, ...progress(done ? 'finished' : 'running', this.submissions.length) };
  }
}

class FakeView implements TrialView {
  log: string[] = [];
  showPair(): void {
    this.log.push('show');
  }
  blank(): void {
    this.log.push('blank');
  }
  setProgress(): void {}
  setResponsesEnabled(enabled: boolean): void {
    this.log.push(enabled ? 'enable' : 'disable');
  }
  showCompletion(): void {
    this.log.push('done');
  }
}

class ManualClock implements Scheduler {
  timers = new Map<number, { at: number; fn: () => void }>();
  nextId = 1;
  nowMs = 0;

  setTimeout(fn: () => void, ms: number) {
    const id = this.nextId++;
    this.timers.set(id, { at: this.nowMs + ms, fn });
    return id as unknown as ReturnType<typeof setTimeout>;
  }

  clearTimeout(id: ReturnType<typeof setTimeout>) {
    this.timers.delete(id as unknown as number);
  }

  advance(ms: number) {
    this.nowMs += ms;
    for (const [id, timer] of [...this.timers]) {
      if (timer.at <= this.nowMs) {
        this.timers.delete(id);
        timer.fn();
      }
    }
  }
}

describe('SessionRunner', () => {
  it('blanks at the deadline and still accepts the response', async () => {
    const api = new FakeApi(1);
    const view = new FakeView();
    const clock = new ManualClock();
    const runner = new SessionRunner(api as any, view as any, clock);

    const running = runner.runTrial('s');
    await Promise.resolve();
    await Promise.resolve();
    expect(view.log).toEqual(['show', 'enable']);

    clock.advance(5000); // deadline blanks the stimulus
    expect(view.log).toContain('blank');

    runner.respond('right'); // late response is accepted
    const result = await running;
    expect(result.trials_done).toBe(1);
    expect(api.submissions).toEqual([{ trialId: 't1', side: 'right' }]);
  });

  it('cancels the blank timer when the response comes first', async () => {
    const api = new FakeApi(1);
    const view = new FakeView();
    const clock = new ManualClock();
    const runner = new SessionRunner(api as any, view as any, clock);

    const running = runner.runTrial('s');
    await Promise.resolve();
    await Promise.resolve();
    runner.respond('left');
    await running;
    expect(clock.timers.size).toBe(0); // deadline timer cleared
    const blanks = view.log.filter((entry) => entry === 'blank');
    expect(blanks.length).toBe(1); // only the response-driven blank

    clock.advance(10000); // nothing left to fire
    expect(view.log.filter((entry) => entry === 'blank').length).toBe(1);
  });

  it('clicks are ignored when no trial is awaiting a response', () => {
    const api = new FakeApi(1);
    const runner = new SessionRunner(api as any, new FakeView() as any, new ManualClock());
    runner.respond('left'); // no-op
    expect(api.submissions).toEqual([]);
  });

  it('runs to completion and shows the end screen', async () => {
    const api = new FakeApi(3);
    const view = new FakeView();
    const clock = new ManualClock();
    const runner = new SessionRunner(api as any, view as any, clock);

    const finished = (async () => {
      const run = runner.run('s');
      for (let i = 0; i < 3; i += 1) {
        await until(() => runner.awaitingResponse);
        runner.respond('left');
      }
      return run;
    })();
    const result = await finished;
    expect(result.status).toBe('finished');
    expect(view.log.at(-1)).toBe('done');
    expect(api.submissions.length).toBe(3);
  });
});

async function until(predicate: () => boolean): Promise<void> {
  for (let i = 0; i < 1000 && !predicate(); i += 1) {
    await Promise.resolve();
  }
  if (!predicate()) throw new Error('condition never became true');
}
