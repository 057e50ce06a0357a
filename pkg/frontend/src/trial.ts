import type { SessionApi } from './api.js';
import type { Progress, Side, TrialPayload } from './types.js';

/** Rendering surface for one trial. `showPair` receives both stimulus
 *  images in a single call so the adapter can attach them inside one
 *  frame callback; nothing beyond these arguments is available to
 *  display. */
export interface TrialView {
  showPair(left: string, right: string, mask: string, calibration: boolean): void;
  blank(): void;
  setProgress(progress: Progress): void;
  setResponsesEnabled(enabled: boolean): void;
  showCompletion(progress: Progress): void;
}

/** Injectable clock so tests can measure the display window precisely. */
export interface Scheduler {
  setTimeout(fn: () => void, ms: number): ReturnType<typeof setTimeout>;
  clearTimeout(id: ReturnType<typeof setTimeout>): void;
}

const realScheduler: Scheduler = {
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (id) => clearTimeout(id),
};

/** Runs a session trial-by-trial: simultaneous display, timed blanking
 *  at the server-declared deadline, response capture (accepted after
 *  blanking too), submission, repeat until the session finishes. */
export class SessionRunner {
  private pendingChoice: ((side: Side) => void) | null = null;

  constructor(
    private readonly api: SessionApi,
    private readonly view: TrialView,
    private readonly scheduler: Scheduler = realScheduler,
  ) {}

  /** Forward a click; ignored unless a trial is awaiting a choice. */
  respond(side: Side): void {
    if (this.pendingChoice) {
      const resolve = this.pendingChoice;
      this.pendingChoice = null;
      resolve(side);
    }
  }

  get awaitingResponse(): boolean {
    return this.pendingChoice !== null;
  }

  async runTrial(sessionId: string): Promise<Progress> {
    const trial: TrialPayload = await this.api.nextTrial(sessionId);
    this.view.setProgress(trial.progress);
    this.view.showPair(trial.left, trial.right, trial.mask, trial.calibration);
    this.view.setResponsesEnabled(true);

    const blankTimer = this.scheduler.setTimeout(
      () => this.view.blank(),
      trial.deadline_seconds * 1000,
    );
    const side = await new Promise<Side>((resolve) => {
      this.pendingChoice = resolve;
    });
    // stimulus leaves the screen on response or at the deadline,
    // whichever comes first; late responses are still accepted
    this.scheduler.clearTimeout(blankTimer);
    this.view.blank();
    this.view.setResponsesEnabled(false);

    const result = await this.api.submitResponse(sessionId, trial.trial_id, side);
    this.view.setProgress(result);
    return result;
  }

  async run(sessionId: string, maxTrials = Infinity): Promise<Progress> {
    let progress: Progress = await this.api.status(sessionId);
    let trials = 0;
    while (progress.status !== 'finished' && trials < maxTrials) {
      progress = await this.runTrial(sessionId);
      trials += 1;
    }
    if (progress.status === 'finished') {
      this.view.showCompletion(progress);
    }
    return progress;
  }
}
