import { SessionApi } from './api.js';
import { SessionRunner, type TrialView } from './trial.js';
import type { Progress } from './types.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

/** DOM adapter: both stimulus images are attached synchronously in one
 *  call (decoded payloads, data URLs), so they appear within the same
 *  frame; the mask cue is an outline toggle that never covers them. */
class DomView implements TrialView {
  private readonly left = el<HTMLImageElement>('stim-left');
  private readonly right = el<HTMLImageElement>('stim-right');
  private readonly mask = el<HTMLImageElement>('mask-cue');
  private readonly stage = el<HTMLDivElement>('stage');
  private readonly progress = el<HTMLDivElement>('progress');
  private readonly phase = el<HTMLDivElement>('phase');
  private readonly buttons = [
    el<HTMLButtonElement>('choose-left'),
    el<HTMLButtonElement>('choose-right'),
  ];

  showPair(left: string, right: string, mask: string, calibration: boolean): void {
    this.left.src = `data:image/png;base64,${left}`;
    this.right.src = `data:image/png;base64,${right}`;
    this.mask.src = `data:image/png;base64,${mask}`;
    this.stage.classList.remove('blanked');
    this.phase.textContent = calibration ? 'calibration trial (not scored)' : 'which image is the original?';
  }

  blank(): void {
    this.stage.classList.add('blanked');
  }

  setProgress(progress: Progress): void {
    this.progress.textContent =
      `${progress.status} - image ${progress.images_done + 1}/${progress.images_total}` +
      ` - ${progress.trials_done} responses`;
  }

  setResponsesEnabled(enabled: boolean): void {
    for (const button of this.buttons) button.disabled = !enabled;
  }

  showCompletion(progress: Progress): void {
    this.phase.textContent = `session complete - thank you! (${progress.trials_done} responses)`;
    this.stage.classList.add('blanked');
  }
}

export async function startApp(): Promise<void> {
  const api = new SessionApi('');
  const view = new DomView();
  const runner = new SessionRunner(api, view);

  el<HTMLButtonElement>('choose-left').addEventListener('click', () => runner.respond('left'));
  el<HTMLButtonElement>('choose-right').addEventListener('click', () => runner.respond('right'));
  el<HTMLInputElement>('mask-toggle').addEventListener('change', (event) => {
    el<HTMLImageElement>('mask-cue').style.display = (event.target as HTMLInputElement).checked
      ? 'block'
      : 'none';
  });

  el<HTMLButtonElement>('start').addEventListener('click', async () => {
    const observerId = el<HTMLInputElement>('observer-id').value.trim() || 'anonymous';
    el<HTMLDivElement>('setup').style.display = 'none';
    el<HTMLDivElement>('experiment').style.display = 'block';
    const session = await api.createSession(observerId);
    await runner.run(session.session_id);
  });
}
