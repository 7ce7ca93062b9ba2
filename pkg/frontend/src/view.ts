/** DOM rendering. The pair screen shows only the two images and progress;
 * nothing on screen distinguishes tutorial or consistency pairs, and
 * rejection verdicts are phrased neutrally. */

import { AnnotationApi, ResponseLevel, RESPONSE_LEVELS } from './api.js';
import { AnnotationSession, Screen } from './session.js';

export const BUTTON_LABELS: Record<ResponseLevel, string> = {
  LEFT_MUCH: 'Left is much better',
  LEFT_SLIGHT: 'Left is slightly better',
  SIMILAR: 'Both are similar',
  RIGHT_SLIGHT: 'Right is slightly better',
  RIGHT_MUCH: 'Right is much better',
};

export class AnnotationView {
  constructor(
    private readonly root: HTMLElement,
    private readonly session: AnnotationSession,
    private readonly client: AnnotationApi,
  ) {
    session.onChange((screen) => this.render(screen));
    this.render(session.screen);
  }

  render(screen: Screen): void {
    this.root.textContent = '';
    switch (screen.kind) {
      case 'start':
        this.renderStart();
        break;
      case 'loading':
        this.renderMessage('Loading…');
        break;
      case 'pair':
        this.renderPair(screen);
        break;
      case 'done':
        this.renderDone(screen.verdict === 'COMPLETE');
        break;
      case 'error':
        this.renderError(screen.message);
        break;
    }
  }

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
  ): HTMLElementTagNameMap[K] {
    const node = this.root.ownerDocument.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
  }

  private renderStart(): void {
    const form = this.el('form', 'start-screen');
    const label = this.el('label', undefined, 'Rater id');
    const input = this.el('input');
    input.id = 'rater-id';
    input.name = 'rater';
    input.required = true;
    label.htmlFor = input.id;
    const button = this.el('button', 'primary', 'Start session');
    button.type = 'submit';
    form.append(label, input, button);
    form.addEventListener('submit', (event) => {
      event.preventDefault();
      const raterId = input.value.trim();
      if (raterId) void this.session.begin(raterId);
    });
    this.root.append(form);
  }

  private renderMessage(text: string): void {
    this.root.append(this.el('p', 'message', text));
  }

  private renderPair(screen: Extract<Screen, { kind: 'pair' }>): void {
    const { pair } = screen;
    const prompt = this.el('h2', 'prompt', 'Which face (left or right) has better quality?');

    const images = this.el('div', 'pair');
    const left = this.el('img', 'face left');
    left.src = this.client.imageUrl(pair.left_image_ref);
    left.alt = 'left face';
    const right = this.el('img', 'face right');
    right.src = this.client.imageUrl(pair.right_image_ref);
    right.alt = 'right face';
    images.append(left, right);

    const buttons = this.el('div', 'responses');
    RESPONSE_LEVELS.forEach((level, index) => {
      const button = this.el('button', 'response', BUTTON_LABELS[level]);
      button.dataset.level = level;
      button.title = `shortcut: ${index + 1}`;
      button.addEventListener('click', () => void this.session.answer(level));
      buttons.append(button);
    });

    const progress = this.el('div', 'progress');
    const bar = this.el('div', 'progress-bar');
    bar.style.width = `${(100 * pair.answered) / pair.total_pairs}%`;
    progress.append(bar);
    const counter = this.el(
      'p',
      'progress-text',
      `${pair.answered} of ${pair.total_pairs} pairs answered`,
    );

    this.root.append(prompt, images, buttons, progress, counter);
  }

  private renderDone(complete: boolean): void {
    const box = this.el('div', complete ? 'done complete' : 'done ended');
    box.append(
      this.el('h2', undefined, complete ? 'All pairs answered' : 'Session ended'),
      this.el(
        'p',
        undefined,
        complete
          ? 'Thank you! Your responses have been recorded.'
          : 'This session has ended and cannot be continued. Thank you for your time.',
      ),
    );
    this.root.append(box);
  }

  private renderError(message: string): void {
    const banner = this.el('div', 'retry-banner');
    banner.append(
      this.el('p', undefined, 'Connection problem. Your progress is saved.'),
      this.el('p', 'detail', message),
    );
    const retry = this.el('button', 'retry', 'Retry');
    retry.addEventListener('click', () => void this.session.retry());
    banner.append(retry);
    this.root.append(banner);
  }
}

/** Map keys 1-5 to the five response levels while a pair is on screen. */
export function bindKeyboard(doc: Document, session: AnnotationSession): void {
  doc.addEventListener('keydown', (event) => {
    const index = Number.parseInt(event.key, 10) - 1;
    if (index >= 0 && index < RESPONSE_LEVELS.length) {
      void session.answer(RESPONSE_LEVELS[index]);
    }
  });
}
