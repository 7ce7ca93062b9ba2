import { beforeEach, describe, expect, it } from 'vitest';

import {
  AnnotationApi,
  NextPair,
  ResponseLevel,
  SubmitOutcome,
} from '../src/api.js';
import { AnnotationSession } from '../src/session.js';
import { AnnotationView, bindKeyboard } from '../src/view.js';
import { memoryStore, waitFor } from './support.js';

/** In-memory stand-in: a fixed number of pairs, then a verdict. */
class FakeApi implements AnnotationApi {
  position = 0;
  submissions: Array<{ position: number; level: ResponseLevel }> = [];
  failNext = 0; // number of nextPair calls to fail with a network error
  submitDelay: (() => Promise<void>) | null = null;

  constructor(
    readonly totalPairs = 3,
    readonly verdict: 'COMPLETE' | 'REJECTED_CONSISTENCY' = 'COMPLETE',
  ) {}

  imageUrl(ref: string): string {
    return `http://service.test/images/${ref}`;
  }

  async createSession(raterId: string) {
    return {
      session_id: `session-${raterId}`,
      state: 'ACTIVE' as const,
      total_pairs: this.totalPairs,
      answered: 0,
    };
  }

  async nextPair(): Promise<NextPair> {
    if (this.failNext > 0) {
      this.failNext -= 1;
      throw new TypeError('fetch failed');
    }
    if (this.position >= this.totalPairs) {
      return { done: true, verdict: this.verdict };
    }
    return {
      done: false,
      position: this.position,
      left_image_ref: `left-${this.position}`,
      right_image_ref: `right-${this.position}`,
      answered: this.position,
      total_pairs: this.totalPairs,
    };
  }

  async status() {
    return {
      answered: this.position,
      remaining: this.totalPairs - this.position,
      state: 'ACTIVE' as const,
    };
  }

  async submit(
    _sessionId: string,
    position: number,
    level: ResponseLevel,
  ): Promise<SubmitOutcome> {
    if (this.submitDelay) await this.submitDelay();
    if (position !== this.position) {
      return { accepted: false, state: null, errorCode: 'E_OUT_OF_ORDER' };
    }
    this.submissions.push({ position, level });
    this.position += 1;
    return { accepted: true, state: 'ACTIVE', errorCode: null };
  }
}

function mount(api: AnnotationApi) {
  const root = document.createElement('main');
  document.body.append(root);
  const session = new AnnotationSession(api, memoryStore());
  const view = new AnnotationView(root, session, api);
  return { root, session, view };
}

beforeEach(() => {
  document.body.innerHTML = '';
});

describe('start screen', () => {
  it('starts a session from the rater id form', async () => {
    const api = new FakeApi();
    const { root, session } = mount(api);
    const input = root.querySelector('input') as HTMLInputElement;
    input.value = 'alice';
    (root.querySelector('form') as HTMLFormElement).dispatchEvent(
      new Event('submit', { cancelable: true }),
    );
    await waitFor(() => session.screen.kind === 'pair', 2000, 'pair screen');
    expect(root.querySelectorAll('button.response')).toHaveLength(5);
  });
});

describe('pair screen', () => {
  async function toPairScreen(api: FakeApi) {
    const world = mount(api);
    await world.session.begin('bob');
    await waitFor(() => world.session.screen.kind === 'pair', 2000, 'pair');
    return world;
  }

  it('shows both images, five buttons, and progress', async () => {
    const api = new FakeApi(4);
    const { root } = await toPairScreen(api);
    const images = root.querySelectorAll('img');
    expect(images).toHaveLength(2);
    expect((images[0] as HTMLImageElement).src).toContain('/images/left-0');
    const labels = [...root.querySelectorAll('button.response')].map((b) => b.textContent);
    expect(labels).toEqual([
      'Left is much better',
      'Left is slightly better',
      'Both are similar',
      'Right is slightly better',
      'Right is much better',
    ]);
    expect(root.textContent).toContain('0 of 4 pairs answered');
  });

  it('never hints at tutorial or consistency phases', async () => {
    const api = new FakeApi(4);
    const { root } = await toPairScreen(api);
    const html = root.innerHTML.toLowerCase();
    expect(html).not.toContain('tutorial');
    expect(html).not.toContain('consistency');
    expect(html).not.toContain('phase');
  });

  it('submits the clicked level and advances', async () => {
    const api = new FakeApi(2);
    const { root, session } = await toPairScreen(api);
    (root.querySelector('button[data-level="SIMILAR"]') as HTMLButtonElement).click();
    await waitFor(
      () => session.screen.kind === 'pair' && session.screen.pair.position === 1,
      2000,
      'advance',
    );
    expect(api.submissions).toEqual([{ position: 0, level: 'SIMILAR' }]);
    expect(root.textContent).toContain('1 of 2 pairs answered');
  });

  it('ignores a second click while a submission is in flight', async () => {
    const api = new FakeApi(3);
    let release!: () => void;
    api.submitDelay = () => new Promise((resolve) => (release = resolve));
    const { root, session } = await toPairScreen(api);
    const button = root.querySelector('button[data-level="LEFT_MUCH"]') as HTMLButtonElement;
    button.click();
    button.click(); // double submit prevented client-side
    release();
    await waitFor(
      () => session.screen.kind === 'pair' && session.screen.pair.position === 1,
      2000,
      'single advance',
    );
    expect(api.submissions).toHaveLength(1);
  });

  it('maps keys 1-5 to the five responses', async () => {
    const api = new FakeApi(6);
    const { session } = await toPairScreen(api);
    bindKeyboard(document, session);
    for (const key of ['1', '2', '3', '4', '5']) {
      document.dispatchEvent(new KeyboardEvent('keydown', { key }));
      const want = Number.parseInt(key, 10);
      await waitFor(
        () =>
          api.submissions.length === want &&
          session.screen.kind === 'pair' &&
          session.screen.pair.position === want,
        2000,
        `submission ${key}`,
      );
    }
    expect(api.submissions.map((s) => s.level)).toEqual([
      'LEFT_MUCH',
      'LEFT_SLIGHT',
      'SIMILAR',
      'RIGHT_SLIGHT',
      'RIGHT_MUCH',
    ]);
  });
});

describe('failures and terminal screens', () => {
  it('shows a retry banner on network failure and recovers in place', async () => {
    const api = new FakeApi(3);
    const { root, session } = mount(api);
    await session.begin('carol');
    await waitFor(() => session.screen.kind === 'pair', 2000, 'pair');
    (root.querySelector('button[data-level="SIMILAR"]') as HTMLButtonElement).click();
    api.failNext = 1; // the refresh after this submit fails
    await waitFor(() => session.screen.kind === 'error', 2000, 'error screen');
    expect(root.textContent).toContain('Connection problem');

    (root.querySelector('button.retry') as HTMLButtonElement).click();
    await waitFor(() => session.screen.kind === 'pair', 2000, 'recovered');
    // position came back from the service, not from a client cache
    expect(session.screen.kind === 'pair' && session.screen.pair.position).toBe(1);
  });

  it('shows the completion screen and ignores stale answers', async () => {
    const api = new FakeApi(1);
    const { root, session } = mount(api);
    await session.begin('dave');
    await waitFor(() => session.screen.kind === 'pair', 2000, 'pair');
    (root.querySelector('button.response') as HTMLButtonElement).click();
    await waitFor(() => session.screen.kind === 'done', 2000, 'done');
    expect(root.textContent).toContain('Thank you');

    await session.answer('SIMILAR'); // stale input after the terminal screen
    expect(api.submissions).toHaveLength(1);
    expect(session.screen.kind).toBe('done');
  });

  it('phrases a rejection verdict neutrally', async () => {
    const api = new FakeApi(1, 'REJECTED_CONSISTENCY');
    const { root, session } = mount(api);
    await session.begin('erin');
    await waitFor(() => session.screen.kind === 'pair', 2000, 'pair');
    (root.querySelector('button.response') as HTMLButtonElement).click();
    await waitFor(() => session.screen.kind === 'done', 2000, 'done');
    const text = root.textContent?.toLowerCase() ?? '';
    expect(text).toContain('session ended');
    expect(text).not.toContain('consistency');
    expect(text).not.toContain('inconsistent');
    expect(text).not.toContain('reject');
  });
});
