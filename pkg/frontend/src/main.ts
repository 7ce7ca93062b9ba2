import { ServiceClient } from './api.js';
import { AnnotationSession, KeyValueStore } from './session.js';
import { AnnotationView, bindKeyboard } from './view.js';

function browserStorage(): KeyValueStore {
  return {
    get: (key) => window.localStorage.getItem(key),
    set: (key, value) => window.localStorage.setItem(key, value),
    remove: (key) => window.localStorage.removeItem(key),
  };
}

export function boot(root: HTMLElement, baseUrl: string): AnnotationSession {
  const client = new ServiceClient(baseUrl);
  const session = new AnnotationSession(client, browserStorage());
  new AnnotationView(root, session, client);
  bindKeyboard(root.ownerDocument, session);
  void session.resume();
  return session;
}

const mount = document.getElementById('app');
if (mount) {
  const base = mount.dataset.serviceUrl ?? window.location.origin;
  boot(mount, base);
}
