// DOM wiring: browse objects through the broker, show behavior forms,
// invoke behaviors, and display each result as it completes.

import { BrokerApiError, BrokerClient, BrokerUnreachable } from './api.js';
import { behaviorForms, coerceParams, validateParams, type FormSpec } from './forms.js';
import { InvocationHistory } from './history.js';
import {
  connectionBannerHtml,
  errorChipHtml,
  escapeHtml,
  formsHtml,
  objectListHtml,
  resultHtml,
} from './render.js';
import type { ListBehaviorsResponse } from './types.js';

interface UiSession {
  client: BrokerClient;
  currentObject: string | null;
  lastListing: ListBehaviorsResponse | null;
  forms: Map<string, FormSpec>;
  history: InvocationHistory;
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function renderHistory(session: UiSession): void {
  const items = session.history
    .list()
    .map(
      (entry) =>
        `<li class="history-${entry.outcome}">${escapeHtml(entry.behaviorName)} on ` +
        `${escapeHtml(entry.objectID)} &rarr; ${escapeHtml(entry.detail)} ` +
        `<span class="datestamp">${entry.completedAt.toLocaleTimeString()}</span></li>`,
    )
    .join('');
  el('history').innerHTML = items
    ? `<ol>${items}</ol>`
    : '<p class="empty-state">Nothing invoked yet.</p>';
}

async function browse(session: UiSession): Promise<void> {
  const pane = el('objects');
  try {
    const identifiers = await session.client.listIdentifiers();
    pane.innerHTML = objectListHtml(identifiers);
    for (const button of pane.querySelectorAll<HTMLButtonElement>('.object-row')) {
      button.addEventListener('click', () => {
        void selectObject(session, button.dataset.objectId ?? '');
      });
    }
  } catch (err) {
    pane.innerHTML = connectionBannerHtml(err instanceof Error ? err.message : String(err));
    pane.querySelector('[data-action="retry"]')?.addEventListener('click', () => {
      void browse(session);
    });
  }
}

async function selectObject(session: UiSession, objectID: string): Promise<void> {
  session.currentObject = objectID;
  el('current-object').textContent = objectID;
  const pane = el('behaviors');
  try {
    const listing = await session.client.listBehaviors(objectID);
    session.lastListing = listing;
    const forms = behaviorForms(listing);
    session.forms = new Map(forms.map((form) => [form.key, form]));
    pane.innerHTML = formsHtml(forms);
    for (const formNode of pane.querySelectorAll<HTMLFormElement>('.behavior-form')) {
      formNode.addEventListener('submit', (event) => {
        event.preventDefault();
        void submitForm(session, formNode);
      });
    }
  } catch (err) {
    pane.innerHTML = renderError(err);
  }
}

function formValues(formNode: HTMLFormElement): Record<string, string> {
  const values: Record<string, string> = {};
  for (const field of formNode.querySelectorAll<HTMLInputElement | HTMLSelectElement>(
    '[data-param]',
  )) {
    values[field.dataset.param ?? ''] = field.value;
  }
  return values;
}

function showFieldErrors(formNode: HTMLFormElement, errors: Record<string, string>): void {
  for (const slot of formNode.querySelectorAll<HTMLElement>('.field-error')) {
    slot.textContent = errors[slot.dataset.errorFor ?? ''] ?? '';
  }
}

function renderError(err: unknown): string {
  if (err instanceof BrokerApiError) return errorChipHtml(err.code, err.message);
  if (err instanceof BrokerUnreachable) return connectionBannerHtml(err.message);
  return errorChipHtml('UnknownError', err instanceof Error ? err.message : String(err));
}

async function submitForm(session: UiSession, formNode: HTMLFormElement): Promise<void> {
  const spec = session.forms.get(formNode.dataset.formKey ?? '');
  if (!spec) return;
  const values = formValues(formNode);
  const errors = validateParams(spec, values);
  showFieldErrors(formNode, errors);
  if (Object.keys(errors).length > 0) return; // required inputs block submission

  const resultPane = el('result');
  resultPane.innerHTML = '<p class="busy">Performing…</p>';
  try {
    const result = await session.client.performBehavior({
      objectID: spec.objectID,
      mechanismURL: spec.mechanismID,
      behaviorName: spec.behavior.name,
      structoidSID: spec.structoidSID,
      params: coerceParams(spec, values),
    });
    resultPane.innerHTML = resultHtml(result);
    session.history.append({
      objectID: spec.objectID,
      behaviorName: spec.behavior.name,
      mechanismID: spec.mechanismID,
      outcome: 'ok',
      detail: result.mime,
      completedAt: new Date(),
    });
  } catch (err) {
    resultPane.innerHTML = renderError(err);
    session.history.append({
      objectID: spec.objectID,
      behaviorName: spec.behavior.name,
      mechanismID: spec.mechanismID,
      outcome: 'error',
      detail: err instanceof BrokerApiError ? err.code : 'ConnectionFailed',
      completedAt: new Date(),
    });
  }
  renderHistory(session);
}

export function startApp(): void {
  const params = new URLSearchParams(window.location.search);
  const brokerBase = params.get('broker') ?? window.location.origin;
  const repoBase = params.get('repo') ?? undefined;
  const session: UiSession = {
    client: new BrokerClient(brokerBase, repoBase),
    currentObject: null,
    lastListing: null,
    forms: new Map(),
    history: new InvocationHistory(),
  };
  el('broker-base').textContent = brokerBase;
  renderHistory(session);
  void browse(session);
}

if (typeof document !== 'undefined' && document.getElementById('objects')) {
  startApp();
}
