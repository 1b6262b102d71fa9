// HTML builders. Mechanism output is third-party content: text/html results
// go into a fully sandboxed iframe (no scripts), images become data URLs.

import type { BehaviorResult, OaiIdentifier } from './types.js';
import type { FieldErrors, FormSpec } from './forms.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

export function objectListHtml(identifiers: OaiIdentifier[]): string {
  if (identifiers.length === 0) {
    return '<p class="empty-state">The repository holds no objects yet.</p>';
  }
  const rows = identifiers
    .map(
      (entry) =>
        `<li><button class="object-row" data-object-id="${escapeHtml(entry.identifier)}">` +
        `${escapeHtml(entry.identifier)}</button>` +
        `<span class="datestamp">${escapeHtml(entry.datestamp)}</span></li>`,
    )
    .join('');
  return `<ul class="object-list">${rows}</ul>`;
}

export function connectionBannerHtml(detail: string): string {
  return (
    `<div class="banner banner-error">Cannot reach the broker. ` +
    `<span class="detail">${escapeHtml(detail)}</span> ` +
    `<button class="retry" data-action="retry">Retry</button></div>`
  );
}

function paramInputHtml(form: FormSpec, name: string, type: string, required: boolean): string {
  const id = `${form.key}-${name}`;
  const marker = required ? ' <span class="required">*</span>' : '';
  let input: string;
  if (type === 'boolean') {
    const options = required ? '' : '<option value=""></option>';
    input =
      `<select id="${id}" name="${escapeHtml(name)}" data-param="${escapeHtml(name)}">` +
      `${options}<option value="true">true</option><option value="false">false</option></select>`;
  } else {
    const inputType = type === 'integer' ? 'number' : 'text';
    input =
      `<input id="${id}" type="${inputType}" name="${escapeHtml(name)}" ` +
      `data-param="${escapeHtml(name)}"${required ? ' data-required="true"' : ''}>`;
  }
  return (
    `<label class="param" for="${id}">${escapeHtml(name)}` +
    `<span class="param-type">(${escapeHtml(type)})</span>${marker}</label>${input}` +
    `<span class="field-error" data-error-for="${escapeHtml(name)}"></span>`
  );
}

export function formHtml(form: FormSpec): string {
  const params = form.behavior.params
    .map((p) => paramInputHtml(form, p.name, p.type, p.required))
    .join('');
  return (
    `<form class="behavior-form" id="${form.key}" data-form-key="${form.key}">` +
    `<h3>${escapeHtml(form.behavior.name)}</h3>` +
    `<p class="provenance">structoid ${escapeHtml(form.structoidSID)} · ` +
    `mechanism ${escapeHtml(form.mechanismID)} · ` +
    `returns ${escapeHtml(form.behavior.outputMime)}</p>` +
    params +
    `<button type="submit">Perform</button>` +
    `</form>`
  );
}

export function formsHtml(forms: FormSpec[]): string {
  if (forms.length === 0) {
    return '<p class="empty-state">No behaviors available for this object.</p>';
  }
  return `<div class="forms">${forms.map(formHtml).join('')}</div>`;
}

function base64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  return bytes;
}

export function decodeResultText(result: BehaviorResult): string {
  return new TextDecoder().decode(base64ToBytes(result.bodyBase64));
}

export function resultHtml(result: BehaviorResult): string {
  const mime = result.mime.split(';')[0]!.trim();
  if (mime === 'text/html') {
    // sandbox with no allowances: scripts in mechanism output stay inert
    return (
      `<iframe class="result result-html" sandbox="" ` +
      `srcdoc="${escapeHtml(decodeResultText(result))}"></iframe>`
    );
  }
  if (mime.startsWith('image/')) {
    return (
      `<img class="result result-image" alt="behavior result" ` +
      `src="data:${escapeHtml(mime)};base64,${result.bodyBase64}">`
    );
  }
  if (mime.startsWith('text/')) {
    return `<pre class="result result-text">${escapeHtml(decodeResultText(result))}</pre>`;
  }
  return (
    `<a class="result result-download" download="result" ` +
    `href="data:${escapeHtml(mime)};base64,${result.bodyBase64}">Download result (${escapeHtml(mime)})</a>`
  );
}

const ERROR_HINTS: Record<string, string> = {
  Timeout: 'The mechanism exceeded the sandbox wall-clock limit and was stopped.',
  BehaviorNotFound: 'The mechanism does not offer this behavior.',
  MechanismFault: 'The mechanism misbehaved or returned a malformed reply.',
  SchemaMismatch: 'The structoid is not of the schema this mechanism requires.',
  ObjectNotFound: 'The repository has no such object.',
};

/** One visible state per broker error code, distinguishable by class. */
export function errorChipHtml(code: string, message: string): string {
  const hint = ERROR_HINTS[code];
  return (
    `<span class="error-chip error-chip-${escapeHtml(code)}" data-error-code="${escapeHtml(code)}">` +
    `<strong>${escapeHtml(code)}</strong> ${escapeHtml(message)}` +
    (hint ? ` <em class="hint">${escapeHtml(hint)}</em>` : '') +
    `</span>`
  );
}
