// Behavior forms: one form per (binding, behavior), generated from the
// interface description the broker returns.

import type { BehaviorSpec, Binding, ListBehaviorsResponse, ParamSpec } from './types.js';

export interface FormSpec {
  /** unique per (binding, behavior) so DOM ids stay stable */
  key: string;
  objectID: string;
  structoidSID: string;
  schemaURI: string;
  mechanismID: string;
  behavior: BehaviorSpec;
}

export function behaviorForms(response: ListBehaviorsResponse): FormSpec[] {
  const forms: FormSpec[] = [];
  response.bindings.forEach((binding: Binding, bindingIndex: number) => {
    for (const behavior of binding.interface.behaviors) {
      forms.push({
        key: `form-${bindingIndex}-${behavior.name}`,
        objectID: response.objectID,
        structoidSID: binding.structoidSID,
        schemaURI: binding.schemaURI,
        mechanismID: binding.mechanismID,
        behavior,
      });
    }
  });
  return forms;
}

export type FieldErrors = Record<string, string>;

const INTEGER_RE = /^-?\d+$/;

function checkValue(param: ParamSpec, raw: string): string | null {
  if (raw === '') {
    return param.required ? `${param.name} is required` : null;
  }
  if (param.type === 'integer' && !INTEGER_RE.test(raw)) {
    return `${param.name} must be an integer`;
  }
  if (param.type === 'boolean' && raw !== 'true' && raw !== 'false') {
    return `${param.name} must be true or false`;
  }
  return null;
}

/** Empty map means the submission may proceed; required empties block it. */
export function validateParams(spec: FormSpec, values: Record<string, string>): FieldErrors {
  const errors: FieldErrors = {};
  for (const param of spec.behavior.params) {
    const problem = checkValue(param, values[param.name] ?? '');
    if (problem) errors[param.name] = problem;
  }
  return errors;
}

/** Typed values for the PerformBehavior JSON body; omits empty optionals. */
export function coerceParams(
  spec: FormSpec,
  values: Record<string, string>,
): Record<string, string | number | boolean> {
  const out: Record<string, string | number | boolean> = {};
  for (const param of spec.behavior.params) {
    const raw = values[param.name] ?? '';
    if (raw === '') continue;
    if (param.type === 'integer') out[param.name] = parseInt(raw, 10);
    else if (param.type === 'boolean') out[param.name] = raw === 'true';
    else out[param.name] = raw;
  }
  return out;
}
