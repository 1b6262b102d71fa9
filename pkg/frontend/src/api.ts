// Client for the broker's documented HTTP API (format=json renderings only).

import type {
  BehaviorResult,
  ErrorEnvelope,
  IdentifierList,
  ListBehaviorsResponse,
  OaiIdentifier,
  PerformRequestBody,
} from './types.js';

/** An error reply from the broker; `code` distinguishes the visible state. */
export class BrokerApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = 'BrokerApiError';
  }
}

/** The broker could not be reached at all (connection banner state). */
export class BrokerUnreachable extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'BrokerUnreachable';
  }
}

async function asBrokerError(response: Response): Promise<BrokerApiError> {
  let code = 'UnknownError';
  let message = `${response.status} ${response.statusText}`;
  try {
    const payload = (await response.json()) as ErrorEnvelope;
    if (payload.error) {
      code = payload.error.code;
      message = payload.error.message;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new BrokerApiError(code, message, response.status);
}

export class BrokerClient {
  constructor(
    public readonly brokerBase: string,
    public readonly repoBase?: string,
  ) {}

  private url(path: string, params: Record<string, string>): string {
    const query = new URLSearchParams({ ...params, format: 'json' });
    if (this.repoBase) query.set('repo', this.repoBase);
    return `${this.brokerBase}${path}?${query.toString()}`;
  }

  private async get(path: string, params: Record<string, string>): Promise<unknown> {
    let response: Response;
    try {
      response = await fetch(this.url(path, params));
    } catch (err) {
      throw new BrokerUnreachable(String(err));
    }
    if (!response.ok) throw await asBrokerError(response);
    return response.json();
  }

  async listIdentifiers(): Promise<OaiIdentifier[]> {
    const payload = (await this.get('/broker/proxy/oai', {
      verb: 'ListIdentifiers',
      metadataPrefix: 'structoid',
    })) as IdentifierList;
    return payload.identifiers ?? [];
  }

  async listBehaviors(objectID: string): Promise<ListBehaviorsResponse> {
    return (await this.get('/broker/ListBehaviors', { objectID })) as ListBehaviorsResponse;
  }

  async performBehavior(body: PerformRequestBody): Promise<BehaviorResult> {
    let response: Response;
    try {
      response = await fetch(this.url('/broker/PerformBehavior', {}), {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new BrokerUnreachable(String(err));
    }
    if (!response.ok) throw await asBrokerError(response);
    return (await response.json()) as BehaviorResult;
  }
}
