import { readFileSync } from 'node:fs';
import { afterEach, describe, expect, it, vi } from 'vitest';

import { BrokerApiError, BrokerClient, BrokerUnreachable } from '../src/api.js';

function fixture(name: string): unknown {
  return JSON.parse(readFileSync(new URL(`./fixtures/${name}`, import.meta.url), 'utf-8'));
}

function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe('BrokerClient', () => {
  it('lists identifiers through the OAI proxy with format=json', async () => {
    const seen: string[] = [];
    vi.stubGlobal('fetch', async (url: RequestInfo | URL) => {
      seen.push(String(url));
      return jsonResponse(fixture('list_identifiers.json'));
    });
    const client = new BrokerClient('http://broker.local', 'http://repo.local');
    const identifiers = await client.listIdentifiers();
    expect(identifiers).toEqual([
      { identifier: 'cornell/sampleDO', datestamp: expect.any(String) },
    ]);
    expect(seen[0]).toContain('/broker/proxy/oai?');
    expect(seen[0]).toContain('verb=ListIdentifiers');
    expect(seen[0]).toContain('format=json');
    expect(seen[0]).toContain('repo=http%3A%2F%2Frepo.local');
  });

  it('lists behaviors', async () => {
    vi.stubGlobal('fetch', async () => jsonResponse(fixture('list_behaviors.json')));
    const client = new BrokerClient('http://broker.local');
    const listing = await client.listBehaviors('cornell/sampleDO');
    expect(listing.objectID).toBe('cornell/sampleDO');
    expect(listing.bindings).toHaveLength(2);
  });

  it('performs a behavior via POST with a JSON body', async () => {
    let requestBody = '';
    vi.stubGlobal('fetch', async (_url: RequestInfo | URL, init?: RequestInit) => {
      requestBody = String(init?.body);
      expect(init?.method).toBe('POST');
      return jsonResponse(fixture('perform_gallery.json'));
    });
    const client = new BrokerClient('http://broker.local');
    const result = await client.performBehavior({
      objectID: 'cornell/sampleDO',
      mechanismURL: 'http://mechanisms.local/gallery',
      behaviorName: 'Gallery',
      structoidSID: 'S-7',
      params: {},
    });
    expect(result.mime).toBe('text/html');
    expect(JSON.parse(requestBody)).toMatchObject({ behaviorName: 'Gallery' });
  });

  it('raises BrokerApiError with the broker error code', async () => {
    vi.stubGlobal('fetch', async () =>
      jsonResponse(fixture('error_behavior_not_found.json'), 404),
    );
    const client = new BrokerClient('http://broker.local');
    const failure = client.performBehavior({
      objectID: 'cornell/sampleDO',
      mechanismURL: 'http://mechanisms.local/gallery',
      behaviorName: 'Rotate',
      structoidSID: 'S-7',
      params: {},
    });
    await expect(failure).rejects.toBeInstanceOf(BrokerApiError);
    await expect(failure).rejects.toMatchObject({ code: 'BehaviorNotFound', status: 404 });
  });

  it('raises BrokerUnreachable when the connection fails', async () => {
    vi.stubGlobal('fetch', async () => {
      throw new TypeError('fetch failed');
    });
    const client = new BrokerClient('http://broker.local');
    await expect(client.listIdentifiers()).rejects.toBeInstanceOf(BrokerUnreachable);
  });

  it('copes with non-JSON error bodies', async () => {
    vi.stubGlobal(
      'fetch',
      async () => new Response('<BrokerError/>', { status: 502, statusText: 'Bad Gateway' }),
    );
    const client = new BrokerClient('http://broker.local');
    await expect(client.listBehaviors('x')).rejects.toMatchObject({ code: 'UnknownError' });
  });
});
