// Per-session invocation history, append-only, ordered by completion.

export interface HistoryEntry {
  objectID: string;
  behaviorName: string;
  mechanismID: string;
  outcome: 'ok' | 'error';
  detail: string; // result MIME or error code
  completedAt: Date;
}

export class InvocationHistory {
  private readonly entries: HistoryEntry[] = [];

  append(entry: HistoryEntry): void {
    this.entries.push(entry);
  }

  list(): readonly HistoryEntry[] {
    return this.entries;
  }

  get length(): number {
    return this.entries.length;
  }
}
