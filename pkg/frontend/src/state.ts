/** Workspace state: the draft under edit, its score history, and the
 * one-in-flight-request rule (newer edits cancel stale scoring calls). */

import type { ContentDraft, ScoreResponse } from "./api.js";

export interface HistoryRow {
  revision: number;
  draft: ContentDraft;
  score: number;
  delta: number | null; // vs the previous row
  requestId: string;
}

export function scoreDelta(previous: number | null, next: number): number | null {
  return previous === null ? null : next - previous;
}

export function cloneDraft(draft: ContentDraft): ContentDraft {
  return {
    text: draft.text,
    image_png_base64: draft.image_png_base64,
    domain: draft.domain,
    features: draft.features ? [...draft.features] : null,
  };
}

export class Workspace {
  draft: ContentDraft = { text: "", image_png_base64: null, domain: null, features: null };
  stale = false; // the displayed score no longer matches the draft
  private rows: HistoryRow[] = [];
  private inflight: AbortController | null = null;

  get history(): readonly HistoryRow[] {
    return this.rows;
  }

  lastScore(): number | null {
    return this.rows.length ? this.rows[this.rows.length - 1].score : null;
  }

  /** Cancels any in-flight scoring request and arms a new one. */
  beginRequest(): AbortSignal {
    if (this.inflight) this.inflight.abort();
    this.inflight = new AbortController();
    return this.inflight.signal;
  }

  recordScore(response: ScoreResponse): HistoryRow {
    const delta = scoreDelta(this.lastScore(), response.score);
    const row: HistoryRow = {
      revision: this.rows.length + 1,
      draft: cloneDraft(this.draft),
      score: response.score,
      delta,
      requestId: response.request_id,
    };
    this.rows.push(row);
    this.stale = false;
    this.inflight = null;
    return row;
  }

  markStale(): void {
    this.stale = true;
  }
}

/** Insert a phrase into draft text at the cursor, normalizing spacing.
 * Returns the new text and the cursor position after the inserted phrase. */
export function insertPhrase(text: string, cursor: number, phrase: string): { text: string; cursor: number } {
  const at = Math.max(0, Math.min(cursor, text.length));
  const before = text.slice(0, at);
  const after = text.slice(at);
  const lead = before && !before.endsWith(" ") ? " " : "";
  const trail = after && !after.startsWith(" ") ? " " : "";
  const inserted = `${before}${lead}${phrase}${trail}${after}`;
  return { text: inserted, cursor: (before + lead + phrase).length };
}
