/** Review queue store: keyboard-driven verdict flow over pending scans.
 *
 * Submissions are optimistic (the item leaves the queue immediately) and
 * roll back on failure; a "not pending" conflict instead refreshes the
 * whole queue, since someone else adjudicated the scan first.
 */

import { ApiError, PendingItem, PhantomApi, Verdict } from "./types";

type Listener = () => void;

export interface Draft {
  verdict: Verdict | null;
  rating: number | null;
  notes: string;
}

export function draftValid(draft: Draft): boolean {
  return (
    draft.verdict !== null &&
    draft.rating !== null &&
    Number.isInteger(draft.rating) &&
    draft.rating >= 1 &&
    draft.rating <= 5
  );
}

export class ReviewQueue {
  items: PendingItem[] = [];
  error: string | null = null;
  reviewer = "reviewer";
  submitting = false;

  private listeners: Listener[] = [];

  constructor(private api: PhantomApi) {}

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  get current(): PendingItem | undefined {
    return this.items[0];
  }

  async load(): Promise<void> {
    try {
      const res = await this.api.pendingReviews();
      this.items = res.pending;
      this.error = null;
    } catch (err) {
      this.error = err instanceof ApiError ? err.message : String(err);
    }
    this.notify();
  }

  /** Submit a verdict for the current item; resolves true when the queue
   * advanced. */
  async submit(draft: Draft): Promise<boolean> {
    const item = this.current;
    if (!item || this.submitting) return false;
    if (!draftValid(draft)) {
      this.error = "verdict and a 1-5 rating are required";
      this.notify();
      return false;
    }
    this.submitting = true;
    // optimistic: advance to the next item right away
    this.items = this.items.slice(1);
    this.error = null;
    this.notify();
    try {
      await this.api.submitReview(item.scan_id, {
        verdict: draft.verdict as Verdict,
        rating: draft.rating as number,
        reviewer: this.reviewer,
        notes: draft.notes,
      });
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // somebody else reviewed it; our optimistic removal stands, but
        // resync the rest of the queue (and keep the conflict visible)
        await this.load();
        this.error = err.message;
      } else {
        // roll the item back in place
        this.items = [item, ...this.items];
        this.error = err instanceof ApiError ? err.message : String(err);
      }
      this.notify();
      return false;
    } finally {
      this.submitting = false;
      this.notify();
    }
  }
}
