/** Catalog browser store: filters in, API-mirrored result set out. */

import { Filters, toQuery, validateFilters } from "./filters";
import { ApiError, Manifest, PhantomApi } from "./types";

type Listener = () => void;

export class CatalogBrowser {
  filters: Filters = {};
  results: Manifest[] = [];
  count = 0;
  /** client-side validation problem; nothing was sent */
  validationError: string | null = null;
  /** server/network failure; previous results are kept visible */
  apiError: string | null = null;
  loading = false;

  private listeners: Listener[] = [];
  private requestSeq = 0;

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

  /** The exact query string the API sees (mirrored into the URL). */
  get query(): string {
    return toQuery(this.filters);
  }

  async setFilters(filters: Filters): Promise<void> {
    this.filters = { ...filters };
    const problem = validateFilters(this.filters);
    if (problem) {
      this.validationError = problem;
      this.notify();
      return; // invalid ranges never reach the API
    }
    this.validationError = null;
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const seq = ++this.requestSeq;
    this.loading = true;
    this.notify();
    try {
      const res = await this.api.listPhantoms(this.query);
      if (seq !== this.requestSeq) return; // a newer request superseded us
      this.results = res.phantoms;
      this.count = res.count;
      this.apiError = null;
    } catch (err) {
      if (seq !== this.requestSeq) return;
      this.apiError = err instanceof ApiError ? err.message : String(err);
    } finally {
      if (seq === this.requestSeq) {
        this.loading = false;
        this.notify();
      }
    }
  }

  clearFilters(): Promise<void> {
    return this.setFilters({});
  }
}
