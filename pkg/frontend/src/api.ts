import { ApiError, Manifest, PendingList, PhantomApi, PhantomList, ReviewBody } from "./types";

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let code = "http_error";
    let message = `${res.status} ${res.statusText}`;
    try {
      const body = await res.json();
      code = body.error ?? code;
      message = body.message ?? message;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(res.status, code, message);
  }
  return res.json() as Promise<T>;
}

export class ApiClient implements PhantomApi {
  constructor(private base: string = "") {}

  listPhantoms(query: string): Promise<PhantomList> {
    const suffix = query ? `?${query}` : "";
    return fetch(`${this.base}/api/phantoms${suffix}`).then((r) => asJson<PhantomList>(r));
  }

  getPhantom(id: string): Promise<Manifest> {
    return fetch(`${this.base}/api/phantoms/${id}`).then((r) => asJson<Manifest>(r));
  }

  pendingReviews(): Promise<PendingList> {
    return fetch(`${this.base}/api/reviews/pending`).then((r) => asJson<PendingList>(r));
  }

  async submitReview(scanId: string, body: ReviewBody): Promise<void> {
    const res = await fetch(`${this.base}/api/reviews/${scanId}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    await asJson(res);
  }

  meshUrl(phantomId: string, structureId: number): string {
    return `${this.base}/api/phantoms/${phantomId}/structures/${structureId}/mesh`;
  }

  previewUrl(phantomId: string, axis: string): string {
    return `${this.base}/api/phantoms/${phantomId}/preview/${axis}.png`;
  }
}
