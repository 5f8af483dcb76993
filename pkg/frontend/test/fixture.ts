/** In-memory stand-in for the catalog API, mirroring the server's
 * semantics: conjunctive filters over accepted phantoms (BMI-missing
 * excluded when a BMI range is given), a pending queue, verdict state
 * transitions, 404/409/400 errors in the server's JSON shape. */

import {
  ApiError,
  Manifest,
  PendingList,
  PhantomApi,
  PhantomList,
  ReviewBody,
} from "../src/types";

export interface FixtureScan {
  id: string;
  sex: "male" | "female" | "unknown";
  age: number;
  race: string;
  height?: number;
  weight?: number;
  structures?: Record<number, number>; // id -> volume
  status: "pending" | "accepted" | "rejected_review" | "rejected_statistical";
}

function manifestOf(s: FixtureScan): Manifest {
  const bmi = s.height && s.weight ? s.weight / (s.height * s.height) : null;
  return {
    phantom_id: s.id,
    patient: {
      patient_id: `pat-${s.id}`,
      sex: s.sex,
      age_years: s.age,
      height_m: s.height ?? null,
      weight_kg: s.weight ?? null,
      race: s.race,
      bmi,
    },
    structures: Object.entries(s.structures ?? {}).map(([sid, vol]) => ({
      id: Number(sid),
      name: `structure_${sid}`,
      volume_ml: vol,
    })),
    qc: { final_status: s.status },
    review_rating: null,
    pipeline_version: "fixture",
    created_at: "2026-01-01T00:00:00Z",
  };
}

export class FakeApi implements PhantomApi {
  scans = new Map<string, FixtureScan>();
  listCalls = 0;
  submitCalls = 0;
  failNextList: string | null = null;

  constructor(scans: FixtureScan[]) {
    for (const s of scans) this.scans.set(s.id, s);
  }

  accepted(): FixtureScan[] {
    return [...this.scans.values()]
      .filter((s) => s.status === "accepted")
      .sort((a, b) => (a.id < b.id ? -1 : 1));
  }

  async listPhantoms(query: string): Promise<PhantomList> {
    this.listCalls += 1;
    if (this.failNextList) {
      const msg = this.failNextList;
      this.failNextList = null;
      throw new ApiError(500, "server_error", msg);
    }
    const params = new URLSearchParams(query);
    const sex = params.get("sex");
    const race = params.get("race");
    const ageMin = params.get("age_min");
    const ageMax = params.get("age_max");
    const bmiMin = params.get("bmi_min");
    const bmiMax = params.get("bmi_max");
    const structure = params.get("structure");
    if (ageMin !== null && ageMax !== null && Number(ageMin) > Number(ageMax)) {
      throw new ApiError(400, "bad_request", "malformed age range: min > max");
    }
    const out: Manifest[] = [];
    for (const s of this.accepted()) {
      const m = manifestOf(s);
      if (sex && m.patient.sex !== sex) continue;
      if (race && m.patient.race !== race) continue;
      if (ageMin !== null && m.patient.age_years < Number(ageMin)) continue;
      if (ageMax !== null && m.patient.age_years > Number(ageMax)) continue;
      if (bmiMin !== null || bmiMax !== null) {
        if (m.patient.bmi === null) continue;
        if (bmiMin !== null && m.patient.bmi < Number(bmiMin)) continue;
        if (bmiMax !== null && m.patient.bmi > Number(bmiMax)) continue;
      }
      if (structure !== null) {
        const vol = (s.structures ?? {})[Number(structure)] ?? 0;
        if (vol <= 0) continue;
      }
      out.push(m);
    }
    return { count: out.length, phantoms: out };
  }

  async getPhantom(id: string): Promise<Manifest> {
    const s = this.scans.get(id);
    if (!s) throw new ApiError(404, "not_found", `unknown phantom '${id}'`);
    return manifestOf(s);
  }

  async pendingReviews(): Promise<PendingList> {
    const pending = [...this.scans.values()]
      .filter((s) => s.status === "pending")
      .sort((a, b) => (a.id < b.id ? -1 : 1))
      .map((s) => ({
        scan_id: s.id,
        patient_id: `pat-${s.id}`,
        previews: {
          x: `/api/phantoms/${s.id}/preview/x.png`,
          y: `/api/phantoms/${s.id}/preview/y.png`,
          z: `/api/phantoms/${s.id}/preview/z.png`,
        },
        qc: { final_status: s.status },
      }));
    return { count: pending.length, pending };
  }

  async submitReview(scanId: string, body: ReviewBody): Promise<void> {
    this.submitCalls += 1;
    const s = this.scans.get(scanId);
    if (!s) throw new ApiError(404, "not_found", `unknown scan '${scanId}'`);
    if (!Number.isInteger(body.rating) || body.rating < 1 || body.rating > 5) {
      throw new ApiError(400, "validation", "rating must be 1..5");
    }
    if (s.status !== "pending") {
      throw new ApiError(409, "conflict", `scan ${scanId} is not pending review`);
    }
    s.status = body.verdict === "rejected" ? "rejected_review" : "accepted";
  }

  meshUrl(phantomId: string, structureId: number): string {
    return `/api/phantoms/${phantomId}/structures/${structureId}/mesh`;
  }

  previewUrl(phantomId: string, axis: string): string {
    return `/api/phantoms/${phantomId}/preview/${axis}.png`;
  }
}

export function defaultFixture(): FakeApi {
  return new FakeApi([
    { id: "P01-1", sex: "female", age: 64, race: "White", height: 1.62, weight: 70, status: "accepted", structures: { 85: 1500, 86: 28 } },
    { id: "P02-1", sex: "female", age: 58, race: "Black", height: 1.7, weight: 82, status: "accepted", structures: { 85: 1400, 86: 0 } },
    { id: "P03-1", sex: "male", age: 66, race: "White", height: 1.8, weight: 95, status: "accepted", structures: { 85: 1700, 86: 30 } },
    { id: "P04-1", sex: "male", age: 71, race: "Asian", status: "accepted", structures: { 85: 1600 } },
    { id: "P05-1", sex: "female", age: 62, race: "White", height: 1.66, weight: 64, status: "pending", structures: { 85: 1450, 86: 25 } },
    { id: "P06-1", sex: "male", age: 49, race: "Other", height: 1.74, weight: 80, status: "pending", structures: { 85: 1520 } },
    { id: "P07-1", sex: "female", age: 83, race: "White", height: 1.55, weight: 58, status: "pending", structures: { 85: 1380, 86: 22 } },
    { id: "P08-1", sex: "male", age: 57, race: "Black", height: 1.82, weight: 102, status: "rejected_statistical", structures: { 85: 4200 } },
  ]);
}
