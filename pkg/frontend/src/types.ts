/** JSON shapes served by the catalog API. */

export interface PatientInfo {
  patient_id: string;
  sex: "male" | "female" | "unknown";
  age_years: number;
  height_m: number | null;
  weight_kg: number | null;
  race: string;
  bmi: number | null;
}

export interface StructureEntry {
  id: number;
  name: string;
  volume_ml: number;
  mesh_path?: string;
}

export interface Manifest {
  phantom_id: string;
  patient: PatientInfo;
  structures: StructureEntry[];
  qc: Record<string, unknown> | null;
  review_rating: number | null;
  pipeline_version: string;
  created_at: string;
}

export interface PhantomList {
  count: number;
  phantoms: Manifest[];
}

export interface PendingItem {
  scan_id: string;
  patient_id: string;
  previews: Record<string, string>;
  qc: Record<string, unknown>;
}

export interface PendingList {
  count: number;
  pending: PendingItem[];
}

export type Verdict = "approved" | "flagged" | "rejected";

export interface ReviewBody {
  verdict: Verdict;
  rating: number;
  reviewer: string;
  notes: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

/** The surface the stores need; implemented by the fetch client and the
 * test fixture alike. */
export interface PhantomApi {
  listPhantoms(query: string): Promise<PhantomList>;
  getPhantom(id: string): Promise<Manifest>;
  pendingReviews(): Promise<PendingList>;
  submitReview(scanId: string, body: ReviewBody): Promise<void>;
  meshUrl(phantomId: string, structureId: number): string;
  previewUrl(phantomId: string, axis: string): string;
}
