/** Demographic filters, kept in lockstep with the API query string. */

export interface Filters {
  sex?: "male" | "female";
  ageMin?: number;
  ageMax?: number;
  race?: string;
  bmiMin?: number;
  bmiMax?: number;
  structure?: number;
}

const QUERY_KEYS: [keyof Filters, string][] = [
  ["sex", "sex"],
  ["ageMin", "age_min"],
  ["ageMax", "age_max"],
  ["race", "race"],
  ["bmiMin", "bmi_min"],
  ["bmiMax", "bmi_max"],
  ["structure", "structure"],
];

/** Client-side validation; a non-null result means "do not send". */
export function validateFilters(f: Filters): string | null {
  if (f.ageMin !== undefined && f.ageMax !== undefined && f.ageMin > f.ageMax) {
    return "age range: min exceeds max";
  }
  if (f.bmiMin !== undefined && f.bmiMax !== undefined && f.bmiMin > f.bmiMax) {
    return "BMI range: min exceeds max";
  }
  for (const key of ["ageMin", "ageMax", "bmiMin", "bmiMax"] as const) {
    const v = f[key];
    if (v !== undefined && (!Number.isFinite(v) || v < 0)) {
      return `${key} must be a non-negative number`;
    }
  }
  return null;
}

export function toQuery(f: Filters): string {
  const params = new URLSearchParams();
  for (const [key, name] of QUERY_KEYS) {
    const v = f[key];
    if (v !== undefined && v !== ("" as unknown)) params.set(name, String(v));
  }
  return params.toString();
}

export function fromQuery(query: string): Filters {
  const params = new URLSearchParams(query);
  const f: Filters = {};
  const sex = params.get("sex");
  if (sex === "male" || sex === "female") f.sex = sex;
  const race = params.get("race");
  if (race) f.race = race;
  const nums: [keyof Filters, string][] = [
    ["ageMin", "age_min"],
    ["ageMax", "age_max"],
    ["bmiMin", "bmi_min"],
    ["bmiMax", "bmi_max"],
    ["structure", "structure"],
  ];
  for (const [key, name] of nums) {
    const raw = params.get(name);
    if (raw !== null && raw !== "" && !Number.isNaN(Number(raw))) {
      (f[key] as number) = Number(raw);
    }
  }
  return f;
}
