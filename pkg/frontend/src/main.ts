/** DOM wiring: filter panel + result grid, 3-D phantom viewer with
 * structure toggles, and the keyboard-driven review queue. */

import { ApiClient } from "./api";
import { CatalogBrowser } from "./catalog";
import { Filters } from "./filters";
import { ReviewQueue, Draft, draftValid } from "./review";
import { applyToLocation, readFromLocation } from "./state";
import { Manifest, Verdict } from "./types";
import { PhantomViewer } from "./viewer";

const api = new ApiClient("");
const browser = new CatalogBrowser(api);
const queue = new ReviewQueue(api);

let viewer: PhantomViewer | null = null;
let selected: string | null = null;
let visible = new Set<number>();
const draft: Draft = { verdict: null, rating: null, notes: "" };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

// ------------------------------------------------------------- filter panel
function readFilterForm(): Filters {
  const f: Filters = {};
  const sex = el<HTMLSelectElement>("f-sex").value;
  if (sex === "male" || sex === "female") f.sex = sex;
  const race = el<HTMLInputElement>("f-race").value.trim();
  if (race) f.race = race;
  for (const [key, id] of [
    ["ageMin", "f-age-min"],
    ["ageMax", "f-age-max"],
    ["bmiMin", "f-bmi-min"],
    ["bmiMax", "f-bmi-max"],
    ["structure", "f-structure"],
  ] as const) {
    const raw = el<HTMLInputElement>(id).value;
    if (raw !== "") (f[key] as number) = Number(raw);
  }
  return f;
}

function writeFilterForm(f: Filters): void {
  el<HTMLSelectElement>("f-sex").value = f.sex ?? "";
  el<HTMLInputElement>("f-race").value = f.race ?? "";
  el<HTMLInputElement>("f-age-min").value = f.ageMin?.toString() ?? "";
  el<HTMLInputElement>("f-age-max").value = f.ageMax?.toString() ?? "";
  el<HTMLInputElement>("f-bmi-min").value = f.bmiMin?.toString() ?? "";
  el<HTMLInputElement>("f-bmi-max").value = f.bmiMax?.toString() ?? "";
  el<HTMLInputElement>("f-structure").value = f.structure?.toString() ?? "";
}

function renderResults(): void {
  el("result-count").textContent = browser.validationError
    ? ""
    : `${browser.count} phantom${browser.count === 1 ? "" : "s"}`;
  const banner = el("error-banner");
  const problem = browser.validationError ?? browser.apiError;
  banner.textContent = problem ?? "";
  banner.style.display = problem ? "block" : "none";

  const grid = el("result-grid");
  grid.innerHTML = "";
  for (const m of browser.results) {
    const card = document.createElement("div");
    card.className = "card" + (m.phantom_id === selected ? " selected" : "");
    const p = m.patient;
    card.innerHTML = `
      <img src="${api.previewUrl(m.phantom_id, "x")}" alt="" loading="lazy">
      <div class="card-meta">
        <strong>${m.phantom_id}</strong>
        <span>${p.sex}, ${p.age_years.toFixed(0)} y, ${p.race}</span>
        <span>${p.bmi ? "BMI " + p.bmi.toFixed(1) : ""}</span>
      </div>`;
    card.addEventListener("click", () => selectPhantom(m.phantom_id));
    grid.appendChild(card);
  }
}

async function applyFilters(): Promise<void> {
  await browser.setFilters(readFilterForm());
  syncLocation();
}

// ------------------------------------------------------------------ viewer
async function selectPhantom(id: string | null, restoreVisible?: number[]): Promise<void> {
  selected = id;
  const panel = el("viewer-panel");
  if (!id) {
    panel.style.display = "none";
    viewer?.clear();
    syncLocation();
    renderResults();
    return;
  }
  panel.style.display = "flex";
  if (!viewer) {
    const canvas = el<HTMLCanvasElement>("viewer-canvas");
    viewer = new PhantomViewer(api, canvas);
    viewer.resize(canvas.clientWidth || 640, canvas.clientHeight || 480);
  }
  let manifest: Manifest;
  try {
    manifest = await api.getPhantom(id);
  } catch (err) {
    el("structure-list").textContent = String(err);
    return;
  }
  el("viewer-title").textContent = `${id} — ${manifest.patient.sex}, ${manifest.patient.age_years.toFixed(0)} y`;
  const loaded = await viewer.loadPhantom(manifest);
  visible = new Set(restoreVisible && restoreVisible.length ? restoreVisible : loaded);
  for (const sid of loaded) viewer.setVisible(sid, visible.has(sid));
  renderStructureList(manifest, loaded);
  syncLocation();
  renderResults();
}

function renderStructureList(manifest: Manifest, loaded: number[]): void {
  const list = el("structure-list");
  list.innerHTML = "";
  for (const s of manifest.structures.filter((s) => s.mesh_path)) {
    const row = document.createElement("label");
    row.className = "structure-row";
    const box = document.createElement("input");
    box.type = "checkbox";
    box.checked = visible.has(s.id);
    box.disabled = !loaded.includes(s.id);
    box.addEventListener("change", () => {
      box.checked ? visible.add(s.id) : visible.delete(s.id);
      viewer?.setVisible(s.id, box.checked);
      syncLocation();
    });
    row.appendChild(box);
    row.appendChild(
      document.createTextNode(
        ` ${s.name} (${s.id})` + (loaded.includes(s.id) ? "" : " — unavailable"),
      ),
    );
    list.appendChild(row);
  }
}

// ------------------------------------------------------------ review queue
function renderQueue(): void {
  el("queue-count").textContent = `${queue.items.length} pending`;
  const item = queue.current;
  const panel = el("review-current");
  const error = el("review-error");
  error.textContent = queue.error ?? "";
  error.style.display = queue.error ? "block" : "none";
  if (!item) {
    panel.innerHTML = "<em>review queue is empty</em>";
    return;
  }
  panel.innerHTML = `
    <strong>${item.scan_id}</strong>
    <div class="preview-strip">
      ${["x", "y", "z"].map((a) => `<img src="${item.previews[a]}" alt="${a}">`).join("")}
    </div>
    <pre>${JSON.stringify(item.qc, null, 1)}</pre>`;
  el<HTMLButtonElement>("review-submit").disabled = !draftValid(draft);
}

async function submitDraft(): Promise<void> {
  if (!draftValid(draft)) return;
  const ok = await queue.submit({ ...draft });
  if (ok) {
    draft.verdict = null;
    draft.rating = null;
    draft.notes = "";
    el<HTMLTextAreaElement>("review-notes").value = "";
    for (const b of document.querySelectorAll(".verdict-btn, .rating-btn")) {
      b.classList.remove("active");
    }
    await browser.refresh(); // accepted phantoms appear in the grid
  }
  renderQueue();
}

function wireReviewControls(): void {
  for (const verdict of ["approved", "flagged", "rejected"] as Verdict[]) {
    el(`verdict-${verdict}`).addEventListener("click", (ev) => {
      draft.verdict = verdict;
      for (const b of document.querySelectorAll(".verdict-btn")) b.classList.remove("active");
      (ev.currentTarget as HTMLElement).classList.add("active");
      renderQueue();
    });
  }
  for (let rating = 1; rating <= 5; rating++) {
    el(`rating-${rating}`).addEventListener("click", (ev) => {
      draft.rating = rating;
      for (const b of document.querySelectorAll(".rating-btn")) b.classList.remove("active");
      (ev.currentTarget as HTMLElement).classList.add("active");
      renderQueue();
    });
  }
  el<HTMLTextAreaElement>("review-notes").addEventListener("input", (ev) => {
    draft.notes = (ev.target as HTMLTextAreaElement).value;
  });
  el("review-submit").addEventListener("click", submitDraft);
  document.addEventListener("keydown", (ev) => {
    if ((ev.target as HTMLElement).tagName === "TEXTAREA") return;
    if (ev.key === "a") el("verdict-approved").click();
    if (ev.key === "f") el("verdict-flagged").click();
    if (ev.key === "r") el("verdict-rejected").click();
    if (ev.key >= "1" && ev.key <= "5") el(`rating-${ev.key}`).click();
    if (ev.key === "Enter") void submitDraft();
  });
}

// ------------------------------------------------------------- deep linking
function syncLocation(): void {
  applyToLocation({
    filters: browser.filters,
    selected: selected ?? undefined,
    visible: [...visible],
  });
}

async function boot(): Promise<void> {
  const initial = readFromLocation();
  writeFilterForm(initial.filters);
  browser.subscribe(renderResults);
  queue.subscribe(renderQueue);
  el("filter-apply").addEventListener("click", () => void applyFilters());
  el("filter-clear").addEventListener("click", () => {
    writeFilterForm({});
    void applyFilters();
  });
  wireReviewControls();
  await browser.setFilters(initial.filters);
  await queue.load();
  if (initial.selected) {
    await selectPhantom(initial.selected, initial.visible);
  }
}

void boot();
