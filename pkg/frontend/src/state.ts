/** Deep-linkable view state: filters live in the query string (always the
 * exact string the API sees), phantom selection and visible structures
 * live in the hash, e.g. `?sex=female&age_min=60#/phantom/P0001-1?visible=85,110`. */

import { Filters, fromQuery, toQuery } from "./filters";

export interface ViewState {
  filters: Filters;
  selected?: string;
  visible: number[]; // structure ids currently shown in the 3-D viewer
}

export function encodeState(state: ViewState): { search: string; hash: string } {
  const search = toQuery(state.filters);
  let hash = "";
  if (state.selected) {
    hash = `#/phantom/${encodeURIComponent(state.selected)}`;
    if (state.visible.length) {
      hash += `?visible=${state.visible.slice().sort((a, b) => a - b).join(",")}`;
    }
  }
  return { search: search ? `?${search}` : "", hash };
}

export function decodeState(search: string, hash: string): ViewState {
  const filters = fromQuery(search.startsWith("?") ? search.slice(1) : search);
  const state: ViewState = { filters, visible: [] };
  const m = /^#\/phantom\/([^?]+)(?:\?(.*))?$/.exec(hash);
  if (m) {
    state.selected = decodeURIComponent(m[1]);
    const params = new URLSearchParams(m[2] ?? "");
    const visible = params.get("visible");
    if (visible) {
      state.visible = visible
        .split(",")
        .map((s) => Number(s))
        .filter((n) => Number.isInteger(n) && n > 0);
    }
  }
  return state;
}

export function applyToLocation(state: ViewState): void {
  const { search, hash } = encodeState(state);
  const url = `${location.pathname}${search}${hash}`;
  history.replaceState(null, "", url);
}

export function readFromLocation(): ViewState {
  return decodeState(location.search, location.hash);
}
