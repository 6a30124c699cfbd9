// Wiring: fetch, filters, and the 5 s live poll. All filtering is
// server-side (the selects just re-query the records API), and a poll
// never overlaps another: when one is in flight the tick is skipped.

import { fetchLive, fetchRecords, fetchRegistry, RecordFilters } from "./api.js";
import { renderLiveList, renderMap, renderTable } from "./render.js";
import { WORK_TYPE_COLORS } from "./palette.js";
import type { LivePosition, RecordsGeoJson, RegistryDoc } from "./types.js";
import { buildMapModel, buildMarkers, buildRecordViews } from "./viewmodel.js";

const POLL_INTERVAL_MS = 5000;

interface AppState {
  registry: RegistryDoc;
  records: RecordsGeoJson;
  live: LivePosition[];
  liveFetchedAtMs: number;
  pollInFlight: boolean;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function setBanner(message: string | null) {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

function render(state: AppState) {
  // staleness keeps growing locally between successful polls
  const extra = state.liveFetchedAtMs
    ? (Date.now() - state.liveFetchedAtMs) / 1000
    : 0;
  const views = buildRecordViews(state.records, state.registry);
  const markers = buildMarkers(state.live, extra);
  el("table-wrap").innerHTML = renderTable(views);
  el("map-wrap").innerHTML = renderMap(buildMapModel(state.registry, views, markers));
  el("live-list").innerHTML = renderLiveList(markers);
  el("record-count").textContent = `${views.length} record${views.length === 1 ? "" : "s"}`;
}

function fillSelect(select: HTMLSelectElement, values: [string, string][]) {
  select.innerHTML =
    '<option value="">all</option>' +
    values.map(([v, label]) => `<option value="${v}">${label}</option>`).join("");
}

function currentFilters(): RecordFilters {
  return {
    machine: el<HTMLSelectElement>("filter-machine").value || undefined,
    field: el<HTMLSelectElement>("filter-field").value || undefined,
    work_type: el<HTMLSelectElement>("filter-work-type").value || undefined,
  };
}

export async function start(base = ""): Promise<void> {
  const registry = await fetchRegistry(base);
  const state: AppState = {
    registry,
    records: { type: "FeatureCollection", features: [] },
    live: [],
    liveFetchedAtMs: 0,
    pollInFlight: false,
  };

  fillSelect(
    el<HTMLSelectElement>("filter-machine"),
    registry.machines.map((m) => [m.id, `${m.name} (${m.class.toUpperCase()})`]),
  );
  fillSelect(
    el<HTMLSelectElement>("filter-field"),
    registry.fields.map((f) => [f.id, f.name]),
  );
  fillSelect(
    el<HTMLSelectElement>("filter-work-type"),
    Object.keys(WORK_TYPE_COLORS).map((wt) => [wt, wt]),
  );

  async function loadRecords() {
    try {
      state.records = await fetchRecords(base, currentFilters());
      setBanner(null);
    } catch (err) {
      setBanner(`Records unavailable: ${err}. Showing the last good data.`);
    }
    render(state);
  }

  async function poll() {
    if (state.pollInFlight) return; // skip, never queue
    state.pollInFlight = true;
    try {
      const live = await fetchLive(base);
      state.live = live.positions;
      state.liveFetchedAtMs = Date.now();
      setBanner(null);
    } catch (err) {
      setBanner(`Live feed unavailable: ${err}. Markers may be stale.`);
    } finally {
      state.pollInFlight = false;
    }
    render(state);
  }

  for (const id of ["filter-machine", "filter-field", "filter-work-type"]) {
    el<HTMLSelectElement>(id).addEventListener("change", loadRecords);
  }
  el<HTMLButtonElement>("refresh").addEventListener("click", loadRecords);

  await loadRecords();
  await poll();
  setInterval(poll, POLL_INTERVAL_MS);
  setInterval(() => render(state), POLL_INTERVAL_MS); // staleness badge ticker
}
