// Markup builders: view-models in, HTML/SVG strings out. Pure, so the
// table and map are snapshot-testable without a DOM.

import type { MapModel, MarkerView, RecordView } from "./viewmodel.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export const TABLE_COLUMNS = [
  "machine", "work type", "field", "start", "duration", "distance", "flags",
];

export function recordRowCells(view: RecordView): string[] {
  return [
    view.machineLabel,
    view.workType,
    view.fieldLabel,
    view.start,
    view.durationHuman,
    `${view.distanceRaw} m`,
    view.flags.join(" "),
  ];
}

export function renderTable(views: RecordView[]): string {
  if (views.length === 0) {
    return '<p class="empty-state">No work records match the current filters.</p>';
  }
  const head = TABLE_COLUMNS.map((c) => `<th>${esc(c)}</th>`).join("");
  const rows = views
    .map((view) => {
      const cells = recordRowCells(view)
        .map((cell, i) =>
          i === 1
            ? `<td><span class="swatch" style="background:${view.color}"></span>${esc(cell)}</td>`
            : `<td>${esc(cell)}</td>`,
        )
        .join("");
      return `<tr data-record="${esc(view.id)}" title="duration_s=${esc(view.durationRaw)}">${cells}</tr>`;
    })
    .join("");
  return `<table><thead><tr>${head}</tr></thead><tbody>${rows}</tbody></table>`;
}

export function renderMap(model: MapModel): string {
  const fields = model.fields
    .map(
      (f) =>
        `<polygon class="field" points="${f.points}"><title>${esc(f.name)}</title></polygon>`,
    )
    .join("");
  const tracks = model.tracks
    .map(
      (t) =>
        `<polyline class="track" data-record="${esc(t.id)}" points="${t.points}" ` +
        `stroke="${t.color}"${t.dashed ? ' stroke-dasharray="6 3"' : ""}></polyline>`,
    )
    .join("");
  const markers = model.markers
    .map(
      (m) =>
        `<g class="marker${m.dimmed ? " dimmed" : ""}" data-machine="${esc(m.machine)}">` +
        `<circle cx="${m.x}" cy="${m.y}" r="7"></circle>` +
        `<text x="${m.x + 10}" y="${m.y + 4}">${esc(m.label)}</text></g>`,
    )
    .join("");
  return (
    `<svg viewBox="${model.viewBox}" xmlns="http://www.w3.org/2000/svg">` +
    `<g class="fields">${fields}</g><g class="tracks">${tracks}</g>` +
    `<g class="markers">${markers}</g></svg>`
  );
}

export function renderLiveList(markers: MarkerView[]): string {
  if (markers.length === 0) {
    return '<p class="empty-state">No machines have reported yet.</p>';
  }
  return markers
    .map(
      (m) =>
        `<div class="live-row${m.dimmed ? " dimmed" : ""}">` +
        `<span class="dot"></span>${esc(m.label)}` +
        `<span class="staleness">${Math.round(m.stalenessS)}s ago</span></div>`,
    )
    .join("");
}
