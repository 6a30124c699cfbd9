// Pure view-model builders: API responses in, render-ready structures out.
// No record computation happens here; every number shown comes straight
// from an API field (durations are only re-formatted for humans).

import { colorFor } from "./palette.js";
import type {
  LivePosition,
  RecordFeature,
  RecordsGeoJson,
  RegistryDoc,
} from "./types.js";

export const STALE_AFTER_S = 300;

export interface RecordView {
  id: string;
  machineId: string;
  machineLabel: string; // name plus SPV/MPV class: the "machine type" column
  fieldId: string;
  fieldLabel: string;
  workType: string;
  implementLabel: string;
  color: string;
  start: string;
  end: string;
  durationHuman: string;
  durationRaw: string; // verbatim API value, for tooltips
  distanceRaw: string; // verbatim API value
  fixCountRaw: string;
  flags: string[];
  path: [number, number][];
}

export interface MarkerView {
  machine: string;
  label: string;
  lat: number;
  lon: number;
  stalenessS: number;
  dimmed: boolean;
}

export function formatDuration(seconds: number): string {
  const s = Math.round(seconds);
  if (s < 60) return `${s}s`;
  const minutes = Math.floor(s / 60);
  if (minutes < 60) return `${minutes}m ${String(s % 60).padStart(2, "0")}s`;
  return `${Math.floor(minutes / 60)}h ${String(minutes % 60).padStart(2, "0")}m`;
}

export function buildRecordViews(
  records: RecordsGeoJson,
  registry: RegistryDoc,
): RecordView[] {
  const machines = new Map(registry.machines.map((m) => [m.id, m]));
  const fields = new Map(registry.fields.map((f) => [f.id, f]));
  const implements_ = new Map(registry.implements.map((i) => [i.id, i]));
  return records.features.map((feature: RecordFeature) => {
    const p = feature.properties;
    const machine = machines.get(p.machine);
    const field = fields.get(p.field);
    const implement = p.implement ? implements_.get(p.implement) : undefined;
    return {
      id: p.id,
      machineId: p.machine,
      machineLabel: machine
        ? `${machine.name} (${machine.class.toUpperCase()})`
        : p.machine,
      fieldId: p.field,
      fieldLabel: field ? field.name : p.field,
      workType: p.work_type,
      implementLabel: implement ? implement.name : (p.implement ?? ""),
      color: colorFor(p.work_type),
      start: p.start,
      end: p.end,
      durationHuman: formatDuration(p.duration_s),
      durationRaw: String(p.duration_s),
      distanceRaw: String(p.distance_m),
      fixCountRaw: String(p.fix_count),
      flags: p.flags,
      path: feature.geometry.coordinates,
    };
  });
}

export function buildMarkers(
  positions: LivePosition[],
  extraStalenessS = 0,
): MarkerView[] {
  return positions.map((pos) => {
    const staleness = pos.staleness_s + extraStalenessS;
    const parts = [pos.machine, pos.field ?? "off-field"];
    if (pos.implement) parts.push(pos.implement);
    return {
      machine: pos.machine,
      label: parts.join(" · "),
      lat: pos.lat,
      lon: pos.lon,
      stalenessS: staleness,
      dimmed: staleness > STALE_AFTER_S,
    };
  });
}

// ---------------------------------------------------------------------------
// map projection: lon/lat -> a 1000-wide SVG viewBox, aspect-corrected

export interface MapModel {
  viewBox: string;
  fields: { id: string; name: string; points: string }[];
  tracks: { id: string; color: string; dashed: boolean; points: string }[];
  markers: { machine: string; label: string; x: number; y: number; dimmed: boolean }[];
}

interface Projection {
  x(lon: number): number;
  y(lat: number): number;
  viewBox: string;
}

function fitProjection(lons: number[], lats: number[]): Projection {
  const width = 1000;
  const minLon = Math.min(...lons);
  const maxLon = Math.max(...lons);
  const minLat = Math.min(...lats);
  const maxLat = Math.max(...lats);
  const midLat = (minLat + maxLat) / 2;
  const aspect = Math.cos((midLat * Math.PI) / 180);
  const spanLon = Math.max(maxLon - minLon, 1e-6);
  const spanLat = Math.max(maxLat - minLat, 1e-6);
  const scale = width / (spanLon * aspect);
  const height = spanLat * scale;
  const pad = 0.05 * Math.max(width, height);
  return {
    x: (lon) => (lon - minLon) * aspect * scale + pad,
    y: (lat) => (maxLat - lat) * scale + pad, // north up
    viewBox: `0 0 ${Math.round(width + 2 * pad)} ${Math.round(height + 2 * pad)}`,
  };
}

function round2(v: number): number {
  return Math.round(v * 100) / 100;
}

export function buildMapModel(
  registry: RegistryDoc,
  records: RecordView[],
  markers: MarkerView[],
): MapModel {
  const lons: number[] = [];
  const lats: number[] = [];
  for (const f of registry.fields) {
    for (const [lon, lat] of f.ring) {
      lons.push(lon);
      lats.push(lat);
    }
  }
  for (const r of records) {
    for (const [lon, lat] of r.path) {
      lons.push(lon);
      lats.push(lat);
    }
  }
  for (const m of markers) {
    lons.push(m.lon);
    lats.push(m.lat);
  }
  if (lons.length === 0) {
    return { viewBox: "0 0 1000 600", fields: [], tracks: [], markers: [] };
  }
  const proj = fitProjection(lons, lats);
  const toPoints = (coords: [number, number][]) =>
    coords.map(([lon, lat]) => `${round2(proj.x(lon))},${round2(proj.y(lat))}`).join(" ");
  return {
    viewBox: proj.viewBox,
    fields: registry.fields.map((f) => ({
      id: f.id,
      name: f.name,
      points: toPoints(f.ring),
    })),
    tracks: records.map((r) => ({
      id: r.id,
      color: r.color,
      dashed: r.flags.includes("merged"),
      points: toPoints(r.path),
    })),
    markers: markers.map((m) => ({
      machine: m.machine,
      label: m.label,
      x: round2(proj.x(m.lon)),
      y: round2(proj.y(m.lat)),
      dimmed: m.dimmed,
    })),
  };
}
